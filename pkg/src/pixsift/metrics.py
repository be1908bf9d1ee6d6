"""Automated-metric harness: native Fréchet distance, ingested scalar scores.

Feature extraction and preference models run elsewhere; this module fits
Gaussian moments to ingested feature sets and evaluates

    FD = ||mu_a - mu_b||^2 + Tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^(1/2))

with the matrix square root taken through the symmetric eigendecomposition
of Sigma_a^(1/2) Sigma_b Sigma_a^(1/2). Small negative eigenvalues (within
1e-8 of the trace scale) are jitter and are clamped to zero; anything
beyond that is a genuine PSD violation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyInput,
    InvariantError,
    NonPsdError,
    ParseError,
)
from .ndjson import as_finite_float, iter_ndjson, require_keys

SYMMETRY_TOL = 1e-9
PSD_JITTER = 1e-8

METRIC_NAMES = ("clip", "image_reward", "hps_v2")


@dataclass(frozen=True)
class FeatureSet:
    label: str
    vectors: np.ndarray  # (n, d), n >= 2

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise InvariantError(f"{self.label!r}: vectors must be a 2-D array")
        if arr.shape[0] < 2:
            raise DegenerateInput(
                f"{self.label!r}: need >= 2 vectors for covariance, got {arr.shape[0]}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvariantError(f"{self.label!r}: non-finite feature values")
        object.__setattr__(self, "vectors", arr)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray  # (d,)
    cov: np.ndarray  # (d, d) symmetric

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"cov shape {cov.shape} does not match mean dimension {mean.size}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvariantError("non-finite Gaussian moments")
        scale = max(1.0, float(np.abs(cov).max()))
        if np.abs(cov - cov.T).max() > SYMMETRY_TOL * scale:
            raise InvariantError("covariance is not symmetric within tolerance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class ScalarScoreSet:
    metric_name: str
    scores: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.metric_name not in METRIC_NAMES:
            raise InvariantError(
                f"metric_name must be one of {METRIC_NAMES}, got {self.metric_name!r}"
            )
        if not self.scores:
            raise EmptyInput(f"{self.metric_name}: empty score set")
        clean = {}
        for image_id, value in dict(self.scores).items():
            value = float(value)
            if not np.isfinite(value):
                raise InvariantError(f"{self.metric_name}: non-finite score for {image_id!r}")
            clean[str(image_id)] = value
        object.__setattr__(self, "scores", clean)


def fit_gaussian(features: FeatureSet) -> GaussianStats:
    """Sample mean and unbiased (n-1) covariance of a feature set."""
    x = features.vectors
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (features.count - 1)
    return GaussianStats(mean=mean, cov=(cov + cov.T) / 2.0)


def _clamped_eigh(matrix: np.ndarray, where: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with jitter-scale clamping of negative eigenvalues."""
    values, vectors = np.linalg.eigh(matrix)
    scale = max(1.0, float(np.trace(matrix)))
    floor = -PSD_JITTER * scale
    if np.any(values < floor):
        raise NonPsdError(
            f"{where}: eigenvalue {values.min():.3e} below jitter floor {floor:.3e}"
        )
    return np.clip(values, 0.0, None), vectors


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Fréchet distance between two Gaussians; non-negative by clamping."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
    va, ua = _clamped_eigh(a.cov, "cov_a")
    sqrt_a = (ua * np.sqrt(va)) @ ua.T
    inner = sqrt_a @ b.cov @ sqrt_a
    inner = (inner + inner.T) / 2.0
    w, _ = _clamped_eigh(inner, "sqrt(cov_a) cov_b sqrt(cov_a)")
    trace_sqrt = float(np.sqrt(w).sum())
    mean_diff = a.mean - b.mean
    fd = float(mean_diff @ mean_diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_sqrt
    return max(fd, 0.0)


def aggregate_scores(score_set: ScalarScoreSet) -> tuple[float, int]:
    """(mean, count) over per-image scores, summed in sorted-id order."""
    ids = sorted(score_set.scores)
    total = 0.0
    for image_id in ids:
        total += score_set.scores[image_id]
    return total / len(ids), len(ids)


# --- serialization ---

def read_feature_set(path: str | Path) -> FeatureSet:
    """Read a feature NDJSON file: a {"label", "dim"} header line, then vectors."""
    path = Path(path)
    label: str | None = None
    dim: int | None = None
    vectors: list[np.ndarray] = []
    ids: set[str] = set()
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        if i == 1:
            require_keys(obj, ("label",), where)
            label = str(obj["label"])
            dim = int(obj["dim"]) if "dim" in obj else None
            continue
        require_keys(obj, ("image_id", "dim", "vector"), where)
        image_id = str(obj["image_id"])
        if image_id in ids:
            raise InvariantError(f"{where}: duplicate image_id {image_id!r}")
        ids.add(image_id)
        row_dim = int(obj["dim"])
        if dim is None:
            dim = row_dim
        if row_dim != dim:
            raise DimensionMismatch(f"{where}: dim {row_dim} != header dim {dim}")
        vec = np.asarray(obj["vector"], dtype=np.float64)
        if vec.ndim != 1 or vec.size != dim:
            raise ParseError(f"{where}: vector length {vec.size} != dim {dim}")
        vectors.append(vec)
    if label is None:
        raise ParseError(f"{path}: missing label header line")
    if len(vectors) < 2:
        raise DegenerateInput(f"{path}: need >= 2 feature vectors, got {len(vectors)}")
    return FeatureSet(label=label, vectors=np.stack(vectors))


def read_scalar_scores(path: str | Path) -> list[ScalarScoreSet]:
    """Read {"image_id", "metric", "value"} lines, grouped by metric name."""
    grouped: dict[str, dict[str, float]] = {}
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        require_keys(obj, ("image_id", "metric", "value"), where)
        metric = str(obj["metric"])
        image_id = str(obj["image_id"])
        bucket = grouped.setdefault(metric, {})
        if image_id in bucket:
            raise InvariantError(f"{where}: duplicate score for {image_id!r} / {metric}")
        bucket[image_id] = as_finite_float(obj["value"], where)
    return [
        ScalarScoreSet(metric_name=name, scores=scores)
        for name, scores in sorted(grouped.items())
    ]
