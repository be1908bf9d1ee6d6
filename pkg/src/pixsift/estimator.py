"""Attention-activation quality estimator.

Given per-image matrices of cross-attention spatial norms (one value per
(layer, token) cell, extracted upstream from a frozen text-to-image model
at a fixed timestep and probe prompt), the estimator:

1. counts, for every cell, how many (higher-quality, lower-quality)
   calibration pairs have a strictly larger norm on the higher-quality
   side (the separation count),
2. keeps the K cells with the highest counts, and
3. scores any image as the sum of its norms over those K cells.

Everything upstream of the norm matrices (noise prediction, attention-map
capture, tokenization) lives behind the NDJSON ingestion surface; a seeded
synthetic generator ships in pixsift.synth for tests and demos.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateMapError,
    InvariantError,
    IoError,
    KTooLarge,
    MissingMapError,
    ParseError,
    ShapeMismatch,
    UnfittedError,
)
from .ndjson import iter_ndjson, require_keys, write_ndjson
from .parallel import map_ordered

# Probe prompt mixing desirable and undesirable visual keywords; one
# attention-norm column per prompt token.
DEFAULT_PROMPT = (
    "complex. detailed. simple. bokeh effect. abstract. photorealistic. "
    "artistic. stylized. aesthetic. cinematic. instagram filters. "
    "color correction. midjourney. ugly. distorted. blurry. rendering. "
    "AI-generated. synthetic. high quality. low quality. pixelated. "
    "low illumination."
)

# Fraction of the noise schedule at which activations are extracted; low
# enough that the image is mostly formed, high enough that text
# conditioning still matters.
DEFAULT_TIMESTEP = 0.25


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


DEFAULT_PROMPT_HASH = prompt_hash(DEFAULT_PROMPT)


@dataclass(frozen=True)
class AttentionMap:
    """One cross-attention spatial map for one (layer, token) cell."""

    image_id: str
    layer: int  # 1-based
    token: int  # 1-based
    values: np.ndarray  # (h, w)

    def __post_init__(self) -> None:
        if self.layer < 1 or self.token < 1:
            raise InvariantError(f"{self.image_id!r}: layer/token indices are 1-based")
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise InvariantError(f"{self.image_id!r}: map values must be a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise InvariantError(f"{self.image_id!r}: non-finite map values")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class ActivationNormMatrix:
    """Per-image L x M matrix of cross-attention spatial norms."""

    image_id: str
    norms: np.ndarray  # (L, M) float64, >= 0
    timestep: float = DEFAULT_TIMESTEP
    prompt_hash: str = DEFAULT_PROMPT_HASH

    def __post_init__(self) -> None:
        arr = np.asarray(self.norms, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise InvariantError(f"{self.image_id!r}: norms must be a non-empty L x M matrix")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise InvariantError(f"{self.image_id!r}: norms must be finite and non-negative")
        if not 0.0 <= self.timestep <= 1.0:
            raise InvariantError(f"{self.image_id!r}: timestep must be in [0, 1]")
        object.__setattr__(self, "norms", arr)

    @property
    def layer_count(self) -> int:
        return self.norms.shape[0]

    @property
    def token_count(self) -> int:
        return self.norms.shape[1]


@dataclass(frozen=True)
class CalibrationSet:
    """Higher- and lower-quality norm matrices used to fit the estimator."""

    hq: tuple[ActivationNormMatrix, ...]
    lq: tuple[ActivationNormMatrix, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "hq", tuple(self.hq))
        object.__setattr__(self, "lq", tuple(self.lq))
        if not self.hq or not self.lq:
            raise InvariantError("calibration needs at least one matrix per group")
        ref = self.hq[0]
        for x in (*self.hq, *self.lq):
            if x.norms.shape != ref.norms.shape:
                raise ShapeMismatch(
                    f"calibration shapes differ: {x.image_id!r} {x.norms.shape} "
                    f"vs {ref.norms.shape}"
                )
            if x.timestep != ref.timestep or x.prompt_hash != ref.prompt_hash:
                raise InvariantError(
                    f"calibration mixes extraction configs: {x.image_id!r} has "
                    f"(t={x.timestep}, prompt={x.prompt_hash[:12]}...)"
                )

    @property
    def layer_count(self) -> int:
        return self.hq[0].layer_count

    @property
    def token_count(self) -> int:
        return self.hq[0].token_count


@dataclass(frozen=True)
class SeparationTable:
    """Per-cell discriminative counts plus (once selected) the top-K cells."""

    s: np.ndarray  # (L, M) int64
    pair_count: int
    top_k: tuple[tuple[int, int], ...] | None = None  # 1-based (layer, token)
    timestep: float = DEFAULT_TIMESTEP
    prompt_hash: str = DEFAULT_PROMPT_HASH

    def __post_init__(self) -> None:
        arr = np.asarray(self.s, dtype=np.int64)
        if arr.ndim != 2 or arr.size == 0:
            raise InvariantError("separation counts must be a non-empty L x M matrix")
        if np.any(arr < 0) or np.any(arr > self.pair_count):
            raise InvariantError("separation counts must lie in [0, pair_count]")
        object.__setattr__(self, "s", arr)
        if self.top_k is not None:
            cells = tuple((int(l), int(m)) for l, m in self.top_k)
            if len(set(cells)) != len(cells):
                raise InvariantError("top_k cells must be distinct")
            for l, m in cells:
                if not (1 <= l <= arr.shape[0] and 1 <= m <= arr.shape[1]):
                    raise InvariantError(f"top_k cell ({l}, {m}) out of range")
            keys = [(-int(arr[l - 1, m - 1]), l, m) for l, m in cells]
            if keys != sorted(keys):
                raise InvariantError("top_k must be sorted by (count desc, layer, token)")
            object.__setattr__(self, "top_k", cells)

    @property
    def layer_count(self) -> int:
        return self.s.shape[0]

    @property
    def token_count(self) -> int:
        return self.s.shape[1]


@dataclass(frozen=True)
class EstimatorConfig:
    k: int = 32
    timestep: float = DEFAULT_TIMESTEP
    prompt: str = DEFAULT_PROMPT
    score_key: str = "diffusion_estimator"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise KTooLarge(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.timestep <= 1.0:
            raise InvariantError(f"timestep must be in [0, 1], got {self.timestep}")


def compute_norms(
    maps: Sequence[AttentionMap],
    layer_count: int,
    token_count: int,
    timestep: float = DEFAULT_TIMESTEP,
    prompt_hash_value: str = DEFAULT_PROMPT_HASH,
) -> ActivationNormMatrix:
    """Reduce one image's attention maps to its L x M norm matrix.

    Requires exactly one map per (layer, token) cell; the cell's norm is
    the Euclidean (Frobenius) norm of the map's spatial values.
    """
    if not maps:
        raise MissingMapError("no attention maps supplied")
    image_id = maps[0].image_id
    norms = np.zeros((layer_count, token_count), dtype=np.float64)
    seen: set[tuple[int, int]] = set()
    for amap in maps:
        if amap.image_id != image_id:
            raise InvariantError(
                f"maps mix images {image_id!r} and {amap.image_id!r}"
            )
        cell = (amap.layer, amap.token)
        if not (1 <= amap.layer <= layer_count and 1 <= amap.token <= token_count):
            raise InvariantError(f"{image_id!r}: cell {cell} outside {layer_count}x{token_count}")
        if cell in seen:
            raise DuplicateMapError(f"{image_id!r}: duplicate map for cell {cell}")
        seen.add(cell)
        norms[amap.layer - 1, amap.token - 1] = float(
            np.linalg.norm(amap.values.ravel())
        )
    if len(seen) != layer_count * token_count:
        missing = next(
            (l, m)
            for l in range(1, layer_count + 1)
            for m in range(1, token_count + 1)
            if (l, m) not in seen
        )
        raise MissingMapError(f"{image_id!r}: no map for cell {missing}")
    return ActivationNormMatrix(
        image_id=image_id, norms=norms, timestep=timestep, prompt_hash=prompt_hash_value
    )


def fit_separation(cal: CalibrationSet) -> SeparationTable:
    """Count, per cell, the calibration pairs where the HQ norm is strictly larger.

    For each cell the LQ values are sorted once and each HQ value
    contributes the number of LQ values strictly below it, which equals
    the pairwise comparison count without materializing all pairs.
    """
    hq = np.stack([x.norms for x in cal.hq]).reshape(len(cal.hq), -1)
    lq = np.stack([x.norms for x in cal.lq]).reshape(len(cal.lq), -1)
    cells = hq.shape[1]
    counts = np.empty(cells, dtype=np.int64)
    for c in range(cells):
        col = np.sort(lq[:, c])
        counts[c] = int(np.searchsorted(col, hq[:, c], side="left").sum())
    return SeparationTable(
        s=counts.reshape(cal.layer_count, cal.token_count),
        pair_count=len(cal.hq) * len(cal.lq),
        top_k=None,
        timestep=cal.hq[0].timestep,
        prompt_hash=cal.hq[0].prompt_hash,
    )


def select_top_k(table: SeparationTable, k: int) -> SeparationTable:
    """Select the K cells with the highest counts, ties to lower (layer, token)."""
    layer_count, token_count = table.s.shape
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    if k > layer_count * token_count:
        raise KTooLarge(
            f"k={k} exceeds the {layer_count * token_count} available cells"
        )
    flat = table.s.ravel()
    layers = np.repeat(np.arange(1, layer_count + 1), token_count)
    tokens = np.tile(np.arange(1, token_count + 1), layer_count)
    # lexsort: last key is primary -> count desc, then layer asc, token asc.
    order = np.lexsort((tokens, layers, -flat))
    cells = tuple((int(layers[i]), int(tokens[i])) for i in order[:k])
    return replace(table, top_k=cells)


def fit(cal: CalibrationSet, k: int) -> SeparationTable:
    return select_top_k(fit_separation(cal), k)


def score_image(x: ActivationNormMatrix, table: SeparationTable) -> float:
    """Sum of the image's norms over the selected cells, in top-k order."""
    if table.top_k is None:
        raise UnfittedError("separation table has no top_k; run select_top_k first")
    if x.norms.shape != table.s.shape:
        raise ShapeMismatch(
            f"{x.image_id!r}: norms shape {x.norms.shape} != table {table.s.shape}"
        )
    if x.timestep != table.timestep or x.prompt_hash != table.prompt_hash:
        raise InvariantError(
            f"{x.image_id!r}: extraction config (t={x.timestep}) does not match "
            f"the table's (t={table.timestep})"
        )
    total = 0.0
    for layer, token in table.top_k:
        total += float(x.norms[layer - 1, token - 1])
    return total


def score_corpus(
    xs: Sequence[ActivationNormMatrix],
    table: SeparationTable,
    workers: int = 1,
) -> list[tuple[str, float]]:
    """One (image_id, score) per input, in input order, for any worker count."""
    scores = map_ordered(lambda x: score_image(x, table), xs, workers)
    return [(x.image_id, s) for x, s in zip(xs, scores)]


# --- serialization ---

def save_table(table: SeparationTable, path: str | Path) -> None:
    obj = {
        "L": table.layer_count,
        "M": table.token_count,
        "pair_count": table.pair_count,
        "s": table.s.tolist(),
        "top_k": [list(c) for c in table.top_k] if table.top_k is not None else None,
        "timestep": table.timestep,
        "prompt_hash": table.prompt_hash,
    }
    try:
        Path(path).write_text(
            json.dumps(obj, ensure_ascii=False, allow_nan=False, indent=2) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoError(f"cannot write table {path}: {exc}") from exc


def load_table(path: str | Path) -> SeparationTable:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read table {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}") from exc
    require_keys(obj, ("L", "M", "pair_count", "s"), str(path))
    s = np.asarray(obj["s"], dtype=np.int64)
    if s.shape != (int(obj["L"]), int(obj["M"])):
        raise ParseError(f"{path}: s shape does not match L x M")
    raw_top_k = obj.get("top_k")
    top_k = tuple((int(l), int(m)) for l, m in raw_top_k) if raw_top_k is not None else None
    return SeparationTable(
        s=s,
        pair_count=int(obj["pair_count"]),
        top_k=top_k,
        timestep=float(obj.get("timestep", DEFAULT_TIMESTEP)),
        prompt_hash=str(obj.get("prompt_hash", DEFAULT_PROMPT_HASH)),
    )


def read_norms(path: str | Path) -> list[ActivationNormMatrix]:
    """Read NDJSON activation-norm lines {"image_id","L","M","timestep","prompt_hash","norms"}."""
    out = []
    seen: set[str] = set()
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        require_keys(obj, ("image_id", "L", "M", "norms"), where)
        image_id = str(obj["image_id"])
        if image_id in seen:
            raise InvariantError(f"{where}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        norms = np.asarray(obj["norms"], dtype=np.float64)
        if norms.ndim != 2 or norms.shape != (int(obj["L"]), int(obj["M"])):
            raise ParseError(f"{where}: norms do not match L x M")
        out.append(
            ActivationNormMatrix(
                image_id=image_id,
                norms=norms,
                timestep=float(obj.get("timestep", DEFAULT_TIMESTEP)),
                prompt_hash=str(obj.get("prompt_hash", DEFAULT_PROMPT_HASH)),
            )
        )
    return out


def write_norms(path: str | Path, xs: Iterable[ActivationNormMatrix]) -> None:
    write_ndjson(
        path,
        (
            {
                "image_id": x.image_id,
                "L": x.layer_count,
                "M": x.token_count,
                "timestep": x.timestep,
                "prompt_hash": x.prompt_hash,
                "norms": x.norms.tolist(),
            }
            for x in xs
        ),
    )


def read_attention_maps(path: str | Path) -> list[AttentionMap]:
    """Read raw NDJSON maps {"image_id","layer","token","h","w","values"} (row-major flat)."""
    out = []
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        require_keys(obj, ("image_id", "layer", "token", "h", "w", "values"), where)
        h, w = int(obj["h"]), int(obj["w"])
        values = np.asarray(obj["values"], dtype=np.float64)
        if values.size != h * w:
            raise ParseError(f"{where}: expected {h * w} values, got {values.size}")
        out.append(
            AttentionMap(
                image_id=str(obj["image_id"]),
                layer=int(obj["layer"]),
                token=int(obj["token"]),
                values=values.reshape(h, w),
            )
        )
    return out


def norm_index(xs: Sequence[ActivationNormMatrix]) -> dict[str, ActivationNormMatrix]:
    out: dict[str, ActivationNormMatrix] = {}
    for x in xs:
        if x.image_id in out:
            raise InvariantError(f"duplicate activation matrix for {x.image_id!r}")
        out[x.image_id] = x
    return out
