"""Near-duplicate elimination from ingested local-feature descriptors.

Matching rule: mutual nearest neighbors under Euclidean distance with a
Lowe-style ratio test applied in BOTH query directions. The two-sided test
is what makes match_count symmetric; a one-sided ratio test is not.
Images whose mutual match count reaches min_matches are joined by an edge,
clusters are the connected components, and each cluster keeps its
highest-quality member (ties broken by lexicographically smallest id).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    InvariantError,
    MissingRecordError,
    MissingScoreError,
    ParseError,
)
from .ndjson import iter_ndjson, require_keys
from .parallel import map_ordered
from .records import ImageRecord, StageReport


@dataclass(frozen=True)
class DescriptorSet:
    """All local-feature descriptors extracted from one image."""

    image_id: str
    descriptors: np.ndarray  # (n, d) float64; n may be 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.descriptors, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, arr.shape[1] if arr.ndim == 2 else 0)
        if arr.ndim != 2:
            raise InvariantError(f"{self.image_id!r}: descriptors must be a 2-D array")
        if not np.all(np.isfinite(arr)):
            raise InvariantError(f"{self.image_id!r}: non-finite descriptor values")
        object.__setattr__(self, "descriptors", arr)

    @property
    def count(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


@dataclass(frozen=True)
class DedupConfig:
    ratio_threshold: float = 0.8
    min_matches: int = 8
    quality_key: str = "quality"

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio_threshold <= 1.0:
            raise ConfigError(f"ratio_threshold must be in (0, 1], got {self.ratio_threshold}")
        if self.min_matches < 1:
            raise ConfigError(f"min_matches must be >= 1, got {self.min_matches}")


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the input ids into clusters, one representative each."""

    clusters: tuple[tuple[frozenset[str], str], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for members, rep in self.clusters:
            if rep not in members:
                raise InvariantError(f"representative {rep!r} outside its cluster")

    def representatives(self) -> set[str]:
        return {rep for _, rep in self.clusters}

    def member_ids(self) -> set[str]:
        out: set[str] = set()
        for members, _ in self.clusters:
            out |= members
        return out


class _UnionFind:
    def __init__(self, ids: Sequence[str]) -> None:
        self.parent = {i: i for i in ids}
        self.rank = {i: 0 for i in ids}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def _directional_pass(dist2: np.ndarray, ratio2: float) -> tuple[np.ndarray, np.ndarray]:
    """Per row of a squared-distance matrix: nearest column and ratio-test flag.

    A row with a single column has no second neighbor; the ratio test
    passes vacuously. A zero second-nearest distance passes only when the
    nearest distance is also zero.
    """
    n_cols = dist2.shape[1]
    nearest = np.argmin(dist2, axis=1)
    d1 = dist2[np.arange(dist2.shape[0]), nearest]
    if n_cols == 1:
        return nearest, np.ones(dist2.shape[0], dtype=bool)
    part = np.partition(dist2, 1, axis=1)
    d2 = part[:, 1]
    passes = np.where(d2 == 0.0, d1 == 0.0, d1 < ratio2 * d2)
    return nearest, passes


def match_count(a: DescriptorSet, b: DescriptorSet, ratio: float) -> int:
    """Count mutual nearest-neighbor matches passing the two-sided ratio test."""
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"ratio must be in (0, 1], got {ratio}")
    if a.count == 0 or b.count == 0:
        return 0
    if a.dim != b.dim:
        raise DimensionMismatch(
            f"descriptor dims differ: {a.image_id!r} d={a.dim}, {b.image_id!r} d={b.dim}"
        )
    # Squared distances; the ratio test is applied as d1^2 < ratio^2 * d2^2.
    diff = a.descriptors[:, None, :] - b.descriptors[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    ratio2 = ratio * ratio
    fwd_nearest, fwd_pass = _directional_pass(dist2, ratio2)
    rev_nearest, rev_pass = _directional_pass(dist2.T, ratio2)
    count = 0
    for i in range(a.count):
        j = fwd_nearest[i]
        if fwd_pass[i] and rev_pass[j] and rev_nearest[j] == i:
            count += 1
    return count


def cluster(
    sets: Sequence[DescriptorSet],
    records: Sequence[ImageRecord],
    cfg: DedupConfig,
    workers: int = 1,
) -> ClusterAssignment:
    """Connected-component clusters over the mutual-match graph."""
    by_id = {r.image_id: r for r in records}
    dims = {s.dim for s in sets if s.count > 0}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed descriptor dimensions in corpus: {sorted(dims)}")
    for s in sets:
        if s.image_id not in by_id:
            raise MissingRecordError(f"descriptor set {s.image_id!r} has no matching record")

    ordered = sorted(sets, key=lambda s: s.image_id)
    # match_count(a, b) <= min(|a|, |b|), so pairs where either side is
    # too small can never form an edge.
    eligible = [s for s in ordered if s.count >= cfg.min_matches]
    pairs = [
        (eligible[i], eligible[j])
        for i in range(len(eligible))
        for j in range(i + 1, len(eligible))
    ]
    counts = map_ordered(
        lambda p: match_count(p[0], p[1], cfg.ratio_threshold), pairs, workers
    )

    uf = _UnionFind([s.image_id for s in ordered])
    for (sa, sb), n in zip(pairs, counts):
        if n >= cfg.min_matches:
            uf.union(sa.image_id, sb.image_id)

    groups: dict[str, list[str]] = {}
    for s in ordered:
        groups.setdefault(uf.find(s.image_id), []).append(s.image_id)

    clusters = []
    for members in groups.values():
        for image_id in members:
            if cfg.quality_key not in by_id[image_id].scores:
                raise MissingScoreError(
                    f"record {image_id!r} lacks quality score {cfg.quality_key!r}"
                )
        rep = min(members, key=lambda i: (-by_id[i].scores[cfg.quality_key], i))
        clusters.append((frozenset(members), rep))
    clusters.sort(key=lambda c: c[1])
    return ClusterAssignment(clusters=tuple(clusters))


def deduplicate(
    records: Sequence[ImageRecord],
    sets: Sequence[DescriptorSet],
    cfg: DedupConfig,
    workers: int = 1,
) -> tuple[list[ImageRecord], StageReport]:
    """Keep one representative per cluster, in original record order.

    Records without a descriptor set participate in no matches (treated as
    empty sets) and therefore always survive as singleton clusters.
    """
    covered = {s.image_id for s in sets}
    padded = list(sets) + [
        DescriptorSet(r.image_id, np.zeros((0, 0)))
        for r in records
        if r.image_id not in covered
    ]
    assignment = cluster(padded, records, cfg, workers=workers)
    keep = assignment.representatives()
    survivors = [r for r in records if r.image_id in keep]
    dropped = sorted(r.image_id for r in records if r.image_id not in keep)
    report = StageReport(
        stage_name="dedup",
        input_count=len(records),
        output_count=len(survivors),
        parameters={
            "ratio_threshold": repr(cfg.ratio_threshold),
            "min_matches": str(cfg.min_matches),
            "quality_key": cfg.quality_key,
            "clusters": str(len(assignment.clusters)),
            "dropped_flag": "duplicate",
            "dropped_ids": ",".join(dropped),
        },
    )
    return survivors, report


def read_descriptor_sets(path: str | Path) -> list[DescriptorSet]:
    """Read NDJSON descriptor lines {"image_id", "dim", "descriptors"}."""
    out = []
    seen: set[str] = set()
    for i, obj in enumerate(iter_ndjson(path), start=1):
        where = f"{path}:{i}"
        require_keys(obj, ("image_id", "dim", "descriptors"), where)
        image_id = str(obj["image_id"])
        if image_id in seen:
            raise InvariantError(f"{where}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        dim = int(obj["dim"])
        rows = obj["descriptors"]
        arr = np.asarray(rows, dtype=np.float64)
        if arr.size == 0:
            arr = np.zeros((0, dim))
        if arr.ndim != 2 or arr.shape[1] != dim:
            raise ParseError(f"{where}: descriptors do not match dim={dim}")
        out.append(DescriptorSet(image_id=image_id, descriptors=arr))
    return out


def descriptor_sets_for(
    sets: Sequence[DescriptorSet], records: Sequence[ImageRecord]
) -> list[DescriptorSet]:
    """Restrict descriptor sets to the ids present in `records`."""
    wanted = {r.image_id for r in records}
    return [s for s in sets if s.image_id in wanted]


DescriptorIndex = Mapping[str, DescriptorSet]
