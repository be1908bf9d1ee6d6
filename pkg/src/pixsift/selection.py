"""Final top-n selection and size-ablation variants.

Canonical ordering is (score desc, image_id asc); every variant of a given
corpus is a prefix of that ordering, so smaller variants nest inside
larger ones by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, MissingScoreError
from .records import DatasetManifest, ImageRecord, StageReport


@dataclass(frozen=True)
class SelectionConfig:
    n: int = 3350
    score_key: str = "diffusion_estimator"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"selection size must be >= 1, got {self.n}")


def rank_records(records: Sequence[ImageRecord], score_key: str) -> list[ImageRecord]:
    """Records in canonical selection order (score desc, image_id asc)."""
    for rec in records:
        if score_key not in rec.scores:
            raise MissingScoreError(
                f"record {rec.image_id!r} lacks selection score {score_key!r}"
            )
    return sorted(records, key=lambda r: (-r.scores[score_key], r.image_id))


def _selection_hash(cfg: SelectionConfig) -> str:
    blob = json.dumps(
        {"selection": {"n": cfg.n, "score_key": cfg.score_key}}, sort_keys=True
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def select_top_n(records: Sequence[ImageRecord], cfg: SelectionConfig) -> DatasetManifest:
    """Manifest of the n highest-scoring records (all of them if fewer)."""
    ranked = rank_records(records, cfg.score_key)
    chosen = ranked[: cfg.n]
    report = StageReport(
        stage_name="select",
        input_count=len(records),
        output_count=len(chosen),
        parameters={"n": str(cfg.n), "score_key": cfg.score_key},
    )
    return DatasetManifest(
        records=tuple(chosen),
        pipeline_config_hash=_selection_hash(cfg),
        stage_log=(report,),
    )


def nested_variants(
    records: Sequence[ImageRecord],
    sizes: Sequence[int],
    score_key: str = "diffusion_estimator",
) -> list[DatasetManifest]:
    """One manifest per size; each smaller variant is a prefix of the larger."""
    return [
        select_top_n(records, SelectionConfig(n=size, score_key=score_key))
        for size in sizes
    ]


def sample_uniform(records: Sequence[ImageRecord], n: int, seed: int) -> list[ImageRecord]:
    """Seeded uniform sample without replacement, in original record order.

    Used to build size-matched control subsets after a threshold filter
    (e.g. aesthetic score >= 6.5) when score-ordered selection is not wanted.
    """
    if n < 0:
        raise ConfigError(f"sample size must be >= 0, got {n}")
    if n >= len(records):
        return list(records)
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(len(records), size=n, replace=False)
    return [records[i] for i in sorted(int(i) for i in idx)]
