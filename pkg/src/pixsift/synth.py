"""Seeded synthetic fixtures: planted-signal activations and a full corpus.

The planted generator plants a known set of discriminative (layer, token)
cells: higher-quality matrices draw from Normal(hq_mean, sigma) at planted
cells and Normal(lq_mean, sigma) elsewhere; lower-quality matrices draw
from Normal(lq_mean, sigma) everywhere. Negative draws are clamped to
zero. Ground truth (planted cells, test labels) ships with the fixture so
recovery and ranking can be measured exactly.

The corpus generator produces a pipeline-sized record set with provider
scores, descriptor sets containing known duplicate groups, and activation
matrices, all as a pure function of one 64-bit seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dedup import DescriptorSet
from .errors import ConfigError
from .estimator import (
    DEFAULT_PROMPT_HASH,
    DEFAULT_TIMESTEP,
    ActivationNormMatrix,
    CalibrationSet,
    write_norms,
)
from .ndjson import write_ndjson
from .records import ImageRecord, write_records


@dataclass(frozen=True)
class PlantedSpec:
    layer_count: int = 8
    token_count: int = 16
    planted: int = 16
    hq_count: int = 500
    lq_count: int = 500
    test_count: int = 200
    hq_mean: float = 2.0
    lq_mean: float = 1.0
    sigma: float = 0.5
    timestep: float = DEFAULT_TIMESTEP

    def __post_init__(self) -> None:
        if self.planted < 1 or self.planted > self.layer_count * self.token_count:
            raise ConfigError(
                f"planted cell count {self.planted} outside "
                f"[1, {self.layer_count * self.token_count}]"
            )
        if min(self.hq_count, self.lq_count) < 1 or self.test_count < 0:
            raise ConfigError("group sizes must be positive")


@dataclass(frozen=True)
class PlantedFixture:
    calibration: CalibrationSet
    test: tuple[ActivationNormMatrix, ...]
    test_labels: dict[str, int]  # 1 = generated as higher-quality
    planted_cells: tuple[tuple[int, int], ...]  # 1-based (layer, token)


def _matrices(
    rng: np.random.Generator,
    spec: PlantedSpec,
    count: int,
    prefix: str,
    planted_flat: np.ndarray,
    boosted: bool,
) -> list[ActivationNormMatrix]:
    shape = (count, spec.layer_count, spec.token_count)
    values = rng.normal(spec.lq_mean, spec.sigma, shape)
    if boosted:
        planted_draws = rng.normal(spec.hq_mean, spec.sigma, (count, planted_flat.size))
        flat = values.reshape(count, -1)
        flat[:, planted_flat] = planted_draws
        values = flat.reshape(shape)
    values = np.clip(values, 0.0, None)
    return [
        ActivationNormMatrix(
            image_id=f"{prefix}{i:05d}",
            norms=values[i],
            timestep=spec.timestep,
            prompt_hash=DEFAULT_PROMPT_HASH,
        )
        for i in range(count)
    ]


def generate_planted(spec: PlantedSpec, seed: int) -> PlantedFixture:
    """Planted-signal calibration + labelled test matrices for one seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    cell_count = spec.layer_count * spec.token_count
    planted_flat = np.sort(rng.choice(cell_count, size=spec.planted, replace=False))
    planted_cells = tuple(
        (int(c) // spec.token_count + 1, int(c) % spec.token_count + 1)
        for c in planted_flat
    )

    hq = _matrices(rng, spec, spec.hq_count, "cal_hq_", planted_flat, boosted=True)
    lq = _matrices(rng, spec, spec.lq_count, "cal_lq_", planted_flat, boosted=False)

    test_hq_count = spec.test_count // 2
    test_lq_count = spec.test_count - test_hq_count
    test_hq = _matrices(rng, spec, test_hq_count, "test_hq_", planted_flat, boosted=True)
    test_lq = _matrices(rng, spec, test_lq_count, "test_lq_", planted_flat, boosted=False)
    labels = {x.image_id: 1 for x in test_hq}
    labels.update({x.image_id: 0 for x in test_lq})

    return PlantedFixture(
        calibration=CalibrationSet(hq=tuple(hq), lq=tuple(lq)),
        test=tuple(test_hq + test_lq),
        test_labels=labels,
        planted_cells=planted_cells,
    )


def write_planted(fixture: PlantedFixture, outdir: str | Path) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "hq": outdir / "cal_hq.ndjson",
        "lq": outdir / "cal_lq.ndjson",
        "test": outdir / "test.ndjson",
        "truth": outdir / "truth.json",
    }
    write_norms(paths["hq"], fixture.calibration.hq)
    write_norms(paths["lq"], fixture.calibration.lq)
    write_norms(paths["test"], fixture.test)
    import json

    paths["truth"].write_text(
        json.dumps(
            {
                "planted_cells": [list(c) for c in fixture.planted_cells],
                "test_labels": {k: fixture.test_labels[k] for k in sorted(fixture.test_labels)},
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return paths


# --- full corpus fixture ---

CORPUS_SEED = 1337


@dataclass(frozen=True)
class CorpusSpec:
    record_count: int = 10_000
    dup_groups: int = 40
    dup_group_max_size: int = 4
    matchable_singletons: int = 60
    descriptor_dim: int = 8
    descriptors_per_image: int = 10
    sparse_descriptor_count: int = 3
    layer_count: int = 4
    token_count: int = 8
    planted: int = 8
    cal_hq_count: int = 200
    cal_lq_count: int = 200
    good_fraction: float = 0.3


@dataclass(frozen=True)
class CorpusFixture:
    records: tuple[ImageRecord, ...]
    provider_scores: dict[str, dict[str, float]]
    descriptor_sets: tuple[DescriptorSet, ...]
    activations: tuple[ActivationNormMatrix, ...]
    calibration: CalibrationSet
    planted_cells: tuple[tuple[int, int], ...]


def generate_corpus(spec: CorpusSpec = CorpusSpec(), seed: int = CORPUS_SEED) -> CorpusFixture:
    """Deterministic 10k-scale corpus with known duplicate groups and signal."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = spec.record_count
    ids = [f"img_{i:06d}" for i in range(n)]

    widths = rng.integers(600, 2200, size=n)
    heights = rng.integers(600, 2200, size=n)
    # A pinch of exact boundary cases for the area rule.
    widths[0], heights[0] = 1024, 1024
    widths[1], heights[1] = 1025, 1024
    widths[2], heights[2] = 2048, 600

    nsfw = rng.random(n)
    watermark = rng.random(n)
    topiq = rng.uniform(0.3, 0.95, size=n)
    laion = rng.uniform(3.0, 9.0, size=n)

    good = rng.random(n) < spec.good_fraction

    # Duplicate groups and matchable singletons are forced through the
    # coarse stages so dedup always has work to do.
    group_sizes = rng.integers(2, spec.dup_group_max_size + 1, size=spec.dup_groups)
    forced_total = int(group_sizes.sum()) + spec.matchable_singletons
    forced_idx = rng.choice(n, size=forced_total, replace=False)
    widths[forced_idx] = rng.integers(1200, 2000, size=forced_total)
    heights[forced_idx] = rng.integers(1200, 2000, size=forced_total)
    nsfw[forced_idx] = rng.uniform(0.0, 0.4, size=forced_total)
    watermark[forced_idx] = rng.uniform(0.0, 0.7, size=forced_total)
    topiq[forced_idx] = rng.uniform(0.72, 0.95, size=forced_total)

    records = tuple(
        ImageRecord(
            image_id=ids[i],
            source_uri=f"synthetic://corpus/{ids[i]}",
            width_px=int(widths[i]),
            height_px=int(heights[i]),
        )
        for i in range(n)
    )
    provider_scores = {
        ids[i]: {
            "nsfw": float(nsfw[i]),
            "watermark": float(watermark[i]),
            "topiq": float(topiq[i]),
            "laion_aesthetic": float(laion[i]),
        }
        for i in range(n)
    }

    descriptor_sets = []
    cursor = 0
    for size in group_sizes:
        base = rng.normal(0.0, 4.0, (spec.descriptors_per_image, spec.descriptor_dim))
        for _ in range(int(size)):
            jitter = rng.normal(0.0, 0.005, base.shape)
            descriptor_sets.append(
                DescriptorSet(
                    image_id=ids[forced_idx[cursor]], descriptors=base + jitter
                )
            )
            cursor += 1
    for _ in range(spec.matchable_singletons):
        descriptor_sets.append(
            DescriptorSet(
                image_id=ids[forced_idx[cursor]],
                descriptors=rng.normal(
                    0.0, 4.0, (spec.descriptors_per_image, spec.descriptor_dim)
                ),
            )
        )
        cursor += 1
    covered = {s.image_id for s in descriptor_sets}
    for i in range(n):
        if ids[i] not in covered:
            descriptor_sets.append(
                DescriptorSet(
                    image_id=ids[i],
                    descriptors=rng.normal(
                        0.0, 4.0, (spec.sparse_descriptor_count, spec.descriptor_dim)
                    ),
                )
            )
    descriptor_sets.sort(key=lambda s: s.image_id)

    planted_spec = PlantedSpec(
        layer_count=spec.layer_count,
        token_count=spec.token_count,
        planted=spec.planted,
        hq_count=spec.cal_hq_count,
        lq_count=spec.cal_lq_count,
        test_count=0,
    )
    cell_count = spec.layer_count * spec.token_count
    planted_flat = np.sort(rng.choice(cell_count, size=spec.planted, replace=False))
    planted_cells = tuple(
        (int(c) // spec.token_count + 1, int(c) % spec.token_count + 1)
        for c in planted_flat
    )

    shape = (n, spec.layer_count, spec.token_count)
    norm_values = rng.normal(1.0, 0.5, shape)
    boosted_draws = rng.normal(2.0, 0.5, (int(good.sum()), planted_flat.size))
    flat = norm_values.reshape(n, -1)
    flat[np.flatnonzero(good)[:, None], planted_flat[None, :]] = boosted_draws
    norm_values = np.clip(flat.reshape(shape), 0.0, None)
    activations = tuple(
        ActivationNormMatrix(image_id=ids[i], norms=norm_values[i])
        for i in range(n)
    )

    hq = _matrices(rng, planted_spec, spec.cal_hq_count, "cal_hq_", planted_flat, boosted=True)
    lq = _matrices(rng, planted_spec, spec.cal_lq_count, "cal_lq_", planted_flat, boosted=False)

    return CorpusFixture(
        records=records,
        provider_scores=provider_scores,
        descriptor_sets=tuple(descriptor_sets),
        activations=activations,
        calibration=CalibrationSet(hq=tuple(hq), lq=tuple(lq)),
        planted_cells=planted_cells,
    )


def write_corpus(fixture: CorpusFixture, outdir: str | Path) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": outdir / "records.ndjson",
        "scores": outdir / "scores.ndjson",
        "descriptors": outdir / "descriptors.ndjson",
        "activations": outdir / "activations.ndjson",
        "cal_hq": outdir / "cal_hq.ndjson",
        "cal_lq": outdir / "cal_lq.ndjson",
    }
    write_records(paths["records"], fixture.records)
    write_ndjson(
        paths["scores"],
        (
            {"image_id": image_id, "scores": fixture.provider_scores[image_id]}
            for image_id in sorted(fixture.provider_scores)
        ),
    )
    write_ndjson(
        paths["descriptors"],
        (
            {
                "image_id": s.image_id,
                "dim": s.dim,
                "descriptors": s.descriptors.tolist(),
            }
            for s in fixture.descriptor_sets
        ),
    )
    write_norms(paths["activations"], fixture.activations)
    write_norms(paths["cal_hq"], fixture.calibration.hq)
    write_norms(paths["cal_lq"], fixture.calibration.lq)
    return paths


def recovered_fraction(
    selected: Sequence[tuple[int, int]], planted: Sequence[tuple[int, int]]
) -> float:
    """Fraction of planted cells present in the selected top-k."""
    planted_set = set(planted)
    if not planted_set:
        return 1.0
    return len(planted_set & set(selected)) / len(planted_set)
