"""Threshold/flag filter stages and the full pipeline runner.

A pipeline is an ordered list of stages (resolution gate or score
threshold), optionally followed by descriptor-based deduplication, the
activation estimator (which annotates a score), and final top-n selection.
Classifier scores are never computed here; they arrive via score
providers. The engine owns only the calibrated thresholding.
"""

from __future__ import annotations

import hashlib
import json
import math
import operator
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import estimator as est
from .dedup import DedupConfig, DescriptorSet, deduplicate, descriptor_sets_for
from .errors import ConfigError, MissingScoreError, ParseError
from .parallel import map_ordered
from .providers import ScoreProvider, merge_provider_scores, provider_keys
from .records import DatasetManifest, ImageRecord, StageReport
from .selection import SelectionConfig, rank_records

# Strictly-greater area rule: a 1024x1024 image is rejected.
RESOLUTION_AREA_PX = 1024 * 1024

_COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    ">": operator.gt,
    ">=": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
}
_COMPARATOR_ALIASES = {"≥": ">=", "≤": "<="}

ON_MISSING = ("reject", "pass", "error")


@dataclass(frozen=True)
class StageConfig:
    """One score-threshold filter stage."""

    stage_name: str
    score_key: str
    comparator: str
    threshold: float
    on_missing: str = "error"

    def __post_init__(self) -> None:
        if not self.stage_name:
            raise ConfigError("stage_name must be non-empty")
        comparator = _COMPARATOR_ALIASES.get(self.comparator, self.comparator)
        if comparator not in _COMPARATORS:
            raise ConfigError(
                f"stage {self.stage_name!r}: comparator must be one of "
                f"{sorted(_COMPARATORS)}, got {self.comparator!r}"
            )
        object.__setattr__(self, "comparator", comparator)
        if not math.isfinite(self.threshold):
            raise ConfigError(f"stage {self.stage_name!r}: threshold must be finite")
        if self.on_missing not in ON_MISSING:
            raise ConfigError(
                f"stage {self.stage_name!r}: on_missing must be one of {ON_MISSING}"
            )


@dataclass(frozen=True)
class ResolutionStage:
    """Area gate (strictly greater than 1024*1024 px), optional min-side gate."""

    stage_name: str = "resolution"
    min_side_px: int | None = None


PipelineStage = Union[StageConfig, ResolutionStage]


@dataclass(frozen=True)
class EstimatorStageConfig:
    """Estimator placement inside a pipeline: fit on calibration, annotate scores."""

    k: int = 32
    timestep: float = est.DEFAULT_TIMESTEP
    score_key: str = "diffusion_estimator"


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[PipelineStage, ...] = ()
    selection: SelectionConfig | None = None
    seed: int = 0
    dedup: DedupConfig | None = None
    estimator: EstimatorStageConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        names = [s.stage_name for s in self.stages]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate stage names in pipeline: {names}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def canonical_config_json(cfg: PipelineConfig) -> str:
    """Stable JSON form of a config; equal configs hash identically."""
    stages = []
    for stage in cfg.stages:
        if isinstance(stage, ResolutionStage):
            stages.append(
                {
                    "kind": "resolution",
                    "name": stage.stage_name,
                    "min_side_px": stage.min_side_px,
                }
            )
        else:
            stages.append(
                {
                    "kind": "threshold",
                    "name": stage.stage_name,
                    "score_key": stage.score_key,
                    "comparator": stage.comparator,
                    "threshold": stage.threshold,
                    "on_missing": stage.on_missing,
                }
            )
    obj = {
        "seed": cfg.seed,
        "stages": stages,
        "dedup": (
            {
                "ratio_threshold": cfg.dedup.ratio_threshold,
                "min_matches": cfg.dedup.min_matches,
                "quality_key": cfg.dedup.quality_key,
            }
            if cfg.dedup
            else None
        ),
        "estimator": (
            {
                "k": cfg.estimator.k,
                "timestep": cfg.estimator.timestep,
                "score_key": cfg.estimator.score_key,
            }
            if cfg.estimator
            else None
        ),
        "selection": (
            {"n": cfg.selection.n, "score_key": cfg.selection.score_key}
            if cfg.selection
            else None
        ),
    }
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def config_hash(cfg: PipelineConfig) -> str:
    return hashlib.sha256(canonical_config_json(cfg).encode("utf-8")).hexdigest()


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Parse a TOML pipeline config ([[stage]] tables plus optional sections)."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ParseError(f"cannot parse pipeline config {path}: {exc}") from exc

    stages: list[PipelineStage] = []
    for i, table in enumerate(raw.get("stage", [])):
        where = f"{path}: [[stage]] #{i + 1}"
        name = table.get("name")
        if not name:
            raise ConfigError(f"{where}: missing name")
        kind = table.get("kind", "threshold")
        if kind == "resolution":
            stages.append(
                ResolutionStage(stage_name=name, min_side_px=table.get("min_side"))
            )
        elif kind == "threshold":
            for key in ("score_key", "comparator", "threshold"):
                if key not in table:
                    raise ConfigError(f"{where}: missing {key}")
            stages.append(
                StageConfig(
                    stage_name=name,
                    score_key=str(table["score_key"]),
                    comparator=str(table["comparator"]),
                    threshold=float(table["threshold"]),
                    on_missing=str(table.get("on_missing", "error")),
                )
            )
        else:
            raise ConfigError(f"{where}: unknown kind {kind!r}")

    dedup_cfg = None
    if "dedup" in raw:
        d = raw["dedup"]
        dedup_cfg = DedupConfig(
            ratio_threshold=float(d.get("ratio_threshold", 0.8)),
            min_matches=int(d.get("min_matches", 8)),
            quality_key=str(d.get("quality_key", "quality")),
        )

    est_cfg = None
    if "estimator" in raw:
        e = raw["estimator"]
        est_cfg = EstimatorStageConfig(
            k=int(e.get("k", 32)),
            timestep=float(e.get("timestep", est.DEFAULT_TIMESTEP)),
            score_key=str(e.get("score_key", "diffusion_estimator")),
        )

    sel_cfg = None
    if "selection" in raw:
        s = raw["selection"]
        sel_cfg = SelectionConfig(
            n=int(s.get("n", 3350)),
            score_key=str(s.get("score_key", "diffusion_estimator")),
        )

    return PipelineConfig(
        stages=tuple(stages),
        selection=sel_cfg,
        seed=int(raw.get("seed", 0)),
        dedup=dedup_cfg,
        estimator=est_cfg,
    )


def _passes(record: ImageRecord, cfg: StageConfig) -> bool | None:
    """True/False keep/drop; None when the key is missing (on_missing=error)."""
    value = record.scores.get(cfg.score_key)
    if value is None:
        if cfg.on_missing == "pass":
            return True
        if cfg.on_missing == "reject":
            return False
        return None
    return _COMPARATORS[cfg.comparator](value, cfg.threshold)


def apply_stage(
    records: Sequence[ImageRecord], cfg: StageConfig, workers: int = 1
) -> tuple[list[ImageRecord], StageReport]:
    """Filter records against one threshold stage, preserving input order."""
    verdicts = map_ordered(lambda r: _passes(r, cfg), records, workers)
    survivors = []
    for record, verdict in zip(records, verdicts):
        if verdict is None:
            raise MissingScoreError(
                f"stage {cfg.stage_name!r}: record {record.image_id!r} "
                f"lacks score {cfg.score_key!r}"
            )
        if verdict:
            survivors.append(record)
    report = StageReport(
        stage_name=cfg.stage_name,
        input_count=len(records),
        output_count=len(survivors),
        parameters={
            "score_key": cfg.score_key,
            "comparator": cfg.comparator,
            "threshold": repr(cfg.threshold),
            "on_missing": cfg.on_missing,
        },
    )
    return survivors, report


def resolution_stage(
    records: Sequence[ImageRecord],
    stage: ResolutionStage = ResolutionStage(),
) -> tuple[list[ImageRecord], StageReport]:
    """Keep records whose pixel area strictly exceeds 1024*1024."""
    survivors = [
        r
        for r in records
        if r.area_px > RESOLUTION_AREA_PX
        and (stage.min_side_px is None or min(r.width_px, r.height_px) >= stage.min_side_px)
    ]
    report = StageReport(
        stage_name=stage.stage_name,
        input_count=len(records),
        output_count=len(survivors),
        parameters={
            "min_area_px_exclusive": str(RESOLUTION_AREA_PX),
            "min_side_px": str(stage.min_side_px) if stage.min_side_px else "none",
        },
    )
    return survivors, report


def run_pipeline(
    records: Sequence[ImageRecord],
    cfg: PipelineConfig,
    providers: Sequence[ScoreProvider] = (),
    *,
    descriptor_sets: Sequence[DescriptorSet] = (),
    calibration: est.CalibrationSet | None = None,
    separation_table: est.SeparationTable | None = None,
    activations: Mapping[str, est.ActivationNormMatrix] | None = None,
    workers: int = 1,
) -> DatasetManifest:
    """Run stages in declared order, then dedup, estimator, and selection.

    Provider scores are merged into records up front (later providers win
    over earlier ones and over scores already on the record). Raises
    ConfigError before filtering if a stage references a score key that no
    record and no provider can supply.
    """
    current = merge_provider_scores(records, providers)

    if current:
        resolvable = provider_keys(providers)
        for rec in current:
            resolvable.update(rec.scores)
        for stage in cfg.stages:
            if isinstance(stage, StageConfig) and stage.score_key not in resolvable:
                raise ConfigError(
                    f"stage {stage.stage_name!r} references score "
                    f"{stage.score_key!r} which no record or provider supplies"
                )

    stage_log: list[StageReport] = []
    for stage in cfg.stages:
        if isinstance(stage, ResolutionStage):
            current, report = resolution_stage(current, stage)
        else:
            current, report = apply_stage(current, stage, workers=workers)
        stage_log.append(report)

    if cfg.dedup is not None:
        sets = descriptor_sets_for(descriptor_sets, current)
        current, report = deduplicate(current, sets, cfg.dedup, workers=workers)
        stage_log.append(report)

    if cfg.estimator is not None:
        table = separation_table
        if table is None:
            if calibration is None:
                raise ConfigError(
                    "estimator stage configured but neither calibration data "
                    "nor a prefit separation table was supplied"
                )
            table = est.fit(calibration, cfg.estimator.k)
        if activations is None:
            raise ConfigError("estimator stage configured but no activations supplied")
        matrices = []
        for rec in current:
            x = activations.get(rec.image_id)
            if x is None:
                raise MissingScoreError(
                    f"no activation norms for record {rec.image_id!r}"
                )
            matrices.append(x)
        scored = est.score_corpus(matrices, table, workers=workers)
        key = cfg.estimator.score_key
        current = [
            rec.with_scores({key: score}) for rec, (_, score) in zip(current, scored)
        ]
        stage_log.append(
            StageReport(
                stage_name="estimator",
                input_count=len(current),
                output_count=len(current),
                parameters={
                    "k": str(cfg.estimator.k),
                    "timestep": repr(table.timestep),
                    "prompt_hash": table.prompt_hash,
                    "score_key": key,
                },
            )
        )

    if cfg.selection is not None:
        ranked = rank_records(current, cfg.selection.score_key)
        chosen = ranked[: cfg.selection.n]
        stage_log.append(
            StageReport(
                stage_name="select",
                input_count=len(current),
                output_count=len(chosen),
                parameters={
                    "n": str(cfg.selection.n),
                    "score_key": cfg.selection.score_key,
                },
            )
        )
        current = chosen

    return DatasetManifest(
        records=tuple(current),
        pipeline_config_hash=config_hash(cfg),
        stage_log=tuple(stage_log),
    )
