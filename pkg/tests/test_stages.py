import itertools

import numpy as np
import pytest

from pixsift.errors import ConfigError, MissingScoreError
from pixsift.records import ImageRecord
from pixsift.selection import SelectionConfig
from pixsift.stages import (
    PipelineConfig,
    ResolutionStage,
    StageConfig,
    apply_stage,
    canonical_config_json,
    config_hash,
    load_pipeline_config,
    resolution_stage,
    run_pipeline,
)


def rec(image_id, width=1200, height=1100, **scores):
    return ImageRecord(
        image_id=image_id,
        source_uri=f"synthetic://{image_id}",
        width_px=width,
        height_px=height,
        scores=scores,
    )


def random_corpus(rng, n=200):
    return [
        rec(
            f"r{i:05d}",
            width=int(rng.integers(500, 2500)),
            height=int(rng.integers(500, 2500)),
            nsfw=float(rng.random()),
            topiq=float(rng.uniform(0.3, 0.95)),
        )
        for i in range(n)
    ]


class TestApplyStage:
    def test_topiq_above_production_threshold_survives(self):
        stage = StageConfig("topiq_gate", "topiq", ">", 0.71)
        survivors, report = apply_stage([rec("a", topiq=0.72)], stage)
        assert [r.image_id for r in survivors] == ["a"]
        assert (report.input_count, report.output_count) == (1, 1)

    def test_topiq_at_threshold_rejected_strict(self):
        stage = StageConfig("topiq_gate", "topiq", ">", 0.71)
        survivors, _ = apply_stage([rec("a", topiq=0.71)], stage)
        assert survivors == []

    def test_vacuous_filter_keeps_everything(self):
        rng = np.random.default_rng(7)
        records = random_corpus(rng, 100)
        stage = StageConfig("vacuous", "nsfw", ">=", -1e300)
        survivors, _ = apply_stage(records, stage)
        assert survivors == records

    def test_on_missing_error(self):
        stage = StageConfig("s", "absent", ">", 0.0, on_missing="error")
        with pytest.raises(MissingScoreError):
            apply_stage([rec("a")], stage)

    def test_on_missing_reject_and_pass(self):
        records = [rec("a"), rec("b", extra=1.0)]
        survivors, _ = apply_stage(
            records, StageConfig("s", "extra", ">", 0.0, on_missing="reject")
        )
        assert [r.image_id for r in survivors] == ["b"]
        survivors, _ = apply_stage(
            records, StageConfig("s", "extra", ">", 0.0, on_missing="pass")
        )
        assert [r.image_id for r in survivors] == ["a", "b"]

    def test_order_preserved(self):
        rng = np.random.default_rng(3)
        records = random_corpus(rng, 150)
        survivors, _ = apply_stage(records, StageConfig("s", "nsfw", "<", 0.5))
        expected = [r for r in records if r.scores["nsfw"] < 0.5]
        assert survivors == expected

    def test_worker_count_does_not_change_result(self):
        rng = np.random.default_rng(11)
        records = random_corpus(rng, 300)
        stage = StageConfig("s", "topiq", ">", 0.6)
        seq, _ = apply_stage(records, stage, workers=1)
        par, _ = apply_stage(records, stage, workers=4)
        assert seq == par

    def test_unicode_comparators_accepted(self):
        stage = StageConfig("s", "topiq", "≥", 0.5)
        assert stage.comparator == ">="

    def test_bad_comparator_rejected(self):
        with pytest.raises(ConfigError):
            StageConfig("s", "topiq", "!=", 0.5)

    def test_non_finite_threshold_rejected(self):
        with pytest.raises(ConfigError):
            StageConfig("s", "topiq", ">", float("inf"))


class TestResolutionStage:
    def test_exact_1024_square_rejected(self):
        survivors, _ = resolution_stage([rec("a", width=1024, height=1024)])
        assert survivors == []

    def test_one_past_boundary_survives(self):
        survivors, _ = resolution_stage([rec("a", width=1025, height=1024)])
        assert [r.image_id for r in survivors] == ["a"]

    def test_area_rule_not_per_side(self):
        # 2048 x 600 = 1,228,800 px > 1,048,576 even though one side is small.
        survivors, _ = resolution_stage([rec("a", width=2048, height=600)])
        assert [r.image_id for r in survivors] == ["a"]

    def test_optional_min_side(self):
        stage = ResolutionStage(min_side_px=640)
        survivors, _ = resolution_stage(
            [rec("a", width=2048, height=600), rec("b", width=2048, height=640)], stage
        )
        assert [r.image_id for r in survivors] == ["b"]


class TestRunPipeline:
    def test_empty_stage_list_is_identity(self):
        records = [rec("a"), rec("b")]
        manifest = run_pipeline(records, PipelineConfig())
        assert list(manifest.records) == records
        assert manifest.stage_log == ()
        assert manifest.pipeline_config_hash == config_hash(PipelineConfig())

    def test_survivors_match_predicate_intersection_oracle(self):
        rng = np.random.default_rng(42)
        records = random_corpus(rng, 2000)
        cfg = PipelineConfig(
            stages=(
                ResolutionStage(),
                StageConfig("nsfw_gate", "nsfw", "<", 0.5),
                StageConfig("topiq_gate", "topiq", ">", 0.71),
            )
        )
        manifest = run_pipeline(records, cfg)
        oracle = {
            r.image_id
            for r in records
            if r.width_px * r.height_px > 1024 * 1024
        } & {r.image_id for r in records if r.scores["nsfw"] < 0.5} & {
            r.image_id for r in records if r.scores["topiq"] > 0.71
        }
        assert {r.image_id for r in manifest.records} == oracle
        assert len(manifest.stage_log) == 3

    def test_tightening_any_threshold_shrinks_survivors(self):
        rng = np.random.default_rng(5)
        for trial in range(25):
            records = random_corpus(rng, 120)
            nsfw_cut = float(rng.uniform(0.2, 0.8))
            topiq_cut = float(rng.uniform(0.4, 0.8))
            base_cfg = PipelineConfig(
                stages=(
                    StageConfig("nsfw_gate", "nsfw", "<", nsfw_cut),
                    StageConfig("topiq_gate", "topiq", ">", topiq_cut),
                )
            )
            base = {r.image_id for r in run_pipeline(records, base_cfg).records}
            for tightened in (
                PipelineConfig(
                    stages=(
                        StageConfig("nsfw_gate", "nsfw", "<", nsfw_cut - 0.1),
                        StageConfig("topiq_gate", "topiq", ">", topiq_cut),
                    )
                ),
                PipelineConfig(
                    stages=(
                        StageConfig("nsfw_gate", "nsfw", "<", nsfw_cut),
                        StageConfig("topiq_gate", "topiq", ">", topiq_cut + 0.1),
                    )
                ),
            ):
                tightened_ids = {
                    r.image_id for r in run_pipeline(records, tightened).records
                }
                assert tightened_ids <= base

    def test_stage_reordering_keeps_survivor_set(self):
        rng = np.random.default_rng(9)
        records = random_corpus(rng, 300)
        stages = (
            ResolutionStage(),
            StageConfig("nsfw_gate", "nsfw", "<", 0.5),
            StageConfig("topiq_gate", "topiq", ">", 0.6),
        )
        reference = None
        for perm in itertools.permutations(stages):
            manifest = run_pipeline(records, PipelineConfig(stages=perm))
            ids = {r.image_id for r in manifest.records}
            if reference is None:
                reference = ids
            assert ids == reference

    def test_unknown_score_key_is_config_error(self):
        records = [rec("a")]
        cfg = PipelineConfig(stages=(StageConfig("s", "never_provided", ">", 0.0),))
        with pytest.raises(ConfigError):
            run_pipeline(records, cfg)

    def test_provider_scores_resolve_stage_keys(self):
        records = [rec("a"), rec("b")]
        provider = {"a": {"watermark": 0.1}, "b": {"watermark": 0.9}}
        cfg = PipelineConfig(stages=(StageConfig("wm", "watermark", "<", 0.5),))
        manifest = run_pipeline(records, cfg, [provider])
        assert [r.image_id for r in manifest.records] == ["a"]

    def test_duplicate_stage_names_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig(
                stages=(
                    StageConfig("same", "a", ">", 0.0),
                    StageConfig("same", "b", ">", 0.0),
                )
            )

    def test_selection_in_pipeline(self):
        records = [rec(f"r{i}", quality=float(i)) for i in range(10)]
        cfg = PipelineConfig(selection=SelectionConfig(n=3, score_key="quality"))
        manifest = run_pipeline(records, cfg)
        assert [r.image_id for r in manifest.records] == ["r9", "r8", "r7"]


class TestTomlConfig:
    def test_full_config_parse(self, tmp_path):
        path = tmp_path / "pipeline.toml"
        path.write_text(
            """
seed = 99

[[stage]]
name = "resolution"
kind = "resolution"

[[stage]]
name = "nsfw_gate"
score_key = "nsfw"
comparator = "<"
threshold = 0.5

[dedup]
ratio_threshold = 0.8
min_matches = 8
quality_key = "topiq"

[estimator]
k = 8
score_key = "diffusion_estimator"

[selection]
n = 50
score_key = "diffusion_estimator"
"""
        )
        cfg = load_pipeline_config(path)
        assert cfg.seed == 99
        assert isinstance(cfg.stages[0], ResolutionStage)
        assert cfg.stages[1].on_missing == "error"
        assert cfg.dedup.quality_key == "topiq"
        assert cfg.estimator.k == 8
        assert cfg.selection.n == 50

    def test_config_hash_is_stable(self, tmp_path):
        cfg = PipelineConfig(stages=(StageConfig("s", "x", ">", 0.5),), seed=1)
        same = PipelineConfig(stages=(StageConfig("s", "x", ">", 0.5),), seed=1)
        assert config_hash(cfg) == config_hash(same)
        assert canonical_config_json(cfg) == canonical_config_json(same)
        different = PipelineConfig(stages=(StageConfig("s", "x", ">", 0.6),), seed=1)
        assert config_hash(cfg) != config_hash(different)

    def test_missing_threshold_field_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('[[stage]]\nname = "s"\nscore_key = "x"\ncomparator = ">"\n')
        with pytest.raises(ConfigError):
            load_pipeline_config(path)
