"""pixsift: multi-stage image dataset curation and evaluation toolkit."""

from .dedup import ClusterAssignment, DedupConfig, DescriptorSet, cluster, deduplicate, match_count
from .errors import PixsiftError
from .estimator import (
    ActivationNormMatrix,
    AttentionMap,
    CalibrationSet,
    EstimatorConfig,
    SeparationTable,
    compute_norms,
    fit_separation,
    score_corpus,
    score_image,
    select_top_k,
)
from .evalstats import (
    Annotation,
    CriterionOutcome,
    SbSExperiment,
    SbSTask,
    aggregate,
    binomial_p,
    build_tasks,
    majority_vote,
)
from .metrics import (
    FeatureSet,
    GaussianStats,
    ScalarScoreSet,
    aggregate_scores,
    fit_gaussian,
    frechet_distance,
)
from .records import DatasetManifest, ImageRecord, StageReport, load_manifest, save_manifest
from .selection import SelectionConfig, nested_variants, sample_uniform, select_top_n
from .stages import (
    PipelineConfig,
    ResolutionStage,
    StageConfig,
    apply_stage,
    resolution_stage,
    run_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationNormMatrix",
    "Annotation",
    "AttentionMap",
    "CalibrationSet",
    "ClusterAssignment",
    "CriterionOutcome",
    "DatasetManifest",
    "DedupConfig",
    "DescriptorSet",
    "EstimatorConfig",
    "FeatureSet",
    "GaussianStats",
    "ImageRecord",
    "PipelineConfig",
    "PixsiftError",
    "ResolutionStage",
    "SbSExperiment",
    "SbSTask",
    "ScalarScoreSet",
    "SelectionConfig",
    "SeparationTable",
    "StageConfig",
    "StageReport",
    "aggregate",
    "aggregate_scores",
    "apply_stage",
    "binomial_p",
    "build_tasks",
    "cluster",
    "compute_norms",
    "deduplicate",
    "fit_gaussian",
    "fit_separation",
    "frechet_distance",
    "load_manifest",
    "majority_vote",
    "match_count",
    "nested_variants",
    "resolution_stage",
    "run_pipeline",
    "sample_uniform",
    "save_manifest",
    "score_corpus",
    "score_image",
    "select_top_k",
    "select_top_n",
]
