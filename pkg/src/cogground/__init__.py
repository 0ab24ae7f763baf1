"""Concept-guided grounding of long-tailed entities to images."""

__version__ = "0.1.0"

from .corpus import (
    ConceptStats,
    ConceptStrategy,
    Corpus,
    EntityRecord,
    ImageRef,
    PairRecord,
    compute_concept_stats,
    label_by_linking,
    load_corpus,
    select_concepts,
    select_long_tailed,
    split_dataset,
)
from .fusion import (
    EvidenceItem,
    GroundingVerdict,
    concat_text,
    contribution,
    evidence_fusion,
    ground_pair,
    rank_candidates,
    stage1,
)
from .scorer import (
    CachingScorer,
    RemoteScorer,
    ScoreRequest,
    ScoreResult,
    Scorer,
    SyntheticWorldConfig,
    make_synthetic_scorer,
)
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    RankingInstance,
    build_classification_set,
    build_ranking_instances,
    classification_metrics,
    ranking_metrics,
    run_experiment,
)
from .worldgen import make_synthetic_corpus

__all__ = [
    "__version__",
    "ConceptStats",
    "ConceptStrategy",
    "Corpus",
    "EntityRecord",
    "ImageRef",
    "PairRecord",
    "compute_concept_stats",
    "label_by_linking",
    "load_corpus",
    "select_concepts",
    "select_long_tailed",
    "split_dataset",
    "EvidenceItem",
    "GroundingVerdict",
    "concat_text",
    "contribution",
    "evidence_fusion",
    "ground_pair",
    "rank_candidates",
    "stage1",
    "CachingScorer",
    "RemoteScorer",
    "ScoreRequest",
    "ScoreResult",
    "Scorer",
    "SyntheticWorldConfig",
    "make_synthetic_scorer",
    "EvalReport",
    "ExperimentConfig",
    "RankingInstance",
    "build_classification_set",
    "build_ranking_instances",
    "classification_metrics",
    "ranking_metrics",
    "run_experiment",
    "make_synthetic_corpus",
]
