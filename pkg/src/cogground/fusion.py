"""Two-stage grounding inference.

Stage 1 scores the entity name concatenated with its selected concepts
against the image and thresholds the prediction. Pairs rejected there are
re-judged in stage 2, which scores each concept against the image on its
own, weights the per-concept probabilities by how informative the concept
is (rarer concepts weigh more), and thresholds the weighted mean. Stage 2
can only flip rejections to acceptances, never the reverse.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .corpus import ConceptStats, ConceptStrategy, EntityRecord, ImageRef, select_concepts
from .errors import (
    ContributionDomainError,
    EmptyConceptListError,
    UnknownConceptError,
    ValidationError,
)
from .scorer import Scorer, ScoreRequest

DEFAULT_THRESHOLD = 0.5
DEFAULT_LOG_BASE = 10


def concat_text(entity_name: str, concepts: Sequence[str]) -> str:
    """Entity name followed by each concept, comma-space separated."""
    if not entity_name:
        raise ValidationError("entity name must be non-empty")
    return ", ".join([entity_name, *concepts])


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must be in (0, 1), got {threshold}")


class Stage1Outcome(NamedTuple):
    prediction: float
    accept: bool


def stage1(
    entity: EntityRecord,
    image: ImageRef,
    scorer: Scorer,
    strategy: ConceptStrategy = ConceptStrategy.ALL,
    threshold: float = DEFAULT_THRESHOLD,
) -> Stage1Outcome:
    """Score the concatenated entity/concept text; accept at >= threshold."""
    _check_threshold(threshold)
    text = concat_text(entity.name, select_concepts(entity, strategy))
    prediction = scorer.score(ScoreRequest(text=text, image=image)).prediction
    return Stage1Outcome(prediction=prediction, accept=prediction >= threshold)


def contribution(num: int, stats_ents: int, log_base: int = DEFAULT_LOG_BASE) -> float:
    """Informativeness weight of a concept shared by ``num`` of ``stats_ents``
    entities.

    Equals 1 for concepts rarer than ``log_base`` entities, then decreases
    as (1/log_base(num) - 1/ents) / (1 - 1/ents); always in (0, 1].
    """
    if log_base < 2:
        raise ContributionDomainError(f"log base must be >= 2, got {log_base}")
    if stats_ents < 2:
        raise ContributionDomainError(f"ents must be >= 2, got {stats_ents}")
    if not 1 <= num <= stats_ents:
        raise ContributionDomainError(
            f"num must be in [1, {stats_ents}], got {num}"
        )
    if num < log_base:
        return 1.0
    inv_ents = 1.0 / stats_ents
    return (1.0 / math.log(num, log_base) - inv_ents) / (1.0 - inv_ents)


@dataclass(frozen=True)
class EvidenceItem:
    concept: str
    p_e: float
    contribution: float
    weighted: float

    def __post_init__(self):
        if not 0.0 <= self.p_e <= 1.0:
            raise ValidationError(f"p_e {self.p_e} outside [0, 1]")
        if not 0.0 < self.contribution <= 1.0:
            raise ValidationError(
                f"contribution {self.contribution} outside (0, 1]"
            )

    def to_dict(self) -> dict:
        return {
            "concept": self.concept,
            "p_e": self.p_e,
            "contribution": self.contribution,
            "weighted": self.weighted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvidenceItem":
        return cls(
            concept=data["concept"],
            p_e=data["p_e"],
            contribution=data["contribution"],
            weighted=data["weighted"],
        )


def fuse_probabilities(
    p_values: Sequence[float], contributions: Sequence[float]
) -> float:
    """Arithmetic mean of the contribution-weighted evidence probabilities."""
    if not p_values:
        raise EmptyConceptListError("cannot fuse zero evidence items")
    if len(p_values) != len(contributions):
        raise ValidationError(
            f"{len(p_values)} probabilities but {len(contributions)} contributions"
        )
    total = 0.0
    for p, con in zip(p_values, contributions):
        total += p * con
    return total / len(p_values)


class FusionOutcome(NamedTuple):
    evidence: list[EvidenceItem]
    p_h: float
    accept: bool


def evidence_fusion(
    entity: EntityRecord,
    image: ImageRef,
    scorer: Scorer,
    stats: ConceptStats,
    strategy: ConceptStrategy = ConceptStrategy.ALL,
    threshold: float = DEFAULT_THRESHOLD,
    log_base: int = DEFAULT_LOG_BASE,
) -> FusionOutcome:
    """Re-judge a pair from its per-concept evidence.

    Each selected concept is scored against the image as bare text; the
    contribution-weighted mean of those probabilities is thresholded.
    """
    _check_threshold(threshold)
    concepts = select_concepts(entity, strategy)
    if not concepts:
        raise EmptyConceptListError(
            f"entity {entity.id!r} has no concepts under strategy {strategy.value}"
        )
    evidence: list[EvidenceItem] = []
    for concept in concepts:
        num = stats.counts.get(concept)
        if num is None:
            raise UnknownConceptError(
                f"concept {concept!r} absent from the evaluation statistics"
            )
        p_e = scorer.score(ScoreRequest(text=concept, image=image)).prediction
        con = contribution(num, stats.ents, log_base)
        evidence.append(
            EvidenceItem(concept=concept, p_e=p_e, contribution=con, weighted=p_e * con)
        )
    p_h = fuse_probabilities(
        [item.p_e for item in evidence], [item.contribution for item in evidence]
    )
    return FusionOutcome(evidence=evidence, p_h=p_h, accept=p_h >= threshold)


@dataclass(frozen=True)
class GroundingVerdict:
    """Per (entity, image) pipeline output with explainable evidence."""

    entity_id: str
    image_id: str
    stage1_prediction: float
    stage1_accept: bool
    evidence: tuple[EvidenceItem, ...] = ()
    p_h: Optional[float] = None
    stage2_accept: Optional[bool] = None
    final_label: bool = False

    def __post_init__(self):
        if not 0.0 <= self.stage1_prediction <= 1.0:
            raise ValidationError("stage1_prediction outside [0, 1]")
        if (self.p_h is None) != (self.stage2_accept is None):
            raise ValidationError("p_h and stage2_accept must be set together")
        if self.stage2_accept is not None:
            if self.stage1_accept:
                raise ValidationError("stage 2 must not run on stage-1 acceptances")
            if not self.evidence:
                raise ValidationError("stage-2 verdicts carry evidence")
        elif self.evidence:
            raise ValidationError("evidence present but stage 2 did not run")
        expected = self.stage1_accept or self.stage2_accept is True
        if self.final_label != expected:
            raise ValidationError(
                "final_label must be stage1_accept OR stage2_accept"
            )

    def pair_key(self) -> tuple[str, str]:
        return (self.entity_id, self.image_id)

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "image_id": self.image_id,
            "stage1_prediction": self.stage1_prediction,
            "stage1_accept": self.stage1_accept,
            "evidence": [item.to_dict() for item in self.evidence],
            "p_h": self.p_h,
            "stage2_accept": self.stage2_accept,
            "final_label": self.final_label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundingVerdict":
        return cls(
            entity_id=data["entity_id"],
            image_id=data["image_id"],
            stage1_prediction=data["stage1_prediction"],
            stage1_accept=data["stage1_accept"],
            evidence=tuple(
                EvidenceItem.from_dict(item) for item in data.get("evidence", [])
            ),
            p_h=data.get("p_h"),
            stage2_accept=data.get("stage2_accept"),
            final_label=data["final_label"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def ground_pair(
    entity: EntityRecord,
    image: ImageRef,
    scorer: Scorer,
    stats: ConceptStats,
    strategy: ConceptStrategy = ConceptStrategy.ALL,
    threshold: float = DEFAULT_THRESHOLD,
    stage2_threshold: Optional[float] = None,
    log_base: int = DEFAULT_LOG_BASE,
    use_stage2: bool = True,
) -> GroundingVerdict:
    """Run the two-stage pipeline on one pair.

    Stage-1 acceptances are final. Rejections are re-judged by evidence
    fusion when the entity has concepts under the strategy and
    ``use_stage2`` is set; otherwise the rejection stands.
    """
    prediction, accept = stage1(entity, image, scorer, strategy, threshold)
    if accept or not use_stage2 or not select_concepts(entity, strategy):
        return GroundingVerdict(
            entity_id=entity.id,
            image_id=image.id,
            stage1_prediction=prediction,
            stage1_accept=accept,
            final_label=accept,
        )
    evidence, p_h, stage2_accept = evidence_fusion(
        entity,
        image,
        scorer,
        stats,
        strategy,
        threshold if stage2_threshold is None else stage2_threshold,
        log_base,
    )
    return GroundingVerdict(
        entity_id=entity.id,
        image_id=image.id,
        stage1_prediction=prediction,
        stage1_accept=False,
        evidence=tuple(evidence),
        p_h=p_h,
        stage2_accept=stage2_accept,
        final_label=stage2_accept,
    )


def rank_candidates(
    entity: EntityRecord,
    candidates: Sequence[ImageRef],
    scorer: Scorer,
    strategy: ConceptStrategy = ConceptStrategy.ALL,
) -> list[tuple[ImageRef, float]]:
    """Score every candidate with the stage-1 text and sort.

    Descending by prediction; ties broken by image id ascending so the
    ordering is reproducible.
    """
    if not candidates:
        raise ValidationError("candidate list must be non-empty")
    text = concat_text(entity.name, select_concepts(entity, strategy))
    scored = [
        (image, scorer.score(ScoreRequest(text=text, image=image)).prediction)
        for image in candidates
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored
