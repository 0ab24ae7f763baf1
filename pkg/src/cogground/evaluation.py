"""Ranking and classification evaluation harness.

Ranking asks the pipeline to find the one correct image among 50
candidates; classification asks it to label (entity, image) pairs where
half the pairs carry swapped images. Negative candidates always come from
images belonging to a different entity (or, without provenance, images
never positively paired with the entity).
"""

from __future__ import annotations

import csv
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .corpus import (
    ConceptStrategy,
    Corpus,
    EntityRecord,
    PairRecord,
    compute_concept_stats,
    split_dataset,
)
from .errors import (
    EmptyInputError,
    InsufficientNegativesError,
    PositiveMissingError,
    ValidationError,
)
from .fusion import (
    DEFAULT_LOG_BASE,
    DEFAULT_THRESHOLD,
    GroundingVerdict,
    ground_pair,
    rank_candidates,
)
from .scorer import Scorer

HIT_KS = (1, 5, 10)
RANKING_CANDIDATES = 50


@dataclass(frozen=True)
class RankingInstance:
    entity_id: str
    candidates: tuple[str, ...]
    positive_id: str

    def __post_init__(self):
        if self.positive_id not in self.candidates:
            raise ValidationError("positive image must be among the candidates")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValidationError("candidate ids must be distinct")


@dataclass(frozen=True)
class EvalReport:
    """Ranking and classification results; internal values stay in [0, 1]
    (mr is a rank). Percent scaling happens only at serialization."""

    mr: Optional[float] = None
    mrr: Optional[float] = None
    hit_at: Optional[dict[int, float]] = None
    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None

    def __post_init__(self):
        if self.mr is not None and self.mr < 1.0:
            raise ValidationError("mean rank cannot be below 1")
        if self.mrr is not None and not 0.0 < self.mrr <= 1.0:
            raise ValidationError("MRR must lie in (0, 1]")
        if self.hit_at is not None:
            ks = sorted(self.hit_at)
            values = [self.hit_at[k] for k in ks]
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise ValidationError("hit rates must lie in [0, 1]")
            if any(a > b for a, b in zip(values, values[1:])):
                raise ValidationError("hit@k must be non-decreasing in k")
        for name in ("accuracy", "precision", "recall", "f1"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        """Raw values plus a percent-scaled table (round half to even, 2dp)."""
        raw: dict = {
            "ranking": None
            if self.mr is None
            else {
                "mr": self.mr,
                "mrr": self.mrr,
                "hit_at": {str(k): v for k, v in sorted(self.hit_at.items())},
            },
            "classification": None
            if self.accuracy is None
            else {
                "accuracy": self.accuracy,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
            },
        }
        table: dict = {}
        if self.mr is not None:
            table["MR"] = round(self.mr, 2)
            table["MRR"] = round(self.mrr * 100, 2)
            for k in sorted(self.hit_at):
                table[f"Hit@{k}"] = round(self.hit_at[k] * 100, 2)
        if self.accuracy is not None:
            table["Accuracy"] = round(self.accuracy * 100, 2)
            table["Precision"] = round(self.precision * 100, 2)
            table["Recall"] = round(self.recall * 100, 2)
            table["F1"] = round(self.f1 * 100, 2)
        raw["table"] = table
        return raw

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        ranking = data.get("ranking") or {}
        classification = data.get("classification") or {}
        hit_at = ranking.get("hit_at")
        return cls(
            mr=ranking.get("mr"),
            mrr=ranking.get("mrr"),
            hit_at={int(k): v for k, v in hit_at.items()} if hit_at else None,
            accuracy=classification.get("accuracy"),
            precision=classification.get("precision"),
            recall=classification.get("recall"),
            f1=classification.get("f1"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def _exclusion_index(corpus: Corpus) -> dict[str, set[str]]:
    """Image ids that may not serve as negatives, per entity.

    With full provenance the rule is "source entity differs"; otherwise it
    falls back to "image never positively paired with the entity".
    """
    excluded: dict[str, set[str]] = {}
    if all(img.source_entity_id is not None for img in corpus.images):
        for img in corpus.images:
            excluded.setdefault(img.source_entity_id, set()).add(img.id)
    else:
        for pair in corpus.pairs:
            if pair.label:
                excluded.setdefault(pair.entity_id, set()).add(pair.image_id)
    return excluded


def _sample_negatives(
    corpus: Corpus,
    entity_id: str,
    count: int,
    rng: random.Random,
    excluded: dict[str, set[str]],
    also_exclude: set[str],
) -> list[str]:
    blocked = excluded.get(entity_id, set()) | also_exclude
    eligible_count = len(corpus.images) - sum(
        1 for iid in blocked if corpus.has_image(iid)
    )
    if eligible_count < count:
        raise InsufficientNegativesError(
            f"entity {entity_id!r}: need {count} negative images, "
            f"only {eligible_count} eligible"
        )
    if eligible_count < 2 * count:
        eligible = [img.id for img in corpus.images if img.id not in blocked]
        return rng.sample(eligible, count)
    # plenty of headroom: rejection sampling avoids materializing the pool
    chosen: list[str] = []
    seen: set[str] = set()
    n = len(corpus.images)
    while len(chosen) < count:
        image_id = corpus.images[rng.randrange(n)].id
        if image_id in blocked or image_id in seen:
            continue
        seen.add(image_id)
        chosen.append(image_id)
    return chosen


def build_ranking_instances(
    corpus: Corpus,
    positives: Sequence[PairRecord],
    seed: int,
    num_negatives: int = RANKING_CANDIDATES - 1,
) -> list[RankingInstance]:
    """One instance per positive pair: the true image plus seeded-random
    negatives drawn without replacement from other entities' images."""
    rng = random.Random(seed)
    excluded = _exclusion_index(corpus)
    instances = []
    for pair in positives:
        if not pair.label:
            raise ValidationError("ranking instances are built from positive pairs")
        negatives = _sample_negatives(
            corpus, pair.entity_id, num_negatives, rng, excluded, {pair.image_id}
        )
        candidates = [pair.image_id, *negatives]
        rng.shuffle(candidates)
        instances.append(
            RankingInstance(
                entity_id=pair.entity_id,
                candidates=tuple(candidates),
                positive_id=pair.image_id,
            )
        )
    return instances


def build_classification_set(
    positives: Sequence[PairRecord], corpus: Corpus, seed: int
) -> list[PairRecord]:
    """Positives plus an equal number of swapped-image negatives."""
    rng = random.Random(seed)
    excluded = _exclusion_index(corpus)
    negatives = []
    for pair in positives:
        if not pair.label:
            raise ValidationError("classification sets are built from positive pairs")
        negative_image = _sample_negatives(
            corpus, pair.entity_id, 1, rng, excluded, {pair.image_id}
        )[0]
        negatives.append(
            PairRecord(entity_id=pair.entity_id, image_id=negative_image, label=False)
        )
    return list(positives) + negatives


def ranking_metrics(
    instances: Sequence[RankingInstance],
    ranker: Callable[[RankingInstance], Sequence[str]],
    ks: Sequence[int] = HIT_KS,
) -> tuple[float, float, dict[int, float]]:
    """(mean rank, mean reciprocal rank, hit@k fractions) of the positive."""
    if not instances:
        raise EmptyInputError("no ranking instances")
    ranks = []
    for instance in instances:
        ordering = list(ranker(instance))
        try:
            rank = ordering.index(instance.positive_id) + 1
        except ValueError:
            raise PositiveMissingError(
                f"ranker dropped positive {instance.positive_id!r} for "
                f"entity {instance.entity_id!r}"
            ) from None
        ranks.append(rank)
    n = len(ranks)
    mr = sum(ranks) / n
    mrr = sum(1.0 / r for r in ranks) / n
    hit_at = {k: sum(1 for r in ranks if r <= k) / n for k in ks}
    return mr, mrr, hit_at


def classification_metrics(
    outcomes: Sequence[tuple[bool, bool]],
) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1) from (predicted, actual) pairs.

    Precision and recall default to 0 when their denominator is empty;
    F1 is 0 when both are 0.
    """
    if not outcomes:
        raise EmptyInputError("no classification outcomes")
    tp = sum(1 for predicted, actual in outcomes if predicted and actual)
    fp = sum(1 for predicted, actual in outcomes if predicted and not actual)
    fn = sum(1 for predicted, actual in outcomes if not predicted and actual)
    tn = len(outcomes) - tp - fp - fn
    accuracy = (tp + tn) / len(outcomes)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, precision, recall, f1


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: ConceptStrategy = ConceptStrategy.ALL
    use_stage2: bool = True
    threshold: float = DEFAULT_THRESHOLD
    stage2_threshold: Optional[float] = None
    log_base: int = DEFAULT_LOG_BASE
    seed: int = 0
    split: bool = True
    num_negatives: int = RANKING_CANDIDATES - 1
    include_ranking: bool = True
    include_classification: bool = True
    max_workers: int = 1


@dataclass
class ExperimentResult:
    report: EvalReport
    verdicts: list[GroundingVerdict] = field(default_factory=list)
    instances: list[RankingInstance] = field(default_factory=list)


def _map_ordered(fn, items, max_workers: int):
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def run_experiment(
    corpus: Corpus, scorer: Scorer, config: ExperimentConfig
) -> ExperimentResult:
    """Run the ranking and classification protocols and aggregate a report.

    With ``split`` the positive pairs are split 8:1:1 and only the test
    slice is evaluated, with negatives resampled; without it, the corpus
    pairs are used as-is (resampling negatives only when none are labeled).
    """
    positives = corpus.positive_pairs()
    if not positives:
        raise EmptyInputError("corpus has no positive pairs to evaluate")
    labeled_negatives = [p for p in corpus.pairs if not p.label]

    if config.split:
        _, _, eval_positives = split_dataset(positives, config.seed)
        classification_pairs = (
            build_classification_set(eval_positives, corpus, config.seed)
            if config.include_classification
            else []
        )
    else:
        eval_positives = positives
        if not config.include_classification:
            classification_pairs = []
        elif labeled_negatives:
            classification_pairs = list(corpus.pairs)
        else:
            classification_pairs = build_classification_set(
                eval_positives, corpus, config.seed
            )

    # Contribution statistics come from the entities under evaluation,
    # never from a training slice.
    seen: dict[str, EntityRecord] = {}
    for pair in classification_pairs or eval_positives:
        if pair.entity_id not in seen:
            seen[pair.entity_id] = corpus.entity(pair.entity_id)
    stats = compute_concept_stats(list(seen.values()))

    mr = mrr = None
    hit_at = None
    instances: list[RankingInstance] = []
    if config.include_ranking:
        instances = build_ranking_instances(
            corpus, eval_positives, config.seed, config.num_negatives
        )

        def rank_ids(instance: RankingInstance) -> list[str]:
            entity = corpus.entity(instance.entity_id)
            candidates = [corpus.image(cid) for cid in instance.candidates]
            ranked = rank_candidates(entity, candidates, scorer, config.strategy)
            return [image.id for image, _ in ranked]

        orderings = _map_ordered(rank_ids, instances, config.max_workers)
        by_instance = {
            id(inst): ordering for inst, ordering in zip(instances, orderings)
        }
        mr, mrr, hit_at = ranking_metrics(
            instances, lambda inst: by_instance[id(inst)]
        )

    accuracy = precision = recall = f1 = None
    verdicts: list[GroundingVerdict] = []
    if classification_pairs:
        def judge(pair: PairRecord) -> GroundingVerdict:
            return ground_pair(
                corpus.entity(pair.entity_id),
                corpus.image(pair.image_id),
                scorer,
                stats,
                config.strategy,
                config.threshold,
                config.stage2_threshold,
                config.log_base,
                config.use_stage2,
            )

        verdicts = _map_ordered(judge, classification_pairs, config.max_workers)
        outcomes = [
            (verdict.final_label, pair.label)
            for verdict, pair in zip(verdicts, classification_pairs)
        ]
        accuracy, precision, recall, f1 = classification_metrics(outcomes)

    report = EvalReport(
        mr=mr,
        mrr=mrr,
        hit_at=hit_at,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
    )
    return ExperimentResult(report=report, verdicts=verdicts, instances=instances)


def write_report_csv(report: EvalReport, path: str | Path, label: str = "run") -> None:
    """One-row CSV mirroring the result-table layout."""
    table = report.to_dict()["table"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Method", *table.keys()])
        writer.writerow([label, *table.values()])
