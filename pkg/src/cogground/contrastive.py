"""Forward-only reference computation of the two-level contrastive loss.

Verifies external training loops: the entity-level term sums binary
cross entropy over every (text, image) cell of an in-batch prediction
matrix, and the concept-level term does the same over every
(concept-of-entity-a, image-b) cell. Losses are the non-negative sums of
BCE terms. No gradients are computed here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EntityRecord
from .errors import DimensionMismatchError, ValidationError

PROB_EPSILON = 1e-7


def bce(label: int, p: float, eps: float = PROB_EPSILON) -> float:
    """Binary cross entropy with the probability clamped to [eps, 1-eps]."""
    if label not in (0, 1):
        raise ValidationError(f"label must be 0 or 1, got {label!r}")
    p = min(max(p, eps), 1.0 - eps)
    return -(label * np.log(p) + (1 - label) * np.log(1.0 - p))


def _bce_matrix(labels: np.ndarray, preds: np.ndarray, eps: float) -> np.ndarray:
    clamped = np.clip(preds, eps, 1.0 - eps)
    return -(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped))


@dataclass
class BatchSpec:
    """One training batch's predictions and labels.

    ``entity_predictions[a][b]`` is the predicted match of the a-th
    concatenated text with the b-th image. ``concept_predictions[a][k][b]``
    is the predicted match of the a-th entity's k-th concept with the b-th
    image; labels mirror these shapes.
    """

    entities: list[EntityRecord]
    entity_predictions: np.ndarray
    concept_predictions: list[np.ndarray]
    entity_labels: np.ndarray
    concept_labels: list[np.ndarray]

    def __post_init__(self):
        self.entity_predictions = np.asarray(self.entity_predictions, dtype=np.float64)
        self.entity_labels = np.asarray(self.entity_labels, dtype=np.float64)
        self.concept_predictions = [
            np.asarray(m, dtype=np.float64).reshape(len(self.entities[a].concepts), -1)
            if np.asarray(m).size
            else np.zeros((0, len(self.entities)))
            for a, m in enumerate(self.concept_predictions)
        ]
        self.concept_labels = [
            np.asarray(m, dtype=np.float64).reshape(len(self.entities[a].concepts), -1)
            if np.asarray(m).size
            else np.zeros((0, len(self.entities)))
            for a, m in enumerate(self.concept_labels)
        ]
        self.validate()

    @property
    def batch_size(self) -> int:
        return len(self.entities)

    def validate(self) -> None:
        n = self.batch_size
        if n == 0:
            raise ValidationError("batch must contain at least one entity")
        if self.entity_predictions.shape != (n, n):
            raise DimensionMismatchError(
                f"entity_predictions shape {self.entity_predictions.shape}, "
                f"expected {(n, n)}"
            )
        if self.entity_labels.shape != (n, n):
            raise DimensionMismatchError(
                f"entity_labels shape {self.entity_labels.shape}, expected {(n, n)}"
            )
        if not np.all(np.diag(self.entity_labels) == 1.0):
            raise ValidationError("entity label diagonal must be all ones")
        if np.any((self.entity_predictions < 0) | (self.entity_predictions > 1)):
            raise ValidationError("entity predictions must lie in [0, 1]")
        if len(self.concept_predictions) != n or len(self.concept_labels) != n:
            raise DimensionMismatchError(
                "concept matrices must have one block per entity"
            )
        for a, entity in enumerate(self.entities):
            m_a = len(entity.concepts)
            for name, block in (
                ("concept_predictions", self.concept_predictions[a]),
                ("concept_labels", self.concept_labels[a]),
            ):
                if block.shape != (m_a, n):
                    raise DimensionMismatchError(
                        f"{name}[{a}] shape {block.shape}, expected {(m_a, n)}"
                    )
            if np.any(
                (self.concept_predictions[a] < 0) | (self.concept_predictions[a] > 1)
            ):
                raise ValidationError("concept predictions must lie in [0, 1]")


def build_labels(
    entities: Sequence[EntityRecord],
) -> tuple[np.ndarray, list[np.ndarray]]:
    """In-batch labels: identity at the entity level; at the concept level,
    cell (a, k, b) is 1 iff the b-th entity's concept list contains the
    k-th concept of the a-th entity.
    """
    n = len(entities)
    entity_labels = np.eye(n, dtype=np.float64)
    concept_sets = [set(e.concepts) for e in entities]
    concept_labels = []
    for entity in entities:
        block = np.zeros((len(entity.concepts), n), dtype=np.float64)
        for k, concept in enumerate(entity.concepts):
            for b in range(n):
                if concept in concept_sets[b]:
                    block[k, b] = 1.0
        concept_labels.append(block)
    return entity_labels, concept_labels


def entity_loss(spec: BatchSpec, eps: float = PROB_EPSILON) -> float:
    """Sum of BCE over all n x n (text, image) cells."""
    return float(
        np.sum(_bce_matrix(spec.entity_labels, spec.entity_predictions, eps))
    )


def concept_loss(spec: BatchSpec, eps: float = PROB_EPSILON) -> float:
    """Sum of BCE over all (entity a, concept k, image b) cells."""
    total = 0.0
    for a in range(spec.batch_size):
        if spec.concept_predictions[a].size:
            total += float(
                np.sum(
                    _bce_matrix(spec.concept_labels[a], spec.concept_predictions[a], eps)
                )
            )
    return total


def total_loss(spec: BatchSpec, eps: float = PROB_EPSILON) -> float:
    return entity_loss(spec, eps) + concept_loss(spec, eps)


@dataclass(frozen=True)
class LossReport:
    entity: float
    concept: float
    total: float
    entity_mean: float
    concept_mean: float

    def to_dict(self) -> dict:
        return {
            "entity_loss": self.entity,
            "concept_loss": self.concept,
            "total_loss": self.total,
            "entity_loss_mean": self.entity_mean,
            "concept_loss_mean": self.concept_mean,
        }


def loss_report(spec: BatchSpec, eps: float = PROB_EPSILON) -> LossReport:
    """Raw sums plus per-cell means (means are a reporting convenience)."""
    e = entity_loss(spec, eps)
    c = concept_loss(spec, eps)
    n = spec.batch_size
    concept_cells = sum(block.size for block in spec.concept_predictions)
    return LossReport(
        entity=e,
        concept=c,
        total=e + c,
        entity_mean=e / (n * n),
        concept_mean=c / concept_cells if concept_cells else 0.0,
    )


# -- batch.json fixture format ----------------------------------------------

def spec_to_dict(spec: BatchSpec) -> dict:
    return {
        "entities": [
            {"id": e.id, "name": e.name, "viewtimes": e.viewtimes,
             "concepts": list(e.concepts)}
            for e in spec.entities
        ],
        "entity_predictions": spec.entity_predictions.tolist(),
        "concept_predictions": [m.tolist() for m in spec.concept_predictions],
        "entity_labels": spec.entity_labels.tolist(),
        "concept_labels": [m.tolist() for m in spec.concept_labels],
    }


def spec_from_dict(data: dict) -> BatchSpec:
    entities = [
        EntityRecord(
            id=e["id"],
            name=e["name"],
            viewtimes=e.get("viewtimes", 0),
            concepts=tuple(e.get("concepts", [])),
        )
        for e in data["entities"]
    ]
    if "entity_labels" in data and "concept_labels" in data:
        entity_labels = data["entity_labels"]
        concept_labels = data["concept_labels"]
    else:
        entity_labels, concept_labels = build_labels(entities)
    return BatchSpec(
        entities=entities,
        entity_predictions=data["entity_predictions"],
        concept_predictions=data["concept_predictions"],
        entity_labels=entity_labels,
        concept_labels=concept_labels,
    )


def load_batch_fixture(path: str | Path) -> tuple[BatchSpec, dict | None]:
    """Read a batch.json fixture; returns the batch and any embedded
    expected loss values (``{"entity_loss", "concept_loss", "total_loss"}``).
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return spec_from_dict(data), data.get("expected")
