"""Entity/image/pair corpus: loading, validation, selection, statistics.

The corpus is immutable after construction and safe to share across
threads. File formats are line-delimited JSON (UTF-8, unknown fields
ignored):

    entities.jsonl  {"id", "name", "viewtimes", "concepts": [..]}
    images.jsonl    {"id", "locator", "source_entity_id"?}
    pairs.jsonl     {"entity_id", "image_id", "label"}
    linking.jsonl   {"image_id", "caption", "linked_entities": [..]}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .errors import (
    CorpusParseError,
    DanglingReferenceError,
    DuplicateIdError,
    EmptyInputError,
    ValidationError,
)

LONG_TAIL_VIEWTIMES = 100_000
COMMON_VIEWTIMES = 1_000_000


class ConceptStrategy(Enum):
    """Which of an entity's concepts participate in grounding."""

    NONE = "none"
    BLC = "blc"
    ALL = "all"

    @classmethod
    def parse(cls, value: str) -> "ConceptStrategy":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValidationError(
                f"unknown concept strategy {value!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


def is_blc(concept: str) -> bool:
    """A basic-level concept is a single whitespace-delimited token."""
    return len(concept.split()) == 1


@dataclass(frozen=True)
class EntityRecord:
    id: str
    name: str
    viewtimes: int
    concepts: tuple[str, ...]

    def __post_init__(self):
        if not self.id:
            raise ValidationError("entity id must be non-empty")
        if not self.name:
            raise ValidationError(f"entity {self.id}: name must be non-empty")
        if self.viewtimes < 0:
            raise ValidationError(f"entity {self.id}: viewtimes must be >= 0")
        if len(set(self.concepts)) != len(self.concepts):
            raise ValidationError(f"entity {self.id}: duplicate concepts")


@dataclass(frozen=True)
class ImageRef:
    id: str
    locator: str
    source_entity_id: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("image id must be non-empty")
        if not self.locator:
            raise ValidationError(f"image {self.id}: locator must be non-empty")


@dataclass(frozen=True)
class PairRecord:
    entity_id: str
    image_id: str
    label: bool


@dataclass(frozen=True)
class ConceptStats:
    """Entity/concept counts over the evaluation corpus.

    ``ents`` is the number of entities under evaluation; ``counts[c]`` is
    the number of those entities whose concept list contains ``c``.
    """

    ents: int
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.ents <= 0:
            raise ValidationError("ents must be positive")
        for concept, num in self.counts.items():
            if not 1 <= num <= self.ents:
                raise ValidationError(
                    f"count for {concept!r} is {num}, outside [1, {self.ents}]"
                )


@dataclass(frozen=True)
class Corpus:
    entities: tuple[EntityRecord, ...]
    images: tuple[ImageRef, ...]
    pairs: tuple[PairRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "_entities_by_id", {e.id: e for e in self.entities}
        )
        object.__setattr__(self, "_images_by_id", {i.id: i for i in self.images})

    def entity(self, entity_id: str) -> EntityRecord:
        try:
            return self._entities_by_id[entity_id]
        except KeyError:
            raise DanglingReferenceError(f"unknown entity id {entity_id!r}") from None

    def image(self, image_id: str) -> ImageRef:
        try:
            return self._images_by_id[image_id]
        except KeyError:
            raise DanglingReferenceError(f"unknown image id {image_id!r}") from None

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._entities_by_id

    def has_image(self, image_id: str) -> bool:
        return image_id in self._images_by_id

    def positive_pairs(self) -> list[PairRecord]:
        return [p for p in self.pairs if p.label]


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(path, line_no, f"invalid JSON: {exc.msg}")
            if not isinstance(record, dict):
                raise CorpusParseError(path, line_no, "record is not a JSON object")
            yield line_no, record


def _require(record: dict, key: str, path: Path, line_no: int):
    if key not in record:
        raise CorpusParseError(path, line_no, f"missing field {key!r}")
    return record[key]


def _dedup_keep_first(concepts: Iterable[str]) -> tuple[str, ...]:
    seen = set()
    out = []
    for c in concepts:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return tuple(out)


def load_entities(path: str | Path) -> list[EntityRecord]:
    path = Path(path)
    entities: list[EntityRecord] = []
    seen: dict[str, int] = {}
    for line_no, rec in _iter_jsonl(path):
        eid = _require(rec, "id", path, line_no)
        name = _require(rec, "name", path, line_no)
        viewtimes = _require(rec, "viewtimes", path, line_no)
        concepts = rec.get("concepts", [])
        if not isinstance(eid, str) or not isinstance(name, str):
            raise CorpusParseError(path, line_no, "id and name must be strings")
        if not isinstance(viewtimes, int) or isinstance(viewtimes, bool):
            raise CorpusParseError(path, line_no, "viewtimes must be an integer")
        if not isinstance(concepts, list) or any(
            not isinstance(c, str) for c in concepts
        ):
            raise CorpusParseError(path, line_no, "concepts must be a list of strings")
        if eid in seen:
            raise DuplicateIdError(
                f"{path}:{line_no}: duplicate entity id {eid!r} "
                f"(first seen at line {seen[eid]})"
            )
        seen[eid] = line_no
        try:
            entities.append(
                EntityRecord(
                    id=eid,
                    name=name,
                    viewtimes=viewtimes,
                    concepts=_dedup_keep_first(concepts),
                )
            )
        except ValidationError as exc:
            raise CorpusParseError(path, line_no, str(exc))
    return entities


def load_images(path: str | Path) -> list[ImageRef]:
    path = Path(path)
    images: list[ImageRef] = []
    seen: dict[str, int] = {}
    for line_no, rec in _iter_jsonl(path):
        iid = _require(rec, "id", path, line_no)
        locator = _require(rec, "locator", path, line_no)
        source = rec.get("source_entity_id")
        if not isinstance(iid, str) or not isinstance(locator, str):
            raise CorpusParseError(path, line_no, "id and locator must be strings")
        if source is not None and not isinstance(source, str):
            raise CorpusParseError(path, line_no, "source_entity_id must be a string")
        if iid in seen:
            raise DuplicateIdError(
                f"{path}:{line_no}: duplicate image id {iid!r} "
                f"(first seen at line {seen[iid]})"
            )
        seen[iid] = line_no
        try:
            images.append(ImageRef(id=iid, locator=locator, source_entity_id=source))
        except ValidationError as exc:
            raise CorpusParseError(path, line_no, str(exc))
    return images


def load_pairs(path: str | Path) -> list[PairRecord]:
    path = Path(path)
    pairs: list[PairRecord] = []
    for line_no, rec in _iter_jsonl(path):
        entity_id = _require(rec, "entity_id", path, line_no)
        image_id = _require(rec, "image_id", path, line_no)
        label = _require(rec, "label", path, line_no)
        if not isinstance(entity_id, str) or not isinstance(image_id, str):
            raise CorpusParseError(path, line_no, "entity_id/image_id must be strings")
        if not isinstance(label, bool):
            raise CorpusParseError(path, line_no, "label must be a boolean")
        pairs.append(PairRecord(entity_id=entity_id, image_id=image_id, label=label))
    return pairs


def load_corpus(
    entities_path: str | Path,
    images_path: str | Path,
    pairs_path: str | Path | None = None,
) -> Corpus:
    """Load and cross-validate a corpus from JSONL files.

    Raises ``CorpusParseError`` (with file and line), ``DuplicateIdError``,
    or ``DanglingReferenceError`` when pairs reference unknown ids.
    """
    entities = load_entities(entities_path)
    images = load_images(images_path)
    pairs = load_pairs(pairs_path) if pairs_path is not None else []

    entity_ids = {e.id for e in entities}
    image_ids = {i.id for i in images}
    for img in images:
        if img.source_entity_id is not None and img.source_entity_id not in entity_ids:
            raise DanglingReferenceError(
                f"image {img.id!r} references unknown entity {img.source_entity_id!r}"
            )
    for pair in pairs:
        if pair.entity_id not in entity_ids:
            raise DanglingReferenceError(
                f"pair references unknown entity {pair.entity_id!r}"
            )
        if pair.image_id not in image_ids:
            raise DanglingReferenceError(
                f"pair references unknown image {pair.image_id!r}"
            )
    return Corpus(entities=tuple(entities), images=tuple(images), pairs=tuple(pairs))


def write_entities(path: str | Path, entities: Iterable[EntityRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entities:
            fh.write(
                json.dumps(
                    {
                        "id": e.id,
                        "name": e.name,
                        "viewtimes": e.viewtimes,
                        "concepts": list(e.concepts),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def write_images(path: str | Path, images: Iterable[ImageRef]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for img in images:
            record = {"id": img.id, "locator": img.locator}
            if img.source_entity_id is not None:
                record["source_entity_id"] = img.source_entity_id
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_pairs(path: str | Path, pairs: Iterable[PairRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"entity_id": p.entity_id, "image_id": p.image_id, "label": p.label},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_linking(path: str | Path) -> dict[str, list[str]]:
    """Read linker output: image id -> linked entity names."""
    path = Path(path)
    linking: dict[str, list[str]] = {}
    for line_no, rec in _iter_jsonl(path):
        image_id = _require(rec, "image_id", path, line_no)
        linked = rec.get("linked_entities", [])
        if not isinstance(image_id, str):
            raise CorpusParseError(path, line_no, "image_id must be a string")
        if not isinstance(linked, list) or any(
            not isinstance(x, str) for x in linked
        ):
            raise CorpusParseError(
                path, line_no, "linked_entities must be a list of strings"
            )
        linking[image_id] = linked
    return linking


def select_long_tailed(
    corpus_or_entities: Corpus | Sequence[EntityRecord],
    threshold: int = LONG_TAIL_VIEWTIMES,
) -> list[EntityRecord]:
    """Entities with viewtimes strictly below ``threshold``, input order kept."""
    entities = (
        corpus_or_entities.entities
        if isinstance(corpus_or_entities, Corpus)
        else corpus_or_entities
    )
    return [e for e in entities if e.viewtimes < threshold]


def select_common(
    corpus_or_entities: Corpus | Sequence[EntityRecord],
    threshold: int = COMMON_VIEWTIMES,
) -> list[EntityRecord]:
    """Entities with viewtimes strictly above ``threshold`` (the inverse filter)."""
    entities = (
        corpus_or_entities.entities
        if isinstance(corpus_or_entities, Corpus)
        else corpus_or_entities
    )
    return [e for e in entities if e.viewtimes > threshold]


def select_concepts(entity: EntityRecord, strategy: ConceptStrategy) -> list[str]:
    """Apply a concept-selection strategy, preserving list order."""
    if strategy is ConceptStrategy.NONE:
        return []
    if strategy is ConceptStrategy.BLC:
        return [c for c in entity.concepts if is_blc(c)]
    return list(entity.concepts)


def compute_concept_stats(entities: Sequence[EntityRecord]) -> ConceptStats:
    """Count, per concept, how many entities carry it.

    Computed over the evaluation corpus only; never feed training entities
    through this.
    """
    if not entities:
        raise EmptyInputError("cannot compute concept stats over zero entities")
    counts: dict[str, int] = {}
    for entity in entities:
        for concept in entity.concepts:
            counts[concept] = counts.get(concept, 0) + 1
    return ConceptStats(ents=len(entities), counts=counts)


def label_by_linking(
    linker_entities: Sequence[str],
    entity_name: str,
    case_insensitive: bool = False,
) -> bool:
    """True iff the entity name appears in the linker output.

    Exact string equality after whitespace trimming; matching is
    case-sensitive unless ``case_insensitive`` is set.
    """
    target = entity_name.strip()
    if case_insensitive:
        target = target.casefold()
        return any(link.strip().casefold() == target for link in linker_entities)
    return any(link.strip() == target for link in linker_entities)


def split_dataset(
    pairs: Sequence[PairRecord], seed: int
) -> tuple[list[PairRecord], list[PairRecord], list[PairRecord]]:
    """Seeded uniform-random 8:1:1 split into (train, validation, test).

    Validation and test each get (N - floor(0.8 N)) // 2 pairs; any odd
    remainder goes to train, so N=25,166 yields 20,132/2,517/2,517.
    """
    if not pairs:
        raise EmptyInputError("cannot split an empty pair list")
    indices = list(range(len(pairs)))
    random.Random(seed).shuffle(indices)
    shuffled = [pairs[i] for i in indices]

    n = len(pairs)
    side = (n - (8 * n) // 10) // 2
    n_train = n - 2 * side
    train = shuffled[:n_train]
    validation = shuffled[n_train : n_train + side]
    test = shuffled[n_train + side :]
    return train, validation, test
