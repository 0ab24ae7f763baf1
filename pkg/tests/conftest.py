import json

import pytest

from cogground.corpus import Corpus, EntityRecord, ImageRef, PairRecord
from cogground.scorer import Scorer, ScoreRequest, ScoreResult


class MappingScorer(Scorer):
    """Test double returning a fixed prediction per (text, image id).

    Lookup order: (text, image_id), then text alone, then the default.
    """

    def __init__(self, by_text=None, by_pair=None, default=0.5):
        self.by_text = by_text or {}
        self.by_pair = by_pair or {}
        self.calls = 0

        self.default = default

    def score(self, request: ScoreRequest) -> ScoreResult:
        self.calls += 1
        key = (request.text, request.image.id)
        if key in self.by_pair:
            return ScoreResult(self.by_pair[key])
        if request.text in self.by_text:
            return ScoreResult(self.by_text[request.text])
        return ScoreResult(self.default)


class FailingScorer(Scorer):
    """Raises on a chosen text, scores everything else at a constant."""

    def __init__(self, poison_text, value=0.5):
        self.poison_text = poison_text
        self.value = value

    def score(self, request: ScoreRequest) -> ScoreResult:
        if request.text == self.poison_text:
            raise RuntimeError(f"poisoned text {request.text!r}")
        return ScoreResult(self.value)


@pytest.fixture
def tiny_corpus() -> Corpus:
    entities = (
        EntityRecord(
            id="e1",
            name="Jay Chou",
            viewtimes=5_000_000,
            concepts=("singer", "actor", "director"),
        ),
        EntityRecord(
            id="e2",
            name="Klipspringer",
            viewtimes=4_200,
            concepts=("animal", "antelope"),
        ),
        EntityRecord(id="e3", name="Aristoxenus", viewtimes=880, concepts=("person",)),
        EntityRecord(id="e4", name="Bare Entity", viewtimes=10, concepts=()),
    )
    images = (
        ImageRef(id="i1", locator="file:///img/1.jpg", source_entity_id="e1"),
        ImageRef(id="i2", locator="file:///img/2.jpg", source_entity_id="e2"),
        ImageRef(id="i3", locator="file:///img/3.jpg", source_entity_id="e3"),
        ImageRef(id="i4", locator="file:///img/4.jpg", source_entity_id="e4"),
    )
    pairs = (
        PairRecord("e1", "i1", True),
        PairRecord("e2", "i2", True),
        PairRecord("e3", "i3", True),
        PairRecord("e4", "i4", True),
        PairRecord("e2", "i1", False),
    )
    return Corpus(entities=entities, images=images, pairs=pairs)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@pytest.fixture
def corpus_files(tmp_path, tiny_corpus):
    entities = tmp_path / "entities.jsonl"
    images = tmp_path / "images.jsonl"
    pairs = tmp_path / "pairs.jsonl"
    write_jsonl(
        entities,
        [
            {
                "id": e.id,
                "name": e.name,
                "viewtimes": e.viewtimes,
                "concepts": list(e.concepts),
            }
            for e in tiny_corpus.entities
        ],
    )
    write_jsonl(
        images,
        [
            {"id": i.id, "locator": i.locator, "source_entity_id": i.source_entity_id}
            for i in tiny_corpus.images
        ],
    )
    write_jsonl(
        pairs,
        [
            {"entity_id": p.entity_id, "image_id": p.image_id, "label": p.label}
            for p in tiny_corpus.pairs
        ],
    )
    return entities, images, pairs
