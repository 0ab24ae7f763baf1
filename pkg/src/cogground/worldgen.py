"""Deterministic synthetic corpora for desk-scale experiments.

Entities come in homonym twin pairs: two entities share a surface name
but have mostly different concepts (sharing only a small overlapping
fraction, like two people with the same name who are both "person" but
differ in occupation). Each entity has one true image; its twin's image
serves as the hard distractor. That reproduces, at token scale, the
failure mode where grounding by name alone cannot separate referents
while concept-augmented text can.
"""

from __future__ import annotations

import random

from .corpus import Corpus, EntityRecord, ImageRef, PairRecord
from .errors import ValidationError
from .scorer import SyntheticWorldConfig

GIVEN_NAMES = (
    "arden", "brisa", "cato", "dareon", "elio", "fenna", "gorun", "halvar",
    "isolde", "joren", "kaela", "lirum", "maren", "nyssa", "orin", "petra",
    "quillon", "rosmund", "severin", "talia",
)

SURNAMES = (
    "ashgrove", "blackmere", "calloway", "dunmore", "eastfield", "farrow",
    "gildhall", "hollowbrook", "ironwood", "jasperline", "kestrelgate",
    "lockridge", "marshwood", "northgale", "oakhurst", "pellwater",
    "quarryman", "ravenhall", "stonefen", "thornbury",
)

BLC_CONCEPTS = (
    "person", "animal", "plant", "place", "tool", "vehicle", "building",
    "device", "insect", "bird", "fish", "mineral", "fabric", "beverage",
    "machine", "garment", "vessel", "monument",
)

FINE_ADJECTIVES = (
    "alpine", "coastal", "medieval", "nocturnal", "ceramic", "electric",
    "folk", "tropical", "arctic", "urban", "rural", "antique", "baroque",
    "wild", "domestic", "sacred", "industrial", "miniature", "giant",
    "hollow",
)

FINE_NOUNS = (
    "musician", "politician", "antelope", "fortress", "instrument",
    "butterfly", "festival", "engine", "pottery", "script", "reservoir",
    "orchard", "glacier", "temple", "workshop", "archive", "lantern",
    "viaduct", "grove", "mill",
)


def _power_law_viewtimes(rng: random.Random) -> int:
    # Pareto tail: mostly small, occasionally enormous click counts.
    return int(100 * (1.0 + rng.paretovariate(1.1)))


def _fine_concept(rng: random.Random, taken: set[str]) -> str:
    while True:
        concept = f"{rng.choice(FINE_ADJECTIVES)} {rng.choice(FINE_NOUNS)}"
        if concept not in taken:
            return concept


def _concepts_for(
    rng: random.Random,
    shared: list[str],
    total: int,
    forbidden: set[str],
) -> tuple[str, ...]:
    concepts = list(shared)
    taken = set(concepts) | forbidden
    if total >= 4:
        extra_blc = [c for c in BLC_CONCEPTS if c not in taken]
        if extra_blc:
            pick = rng.choice(extra_blc)
            concepts.append(pick)
            taken.add(pick)
    while len(concepts) < total:
        concept = _fine_concept(rng, taken)
        concepts.append(concept)
        taken.add(concept)
    return tuple(concepts)


def make_synthetic_corpus(
    config: SyntheticWorldConfig,
    n_entities: int = 600,
    concepts_min: int = 2,
    concepts_max: int = 6,
    include_distractors: bool = True,
) -> Corpus:
    """Build a labeled world of homonym twins.

    Every entity gets one true image (positive pair). With
    ``include_distractors``, its twin's image is added as a labeled
    negative pair; twins share ``max(1, round(distractor_overlap * total))``
    concepts, always including the broad category, so the distractor has
    partial concept overlap with the target.
    """
    if n_entities < 2:
        raise ValidationError("a synthetic world needs at least two entities")
    if not 1 <= concepts_min <= concepts_max:
        raise ValidationError("concept count bounds must satisfy 1 <= min <= max")
    rng = random.Random(config.seed)
    entities: list[EntityRecord] = []
    images: list[ImageRef] = []
    pairs: list[PairRecord] = []

    for pair_index in range((n_entities + 1) // 2):
        name = f"{rng.choice(GIVEN_NAMES)} {rng.choice(SURNAMES)}"
        category = rng.choice(BLC_CONCEPTS)
        twin_ids = []
        twin_concepts: list[tuple[str, ...]] = []
        for member in range(2):
            index = 2 * pair_index + member
            if index >= n_entities:
                break
            total = rng.randint(concepts_min, concepts_max)
            if member == 0:
                concepts = _concepts_for(rng, [category], total, set())
            else:
                prior = twin_concepts[0]
                n_shared = max(1, round(config.distractor_overlap * min(total, len(prior))))
                shared = list(prior[: min(n_shared, total)])
                concepts = _concepts_for(rng, shared, total, set(prior) - set(shared))
            entity_id = f"ent-{index:05d}"
            entities.append(
                EntityRecord(
                    id=entity_id,
                    name=name,
                    viewtimes=_power_law_viewtimes(rng),
                    concepts=concepts,
                )
            )
            images.append(
                ImageRef(
                    id=f"img-{index:05d}",
                    locator=f"synthetic://image/{index:05d}",
                    source_entity_id=entity_id,
                )
            )
            twin_ids.append(index)
            twin_concepts.append(concepts)

        for index in twin_ids:
            pairs.append(
                PairRecord(
                    entity_id=f"ent-{index:05d}",
                    image_id=f"img-{index:05d}",
                    label=True,
                )
            )
        if include_distractors and len(twin_ids) == 2:
            first, second = twin_ids
            pairs.append(
                PairRecord(
                    entity_id=f"ent-{first:05d}",
                    image_id=f"img-{second:05d}",
                    label=False,
                )
            )
            pairs.append(
                PairRecord(
                    entity_id=f"ent-{second:05d}",
                    image_id=f"img-{first:05d}",
                    label=False,
                )
            )

    return Corpus(entities=tuple(entities), images=tuple(images), pairs=tuple(pairs))
