import math
import random

import pytest
from hypothesis import given, strategies as st

from cogground.corpus import ConceptStats, ConceptStrategy, EntityRecord, ImageRef
from cogground.errors import (
    ContributionDomainError,
    EmptyConceptListError,
    UnknownConceptError,
    ValidationError,
)
from cogground.fusion import (
    EvidenceItem,
    GroundingVerdict,
    concat_text,
    contribution,
    evidence_fusion,
    fuse_probabilities,
    ground_pair,
    rank_candidates,
    stage1,
)

from conftest import MappingScorer


IMAGE = ImageRef(id="i1", locator="file:///1.jpg", source_entity_id="e1")


def entity(concepts=("singer", "actor"), name="Jay Chou", eid="e1"):
    return EntityRecord(id=eid, name=name, viewtimes=100, concepts=tuple(concepts))


class TestConcatText:
    def test_worked_example(self):
        assert (
            concat_text("Jay Chou", ["singer", "actor", "director"])
            == "Jay Chou, singer, actor, director"
        )

    def test_no_concepts(self):
        assert concat_text("X", []) == "X"

    def test_two_concepts(self):
        assert (
            concat_text("Klipspringer", ["animal", "antelope"])
            == "Klipspringer, animal, antelope"
        )

    def test_empty_name_rejected(self):
        with pytest.raises(ValidationError):
            concat_text("", ["a"])


class TestStage1:
    def test_accept_above_threshold(self):
        scorer = MappingScorer(default=0.7)
        prediction, accept = stage1(entity(), IMAGE, scorer, threshold=0.5)
        assert prediction == 0.7 and accept

    def test_accept_at_exact_threshold(self):
        scorer = MappingScorer(default=0.5)
        _, accept = stage1(entity(), IMAGE, scorer, threshold=0.5)
        assert accept

    def test_reject_below_threshold(self):
        scorer = MappingScorer(default=0.49)
        _, accept = stage1(entity(), IMAGE, scorer, threshold=0.5)
        assert not accept

    def test_scores_the_concatenated_text(self):
        scorer = MappingScorer(by_text={"Jay Chou, singer, actor": 0.9}, default=0.0)
        prediction, _ = stage1(entity(), IMAGE, scorer, ConceptStrategy.ALL)
        assert prediction == 0.9

    def test_strategy_none_scores_bare_name(self):
        scorer = MappingScorer(by_text={"Jay Chou": 0.8}, default=0.0)
        prediction, _ = stage1(entity(), IMAGE, scorer, ConceptStrategy.NONE)
        assert prediction == 0.8

    @pytest.mark.parametrize("threshold", [0.0, 1.0, -0.2, 1.5])
    def test_threshold_outside_open_interval_rejected(self, threshold):
        with pytest.raises(ValidationError):
            stage1(entity(), IMAGE, MappingScorer(), threshold=threshold)


class TestContribution:
    def test_below_base_is_one(self):
        assert contribution(5, 1000) == 1.0

    def test_boundary_continuity_at_base(self):
        assert contribution(10, 1000) == 1.0

    def test_num_equals_ents(self):
        assert contribution(100, 100) == pytest.approx(0.494949494949495, abs=1e-12)

    def test_large_corpus_value(self):
        # (1/log10(1000) - 1/25166) / (1 - 1/25166) = 25163/75495
        assert contribution(1000, 25166) == pytest.approx(
            25163 / 75495, abs=1e-15
        )

    def test_custom_log_base(self):
        assert contribution(2, 4, log_base=2) == pytest.approx((1 - 0.25) / 0.75)
        assert contribution(1, 4, log_base=2) == 1.0

    @pytest.mark.parametrize(
        "num,ents", [(0, 10), (11, 10), (5, 1), (-3, 10)]
    )
    def test_domain_errors(self, num, ents):
        with pytest.raises(ContributionDomainError):
            contribution(num, ents)

    def test_log_base_below_two_rejected(self):
        with pytest.raises(ContributionDomainError):
            contribution(5, 10, log_base=1)

    @given(ents=st.integers(min_value=10, max_value=10**6), data=st.data())
    def test_in_unit_interval_and_non_increasing(self, ents, data):
        num1 = data.draw(st.integers(min_value=1, max_value=ents))
        num2 = data.draw(st.integers(min_value=num1, max_value=ents))
        c1 = contribution(num1, ents)
        c2 = contribution(num2, ents)
        assert 0.0 < c1 <= 1.0 and 0.0 < c2 <= 1.0
        assert c2 <= c1 + 1e-12


class TestFuseProbabilities:
    def test_worked_example(self):
        assert fuse_probabilities([0.8, 0.6], [1.0, 0.5]) == pytest.approx(0.55)

    def test_single_concept_identity(self):
        assert fuse_probabilities([0.37], [1.0]) == pytest.approx(0.37)

    def test_all_zero(self):
        assert fuse_probabilities([0.0, 0.0], [1.0, 0.8]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyConceptListError):
            fuse_probabilities([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            fuse_probabilities([0.5], [1.0, 0.5])

    def test_matches_loop_oracle_on_random_instances(self):
        rng = random.Random(1234)
        for _ in range(300):
            n = rng.randint(1, 20)
            ps = [rng.random() for _ in range(n)]
            cons = [rng.uniform(1e-9, 1.0) for _ in range(n)]
            expected = 0.0
            for p, c in zip(ps, cons):
                expected += p * c
            expected /= n
            assert abs(fuse_probabilities(ps, cons) - expected) <= 1e-12

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0, max_value=1),
                st.floats(min_value=1e-9, max_value=1),
            ),
            min_size=1,
            max_size=20,
        )
    )
    def test_result_in_unit_interval(self, items):
        ps = [p for p, _ in items]
        cons = [c for _, c in items]
        assert 0.0 <= fuse_probabilities(ps, cons) <= 1.0


class TestEvidenceFusion:
    STATS = ConceptStats(ents=1000, counts={"singer": 100, "actor": 5})

    def test_builds_weighted_evidence(self):
        scorer = MappingScorer(by_text={"singer": 0.8, "actor": 0.6}, default=0.0)
        evidence, p_h, accept = evidence_fusion(
            entity(), IMAGE, scorer, self.STATS, ConceptStrategy.ALL, 0.5
        )
        assert [item.concept for item in evidence] == ["singer", "actor"]
        con_singer = contribution(100, 1000)
        assert evidence[0].weighted == pytest.approx(0.8 * con_singer)
        assert evidence[1].weighted == pytest.approx(0.6 * 1.0)
        assert p_h == pytest.approx((0.8 * con_singer + 0.6) / 2)
        assert accept == (p_h >= 0.5)

    def test_unknown_concept_rejected(self):
        scorer = MappingScorer(default=0.5)
        stats = ConceptStats(ents=10, counts={"singer": 2})
        with pytest.raises(UnknownConceptError):
            evidence_fusion(entity(), IMAGE, scorer, stats, ConceptStrategy.ALL, 0.5)

    def test_empty_selection_rejected(self):
        with pytest.raises(EmptyConceptListError):
            evidence_fusion(
                entity(), IMAGE, MappingScorer(), self.STATS, ConceptStrategy.NONE, 0.5
            )

    def test_concept_scored_as_bare_text(self):
        calls = []

        class SpyScorer(MappingScorer):
            def score(self, request):
                calls.append(request.text)
                return super().score(request)

        evidence_fusion(
            entity(), IMAGE, SpyScorer(default=0.9), self.STATS, ConceptStrategy.ALL, 0.5
        )
        assert calls == ["singer", "actor"]

    def test_matches_independent_loop_oracle_on_random_instances(self):
        rng = random.Random(555)
        for _ in range(200):
            n_concepts = rng.randint(1, 20)
            concepts = tuple(f"concept {j}" for j in range(n_concepts))
            ents = rng.randint(50, 5000)
            stats = ConceptStats(
                ents=ents,
                counts={c: rng.randint(1, ents) for c in concepts},
            )
            scores = {c: rng.random() for c in concepts}
            subject = entity(concepts=concepts)
            scorer = MappingScorer(by_text=scores)
            _, p_h, accept = evidence_fusion(
                subject, IMAGE, scorer, stats, ConceptStrategy.ALL, 0.5
            )
            total = 0.0
            for c in concepts:
                num = stats.counts[c]
                if num < 10:
                    con = 1.0
                else:
                    con = (1 / math.log10(num) - 1 / ents) / (1 - 1 / ents)
                total += scores[c] * con
            expected = total / n_concepts
            assert abs(p_h - expected) <= 1e-12
            assert accept == (p_h >= 0.5)


class TestEvidenceItem:
    def test_bounds_validated(self):
        with pytest.raises(ValidationError):
            EvidenceItem(concept="x", p_e=1.2, contribution=1.0, weighted=1.2)
        with pytest.raises(ValidationError):
            EvidenceItem(concept="x", p_e=0.5, contribution=0.0, weighted=0.0)


class TestGroundPair:
    STATS = ConceptStats(ents=1000, counts={"singer": 100, "actor": 5})

    def test_stage1_accept_short_circuits(self):
        scorer = MappingScorer(default=0.9)
        verdict = ground_pair(entity(), IMAGE, scorer, self.STATS)
        assert verdict.stage1_accept and verdict.final_label
        assert verdict.evidence == () and verdict.p_h is None

    def test_stage2_rescues_rejection(self):
        scorer = MappingScorer(
            by_text={"Jay Chou, singer, actor": 0.3, "singer": 0.9, "actor": 0.9}
        )
        verdict = ground_pair(entity(), IMAGE, scorer, self.STATS)
        assert not verdict.stage1_accept
        assert verdict.stage2_accept and verdict.final_label
        assert verdict.p_h == pytest.approx(
            (0.9 * contribution(100, 1000) + 0.9) / 2
        )

    def test_both_stages_reject(self):
        scorer = MappingScorer(default=0.2)
        verdict = ground_pair(entity(), IMAGE, scorer, self.STATS)
        assert not verdict.final_label
        assert verdict.stage2_accept is False
        assert len(verdict.evidence) == 2

    def test_conceptless_entity_skips_stage2(self):
        bare = entity(concepts=(), name="Bare")
        verdict = ground_pair(bare, IMAGE, MappingScorer(default=0.2), self.STATS)
        assert not verdict.final_label
        assert verdict.stage2_accept is None and verdict.evidence == ()

    def test_use_stage2_false_keeps_rejection(self):
        scorer = MappingScorer(default=0.2)
        verdict = ground_pair(entity(), IMAGE, scorer, self.STATS, use_stage2=False)
        assert not verdict.final_label and verdict.stage2_accept is None

    def test_separate_stage2_threshold(self):
        scorer = MappingScorer(
            by_text={"Jay Chou, singer, actor": 0.3, "singer": 0.45, "actor": 0.45}
        )
        strict = ground_pair(entity(), IMAGE, scorer, self.STATS)
        lenient = ground_pair(
            entity(), IMAGE, scorer, self.STATS, stage2_threshold=0.3
        )
        assert not strict.final_label
        assert lenient.final_label

    @given(
        s1=st.floats(min_value=0, max_value=1),
        s2=st.floats(min_value=0, max_value=1),
        threshold=st.floats(min_value=0.01, max_value=0.99),
    )
    def test_stage1_accepts_are_always_final_accepts(self, s1, s2, threshold):
        scorer = MappingScorer(
            by_text={"Jay Chou, singer, actor": s1, "singer": s2, "actor": s2}
        )
        verdict = ground_pair(
            entity(), IMAGE, scorer, self.STATS, threshold=threshold
        )
        if verdict.stage1_accept:
            assert verdict.final_label
        assert verdict.final_label == (
            verdict.stage1_accept or verdict.stage2_accept is True
        )


class TestGroundingVerdictInvariants:
    def test_stage2_fields_forbidden_after_stage1_accept(self):
        with pytest.raises(ValidationError):
            GroundingVerdict(
                entity_id="e",
                image_id="i",
                stage1_prediction=0.9,
                stage1_accept=True,
                evidence=(EvidenceItem("c", 0.5, 1.0, 0.5),),
                p_h=0.5,
                stage2_accept=True,
                final_label=True,
            )

    def test_final_label_consistency_enforced(self):
        with pytest.raises(ValidationError):
            GroundingVerdict(
                entity_id="e",
                image_id="i",
                stage1_prediction=0.9,
                stage1_accept=True,
                final_label=False,
            )

    def test_round_trip_through_dict(self):
        verdict = GroundingVerdict(
            entity_id="e",
            image_id="i",
            stage1_prediction=0.3,
            stage1_accept=False,
            evidence=(EvidenceItem("c", 0.9, 1.0, 0.9),),
            p_h=0.9,
            stage2_accept=True,
            final_label=True,
        )
        assert GroundingVerdict.from_dict(verdict.to_dict()) == verdict


class TestRankCandidates:
    def candidates(self):
        return [
            ImageRef(id="a", locator="l/a", source_entity_id="e1"),
            ImageRef(id="b", locator="l/b", source_entity_id="e1"),
            ImageRef(id="c", locator="l/c", source_entity_id="e1"),
        ]

    def test_sorted_descending(self):
        scorer = MappingScorer(
            by_pair={
                ("Jay Chou, singer, actor", "a"): 0.9,
                ("Jay Chou, singer, actor", "b"): 0.1,
                ("Jay Chou, singer, actor", "c"): 0.5,
            }
        )
        ranked = rank_candidates(entity(), self.candidates(), scorer)
        assert [img.id for img, _ in ranked] == ["a", "c", "b"]

    def test_ties_broken_by_image_id(self):
        scorer = MappingScorer(default=0.5)
        ranked = rank_candidates(entity(), list(reversed(self.candidates())), scorer)
        assert [img.id for img, _ in ranked] == ["a", "b", "c"]

    def test_output_is_permutation(self):
        scorer = MappingScorer(default=0.5)
        candidates = self.candidates()
        ranked = rank_candidates(entity(), candidates, scorer)
        assert sorted(img.id for img, _ in ranked) == sorted(c.id for c in candidates)

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValidationError):
            rank_candidates(entity(), [], MappingScorer())
