import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_corpus
from msic.data import PatientRecord, Visit
from msic.errors import ParameterError
from msic.privacy import (FlatRecord, attribute_attack, common_items, jaccard_distance,
                          membership_attack, nearest_distances)


def distinct_records(seed, n, prefix, n_codes=(30, 40, 20), density=0.15):
    """Random records; with this many codes exact duplicates are vanishingly rare."""
    rng = np.random.default_rng(seed)
    return [PatientRecord(f"{prefix}{j}", tuple(
        Visit.of(*(np.flatnonzero(rng.random(k) < density) for k in n_codes))
        for _ in range(int(rng.integers(1, 4))))) for j in range(n)]


class TestJaccard:
    def test_identical(self):
        assert jaccard_distance({("symptom", 1)}, {("symptom", 1)}) == 0.0

    def test_disjoint(self):
        assert jaccard_distance({"a"}, {"b"}) == 1.0

    def test_hand_case(self):
        assert jaccard_distance({"a", "b"}, {"b", "c"}) == pytest.approx(1 - 1 / 3)

    def test_empty_pair(self):
        assert jaccard_distance(set(), set()) == 0.0

    def test_flat_record(self):
        rec = PatientRecord("x", (Visit.of([1], [2]), Visit.of([1], [], [0])))
        assert FlatRecord.of(rec).items == {("symptom", 1), ("diagnosis", 2), ("medication", 0)}

    @settings(max_examples=200, deadline=None)
    @given(*(st.frozensets(st.integers(0, 8)) for _ in range(3)))
    def test_metric_axioms(self, a, b, c):
        assert jaccard_distance(a, b) == jaccard_distance(b, a)
        assert jaccard_distance(a, c) <= jaccard_distance(a, b) + jaccard_distance(b, c) + 1e-12
        assert 0.0 <= jaccard_distance(a, b) <= 1.0

    def test_kernel_distances_match_sets(self):
        q, s = distinct_records(0, 10, "q"), distinct_records(1, 20, "s")
        idx, dist = nearest_distances(q, s)
        for r, i, d in zip(q, idx, dist):
            all_d = [jaccard_distance(FlatRecord.of(r), FlatRecord.of(x)) for x in s]
            assert d == pytest.approx(min(all_d)) and i == all_d.index(min(all_d))


class TestMembership:
    def test_copies_give_perfect_accuracy(self):
        train, test = distinct_records(2, 200, "tr"), distinct_records(3, 200, "te")
        assert min(nearest_distances(test, train)[1]) > 0  # precondition of the derivation
        result = membership_attack(train, test, list(train), seed=0)
        assert result.accuracy == 1.0 and result.f1 == 1.0 and result.config["threshold"] == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_independent_synthesizer_is_chance(self, seed):
        train = distinct_records(10 + seed, 500, "tr")
        test = distinct_records(20 + seed, 500, "te")
        synth = distinct_records(30 + seed, 500, "sy")
        assert abs(membership_attack(train, test, synth, seed=seed).accuracy - 0.5) <= 0.1

    def test_deterministic(self):
        c = random_corpus(1, n_patients=40)
        a = membership_attack(c.records[:20], c.records[20:], random_corpus(2).records, seed=4)
        b = membership_attack(c.records[:20], c.records[20:], random_corpus(2).records, seed=4)
        assert a == b

    def test_fixed_threshold(self):
        train, test = distinct_records(2, 30, "tr"), distinct_records(3, 30, "te")
        result = membership_attack(train, test, train, threshold=0.0)
        assert result.accuracy == 1.0 and not result.config["calibrated"]

    def test_empty_synthetic(self):
        with pytest.raises(ParameterError):
            membership_attack(distinct_records(0, 5, "a"), distinct_records(1, 5, "b"), [])

    def test_synthetic_order_invariance_without_ties(self):
        train, test = distinct_records(4, 50, "tr"), distinct_records(5, 50, "te")
        synth = distinct_records(6, 80, "sy")
        a = membership_attack(train, test, synth, seed=1)
        b = membership_attack(train, test, synth[::-1], seed=1)
        assert (a.accuracy, a.f1) == (b.accuracy, b.f1)


def unique_profile_records(seed, n):
    """Each patient carries a distinct pair of very frequent codes plus random rare ones."""
    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a in range(6) for b in range(a + 1, 6)]
    records = []
    for j in range(n):
        a, b = pairs[j % len(pairs)]
        visits = (Visit.of([a, b, 6 + j // len(pairs)], np.flatnonzero(rng.random(40) < 0.1),
                           np.flatnonzero(rng.random(20) < 0.1)),)
        records.append(PatientRecord(f"u{j}", visits))
    return records


class TestAttribute:
    def test_copies_recover_everything_when_profiles_are_unique(self):
        train = unique_profile_records(0, 30)
        sizes = {"symptom": 30, "diagnosis": 40, "medication": 20}
        mask = common_items(train, sizes, 0.2)
        offsets = {"symptom": 0, "diagnosis": 30, "medication": 70}
        profiles = [frozenset(offsets[k] + i for k, i in FlatRecord.of(r).items if mask[offsets[k] + i])
                    for r in train]
        # Precondition of the derivation: the self-copy is the unique best neighbour.
        assert len(set(profiles)) == len(profiles)
        assert attribute_attack(train, list(train), 0.2, sizes=sizes).f1 == 1.0

    def test_empty_sensitive_sets_score_zero(self):
        train = distinct_records(1, 20, "tr")
        sizes = {"symptom": 30, "diagnosis": 40, "medication": 20}
        mask = common_items(train, sizes, 0.2)
        offsets = {"symptom": 0, "diagnosis": 30, "medication": 70}
        synth = []
        for j, r in enumerate(train):
            keep = lambda k, v: [i for i in v.events(k).indices if mask[offsets[k] + i]]  # noqa: E731
            synth.append(PatientRecord(f"s{j}", tuple(
                Visit.of(keep("symptom", v), keep("diagnosis", v), keep("medication", v)) for v in r.visits)))
        assert attribute_attack(train, synth, 0.2, sizes=sizes).f1 == 0.0

    def test_baseline_and_determinism(self):
        c = random_corpus(3, n_patients=60)
        a = attribute_attack(c.records[:40], random_corpus(4).records, 0.2, seed=1,
                             test_records=c.records[40:], sizes=c.sizes)
        b = attribute_attack(c.records[:40], random_corpus(4).records, 0.2, seed=1,
                             test_records=c.records[40:], sizes=c.sizes)
        assert a == b and a.baseline_f1 is not None and a.withstands in (True, False)

    def test_hand_case_tie_breaking(self):
        sizes = {"symptom": 5, "diagnosis": 0, "medication": 0}
        train = [PatientRecord("t", (Visit.of([0, 1, 4]),)), PatientRecord("u", (Visit.of([0, 2]),))]
        # Symptom 0 is the only common item (top 20% of 5 items).
        synth = [PatientRecord("a", (Visit.of([3]),)), PatientRecord("b", (Visit.of([0, 1]),)),
                 PatientRecord("c", (Visit.of([0, 4]),))]
        # Both targets pick "b" (first with overlap 1); predictions {1}. Truth {1,4} and {2}.
        # TP=1, FP=1, FN=2 -> F1 = 2/(2+1+2).
        assert attribute_attack(train, synth, 0.2, sizes=sizes).f1 == pytest.approx(2 / 5)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 0.001])
    def test_degenerate_fraction(self, fraction):
        with pytest.raises(ParameterError):
            attribute_attack(distinct_records(0, 5, "a"), distinct_records(1, 5, "b"), fraction,
                             sizes={"symptom": 30, "diagnosis": 40, "medication": 20})
