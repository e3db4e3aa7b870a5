import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_corpus, tiny_vocabularies
from msic.data import Corpus, PatientRecord, Visit, Vocabulary
from msic.errors import MetricUndefined, ParameterError
from msic.evaluation import (MetricReport, UtilityTask, bleu, corpus_bleu, dimwise_fidelity,
                             evaluate_corpora, frequency_profile, hybrid, mean_rouge, r_squared,
                             rouge, set_scores, similarity_score, utility_eval)

SCOPES = ("unigram", "same_visit_bigram", "sequential_bigram")


class TestSimilarity:
    @pytest.mark.parametrize("scope", SCOPES)
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_recount_oracle(self, scope, seed):
        real = random_corpus(seed, n_patients=int(10 + 6 * seed))
        synth = random_corpus(seed + 100, n_patients=25)
        expected = oracles.r2(oracles.profile(real, scope), oracles.profile(synth, scope))
        assert similarity_score(real, synth, scope) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("kinds", [("symptom",), ("diagnosis", "medication")])
    def test_kind_subsets_match_oracle(self, kinds):
        real, synth = random_corpus(1), random_corpus(2)
        for scope in SCOPES:
            expected = oracles.r2(oracles.profile(real, scope, kinds), oracles.profile(synth, scope, kinds))
            assert similarity_score(real, synth, scope, kinds) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("scope", SCOPES)
    def test_copy_scores_one(self, scope):
        c = random_corpus(3)
        assert similarity_score(c, c, scope) == 1.0

    def test_two_patient_hand_count(self, vocabs):
        real = Corpus(vocabs, [
            PatientRecord("a", (Visit.of([0, 1], [0]), Visit.of([1], [0]))),
            PatientRecord("b", (Visit.of([0], [1], [2]),)),
        ])
        synth = Corpus(vocabs, [PatientRecord("z", (Visit.of([0, 1], [], [2]),))])
        # same-visit pairs, real: v1 {S0,S1,D0} -> S0S1, S0D0, S1D0; v2 {S1,D0} -> S1D0;
        # v3 {S0,D1,M2} -> S0D1, S0M2, D1M2. Seven pairs, S1D0 twice.
        real_p = {"S0S1": 1, "S0D0": 1, "S1D0": 2, "S0D1": 1, "S0M2": 1, "D1M2": 1}
        synth_p = {"S0S1": 1, "S0M2": 1, "S1M2": 1}
        keys = set(real_p) | set(synth_p)
        y = np.array([real_p.get(k, 0) / 7 for k in sorted(keys)])
        p = np.array([synth_p.get(k, 0) / 3 for k in sorted(keys)])
        expected = 1 - ((y - p) ** 2).sum() / ((y - y.mean()) ** 2).sum()
        assert similarity_score(real, synth, "same_visit_bigram") == pytest.approx(expected, abs=1e-12)

    def test_mean_prediction_gives_zero(self):
        y = np.array([0.1, 0.2, 0.3, 0.4])
        assert r_squared(y, np.full(4, y.mean())) == pytest.approx(0.0, abs=1e-12)

    def test_can_be_negative(self):
        assert r_squared(np.array([0.1, 0.9]), np.array([0.9, 0.1])) < 0

    def test_zero_variance_reference(self):
        with pytest.raises(MetricUndefined, match="zero variance"):
            r_squared(np.array([0.5, 0.5]), np.array([0.4, 0.6]))

    def test_empty_real_profile(self, vocabs):
        c = Corpus(vocabs, [PatientRecord("a", (Visit.of([0]),))])
        with pytest.raises(MetricUndefined):
            similarity_score(c, c, "same_visit_bigram")

    def test_vocabulary_permutation_invariance(self):
        real, synth = random_corpus(4), random_corpus(5)
        perm = {k: np.random.default_rng(i).permutation(len(real.vocabularies[k]))
                for i, k in enumerate(("symptom", "diagnosis", "medication"))}

        def permute(c):
            vocabs = {k: Vocabulary(k, tuple(c.vocabularies[k].codes[j] for j in np.argsort(perm[k])))
                      for k in perm}
            recs = [PatientRecord(r.patient_id, tuple(
                Visit.of(*(perm[k][list(v.events(k).indices)] for k in perm)) for v in r.visits))
                for r in c.records]
            return Corpus(vocabs, recs)

        pr, ps = permute(real), permute(synth)
        assert frequency_profile(pr, "unigram") == pytest.approx(frequency_profile(real, "unigram"))
        for scope in SCOPES:
            assert similarity_score(pr, ps, scope) == pytest.approx(similarity_score(real, synth, scope), abs=1e-12)
        assert dimwise_fidelity(pr, ps) == pytest.approx(dimwise_fidelity(real, synth), abs=1e-12)

    def test_profiles_normalized(self):
        for scope in SCOPES:
            assert sum(frequency_profile(random_corpus(6), scope).values()) == pytest.approx(1.0)

    def test_mismatched_vocabularies(self):
        other = Corpus(tiny_vocabularies(6, 5, 4) | {"symptom": Vocabulary("symptom", tuple("abcdef"))}, [])
        with pytest.raises(ParameterError):
            similarity_score(random_corpus(0), other, "unigram")


def rate_corpus(counts_per_code, n_visits=4):
    vocabs = tiny_vocabularies(len(counts_per_code), 1, 1)
    visits = [Visit.of([i for i, c in enumerate(counts_per_code) if v < c]) for v in range(n_visits)]
    return Corpus(vocabs, [PatientRecord("p", tuple(visits))])


class TestDimwise:
    def test_copy(self):
        c = random_corpus(7)
        assert dimwise_fidelity(c, c) == pytest.approx(1.0)

    def test_reversed_rates_negative(self):
        assert dimwise_fidelity(rate_corpus([1, 2, 3]), rate_corpus([3, 2, 1]), ("symptom",)) < 0

    def test_hand_case(self):
        # rates (1/4, 1/2, 3/4) vs (1/2, 1/2, 1): Pearson = 0.125 / sqrt(0.125 * 1/6) = sqrt(3)/2.
        got = dimwise_fidelity(rate_corpus([1, 2, 3]), rate_corpus([2, 2, 4]), ("symptom",))
        assert got == pytest.approx(math.sqrt(3) / 2, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_oracle(self, seed):
        real, synth = random_corpus(seed), random_corpus(seed + 50)
        assert dimwise_fidelity(real, synth) == pytest.approx(oracles.dimwise(real, synth), abs=1e-9)

    def test_zero_variance(self):
        with pytest.raises(MetricUndefined):
            dimwise_fidelity(rate_corpus([2, 2, 2]), rate_corpus([1, 2, 3]), ("symptom",))


class TestBleuRouge:
    def test_identical(self):
        s = "the patient has a cough".split()
        assert bleu(s, s) == pytest.approx(1.0)
        for v in ("1", "2", "L"):
            assert rouge(s, s, v) == pytest.approx(1.0)

    def test_disjoint(self):
        assert bleu("a b c".split(), "x y z".split()) == 0.0
        assert rouge("a b c".split(), "x y z".split(), "1") == 0.0
        assert rouge("a b c".split(), "x y z".split(), "L") == 0.0

    def test_fixture_brevity_and_bigrams(self):
        got = bleu("the cat sat on mat".split(), "the cat sat on the mat".split(), max_n=2)
        assert got == pytest.approx(math.exp(1 - 6 / 5) * math.sqrt(1.0 * 3 / 4), abs=1e-6)

    def test_fixture_smoothed_four_gram(self):
        got = bleu("a b c d e".split(), "a b c e d".split(), max_n=4)
        # p1 = 5/5, p2 = 2/4, p3 = 1/3, p4 = 0/2 smoothed to 1/3.
        assert got == pytest.approx((1 * 0.5 * (1 / 3) * (1 / 3)) ** 0.25, abs=1e-6)

    def test_fixture_clipping(self):
        assert bleu("the the the the".split(), "the cat".split(), max_n=1) == pytest.approx(0.25, abs=1e-6)

    def test_fixture_rouge_l(self):
        assert rouge("a b c".split(), "a x c".split(), "L") == pytest.approx(2 / 3, abs=1e-6)

    def test_fixture_rouge_1_2(self):
        cand, ref = "a b c d".split(), "a b d".split()
        assert rouge(cand, ref, 1) == pytest.approx(6 / 7, abs=1e-6)
        assert rouge(cand, ref, 2) == pytest.approx(0.4, abs=1e-6)

    def test_corpus_level_pools_counts(self):
        got = corpus_bleu(["a b".split(), "c d".split()], ["a b".split(), "c e".split()], max_n=2)
        assert got == pytest.approx(math.sqrt(3 / 4 * 1 / 2), abs=1e-9)

    def test_empty_reference(self):
        with pytest.raises(MetricUndefined):
            bleu(["a"], [])
        with pytest.raises(MetricUndefined):
            rouge([], ["a"])

    def test_bad_max_n(self):
        with pytest.raises(ParameterError):
            bleu(["a"], ["a"], max_n=0)

    def test_mean_rouge_skips_undefined(self):
        assert mean_rouge([["a"], ["a", "b"]], [["a"], ["a", "b"]], "2") == pytest.approx(1.0)


class TestUtility:
    def utility_corpus(self):
        from msic.planted import PlantedConfig, generate_planted_corpus
        return generate_planted_corpus(PlantedConfig(n_patients=150, mean_visits=3.0), seed=1)

    def test_self_training_beats_empty_prediction(self):
        c = self.utility_corpus()
        jac, f1 = utility_eval(c, c, seed=0)
        assert jac > 0.0 and f1 > 0.0

    def test_forced_empty_prediction(self):
        c = self.utility_corpus()
        assert utility_eval(c, c, UtilityTask(epochs=5, threshold=1.01)) == (0.0, 0.0)

    def test_deterministic(self):
        c = self.utility_corpus()
        assert utility_eval(c, c, seed=3) == utility_eval(c, c, seed=3)

    def test_empty_training(self, vocabs):
        single = Corpus(vocabs, [PatientRecord("a", (Visit.of([0]),))])
        with pytest.raises(ParameterError):
            utility_eval(single, single)

    def test_set_scores_hand_case(self):
        pred = np.array([[1, 1, 0], [0, 0, 0]], bool)
        truth = np.array([[1, 0, 1], [0, 0, 0]], bool)
        jac, f1 = set_scores(pred, truth)
        assert jac == pytest.approx((1 / 3 + 0) / 2)
        assert f1 == pytest.approx(2 * 1 / (2 * 1 + 1 + 1))

    def test_hybrid_mixture(self):
        real, synth = random_corpus(1, n_patients=10), random_corpus(2, n_patients=10)
        mixed = hybrid(real, synth, 0.3, seed=0)
        assert len(mixed) == 10
        assert sum(r.patient_id.startswith("syn-") for r in mixed.records) == 3


class TestReport:
    def test_null_with_reason(self):
        report = MetricReport()
        report.record("x", lambda: r_squared(np.ones(3), np.ones(3)))
        assert report.values["x"] is None and "zero variance" in report.reasons["x"]
        again = MetricReport.from_json(report.to_json())
        assert again.values == report.values and again.reasons == report.reasons

    def test_evaluate_copy(self):
        c = random_corpus(8)
        rep = evaluate_corpora(c, c, ["unigram", "bigram", "seq_bigram", "dimwise"])
        assert all(v == pytest.approx(1.0) for v in rep.values.values())
        assert rep.to_json() == evaluate_corpora(c, c, ["unigram", "bigram", "seq_bigram", "dimwise"]).to_json()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(0, 5), max_size=6), min_size=2, max_size=6),
       st.sampled_from(SCOPES))
def test_copy_invariant_property(visit_sets, scope):
    vocabs = tiny_vocabularies(6, 1, 1)
    c = Corpus(vocabs, [PatientRecord("p", tuple(Visit.of(s) for s in visit_sets))])
    try:
        expected = oracles.r2(oracles.profile(c, scope), oracles.profile(c, scope))
    except ZeroDivisionError:
        with pytest.raises(MetricUndefined):
            similarity_score(c, c, scope)
        return
    assert similarity_score(c, c, scope) == pytest.approx(expected) == 1.0
