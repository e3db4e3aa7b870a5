import numpy as np
import pytest

from msic.data import build_word_vocabulary, dumps_corpus
from msic.errors import ConfigError
from msic.planted import (PlantedConfig, build_rules, generate_planted_corpus, render_paragraph,
                          truncated_geometric_p)


def test_noise_free_diagnoses_contain_implied():
    cfg = PlantedConfig(noise=0.0, n_patients=200)
    rules = build_rules(cfg)
    corpus = generate_planted_corpus(cfg, seed=3)
    for rec in corpus.records:
        for v in rec.visits:
            assert rules.implied_diagnoses(v.symptoms.indices) <= set(v.diagnoses.indices)
            assert rules.implied_medications(v.diagnoses.indices) <= set(v.medications.indices)


def test_same_seed_byte_identical():
    cfg = PlantedConfig(n_patients=60)
    assert dumps_corpus(generate_planted_corpus(cfg, 11)) == dumps_corpus(generate_planted_corpus(cfg, 11))


def test_patient_count():
    assert len(generate_planted_corpus(PlantedConfig(n_patients=500), seed=0)) == 500


@pytest.mark.parametrize("target", [2.1, 3.0])
def test_mean_visits_within_ten_percent(target):
    cfg = PlantedConfig(mean_visits=target)
    for seed in range(3):
        corpus = generate_planted_corpus(cfg, seed)
        mean = corpus.visit_count() / len(corpus)
        assert abs(mean - target) <= 0.1 * target


def test_geometric_solver_hits_mean():
    p = truncated_geometric_p(3.0, 8)
    ks = np.arange(1, 9)
    w = (1 - p) ** (ks - 1) * p
    assert float((ks * w).sum() / w.sum()) == pytest.approx(3.0, abs=1e-9)


def test_out_of_range_rule_rejected():
    with pytest.raises(ConfigError, match="out of range"):
        build_rules(PlantedConfig(medication_rules=[(0, 99)]))


def test_bad_rates_rejected():
    with pytest.raises(ConfigError):
        PlantedConfig(noise=1.5).validate()


def test_reports_mention_exactly_the_events():
    corpus = generate_planted_corpus(PlantedConfig(n_patients=40), seed=5)
    for rec in corpus.records:
        for v in rec.visits:
            assert v.report.paragraphs() == tuple(
                render_paragraph(k, v.events(k).indices) for k in ("symptom", "diagnosis", "medication"))
            assert all(len(p) <= 32 for p in v.report.paragraphs())


def test_reports_tokenize_losslessly():
    corpus = generate_planted_corpus(PlantedConfig(n_patients=80), seed=2)
    words = build_word_vocabulary(corpus)
    for rec in corpus.records:
        for v in rec.visits:
            for para in v.report.paragraphs():
                assert all(tok in words for tok in para)
