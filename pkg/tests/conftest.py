import numpy as np
import pytest

from msic.data import Corpus, PatientRecord, Report, Visit, Vocabulary


def tiny_vocabularies(ns=4, nd=4, nm=3):
    return {
        "symptom": Vocabulary("symptom", tuple(f"S{i}" for i in range(ns))),
        "diagnosis": Vocabulary("diagnosis", tuple(f"D{i}" for i in range(nd))),
        "medication": Vocabulary("medication", tuple(f"M{i}" for i in range(nm))),
    }


def random_corpus(seed: int, n_patients: int = 20, sizes=(6, 5, 4), max_visits: int = 4,
                  density: float = 0.3) -> Corpus:
    rng = np.random.default_rng(seed)
    vocabs = tiny_vocabularies(*sizes)
    records = []
    for j in range(n_patients):
        visits = []
        for _ in range(int(rng.integers(1, max_visits + 1))):
            sets = [np.flatnonzero(rng.random(n) < density) for n in sizes]
            visits.append(Visit.of(*sets))
        records.append(PatientRecord(f"p{j}", visits))
    return Corpus(vocabs, records)


@pytest.fixture
def vocabs():
    return tiny_vocabularies()


@pytest.fixture
def small_corpus(vocabs):
    rep = Report.from_text("complains of cough .", "diagnosed with flu .", "prescribed rest .")
    recs = [
        PatientRecord("a", (Visit.of([0, 1], [2], [0], rep), Visit.of([3], [], [1, 2]))),
        PatientRecord("b", (Visit.of([], [0, 1], []),)),
    ]
    return Corpus(vocabs, recs)


def tiny_planted(n_patients: int = 16, seed: int = 0):
    from msic.planted import PlantedConfig, generate_planted_corpus
    cfg = PlantedConfig(n_symptoms=8, n_diagnoses=9, n_medications=6, n_patients=n_patients, mean_visits=2.0,
                        max_visits=4, n_syndromes=3, max_events=4, max_report_len=20)
    return generate_planted_corpus(cfg, seed)


def tiny_settings(**overrides):
    """Small dims and few epochs so a full train() call takes about a second."""
    from msic.config import Settings, apply_overrides
    items = {"model.hidden_dim": "8", "model.latent_dim": "8", "model.attention_heads": "2",
             "model.ffn_multiplier": "2", "model.max_report_len": "20", "train.epochs": "2",
             "train.event_only_epochs": "1", "train.lr": "1e-3", "train.batch_size": "8"}
    items.update({k: str(v) for k, v in overrides.items()})
    return apply_overrides(Settings(), items).validate()


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}")
