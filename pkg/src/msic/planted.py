"""Planted-rule synthetic corpus: a desk-scale stand-in for licensed EHR data.

Patients carry latent syndromes that emit clusters of symptoms. Fixed rule
tables map symptom pairs to diagnoses, diagnoses to medications, and
diagnoses to follow-up symptoms in the next visit. Reports are rendered from
per-code phrase templates so each paragraph mentions exactly its visit's events.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Corpus, PatientRecord, Report, Visit, Vocabulary
from .errors import ConfigError

SYMPTOM_PHRASES = (
    "cough", "fever", "headache", "nausea", "fatigue", "dizziness", "rash", "chest pain",
    "abdominal pain", "back pain", "joint pain", "vomiting", "diarrhea", "palpitations",
    "insomnia", "anxiety", "blurred vision", "sore throat", "chills", "swelling", "weakness",
    "numbness", "wheezing", "constipation", "weight loss", "night sweats", "confusion",
    "itching", "tremor", "syncope",
)
DIAGNOSIS_PHRASES = (
    "pneumonia", "influenza", "migraine", "gastritis", "anemia", "hypertension", "asthma",
    "bronchitis", "sinusitis", "dermatitis", "arthritis", "gout", "diabetes", "hypothyroidism",
    "depression", "angina", "arrhythmia", "heart failure", "kidney stones", "urinary infection",
    "pancreatitis", "hepatitis", "cholecystitis", "appendicitis", "colitis", "reflux disease",
    "peptic ulcer", "vertigo", "epilepsy", "neuropathy", "osteoporosis", "psoriasis", "eczema",
    "cellulitis", "sepsis", "stroke", "copd", "lupus", "glaucoma", "tonsillitis",
)
MEDICATION_PHRASES = (
    "aspirin", "metformin", "lisinopril", "albuterol", "omeprazole", "amoxicillin", "ibuprofen",
    "acetaminophen", "prednisone", "levothyroxine", "sertraline", "furosemide", "insulin",
    "warfarin", "gabapentin", "metoprolol", "allopurinol", "ciprofloxacin", "ondansetron",
    "loratadine",
)


@dataclass
class PlantedConfig:
    n_symptoms: int = 30
    n_diagnoses: int = 40
    n_medications: int = 20
    n_patients: int = 500
    mean_visits: float = 2.1
    max_visits: int = 8
    n_syndromes: int = 6
    syndrome_symptom_rate: float = 0.55
    background_rate: float = 0.02
    second_syndrome_rate: float = 0.3
    syndrome_persistence: float = 0.8
    new_syndrome_rate: float = 0.15
    progression_rate: float = 0.6
    noise: float = 0.05
    max_events: int = 8
    max_report_len: int = 32
    rule_seed: int = 1234
    # explicit rule tables override the ones derived from rule_seed
    symptom_rules: list[tuple[tuple[int, ...], int]] | None = None
    medication_rules: list[tuple[int, int]] | None = None
    progression_rules: list[tuple[int, int]] | None = None
    syndromes: list[tuple[int, ...]] | None = None

    def validate(self) -> None:
        for name in ("n_symptoms", "n_diagnoses", "n_medications", "n_patients", "max_visits",
                     "n_syndromes", "max_events"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        top = (self.max_visits + 1) / 2.0
        if self.mean_visits < 1.0 or (self.max_visits > 1 and self.mean_visits >= top) or (
                self.max_visits == 1 and self.mean_visits != 1.0):
            raise ConfigError(f"mean_visits {self.mean_visits} unreachable with max_visits {self.max_visits}")
        for name in ("syndrome_symptom_rate", "background_rate", "second_syndrome_rate",
                     "syndrome_persistence", "new_syndrome_rate", "progression_rate", "noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        # longest paragraph: two lead words, two tokens per phrase, separators, final period
        if 2 + 2 * self.max_events + (self.max_events - 1) + 1 > self.max_report_len:
            raise ConfigError("max_events too large for max_report_len")


@dataclass
class PlantedRules:
    syndromes: list[tuple[int, ...]]
    symptom_rules: list[tuple[tuple[int, ...], int]]
    medication_rules: list[tuple[int, int]]
    progression_rules: list[tuple[int, int]]
    _med_of: dict[int, list[int]] = field(default_factory=dict, repr=False)
    _prog_of: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for d, m in self.medication_rules:
            self._med_of.setdefault(d, []).append(m)
        for d, s in self.progression_rules:
            self._prog_of.setdefault(d, []).append(s)

    def implied_diagnoses(self, symptoms) -> set[int]:
        present = set(symptoms)
        return {d for trig, d in self.symptom_rules if set(trig) <= present}

    def implied_medications(self, diagnoses) -> set[int]:
        return {m for d in diagnoses for m in self._med_of.get(d, ())}

    def progressed_symptoms(self, diagnoses) -> set[int]:
        return {s for d in diagnoses for s in self._prog_of.get(d, ())}


def build_rules(cfg: PlantedConfig) -> PlantedRules:
    rng = np.random.default_rng(cfg.rule_seed)
    if cfg.syndromes is not None:
        syndromes = [tuple(s) for s in cfg.syndromes]
    else:
        perm = rng.permutation(cfg.n_symptoms)
        syndromes = [tuple(sorted(int(x) for x in chunk))
                     for chunk in np.array_split(perm, cfg.n_syndromes) if len(chunk)]
    if cfg.symptom_rules is not None:
        symptom_rules = [(tuple(t), int(d)) for t, d in cfg.symptom_rules]
    else:
        symptom_rules = []
        for d in range(cfg.n_diagnoses):
            group = syndromes[d % len(syndromes)]
            if len(group) >= 2 and rng.random() < 0.75:
                trig = tuple(sorted(int(x) for x in rng.choice(group, size=2, replace=False)))
            else:
                trig = (int(rng.choice(group)),)
            symptom_rules.append((trig, d))
    if cfg.medication_rules is not None:
        medication_rules = [(int(d), int(m)) for d, m in cfg.medication_rules]
    else:
        meds = rng.permutation(max(cfg.n_diagnoses, cfg.n_medications)) % cfg.n_medications
        medication_rules = [(d, int(meds[d])) for d in range(cfg.n_diagnoses)]
    if cfg.progression_rules is not None:
        progression_rules = [(int(d), int(s)) for d, s in cfg.progression_rules]
    else:
        progression_rules = [(d, int(rng.integers(cfg.n_symptoms))) for d in range(cfg.n_diagnoses)]

    for syn in syndromes:
        _check_range(syn, cfg.n_symptoms, "syndrome symptom")
    for trig, d in symptom_rules:
        _check_range(trig, cfg.n_symptoms, "rule symptom")
        _check_range((d,), cfg.n_diagnoses, "rule diagnosis")
    for d, m in medication_rules:
        _check_range((d,), cfg.n_diagnoses, "rule diagnosis")
        _check_range((m,), cfg.n_medications, "rule medication")
    for d, s in progression_rules:
        _check_range((d,), cfg.n_diagnoses, "rule diagnosis")
        _check_range((s,), cfg.n_symptoms, "rule symptom")
    return PlantedRules(syndromes, symptom_rules, medication_rules, progression_rules)


def _check_range(items: Sequence[int], n: int, what: str) -> None:
    for i in items:
        if not 0 <= i < n:
            raise ConfigError(f"{what} {i} out of range [0, {n})")


def truncated_geometric_p(mean: float, max_visits: int) -> float:
    """Success probability giving the requested mean on {1..max_visits}."""
    ks = np.arange(1, max_visits + 1)

    def mean_of(p):
        w = (1 - p) ** (ks - 1) * p
        return float((ks * w).sum() / w.sum())

    if mean <= 1.0:
        return 1.0
    lo, hi = 1e-9, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_of(mid) > mean:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def phrase(kind: str, index: int) -> str:
    bank = {"symptom": SYMPTOM_PHRASES, "diagnosis": DIAGNOSIS_PHRASES,
            "medication": MEDICATION_PHRASES}[kind]
    return bank[index] if index < len(bank) else f"{kind} {index}"


_LEADS = {
    "symptom": (("complains", "of"), ("no", "complaint", ".")),
    "diagnosis": (("diagnosed", "with"), ("no", "new", "diagnosis", ".")),
    "medication": (("prescribed",), ("no", "medication", ".")),
}


def render_paragraph(kind: str, indices: Sequence[int]) -> tuple[str, ...]:
    lead, empty = _LEADS[kind]
    if not indices:
        return empty
    tokens = list(lead)
    for j, i in enumerate(indices):
        if j:
            tokens.append(",")
        tokens.extend(phrase(kind, i).split())
    tokens.append(".")
    return tuple(tokens)


def render_report(visit: Visit) -> Report:
    return Report(
        render_paragraph("symptom", visit.symptoms.indices),
        render_paragraph("diagnosis", visit.diagnoses.indices),
        render_paragraph("medication", visit.medications.indices),
    )


def planted_vocabularies(cfg: PlantedConfig) -> dict[str, Vocabulary]:
    def vocab(kind, prefix, n):
        return Vocabulary(kind, tuple(f"{prefix}{i:03d}" for i in range(n)),
                          tuple(phrase(kind, i) for i in range(n)))

    return {
        "symptom": vocab("symptom", "S", cfg.n_symptoms),
        "diagnosis": vocab("diagnosis", "D", cfg.n_diagnoses),
        "medication": vocab("medication", "M", cfg.n_medications),
    }


def generate_planted_corpus(cfg: PlantedConfig, seed: int) -> Corpus:
    cfg.validate()
    rules = build_rules(cfg)
    rng = np.random.default_rng(seed)
    p_geom = truncated_geometric_p(cfg.mean_visits, cfg.max_visits)
    ks = np.arange(1, cfg.max_visits + 1)
    w = (1 - p_geom) ** (ks - 1) * p_geom
    visit_probs = w / w.sum()
    n_syn = len(rules.syndromes)

    records = []
    for j in range(cfg.n_patients):
        n_visits = int(rng.choice(ks, p=visit_probs))
        active = {int(rng.integers(n_syn))}
        if rng.random() < cfg.second_syndrome_rate:
            active.add(int(rng.integers(n_syn)))
        prev_diag: set[int] = set()
        visits = []
        for t in range(n_visits):
            if t:
                active = {a for a in active if rng.random() < cfg.syndrome_persistence}
                if not active or rng.random() < cfg.new_syndrome_rate:
                    active.add(int(rng.integers(n_syn)))
            symptoms = _draw_symptoms(cfg, rules, active, prev_diag, rng)
            diagnoses, symptoms = _diagnose(cfg, rules, symptoms, rng)
            meds = _medicate(cfg, rules, diagnoses, rng)
            visit = Visit.of(symptoms, diagnoses, meds)
            visits.append(Visit(visit.symptoms, visit.diagnoses, visit.medications, render_report(visit)))
            prev_diag = set(diagnoses)
        records.append(PatientRecord(f"P{j:05d}", tuple(visits)))
    return Corpus(planted_vocabularies(cfg), tuple(records))


def _draw_symptoms(cfg, rules, active, prev_diag, rng) -> set[int]:
    symptoms = set()
    for a in sorted(active):
        for s in rules.syndromes[a]:
            if rng.random() < cfg.syndrome_symptom_rate:
                symptoms.add(s)
    for s in sorted(rules.progressed_symptoms(prev_diag)):
        if rng.random() < cfg.progression_rate:
            symptoms.add(s)
    background = rng.random(cfg.n_symptoms) < cfg.background_rate
    symptoms.update(int(i) for i in np.flatnonzero(background))
    if len(symptoms) > cfg.max_events:
        symptoms = set(int(x) for x in rng.choice(sorted(symptoms), size=cfg.max_events, replace=False))
    return symptoms


def _diagnose(cfg, rules, symptoms, rng):
    implied = rules.implied_diagnoses(symptoms)
    while len(implied) > cfg.max_events:
        symptoms = set(symptoms)
        symptoms.discard(int(rng.choice(sorted(symptoms))))
        implied = rules.implied_diagnoses(symptoms)
    diagnoses = {d for d in implied if rng.random() >= cfg.noise} if cfg.noise else set(implied)
    if cfg.noise and len(diagnoses) < cfg.max_events and rng.random() < cfg.noise:
        diagnoses.add(int(rng.integers(cfg.n_diagnoses)))
    return diagnoses, symptoms


def _medicate(cfg, rules, diagnoses, rng) -> set[int]:
    implied = rules.implied_medications(diagnoses)
    meds = {m for m in implied if rng.random() >= cfg.noise} if cfg.noise else set(implied)
    if cfg.noise and len(meds) < cfg.max_events and rng.random() < cfg.noise:
        meds.add(int(rng.integers(cfg.n_medications)))
    return meds
