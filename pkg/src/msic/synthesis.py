"""Cross-type, longitudinal and de-novo synthesis over the prior state chain."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import EVENT_KINDS, Corpus, PatientRecord, Report, Visit
from .errors import ParameterError, PreconditionError
from .model import MSIC
from .model.events import SamplingStrategy, sample_indices
from .model.reports import DRAFT_PROMPTS, POLISH_PROMPTS, PromptSet, draft_encodings
from .model.batch import VisitBatch
from .numerics import tensor as T
from .numerics.tensor import Tensor, no_grad

Given = Mapping[str, Sequence[tuple[int, ...] | None]]


def _rngs(seed, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng([*np.atleast_1d(seed).tolist(), i]) for i in range(n)]


@dataclass
class StepContext:
    """Per-row tensors of one synthesized or observed step."""

    h: np.ndarray
    e_s: np.ndarray
    e_d: np.ndarray
    e_m: np.ndarray


class Rollout:
    """Advances a batch of records one visit at a time along the prior chain.

    Each row owns a random generator, so a record's draws do not depend on
    which other records share the batch.
    """

    def __init__(self, model: MSIC, strategy: SamplingStrategy, rngs: Sequence[np.random.Generator]):
        self.model = model
        self.strategy = strategy
        self.rngs = list(rngs)
        self.rows = len(self.rngs)
        self.raw = {k: [] for k in EVENT_KINDS}
        self.z: list[np.ndarray] = []
        self.h: list[np.ndarray] = []
        self.contexts: list[StepContext] = []
        self.sets: list[dict[str, list[tuple[int, ...]]]] = []

    def _h_prev(self) -> Tensor:
        if self.h:
            return Tensor(self.h[-1])
        if not self.model.cfg.use_state:
            return Tensor(np.zeros((self.rows, self.model.cfg.latent_dim)))
        h0 = self.model.state.initial_state().data
        return Tensor(np.broadcast_to(h0, (self.rows, h0.shape[0])).copy())

    def _fill(self, kind: str, given: Given, probs: Callable[[], Tensor]) -> list[tuple[int, ...]]:
        fixed = given.get(kind, [None] * self.rows)
        out = list(fixed)
        todo = [i for i, g in enumerate(fixed) if g is None]
        if todo:
            p = probs().data
            for i in todo:
                out[i] = sample_indices(p[i:i + 1], self.strategy, self.rngs[i])[0]
        return [tuple(x) for x in out]

    def _attend(self, kind: str, sets: list[tuple[int, ...]]) -> Tensor:
        st = self.model.state
        self.raw[kind].append(st.encode_events(kind, sets).data)
        seq = Tensor(np.stack(self.raw[kind], axis=1))
        return st.attend_history(kind, seq)[:, -1]

    def step(self, given: Given | None = None) -> dict[str, list[tuple[int, ...]]]:
        """Observe or sample s, then d, then advance the chain, then m."""
        given = given or {}
        model, st, dec = self.model, self.model.state, self.model.events
        with no_grad():
            h_prev = self._h_prev()
            s = self._fill("symptom", given, lambda: dec.next_symptoms(h_prev))
            e_s = self._attend("symptom", s)
            d = self._fill("diagnosis", given, lambda: dec.next_diagnoses(h_prev, e_s))
            e_d = st.g_d(T.concat([self._attend("diagnosis", d), e_s], axis=-1))
            if model.cfg.use_state:
                prior = st.prior(e_s, e_d)
                noise = np.stack([r.standard_normal(model.cfg.latent_dim) for r in self.rngs])
                z = prior.mean.data + np.exp(0.5 * prior.log_variance.data) * noise.astype(prior.mean.data.dtype)
                self.z.append(z.astype(prior.mean.data.dtype))
                h = st.compose(Tensor(np.stack(self.z, axis=1)))[:, -1]
            else:
                h = Tensor(np.zeros((self.rows, model.cfg.latent_dim)))
            m = self._fill("medication", given, lambda: dec.medications(h, e_s, e_d))
            a_m = self._attend("medication", m)
            e_m = st.g_m(T.concat([a_m, e_s, e_d], axis=-1))
        self.h.append(h.data)
        self.contexts.append(StepContext(h.data, e_s.data, e_d.data, e_m.data))
        sets = {"symptom": s, "diagnosis": d, "medication": m}
        self.sets.append(sets)
        return sets


# -- reports ----------------------------------------------------------------------

def generate_reports(model: MSIC, h, e_s, e_d, e_m, phase: str = "final", mode: str = "greedy",
                     rng: np.random.Generator | None = None) -> list[Report]:
    """Reports for N visits from their prompt vectors.

    ``phase`` is ``draft``, ``polish`` or ``final`` (polish when the model
    deliberates, otherwise draft).
    """
    gen = model.reports
    if gen is None:
        raise PreconditionError("model was trained without reports")
    if phase == "final":
        phase = "polish" if model.cfg.deliberation else "draft"
    with no_grad():
        available = {"h": T.as_tensor(h), "e_s": T.as_tensor(e_s), "e_d": T.as_tensor(e_d), "e_m": T.as_tensor(e_m)}
        drafts = {k: gen.decode(k, PromptSet.select(DRAFT_PROMPTS[k], available), mode=mode, rng=rng)
                  for k in EVENT_KINDS}
        chosen = drafts
        if phase == "polish":
            available.update(draft_encodings(gen, drafts))
            chosen = {k: gen.decode(k, PromptSet.select(POLISH_PROMPTS[k], available), mode=mode, rng=rng)
                      for k in EVENT_KINDS}
    codec = model.codec
    return [Report(*(codec.decode(chosen[k][i]) for k in EVENT_KINDS)) for i in range(len(chosen["symptom"]))]


def observed_reports(model: MSIC, corpus: Corpus, phase: str = "final", batch_size: int = 64) -> list[Report]:
    """Reports for every real visit, conditioned on the posterior mean state."""
    out = []
    records = corpus.records
    with no_grad():
        for start in range(0, len(records), batch_size):
            batch = VisitBatch.from_records(records[start:start + batch_size])
            st = model.state.forward(batch, "posterior_mean")
            enc = st.encodings
            out.extend(generate_reports(model, st.h, enc.symptom, enc.diagnosis, enc.medication, phase))
    return out


# -- drivers --------------------------------------------------------------------------

def _strategy(strategy) -> SamplingStrategy:
    if isinstance(strategy, SamplingStrategy):
        return strategy
    if strategy in (None, "bernoulli"):
        return SamplingStrategy.bernoulli()
    raise ParameterError(f"unknown sampling strategy {strategy!r}")


def _visit(sets, row: int, report: Report | None = None) -> Visit:
    return Visit.of(sets["symptom"][row], sets["diagnosis"][row], sets["medication"][row], report)


def synthesize_next_visit(model: MSIC, record_prefix, strategy=None, seed=0) -> Visit:
    """Sample visit t+1 after observing the prefix visits along the prior chain."""
    visits = list(record_prefix.visits if isinstance(record_prefix, PatientRecord) else record_prefix)
    if not visits:
        raise PreconditionError("record prefix needs at least one visit")
    roll = Rollout(model, _strategy(strategy), _rngs(seed, 1))
    for v in visits:
        roll.step({k: [v.events(k).indices] for k in EVENT_KINDS})
    return _visit(roll.step(), 0)


def bootstrap_first_visit(model: MSIC, rng: np.random.Generator) -> Visit:
    """First visit with per-kind code counts and codes drawn from training first-visit statistics."""
    stats = model.stats
    if stats is None:
        raise PreconditionError("model has no training statistics for the empirical bootstrap")
    sets = {}
    for k in EVENT_KINDS:
        counts, codes = stats.first_counts[k].astype(np.float64), stats.first_codes[k].astype(np.float64)
        n = int(rng.choice(len(counts), p=counts / counts.sum())) if counts.sum() > 0 else 0
        n = min(n, int(np.count_nonzero(codes)))
        sets[k] = rng.choice(len(codes), size=n, replace=False, p=codes / codes.sum()) if n else []
    return Visit.of(sets["symptom"], sets["diagnosis"], sets["medication"])


def draw_horizon(model: MSIC, rng: np.random.Generator) -> int:
    counts = model.stats.visit_counts.astype(np.float64)
    return max(1, int(rng.choice(len(counts), p=counts / counts.sum())))


def _roll_records(model: MSIC, firsts: Sequence[Visit], horizons: Sequence[int], strategy,
                  rngs: Sequence[np.random.Generator], with_reports: bool = False) -> list[list[Visit]]:
    roll = Rollout(model, _strategy(strategy), rngs)
    roll.step({k: [v.events(k).indices for v in firsts] for k in EVENT_KINDS})
    for _ in range(max(horizons) - 1):
        roll.step()
    reports = _rollout_reports(model, roll) if with_reports else None
    out = []
    for i, horizon in enumerate(horizons):
        visits = [_visit(roll.sets[t], i, reports[t][i] if reports else None) for t in range(horizon)]
        out.append(visits)
    return out


def _rollout_reports(model: MSIC, roll: Rollout) -> list[list[Report]]:
    return [generate_reports(model, c.h, c.e_s, c.e_d, c.e_m) for c in roll.contexts]


def synthesize_record(model: MSIC, bootstrap="empirical", horizon: int | None = None, strategy=None,
                      seed=0, patient_id: str = "syn-000000", with_reports: bool = False) -> PatientRecord:
    """A full record from an empirical or given first visit, rolled forward to ``horizon`` visits."""
    rng = _rngs(seed, 1)[0]
    if bootstrap == "empirical":
        first = bootstrap_first_visit(model, rng)
    elif isinstance(bootstrap, Visit):
        first = bootstrap
    else:
        raise ParameterError("bootstrap must be 'empirical' or a Visit")
    if horizon is None:
        horizon = draw_horizon(model, rng)
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    if horizon == 1 and isinstance(bootstrap, Visit) and not with_reports:
        return PatientRecord(patient_id, (first,))
    visits = _roll_records(model, [first], [horizon], strategy, [rng], with_reports)[0]
    if isinstance(bootstrap, Visit):
        visits[0] = bootstrap if not with_reports else Visit(
            bootstrap.symptoms, bootstrap.diagnoses, bootstrap.medications, visits[0].report)
    return PatientRecord(patient_id, tuple(visits))


def synthesize_de_novo(model: MSIC, n_records: int, strategy=None, seed=0,
                       with_reports: bool = False, batch_size: int = 256) -> Corpus:
    if n_records < 1:
        raise ParameterError("n_records must be positive")
    rngs = _rngs(seed, n_records)
    firsts = [bootstrap_first_visit(model, r) for r in rngs]
    horizons = [draw_horizon(model, r) for r in rngs]
    records = []
    for start in range(0, n_records, batch_size):
        sl = slice(start, start + batch_size)
        rolled = _roll_records(model, firsts[sl], horizons[sl], strategy, rngs[sl], with_reports)
        records.extend(PatientRecord(f"syn-{start + i:06d}", tuple(v)) for i, v in enumerate(rolled))
    return Corpus(_event_vocabularies(model), tuple(records))


def synthesize_cross_type(model: MSIC, corpus: Corpus, strategy=None, seed=0,
                          with_reports: bool = False, batch_size: int = 256) -> Corpus:
    """Fill every visit's medications from its observed symptoms and diagnoses."""
    rngs = _rngs(seed, len(corpus))
    records = []
    for start in range(0, len(corpus), batch_size):
        chunk = corpus.records[start:start + batch_size]
        roll = Rollout(model, _strategy(strategy), rngs[start:start + batch_size])
        for t in range(max(len(r) for r in chunk)):
            given = {k: [r.visits[t].events(k).indices if t < len(r) else () for r in chunk]
                     for k in ("symptom", "diagnosis")}
            roll.step(given)
        reports = _rollout_reports(model, roll) if with_reports else None
        for i, r in enumerate(chunk):
            visits = [Visit(v.symptoms, v.diagnoses, _visit(roll.sets[t], i).medications,
                            reports[t][i] if reports else v.report) for t, v in enumerate(r.visits)]
            records.append(PatientRecord(r.patient_id, tuple(visits)))
    return Corpus(corpus.vocabularies, tuple(records))


def synthesize_longitudinal(model: MSIC, corpus: Corpus, steps: int = 1, strategy=None, seed=0,
                            with_reports: bool = False, batch_size: int = 256) -> Corpus:
    """Append ``steps`` synthesized visits to every record."""
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    rngs = _rngs(seed, len(corpus))
    records = []
    for start in range(0, len(corpus), batch_size):
        chunk = corpus.records[start:start + batch_size]
        lengths = [len(r) for r in chunk]
        roll = Rollout(model, _strategy(strategy), rngs[start:start + batch_size])
        for t in range(max(lengths) + steps):
            given = {k: [r.visits[t].events(k).indices if t < len(r) else None for r in chunk]
                     for k in EVENT_KINDS}
            roll.step(given)
        reports = _rollout_reports(model, roll) if with_reports else None
        for i, r in enumerate(chunk):
            new = [_visit(roll.sets[t], i, reports[t][i] if reports else None)
                   for t in range(lengths[i], lengths[i] + steps)]
            records.append(PatientRecord(r.patient_id, r.visits + tuple(new)))
    return Corpus(corpus.vocabularies, tuple(records))


def _event_vocabularies(model: MSIC) -> dict:
    return {k: model.vocabularies[k] for k in EVENT_KINDS}
