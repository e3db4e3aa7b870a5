"""Loss assembly and the staged training loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .config import LossWeights, Settings
from .data import EVENT_KINDS, Corpus, build_word_vocabulary
from .errors import DimensionError, TrainingError
from .model import MSIC, CorpusStats, VisitBatch
from .model.reports import DRAFT_PROMPTS, POLISH_PROMPTS, PromptSet, draft_encodings
from .model.state import StateOutputs
from .numerics import tensor as T
from .numerics.gaussian import kl_diag_gaussian
from .numerics.optim import AdamState, adam_step, clip_grad_norm, warmup_linear
from .numerics.tensor import Tensor, no_grad

log = logging.getLogger("msic.training")

PROB_EPS = 1e-7
TERMS = ("s", "d", "m", "ys", "yd", "ym", "kl")
REPORT_TERMS = ("ys", "yd", "ym")
KIND_TERM = {"symptom": "s", "diagnosis": "d", "medication": "m"}
REPORT_TERM = {"symptom": "ys", "diagnosis": "yd", "medication": "ym"}
PARAGRAPH_OF = {"symptom": 0, "diagnosis": 1, "medication": 2}


# -- loss pieces ---------------------------------------------------------------

def bce(probs: Tensor, truth) -> Tensor:
    """Binary cross-entropy averaged over the last axis."""
    probs = T.as_tensor(probs)
    truth = np.asarray(truth, dtype=probs.data.dtype)
    if probs.shape != truth.shape:
        raise DimensionError(f"probabilities {probs.shape} vs truth {truth.shape}")
    p = T.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    ll = T.log(p) * truth + T.log(1.0 - p) * (1.0 - truth)
    return -ll.mean(axis=-1)


def event_losses(probs: Sequence, truth: Sequence) -> tuple[Tensor, Tensor, Tensor]:
    """(L_s, L_d, L_m): BCE per kind, mean over vocabulary then over visits."""
    if len(probs) != 3 or len(truth) != 3:
        raise DimensionError("event_losses takes symptom, diagnosis and medication entries")
    return tuple(bce(p, t).mean() for p, t in zip(probs, truth))


def lm_loss(logits: Tensor, targets, mask=None) -> Tensor:
    """Token NLL summed over positions, mean over paragraphs."""
    logits = T.as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim == 2:
        logits, targets = logits.reshape(1, *logits.shape), targets.reshape(1, -1)
    if mask is None:
        mask = np.ones(targets.shape, dtype=logits.data.dtype)
    return T.sequence_nll(logits, targets, np.asarray(mask)).mean()


def report_losses(logits: Sequence, targets: Sequence, masks: Sequence | None = None):
    """(L_ys, L_yd, L_ym) from teacher-forced logits."""
    masks = masks if masks is not None else [None] * len(logits)
    return tuple(lm_loss(lg, tg, mk) for lg, tg, mk in zip(logits, targets, masks))


@dataclass
class LossBreakdown:
    total: Tensor
    weighted: dict[str, float]
    raw: dict[str, float]

    def resum(self) -> float:
        return math.fsum(self.weighted.values())


def visit_loss(terms: Mapping[str, Tensor], weights: LossWeights, event_only: bool = False) -> LossBreakdown:
    """Weighted sum of the available terms; report terms are zeroed when ``event_only``."""
    total = None
    weighted, raw = {}, {}
    for name in TERMS:
        if name not in terms:
            continue
        term = terms[name]
        raw[name] = float(term.data)
        lam = 0.0 if (event_only and name in REPORT_TERMS) else getattr(weights, f"lambda_{name}")
        contribution = term * lam
        weighted[name] = float(contribution.data)
        if lam == 0.0:
            continue
        total = contribution if total is None else total + contribution
    if total is None:
        total = Tensor(np.zeros((), dtype=T.get_dtype()))
    return LossBreakdown(total, weighted, raw)


# -- per-batch forward ---------------------------------------------------------------

@dataclass
class BatchTerms:
    terms: dict[str, Tensor]
    state: StateOutputs
    kl_per_visit: Tensor | None = None


def event_terms(model: MSIC, batch: VisitBatch, state: StateOutputs) -> dict[str, Tensor]:
    enc, dec = state.encodings, model.events
    probs = (dec.next_symptoms(state.h_prev),
             dec.next_diagnoses(state.h_prev, enc.symptom),
             dec.medications(state.h, enc.symptom, enc.diagnosis))
    truth = tuple(batch.dense(k, model.sizes[k]) for k in EVENT_KINDS)
    return dict(zip(("s", "d", "m"), event_losses(probs, truth)))


def gold_paragraphs(batch: VisitBatch, kind: str) -> list[tuple[str, ...]]:
    return [r.paragraphs()[PARAGRAPH_OF[kind]] for r in batch.reports]


def report_terms(model: MSIC, batch: VisitBatch, state: StateOutputs,
                 drafts: Mapping[str, Sequence[Sequence[int]]] | None = None) -> dict[str, Tensor]:
    """LM losses of both phases, averaged per paragraph (draft only without deliberation).

    ``drafts`` supplies pre-decoded draft token ids; by default they are decoded greedily here.
    """
    gen, enc = model.reports, state.encodings
    available = {"h": state.h, "e_s": enc.symptom, "e_d": enc.diagnosis, "e_m": enc.medication}
    gold = {k: gold_paragraphs(batch, k) for k in EVENT_KINDS}
    draft = {k: gen.lm_loss(k, PromptSet.select(DRAFT_PROMPTS[k], available), gold[k]).mean()
             for k in EVENT_KINDS}
    if not model.cfg.deliberation:
        return {REPORT_TERM[k]: draft[k] for k in EVENT_KINDS}
    # drafts are discrete tokens decoded without gradient
    if drafts is None:
        drafts = {k: gen.decode(k, PromptSet.select(DRAFT_PROMPTS[k], available)) for k in EVENT_KINDS}
    available.update(draft_encodings(gen, drafts))
    out = {}
    for k in EVENT_KINDS:
        polish = gen.lm_loss(k, PromptSet.select(POLISH_PROMPTS[k], available), gold[k]).mean()
        out[REPORT_TERM[k]] = (draft[k] + polish) * 0.5
    return out


def batch_terms(model: MSIC, batch: VisitBatch, rng: np.random.Generator,
                with_reports: bool = True, mode: str = "posterior", drafts=None) -> BatchTerms:
    state = model.state.forward(batch, mode, rng)
    terms = event_terms(model, batch, state)
    kl = None
    if model.cfg.use_state:
        kl = kl_diag_gaussian(state.posterior, state.prior)
        terms["kl"] = kl.mean()
    if with_reports and model.reports is not None:
        terms.update(report_terms(model, batch, state, drafts))
    return BatchTerms(terms, state, kl)


# -- training loop -------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    phase: str
    loss_total: float
    loss_terms: dict[str, float]
    loss_full: float
    raw_terms: dict[str, float]
    lr: float
    kl_probe: dict | None = None

    def to_json(self) -> str:
        return json.dumps({
            "epoch": self.epoch, "phase": self.phase, "loss_total": self.loss_total,
            "loss_terms": self.loss_terms, "loss_full": self.loss_full,
            "raw_terms": self.raw_terms, "lr": self.lr, "kl_probe": self.kl_probe,
        }, sort_keys=True)


@dataclass
class TrainResult:
    model: MSIC
    history: list[EpochRecord] = field(default_factory=list)


def training_vocabularies(corpus: Corpus) -> dict:
    vocabs = dict(corpus.vocabularies)
    has_reports = all(v.report is not None for r in corpus.records for v in r.visits)
    if has_reports and "word" not in vocabs:
        vocabs["word"] = build_word_vocabulary(corpus)
    if not has_reports:
        vocabs.pop("word", None)
    return vocabs


def build_model(settings: Settings, corpus: Corpus) -> MSIC:
    model = MSIC(training_vocabularies(corpus), settings.model, seed=settings.train.seed)
    model.stats = CorpusStats.of(corpus, settings.model.max_visits)
    return model


def _probe(batch_terms_: BatchTerms, rows: int = 4) -> dict:
    q, p = batch_terms_.state.posterior, batch_terms_.state.prior
    n = min(rows, q.mean.shape[0])
    to_list = lambda t: t.data[:n].astype(np.float64).tolist()  # noqa: E731
    return {"posterior_mean": to_list(q.mean), "posterior_log_variance": to_list(q.log_variance),
            "prior_mean": to_list(p.mean), "prior_log_variance": to_list(p.log_variance),
            "kl": to_list(batch_terms_.kl_per_visit)}


def _check_finite(terms: Mapping[str, Tensor], epoch: int, batch: int) -> None:
    for name, term in terms.items():
        if not np.all(np.isfinite(term.data)):
            raise TrainingError(f"non-finite {name} loss at epoch {epoch}, batch {batch}")


def train(settings: Settings, corpus: Corpus, telemetry: str | Callable[[EpochRecord], None] | None = None,
          model: MSIC | None = None) -> TrainResult:
    """Staged joint training: event-only epochs first, then events plus reports."""
    settings.validate()
    tc, weights = settings.train, settings.loss
    if len(corpus) == 0:
        raise TrainingError("cannot train on an empty corpus")
    model = model or build_model(settings, corpus)
    params = model.parameters()
    encoder_ids = {id(p) for p in (model.reports.encoder_parameters() if model.reports else [])}
    state = AdamState.for_params(params)
    order_rng = np.random.default_rng([tc.seed, 1])
    n_batches = math.ceil(len(corpus) / tc.batch_size)
    total_steps = tc.epochs * n_batches
    sink = _telemetry_sink(telemetry)
    result = TrainResult(model)
    step = 0
    for epoch in range(1, tc.epochs + 1):
        event_only = epoch <= tc.event_only_epochs
        joint_done = epoch - 1 - tc.event_only_epochs
        frozen = encoder_ids if (tc.freeze_encoder_after >= 0 and joint_done >= tc.freeze_encoder_after) else set()
        order = order_rng.permutation(len(corpus))
        sums: dict[str, float] = {}
        raw_sums: dict[str, float] = {}
        total_sum = full_sum = 0.0
        lr = tc.lr
        probe = None
        for b in range(n_batches):
            records = [corpus.records[i] for i in order[b * tc.batch_size:(b + 1) * tc.batch_size]]
            batch = VisitBatch.from_records(records)
            rng = np.random.default_rng([tc.seed, 2, epoch, b])
            bt = batch_terms(model, batch, rng, with_reports=not event_only)
            _check_finite(bt.terms, epoch, b)
            loss = visit_loss(bt.terms, weights, event_only=event_only)
            full = loss.resum()
            if event_only and model.reports is not None:
                with no_grad():
                    extra = report_terms(model, batch, bt.state)
                _check_finite(extra, epoch, b)
                full += math.fsum(float(extra[n].data) * getattr(weights, f"lambda_{n}") for n in REPORT_TERMS)
                for n in REPORT_TERMS:
                    loss.raw[n] = float(extra[n].data)
                    loss.weighted[n] = 0.0
            model.zero_grad()
            if loss.total.requires_grad:
                loss.total.backward()
            grads = [None if id(p) in frozen else p.grad for p in params]
            clip_grad_norm(grads, tc.grad_clip)
            lr = warmup_linear(step, total_steps, tc.warmup_fraction, tc.lr)
            adam_step(params, grads, state, lr)
            step += 1
            total_sum += float(loss.total.data)
            full_sum += full
            for n, v in loss.weighted.items():
                sums[n] = sums.get(n, 0.0) + v
            for n, v in loss.raw.items():
                raw_sums[n] = raw_sums.get(n, 0.0) + v
            if b == n_batches - 1 and bt.kl_per_visit is not None:
                probe = _probe(bt)
        model.zero_grad()
        record = EpochRecord(
            epoch=epoch, phase="event" if event_only else "joint",
            loss_total=total_sum / n_batches,
            loss_terms={n: v / n_batches for n, v in sums.items()},
            loss_full=full_sum / n_batches,
            raw_terms={n: v / n_batches for n, v in raw_sums.items()},
            lr=lr, kl_probe=probe)
        result.history.append(record)
        log.info("epoch %d (%s) loss %.4f full %.4f", epoch, record.phase, record.loss_total, record.loss_full)
        if sink:
            sink(record)
    return result


def _telemetry_sink(telemetry):
    if telemetry is None or callable(telemetry):
        return telemetry
    path = str(telemetry)
    open(path, "w").close()

    def write(record: EpochRecord) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")

    return write


def read_telemetry(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
