"""Quality metrics for synthetic corpora and generated reports."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .data import EVENT_KINDS, Corpus, PatientRecord, dumps_corpus, fnv1a_64
from .errors import MetricUndefined, ParameterError
from .numerics.optim import AdamState, adam_step

SCOPES = ("unigram", "same_visit_bigram", "sequential_bigram")


# -- frequency profiles ---------------------------------------------------------

def _item_space(corpus: Corpus, kinds: Sequence[str]) -> tuple[dict[str, int], int]:
    offsets, n = {}, 0
    for kind in kinds:
        if kind not in EVENT_KINDS:
            raise ParameterError(f"unknown event kind {kind!r}")
        offsets[kind] = n
        n += len(corpus.vocabularies[kind])
    return offsets, n


def visit_rows(corpus: Corpus, kinds: Sequence[str]):
    """CSR rows of global item ids, one row per visit, plus consecutive-visit pairs."""
    offsets, n = _item_space(corpus, kinds)
    rows, src = [], []
    for rec in corpus.records:
        for t, visit in enumerate(rec.visits):
            if t:
                src.append(len(rows) - 1)
            rows.append([offsets[k] + i for k in kinds for i in visit.events(k).indices])
    indptr, indices = kernels.to_csr(rows)
    return indptr, indices, np.asarray(src, dtype=np.int64), n


def count_matrix(corpus: Corpus, scope: str, kinds: Sequence[str] = EVENT_KINDS) -> np.ndarray:
    """Raw counts: a vector for unigrams, an (n, n) matrix for pair scopes.

    Same-visit pairs are unordered and live in the strict upper triangle.
    """
    indptr, indices, src, n = visit_rows(corpus, kinds)
    if scope == "unigram":
        return np.bincount(indices, minlength=n).astype(np.int64)
    if scope == "same_visit_bigram":
        return kernels.pair_counts(indptr, indices, n)
    if scope == "sequential_bigram":
        return kernels.seq_pair_counts(indptr, indices, src, src + 1, n)
    raise ParameterError(f"unknown scope {scope!r}; expected one of {SCOPES}")


def _item_names(corpus: Corpus, kinds: Sequence[str]) -> list[tuple[str, str]]:
    return [(k, c) for k in kinds for c in corpus.vocabularies[k].codes]


def frequency_profile(corpus: Corpus, scope: str, kinds: Sequence[str] = EVENT_KINDS) -> dict:
    """Normalized frequencies keyed by (kind, code) or by a pair of those."""
    counts = count_matrix(corpus, scope, kinds)
    names = _item_names(corpus, kinds)
    total = counts.sum()
    if total == 0:
        return {}
    if counts.ndim == 1:
        return {names[i]: counts[i] / total for i in np.flatnonzero(counts)}
    out = {}
    for a, b in zip(*np.nonzero(counts)):
        key = (names[a], names[b])
        if scope == "same_visit_bigram":
            key = tuple(sorted(key))
        out[key] = counts[a, b] / total
    return out


def r_squared(reference: np.ndarray, prediction: np.ndarray) -> float:
    """1 - SS_res / SS_tot with ``reference`` as ground truth."""
    reference = np.asarray(reference, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if reference.size == 0:
        raise MetricUndefined("empty frequency profile")
    # A constant profile can leave a rounding-sized SS_tot, so test equality directly.
    if np.all(reference == reference[0]):
        raise MetricUndefined("reference profile has zero variance")
    ss_tot = float(np.sum((reference - reference.mean()) ** 2))
    return 1.0 - float(np.sum((reference - prediction) ** 2)) / ss_tot


def similarity_score(real: Corpus, synthetic: Corpus, scope: str,
                     kinds: Sequence[str] = EVENT_KINDS) -> float:
    """R² between normalized frequency profiles over the union of observed keys."""
    _require_shared_vocabularies(real, synthetic, kinds)
    a = count_matrix(real, scope, kinds).astype(np.float64)
    b = count_matrix(synthetic, scope, kinds).astype(np.float64)
    if a.sum() == 0:
        raise MetricUndefined(f"real corpus has no {scope} events")
    a /= a.sum()
    if b.sum() > 0:
        b /= b.sum()
    keys = (a > 0) | (b > 0)
    return r_squared(a[keys], b[keys])


def visit_rates(corpus: Corpus, kinds: Sequence[str] = EVENT_KINDS) -> np.ndarray:
    """Fraction of visits containing each code, concatenated over ``kinds``."""
    n_visits = corpus.visit_count()
    if n_visits == 0:
        raise MetricUndefined("corpus has no visits")
    return count_matrix(corpus, "unigram", kinds) / n_visits


def dimwise_fidelity(real: Corpus, synthetic: Corpus, kinds: Sequence[str] = EVENT_KINDS) -> float:
    """Pearson correlation between per-code visit rates."""
    _require_shared_vocabularies(real, synthetic, kinds)
    return pearson(visit_rates(real, kinds), visit_rates(synthetic, kinds))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise MetricUndefined("zero variance in per-code rates")
    x, y = x - x.mean(), y - y.mean()
    sx, sy = float(np.sqrt(np.sum(x * x))), float(np.sqrt(np.sum(y * y)))
    return float(np.sum(x * y)) / (sx * sy)


def _require_shared_vocabularies(a: Corpus, b: Corpus, kinds: Sequence[str]) -> None:
    for kind in kinds:
        if a.vocabularies[kind].codes != b.vocabularies[kind].codes:
            raise ParameterError(f"{kind} vocabularies differ between corpora")


# -- BLEU / ROUGE --------------------------------------------------------------------

def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(candidates: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4) -> float:
    """Corpus BLEU with clipped counts and a brevity penalty.

    For ``n >= 2`` an order with no matches contributes ``1 / (total + 1)``
    instead of zero. A zero unigram precision still gives 0.
    """
    if max_n < 1:
        raise ParameterError("max_n must be at least 1")
    if len(candidates) != len(references):
        raise ParameterError("candidate and reference counts differ")
    if not references or any(len(r) == 0 for r in references):
        raise MetricUndefined("empty reference")
    matches = [0] * max_n
    totals = [0] * max_n
    for cand, ref in zip(candidates, references):
        for n in range(1, max_n + 1):
            c, r = _ngrams(cand, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(k, r[g]) for g, k in c.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    if cand_len == 0 or matches[0] == 0:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if m == 0:
            m, t = 1, t + 1
        log_p += math.log(m / t)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_p / max_n)


def bleu(candidate: Sequence, reference: Sequence, max_n: int = 4) -> float:
    return corpus_bleu([candidate], [reference], max_n)


def rouge(candidate: Sequence, reference: Sequence, variant: str | int = "L") -> float:
    """ROUGE-1, ROUGE-2 or ROUGE-L F-measure."""
    variant = str(variant).upper()
    if not candidate or not reference:
        raise MetricUndefined("empty candidate or reference")
    if variant == "L":
        vocab: dict = {}
        a = [vocab.setdefault(tok, len(vocab)) for tok in candidate]
        b = [vocab.setdefault(tok, len(vocab)) for tok in reference]
        overlap = kernels.lcs_length(a, b)
        n_cand, n_ref = len(candidate), len(reference)
    elif variant in ("1", "2"):
        n = int(variant)
        c, r = _ngrams(candidate, n), _ngrams(reference, n)
        n_cand, n_ref = sum(c.values()), sum(r.values())
        if n_cand == 0 or n_ref == 0:
            raise MetricUndefined(f"sequence shorter than {n} tokens")
        overlap = sum(min(k, r[g]) for g, k in c.items())
    else:
        raise ParameterError(f"unknown ROUGE variant {variant!r}")
    if overlap == 0:
        return 0.0
    p, rcl = overlap / n_cand, overlap / n_ref
    return 2 * p * rcl / (p + rcl)


def mean_rouge(candidates: Sequence[Sequence], references: Sequence[Sequence], variant="L") -> float:
    """Average F-measure over pairs; pairs where the metric is undefined are skipped."""
    scores = []
    for c, r in zip(candidates, references):
        try:
            scores.append(rouge(c, r, variant))
        except MetricUndefined:
            continue
    if not scores:
        raise MetricUndefined("no pair with a defined ROUGE score")
    return float(np.mean(scores))


# -- utility ---------------------------------------------------------------------

@dataclass
class UtilityTask:
    """Next-visit medication prediction from the current visit's events."""

    epochs: int = 300
    lr: float = 0.05
    threshold: float = 0.5
    weight_decay: float = 1e-4


def _transitions(corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    sizes = corpus.sizes
    feats, targets = [], []
    for rec in corpus.records:
        for prev, nxt in zip(rec.visits, rec.visits[1:]):
            feats.append(np.concatenate([prev.events(k).dense(sizes[k]) for k in EVENT_KINDS]))
            targets.append(nxt.medications.dense(sizes["medication"]))
    width = sum(sizes.values())
    if not feats:
        return np.zeros((0, width)), np.zeros((0, sizes["medication"]))
    return np.asarray(feats, dtype=np.float64), np.asarray(targets, dtype=np.float64)


def set_scores(predicted: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Sample-averaged Jaccard and micro-F1 of binary prediction matrices.

    A sample with empty prediction and empty truth scores Jaccard 0.
    """
    predicted, truth = predicted.astype(bool), truth.astype(bool)
    inter = (predicted & truth).sum(axis=1)
    union = (predicted | truth).sum(axis=1)
    jac = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    tp = int(inter.sum())
    fp = int((predicted & ~truth).sum())
    fn = int((~predicted & truth).sum())
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return float(jac.mean()) if len(jac) else 0.0, float(f1)


def utility_eval(train_data: Corpus, real_test: Corpus, task: UtilityTask | None = None,
                 seed: int = 0) -> tuple[float, float]:
    """Fit a logistic next-visit medication predictor; score it on ``real_test``."""
    task = task or UtilityTask()
    x, y = _transitions(train_data)
    if len(x) == 0:
        raise ParameterError("training data has no consecutive visit pairs")
    xt, yt = _transitions(real_test)
    if len(xt) == 0:
        raise MetricUndefined("test data has no consecutive visit pairs")
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, size=(x.shape[1], y.shape[1]))
    b = np.zeros(y.shape[1])
    state = AdamState.for_params([w, b])
    for _ in range(task.epochs):
        p = 1.0 / (1.0 + np.exp(-(x @ w + b)))
        g = (p - y) / len(x)
        adam_step([w, b], [x.T @ g + task.weight_decay * w, g.sum(axis=0)], state, task.lr)
    probs = 1.0 / (1.0 + np.exp(-(xt @ w + b)))
    return set_scores(probs >= task.threshold, yt)


def hybrid(real: Corpus, synthetic: Corpus, synthetic_fraction: float, seed: int = 0) -> Corpus:
    """Real training records with a fraction replaced by synthetic ones."""
    if not 0.0 <= synthetic_fraction <= 1.0:
        raise ParameterError("synthetic_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n = len(real)
    k = min(int(round(synthetic_fraction * n)), len(synthetic))
    keep = sorted(rng.choice(n, size=n - k, replace=False).tolist())
    take = sorted(rng.choice(len(synthetic), size=k, replace=False).tolist())
    records = [real.records[i] for i in keep]
    records += [PatientRecord(f"syn-{synthetic.records[i].patient_id}", synthetic.records[i].visits)
                for i in take]
    return real.with_records(records)


# -- reports ---------------------------------------------------------------------

def corpus_digest(corpus: Corpus) -> str:
    return f"{fnv1a_64(dumps_corpus(corpus).encode('utf-8')):016x}"


@dataclass
class MetricReport:
    """Named results with metadata; undefined values are stored as null with a reason."""

    values: dict[str, float | None] = field(default_factory=dict)
    reasons: dict[str, str] = field(default_factory=dict)
    metadata: dict[str, object] = field(default_factory=dict)

    def record(self, name: str, compute: Callable[[], float]) -> float | None:
        try:
            value = float(compute())
        except MetricUndefined as exc:
            self.values[name] = None
            self.reasons[name] = exc.reason
            return None
        if not math.isfinite(value):
            self.values[name] = None
            self.reasons[name] = "non-finite value"
            return None
        self.values[name] = value
        return value

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "reasons": self.reasons, "values": self.values}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        obj = json.loads(text)
        return cls(dict(obj["values"]), dict(obj.get("reasons", {})), dict(obj.get("metadata", {})))


def evaluate_corpora(real: Corpus, synthetic: Corpus, metrics: Iterable[str],
                     kinds: Sequence[str] = EVENT_KINDS) -> MetricReport:
    """Fill a report with the requested event-level metrics."""
    report = MetricReport(metadata={
        "real_digest": corpus_digest(real),
        "synthetic_digest": corpus_digest(synthetic),
        "kinds": list(kinds),
    })
    for name in metrics:
        if name in ("unigram", "bigram", "seq_bigram"):
            scope = {"unigram": "unigram", "bigram": "same_visit_bigram",
                     "seq_bigram": "sequential_bigram"}[name]
            report.record(name, lambda s=scope: similarity_score(real, synthetic, s, kinds))
        elif name == "dimwise":
            report.record(name, lambda: dimwise_fidelity(real, synthetic, kinds))
        else:
            raise ParameterError(f"unknown metric {name!r}")
    return report
