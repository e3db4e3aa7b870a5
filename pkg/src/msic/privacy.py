"""Membership and attribute inference attacks against a synthetic corpus."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .data import EVENT_KINDS, Corpus, PatientRecord
from .errors import ParameterError


@dataclass(frozen=True)
class FlatRecord:
    """All (kind, code index) items a patient has across visits."""

    patient_id: str
    items: frozenset

    @classmethod
    def of(cls, record: PatientRecord) -> "FlatRecord":
        return cls(record.patient_id, frozenset(
            (kind, i) for v in record.visits for kind in EVENT_KINDS for i in v.events(kind).indices))


def jaccard_distance(a: FlatRecord | frozenset, b: FlatRecord | frozenset) -> float:
    """1 - |a ∩ b| / |a ∪ b|, with distance 0 between two empty records."""
    sa = a.items if isinstance(a, FlatRecord) else frozenset(a)
    sb = b.items if isinstance(b, FlatRecord) else frozenset(b)
    union = len(sa | sb)
    return 0.0 if union == 0 else 1.0 - len(sa & sb) / union


@dataclass
class AttackResult:
    kind: str
    f1: float
    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    baseline_f1: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def withstands(self) -> bool | None:
        """Attribute attack: synthetic data leaks less than real test data would."""
        return None if self.baseline_f1 is None else self.f1 < self.baseline_f1


def _records(data: Corpus | Sequence[PatientRecord]) -> list[PatientRecord]:
    return list(data.records if isinstance(data, Corpus) else data)


def _item_ids(records: Sequence[PatientRecord], sizes: dict[str, int]) -> list[list[int]]:
    offsets, n = {}, 0
    for kind in EVENT_KINDS:
        offsets[kind] = n
        n += sizes[kind]
    return [sorted({offsets[k] + i for v in r.visits for k in EVENT_KINDS for i in v.events(k).indices})
            for r in records]


def _sizes(*groups: Sequence[PatientRecord]) -> dict[str, int]:
    sizes = {k: 0 for k in EVENT_KINDS}
    for group in groups:
        for r in group:
            for v in r.visits:
                for k in EVENT_KINDS:
                    idx = v.events(k).indices
                    if idx:
                        sizes[k] = max(sizes[k], idx[-1] + 1)
    return sizes


def nearest_distances(queries: Sequence[PatientRecord], synthetic: Sequence[PatientRecord]):
    """(index, Jaccard distance) of each query's nearest synthetic record."""
    sizes = _sizes(queries, synthetic)
    q = kernels.to_csr(_item_ids(queries, sizes))
    s = kernels.to_csr(_item_ids(synthetic, sizes))
    return kernels.nearest_jaccard(*q, *s)


def _rates(pred: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": (tp + tn) / max(len(pred), 1), "precision": precision,
            "recall": recall, "f1": f1}


def membership_attack(train_sample, test_sample, synthetic, seed: int = 0,
                      calibration_fraction: float = 0.2, threshold: float | None = None) -> AttackResult:
    """Label a real record a member when its nearest synthetic record is within τ.

    τ is the lower median of nearest distances over a calibration split holding
    the same fraction of members and non-members, unless ``threshold`` fixes it. Scores
    are computed on the records outside the calibration split.
    """
    train, test, syn = _records(train_sample), _records(test_sample), _records(synthetic)
    if not syn:
        raise ParameterError("synthetic set is empty")
    if not train or not test:
        raise ParameterError("membership attack needs non-empty train and test samples")
    _, d_train = nearest_distances(train, syn)
    _, d_test = nearest_distances(test, syn)
    rng = np.random.default_rng(seed)
    eval_train, eval_test = np.arange(len(train)), np.arange(len(test))
    if threshold is None:
        if not 0.0 < calibration_fraction < 1.0:
            raise ParameterError("calibration_fraction must be in (0, 1)")
        perm_train, perm_test = rng.permutation(len(train)), rng.permutation(len(test))
        k_train = min(max(1, int(round(calibration_fraction * len(train)))), len(train) - 1)
        k_test = min(max(1, int(round(calibration_fraction * len(test)))), len(test) - 1)
        if k_train < 1 or k_test < 1:
            raise ParameterError("too few records to hold out a calibration split")
        calib = np.concatenate([d_train[perm_train[:k_train]], d_test[perm_test[:k_test]]])
        # Lower median: exactly half of an equal-count calibration sample is <= tau.
        tau = float(np.sort(calib)[(len(calib) - 1) // 2])
        eval_train, eval_test = np.sort(perm_train[k_train:]), np.sort(perm_test[k_test:])
    else:
        tau = float(threshold)
    dist = np.concatenate([d_train[eval_train], d_test[eval_test]])
    truth = np.concatenate([np.ones(len(eval_train), bool), np.zeros(len(eval_test), bool)])
    rates = _rates(dist <= tau, truth)
    return AttackResult("membership", config={
        "threshold": tau, "calibrated": threshold is None,
        "calibration_fraction": calibration_fraction, "seed": seed,
        "n_train": len(train), "n_test": len(test), "n_synthetic": len(syn)}, **rates)


def attribute_attack(train_records, synthetic, common_fraction: float = 0.2, seed: int = 0,
                     test_records=None, sizes: dict[str, int] | None = None) -> AttackResult:
    """Predict each training patient's sensitive items from a synthetic neighbour.

    The neighbour is the synthetic record sharing the most common items with
    the patient (lowest index on ties). ``baseline_f1`` repeats the attack
    with ``test_records`` in place of the synthetic set. ``sizes`` gives the
    vocabulary sizes; by default they are taken from a corpus argument or
    inferred from the data.
    """
    train, syn = _records(train_records), _records(synthetic)
    if not syn:
        raise ParameterError("synthetic set is empty")
    test = _records(test_records) if test_records is not None else None
    if sizes is None:
        for candidate in (train_records, synthetic, test_records):
            if isinstance(candidate, Corpus):
                sizes = candidate.sizes
                break
        else:
            sizes = _sizes(train, syn, test or [])
    n_items = sum(sizes[k] for k in EVENT_KINDS)
    common = common_items(train, sizes, common_fraction)

    f1 = _attribute_f1(train, syn, sizes, common)
    baseline = _attribute_f1(train, test, sizes, common) if test else None
    return AttackResult("attribute", f1=f1, baseline_f1=baseline, config={
        "common_fraction": common_fraction, "n_common": int(common.sum()), "n_items": n_items,
        "seed": seed, "n_train": len(train), "n_synthetic": len(syn)})


def common_items(train: Sequence[PatientRecord], sizes: dict[str, int],
                 common_fraction: float) -> np.ndarray:
    """Mask of the most frequent items by number of training patients having them.

    Equal frequencies are ranked by lower item id.
    """
    if not 0.0 < common_fraction < 1.0:
        raise ParameterError("common_fraction must be in (0, 1)")
    n_items = sum(sizes[k] for k in EVENT_KINDS)
    counts = np.zeros(n_items, dtype=np.int64)
    for row in _item_ids(train, sizes):
        counts[row] += 1
    k = int(round(common_fraction * n_items))
    if k < 1 or k >= n_items:
        raise ParameterError(f"common_fraction {common_fraction} leaves no common or no sensitive items")
    order = np.lexsort((np.arange(n_items), -counts))
    mask = np.zeros(n_items, dtype=bool)
    mask[order[:k]] = True
    return mask


def _attribute_f1(targets, candidates, sizes, common) -> float:
    t_rows, c_rows = _item_ids(targets, sizes), _item_ids(candidates, sizes)
    t_common = kernels.to_csr([[i for i in r if common[i]] for r in t_rows])
    c_common = kernels.to_csr([[i for i in r if common[i]] for r in c_rows])
    best, _ = kernels.max_overlap(*t_common, *c_common)
    tp = fp = fn = 0
    for row, j in zip(t_rows, best):
        truth = {i for i in row if not common[i]}
        guess = {i for i in c_rows[j] if not common[i]}
        tp += len(truth & guess)
        fp += len(guess - truth)
        fn += len(truth - guess)
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0
