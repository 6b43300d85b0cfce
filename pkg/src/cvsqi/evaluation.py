"""Confusion-matrix metrics, ROC/AUC, Youden's J, and the subject-disjoint split."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, SingleClassDataset, TooFewSubjects


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(preds, labels) -> ConfusionCounts:
    """Counts with the normal (quality-1) class as positive; labels use eval encoding."""
    p = np.asarray(preds, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape:
        raise LengthMismatch(f"predictions {p.shape} vs labels {y.shape}")
    return ConfusionCounts(
        tp=int(np.sum((p == 1) & (y == 1))),
        tn=int(np.sum((p == 0) & (y == 0))),
        fp=int(np.sum((p == 1) & (y == 0))),
        fn=int(np.sum((p == 0) & (y == 1))),
    )


METRIC_NAMES = ("accuracy", "ppv", "npv", "sensitivity", "specificity")


@dataclass
class Metrics:
    values: dict[str, float | None]
    undefined: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> float | None:
        return self.values[name]


def metrics(c: ConfusionCounts) -> Metrics:
    """The five confusion metrics; zero-denominator metrics are reported as undefined."""
    if c.total == 0:
        raise LengthMismatch("cannot compute metrics from empty counts")

    def ratio(num, den):
        return num / den if den > 0 else None

    values = {
        "accuracy": (c.tp + c.tn) / c.total,
        "ppv": ratio(c.tp, c.tp + c.fp),
        "npv": ratio(c.tn, c.tn + c.fn),
        "sensitivity": ratio(c.tp, c.tp + c.fn),
        "specificity": ratio(c.tn, c.tn + c.fp),
    }
    return Metrics(values=values,
                   undefined=[k for k, v in values.items() if v is None])


def youden_j(c: ConfusionCounts) -> float:
    m = metrics(c)
    sens = m["sensitivity"] if m["sensitivity"] is not None else 0.0
    spec = m["specificity"] if m["specificity"] is not None else 0.0
    return sens + spec - 1.0


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC curve (threshold +inf -> -inf) and trapezoidal AUC, with tie grouping.

    Higher score means more positive.  Returns ([(fpr, tpr), ...], auc).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape:
        raise LengthMismatch(f"scores {s.shape} vs labels {y.shape}")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("ROC needs both classes present")

    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    # keep only the last index of each tied score group
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s_sorted.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    auc = float(getattr(np, "trapezoid", np.trapz)(tpr, fpr))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


def split_by_subject(cycles, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Partition cycles into (train, val, test) with disjoint subject sets.

    Greedy largest-first bin packing toward the target cycle fractions;
    deterministic under seed; every split is guaranteed non-empty.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise TooFewSubjects("fractions must be three values summing to 1")
    by_subject: dict[str, list] = {}
    for c in cycles:
        by_subject.setdefault(c.subject_id, []).append(c)
    subjects = list(by_subject)
    if len(subjects) < 3:
        raise TooFewSubjects(f"need at least 3 subjects, got {len(subjects)}")

    rng = np.random.default_rng(seed)
    rng.shuffle(subjects)
    subjects.sort(key=lambda s: -len(by_subject[s]))   # stable: seeded order within ties

    total = sum(len(v) for v in by_subject.values())
    targets = [f * total for f in fractions]
    assigned: list[list[str]] = [[], [], []]
    counts = [0, 0, 0]
    for sid in subjects:
        deficits = [targets[i] - counts[i] for i in range(3)]
        i = int(np.argmax(deficits))
        assigned[i].append(sid)
        counts[i] += len(by_subject[sid])
    # guarantee non-empty splits by stealing the smallest subject from the
    # most populated split
    for i in range(3):
        if not assigned[i]:
            donor = max(range(3), key=lambda j: (len(assigned[j]), counts[j]))
            sid = min(assigned[donor], key=lambda s: len(by_subject[s]))
            assigned[donor].remove(sid)
            assigned[i].append(sid)
            counts[donor] -= len(by_subject[sid])
            counts[i] += len(by_subject[sid])

    out = []
    for group in assigned:
        split = []
        for sid in group:
            split.extend(by_subject[sid])
        out.append(split)
    return tuple(out)
