"""Classification metrics, threshold-free ranking metrics and the epoch timing protocol.

Undefined ratios (zero denominators, a missing class) come back as ``None``
together with a flag naming the reason; they are never NaN.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, KOutOfRange, LengthMismatch

TABLE_COLUMNS = ("auroc", "aupr", "acc", "bacc", "prec", "tpr", "kappa")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _as_pair(probs, labels):
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(probs) != len(labels):
        raise LengthMismatch(f"{len(probs)} scores vs {len(labels)} labels")
    if len(probs) == 0:
        raise EmptyInput("no predictions to score")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return probs, labels.astype(np.int64)


def confusion(probs, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Counts with ``prob >= threshold`` read as a positive prediction."""
    probs, labels = _as_pair(probs, labels)
    pred = probs >= threshold
    pos = labels == 1
    return ConfusionCounts(tp=int((pred & pos).sum()), tn=int((~pred & ~pos).sum()),
                           fp=int((pred & ~pos).sum()), fn=int((~pred & pos).sum()))


def _ratio(num, den):
    return None if den == 0 else num / den


def classification_metrics(c: ConfusionCounts) -> dict:
    """acc, bacc, prec, tpr, tnr and Cohen's kappa; ``None`` marks an undefined value."""
    n = c.total
    if n == 0:
        raise EmptyInput("confusion counts are all zero")
    acc = (c.tp + c.tn) / n
    tpr = _ratio(c.tp, c.tp + c.fn)
    tnr = _ratio(c.tn, c.tn + c.fp)
    prec = _ratio(c.tp, c.tp + c.fp)
    bacc = None if tpr is None or tnr is None else (tpr + tnr) / 2
    # (p_o - p_e) / (1 - p_e) scaled by n^2 so it stays in integers until one final division
    chance = (c.tp + c.fp) * (c.tp + c.fn) + (c.fn + c.tn) * (c.fp + c.tn)
    kappa = None if chance == n * n else (n * (c.tp + c.tn) - chance) / (n * n - chance)
    return {"acc": acc, "bacc": bacc, "prec": prec, "tpr": tpr, "tnr": tnr, "kappa": kappa}


def auroc(probs, labels) -> float | None:
    """Mann-Whitney concordance with ties worth one half, by a single sorted sweep.

    Returns ``None`` when only one class is present.
    """
    probs, labels = _as_pair(probs, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(-probs, kind="stable")
    s, y = probs[order], labels[order]
    # group boundaries of tied scores, descending
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    pos_in = np.add.reduceat(y, starts)
    neg_in = np.diff(np.r_[starts, len(s)]) - pos_in
    pos_above = np.cumsum(pos_in) - pos_in
    concordant = float(np.sum(neg_in * (pos_above + 0.5 * pos_in)))
    return concordant / (n_pos * n_neg)


def aupr(probs, labels) -> float | None:
    """Step-wise area under precision-recall: sum of P(t) * dR(t) over descending thresholds.

    Tied scores share one threshold. Returns ``None`` without positives.
    """
    probs, labels = _as_pair(probs, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-probs, kind="stable")
    s, y = probs[order], labels[order]
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    predicted = ends + 1
    gained = np.diff(np.r_[0, tp])
    total = 0.0
    for k in range(len(ends)):
        if gained[k]:
            total += gained[k] * (tp[k] / predicted[k])
    return total / n_pos


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    auroc: float | None
    aupr: float | None
    acc: float | None
    bacc: float | None
    prec: float | None
    tpr: float | None
    tnr: float | None
    kappa: float | None
    threshold: float = 0.5
    n: int = 0
    flags: list = field(default_factory=list)

    @classmethod
    def from_predictions(cls, probs, labels, threshold=0.5) -> "MetricsReport":
        counts = confusion(probs, labels, threshold)
        cm = classification_metrics(counts)
        report = cls(auroc=auroc(probs, labels), aupr=aupr(probs, labels), threshold=threshold,
                     n=counts.total, **cm)
        reasons = {"auroc": "single class in labels", "aupr": "no positive labels",
                   "prec": "no predicted positives", "tpr": "no positive labels",
                   "tnr": "no negative labels", "bacc": "a class is missing", "kappa": "chance agreement is 1"}
        report.flags = [f"{k}: {reasons[k]}" for k in reasons if getattr(report, k) is None]
        return report

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (*TABLE_COLUMNS, "tnr", "threshold", "n", "flags")}


def aggregate_reports(reports) -> dict:
    """Per-metric mean and sample standard deviation across folds, skipping undefined values."""
    out = {}
    for key in (*TABLE_COLUMNS, "tnr"):
        vals = np.array([getattr(r, key) for r in reports if getattr(r, key) is not None], dtype=np.float64)
        if len(vals) == 0:
            out[key] = {"mean": None, "std": None, "n": 0}
        else:
            std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            out[key] = {"mean": float(vals.mean()), "std": std, "n": int(len(vals))}
    return out


def format_table(aggregate: dict, digits: int = 2) -> str:
    """Two-line table in the column order AUROC AUPR ACC BACC PREC TPR KAPPA."""
    head = " | ".join(f"{c.upper():>11}" for c in TABLE_COLUMNS)
    cells = []
    for c in TABLE_COLUMNS:
        m = aggregate[c]
        cells.append(f"{'n/a':>11}" if m["mean"] is None else f"{m['mean']:.{digits}f} ± {m['std']:.{digits}f}".rjust(11))
    return head + "\n" + " | ".join(cells)


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# timing


def timing(t_list, k: int) -> dict:
    """Average and cumulative training time over the first ``k`` epochs."""
    t = np.asarray(t_list, dtype=np.float64).reshape(-1)
    if not 1 <= k <= len(t):
        raise KOutOfRange(f"K={k} but {len(t)} epoch times are recorded")
    if (t[:k] <= 0).any():
        raise ValueError("epoch times must be positive")
    c = float(t[:k].sum())
    return {"T_train": c / k, "C_train": c}


def speedup(c_base: float, c_prop: float) -> float:
    if c_base <= 0 or c_prop <= 0:
        raise ValueError("cumulative times must be positive")
    return c_base / c_prop


@dataclass
class EpochTimer:
    times: list = field(default_factory=list)
    _start: float | None = None

    def start(self):
        self._start = time.perf_counter()

    def stop(self) -> float:
        if self._start is None:
            raise RuntimeError("timer was not started")
        dt = max(time.perf_counter() - self._start, 1e-9)
        self.times.append(dt)
        self._start = None
        return dt

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
        return False

    def summary(self, k: int | None = None) -> dict:
        k = len(self.times) if k is None else k
        return {"epochs": len(self.times), "K": k, "times": list(self.times), **timing(self.times, k)}
