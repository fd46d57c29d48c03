"""Per-class and overall precision / recall / F1 for binary label predictions.

Any ratio with a zero denominator is reported as 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import atomic_write_text

AGGREGATE_KEYS = ("c_p", "c_r", "c_f1", "o_p", "o_r", "o_f1")


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.tp.shape[0]


@dataclass
class MetricsReport:
    c_p: float
    c_r: float
    c_f1: float
    o_p: float
    o_r: float
    o_f1: float
    precision: list
    recall: list
    f1: list

    @property
    def micro_f1(self) -> float:
        return self.o_f1

    @property
    def macro_f1(self) -> float:
        return self.c_f1

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in AGGREGATE_KEYS}
        out["per_label_precision"] = list(self.precision)
        out["per_label_recall"] = list(self.recall)
        out["per_label_f1"] = list(self.f1)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _as_binary(x, name):
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (labels x instances) matrix")
    if np.any((x != 0) & (x != 1)):
        raise ValueError(f"{name} must be binary")
    return x.astype(bool)


def confusion(pred, truth, mask=None) -> ConfusionCounts:
    """Count tp/fp/fn/tn per label (rows) over instances (columns).

    ``mask`` (same shape, optional) excludes entries from every count, which
    is how unknown ground-truth labels are skipped.
    """
    pred = _as_binary(pred, "pred")
    truth = _as_binary(truth, "truth")
    if pred.shape != truth.shape:
        raise ValueError(f"pred shape {pred.shape} does not match truth shape {truth.shape}")
    keep = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if keep.shape != pred.shape:
        raise ValueError("mask shape does not match predictions")
    tp = np.sum(pred & truth & keep, axis=1)
    fp = np.sum(pred & ~truth & keep, axis=1)
    fn = np.sum(~pred & truth & keep, axis=1)
    tn = np.sum(~pred & ~truth & keep, axis=1)
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def _f1(p, r) -> float:
    return 2.0 * p * r / (p + r) if p + r else 0.0


def report(counts: ConfusionCounts) -> MetricsReport:
    tp = [int(v) for v in counts.tp]
    fp = [int(v) for v in counts.fp]
    fn = [int(v) for v in counts.fn]
    precision = [_ratio(a, a + b) for a, b in zip(tp, fp)]
    recall = [_ratio(a, a + b) for a, b in zip(tp, fn)]
    f1 = [_f1(p, r) for p, r in zip(precision, recall)]
    m = len(tp)
    # fsum keeps the class means correctly rounded and order independent
    c_p = math.fsum(precision) / m if m else 0.0
    c_r = math.fsum(recall) / m if m else 0.0
    c_f1 = math.fsum(f1) / m if m else 0.0
    o_p = _ratio(sum(tp), sum(tp) + sum(fp))
    o_r = _ratio(sum(tp), sum(tp) + sum(fn))
    return MetricsReport(c_p, c_r, c_f1, o_p, o_r, _f1(o_p, o_r), precision, recall, f1)


def evaluate(pred, truth, mask=None) -> MetricsReport:
    return report(confusion(pred, truth, mask))


def micro_f1(pred, truth, mask=None) -> float:
    return evaluate(pred, truth, mask).o_f1


def macro_f1(pred, truth, mask=None) -> float:
    return evaluate(pred, truth, mask).c_f1


def save_report(rep: MetricsReport, path) -> None:
    atomic_write_text(path, rep.to_json())


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
