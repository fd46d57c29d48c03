"""Multi-label datasets: text I/O, missing-label simulation, splits and batching."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np

from .losses import LabelSets

POS = 1
NEG = 0
MISSING = -1


class DatasetFormatError(ValueError):
    pass


@dataclass
class MultiLabelDataset:
    """``features`` is (d, N) float64; ``labels`` is (m, N) int8 with POS/NEG/MISSING."""

    features: np.ndarray
    labels: np.ndarray
    label_names: Optional[list[str]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("features and labels must be 2-D")
        if self.features.shape[1] != self.labels.shape[1]:
            raise ValueError(
                f"{self.features.shape[1]} feature columns but {self.labels.shape[1]} label columns"
            )
        if not np.all(np.isin(self.labels, (POS, NEG, MISSING))):
            raise ValueError("labels must be POS (1), NEG (0) or MISSING (-1)")
        if self.labels.shape[0] and np.any(np.all(self.labels == MISSING, axis=0)):
            raise ValueError("an instance has every label missing")
        if self.label_names is not None and len(self.label_names) != self.labels.shape[0]:
            raise ValueError("label_names length does not match the label count")

    @property
    def n_instances(self) -> int:
        return self.features.shape[1]

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[0]

    @property
    def has_missing(self) -> bool:
        return bool(np.any(self.labels == MISSING))

    def binary_labels(self) -> np.ndarray:
        """0/1 view; missing entries read as 0."""
        return (self.labels == POS).astype(np.float64)

    def label_sets(self) -> LabelSets:
        return LabelSets.from_ternary(self.labels)

    def subset(self, indices) -> "MultiLabelDataset":
        indices = np.asarray(indices, dtype=int)
        return MultiLabelDataset(self.features[:, indices], self.labels[:, indices], self.label_names)

    def __eq__(self, other):
        if not isinstance(other, MultiLabelDataset):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and self.labels.shape == other.labels.shape
            and self.features.tobytes() == other.features.tobytes()
            and np.array_equal(self.labels, other.labels)
        )


# ---------------------------------------------------------------------------
# text format


def _parse_labels(token, m, lineno):
    pos, missing = [], []
    for item in token.split(","):
        if not item:
            raise DatasetFormatError(f"line {lineno}: empty label entry")
        target = missing if item.startswith("?") else pos
        raw = item[1:] if item.startswith("?") else item
        try:
            idx = int(raw)
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: bad label index {item!r}") from None
        if not 0 <= idx < m:
            raise DatasetFormatError(f"line {lineno}: label index {idx} outside [0, {m})")
        target.append(idx)
    if len(set(pos) | set(missing)) != len(pos) + len(missing):
        raise DatasetFormatError(f"line {lineno}: label index repeated")
    return pos, missing


def _parse_features(tokens, d, lineno, out):
    last = -1
    for tok in tokens:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            raise DatasetFormatError(f"line {lineno}: expected index:value, got {tok!r}")
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: bad feature entry {tok!r}") from None
        if not 0 <= idx < d:
            raise DatasetFormatError(f"line {lineno}: feature index {idx} outside [0, {d})")
        if idx == last:
            raise DatasetFormatError(f"line {lineno}: duplicate feature index {idx}")
        if idx < last:
            raise DatasetFormatError(f"line {lineno}: feature indices not increasing at {idx}")
        if not np.isfinite(val):
            raise DatasetFormatError(f"line {lineno}: non-finite feature value {val_s!r}")
        out[idx] = val
        last = idx


def parse_dataset(text: str) -> MultiLabelDataset:
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            parts = line.split()
            try:
                header = tuple(int(p) for p in parts)
            except ValueError:
                header = ()
            if len(header) != 3 or min(header) < 0:
                raise DatasetFormatError(f"line {lineno}: header must be 'N d m', got {line!r}")
            continue
        rows.append((lineno, line))
    if header is None:
        raise DatasetFormatError("missing 'N d m' header")
    n, d, m = header
    if len(rows) != n:
        raise DatasetFormatError(f"header declares {n} instances, found {len(rows)}")
    features = np.zeros((d, n))
    labels = np.full((m, n), NEG, dtype=np.int8)
    for i, (lineno, line) in enumerate(rows):
        tokens = line.split()
        if tokens and ":" not in tokens[0]:
            pos, missing = _parse_labels(tokens[0], m, lineno)
            labels[pos, i] = POS
            labels[missing, i] = MISSING
            tokens = tokens[1:]
        _parse_features(tokens, d, lineno, features[:, i])
    try:
        return MultiLabelDataset(features, labels)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None


def load_dataset(path) -> MultiLabelDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def format_dataset(ds: MultiLabelDataset) -> str:
    lines = [f"{ds.n_instances} {ds.n_features} {ds.n_labels}"]
    for i in range(ds.n_instances):
        col = ds.labels[:, i]
        label_tok = ",".join(
            f"?{j}" if col[j] == MISSING else str(j)
            for j in range(ds.n_labels) if col[j] != NEG
        )
        x = ds.features[:, i]
        keep = np.flatnonzero((x != 0.0) | np.signbit(x))
        feats = [f"{j}:{float(x[j])!r}" for j in keep]
        if not label_tok and not feats:
            # an empty line would be skipped on reload
            feats = ["0:0.0"]
        lines.append(" ".join([label_tok] + feats) if label_tok else " ".join(feats))
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def save_dataset(ds: MultiLabelDataset, path) -> None:
    atomic_write_text(path, format_dataset(ds))


# ---------------------------------------------------------------------------
# missing labels


def mask_labels(ds: MultiLabelDataset, rate: float, seed=0) -> MultiLabelDataset:
    """Hide each known label with probability ``rate``.

    One positive per instance, chosen uniformly, is never hidden.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    if ds.has_missing:
        raise ValueError("dataset already contains missing labels")
    is_pos = ds.labels == POS
    n_pos = is_pos.sum(axis=0)
    if np.any(n_pos == 0):
        raise ValueError(f"instance {int(np.flatnonzero(n_pos == 0)[0])} has no positive label")
    rng = np.random.default_rng(seed)
    protected = np.zeros_like(is_pos)
    picks = rng.integers(0, n_pos)
    for i, k in enumerate(picks):
        protected[np.flatnonzero(is_pos[:, i])[k], i] = True
    hide = (rng.random(ds.labels.shape) < rate) & ~protected
    labels = ds.labels.copy()
    labels[hide] = MISSING
    return MultiLabelDataset(ds.features.copy(), labels, ds.label_names)


def preprocess_missing_inputs(labels) -> np.ndarray:
    """Zero-mean encoder input: POS -> 1, MISSING -> 0, NEG -> -n_pos / n_neg."""
    labels = np.asarray(labels)
    is_pos = labels == POS
    is_neg = labels == NEG
    n_pos = is_pos.sum(axis=0).astype(np.float64)
    n_neg = is_neg.sum(axis=0).astype(np.float64)
    neg_value = -n_pos / np.maximum(n_neg, 1.0)
    out = np.zeros(labels.shape)
    out[is_pos] = 1.0
    out = np.where(is_neg, neg_value[None, :], out)
    return out


def encoder_inputs(labels, missing_mode=False) -> np.ndarray:
    """What the label encoder sees: plain 0/1, or the zero-mean variant."""
    if missing_mode:
        return preprocess_missing_inputs(labels)
    return (np.asarray(labels) == POS).astype(np.float64)


# ---------------------------------------------------------------------------
# splitting and batching


def split_indices(n: int, fraction: float, seed=0):
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n_second = int(np.floor(fraction * n + 0.5))
    if n_second == 0 or n_second == n:
        raise ValueError(f"splitting {n} instances at fraction {fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_second:]), np.sort(perm[:n_second])


def split(ds: MultiLabelDataset, val_fraction=1.0 / 6.0, seed=0):
    """Random (train, validation) partition; validation gets round(fraction * N) instances."""
    if ds.n_instances < 2:
        raise ValueError("need at least two instances to split")
    train_idx, val_idx = split_indices(ds.n_instances, val_fraction, seed)
    return ds.subset(train_idx), ds.subset(val_idx)


@dataclass
class BatchPlan:
    """Batch size plus a seeded generator that reshuffles once per epoch."""

    batch_size: int
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.rng = np.random.default_rng(self.seed)

    def ordering(self, n: int) -> np.ndarray:
        return self.rng.permutation(n)


@dataclass
class Batch:
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray  # ternary
    sets: LabelSets


def batches(ds: MultiLabelDataset, plan: BatchPlan):
    """One epoch of shuffled batches; the last batch may be short."""
    order = plan.ordering(ds.n_instances)
    for start in range(0, ds.n_instances, plan.batch_size):
        idx = order[start:start + plan.batch_size]
        labels = ds.labels[:, idx]
        yield Batch(idx, ds.features[:, idx], labels, LabelSets.from_ternary(labels))


# ---------------------------------------------------------------------------
# synthetic data


def synth_correlated(n: int, d: int, m: int, seed=0, noise=0.1, max_retries=100) -> MultiLabelDataset:
    """Labels driven by shared Gaussian factors, so they co-occur.

    ``k = max(2, m // 2)`` factors ``z`` generate both the features
    ``A z + noise * eps`` and the labels ``w_j . z + b_j > 0``; the offsets put
    each label's positive rate at a target drawn from [0.2, 0.5]. Instances
    without any positive are redrawn.
    """
    if min(n, d, m) < 1:
        raise ValueError("n, d and m must all be >= 1")
    rng = np.random.default_rng(seed)
    k = max(2, m // 2)
    mixing = rng.standard_normal((d, k)) / np.sqrt(k)
    w = rng.standard_normal((m, k))
    rates = rng.uniform(0.2, 0.5, size=m)
    inv_cdf = NormalDist().inv_cdf
    b = np.array([np.linalg.norm(w[j]) * inv_cdf(rates[j]) for j in range(m)])

    z = rng.standard_normal((k, n))
    for _ in range(max_retries + 1):
        empty = np.flatnonzero(~np.any(w @ z + b[:, None] > 0.0, axis=0))
        if empty.size == 0:
            break
        z[:, empty] = rng.standard_normal((k, empty.size))
    else:
        raise RuntimeError("could not draw instances with a positive label; try another seed")
    features = mixing @ z + noise * rng.standard_normal((d, n))
    labels = np.where(w @ z + b[:, None] > 0.0, POS, NEG).astype(np.int8)
    return MultiLabelDataset(features, labels)


def tiny_dataset_path() -> str:
    """Path of the bundled 120-instance synthetic set (d=8, m=6)."""
    from importlib.resources import files

    return str(files("c2ae") / "resources" / "tiny.txt")
