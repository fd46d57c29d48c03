"""Latent-space alignment loss, pairwise output ranking loss, and BCE.

All score/latent matrices are ``(dim, n_instances)``.
"""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

# Score differences are clipped to this magnitude before exponentiation.
EXP_CLIP = 50.0

# Bound on m * m * chunk entries held in memory by the pairwise loss.
_PAIR_BUDGET = 4_000_000


class LabelSets:
    """Per-instance positive / negative / missing label index sets.

    Stored as boolean ``(m, n)`` masks; ``pos(i)`` and friends give the index
    view of a single instance.
    """

    def __init__(self, pos_mask, neg_mask):
        pos_mask = np.asarray(pos_mask, dtype=bool)
        neg_mask = np.asarray(neg_mask, dtype=bool)
        if pos_mask.shape != neg_mask.shape or pos_mask.ndim != 2:
            raise ValueError("positive and negative masks must be 2-D and equally shaped")
        if np.any(pos_mask & neg_mask):
            raise ValueError("a label cannot be both positive and negative")
        self.pos_mask = pos_mask
        self.neg_mask = neg_mask

    @classmethod
    def from_ternary(cls, labels):
        """From a label matrix with 1 = positive, 0 = negative, -1 = missing."""
        labels = np.asarray(labels)
        bad = ~np.isin(labels, (-1, 0, 1))
        if np.any(bad):
            raise ValueError("ternary labels must be -1, 0 or 1")
        return cls(labels == 1, labels == 0)

    @classmethod
    def from_binary(cls, labels):
        labels = np.asarray(labels)
        if np.any((labels != 0) & (labels != 1)):
            raise ValueError("binary labels must be 0 or 1")
        return cls(labels == 1, labels == 0)

    @classmethod
    def from_indices(cls, pos, neg, m, missing=None):
        """From per-instance lists of index lists; unlisted labels are missing."""
        n = len(pos)
        if len(neg) != n or (missing is not None and len(missing) != n):
            raise ValueError("index lists disagree on the number of instances")
        pos_mask = np.zeros((m, n), dtype=bool)
        neg_mask = np.zeros((m, n), dtype=bool)
        seen = np.zeros((m, n), dtype=int)
        groups = [pos, neg] + ([missing] if missing is not None else [])
        for group, mask in zip(groups, [pos_mask, neg_mask, None]):
            for i, idx in enumerate(group):
                idx = np.asarray(list(idx), dtype=int)
                if idx.size and (idx.min() < 0 or idx.max() >= m):
                    raise IndexError(f"label index out of range [0, {m}) for instance {i}")
                seen[idx, i] += 1
                if mask is not None:
                    mask[idx, i] = True
        if np.any(seen > 1):
            raise ValueError("positive, negative and missing sets must be disjoint")
        return cls(pos_mask, neg_mask)

    @property
    def m(self) -> int:
        return self.pos_mask.shape[0]

    @property
    def n(self) -> int:
        return self.pos_mask.shape[1]

    @property
    def missing_mask(self) -> np.ndarray:
        return ~(self.pos_mask | self.neg_mask)

    @property
    def known_mask(self) -> np.ndarray:
        return self.pos_mask | self.neg_mask

    def pos(self, i):
        return np.flatnonzero(self.pos_mask[:, i])

    def neg(self, i):
        return np.flatnonzero(self.neg_mask[:, i])

    def missing(self, i):
        return np.flatnonzero(self.missing_mask[:, i])

    def subset(self, columns):
        return LabelSets(self.pos_mask[:, columns], self.neg_mask[:, columns])


def _check_latent(cx, cy):
    cx = np.asarray(cx, dtype=np.float64)
    cy = np.asarray(cy, dtype=np.float64)
    if cx.ndim != 2 or cx.shape != cy.shape:
        raise ValueError(f"latent batches must share a 2-D shape, got {cx.shape} and {cy.shape}")
    if cx.shape[0] < 1 or cx.shape[1] < 1:
        raise ValueError("latent batches must be non-empty")
    return cx, cy


def penalty_terms(cx, cy, normalize=False):
    """Return (c1, c2, c3): the alignment residual and the two whitening residuals.

    With ``normalize`` the Gram matrices are divided by the batch size.
    """
    cx, cy = _check_latent(cx, cy)
    scale = 1.0 / cx.shape[1] if normalize else 1.0
    eye = np.eye(cx.shape[0])
    c1 = cx - cy
    c2 = scale * (cx @ cx.T) - eye
    c3 = scale * (cy @ cy.T) - eye
    return c1, c2, c3


def latent_loss(cx, cy, lam=0.5, normalize=False) -> float:
    """||cx - cy||_F^2 + lam * (||cx cx^T - I||_F^2 + ||cy cy^T - I||_F^2)."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    c1, c2, c3 = penalty_terms(cx, cy, normalize)
    return float(np.sum(c1 * c1) + lam * (np.sum(c2 * c2) + np.sum(c3 * c3)))


def latent_grads(cx, cy, lam=0.5, normalize=False):
    """Gradients of :func:`latent_loss` with respect to ``cx`` and ``cy``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    cx, cy = _check_latent(cx, cy)
    c1, c2, c3 = penalty_terms(cx, cy, normalize)
    scale = 1.0 / cx.shape[1] if normalize else 1.0
    # c2, c3 are symmetric, so d tr(C^T C) / d cx = 4 C cx.
    d_cx = 2.0 * c1 + 4.0 * lam * scale * (c2 @ cx)
    d_cy = -2.0 * c1 + 4.0 * lam * scale * (c3 @ cy)
    return d_cx, d_cy


def _check_scores(scores, sets: LabelSets):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (sets.m, sets.n):
        raise ValueError(f"scores have shape {scores.shape}, label sets are {(sets.m, sets.n)}")
    return scores


def _pair_terms(scores, sets: LabelSets):
    """Yield (columns, weights, exp_terms) over instance chunks.

    ``exp_terms[q, p, i] = exp(s[q, i] - s[p, i])`` and ``weights`` is the
    per-pair normaliser, zero outside (negative q) x (positive p).
    """
    m, n = scores.shape
    n_pos = sets.pos_mask.sum(axis=0)
    n_neg = sets.neg_mask.sum(axis=0)
    active = (n_pos > 0) & (n_neg > 0)
    norm = np.zeros(n)
    norm[active] = 1.0 / (n_pos[active] * n_neg[active])
    chunk = max(1, _PAIR_BUDGET // max(1, m * m))
    clipped = False
    for start in range(0, n, chunk):
        cols = slice(start, min(n, start + chunk))
        s = scores[:, cols]
        diff = s[:, None, :] - s[None, :, :]
        if np.any(np.abs(diff) > EXP_CLIP):
            clipped = True
            diff = np.clip(diff, -EXP_CLIP, EXP_CLIP)
        weights = (sets.neg_mask[:, None, cols] & sets.pos_mask[None, :, cols]) * norm[None, None, cols]
        yield cols, weights, np.exp(diff)
    if clipped:
        logger.warning("score differences exceeded +/-%g and were clipped", EXP_CLIP)


def output_loss(scores, sets: LabelSets) -> float:
    """Pairwise exponential ranking loss summed over instances.

    Each instance contributes the mean of exp(s_q - s_p) over its known
    (positive p, negative q) pairs; instances without such pairs add 0.
    """
    scores = _check_scores(scores, sets)
    total = 0.0
    for _, weights, terms in _pair_terms(scores, sets):
        total += float(np.sum(weights * terms))
    return total


def output_grad(scores, sets: LabelSets) -> np.ndarray:
    """Gradient of :func:`output_loss` with respect to every score."""
    scores = _check_scores(scores, sets)
    grad = np.zeros_like(scores)
    for cols, weights, terms in _pair_terms(scores, sets):
        wt = weights * terms
        # axis 0 runs over negatives q, axis 1 over positives p
        grad[:, cols] = wt.sum(axis=1) - wt.sum(axis=0)
    return grad


def output_loss_per_instance(scores, sets: LabelSets) -> np.ndarray:
    scores = _check_scores(scores, sets)
    out = np.zeros(sets.n)
    for cols, weights, terms in _pair_terms(scores, sets):
        out[cols] = np.sum(weights * terms, axis=(0, 1))
    return out


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def bce_loss(scores, sets: LabelSets):
    """Mean sigmoid cross-entropy over known labels, with its gradient."""
    scores = _check_scores(scores, sets)
    known = sets.known_mask
    count = int(known.sum())
    if count == 0:
        return 0.0, np.zeros_like(scores)
    target = sets.pos_mask.astype(np.float64)
    # log(1 + exp(-s)) for positives, log(1 + exp(s)) for negatives
    per_term = np.logaddexp(0.0, np.where(sets.pos_mask, -scores, scores))
    loss = float(np.sum(per_term[known])) / count
    grad = np.where(known, (_sigmoid(scores) - target) / count, 0.0)
    return loss, grad
