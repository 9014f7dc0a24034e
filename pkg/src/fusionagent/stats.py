"""Evaluation metrics: MSD, Pearson r, KL divergence, chi-square uniformity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ADVANTAGEOUS


@dataclass(frozen=True, eq=False)
class TrajectorySummary:
    """Choice proportions: advantageous rate per block of trials and per-deck totals."""

    block_advantageous: np.ndarray
    deck_proportions: np.ndarray
    subject_count: int
    block_deck: np.ndarray = None  # (blocks, decks)

    @classmethod
    def from_actions(cls, actions, block: int = 10, n_actions: int = 4, good=ADVANTAGEOUS) -> "TrajectorySummary":
        a = np.atleast_2d(np.asarray(actions, dtype=int))
        n_subj, T = a.shape
        n_blocks = T // block
        a = a[:, : n_blocks * block].reshape(n_subj, n_blocks, block)
        adv = np.isin(a, good).mean(axis=(0, 2))
        per_block = np.stack([(a == d).mean(axis=(0, 2)) for d in range(n_actions)], axis=1)
        overall = per_block.mean(axis=0)
        return cls(adv, overall, n_subj, per_block)


def msd(sim: TrajectorySummary, ref: TrajectorySummary) -> float:
    """Mean squared deviation of per-block, per-deck choice proportions."""
    a, b = sim.block_deck, ref.block_deck
    if a is None or b is None or a.shape != b.shape:
        raise ValueError("trajectory summaries have different block structure")
    return float(np.mean((a - b) ** 2))


def pearson_r(x, y) -> float | None:
    """Sample correlation; None when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson_r needs two equal-length vectors of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    scale = max(np.max(np.abs(x)), np.max(np.abs(y)), 1e-300)
    if sxx <= (1e-13 * scale) ** 2 * len(x) or syy <= (1e-13 * scale) ** 2 * len(y):
        return None
    r = np.dot(dx, dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def kl_divergence(p, q, eps: float = 1e-9) -> float:
    """KL(p || q) in nats with additive smoothing of both arguments."""
    p = np.asarray(p, dtype=float) + eps
    q = np.asarray(q, dtype=float) + eps
    p /= p.sum()
    q /= q.sum()
    return float(max(0.0, np.sum(p * np.log(p / q))))


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x), valid for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(1000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # upper regularized Q(a, x) by modified Lentz, valid for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_sf(stat: float, dof: int) -> float:
    return gammaincc(dof / 2.0, stat / 2.0)


def chi_square_uniformity(counts) -> tuple[float, float]:
    """Pearson chi-square statistic against a uniform expectation and its p-value."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        raise ValueError("counts must have a positive total")
    expected = total / len(c)
    stat = float(np.sum((c - expected) ** 2) / expected)
    return stat, float(min(1.0, max(0.0, chi2_sf(stat, len(c) - 1))))


def expected_counts(prob, n: int) -> np.ndarray:
    """Largest-remainder rounding of ``n * prob`` to integers summing to ``n``."""
    raw = np.asarray(prob, dtype=float) * n
    base = np.floor(raw).astype(int)
    short = n - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base
