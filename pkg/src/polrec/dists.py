"""Probability primitives: seeded RNG streams, Dirichlet and categorical
sampling, the Dirichlet-multinomial marginal, and transition densities.

Everything likelihood-shaped works in log space; categorical weights are
exponentiated after subtracting the max.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .core import FiniteTable, GaussianKernel


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Independent, reproducible generator for (seed, *path).

    Identical arguments give an identical draw sequence on every platform;
    distinct paths give statistically independent streams.  Experiments split
    streams per (Monte Carlo run, chain) so runs are order-independent.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=path))


# ---------------------------------------------------------------------------
# Sampling primitives
# ---------------------------------------------------------------------------


def sample_dirichlet(conc, rng) -> np.ndarray:
    """Draw a simplex point from Dir(conc)."""
    conc = np.asarray(conc, dtype=float)
    if np.any(conc <= 0) or not np.all(np.isfinite(conc)):
        raise ValueError("concentration entries must be positive")
    return rng.dirichlet(conc)


def categorical_index(weights, u: float) -> int:
    """Index drawn from unnormalized ``weights`` using uniform variate ``u``.

    Shared by the reference samplers and the compiled kernels so that both
    consume one uniform per draw with identical semantics: the smallest j
    with cumsum(w)[j] > u * sum(w); the last index on total underflow.
    """
    cdf = np.cumsum(weights)
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)


def sample_categorical(weights, rng) -> int:
    """Draw an index with probability proportional to ``weights``."""
    weights = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("weights must be finite and non-negative")
    if not np.any(weights > 0):
        raise ValueError("all categorical weights are zero")
    return categorical_index(weights, rng.random())


def normalized_exp(logw) -> np.ndarray:
    """exp(logw) normalized, with the max subtracted first."""
    logw = np.asarray(logw, dtype=float)
    w = np.exp(logw - logw.max())
    return w / w.sum()


# ---------------------------------------------------------------------------
# Dirichlet-multinomial marginal
# ---------------------------------------------------------------------------


def log_dirmult(counts, alpha: float) -> float:
    """log p(counts) under a symmetric Dirichlet(alpha) prior on the
    categorical weights:

        log Gamma(A a) - log Gamma(N + A a)
          + sum_j [log Gamma(n_j + a) - log Gamma(a)],   N = sum_j n_j.

    Exchangeable in the count vector; equals the log of the sequential
    Polya-urn product for any ordering of the underlying draws.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    n_cat = counts.shape[-1]
    total = counts.sum(axis=-1)
    return (
        gammaln(n_cat * alpha)
        - gammaln(total + n_cat * alpha)
        + (gammaln(counts + alpha) - gammaln(alpha)).sum(axis=-1)
    )


class DirMultTable:
    """Lookup tables for Dirichlet-multinomial terms on the integer lattice.

    For fixed alpha and category count A every gamma-function argument a
    sampler can produce lies on one of two lattices, so the whole DirMult
    computation reduces to table lookups.  ``per_count[m] = lgamma(m + a)``
    and ``per_total[m] = lgamma(m + A a)`` for m = 0..max_count.
    """

    def __init__(self, alpha: float, n_cat: int, max_count: int):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        m = np.arange(max_count + 1, dtype=float)
        self.alpha = float(alpha)
        self.n_cat = int(n_cat)
        self.per_count = gammaln(m + alpha)
        self.per_total = gammaln(m + n_cat * alpha)

    def log_dirmult(self, counts) -> float:
        counts = np.asarray(counts)
        total = int(counts.sum())
        return float(
            self.per_total[0]
            - self.per_total[total]
            + self.per_count[counts].sum()
            - self.n_cat * self.per_count[0]
        )


# ---------------------------------------------------------------------------
# Transition densities
# ---------------------------------------------------------------------------


def log_transition_density(model, s, a: int, s_next) -> float:
    """Log density (continuous) or log probability (finite) of s -> s_next
    under action a."""
    if isinstance(model, GaussianKernel):
        mean = np.asarray(s, dtype=float) + model.mu * model.actions.unit_vectors[a]
        diff = np.asarray(s_next, dtype=float) - mean
        var = model.sigma**2
        return float(-np.log(2.0 * np.pi * var) - diff @ diff / (2.0 * var))
    if isinstance(model, FiniteTable):
        if not (0 <= s < model.n_states and 0 <= s_next < model.n_states):
            raise ValueError("state index out of range")
        if not 0 <= a < model.n_actions:
            raise ValueError("action index out of range")
        with np.errstate(divide="ignore"):
            return float(np.log(model.probs[s, a, s_next]))
    raise TypeError(f"unknown transition model: {type(model)!r}")


def log_transition_row(model, s, s_next) -> np.ndarray:
    """Vector of log T(s_next | s, a) over all actions a.

    This is the per-transition likelihood row that reweights every action
    conditional; samplers precompute it once per observed transition.
    """
    if isinstance(model, GaussianKernel):
        diff = np.asarray(s_next, dtype=float) - np.asarray(s, dtype=float)
        delta = diff[None, :] - model.mu * model.actions.unit_vectors
        var = model.sigma**2
        return -np.log(2.0 * np.pi * var) - (delta**2).sum(axis=1) / (2.0 * var)
    if isinstance(model, FiniteTable):
        with np.errstate(divide="ignore"):
            return np.log(model.probs[s, :, s_next])
    raise TypeError(f"unknown transition model: {type(model)!r}")
