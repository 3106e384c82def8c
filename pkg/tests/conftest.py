"""Shared fixtures and independent oracles for the test suite.

The tiny MDP here is the enumeration-checkable instance used by the sampler
and acceptance tests: 3 states, 2 actions, a known transition table and one
trajectory of length 6, so the full latent posterior (32 action sequences,
optionally times 8 indicator configurations) can be enumerated exactly.
"""

import itertools

import numpy as np
import pytest

from polrec.core import FiniteStates, FiniteTable, Trajectory
from polrec.dists import log_dirmult

TINY_P = np.array([
    [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]],
    [[0.3, 0.4, 0.3], [0.5, 0.25, 0.25]],
    [[0.2, 0.6, 0.2], [0.4, 0.1, 0.5]],
])
TINY_STATES = np.array([0, 1, 2, 0, 2, 1])


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@pytest.fixture(scope="session")
def tiny_mdp():
    table = FiniteTable(TINY_P)
    traj = Trajectory(TINY_STATES, np.array([0, len(TINY_STATES)]), FiniteStates(3))
    return traj, table


def _phi_of(actions, n_states=3, n_actions=2):
    phi = np.zeros((n_states, n_actions), dtype=np.int64)
    for t, a in enumerate(actions):
        phi[TINY_STATES[t], a] += 1
    return phi


def enumerate_static_posterior(alpha=1.0):
    """Exact action marginals and per-state predictive action distribution
    of the static model on the tiny MDP, by brute-force enumeration of all
    2^5 latent action sequences."""
    n_act, n_actions, n_states = 5, 2, 3
    seqs = list(itertools.product(range(n_actions), repeat=n_act))
    logw = []
    for acts in seqs:
        lw = sum(np.log(TINY_P[TINY_STATES[t], acts[t], TINY_STATES[t + 1]])
                 for t in range(n_act))
        phi = _phi_of(acts)
        lw += sum(log_dirmult(phi[i], alpha) for i in range(n_states))
        logw.append(lw)
    w = np.exp(np.array(logw) - max(logw))
    w /= w.sum()
    marginals = np.zeros((n_act, n_actions))
    predictive = np.zeros((n_states, n_actions))
    for wi, acts in zip(w, seqs):
        for t, a in enumerate(acts):
            marginals[t, a] += wi
        phi = _phi_of(acts)
        predictive += wi * (phi + alpha) / (phi.sum(axis=1, keepdims=True)
                                            + n_actions * alpha)
    return marginals, predictive


def enumerate_mixture_posterior(n_clusters=2, alpha=1.0):
    """Exact indicator marginals and co-assignment probabilities of the
    K-cluster mixture (non-informative prior) on the tiny MDP."""
    n_act, n_actions, n_states = 5, 2, 3
    logw, configs = [], []
    for acts in itertools.product(range(n_actions), repeat=n_act):
        lw_t = sum(np.log(TINY_P[TINY_STATES[t], acts[t], TINY_STATES[t + 1]])
                   for t in range(n_act))
        for z in itertools.product(range(n_clusters), repeat=n_states):
            xi = np.zeros((n_clusters, n_actions), dtype=np.int64)
            for t, a in enumerate(acts):
                xi[z[TINY_STATES[t]], a] += 1
            lw = lw_t + sum(log_dirmult(xi[k], alpha) for k in range(n_clusters))
            logw.append(lw)
            configs.append(z)
    w = np.exp(np.array(logw) - max(logw))
    w /= w.sum()
    marginals = np.zeros((n_states, n_clusters))
    coassign = np.zeros((n_states, n_states))
    for wi, z in zip(w, configs):
        for i in range(n_states):
            marginals[i, z[i]] += wi
            for j in range(n_states):
                coassign[i, j] += wi * (z[i] == z[j])
    return marginals, coassign
