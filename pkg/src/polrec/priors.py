"""Indicator and link prior conditionals: non-informative, Dirichlet mixing
(sampled and collapsed), Potts spatial prior, CRP, and the distance-dependent
CRP link prior, together with the distance/kernel/neighborhood machinery they
share.

All conditionals return unnormalized weights unless stated otherwise; the
joint Potts normalizer and the reduced-model constant Z_s are never needed or
computed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dists import sample_dirichlet


# ---------------------------------------------------------------------------
# Distances, decay kernels, neighborhoods
# ---------------------------------------------------------------------------


def distance_table(coords) -> np.ndarray:
    """Dense Euclidean distances between all site pairs.

    Exactly symmetric with a zero diagonal.  Dense storage is the intended
    regime for the shipped experiments (around a thousand sites).
    """
    coords = np.asarray(coords, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True)
class PottsKernel:
    """Gaussian-shaped similarity decay, f(d) = exp(-d^2 / sigma_f^2)."""

    sigma_f: float = 1.0

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        return np.exp(-(d**2) / self.sigma_f**2)


@dataclass(frozen=True)
class DdcrpKernel:
    """Potts decay with a floor, f(d) = (1 - eps) exp(-d^2/sigma_f^2) + eps,
    so that distant sites keep a positive chance of joining one cluster."""

    sigma_f: float = 1.0
    epsilon: float = 0.01

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        return (1.0 - self.epsilon) * np.exp(-(d**2) / self.sigma_f**2) + self.epsilon


class Neighborhood:
    """Symmetrized k-nearest-neighbor structure with per-edge decay values.

    Built as k-NN by Euclidean distance and symmetrized by union, which the
    Potts Gibbs conditional needs in order to correspond to a single joint
    Markov random field.
    """

    def __init__(self, neighbors, fvals):
        self.neighbors = neighbors  # list of int arrays, sorted, no self
        self.fvals = fvals          # list of float arrays, aligned

    @classmethod
    def knn(cls, dist: np.ndarray, k: int, kernel) -> "Neighborhood":
        n = dist.shape[0]
        k = min(k, n - 1)
        sets = [set() for _ in range(n)]
        for i in range(n):
            order = np.argsort(dist[i], kind="stable")
            picked = [j for j in order if j != i][:k]
            for j in picked:
                sets[i].add(j)
                sets[j].add(i)
        neighbors = [np.array(sorted(s), dtype=np.int64) for s in sets]
        fvals = [kernel(dist[i][nb]) for i, nb in enumerate(neighbors)]
        return cls(neighbors, fvals)

    def __len__(self):
        return len(self.neighbors)

    def as_csr(self):
        """(ptr, idx, f) flat arrays for the compiled sweep kernels."""
        ptr = np.zeros(len(self.neighbors) + 1, dtype=np.int64)
        for i, nb in enumerate(self.neighbors):
            ptr[i + 1] = ptr[i] + len(nb)
        idx = np.concatenate(self.neighbors) if self.neighbors else np.zeros(0, np.int64)
        f = np.concatenate(self.fvals) if self.fvals else np.zeros(0, float)
        return ptr, idx.astype(np.int64), f.astype(float)


# ---------------------------------------------------------------------------
# Indicator prior conditionals
# ---------------------------------------------------------------------------


def potts_conditional(z, i: int, neighborhood: Neighborhood, beta: float, n_clusters: int) -> np.ndarray:
    """Unnormalized Potts weights over cluster labels for site i:
    weight(k) = exp(beta * sum over neighbors j with z_j = k of f(d_ij)).

    Strictly positive; an empty neighborhood gives uniform weights, and
    beta = 0 recovers the non-informative prior exactly.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    acc = np.zeros(n_clusters)
    for j, f in zip(neighborhood.neighbors[i], neighborhood.fvals[i]):
        acc[z[j]] += f
    return np.exp(beta * acc)


def mixing_conditional_collapsed(zeta_minus, gamma: float, n_clusters: int) -> np.ndarray:
    """Collapsed Dirichlet-mixing weights: zeta_k (without site i) + gamma/K."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return np.asarray(zeta_minus, dtype=float) + gamma / n_clusters


def sample_mixing_weights(zeta, gamma: float, n_clusters: int, rng) -> np.ndarray:
    """Posterior draw of the mixing coefficients, Dir(zeta + gamma/K)."""
    return sample_dirichlet(np.asarray(zeta, dtype=float) + gamma / n_clusters, rng)


def crp_conditional(zeta_minus, gamma: float) -> np.ndarray:
    """CRP seating weights: occupied-cluster sizes, then gamma for a new
    cluster (index K*+1)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return np.append(np.asarray(zeta_minus, dtype=float), gamma)


# ---------------------------------------------------------------------------
# ddCRP link prior
# ---------------------------------------------------------------------------


def ddcrp_link_prior(i: int, dist: np.ndarray, kernel, nu: float):
    """Normalized link distribution for site i and its log-normalizer.

    P(c_i = j) is proportional to nu for j = i and to f(d_ij) otherwise.
    The log-normalizer is what the Metropolis-Hastings update of nu needs.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    w = kernel(dist[i]).astype(float)
    w[i] = nu
    total = w.sum()
    if total <= 0:
        raise ValueError("link prior has no mass (nu = 0 and f identically 0)")
    return w / total, float(np.log(total))


def connected_components(links):
    """Cluster labels induced by a link assignment.

    Labels the weakly connected components of the graph {i -> links[i]};
    component labels are assigned in order of their smallest contained site,
    starting at 0.  Returns (labels, n_components).
    """
    links = np.asarray(links, dtype=np.int64)
    n = len(links)
    parent = np.arange(n)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for i in range(n):
        ri, rj = find(i), find(links[i])
        if ri != rj:
            parent[rj] = ri
    labels = np.empty(n, dtype=np.int64)
    mapping = {}
    for i in range(n):
        root = find(i)
        if root not in mapping:
            mapping[root] = len(mapping)
        labels[i] = mapping[root]
    return labels, len(mapping)
