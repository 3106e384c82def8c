"""Shared domain types: state spaces, trajectories, transition models and the
count statistics that every sampler reads and incrementally updates.

All objects here are plain data plus bookkeeping.  ``SuffStats`` is the one
mutable structure; it is owned by exactly one chain at a time and is never
shared between threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class StatsConsistencyError(RuntimeError):
    """A count update would drive a counter negative (sampler bug)."""


# ---------------------------------------------------------------------------
# State spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Continuous2D:
    """The unbounded plane R^2."""

    kind: str = field(default="continuous", init=False)


@dataclass(frozen=True)
class FiniteStates:
    """Generic finite state space of ``n`` states with an optional planar
    embedding (used by distance-based priors; defaults to points on a line)."""

    n: int
    coords: tuple = None
    kind: str = field(default="finite", init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one state")

    @property
    def n_states(self) -> int:
        return self.n

    def all_coords(self) -> np.ndarray:
        if self.coords is None:
            return np.stack([np.arange(self.n, dtype=float),
                             np.zeros(self.n)], axis=1)
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (self.n, 2):
            raise ValueError("coords must be (n_states, 2)")
        return coords


@dataclass(frozen=True)
class FiniteGrid:
    """Square integer lattice {(x, y) : |x|, |y| <= half_width}.

    State indices enumerate the lattice row-major in x, i.e.
    ``index = (x + h) * (2h + 1) + (y + h)``.
    """

    half_width: int
    kind: str = field(default="grid", init=False)

    def __post_init__(self):
        if self.half_width < 1:
            raise ValueError("half_width must be >= 1")

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def n_states(self) -> int:
        return self.side * self.side

    def state_index(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        h = self.half_width
        if np.any(np.abs(x) > h) or np.any(np.abs(y) > h):
            raise ValueError("coordinates outside the grid")
        return (x + h) * self.side + (y + h)

    def state_coords(self, index):
        index = np.asarray(index)
        if np.any(index < 0) or np.any(index >= self.n_states):
            raise ValueError("state index out of range")
        h = self.half_width
        return np.stack([index // self.side - h, index % self.side - h], axis=-1)

    def all_coords(self) -> np.ndarray:
        """(n_states, 2) float array of lattice coordinates, in index order."""
        return self.state_coords(np.arange(self.n_states)).astype(float)


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionSet:
    """``n`` directions dividing [0, 2*pi) evenly; action j points at angle
    j * 2*pi / n (0-based indices)."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one action")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n) * (2.0 * np.pi / self.n)

    @property
    def unit_vectors(self) -> np.ndarray:
        a = self.angles
        return np.stack([np.cos(a), np.sin(a)], axis=1)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


class Trajectory:
    """Observed state sequence(s); actions are never part of the data.

    Parameters
    ----------
    states : array
        (n, 2) float positions for a continuous space, (n,) integer state
        indices for a finite one.
    offsets : array
        Segment boundaries: ``states[offsets[k]:offsets[k+1]]`` is the k-th
        demonstration.  Every segment must contain at least one transition.
    space : Continuous2D or FiniteGrid

    The constructor builds the site index used by all samplers: one site per
    system state for finite spaces (every state owns exactly one indicator,
    however often it is visited) and one site per distinct trajectory point
    for continuous spaces (exact duplicates are merged).
    """

    def __init__(self, states, offsets, space):
        states = np.asarray(states)
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets[0] != 0 or offsets[-1] != len(states):
            raise ValueError("offsets must start at 0 and end at len(states)")
        seg_lens = np.diff(offsets)
        if np.any(seg_lens < 2):
            raise ValueError("every trajectory segment needs >= 2 states")
        self.space = space
        self.offsets = offsets
        if isinstance(space, (FiniteGrid, FiniteStates)):
            states = states.astype(np.int64)
            if states.ndim != 1:
                raise ValueError("finite-space states must be indices")
            if np.any(states < 0) or np.any(states >= space.n_states):
                raise ValueError("state index outside the space")
            self.states = states
            self.site_of_point = states.copy()
            self.n_sites = space.n_states
            self.site_coords = space.all_coords()
        else:
            states = states.astype(float)
            if states.ndim != 2 or states.shape[1] != 2:
                raise ValueError("continuous states must be (n, 2)")
            self.states = states
            self.site_of_point, self.site_coords = _merge_duplicate_points(states)
            self.n_sites = len(self.site_coords)
        # action index set: every time step except the last of each segment
        mask = np.ones(len(states), dtype=bool)
        mask[offsets[1:] - 1] = False
        self.action_times = np.flatnonzero(mask)

    @property
    def n_points(self) -> int:
        return len(self.states)

    @property
    def n_segments(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_action_indices(self) -> int:
        return len(self.action_times)

    def segment(self, k):
        return self.states[self.offsets[k]:self.offsets[k + 1]]

    def point_coords(self, t):
        """2D coordinates of trajectory point(s) t (works for all spaces)."""
        if isinstance(self.space, (FiniteGrid, FiniteStates)):
            return self.site_coords[self.states[t]]
        return self.states[t]


def _merge_duplicate_points(states):
    """Map each point to a site id, merging exact duplicates.

    Sites are numbered in order of first appearance along the trajectory.
    """
    seen = {}
    site_of_point = np.empty(len(states), dtype=np.int64)
    coords = []
    for t, s in enumerate(states):
        key = (s[0], s[1])
        idx = seen.get(key)
        if idx is None:
            idx = len(coords)
            seen[key] = idx
            coords.append(s)
        site_of_point[t] = idx
    return site_of_point, np.asarray(coords, dtype=float)


# ---------------------------------------------------------------------------
# Trajectory CSV round-trip
# ---------------------------------------------------------------------------


def save_trajectory(traj: Trajectory, path) -> None:
    """Write ``traj`` as CSV, ``traj_id,t,x,y`` (continuous) or
    ``traj_id,t,state`` (finite), sorted by (traj_id, t).

    Floats are printed with shortest round-trip precision (Python repr), so
    a load gives back bit-identical doubles.
    """
    grid = isinstance(traj.space, (FiniteGrid, FiniteStates))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["traj_id", "t", "state"] if grid else ["traj_id", "t", "x", "y"])
        for k in range(traj.n_segments):
            seg = traj.segment(k)
            for t, s in enumerate(seg):
                if grid:
                    w.writerow([k, t, int(s)])
                else:
                    w.writerow([k, t, repr(float(s[0])), repr(float(s[1]))])


def load_trajectory(path, half_width: int = 10) -> Trajectory:
    """Read a trajectory CSV written by :func:`save_trajectory`.

    The header decides the space kind; ``half_width`` is only used for grid
    files (the file stores state indices, not the grid geometry).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    grid = header == ["traj_id", "t", "state"]
    if not grid and header != ["traj_id", "t", "x", "y"]:
        raise ValueError(f"unrecognized trajectory header: {header}")
    body = rows[1:]
    if not body:
        raise ValueError("empty trajectory file")
    states = []
    offsets = [0]
    prev_id = body[0][0]
    for row in body:
        if row[0] != prev_id:
            offsets.append(len(states))
            prev_id = row[0]
        states.append(int(row[2]) if grid else (float(row[2]), float(row[3])))
    offsets.append(len(states))
    space = FiniteGrid(half_width) if grid else Continuous2D()
    return Trajectory(np.asarray(states), np.asarray(offsets), space)


# ---------------------------------------------------------------------------
# Transition models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianKernel:
    """Continuous dynamics: a unit step in the chosen direction plus
    isotropic Gaussian noise, s' ~ N(s + mu * e_a, sigma^2 I)."""

    mu: float
    sigma: float
    actions: ActionSet

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


class FiniteTable:
    """Row-stochastic transition tensor P[s, a, s'] over a finite space."""

    def __init__(self, probs, validate: bool = True):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 3 or probs.shape[0] != probs.shape[2]:
            raise ValueError("transition tensor must be (S, A, S)")
        if validate:
            sums = probs.sum(axis=2)
            if np.any(np.abs(sums - 1.0) > 1e-12) or np.any(probs < 0):
                raise ValueError("transition rows must be stochastic")
        self.probs = probs

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


# ---------------------------------------------------------------------------
# Sufficient statistics
# ---------------------------------------------------------------------------


class SuffStats:
    """Action-count tables kept consistent with the chain state.

    ``phi[i, j]``  count of action j at site i,
    ``xi[k, j]``   count of action j in cluster k (sum of member phi rows),
    ``zeta[k]``    number of sites assigned to cluster k.

    The leave-one-out views psi and vartheta used by the collapsed samplers
    are derived on demand (:meth:`psi_view`, :meth:`vartheta_view`).
    Counts are machine integers; all updates are exact.
    """

    def __init__(self, phi, xi, zeta):
        self.phi = np.asarray(phi, dtype=np.int64)
        self.xi = np.asarray(xi, dtype=np.int64)
        self.zeta = np.asarray(zeta, dtype=np.int64)

    # -- construction -------------------------------------------------------

    @classmethod
    def empty(cls, n_sites, n_clusters, n_actions):
        return cls(
            np.zeros((n_sites, n_actions), np.int64),
            np.zeros((n_clusters, n_actions), np.int64),
            np.zeros(n_clusters, np.int64),
        )

    def copy(self) -> "SuffStats":
        return SuffStats(self.phi.copy(), self.xi.copy(), self.zeta.copy())

    # -- derived views ------------------------------------------------------

    def psi_view(self, site, site_cluster) -> np.ndarray:
        """(K, A) counts per cluster with site's own counts removed."""
        psi = self.xi.copy()
        psi[site_cluster] -= self.phi[site]
        return psi

    def vartheta_view(self, cluster, action) -> np.ndarray:
        """Cluster counts with one occurrence of ``action`` removed."""
        row = self.xi[cluster].copy()
        row[action] -= 1
        return row

    # -- incremental updates ------------------------------------------------

    def flip_action(self, site, cluster, old_action, new_action) -> None:
        if self.phi[site, old_action] <= 0 or self.xi[cluster, old_action] <= 0:
            raise StatsConsistencyError(
                f"flip would drop count below zero (site {site}, action {old_action})"
            )
        self.phi[site, old_action] -= 1
        self.phi[site, new_action] += 1
        self.xi[cluster, old_action] -= 1
        self.xi[cluster, new_action] += 1

    def move_site(self, site, old_cluster, new_cluster) -> None:
        if self.zeta[old_cluster] <= 0:
            raise StatsConsistencyError(f"cluster {old_cluster} already empty")
        row = self.phi[site]
        if np.any(self.xi[old_cluster] < row):
            raise StatsConsistencyError(f"site {site} counts exceed cluster counts")
        self.xi[old_cluster] -= row
        self.xi[new_cluster] += row
        self.zeta[old_cluster] -= 1
        self.zeta[new_cluster] += 1

    # -- checks --------------------------------------------------------------

    def matches(self, other: "SuffStats") -> bool:
        return (
            np.array_equal(self.phi, other.phi)
            and np.array_equal(self.xi, other.xi)
            and np.array_equal(self.zeta, other.zeta)
        )


def build_suff_stats(traj: Trajectory, actions, z, n_actions, n_clusters=None) -> SuffStats:
    """Count tables for a full (actions, indicators) configuration.

    ``actions`` must be defined exactly on the trajectory's action index set,
    ``z`` on all sites.  Deterministic; the reference against which all
    incremental updates are verified.
    """
    actions = np.asarray(actions, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if len(actions) != traj.n_action_indices:
        raise ValueError(
            f"need {traj.n_action_indices} actions, got {len(actions)}"
        )
    if len(z) != traj.n_sites:
        raise ValueError(f"need {traj.n_sites} indicators, got {len(z)}")
    if len(actions) == 0:
        raise ValueError("empty action index set")
    if np.any(actions < 0) or np.any(actions >= n_actions):
        raise ValueError("action index out of range")
    K = int(z.max()) + 1 if n_clusters is None else int(n_clusters)
    if np.any(z < 0) or np.any(z >= K):
        raise ValueError("indicator out of range")
    stats = SuffStats.empty(traj.n_sites, K, n_actions)
    act_site = traj.site_of_point[traj.action_times]
    np.add.at(stats.phi, (act_site, actions), 1)
    np.add.at(stats.xi, (z[act_site], actions), 1)
    stats.zeta[:] = np.bincount(z, minlength=K)
    return stats


# -- delta objects (the incremental-update contract) -------------------------


@dataclass(frozen=True)
class ActionFlip:
    site: int
    cluster: int
    old_action: int
    new_action: int


@dataclass(frozen=True)
class IndicatorMove:
    site: int
    old_cluster: int
    new_cluster: int


def apply_delta(stats: SuffStats, change) -> SuffStats:
    """Apply one elementary change; the result equals a from-scratch recount
    of the mutated configuration (exact integer equality)."""
    if isinstance(change, ActionFlip):
        stats.flip_action(change.site, change.cluster, change.old_action, change.new_action)
    elif isinstance(change, IndicatorMove):
        stats.move_site(change.site, change.old_cluster, change.new_cluster)
    else:
        raise TypeError(f"unknown delta type: {type(change)!r}")
    return stats
