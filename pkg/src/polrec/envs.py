"""The two benchmark worlds: a continuous circular-motion system driven by a
region-based stochastic expert, and a discretized grid world whose expert is
the optimal policy for a random state reward.

Also provides trajectory simulation and transition-model perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ActionSet, Continuous2D, FiniteGrid, FiniteTable, GaussianKernel, Trajectory
from .dists import categorical_index

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Continuous circular-motion world
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircularWorld:
    """Agent circling the origin on R^2.

    Eight 45-degree sectors (boundaries at 22.5 + m*45 degrees) crossed with
    an inner/outer ring give 16 regions; ring pairs share controllers, so
    eight distinct local policies exist.  Travel is counter-clockwise until
    the critical radius is exceeded, then clockwise.
    """

    mu: float = 1.0
    sigma: float = 0.2
    n_actions: int = 24
    reversal_radius: float = 5.0
    ring_split_radius: float = 2.0
    n_sectors: int = field(default=8, init=False)

    @property
    def action_set(self) -> ActionSet:
        return ActionSet(self.n_actions)

    def kernel(self) -> GaussianKernel:
        return GaussianKernel(self.mu, self.sigma, self.action_set)


def _sector_index(point, n_sectors: int) -> int:
    """Angular sector of a point; boundary points join the sector
    counter-clockwise of the boundary."""
    width = TWO_PI / n_sectors
    angle = np.arctan2(point[1], point[0]) % TWO_PI
    return int(np.floor(angle / width + 0.5)) % n_sectors


def expert_policy_circular(point, world: CircularWorld | None = None) -> np.ndarray:
    """Ground-truth action distribution at ``point``: 1/3 on each of the
    optimal action and its two angular neighbors.

    The optimal action is the quantization (nearest action angle) of the
    tangential direction at the sector's center angle: counter-clockwise
    while inside the reversal radius, clockwise outside.  The reversal is
    memoryless, decided by the current state alone.
    """
    world = world or CircularWorld()
    point = np.asarray(point, dtype=float)
    n = world.n_actions
    sector = _sector_index(point, world.n_sectors)
    center = sector * TWO_PI / world.n_sectors
    if np.hypot(point[0], point[1]) <= world.reversal_radius:
        tangent = center + 0.5 * np.pi
    else:
        tangent = center - 0.5 * np.pi
    step = TWO_PI / n
    best = int(np.floor(tangent / step + 0.5)) % n
    dist = np.zeros(n)
    for a in (best - 1, best, best + 1):
        dist[a % n] += 1.0 / 3.0
    return dist


def region_index(point, world: CircularWorld | None = None) -> int:
    """Index in 0..15 of the expert's distinguishable region: sector plus
    ring (split at ``ring_split_radius``)."""
    world = world or CircularWorld()
    point = np.asarray(point, dtype=float)
    sector = _sector_index(point, world.n_sectors)
    outer = np.hypot(point[0], point[1]) > world.ring_split_radius
    return sector + world.n_sectors * int(outer)


def step_circular(point, action: int, world: CircularWorld, rng) -> np.ndarray:
    """One transition: unit step in the action direction plus isotropic
    Gaussian noise."""
    point = np.asarray(point, dtype=float)
    drift = world.mu * world.action_set.unit_vectors[action]
    return point + drift + world.sigma * rng.standard_normal(2)


# ---------------------------------------------------------------------------
# Discretized grid world
# ---------------------------------------------------------------------------


def discretize_grid(sigma: float, action_set: ActionSet, half_width: int = 10,
                    mu: float = 1.0) -> FiniteTable:
    """Finite transition table over the lattice {|x|,|y| <= half_width}.

    Row (s, a) is proportional to the Gaussian step density evaluated at the
    lattice points of a 3x-wider super-grid; mass landing outside the grid is
    reassigned to the nearest border state (coordinate clamping), then the
    row is renormalized.  The density factorizes per axis, and clamping acts
    per coordinate, so the whole computation is separable.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    grid = FiniteGrid(half_width)
    h, side = half_width, grid.side
    super_coords = np.arange(-3 * h, 3 * h + 1, dtype=float)
    in_lo, in_hi = 2 * h, 4 * h + 1  # slice of super_coords inside the grid
    axis_vals = np.arange(-h, h + 1, dtype=float)

    probs = np.empty((grid.n_states, action_set.n, grid.n_states))
    for a, (dx, dy) in enumerate(mu * action_set.unit_vectors):
        # per-axis densities for every possible source coordinate
        gx = np.exp(-((super_coords[None, :] - (axis_vals + dx)[:, None]) ** 2) / (2 * sigma**2))
        gy = np.exp(-((super_coords[None, :] - (axis_vals + dy)[:, None]) ** 2) / (2 * sigma**2))
        fold_x = gx[:, in_lo:in_hi].copy()
        fold_x[:, 0] += gx[:, :in_lo].sum(axis=1)
        fold_x[:, -1] += gx[:, in_hi:].sum(axis=1)
        fold_y = gy[:, in_lo:in_hi].copy()
        fold_y[:, 0] += gy[:, :in_lo].sum(axis=1)
        fold_y[:, -1] += gy[:, in_hi:].sum(axis=1)
        for xi in range(side):
            for yi in range(side):
                row = np.outer(fold_x[xi], fold_y[yi]).ravel()
                probs[xi * side + yi, a] = row / row.sum()
    return FiniteTable(probs)


@dataclass
class GridWorld:
    """Finite benchmark world: lattice states, Gaussian-derived transition
    table, optional state rewards with discounting."""

    grid: FiniteGrid
    action_set: ActionSet
    sigma: float
    table: FiniteTable
    rewards: np.ndarray | None = None
    discount: float = 0.9

    @classmethod
    def make(cls, sigma: float = 1.0, n_actions: int = 8, half_width: int = 10,
             rewards=None, discount: float = 0.9) -> "GridWorld":
        actions = ActionSet(n_actions)
        table = discretize_grid(sigma, actions, half_width)
        return cls(FiniteGrid(half_width), actions, sigma, table, rewards, discount)


def sample_reward_world(rng, n_states: int = 441, reward_prob: float = 0.01) -> np.ndarray:
    """State rewards: each state nonzero with probability ``reward_prob``,
    value standard normal; worlds with no reward are redrawn."""
    while True:
        mask = rng.random(n_states) < reward_prob
        if mask.any():
            rewards = np.zeros(n_states)
            rewards[mask] = rng.standard_normal(int(mask.sum()))
            return rewards


def value_iteration(model, rewards, discount: float, tol: float = 1e-12,
                    max_iter: int = 100_000):
    """Optimal deterministic policy and value vector for state rewards.

    Iterates V <- r + discount * max_a P V until the sup-norm residual drops
    below ``tol``; ties in the argmax break to the lowest action index.
    """
    probs = model.probs if isinstance(model, FiniteTable) else np.asarray(model, dtype=float)
    if probs.ndim != 3 or np.any(np.abs(probs.sum(axis=2) - 1.0) > 1e-9) or np.any(probs < 0):
        raise ValueError("transition rows must be stochastic")
    if not 0 <= discount < 1:
        raise ValueError("discount must be in [0, 1)")
    rewards = np.asarray(rewards, dtype=float)
    n_states, n_actions, _ = probs.shape
    flat = probs.reshape(n_states * n_actions, n_states)
    values = np.zeros(n_states)
    for _ in range(max_iter):
        q = (flat @ values).reshape(n_states, n_actions)
        new_values = rewards + discount * q.max(axis=1)
        residual = np.abs(new_values - values).max()
        values = new_values
        if residual < tol:
            break
    q = (flat @ values).reshape(n_states, n_actions)
    policy = q.argmax(axis=1)
    return policy, values


def perturb_model(model: FiniteTable, eta: float, rng) -> FiniteTable:
    """Multiply every transition probability by an independent draw of
    tan(pi/4 * (u + 1)), u ~ Uniform(-eta, eta), then renormalize rows."""
    if not 0 <= eta < 1:
        raise ValueError("perturbation strength must satisfy 0 <= eta < 1")
    u = rng.uniform(-eta, eta, size=model.probs.shape)
    factors = np.tan(np.pi / 4.0 * (u + 1.0))
    perturbed = model.probs * factors
    perturbed /= perturbed.sum(axis=2, keepdims=True)
    return FiniteTable(perturbed)


# ---------------------------------------------------------------------------
# Expert policies as callables (state -> action distribution)
# ---------------------------------------------------------------------------


def circular_expert(world: CircularWorld):
    """Expert for the continuous world; takes a 2D point."""
    return lambda point: expert_policy_circular(point, world)


def grid_circular_expert(world: GridWorld, reversal_radius: float = 5.0):
    """Circular-motion expert on the lattice; takes a state index."""
    cw = CircularWorld(n_actions=world.action_set.n, reversal_radius=reversal_radius)

    def expert(state):
        return expert_policy_circular(world.grid.state_coords(state), cw)

    return expert


def grid_mdp_expert(world: GridWorld):
    """Deterministic optimal expert for the world's rewards; takes a state
    index and returns a point-mass action distribution."""
    if world.rewards is None:
        raise ValueError("grid world has no rewards")
    policy, _ = value_iteration(world.table, world.rewards, world.discount)
    eye = np.eye(world.action_set.n)

    def expert(state):
        return eye[policy[state]]

    return expert


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def simulate(env, expert, length: int, n_traj: int, rng) -> Trajectory:
    """Roll out ``n_traj`` independent demonstrations of ``length`` states.

    Actions are drawn from ``expert`` and immediately discarded; only the
    state sequence is observable downstream.  Initial states: uniform on the
    unit circle (continuous) or uniform over all states (grid).
    """
    if length < 2:
        raise ValueError("trajectories need at least 2 states")
    offsets = np.arange(n_traj + 1) * length
    if isinstance(env, CircularWorld):
        states = np.empty((n_traj * length, 2))
        for k in range(n_traj):
            angle = rng.uniform(0.0, TWO_PI)
            s = np.array([np.cos(angle), np.sin(angle)])
            for t in range(length):
                states[k * length + t] = s
                if t < length - 1:
                    a = categorical_index(expert(s), rng.random())
                    s = step_circular(s, a, env, rng)
        return Trajectory(states, offsets, Continuous2D())
    if isinstance(env, GridWorld):
        states = np.empty(n_traj * length, dtype=np.int64)
        probs = env.table.probs
        for k in range(n_traj):
            s = int(rng.integers(env.grid.n_states))
            for t in range(length):
                states[k * length + t] = s
                if t < length - 1:
                    a = categorical_index(expert(s), rng.random())
                    s = categorical_index(probs[s, a], rng.random())
        return Trajectory(states, offsets, env.grid)
    raise TypeError(f"unknown environment: {type(env)!r}")
