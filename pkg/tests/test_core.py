"""Domain types and sufficient-statistic bookkeeping."""

import numpy as np
import pytest

from polrec.core import (
    ActionFlip,
    ActionSet,
    Continuous2D,
    FiniteGrid,
    FiniteStates,
    FiniteTable,
    IndicatorMove,
    StatsConsistencyError,
    Trajectory,
    apply_delta,
    build_suff_stats,
    load_trajectory,
    save_trajectory,
)
from polrec.dists import rng_stream


class TestStateSpaces:
    def test_grid_half_width_10_has_441_states(self):
        assert FiniteGrid(10).n_states == 441

    def test_grid_index_bijection(self):
        grid = FiniteGrid(10)
        idx = np.arange(grid.n_states)
        coords = grid.state_coords(idx)
        assert np.abs(coords).max() == 10
        assert np.array_equal(grid.state_index(coords[:, 0], coords[:, 1]), idx)

    def test_grid_rejects_outside_coords(self):
        with pytest.raises(ValueError):
            FiniteGrid(10).state_index(11, 0)

    def test_action_angles_strictly_increasing(self):
        angles = ActionSet(24).angles
        assert np.all(np.diff(angles) > 0)
        assert angles[0] == 0.0 and angles[-1] < 2 * np.pi
        assert len(np.unique(angles)) == 24


class TestTrajectory:
    def test_segments_need_two_states(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((3, 2)), np.array([0, 1, 3]), Continuous2D())

    def test_action_index_set_excludes_segment_ends(self):
        states = np.arange(10, dtype=float).reshape(5, 2)
        traj = Trajectory(states, np.array([0, 2, 5]), Continuous2D())
        assert traj.n_action_indices == 3
        assert np.array_equal(traj.action_times, [0, 2, 3])

    def test_duplicate_continuous_points_merge_into_one_site(self):
        states = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
        traj = Trajectory(states, np.array([0, 3]), Continuous2D())
        assert traj.n_sites == 2
        assert np.array_equal(traj.site_of_point, [0, 1, 0])

    def test_finite_space_owns_one_site_per_state(self):
        traj = Trajectory(np.array([1, 2, 1, 2]), np.array([0, 4]), FiniteStates(5))
        assert traj.n_sites == 5
        assert np.array_equal(traj.site_of_point, traj.states)

    def test_csv_round_trip_is_bit_exact(self, tmp_path):
        rng = rng_stream(3)
        states = rng.normal(size=(8, 2)) * np.pi
        traj = Trajectory(states, np.array([0, 4, 8]), Continuous2D())
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path)
        loaded = load_trajectory(path)
        assert np.array_equal(loaded.states, traj.states)
        assert np.array_equal(loaded.offsets, traj.offsets)

    def test_grid_csv_round_trip(self, tmp_path):
        traj = Trajectory(np.array([3, 4, 5, 7, 8]), np.array([0, 3, 5]), FiniteGrid(10))
        path = tmp_path / "grid.csv"
        save_trajectory(traj, path)
        loaded = load_trajectory(path, half_width=10)
        assert np.array_equal(loaded.states, traj.states)
        assert np.array_equal(loaded.offsets, traj.offsets)


class TestFiniteTable:
    def test_rejects_non_stochastic_rows(self):
        bad = np.full((2, 1, 2), 0.6)
        with pytest.raises(ValueError):
            FiniteTable(bad)

    def test_accepts_stochastic_rows(self):
        ok = np.full((2, 1, 2), 0.5)
        assert FiniteTable(ok).n_states == 2


def _toy_traj():
    # two visits to state 1, one to state 0; one segment
    return Trajectory(np.array([1, 1, 2]), np.array([0, 3]), FiniteStates(3))


class TestBuildSuffStats:
    def test_direct_counting(self):
        traj = _toy_traj()
        stats = build_suff_stats(traj, np.array([0, 1]), np.zeros(3, np.int64), 3)
        assert np.array_equal(stats.phi[1], [1, 1, 0])
        assert np.array_equal(stats.xi[0], [1, 1, 0])
        assert stats.zeta[0] == 3

    def test_rejects_mismatched_actions(self):
        traj = _toy_traj()
        with pytest.raises(ValueError):
            build_suff_stats(traj, np.array([0]), np.zeros(3, np.int64), 3)

    def test_total_counts_equal_action_indices(self):
        from polrec.envs import CircularWorld, circular_expert, simulate
        world = CircularWorld()
        traj = simulate(world, circular_expert(world), 100, 10, rng_stream(0))
        z = np.zeros(traj.n_sites, np.int64)
        a = rng_stream(1).integers(0, 24, traj.n_action_indices)
        stats = build_suff_stats(traj, a, z, 24)
        assert stats.phi.sum() == 990
        assert stats.xi.sum() == 990


class TestApplyDelta:
    def test_action_flip_involution(self):
        traj = _toy_traj()
        stats = build_suff_stats(traj, np.array([0, 1]), np.zeros(3, np.int64), 3)
        before = stats.copy()
        apply_delta(stats, ActionFlip(site=1, cluster=0, old_action=0, new_action=2))
        apply_delta(stats, ActionFlip(site=1, cluster=0, old_action=2, new_action=0))
        assert stats.matches(before)

    def test_indicator_move_shifts_counts(self):
        traj = _toy_traj()
        z = np.zeros(3, np.int64)
        stats = build_suff_stats(traj, np.array([0, 1]), z, 3, n_clusters=2)
        apply_delta(stats, IndicatorMove(site=1, old_cluster=0, new_cluster=1))
        assert np.array_equal(stats.xi[1], stats.phi[1])
        assert np.array_equal(stats.zeta, [2, 1])

    def test_zero_decrement_raises(self):
        traj = _toy_traj()
        stats = build_suff_stats(traj, np.array([0, 1]), np.zeros(3, np.int64), 3)
        with pytest.raises(StatsConsistencyError):
            stats.flip_action(0, 0, 2, 0)  # state 0 never played action 2

    def test_random_delta_sequence_matches_recount(self):
        """10^4 random flips/moves stay integer-exact vs a from-scratch
        recount (the oracle is build_suff_stats itself)."""
        rng = rng_stream(42)
        n_states, n_actions, K = 6, 4, 3
        states = rng.integers(0, n_states, 50)
        states = np.concatenate([states, states[:1]])  # ensure length 51
        traj = Trajectory(states, np.array([0, len(states)]), FiniteStates(n_states))
        actions = rng.integers(0, n_actions, traj.n_action_indices)
        z = rng.integers(0, K, n_states)
        stats = build_suff_stats(traj, actions, z, n_actions, K)
        act_site = traj.site_of_point[traj.action_times]
        for _ in range(10_000):
            if rng.random() < 0.5:
                t = int(rng.integers(traj.n_action_indices))
                new = int(rng.integers(n_actions))
                site = act_site[t]
                apply_delta(stats, ActionFlip(site, z[site], int(actions[t]), new))
                actions[t] = new
            else:
                i = int(rng.integers(n_states))
                new = int(rng.integers(K))
                apply_delta(stats, IndicatorMove(i, int(z[i]), new))
                z[i] = new
        assert stats.matches(build_suff_stats(traj, actions, z, n_actions, K))

    def test_vartheta_identity(self):
        """vartheta[t, j] + 1(a_t = j) recovers the cluster count table."""
        traj = _toy_traj()
        z = np.array([0, 1, 1], np.int64)
        actions = np.array([2, 0])
        stats = build_suff_stats(traj, actions, z, 3, n_clusters=2)
        for t, a in enumerate(actions):
            site = traj.site_of_point[traj.action_times[t]]
            row = stats.vartheta_view(z[site], a)
            row[a] += 1
            assert np.array_equal(row, stats.xi[z[site]])
