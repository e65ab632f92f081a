import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sisnet.errors import InvalidInputError
from sisnet.netgraph import (ConstantDrift, GraphTrajectory, QuarantinePolicy, ReflectingDrift,
                             apply_quarantine, block_order, proximity_weights, simulate_mobility,
                             static_topology, step_mobility, validate_weight_matrix)


def test_line_topology():
    A = static_topology("line", 3)
    assert A[0, 1] == A[1, 2] == 1
    assert A[0, 2] == 0
    np.testing.assert_array_equal(A, A.T)


def test_complete_topology():
    A = static_topology("complete", 3)
    np.testing.assert_array_equal(A, np.ones((3, 3)) - np.eye(3))


def test_star_topology_hub_is_first_agent():
    A = static_topology("star", 4)
    np.testing.assert_array_equal(A[0], [0, 1, 1, 1])
    assert A[1, 2] == A[1, 3] == A[2, 3] == 0


@pytest.mark.parametrize("kind,n", [("ring", 4), ("line", 1), ("star", 0)])
def test_bad_topology(kind, n):
    with pytest.raises(InvalidInputError):
        static_topology(kind, n)


def test_proximity_coincident_agents():
    A = proximity_weights([[0.0, 0.0], [0.0, 0.0]], 1.0)
    assert A[0, 1] == 1.0
    assert A[0, 0] == 0.0


def test_proximity_strict_radius():
    A = proximity_weights([[0.0], [1.5]], 1.5)
    assert A[0, 1] == 0.0


def test_proximity_unit_distance():
    A = proximity_weights([[0.0, 0.0], [0.6, 0.8]], 1.5)
    assert A[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)
    assert A[0, 1] == pytest.approx(0.367879, abs=1e-6)


def test_proximity_rejects_bad_radius():
    with pytest.raises(InvalidInputError):
        proximity_weights([[0.0], [1.0]], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 3), st.floats(0.1, 5.0), st.integers(0, 2 ** 31))
def test_proximity_invariants(n, d, r, seed):
    z = np.random.default_rng(seed).uniform(-3, 3, (n, d))
    A = proximity_weights(z, r)
    validate_weight_matrix(A, symmetric=True)
    assert np.all(A <= 1.0)
    np.testing.assert_array_equal(A, A.T)


def test_zero_drift_keeps_positions():
    z = np.array([[0.3, 0.1], [2.0, -1.0]])
    z1, _ = step_mobility(z, ConstantDrift(np.zeros((2, 2))), 1.0)
    np.testing.assert_array_equal(z1, z)


def test_constant_drift_1d():
    z1, _ = step_mobility([[0.0]], ConstantDrift(np.array([[1.0]])), 2.0)
    assert z1[0, 0] == pytest.approx(2.0)


def test_reflection_example():
    model = ReflectingDrift(np.array([[1.0]]), np.array([0.0]), 2.0)
    z1, m1 = step_mobility([[0.9]], model, 0.2)
    assert z1[0, 0] == pytest.approx(0.9, abs=1e-12)
    assert m1.velocity[0, 0] == -1.0


def test_reflecting_box_rejects_outside_start():
    model = ReflectingDrift(np.array([[1.0]]), np.array([0.0]), 2.0)
    with pytest.raises(InvalidInputError):
        simulate_mobility([[1.5]], model, 3, 1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.floats(0.05, 7.0), st.integers(0, 2 ** 31))
def test_reflecting_confinement(n, d, dt, seed):
    rng = np.random.default_rng(seed)
    side = 4.0
    center = rng.uniform(-1, 1, d)
    z = center + rng.uniform(-side / 2, side / 2, (n, d))
    model = ReflectingDrift(rng.normal(0, 3, (n, d)), center, side)
    for _ in range(20):
        z, model = step_mobility(z, model, dt)
        assert np.all(z >= center - side / 2) and np.all(z <= center + side / 2)


def test_quarantine_single_group_is_identity():
    A = static_topology("complete", 4)
    np.testing.assert_array_equal(apply_quarantine(A, [0, 0, 0, 0]), A)


def test_quarantine_two_blocks():
    A = apply_quarantine(static_topology("complete", 4), [0, 0, 1, 1])
    assert A[0, 2] == A[0, 3] == A[1, 2] == A[1, 3] == 0
    assert A[0, 1] == A[2, 3] == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_quarantine_cuts_all_cross_edges(n, q, seed):
    rng = np.random.default_rng(seed)
    groups = rng.integers(0, q, n)
    W = rng.uniform(0, 1, (n, n))
    W = np.triu(W, 1) + np.triu(W, 1).T
    B = apply_quarantine(W, groups)
    cross = groups[:, None] != groups[None, :]
    assert np.all(B[cross] == 0)
    np.testing.assert_array_equal(B[~cross], W[~cross])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 9), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_block_spectrum_is_union(n, q, seed):
    rng = np.random.default_rng(seed)
    groups = rng.integers(0, q, n)
    W = rng.uniform(0, 1, (n, n))
    W = apply_quarantine(np.triu(W, 1) + np.triu(W, 1).T, groups)
    full = np.sort(np.linalg.eigvalsh(W))
    parts = np.sort(np.concatenate([np.linalg.eigvalsh(W[np.ix_(groups == g, groups == g)])
                                    for g in np.unique(groups)]))
    np.testing.assert_allclose(full, parts, atol=1e-10)
    perm = block_order(groups)
    P = W[np.ix_(perm, perm)]
    assert np.all(np.diff(groups[perm]) >= 0)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(P)), full, atol=1e-10)


def test_static_trajectory_is_constant():
    A = static_topology("line", 4)
    traj = GraphTrajectory.static(A)
    assert traj.is_static and traj.symmetric
    for t in (0.0, 3.5, 1e4):
        np.testing.assert_array_equal(traj.at(t), A)


def test_piecewise_trajectory_holds_between_changes():
    A0, A1 = static_topology("line", 3), static_topology("complete", 3)
    traj = GraphTrajectory.piecewise([0.0, 2.0], [A0, A1])
    np.testing.assert_array_equal(traj.at(1.999), A0)
    np.testing.assert_array_equal(traj.at(2.0), A1)
    np.testing.assert_array_equal(traj.change_times(0, 10), [2.0])
    assert traj.last_change() == 2.0
    segs = list(traj.segments(0.0, 5.0))
    assert [(a, b) for a, b, _ in segs] == [(0.0, 2.0), (2.0, 5.0)]


def test_piecewise_rejects_bad_times():
    A = static_topology("line", 3)
    with pytest.raises(InvalidInputError):
        GraphTrajectory.piecewise([0.0, 0.0], [A, A])


def test_validate_rejects_bad_matrices():
    with pytest.raises(InvalidInputError):
        validate_weight_matrix(np.array([[1.0, 0], [0, 0]]))
    with pytest.raises(InvalidInputError):
        validate_weight_matrix(np.array([[0, -1.0], [-1.0, 0]]))
    with pytest.raises(InvalidInputError):
        validate_weight_matrix(np.array([[0, 1.0], [0.5, 0]]), symmetric=True)


def test_mobility_every_sample_is_a_weight_matrix():
    rng = np.random.default_rng(3)
    z0 = rng.uniform(0, 10, (8, 2))
    model = ReflectingDrift(rng.normal(0, 1, (8, 2)), np.array([5.0, 5.0]), 10.0)
    run = simulate_mobility(z0, model, 30, 1.0, 2.0)
    assert run.positions.shape == (31, 8, 2)
    for t in run.times:
        validate_weight_matrix(run.graph.at(t), symmetric=True)


def test_quarantine_separates_groups():
    rng = np.random.default_rng(0)
    n = 20
    z0 = rng.uniform(0, 40, (n, 2))
    groups = (1,) * 5 + (0,) * 15
    policy = QuarantinePolicy(10, groups, {1: (np.zeros(2), np.full(2, 25.0)),
                                            0: (np.array([25.0, 0.0]), np.full(2, 40.0))})
    model = ReflectingDrift(rng.normal(0, 1, (n, 2)), np.array([20.0, 20.0]), 40.0)
    run = simulate_mobility(z0, model, 40, 1.0, 5.0, policy)
    g = np.array(groups)
    inside = run.positions[10:, g == 1]
    assert np.all(inside <= 25.0) and np.all(inside >= 0.0)
    for t in run.times[10:]:
        A = run.graph.at(t)
        assert np.all(A[np.ix_(g == 1, g == 0)] == 0)
