import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sisnet import stability as stab
from sisnet.errors import InvalidInputError, PreconditionError
from sisnet.meanfield import VirusParams
from sisnet.netgraph import (ConstantDrift, GraphTrajectory, apply_quarantine, simulate_mobility,
                             static_topology)

GRID = np.linspace(0, 10, 11)


def test_trace_empty_graph():
    params = VirusParams(np.ones(3), np.array([0.4, 0.2, 0.9]))
    tr = stab.spectral_trace(np.zeros((3, 3)), params, GRID)
    np.testing.assert_allclose(tr.values, -0.2)


@pytest.mark.parametrize("n,beta,delta", [(4, 0.3, 0.7), (6, 1.0, 0.1), (9, 0.05, 2.0)])
def test_trace_complete_graph(n, beta, delta):
    tr = stab.spectral_trace(static_topology("complete", n), VirusParams.homogeneous(beta, delta, n),
                             GRID)
    np.testing.assert_allclose(tr.values, beta * (n - 1) - delta, atol=1e-12)


def test_trace_line_three():
    tr = stab.spectral_trace(static_topology("line", 3), VirusParams.homogeneous(1.0, 0.0, 3), GRID)
    np.testing.assert_allclose(tr.values, np.sqrt(2), atol=1e-12)
    assert tr.symmetric.all()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 31))
def test_symmetric_and_general_paths_agree(n, seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 1, (n, n))
    W = np.triu(W, 1) + np.triu(W, 1).T
    M = VirusParams.homogeneous(rng.uniform(0, 2), rng.uniform(0, 2), n).system_matrix(W)
    lam, sym = stab.leading_eigenvalue(M)
    assert sym
    assert abs(lam - np.max(np.linalg.eigvals(M).real)) < 1e-10


def test_nonsymmetric_uses_abscissa():
    W = np.array([[0, 2.0], [0.5, 0]])
    M = VirusParams.homogeneous(1.0, 1.0, 2).system_matrix(W)
    lam, sym = stab.leading_eigenvalue(M)
    assert not sym
    assert lam == pytest.approx(0.0, abs=1e-12)


def test_spectral_certificate_certifies_subcritical_complete():
    c = stab.check_theorem1(static_topology("complete", 6), VirusParams.homogeneous(0.1, 1.0, 6),
                            GRID)
    assert c.verdict == stab.CERTIFIED
    assert c.scalars["sup_lambda1"] == pytest.approx(-0.5)


def test_spectral_certificate_and_flag_supercritical_complete():
    A = static_topology("complete", 6)
    params = VirusParams.homogeneous(1.0, 0.1, 6)
    assert stab.check_theorem1(A, params, GRID).verdict == stab.INCONCLUSIVE
    flag = stab.instability_flag(stab.spectral_trace(A, params, GRID))
    assert flag.verdict == stab.UNSTABLE
    assert flag.scalars["s1"] == pytest.approx(4.9)


def test_spectral_certificate_empty_graph():
    assert stab.check_theorem1(np.zeros((4, 4)), VirusParams.homogeneous(3.0, 0.1, 4),
                               GRID).certified


def test_spectral_certificate_preconditions():
    with pytest.raises(PreconditionError):
        stab.check_theorem1(static_topology("line", 3),
                            VirusParams(np.array([0.1, 0.2, 0.1]), np.ones(3)), GRID)
    with pytest.raises(PreconditionError):
        stab.check_theorem1(np.array([[0, 1.0], [0, 0]]), VirusParams.homogeneous(0.1, 1, 2), GRID)


def test_spectral_certificate_tie_is_inconclusive():
    c = stab.check_theorem1(static_topology("complete", 3), VirusParams.homogeneous(0.5, 1.0, 3),
                            GRID)
    assert c.verdict == stab.INCONCLUSIVE


def test_flag_not_raised_when_negative():
    tr = stab.spectral_trace(static_topology("line", 4), VirusParams.homogeneous(0.1, 1, 4), GRID)
    assert stab.instability_flag(tr).verdict == stab.INCONCLUSIVE


def test_flag_withheld_for_switching_graph():
    traj = GraphTrajectory.piecewise([0.0, 5.0], [static_topology("complete", 4), np.zeros((4, 4))])
    tr = stab.spectral_trace(traj, VirusParams.homogeneous(1.0, 0.5, 4), GRID)
    assert tr.values.max() > 0 > tr.values.min()
    flag = stab.instability_flag(tr)
    assert flag.verdict == stab.INCONCLUSIVE
    assert 0 < flag.scalars["positive_fraction"] < 1


def test_gershgorin_examples():
    assert stab.gershgorin_certificate(np.zeros((3, 3)), VirusParams.homogeneous(1, 0.2, 3),
                                       GRID).certified
    A = static_topology("complete", 6)
    assert stab.gershgorin_certificate(A, VirusParams.homogeneous(0.1, 1.0, 6), GRID).certified
    c = stab.gershgorin_certificate(A, VirusParams.homogeneous(1.0, 1.0, 6), GRID)
    assert c.verdict == stab.INCONCLUSIVE


def test_crude_bound_examples():
    assert stab.remark2_check(2, 1.0, 3.0).certified
    assert stab.remark2_check(6, 0.1, 1.0).verdict == stab.INCONCLUSIVE
    assert stab.remark2_check(50, 0.0, 1.0).certified


def test_gamma1_scalar():
    # 2-agent system with eigenvalues a - delta and -a - delta
    params = VirusParams.homogeneous(1.0, 2.0, 2)
    g = stab.gamma1_estimate(np.zeros((2, 2)), params, GRID)
    assert g == pytest.approx(1 / (2 * 2.0))


def test_gamma1_identity():
    g = stab.gamma1_estimate(np.zeros((5, 5)), VirusParams.homogeneous(1.0, 1.0, 5), GRID)
    assert g == pytest.approx(0.5)


def test_gamma1_time_varying():
    # BA(t) - D has leading eigenvalue -(1 + sin^2 t)
    def A(t):
        return np.cos(t) ** 2 * np.array([[0.0, 1.0], [1.0, 0.0]])

    traj = GraphTrajectory.from_function(A, 0.01, symmetric=True)
    grid = np.linspace(0, 2 * np.pi, 2001)
    g, norms = stab.gamma1_estimate(traj, VirusParams.homogeneous(1.0, 2.0, 2), grid, True)
    np.testing.assert_allclose(norms, 1 / (2 * (1 + np.sin(grid) ** 2)), atol=1e-12)
    assert g == pytest.approx(0.5, abs=1e-12)


def test_gamma1_requires_hurwitz():
    with pytest.raises(PreconditionError, match="t = 0"):
        stab.gamma1_estimate(static_topology("complete", 4), VirusParams.homogeneous(1, 0.1, 4), GRID)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31))
def test_lyapunov_residual_and_gamma0_bound(n, seed):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 1, (n, n))
    np.fill_diagonal(W, 0)
    params = VirusParams(rng.uniform(0, 0.3, n), rng.uniform(0.5 * n, n + 1, n))
    M = params.system_matrix(W)
    Q = stab.lyapunov_solution(M)
    assert np.linalg.norm(Q @ M + M.T @ Q + np.eye(n)) < 1e-8
    L = np.linalg.norm(M, 2)
    assert stab.gamma1_estimate(W, params, GRID) >= 1 / (2 * L) - 1e-12


def test_rate_certificate_static_literal_reading():
    # A = 0, scalar-like: gamma1 = 1/(2 delta), certifies iff delta < 2 delta^2
    cert = stab.check_theorem2(np.zeros((1, 1)), VirusParams.homogeneous(1.0, 1.0, 1), GRID)
    assert cert.certified
    assert cert.scalars["sup_BAdot"] == 0.0
    assert cert.scalars["sup_BAdot_minus_D"] == pytest.approx(1.0)
    weak = stab.check_theorem2(np.zeros((1, 1)), VirusParams.homogeneous(1.0, 0.25, 1), GRID)
    assert weak.verdict == stab.INCONCLUSIVE
    assert weak.scalars["branch1_margin_derivative_only"] > 0


def test_rate_certificate_static_symmetric_graph():
    params = VirusParams.homogeneous(0.1, 2.0, 3)
    cert = stab.check_theorem2(static_topology("line", 3), params, GRID)
    s = cert.scalars
    assert s["sup_BAdot_minus_D"] == pytest.approx(2.0)
    assert cert.certified == (2.0 < 1 / (2 * s["gamma1"] ** 2))
    assert cert.certified


def test_rate_certificate_fast_switching_inconclusive():
    def A(t):
        return (0.5 + 0.4 * np.sin(50 * t)) * np.array([[0.0, 1.0], [1.0, 0.0]])

    traj = GraphTrajectory.from_function(A, 1e-3, symmetric=True)
    grid = np.linspace(0, 2, 4001)
    cert = stab.check_theorem2(traj, VirusParams.homogeneous(1.0, 1.0, 2), grid)
    assert cert.verdict == stab.INCONCLUSIVE
    assert cert.scalars["sup_BAdot"] > 15


def test_rate_certificate_needs_three_points():
    with pytest.raises(InvalidInputError):
        stab.check_theorem2(np.zeros((1, 1)), VirusParams.homogeneous(1, 1, 1), [0.0, 1.0])


def test_block_trace_is_max_of_blocks():
    rng = np.random.default_rng(4)
    groups = np.array([0, 0, 1, 1, 1, 2])
    W = rng.uniform(0, 1, (6, 6))
    W = apply_quarantine(np.triu(W, 1) + np.triu(W, 1).T, groups)
    params = VirusParams(np.full(6, 0.8), rng.uniform(0.1, 1, 6))
    tr = stab.spectral_trace(W, params, GRID, groups)
    stacked = np.max(np.stack(list(tr.block_values.values())), axis=0)
    assert np.max(np.abs(tr.values - stacked)) < 1e-10


def test_quarantine_certificate_cases():
    A = apply_quarantine(static_topology("complete", 6), [0, 0, 0, 1, 1, 1])
    sub = VirusParams.homogeneous(0.1, 1.0, 6)
    assert stab.quarantine_certificate(A, sub, [0, 0, 0, 1, 1, 1], GRID).certified
    mixed = VirusParams(np.array([0.1, 0.1, 0.1, 2, 2, 2]), np.full(6, 1.0))
    # beta only has to be homogeneous inside each block
    per_block = stab.quarantine_certificate(A, mixed, [0, 0, 0, 1, 1, 1], GRID)
    assert per_block.blocks[0].certified and not per_block.blocks[1].certified
    hot = VirusParams.homogeneous(0.8, 1.0, 6)
    A2 = apply_quarantine(static_topology("complete", 6), [0, 0, 1, 1, 1, 1])
    qc = stab.quarantine_certificate(A2, hot, [0, 0, 1, 1, 1, 1], GRID)
    assert not qc.certified
    assert qc.blocks[0].certified and not qc.blocks[1].certified
    single = stab.quarantine_certificate(static_topology("complete", 4),
                                         VirusParams.homogeneous(5.0, 0.1, 4), [0, 1, 2, 3], GRID)
    assert single.certified


def _separating_pair():
    run = simulate_mobility([[0.0], [0.5]], ConstantDrift(np.array([[-1.0], [1.0]])), 20, 0.1, 1.0)
    return run.graph


def test_shifted_check_after_separation():
    traj = _separating_pair()
    params = VirusParams.homogeneous(2.0, 0.5, 2)
    grid = np.linspace(0, 2, 21)
    assert stab.check_theorem1(traj, params, grid).verdict == stab.INCONCLUSIVE
    late = stab.corollary1_shifted_check(traj, params, 0.3, grid)
    assert late.certified
    assert late.scalars["sup_lambda1"] == pytest.approx(-0.5)


def test_shifted_check_zero_start_matches_spectral():
    traj = _separating_pair()
    params = VirusParams.homogeneous(2.0, 0.5, 2)
    grid = np.linspace(0, 2, 21)
    a = stab.corollary1_shifted_check(traj, params, 0.0, grid)
    b = stab.check_theorem1(traj, params, grid)
    assert a.verdict == b.verdict
    assert a.scalars["sup_lambda1"] == b.scalars["sup_lambda1"]


@pytest.mark.parametrize("t_start", [0.0, 3.0, 9.0])
def test_shifted_check_supercritical_never(t_start):
    c = stab.corollary1_shifted_check(static_topology("star", 5), VirusParams.homogeneous(1, 0.1, 5),
                                      t_start, GRID)
    assert not c.certified


def test_ito_margin():
    A = static_topology("complete", 4)
    params = VirusParams.homogeneous(0.1, 1.0, 4)  # lambda1 = -0.7
    assert stab.ito_noise_check(A, params, [0.3] * 4, GRID).certified        # c = 0.36
    assert not stab.ito_noise_check(A, params, [0.5] * 4, GRID).certified    # c = 1.0


def test_certificate_json():
    c = stab.check_theorem1(static_topology("line", 3), VirusParams.homogeneous(0.1, 1, 3), GRID)
    d = json.loads(c.to_json())
    assert d["verdict"] == stab.CERTIFIED
    assert d["grid"]["points"] == 11
