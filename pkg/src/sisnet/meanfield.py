"""Deterministic n-intertwined mean-field SIS model and the aggregate two-group model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ode
from .errors import InvalidInputError
from .netgraph import GraphTrajectory


@dataclass(frozen=True)
class VirusParams:
    """Per-agent infection rates ``beta`` and healing rates ``delta``."""

    beta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if beta.shape != delta.shape or beta.ndim != 1:
            raise InvalidInputError("beta and delta must be vectors of equal length")
        if np.any(beta < 0) or np.any(delta < 0):
            raise InvalidInputError("rates must be nonnegative")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def homogeneous(cls, beta: float, delta: float, n: int) -> "VirusParams":
        return cls(np.full(n, float(beta)), np.full(n, float(delta)))

    @property
    def n(self) -> int:
        return self.beta.size

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.all(self.beta == self.beta[0]) and np.all(self.delta == self.delta[0]))

    def B(self) -> np.ndarray:
        return np.diag(self.beta)

    def D(self) -> np.ndarray:
        return np.diag(self.delta)

    def system_matrix(self, A) -> np.ndarray:
        """Linearisation ``BA - D`` at the disease-free state."""
        return self.beta[:, None] * np.asarray(A, dtype=float) - np.diag(self.delta)


def mf_rhs(p, A, params: VirusParams) -> np.ndarray:
    """``dp_i/dt = (1 - p_i) beta_i sum_j a_ij p_j - delta_i p_i``."""
    p = np.asarray(p, dtype=float)
    return (1.0 - p) * params.beta * (np.asarray(A) @ p) - params.delta * p


def _project_unit_box(p):
    if np.any(p < 0) or np.any(p > 1):
        return np.clip(p, 0.0, 1.0)
    return p


@dataclass
class MeanFieldResult:
    t: np.ndarray
    p: np.ndarray          # (len(t), n)
    early_stop: bool = False
    stop_time: float | None = None


def _integrate_pieces(rhs_for, y0, traj: GraphTrajectory, T, times, *, rtol, atol,
                      derivative_tol, project):
    out = np.empty((len(times), np.size(y0)))
    y = np.array(y0, dtype=float)
    k = 0
    h = None
    last_change = traj.last_change()
    for a, b, A in traj.segments(0.0, T):
        hi = int(np.searchsorted(times, b, side="right"))
        final_piece = a >= last_change
        seg = _ode.integrate_segment(
            rhs_for(A), a, b, y, times[k:hi] if not final_piece else times[k:],
            rtol=rtol, atol=atol, h0=h, project=project,
            derivative_tol=derivative_tol if final_piece else None)
        if final_piece:
            out[k:] = seg.y
            return out, seg.stopped, seg.t_end if seg.stopped else None
        out[k:hi] = seg.y
        y, h, k = seg.y_end, seg.h, hi
    return out, False, None


def integrate_mf(p0, traj, params: VirusParams, T, times=None, *, rtol=1e-8, atol=1e-10,
                 derivative_tol: float | None = 1e-12, clamp=True) -> MeanFieldResult:
    """Solve the (possibly time-varying) mean-field ODE on ``[0, T]``.

    The state is clamped to ``[0, 1]^n`` after each accepted step. Once the
    graph has stopped changing and ``max|dp/dt| < derivative_tol`` the
    state is held to ``T``.
    """
    if not isinstance(traj, GraphTrajectory):
        traj = GraphTrajectory.static(traj)
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (traj.n,) or params.n != traj.n:
        raise InvalidInputError("initial state, parameters and graph disagree on n")
    if np.any(p0 < 0) or np.any(p0 > 1):
        raise InvalidInputError("initial infection probabilities must lie in [0, 1]")
    if not T > 0:
        raise InvalidInputError(f"horizon must be positive, got {T}")
    times = np.array([0.0, T]) if times is None else np.asarray(times, dtype=float)
    p, stopped, stop_time = _integrate_pieces(
        lambda A: (lambda t, p: mf_rhs(p, A, params)), p0, traj, T, times,
        rtol=rtol, atol=atol, derivative_tol=derivative_tol,
        project=_project_unit_box if clamp else None)
    return MeanFieldResult(times, p, stopped, stop_time)


def integrate_linearized(p0, traj, params: VirusParams, T, times=None, *, rtol=1e-10,
                         atol=1e-12) -> MeanFieldResult:
    """Solve ``dp/dt = (BA(t) - D) p``, the comparison system dominating the mean field."""
    if not isinstance(traj, GraphTrajectory):
        traj = GraphTrajectory.static(traj)
    times = np.array([0.0, T]) if times is None else np.asarray(times, dtype=float)
    p, _, _ = _integrate_pieces(
        lambda A: (lambda t, p, M=params.system_matrix(A): M @ p),
        np.asarray(p0, dtype=float), traj, T, times,
        rtol=rtol, atol=atol, derivative_tol=None, project=None)
    return MeanFieldResult(times, p)


@dataclass
class AggregateResult:
    t: np.ndarray
    S: np.ndarray
    I: np.ndarray
    early_stop: bool = False


def aggregate_sis(S0, I0, beta, delta, T, times=None, *, rtol=1e-10, atol=1e-12,
                  derivative_tol: float | None = 1e-12) -> AggregateResult:
    """Kermack-McKendrick SIS on raw counts: ``dI/dt = beta S I - delta I``.

    ``beta`` multiplies the counts directly, without a ``1/n`` factor.
    """
    n = S0 + I0
    if not n > 0 or S0 < 0 or I0 < 0:
        raise InvalidInputError("need S0, I0 >= 0 with S0 + I0 > 0")
    times = np.array([0.0, T]) if times is None else np.asarray(times, dtype=float)

    def rhs(t, y):
        s, i = y
        flow = beta * s * i - delta * i
        return np.array([-flow, flow])

    def project(y):
        i = min(max(y[1], 0.0), n)
        return np.array([n - i, i])

    seg = _ode.integrate_segment(rhs, 0.0, T, [S0, I0], times, rtol=rtol, atol=atol,
                                 project=project, derivative_tol=derivative_tol)
    return AggregateResult(times, seg.y[:, 0], seg.y[:, 1], seg.stopped)


def ndfe_complete_analytic(n: int, beta: float, delta: float) -> np.ndarray:
    """Symmetric endemic fixed point on the complete graph (zero when subcritical)."""
    if beta * (n - 1) > delta:
        return np.full(n, 1.0 - delta / (beta * (n - 1)))
    return np.zeros(n)
