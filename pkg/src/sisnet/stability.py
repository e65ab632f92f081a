"""Stability and instability certificates for the disease-free equilibrium.

Every "sup over t" below is a maximum over the supplied time grid; each
certificate records that grid so callers can refine it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import InvalidInputError, NumericalFailure, PreconditionError
from .meanfield import VirusParams
from .netgraph import GraphTrajectory

CERTIFIED = "certified-GES"
UNSTABLE = "certified-unstable-origin"
INCONCLUSIVE = "inconclusive"

SYMMETRY_TOL = 1e-12


@dataclass
class StabilityCertificate:
    verdict: str
    condition: str
    scalars: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_json(self) -> str:
        def conv(x):
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, float) and not np.isfinite(x):
                return repr(x)
            return x
        d = asdict(self)
        d["scalars"] = {k: conv(v) for k, v in d["scalars"].items()}
        d["grid"] = {k: conv(v) for k, v in d["grid"].items()}
        return json.dumps(d, sort_keys=True)


def _as_traj(traj) -> GraphTrajectory:
    return traj if isinstance(traj, GraphTrajectory) else GraphTrajectory.static(traj)


def _grid(grid) -> np.ndarray:
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.size == 0:
        raise InvalidInputError("time grid is empty")
    if np.any(np.diff(g) <= 0):
        raise InvalidInputError("time grid must increase strictly")
    return g


def _grid_meta(g) -> dict:
    return {"t0": float(g[0]), "t1": float(g[-1]), "points": int(g.size)}


def leading_eigenvalue(M) -> tuple[float, bool]:
    """Largest eigenvalue (symmetric ``M``) or spectral abscissa; second item says which."""
    M = np.asarray(M, dtype=float)
    symmetric = bool(np.max(np.abs(M - M.T), initial=0.0) <= SYMMETRY_TOL)
    try:
        if symmetric:
            return float(np.linalg.eigvalsh(M)[-1]), True
        return float(np.max(np.linalg.eigvals(M).real)), False
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("eigensolver failed", error=str(exc)) from exc


@dataclass
class SpectralTrace:
    t: np.ndarray
    values: np.ndarray                 # lambda_1 or s_1 of BA(t) - D
    symmetric: np.ndarray              # which path each point took
    static: bool = False
    block_values: dict = field(default_factory=dict)   # group label -> values

    @property
    def sup(self) -> float:
        return float(np.max(self.values))


def spectral_trace(traj, params: VirusParams, grid, groups=None) -> SpectralTrace:
    """Leading eigenvalue of ``BA(t) - D`` along ``grid``.

    With ``groups`` (one label per agent), the same quantity is also
    reported for each diagonal block.
    """
    traj = _as_traj(traj)
    g = _grid(grid)
    vals = np.empty(g.size)
    sym = np.empty(g.size, dtype=bool)
    blocks = {}
    members = None
    if groups is not None:
        labels = np.asarray(groups)
        members = {lab: np.flatnonzero(labels == lab) for lab in sorted(set(labels.tolist()))}
        blocks = {lab: np.empty(g.size) for lab in members}
    for k, t in enumerate(g):
        M = params.system_matrix(traj.at(t))
        vals[k], sym[k] = leading_eigenvalue(M)
        if members is not None:
            for lab, idx in members.items():
                blocks[lab][k] = leading_eigenvalue(M[np.ix_(idx, idx)])[0]
    return SpectralTrace(g, vals, sym, traj.is_static, blocks)


def _require_theorem1(traj: GraphTrajectory, params: VirusParams):
    if not np.all(params.beta == params.beta[0]):
        raise PreconditionError("heterogeneous infection rates: use check_theorem2")
    if not traj.symmetric:
        raise PreconditionError("graph is not symmetric: use check_theorem2")


def check_theorem1(traj, params: VirusParams, grid, margin: float = 0.0) -> StabilityCertificate:
    """Symmetric, homogeneous-beta test: certify when ``sup lambda_1(BA(t) - D) < -margin``."""
    traj = _as_traj(traj)
    _require_theorem1(traj, params)
    trace = spectral_trace(traj, params, grid)
    sup = trace.sup
    scalars = {"sup_lambda1": sup, "margin": margin}
    if sup < -margin:
        return StabilityCertificate(CERTIFIED, "sup lambda1(BA-D) < 0", scalars, _grid_meta(trace.t))
    return StabilityCertificate(INCONCLUSIVE, "sup lambda1(BA-D) >= 0", scalars, _grid_meta(trace.t))


def instability_flag(trace: SpectralTrace) -> StabilityCertificate:
    """Unstable origin when ``s_1(BA - D) > 0`` on a static graph.

    For time-varying graphs the flag is withheld; the per-time values stay
    in the certificate.
    """
    scalars = {"s1": trace.sup}
    meta = _grid_meta(trace.t)
    if not trace.static:
        scalars["positive_fraction"] = float(np.mean(trace.values > 0))
        return StabilityCertificate(INCONCLUSIVE, "graph not static; instability flag withheld",
                                    scalars, meta)
    if trace.values[0] > 0:
        return StabilityCertificate(UNSTABLE, "s1(BA-D) > 0", scalars, meta)
    return StabilityCertificate(INCONCLUSIVE, "s1(BA-D) <= 0", scalars, meta)


def gershgorin_certificate(traj, params: VirusParams, grid) -> StabilityCertificate:
    """Row-sum test ``beta_i sup_t sum_j a_ij(t) - delta_i < 0`` for every agent."""
    traj = _as_traj(traj)
    g = _grid(grid)
    if not traj.symmetric:
        raise PreconditionError("Gershgorin test needs a symmetric graph")
    row_sup = np.max([traj.at(t).sum(axis=1) for t in g], axis=0)
    margins = params.beta * row_sup - params.delta
    scalars = {"worst_margin": float(margins.max()), "margins": margins}
    if np.all(margins < 0):
        return StabilityCertificate(CERTIFIED, "Gershgorin row sums", scalars, _grid_meta(g))
    return StabilityCertificate(INCONCLUSIVE, "Gershgorin row sums not all negative",
                                scalars, _grid_meta(g))


def remark2_check(n: int, beta: float, delta: float) -> StabilityCertificate:
    """Crude bound for proximity graphs (weights <= 1): certify when ``n^2 - n < delta / beta``."""
    ratio = np.inf if beta == 0 else delta / beta
    scalars = {"n2_minus_n": n * n - n, "delta_over_beta": ratio}
    if n * n - n < ratio:
        return StabilityCertificate(CERTIFIED, "n^2 - n < delta/beta", scalars)
    return StabilityCertificate(INCONCLUSIVE, "n^2 - n >= delta/beta", scalars)


def lyapunov_solution(M) -> np.ndarray:
    """Symmetric ``Q`` solving ``Q M + M^T Q = -I``."""
    M = np.asarray(M, dtype=float)
    Q = solve_continuous_lyapunov(M.T, -np.eye(M.shape[0]))
    return (Q + Q.T) / 2


def gamma1_estimate(traj, params: VirusParams, grid, return_all: bool = False):
    """``sup_t ||Q(t)||`` over the grid, where ``Q(t)`` solves the Lyapunov equation for ``BA(t) - D``."""
    traj = _as_traj(traj)
    g = _grid(grid)
    norms = np.empty(g.size)
    for k, t in enumerate(g):
        M = params.system_matrix(traj.at(t))
        s1, _ = leading_eigenvalue(M)
        if not s1 < 0:
            raise PreconditionError(f"BA(t) - D is not Hurwitz at t = {t} (s1 = {s1})")
        norms[k] = np.linalg.norm(lyapunov_solution(M), 2)
    gamma1 = float(norms.max())
    return (gamma1, norms) if return_all else gamma1


def _window_integrals(g, f, window):
    """Trapezoid integrals of ``f`` over ``[t, t + window]`` for grid starts ``t``."""
    cum = np.concatenate([[0.0], np.cumsum(np.diff(g) * (f[1:] + f[:-1]) / 2)])
    starts = g[g + window <= g[-1] + 1e-12]
    if starts.size == 0:
        return np.array([cum[-1]])
    ends = np.interp(starts + window, g, cum)
    return ends - np.interp(starts, g, cum)


def check_theorem2(traj, params: VirusParams, grid, window: float | None = None,
                   alpha: float = 0.0, mu: float | None = None) -> StabilityCertificate:
    """Slowly-varying test for directed graphs and heterogeneous rates.

    ``dA/dt`` comes from central differences on the grid. The rate term is
    taken literally as ``||B dA/dt - D||``; ``||B dA/dt||`` is reported
    alongside. Certifies when either

    * ``sup ||B dA/dt - D|| < 1 / (2 gamma1^2)``, or
    * every window integral of ``||B dA/dt - D||`` is at most ``mu T + alpha``
      with ``mu < gamma0 / (2 gamma1^3)``, ``gamma0 = 1 / (2L)``.

    When ``mu`` is not given the smallest admissible ``mu`` is used.
    """
    traj = _as_traj(traj)
    g = _grid(grid)
    if g.size < 3:
        raise InvalidInputError("need at least 3 grid points to difference A(t)")
    mats = np.stack([traj.at(t) for t in g])
    A_dot = np.gradient(mats, g, axis=0, edge_order=2)
    B = params.B()
    D = params.D()
    L = max(np.linalg.norm(params.system_matrix(A), 2) for A in mats)
    gamma1 = gamma1_estimate(traj, params, g)
    gamma0 = 1.0 / (2.0 * L)
    rate_literal = np.array([np.linalg.norm(B @ Ad - D, 2) for Ad in A_dot])
    rate_derivative = np.array([np.linalg.norm(B @ Ad, 2) for Ad in A_dot])

    bound1 = 1.0 / (2.0 * gamma1 ** 2)
    branch1 = float(rate_literal.max()) < bound1

    window = float(g[-1] - g[0]) if window is None else float(window)
    mu_limit = gamma0 / (2.0 * gamma1 ** 3)
    integrals = _window_integrals(g, rate_literal, window)
    mu_needed = max(float(np.max((integrals - alpha) / window)), 0.0)
    mu_used = mu_needed if mu is None else float(mu)
    branch2 = mu_used >= mu_needed and mu_used < mu_limit and (mu is None or mu > 0)

    scalars = {
        "gamma1": gamma1, "gamma0": gamma0, "L": L,
        "sup_BAdot_minus_D": float(rate_literal.max()),
        "sup_BAdot": float(rate_derivative.max()),
        "branch1_bound": bound1,
        "branch1_margin": bound1 - float(rate_literal.max()),
        "branch1_margin_derivative_only": bound1 - float(rate_derivative.max()),
        "mu_needed": mu_needed, "mu_used": mu_used, "mu_limit": mu_limit,
        "branch2_margin": mu_limit - mu_used, "alpha": alpha, "window": window,
    }
    meta = {**_grid_meta(g), "spacing": float(np.min(np.diff(g)))}
    if branch1:
        return StabilityCertificate(CERTIFIED, "sup ||B dA/dt - D|| < 1/(2 gamma1^2)", scalars, meta)
    if branch2:
        return StabilityCertificate(CERTIFIED, "window integral <= mu T + alpha, mu < gamma0/(2 gamma1^3)",
                                    scalars, meta)
    return StabilityCertificate(INCONCLUSIVE, "neither rate condition holds", scalars, meta)


@dataclass
class QuarantineCertificate:
    verdict: str
    blocks: dict          # group label -> StabilityCertificate

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED


def quarantine_certificate(traj, params: VirusParams, groups, grid) -> QuarantineCertificate:
    """Apply :func:`check_theorem1` block by block under the partition ``groups``."""
    traj = _as_traj(traj)
    labels = np.asarray(groups)
    if labels.shape != (traj.n,):
        raise InvalidInputError("partition size does not match the graph")
    blocks = {}
    for lab in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == lab)
        sub = VirusParams(params.beta[idx], params.delta[idx])
        sub_traj = _SubGraph(traj, idx)
        blocks[lab] = check_theorem1(sub_traj, sub, grid)
    verdict = CERTIFIED if all(c.certified for c in blocks.values()) else INCONCLUSIVE
    return QuarantineCertificate(verdict, blocks)


class _SubGraph(GraphTrajectory):
    """View of a trajectory restricted to a subset of agents."""

    def __init__(self, parent: GraphTrajectory, idx):
        super().__init__(len(idx), symmetric=parent.symmetric, radius=parent.radius)
        self._parent = parent
        self._idx = np.asarray(idx)

    @property
    def is_static(self):
        return self._parent.is_static

    def at(self, t):
        return self._parent.at(t)[np.ix_(self._idx, self._idx)]


def corollary1_shifted_check(traj, params: VirusParams, t_start: float, grid) -> StabilityCertificate:
    """:func:`check_theorem1` restricted to grid points ``t >= t_start``."""
    g = _grid(grid)
    g = g[g >= t_start]
    if g.size == 0:
        raise InvalidInputError(f"no grid points at or after t_start = {t_start}")
    cert = check_theorem1(traj, params, g)
    cert.scalars["t_start"] = float(t_start)
    return cert


def ito_noise_check(traj, params: VirusParams, gains, grid, eps: float = 1e-9) -> StabilityCertificate:
    """Itô-noise condition: ``sup lambda_1(BA(t) - D) < -(sum k_i^2 + eps)``."""
    c = float(np.sum(np.asarray(gains, dtype=float) ** 2)) + eps
    cert = check_theorem1(traj, params, grid, margin=c)
    cert.condition = ("sup lambda1(BA-D) < -(sum k^2 + eps)" if cert.certified
                      else "sup lambda1(BA-D) >= -(sum k^2 + eps)")
    cert.scalars["c"] = c
    return cert
