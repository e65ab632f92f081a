"""Exact SIS dynamics as a continuous-time Markov chain on all 2**n configurations.

State ``k`` (0-based) encodes the configuration ``x`` with
``x_i = (k >> i) & 1``, i.e. agent ``i`` is bit ``i``. This is the ordering
whose marginalisation matrix has bit-reversed lexicographic rows.

The generator is stored row-oriented: ``Q[src, dst]`` is the jump rate
``src -> dst`` and rows sum to zero, so ``dy/dt = Q.T @ y`` keeps ``y`` on the
probability simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from . import _ode
from .errors import InvalidInputError, NumericalFailure, SizeCapError
from .netgraph import GraphTrajectory, validate_weight_matrix

DEFAULT_CAP = 14
SIMPLEX_TOL = 1e-9


def state_bits(n: int) -> np.ndarray:
    """``(2**n, n)`` 0/1 matrix whose row ``k`` is the configuration of state ``k``."""
    k = np.arange(2 ** n)
    return ((k[:, None] >> np.arange(n)) & 1).astype(np.int8)


def marginal_matrix(n: int) -> np.ndarray:
    """The ``2**n x n`` marginalisation matrix ``M`` with ``v = y @ M``."""
    return state_bits(n).astype(float)


def state_index(x) -> int:
    x = np.asarray(x)
    if np.any((x != 0) & (x != 1)):
        raise InvalidInputError("configuration must be a 0/1 vector")
    x = x.astype(np.int64)
    return int(np.sum(x << np.arange(x.size)))


def point_mass_from_bits(x) -> np.ndarray:
    """Distribution concentrated on the configuration ``x``."""
    x = np.asarray(x)
    y = np.zeros(2 ** x.size)
    y[state_index(x)] = 1.0
    return y


def marginals(y) -> np.ndarray:
    """Per-agent infection probabilities ``v_i = sum of y_k over states with x_i = 1``.

    Accepts a single distribution or a stack of them along the first axis.
    """
    y = np.asarray(y, dtype=float)
    n = int(round(math.log2(y.shape[-1])))
    if 2 ** n != y.shape[-1]:
        raise InvalidInputError(f"distribution length {y.shape[-1]} is not a power of two")
    return y @ marginal_matrix(n)


def _rates(n, beta, delta):
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (n,))
    if np.any(beta < 0) or np.any(delta < 0):
        raise InvalidInputError("infection and healing rates must be nonnegative")
    return beta, delta


def build_generator(A, beta, delta, cap: int = DEFAULT_CAP) -> sp.csr_matrix:
    """Sparse generator of the 2**n-state SIS chain for weight matrix ``A``.

    An infected agent ``i`` heals at rate ``delta_i``; a healthy agent ``i``
    is infected at rate ``beta_i * sum_j a_ij x_j``. ``beta`` and ``delta``
    may be scalars or per-agent arrays.
    """
    A = validate_weight_matrix(A)
    n = A.shape[0]
    if n > cap:
        raise SizeCapError(f"exact chain limited to n <= {cap} agents, got n = {n}")
    beta, delta = _rates(n, beta, delta)
    bits = state_bits(n)
    states = np.arange(2 ** n)
    pressure = bits @ A.T                      # pressure[s, i] = sum_j a_ij x_j
    rates = np.where(bits == 1, delta, beta * pressure)
    targets = states[:, None] ^ (1 << np.arange(n))
    keep = rates > 0
    rows = np.repeat(states, n).reshape(-1, n)[keep]
    cols = targets[keep]
    vals = rates[keep]
    outflow = rates.sum(axis=1)
    Q = sp.csr_matrix(
        (np.concatenate([vals, -outflow]),
         (np.concatenate([rows, states]), np.concatenate([cols, states]))),
        shape=(2 ** n, 2 ** n),
    )
    Q.sum_duplicates()
    Q.eliminate_zeros()
    return Q


@dataclass
class ChainOptions:
    derivative_tol: float | None = 1e-12
    poisson_tail: float = 1e-12
    window: float = 2000.0      # expected uniformized jumps per window
    method: str = "auto"        # auto | uniformization | rk45
    rtol: float = 1e-8
    atol: float = 1e-12
    cap: int = DEFAULT_CAP


@dataclass
class ChainResult:
    t: np.ndarray
    y: np.ndarray                      # (len(t), 2**n)
    early_stop: bool = False
    stop_time: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        return marginals(self.y)


def _check_simplex(y, t):
    defect = abs(float(y.sum()) - 1.0)
    low = float(y.min())
    if defect > SIMPLEX_TOL or low < -1e-9:
        raise NumericalFailure("chain distribution left the probability simplex",
                               t=t, sum_defect=defect, min_entry=low)


def _clean(y):
    y = np.where(y < 0, 0.0, y)
    return y


class _Uniformizer:
    """Transient solution of ``dy/dt = Q.T y`` for a constant generator."""

    def __init__(self, Q, opts: ChainOptions):
        self.Qt = Q.T.tocsr()
        self.rate = float(max(-Q.diagonal().min(), 0.0)) * (1 + 1e-12)
        if self.rate > 0:
            P = sp.identity(Q.shape[0], format="csr") + Q / self.rate
            self.Pt = P.T.tocsr()
        self.opts = opts

    def derivative(self, y):
        return self.Qt @ y

    def advance(self, y, tau):
        """Return ``exp(tau * Q.T) @ y``."""
        if tau <= 0 or self.rate == 0:
            return y.copy()
        mu = self.rate * tau
        tail = self.opts.poisson_tail
        right = int(poisson.isf(tail / 2, mu)) + 1
        left = int(poisson.ppf(tail / 2, mu)) if mu > 50 else 0
        ks = np.arange(left, right + 1)
        w = poisson.pmf(ks, mu)
        w /= w.sum()
        term = y.copy()
        for _ in range(left):
            term = self.Pt @ term
        acc = w[0] * term
        for wk in w[1:]:
            term = self.Pt @ term
            acc += wk * term
        return acc


def _integrate_static(y0, Q, T, times, opts: ChainOptions):
    uni = _Uniformizer(Q, opts)
    out = np.empty((len(times), y0.size))
    y = y0.copy()
    t = 0.0
    k = 0
    stopped = False
    stop_time = None
    # window length in time units; every window ends with a flatness check
    win = opts.window / uni.rate if uni.rate > 0 else np.inf
    while k < len(times):
        if opts.derivative_tol is not None and not stopped:
            if np.max(np.abs(uni.derivative(y))) < opts.derivative_tol:
                stopped, stop_time = True, t
        if stopped:
            out[k:] = y
            break
        target = times[k]
        if target <= t:
            out[k] = y
            k += 1
            continue
        step = min(win, target - t)
        y = uni.advance(y, step)
        t = target if step == target - t else t + step
        _check_simplex(y, t)
        y = _clean(y)
    return out, stopped, stop_time


def _integrate_piecewise(y0, traj: GraphTrajectory, beta, delta, T, times, opts):
    out = np.empty((len(times), y0.size))
    y = y0.copy()
    k = 0
    h = None
    stopped = False
    stop_time = None
    last_change = traj.last_change()
    cache: dict[int, tuple] = {}
    for a, b, A in traj.segments(0.0, T):
        key = id(A)
        if key not in cache:
            Q = build_generator(A, beta, delta, cap=opts.cap)
            cache = {key: (Q, Q.T.tocsr(), A)}
        Qt = cache[key][1]
        lo = k
        hi = int(np.searchsorted(times, b, side="right"))
        seg_times = times[lo:hi]
        final_piece = a >= last_change
        if opts.method == "uniformization":
            Q = cache[key][0]
            if final_piece:
                seg_y, stopped, seg_stop = _integrate_static(
                    y, Q, b - a, times[lo:] - a, opts)
                out[lo:] = seg_y
                return out, stopped, None if seg_stop is None else a + seg_stop
            uni = _Uniformizer(Q, opts)
            t = a
            for j in range(lo, hi):
                y = uni.advance(y, times[j] - t)
                t = times[j]
                out[j] = y
            y = uni.advance(y, b - t)
        else:
            seg = _ode.integrate_segment(
                lambda t, yy: Qt @ yy, a, b, y, seg_times,
                rtol=opts.rtol, atol=opts.atol, h0=h,
                derivative_tol=opts.derivative_tol if final_piece else None)
            out[lo:hi] = seg.y
            y, h = seg.y_end, seg.h
            if seg.stopped:
                out[hi:] = y
                stopped, stop_time = True, seg.t_end
                break
        _check_simplex(y, b)
        y = _clean(y)
        k = hi
    return out, stopped, stop_time


def integrate_chain(y0, traj, beta, delta, T, times=None,
                    opts: ChainOptions | None = None) -> ChainResult:
    """Transient distribution of the chain on ``[0, T]``.

    ``traj`` is a :class:`GraphTrajectory` or a plain weight matrix. Static
    graphs default to uniformization, time-varying ones to Dormand-Prince
    restarted at every graph change. With ``derivative_tol`` set, the solve
    stops once ``max|dy/dt|`` drops below it and holds the state to ``T``
    (only after the last graph change).
    """
    opts = opts or ChainOptions()
    if not isinstance(traj, GraphTrajectory):
        traj = GraphTrajectory.static(traj)
    if not T > 0:
        raise InvalidInputError(f"horizon must be positive, got {T}")
    if traj.n > opts.cap:
        raise SizeCapError(f"exact chain limited to n <= {opts.cap} agents, got n = {traj.n}")
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (2 ** traj.n,):
        raise InvalidInputError(f"initial distribution must have length {2 ** traj.n}")
    if abs(float(y0.sum()) - 1.0) > SIMPLEX_TOL or float(y0.min()) < 0:
        raise InvalidInputError("initial distribution must be a probability vector")
    times = np.array([0.0, T]) if times is None else np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > T:
        raise InvalidInputError("output times must be sorted and lie in [0, T]")

    method = opts.method
    if method == "auto":
        method = "uniformization" if traj.is_static else "rk45"
    if traj.is_static and method == "uniformization":
        Q = build_generator(traj.at(0.0), beta, delta, cap=opts.cap)
        y, stopped, stop_time = _integrate_static(y0, Q, T, times, opts)
    else:
        run_opts = ChainOptions(**{**opts.__dict__, "method": method})
        y, stopped, stop_time = _integrate_piecewise(y0, traj, beta, delta, T, times, run_opts)
    for row, t in zip(y, times):
        _check_simplex(row, t)
    y = _clean(y)
    return ChainResult(times, y, stopped, stop_time, {"method": method})
