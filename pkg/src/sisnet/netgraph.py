"""Static and time-varying weighted contact graphs.

Weight matrices are plain ``numpy`` arrays with a zero diagonal and
nonnegative entries. Time variation is expressed through
:class:`GraphTrajectory`, which every integrator in the package consumes as
a sequence of constant pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError


def validate_weight_matrix(A, symmetric: bool = False) -> np.ndarray:
    """Return ``A`` as a float array after checking the weight-matrix invariants."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"weight matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("weight matrix has non-finite entries")
    if np.any(np.diag(A) != 0):
        raise InvalidInputError("weight matrix must have a zero diagonal")
    if np.any(A < 0):
        raise InvalidInputError("weight matrix entries must be nonnegative")
    if symmetric and not np.array_equal(A, A.T):
        raise InvalidInputError("weight matrix flagged symmetric is not symmetric")
    return A


def static_topology(kind: str, n: int) -> np.ndarray:
    """Binary adjacency of a line, star (hub = agent 0) or complete graph."""
    if n < 2:
        raise InvalidInputError(f"topology needs at least 2 agents, got {n}")
    A = np.zeros((n, n))
    if kind == "line":
        idx = np.arange(n - 1)
        A[idx, idx + 1] = 1.0
        A[idx + 1, idx] = 1.0
    elif kind == "star":
        A[0, 1:] = 1.0
        A[1:, 0] = 1.0
    elif kind == "complete":
        A[:] = 1.0
        np.fill_diagonal(A, 0.0)
    else:
        raise InvalidInputError(f"unknown topology {kind!r}; expected line, star or complete")
    return A


def proximity_weights(positions, r: float) -> np.ndarray:
    """Gaussian proximity kernel ``exp(-|z_i - z_j|^2)`` cut off at distance ``r``.

    The cut-off is strict: pairs exactly ``r`` apart get weight 0.
    """
    if not r > 0:
        raise InvalidInputError(f"radius must be positive, got {r}")
    z = np.asarray(positions, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    diff = z[:, None, :] - z[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    A = np.where(np.sqrt(d2) < r, np.exp(-d2), 0.0)
    np.fill_diagonal(A, 0.0)
    # einsum over (i, j) and (j, i) is bitwise symmetric already; enforce anyway
    return np.maximum(A, A.T)


# --- mobility -----------------------------------------------------------------


@dataclass(frozen=True)
class ConstantDrift:
    """Every agent moves with its own constant velocity (rows of ``velocity``)."""

    velocity: np.ndarray


@dataclass(frozen=True)
class ReflectingDrift:
    """Constant drift confined to axis-aligned boxes.

    ``center`` and ``side`` broadcast against ``velocity`` (shape ``(n, d)``),
    so a single box for everyone or one box per agent both work. A velocity
    component flips sign whenever the agent reflects off the matching face.
    """

    velocity: np.ndarray
    center: np.ndarray
    side: np.ndarray | float

    def __post_init__(self):
        side = np.asarray(self.side, dtype=float)
        if np.any(~(side > 0)):
            raise InvalidInputError("box side length must be positive")

    @property
    def lower(self) -> np.ndarray:
        v = np.asarray(self.velocity, dtype=float)
        return np.broadcast_to(np.asarray(self.center) - np.asarray(self.side) / 2, v.shape)

    @property
    def upper(self) -> np.ndarray:
        v = np.asarray(self.velocity, dtype=float)
        return np.broadcast_to(np.asarray(self.center) + np.asarray(self.side) / 2, v.shape)

    def contains(self, positions) -> bool:
        z = np.asarray(positions, dtype=float).reshape(np.shape(self.velocity))
        return bool(np.all((z >= self.lower) & (z <= self.upper)))


MobilityModel = ConstantDrift | ReflectingDrift


def _as_2d(positions) -> np.ndarray:
    z = np.array(positions, dtype=float)
    return z[:, None] if z.ndim == 1 else z


def step_mobility(positions, model: MobilityModel, dt: float = 1.0):
    """Advance positions by one step of length ``dt``.

    Returns ``(new_positions, new_model)``; the model changes only when a
    reflection flips a velocity component. Overshoots past a face are
    mirrored back into the box, repeatedly if the step crosses the box
    more than once.
    """
    if not dt > 0:
        raise InvalidInputError(f"time step must be positive, got {dt}")
    shape = np.shape(positions)
    z = _as_2d(positions)
    v = np.array(model.velocity, dtype=float).reshape(z.shape)
    z = z + v * dt
    if isinstance(model, ReflectingDrift):
        lo, hi = model.lower, model.upper
        for _ in range(10_000):
            over = z > hi
            under = z < lo
            if not (over.any() or under.any()):
                break
            z = np.where(over, 2 * hi - z, z)
            z = np.where(under, 2 * lo - z, z)
            v = np.where(over | under, -v, v)
        z = np.clip(z, lo, hi)
        model = ReflectingDrift(v.reshape(np.shape(model.velocity)), model.center, model.side)
    return z.reshape(shape), model


# --- quarantine ---------------------------------------------------------------


@dataclass(frozen=True)
class QuarantinePolicy:
    """Split agents into groups and cut every cross-group contact.

    ``groups[i]`` is the group label of agent ``i``. ``regions`` optionally
    maps a label to a ``(lower, upper)`` corner pair that confines the
    group's movement once the quarantine starts.
    """

    activation_step: int
    groups: tuple
    regions: Mapping[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if self.activation_step < 0:
            raise InvalidInputError("quarantine activation step must be >= 0")
        if len(self.groups) == 0:
            raise InvalidInputError("quarantine partition is empty")

    @property
    def n_groups(self) -> int:
        return len(set(self.groups))

    def members(self) -> dict[int, np.ndarray]:
        g = np.asarray(self.groups)
        return {label: np.flatnonzero(g == label) for label in sorted(set(self.groups))}


def apply_quarantine(A, policy: QuarantinePolicy | Sequence[int]) -> np.ndarray:
    """Zero every weight between agents of different groups."""
    A = np.asarray(A, dtype=float)
    groups = np.asarray(policy.groups if isinstance(policy, QuarantinePolicy) else policy)
    if groups.shape != (A.shape[0],):
        raise InvalidInputError(
            f"partition covers {groups.size} agents but the graph has {A.shape[0]}")
    return np.where(groups[:, None] == groups[None, :], A, 0.0)


def block_order(groups: Sequence[int]) -> np.ndarray:
    """Permutation that lists agents group by group (stable within a group)."""
    return np.argsort(np.asarray(groups), kind="stable")


# --- trajectories -------------------------------------------------------------


class GraphTrajectory:
    """Time-indexed weight matrix ``A(t)`` for ``t >= 0``.

    Three flavours share one interface:

    * ``GraphTrajectory.static(A)``
    * ``GraphTrajectory.piecewise(times, matrices)``: ``A(t) = matrices[k]``
      on ``[times[k], times[k+1])``, the last matrix held forever
    * ``GraphTrajectory.from_function(f, step)``: ``at(t)`` evaluates
      ``f(t)`` exactly, while integrators hold ``f(t_k)`` on each
      ``[t_k, t_k + step)``

    Instances are immutable once built and safe to share.
    """

    def __init__(self, n, *, times=None, matrices=None, func=None, step=None,
                 symmetric=False, radius=None):
        self.n = int(n)
        self._times = times
        self._matrices = matrices
        self._func = func
        self._step = step
        self.symmetric = bool(symmetric)
        self.radius = radius

    @classmethod
    def static(cls, A, *, symmetric=None, radius=None) -> "GraphTrajectory":
        A = validate_weight_matrix(A)
        if symmetric is None:
            symmetric = bool(np.array_equal(A, A.T))
        A = validate_weight_matrix(A, symmetric=symmetric)
        A.setflags(write=False)
        return cls(A.shape[0], times=np.array([0.0]), matrices=(A,),
                   symmetric=symmetric, radius=radius)

    @classmethod
    def piecewise(cls, times, matrices, *, symmetric=None, radius=None) -> "GraphTrajectory":
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) != len(matrices) or len(times) == 0:
            raise InvalidInputError("need one change time per matrix")
        if times[0] != 0 or np.any(np.diff(times) <= 0):
            raise InvalidInputError("change times must start at 0 and increase strictly")
        mats = []
        for M in matrices:
            M = validate_weight_matrix(M).copy()
            M.setflags(write=False)
            mats.append(M)
        if symmetric is None:
            symmetric = all(np.array_equal(M, M.T) for M in mats)
        for M in mats:
            validate_weight_matrix(M, symmetric=symmetric)
        times.setflags(write=False)
        return cls(mats[0].shape[0], times=times, matrices=tuple(mats),
                   symmetric=symmetric, radius=radius)

    @classmethod
    def from_function(cls, func: Callable[[float], np.ndarray], step: float, *,
                      symmetric=False, radius=None) -> "GraphTrajectory":
        if not step > 0:
            raise InvalidInputError("sampling step must be positive")
        n = validate_weight_matrix(func(0.0), symmetric=symmetric).shape[0]
        return cls(n, func=func, step=float(step), symmetric=symmetric, radius=radius)

    @property
    def is_static(self) -> bool:
        return self._func is None and len(self._matrices) == 1

    def at(self, t: float) -> np.ndarray:
        if t < 0:
            raise InvalidInputError(f"graph trajectory is defined for t >= 0, got {t}")
        if self._func is not None:
            return validate_weight_matrix(self._func(float(t)), symmetric=self.symmetric)
        k = int(np.searchsorted(self._times, t, side="right")) - 1
        return self._matrices[k]

    def _held(self, t: float) -> np.ndarray:
        """Matrix the integrators use on the piece starting at ``t``."""
        if self._func is not None:
            t = np.floor(t / self._step + 1e-9) * self._step
        return self.at(t)

    def change_times(self, t0: float, t1: float) -> np.ndarray:
        """Instants in the open interval ``(t0, t1)`` where the held matrix may change."""
        if self._func is not None:
            k0 = np.floor(t0 / self._step + 1e-9) + 1
            k1 = np.ceil(t1 / self._step - 1e-9) - 1
            ks = np.arange(k0, k1 + 1)
            return ks * self._step
        ts = self._times
        return ts[(ts > t0) & (ts < t1)]

    def last_change(self) -> float:
        """Time after which the held matrix never changes (``inf`` for functions)."""
        if self._func is not None:
            return np.inf
        return float(self._times[-1])

    def segments(self, t0: float, t1: float) -> Iterator[tuple[float, float, np.ndarray]]:
        """Yield ``(start, end, A)`` constant pieces covering ``[t0, t1]``."""
        edges = [t0, *self.change_times(t0, t1), t1]
        for a, b in zip(edges[:-1], edges[1:]):
            yield float(a), float(b), self._held(a)


# --- mobility runs ------------------------------------------------------------


@dataclass
class MobilityRun:
    times: np.ndarray          # (steps + 1,)
    positions: np.ndarray      # (steps + 1, n, d)
    graph: GraphTrajectory
    quarantine: QuarantinePolicy | None = None


def _quarantine_model(model: MobilityModel, positions: np.ndarray,
                      policy: QuarantinePolicy):
    """Confine each group to its region; agents outside it are moved onto it."""
    v = np.array(model.velocity, dtype=float).reshape(positions.shape)
    if isinstance(model, ReflectingDrift):
        lo, hi = np.array(model.lower), np.array(model.upper)
    else:
        lo = np.full(positions.shape, -np.inf)
        hi = np.full(positions.shape, np.inf)
    for label, idx in policy.members().items():
        if label in policy.regions:
            rlo, rhi = (np.asarray(c, dtype=float) for c in policy.regions[label])
            lo[idx] = rlo
            hi[idx] = rhi
    z = np.clip(positions, lo, hi)
    center = np.where(np.isfinite(lo + hi), (lo + hi) / 2, 0.0)
    side = hi - lo
    return z, ReflectingDrift(v, center, side)


def simulate_mobility(positions0, model: MobilityModel, n_steps: int, dt: float, r: float,
                      quarantine: QuarantinePolicy | None = None) -> MobilityRun:
    """Step positions ``n_steps`` times and build the proximity-graph trajectory.

    ``A`` is re-weighted from the positions at the start of every step and
    held constant until the next one. When a quarantine is given, from its
    activation step on the groups are confined to their regions and all
    cross-group weights are cut.
    """
    z = _as_2d(positions0)
    n = z.shape[0]
    if quarantine is not None and len(quarantine.groups) != n:
        raise InvalidInputError("quarantine partition size does not match agent count")
    if isinstance(model, ReflectingDrift) and not model.contains(z):
        raise InvalidInputError("initial positions must lie inside the reflecting box")
    traj = [z.copy()]
    mats = []
    for k in range(n_steps + 1):
        if quarantine is not None and k == quarantine.activation_step:
            z, model = _quarantine_model(model, z, quarantine)
            traj[-1] = z.copy()
        A = proximity_weights(z, r)
        if quarantine is not None and k >= quarantine.activation_step:
            A = apply_quarantine(A, quarantine)
        mats.append(A)
        if k == n_steps:
            break
        z, model = step_mobility(z, model, dt)
        traj.append(z.copy())
    times = np.arange(n_steps + 1) * dt
    graph = GraphTrajectory.piecewise(times, mats, symmetric=True, radius=r)
    return MobilityRun(times, np.stack(traj), graph, quarantine)
