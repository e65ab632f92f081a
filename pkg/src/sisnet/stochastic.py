"""Monte-Carlo ensembles for the noisy mean-field models.

Two perturbations of ``dp = F(t, p) dt`` are supported:

* generic noise, ``dp = F dt + g(p) xi dt`` with ``xi`` redrawn i.i.d. each
  noise interval and ``g_i = k_i p_i^2``
* Itô noise, ``dp = F dt + g(p) dW`` with ``g_i = k_i p_i``

Each path draws from its own stream derived from ``(seed, path index)``, so
results never depend on how paths are batched or parallelised.

The drift increment over a step is one classical RK4 step of the
deterministic flow; the noise increment is the Euler-Maruyama one. With
zero gains this reduces to a fourth-order solve of the mean-field ODE.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .meanfield import VirusParams
from .netgraph import GraphTrajectory

_BLOCK = 512


@dataclass(frozen=True)
class GenericNoise:
    """Zero-mean i.i.d. forcing ``xi``, held constant over each ``dt_noise`` interval."""

    gains: np.ndarray
    distribution: str | Callable = "normal"
    dt_noise: float | None = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=float))
        if np.any(g < 0):
            raise InvalidInputError("noise gains must be nonnegative")
        object.__setattr__(self, "gains", g)
        if isinstance(self.distribution, str) and self.distribution not in _SAMPLERS:
            raise InvalidInputError(f"unknown noise distribution {self.distribution!r}")
        if self.dt_noise is not None and not self.dt_noise > 0:
            raise InvalidInputError("noise interval must be positive")

    def diffusion(self, p):
        return self.gains * p * p


@dataclass(frozen=True)
class ItoNoise:
    """Independent Wiener increment per agent scaled by ``k_i p_i``."""

    gains: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=float))
        if np.any(g < 0):
            raise InvalidInputError("noise gains must be nonnegative")
        object.__setattr__(self, "gains", g)

    def diffusion(self, p):
        return self.gains * p


# unit-variance, zero-mean laws
_SAMPLERS = {
    "normal": lambda rng, shape: rng.standard_normal(shape),
    "uniform": lambda rng, shape: rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape),
    "rademacher": lambda rng, shape: rng.choice([-1.0, 1.0], size=shape),
}


def _sampler(noise):
    if isinstance(noise, ItoNoise):
        return _SAMPLERS["normal"]
    dist = noise.distribution
    if callable(dist):
        probe = np.asarray(dist(np.random.default_rng(0), (20000,)), dtype=float)
        if abs(probe.mean()) > 5 * max(probe.std(), 1e-12) / np.sqrt(probe.size):
            raise InvalidInputError("generic noise distribution must have zero mean")
        return dist
    return _SAMPLERS[dist]


def path_rng(seed: int, path: int) -> np.random.Generator:
    """Stream for one path; depends only on ``(seed, path)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(path,))))


@dataclass
class EnsembleResult:
    t: np.ndarray                 # output times
    final: np.ndarray             # (paths, n) states at T
    mean_path: np.ndarray         # (len(t), n) ensemble mean
    norm_mean_path: np.ndarray    # (len(t),) mean of ||p||_2 over paths
    seeds: dict = field(default_factory=dict)
    dt: float = 0.0
    clamp_fraction: float = 0.0
    halvings: int = 0

    @property
    def paths(self) -> int:
        return self.final.shape[0]

    def convergence_fraction(self, threshold: float = 1e-3) -> float:
        return almost_sure_convergence_check(self, threshold)


def _drift(p, A, params):
    return (1.0 - p) * params.beta * (p @ A.T) - params.delta * p


def _rk4(p, A, params, dt):
    k1 = _drift(p, A, params)
    k2 = _drift(p + 0.5 * dt * k1, A, params)
    k3 = _drift(p + 0.5 * dt * k2, A, params)
    k4 = _drift(p + dt * k3, A, params)
    return p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _run(p0, traj: GraphTrajectory, params, noise, T, paths, seed, dt, n_out):
    n = traj.n
    n_steps = int(round(T / dt))
    if not np.isclose(n_steps * dt, T, rtol=1e-12, atol=1e-12):
        raise InvalidInputError("horizon must be a whole number of steps")
    ito = isinstance(noise, ItoNoise)
    if ito:
        hold = 1
    else:
        dt_noise = noise.dt_noise or dt
        hold = max(int(round(dt_noise / dt)), 1)
    sample = _sampler(noise)
    draws_needed = -(-n_steps // hold)
    rngs = [path_rng(seed, i) for i in range(paths)]
    out_steps = np.unique(np.linspace(0, n_steps, n_out).round().astype(int))
    mean_path = np.empty((out_steps.size, n))
    norm_path = np.empty(out_steps.size)
    p = np.broadcast_to(np.asarray(p0, dtype=float), (paths, n)).copy()
    gains_active = np.any(noise.gains > 0)
    clamp_steps = 0
    xi = None
    buf = None
    buf_pos = _BLOCK
    o = 0
    if out_steps[0] == 0:
        mean_path[0], norm_path[0] = p.mean(0), np.linalg.norm(p, axis=1).mean()
        o = 1
    for step in range(n_steps):
        t = step * dt
        A = traj._held(t)
        drifted = _rk4(p, A, params, dt)
        if gains_active:
            if step % hold == 0:
                if buf_pos == _BLOCK:
                    # draw a block per path so a path's stream never depends on batching
                    left = draws_needed - step // hold
                    size = min(_BLOCK, left)
                    buf = np.stack([np.asarray(sample(r, (size, n)), dtype=float) for r in rngs], 1)
                    buf_pos = 0
                xi = buf[buf_pos]
                buf_pos += 1
            scale = np.sqrt(dt) if ito else dt
            drifted = drifted + noise.diffusion(p) * xi * scale
        clamped = np.clip(drifted, 0.0, 1.0)
        if gains_active:
            clamp_steps += int(np.count_nonzero(np.any(clamped != drifted, axis=1)))
        p = clamped
        while o < out_steps.size and out_steps[o] == step + 1:
            mean_path[o], norm_path[o] = p.mean(0), np.linalg.norm(p, axis=1).mean()
            o += 1
    frac = clamp_steps / max(paths * n_steps, 1)
    return p, out_steps * dt, mean_path, norm_path, frac


def _simulate(p0, traj, params, noise, T, paths, seed, dt, n_out, max_halvings):
    if not isinstance(traj, GraphTrajectory):
        traj = GraphTrajectory.static(traj)
    if not dt > 0:
        raise InvalidInputError(f"time step must be positive, got {dt}")
    if paths < 1:
        raise InvalidInputError("need at least one path")
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (traj.n,) or np.any(p0 < 0) or np.any(p0 > 1):
        raise InvalidInputError("initial state must be a vector in [0, 1]^n")
    if noise.gains.size not in (1, traj.n):
        raise InvalidInputError("need one noise gain per agent")
    noise_gains = np.broadcast_to(noise.gains, (traj.n,))
    noise = type(noise)(**{**noise.__dict__, "gains": noise_gains})
    halvings = 0
    while True:
        final, t, mean_path, norm_path, frac = _run(
            p0, traj, params, noise, T, paths, seed, dt, n_out)
        # clamping is a discretisation artifact; refine when it is not rare
        if frac <= 0.01 or halvings >= max_halvings:
            break
        dt /= 2
        halvings += 1
    return EnsembleResult(t, final, mean_path, norm_path,
                          {"seed": seed, "paths": paths, "scheme": "SeedSequence(seed, spawn_key=(path,))"},
                          dt, frac, halvings)


def simulate_generic_noise(p0, traj, params: VirusParams, noise: GenericNoise, T, paths,
                           *, seed=0, dt=1e-2, n_out=101, max_halvings=4) -> EnsembleResult:
    """Ensemble of ``dp = F dt + k p^2 xi dt`` paths, clamped to ``[0, 1]^n``."""
    if not isinstance(noise, GenericNoise):
        raise InvalidInputError("expected a GenericNoise specification")
    return _simulate(p0, traj, params, noise, T, paths, seed, dt, n_out, max_halvings)


def simulate_ito(p0, traj, params: VirusParams, noise: ItoNoise, T, paths,
                 *, seed=0, dt=1e-2, n_out=101, max_halvings=4) -> EnsembleResult:
    """Ensemble of ``dp = F dt + k p dW`` paths, clamped to ``[0, 1]^n``."""
    if not isinstance(noise, ItoNoise):
        raise InvalidInputError("expected an ItoNoise specification")
    return _simulate(p0, traj, params, noise, T, paths, seed, dt, n_out, max_halvings)


def almost_sure_convergence_check(result: EnsembleResult, threshold: float = 1e-3) -> float:
    """Fraction of paths whose final state has ``max_i p_i < threshold``."""
    final = np.asarray(result.final)
    if final.size == 0 or final.shape[0] == 0:
        raise InvalidInputError("ensemble is empty")
    return float(np.mean(np.max(np.abs(final), axis=1) < threshold))
