"""Explicit Dormand-Prince 5(4) integrator with projection and early stop.

Small and purpose-built: the callers need to clamp the state after each
accepted step and to stop once the vector field has gone flat, neither of
which ``scipy.integrate.solve_ivp`` lets us do.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_LOW

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass
class SegmentResult:
    y: np.ndarray          # samples, shape (len(sample_times), dim)
    y_end: np.ndarray
    t_end: float           # time actually integrated to (< t1 if stopped early)
    stopped: bool
    h: float               # last accepted step size, reusable as next guess
    n_steps: int


def _initial_step(f, t0, y0, f0, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate_segment(f, t0, t1, y0, sample_times, *, rtol=1e-8, atol=1e-10,
                      h0=None, project=None, derivative_tol=None, h_min=1e-14):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1``.

    ``sample_times`` must be sorted and lie in ``[t0, t1]``; steps are
    shortened to land on them exactly. ``project`` is applied to every
    accepted state. When ``derivative_tol`` is given, integration stops as
    soon as ``max|f(t, y)| < derivative_tol`` and the state is held for the
    remaining samples.
    """
    y = np.array(y0, dtype=float)
    if project is not None:
        y = project(y)
    sample_times = np.asarray(sample_times, dtype=float)
    out = np.empty((len(sample_times), y.size))
    k = 0
    t = float(t0)
    while k < len(sample_times) and sample_times[k] <= t:
        out[k] = y
        k += 1

    fy = f(t, y)
    if derivative_tol is not None and np.max(np.abs(fy), initial=0.0) < derivative_tol:
        out[k:] = y
        return SegmentResult(out, y, t, True, h0 or 0.0, 0)

    span = t1 - t
    if span <= 0:
        out[k:] = y
        return SegmentResult(out, y, t, False, h0 or 0.0, 0)
    h = h0 if h0 else _initial_step(f, t, y, fy, rtol, atol)
    h = min(h, span)
    stages = np.empty((7, y.size))
    n_steps = 0
    stopped = False
    while t < t1:
        target = sample_times[k] if k < len(sample_times) else t1
        if t + h >= target:
            h_try = target - t
            landing = True
        else:
            h_try = h
            landing = False
        if h_try < h_min * max(1.0, abs(t)):
            raise NumericalFailure("step size underflow", t=t, h=h_try)
        stages[0] = fy
        for i in range(1, 7):
            yi = y + h_try * (np.asarray(_A[i]) @ stages[:i])
            stages[i] = f(t + _C[i] * h_try, yi)
        # stage 6 is evaluated at the propagated solution (FSAL)
        y_new = y + h_try * (_B @ stages)
        err_vec = h_try * (_E @ stages)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if not np.isfinite(err):
            raise NumericalFailure("non-finite error estimate", t=t, h=h_try)
        if err <= 1.0:
            t = target if landing else t + h_try
            if project is not None:
                projected = project(y_new)
                changed = projected is not y_new and not np.array_equal(projected, y_new)
                y = projected
                fy = f(t, y) if changed else stages[6]
            else:
                y = y_new
                fy = stages[6]
            n_steps += 1
            factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            # a shortened landing step says nothing about the regular step size
            if not (landing and h_try < h):
                h = h_try * max(_MIN_FACTOR, factor)
            while k < len(sample_times) and sample_times[k] <= t:
                out[k] = y
                k += 1
            if derivative_tol is not None and np.max(np.abs(fy)) < derivative_tol:
                out[k:] = y
                stopped = True
                break
        else:
            h = h_try * max(_MIN_FACTOR, _SAFETY * err ** -0.2)
    return SegmentResult(out, y, t, stopped, h, n_steps)
