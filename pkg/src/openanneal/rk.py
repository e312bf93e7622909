"""Compact Dormand-Prince 5(4) stepper with dense output.

Tailored to the trajectory engine: complex state vectors, a hard step-size
cap (the adiabatic time-step bound), and location of the decaying-norm
crossing ||y||^2 = r by bisection on the dense interpolant. Lighter per
step than the general-purpose scipy driver, which dominates runtime for
the small systems simulated here.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

# Dormand-Prince RK45 tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([], dtype=float),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
               22 / 525, -1 / 40])
# dense-output polynomial (same quartic interpolant scipy's RK45 uses)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class StepFailure(RuntimeError):
    """Step size underflow; carries the last good time."""

    def __init__(self, t, message):
        super().__init__(message)
        self.t = t


class DenseSteps:
    """Stored dense output of one integrated stretch."""

    def __init__(self, dim):
        self.t0s = []
        self.hs = []
        self.y0s = []
        self.qs = []
        self.dim = dim

    def append(self, t0, h, y0, q):
        self.t0s.append(t0)
        self.hs.append(h)
        self.y0s.append(y0)
        self.qs.append(q)

    def __call__(self, t):
        if not self.t0s:
            raise ValueError("no steps recorded")
        i = int(np.searchsorted(self.t0s, t, side="right") - 1)
        i = min(max(i, 0), len(self.t0s) - 1)
        return _interpolate(self.t0s[i], self.hs[i], self.y0s[i], self.qs[i], t)


def _interpolate(t0, h, y0, q, t):
    x = (t - t0) / h
    pvec = np.array([x, x * x, x ** 3, x ** 4])
    return y0 + h * (q @ pvec)


def integrate_norm_event(fun: Callable, t0: float, t1: float, y0: np.ndarray,
                         *, r: Optional[float] = None, rtol: float = 1e-8,
                         atol: float = 1e-10, max_step: float = np.inf,
                         time_tol: float = 1e-4):
    """Integrate y' = fun(t, y) from t0 to t1 with dense output.

    If `r` is given, stop at the first time where ||y||^2 <= r (the squared
    norm is assumed non-increasing); the crossing is located by bisection on
    the dense interpolant to relative time tolerance `time_tol`.

    Returns (t_end, y_end, dense, hit) where hit says the threshold fired.
    """
    t = float(t0)
    y = np.array(y0, dtype=complex)
    dense = DenseSteps(y.size)
    if t1 <= t0:
        return t, y, dense, False
    k = np.empty((7, y.size), dtype=complex)
    k[0] = fun(t, y)
    h = min(max_step, t1 - t0)
    min_h = 1e-14 * max(abs(t1), 1.0)
    while t < t1 - 1e-14 * max(abs(t1), 1.0):
        h = min(h, t1 - t, max_step)
        if h < min_h:
            raise StepFailure(t, f"step size underflow at t={t:.6g}")
        # stages
        for i in range(1, 7):
            yi = y + h * (_A[i] @ k[:i])
            k[i] = fun(t + _C[i] * h, yi)
        y_new = y + h * (_B @ k)
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((np.abs(err_vec) / scale) ** 2)))
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        q = k.T @ _P
        dense.append(t, h, y.copy(), q)
        t_new = t + h
        if r is not None and float(np.real(np.vdot(y_new, y_new))) <= r:
            lo, hi = 0.0, 1.0
            tol = time_tol * max(abs(t_new), h)
            while (hi - lo) * h > tol:
                mid = 0.5 * (lo + hi)
                ym = _interpolate(t, h, y, q, t + mid * h)
                if float(np.real(np.vdot(ym, ym))) <= r:
                    hi = mid
                else:
                    lo = mid
            t_hit = t + hi * h
            y_hit = _interpolate(t, h, y, q, t_hit)
            return t_hit, y_hit, dense, True
        y = y_new
        k[0] = k[6]  # FSAL
        t = t_new
        if err > 0:
            h = min(h * min(5.0, 0.9 * err ** -0.2), max_step)
        else:
            h = min(h * 5.0, max_step)
    return t, y, dense, False
