"""Adaptive Dormand-Prince 5(4) integrator for complex state vectors.

The scheme is the classical embedded pair with FSAL and a PI step-size
controller. It is kept local (rather than ``scipy.integrate.solve_ivp``)
because the callers need three things scipy does not provide together:
native complex arithmetic in the error norm, an observer hook on every
accepted step, and a blow-up guard whose crossing is refined by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import StiffnessError

# Butcher tableau
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
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_E = _B - _B_LOW

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA


class GuardTripped(Exception):
    """Raised internally when the blow-up guard fires.

    ``t`` is the refined crossing parameter, ``t_safe``/``y_safe`` the last
    point known to be below the threshold.
    """

    def __init__(self, t: float, t_safe: float, y_safe: np.ndarray):
        super().__init__(t)
        self.t = t
        self.t_safe = t_safe
        self.y_safe = y_safe


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0

    def merge(self, other: "IntegrationStats") -> None:
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.evaluations += other.evaluations


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2))) if err.size else 0.0


def _step(f, t, y, h, k0):
    ks = [k0]
    for i in range(1, 7):
        dy = sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(t + _C[i] * h, y + h * dy))
    y_new = y + h * sum(b * k for b, k in zip(_B[:6], ks[:6]))
    err = h * sum(e * k for e, k in zip(_E, ks))
    return y_new, err, ks[-1]


def _initial_step(f, t0, y0, f0, direction, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def dopri5(f: Callable[[float, np.ndarray], np.ndarray], t0: float, t1: float,
           y0: np.ndarray, *, rtol: float = 1e-10, atol: float = 1e-12,
           max_step: float = np.inf, h0: float | None = None,
           guard: Callable[[np.ndarray], bool] | None = None,
           observer: Callable[[float, np.ndarray], None] | None = None,
           max_steps: int = 200_000, guard_rtol: float = 1e-6
           ) -> tuple[np.ndarray, IntegrationStats]:
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1`` (real ``t``).

    Parameters
    ----------
    f : callable
        Right-hand side returning an array shaped like ``y``.
    guard : callable, optional
        Returns True when ``y`` is considered blown up. When it fires on an
        accepted step the crossing is bisected to ``guard_rtol`` relative
        precision and :class:`GuardTripped` is raised.
    observer : callable, optional
        Called as ``observer(t, y)`` after each accepted step.

    Returns
    -------
    y1 : ndarray
        State at ``t1``.
    stats : IntegrationStats
    """
    y = np.array(y0, dtype=complex)
    stats = IntegrationStats()
    span = abs(t1 - t0)
    if span == 0:
        return y, stats
    direction = 1.0 if t1 > t0 else -1.0

    def fe(t, yy):
        stats.evaluations += 1
        return f(t, yy)

    t = t0
    k = fe(t, y)
    if h0 is None:
        h = _initial_step(fe, t0, y, k, direction, rtol, atol, span)
    else:
        h = min(abs(h0), span)
    h = min(h, max_step)
    err_prev = 1e-4
    reject_last = False
    while direction * (t1 - t) > 0:
        if stats.accepted + stats.rejected >= max_steps:
            raise StiffnessError(f"step budget of {max_steps} exhausted", t)
        h = min(h, max_step, abs(t1 - t))
        if h <= 10 * np.spacing(max(abs(t), 1.0)):
            raise StiffnessError("step size underflow", t)
        hs = direction * h
        y_new, err_vec, k_new = _step(fe, t, y, hs, k)
        err = _error_norm(err_vec, y, y_new, rtol, atol)
        if not np.isfinite(err):
            stats.rejected += 1
            h *= _MIN_FACTOR
            reject_last = True
            continue
        if err <= 1.0:
            t_new = t1 if abs(t1 - (t + hs)) <= 1e-15 * max(1.0, abs(t1)) else t + hs
            if guard is not None and guard(y_new):
                t_star = _bisect_guard(f, guard, t, y, k, hs, guard_rtol)
                raise GuardTripped(t_star, t, y.copy())
            stats.accepted += 1
            if err == 0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            if reject_last:
                factor = min(1.0, factor)
            t, y, k = t_new, y_new, k_new
            err_prev = max(err, 1e-4)
            reject_last = False
            h *= factor
            if observer is not None:
                observer(t, y)
        else:
            stats.rejected += 1
            factor = max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))
            h *= factor
            reject_last = True
    return y, stats


def _bisect_guard(f, guard, t, y, k, hs, rtol):
    """Locate where the guard first fires within the step ``[t, t + hs]``.

    Each probe is a single Runge-Kutta step from the last accepted point,
    which is accurate because the probes are no longer than an accepted step.
    """
    lo, hi = 0.0, 1.0
    while (hi - lo) * abs(hs) > rtol * max(abs(t), abs(hs), 1e-300):
        mid = 0.5 * (lo + hi)
        y_mid, _, _ = _step(f, t, y, mid * hs, k)
        if guard(y_mid) or not np.all(np.isfinite(y_mid)):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return t + hi * hs
