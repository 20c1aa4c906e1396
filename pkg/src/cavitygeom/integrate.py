"""Batched explicit Runge-Kutta integrators for complex ODE systems.

Every row of the state array is an independent system with its own time and
step size, so the result for a row does not depend on which other rows share
the batch.
"""

from __future__ import annotations

import numpy as np

# Dormand-Prince 5(4) tableau
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
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class IntegrationError(RuntimeError):
    """Step-size control failed or an invariant drifted past tolerance."""

    def __init__(self, message, drift=None, index=None):
        super().__init__(message)
        self.drift = drift
        self.index = index


def _bcast(v, y):
    return v.reshape((-1,) + (1,) * (y.ndim - 1))


def dopri5(f, t0, t1, y0, rtol=1e-9, atol=1e-12, max_step=np.inf, first_step=None, max_steps=200000):
    """Integrate dy/dt = f(t, y) from t0 to t1 for every row of ``y0``.

    ``f`` receives a vector of per-row times and the (rows, ...) state and must
    act row by row, without knowing which rows it was handed. Integrates
    forward only (t1 >= t0). Returns the state at t1 and the number of
    accepted steps per row.
    """
    y = np.array(y0, dtype=complex, copy=True)
    N = y.shape[0]
    span = t1 - t0
    if span < 0:
        raise ValueError("dopri5 integrates forward only")
    if span == 0 or N == 0:
        return y, np.zeros(N, dtype=int)
    t = np.full(N, float(t0))
    k1 = f(t, y)
    axes = tuple(range(1, y.ndim))
    if first_step is None:
        sc = atol + rtol * np.abs(y)
        d0 = np.sqrt(np.mean(np.abs(y / sc) ** 2, axis=axes))
        d1 = np.sqrt(np.mean(np.abs(k1 / sc) ** 2, axis=axes))
        h = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6 * span, 0.01 * d0 / np.maximum(d1, 1e-300))
        h = np.minimum(h, span)
    else:
        h = np.full(N, float(first_step))
    h = np.minimum(h, max_step)
    steps = np.zeros(N, dtype=int)
    active = np.arange(N)
    it = 0
    while active.size:
        it += 1
        if it > max_steps:
            raise IntegrationError(f"step limit exceeded with {active.size} rows unfinished", index=int(active[0]))
        ta, ya, ka = t[active], y[active], k1[active]
        remaining = t1 - ta
        hh = np.minimum(np.minimum(h[active], remaining), max_step)
        last = (remaining - hh) <= 1e-10 * span
        hh = np.where(last, remaining, hh)
        hb = _bcast(hh, ya)
        ks = [ka]
        for i in range(1, 7):
            acc = sum(a * kk for a, kk in zip(_A[i], ks) if a != 0.0)
            ks.append(f(ta + _C[i] * hh, ya + hb * acc))
        ynew = ya + hb * sum(b * kk for b, kk in zip(_B, ks) if b != 0.0)
        err = hb * sum(e * kk for e, kk in zip(_E, ks) if e != 0.0)
        sc = atol + rtol * np.maximum(np.abs(ya), np.abs(ynew))
        en = np.sqrt(np.mean(np.abs(err / sc) ** 2, axis=axes))
        ok = en <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(en == 0, 5.0, np.clip(0.9 * en ** -0.2, 0.2, 5.0))
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        h[active] = hh * fac
        if np.any(hh < 1e-14 * max(abs(t1), abs(span))):
            bad = active[np.argmin(hh)]
            raise IntegrationError("step size underflow", index=int(bad))
        acc_rows = active[ok]
        t[acc_rows] = np.where(last[ok], t1, ta[ok] + hh[ok])
        y[acc_rows] = ynew[ok]
        k1[acc_rows] = ks[6][ok]
        steps[acc_rows] += 1
        active = active[t[active] < t1]
    return y, steps


def rk4(f, t0, t1, y0, n_steps):
    """Classical fixed-step Runge-Kutta with ``n_steps`` equal steps."""
    y = np.array(y0, dtype=complex, copy=True)
    if t1 <= t0:
        return y
    h = (t1 - t0) / n_steps
    N = y.shape[0]
    for i in range(n_steps):
        t = np.full(N, t0 + i * h)
        a = f(t, y)
        b = f(t + h / 2, y + h / 2 * a)
        c = f(t + h / 2, y + h / 2 * b)
        d = f(t + h, y + h * c)
        y = y + h / 6 * (a + 2 * b + 2 * c + d)
    return y
