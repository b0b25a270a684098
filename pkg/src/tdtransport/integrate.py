"""Dormand-Prince 5(4) Runge-Kutta integration of ``dy/dt = f(t, y)``.

Two drivers share one tableau:

* :func:`integrate_adaptive` - embedded error control, optional per-step
  hook (used to re-symmetrize density matrices) and samples on a requested
  time grid through the 4th-order continuous extension.
* :func:`integrate_fixed` - equal steps, no error control. With a linear
  ``f`` the result is an exactly linear function of ``y0``, which the
  shooting solver relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between 5th-order and embedded 4th-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension, y(t + s h) = y + h * sum_j k_j * (P[j] @ [s, s^2, s^3, s^4])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])
ORDER = 5


class StepSizeUnderflow(RuntimeError):
    """The controller asked for a step below the allowed minimum."""


@dataclass
class AdaptiveResult:
    t: np.ndarray
    y: np.ndarray  # samples, shape (len(t), *y0.shape)
    y_final: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    h_last: float = 0.0
    step_sizes: list = field(default_factory=list)


def _stages(f, t, y, h, k1, n_stages=7):
    ks = [k1]
    for s in range(1, n_stages):
        a = _A[s]
        incr = a[0] * ks[0]
        for j in range(1, s):
            if a[j] != 0.0:
                incr = incr + a[j] * ks[j]
        ks.append(f(t + _C[s] * h, y + h * incr))
    return ks


def _combine(ks, w):
    out = w[0] * ks[0]
    for j in range(1, len(ks)):
        if w[j] != 0.0:
            out = out + w[j] * ks[j]
    return out


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, direction=1.0):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = f(t0 + direction * h0, y0 + direction * h0 * f0)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / ORDER)
    return min(100 * h0, h1)


def integrate_adaptive(f, t0, t1, y0, *, rtol=1e-8, atol=1e-10, h0=None,
                       max_step=np.inf, min_step=1e-12, t_eval=None,
                       on_step=None) -> AdaptiveResult:
    """Integrate from ``t0`` to ``t1 > t0`` with step-size control.

    ``on_step(t, y)`` is called after every accepted step and may return a
    replacement for ``y`` (it must stay within the local error tolerance).
    ``t_eval`` samples are produced with the continuous extension.
    """
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    t = float(t0)
    t_eval = np.asarray([] if t_eval is None else t_eval, dtype=float)
    samples = np.empty((len(t_eval),) + y.shape, dtype=y.dtype)
    i_eval = 0
    while i_eval < len(t_eval) and t_eval[i_eval] <= t:
        samples[i_eval] = y
        i_eval += 1

    k1 = f(t, y)
    n_rhs = 1
    if h0 is None:
        h = _initial_step(f, t, y, k1, rtol, atol)
        n_rhs += 1
    else:
        h = h0
    h = min(h, max_step)
    res = AdaptiveResult(t_eval, samples, y)
    safety, fac_min, fac_max = 0.9, 0.2, 10.0

    while t < t1:
        if t1 - t <= h * (1 + 1e-12):
            h = t1 - t
        if h < min_step and t1 - t > min_step:
            raise StepSizeUnderflow(f"step size {h:.3e} below {min_step:.1e} at t={t:.6g}")
        ks = _stages(f, t, y, h, k1)
        y_new = y + h * _combine(ks, _B)
        err = _error_norm(h * _combine(ks, _E), y, y_new, rtol, atol)
        n_rhs += 6
        if err <= 1.0:
            t_new = t + h
            while i_eval < len(t_eval) and t_eval[i_eval] <= t_new:
                s = (t_eval[i_eval] - t) / h
                q = _P @ np.array([s, s * s, s ** 3, s ** 4])
                samples[i_eval] = y + h * _combine(ks, q)
                i_eval += 1
            k1 = ks[6].copy()
            if on_step is not None:
                replaced = on_step(t_new, y_new)
                if replaced is not None:
                    y_new = replaced
                    k1 = f(t_new, y_new)
                    n_rhs += 1
            t, y = t_new, y_new
            res.n_steps += 1
            res.step_sizes.append(h)
            fac = fac_max if err == 0 else min(fac_max, safety * err ** (-1 / ORDER))
            h = min(h * fac, max_step)
        else:
            res.n_rejected += 1
            h *= max(fac_min, safety * err ** (-1 / ORDER))

    res.y_final = y
    res.n_rhs = n_rhs
    res.h_last = res.step_sizes[-1] if res.step_sizes else h
    return res


def integrate_fixed(f, t0, t1, y0, n_steps: int):
    """Propagate with ``n_steps`` equal Dormand-Prince steps (5th-order solution)."""
    h = (t1 - t0) / n_steps
    y = np.asarray(y0)
    t = t0
    for i in range(n_steps):
        ks = _stages(f, t, y, h, f(t, y), 6)
        y = y + h * _combine(ks, _B[:6])
        t = t0 + (i + 1) * h
    return y
