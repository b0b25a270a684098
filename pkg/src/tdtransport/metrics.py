"""Figures of merit: current, spread of occupations, non-Markovianity, CP checks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate, optimize

from .chain import ChainSpec
from .rates import RateModel

CP_TOLERANCE = -1e-10
POINTS_PER_PERIOD = 200

RateLike = Union[RateModel, Callable[[np.ndarray], np.ndarray]]

# 5-point Gauss-Legendre nodes and weights on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_X, _GL_W = (_GL_X + 1) / 2, _GL_W / 2


@dataclass(frozen=True)
class ObservableSet:
    populations: np.ndarray
    current: float
    rescaled_current: float
    spread: float


@dataclass(frozen=True)
class CPReport:
    valid: bool
    first_violation: float | None
    min_integral: float
    horizon: float


@dataclass(frozen=True)
class NonMarkovReport:
    t: np.ndarray
    indicator: np.ndarray
    quantifier: float
    is_markovian: bool
    cp: CPReport


def _rate_fn(model: RateLike):
    return model.rate if isinstance(model, RateModel) else model


def current(populations, spec: ChainSpec) -> tuple[float, float]:
    """Extraction current kappa_ext * n_k and its rescaled form n_k / N."""
    n_k = float(np.asarray(populations)[spec.extraction_site - 1])
    return spec.kappa_ext * n_k, n_k / spec.n_sites


def spread(populations, extraction_site: int) -> float:
    """1 - (mean population - extraction-site population)**2."""
    n = np.asarray(populations, dtype=float)
    return float(1.0 - (n.mean() - n[extraction_site - 1]) ** 2)


def observables(populations, spec: ChainSpec) -> ObservableSet:
    J, Jt = current(populations, spec)
    return ObservableSet(np.asarray(populations, dtype=float), J, Jt,
                         spread(populations, spec.extraction_site))


def nm_indicator(model: RateLike, t):
    """max(0, -gamma(t))."""
    f = np.maximum(0.0, -np.asarray(_rate_fn(model)(t), dtype=float))
    return float(f) if f.ndim == 0 else f


def _grid(model: RateLike, a: float, b: float, points_per_period: int):
    freq = model.max_frequency if isinstance(model, RateModel) else 0.0
    if freq > 0:
        n = int(math.ceil((b - a) * freq / (2 * math.pi) * points_per_period))
    else:
        n = points_per_period
    return np.linspace(a, b, max(n, 2) + 1)


def nm_quantifier(model: RateLike, t: float, t_prime: float,
                  points_per_period: int = POINTS_PER_PERIOD, rtol: float = 1e-10) -> float:
    """Integral of the non-Markovianity indicator over ``[t, t_prime]``.

    Sign changes of the rate are bracketed on a dense grid and located by
    root finding; each negative stretch is then integrated with adaptive
    quadrature, so the integrand is smooth on every piece.
    """
    if t_prime <= t:
        raise ValueError("need t_prime > t")
    rate = _rate_fn(model)
    grid = _grid(model, t, t_prime, points_per_period)
    vals = np.asarray(rate(grid), dtype=float)
    cuts = [t]
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        cuts.append(optimize.brentq(lambda s: float(rate(s)), grid[i], grid[i + 1],
                                    xtol=1e-15, rtol=4 * np.finfo(float).eps))
    cuts.append(t_prime)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        mid = float(rate(0.5 * (a + b)))
        if mid < 0:
            val, err = integrate.quad(lambda s: -float(rate(s)), a, b,
                                      epsabs=0.0, epsrel=rtol, limit=200)
            if err > max(1e-8 * abs(val), 1e-14):
                raise RuntimeError(f"quadrature did not converge on [{a}, {b}]")
            total += max(val, 0.0)
    return total


def running_integral(model: RateLike, horizon: float,
                     points_per_period: int = POINTS_PER_PERIOD, exact: bool = True):
    """Grid and cumulative integral of the rate from 0.

    Built-in models integrate in closed form; other callables (or
    ``exact=False``) use 5-point Gauss-Legendre on every grid cell.
    """
    grid = _grid(model, 0.0, horizon, points_per_period)
    if exact and isinstance(model, RateModel):
        try:
            return grid, np.asarray(model.integral(grid), dtype=float)
        except NotImplementedError:
            pass
    rate = _rate_fn(model)
    h = np.diff(grid)
    nodes = grid[:-1, None] + h[:, None] * _GL_X[None, :]
    cells = (np.asarray(rate(nodes), dtype=float) * _GL_W).sum(axis=1) * h
    return grid, np.concatenate([[0.0], np.cumsum(cells)])


def cp_check_single_channel(model: RateLike, horizon: float,
                            points_per_period: int = POINTS_PER_PERIOD,
                            tol: float = CP_TOLERANCE) -> CPReport:
    """Complete positivity of pure dephasing: running integral of the rate >= 0."""
    grid, cum = running_integral(model, horizon, points_per_period)
    bad = np.flatnonzero(cum[1:] < tol)
    first = float(grid[1:][bad[0]]) if bad.size else None
    return CPReport(first is None, first, float(cum.min()), horizon)


def cp_check_pauli_channels(gamma1: RateLike, gamma2: RateLike, gamma3: RateLike,
                            t: float, tol: float = 1e-10) -> bool:
    """Complete positivity of a qubit Pauli-channel master equation up to ``t``.

    With ``I_k`` the integral of channel k from 0 to t and
    ``G_j = exp(-(I_k + I_l))``, every permutation must satisfy
    ``G_j + G_k <= 1 + G_l``. Slack ``2 * tol`` keeps the two-zero-channel
    case consistent with :func:`cp_check_single_channel`.
    """
    if t == 0:
        return True
    ints = [_integral(g, t) for g in (gamma1, gamma2, gamma3)]
    G = [math.exp(-(ints[k] + ints[l])) for k, l in ((1, 2), (0, 2), (0, 1))]
    return all(G[j] + G[k] <= 1.0 + G[l] + 2 * tol
               for j, k, l in itertools.permutations(range(3)))


def _integral(model: RateLike, t: float) -> float:
    if isinstance(model, RateModel):
        try:
            return float(model.integral(t))
        except NotImplementedError:
            pass
    fn = _rate_fn(model)
    val, err = integrate.quad(lambda s: float(fn(s)), 0.0, t, limit=500,
                              epsabs=1e-13, epsrel=1e-12)
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise RuntimeError(f"quadrature failure on [0, {t}]")
    return val


def non_markov_report(model: RateModel, horizon: float,
                      points_per_period: int = POINTS_PER_PERIOD) -> NonMarkovReport:
    grid = _grid(model, 0.0, horizon, points_per_period)
    f = np.asarray(nm_indicator(model, grid))
    F = nm_quantifier(model, 0.0, horizon, points_per_period)
    return NonMarkovReport(grid, f, F, F == 0.0,
                           cp_check_single_channel(model, horizon, points_per_period))


def markovian_crossover(model: RateModel, n_grid: int = 4000) -> float:
    """Smallest constant offset making the rate non-negative: -min_t gamma(t).

    Evaluated on one period with a dense scan refined by bounded minimization.
    """
    T = model.period
    if T is None:
        return max(0.0, -float(model.rate(0.0)))
    t = np.linspace(0.0, T, n_grid, endpoint=False)
    vals = np.asarray(model.rate(t), dtype=float)
    i = int(np.argmin(vals))
    dt = T / n_grid
    res = optimize.minimize_scalar(lambda s: float(model.rate(s)),
                                   bounds=(max(t[i] - dt, 0.0), t[i] + dt),
                                   method="bounded", options={"xatol": 1e-12})
    return -min(float(res.fun), float(vals[i]))
