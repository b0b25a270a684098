"""Time-dependent dephasing rate models.

Every model maps a time ``t`` (units of 1/omega) to a signed rate; negative
values mark non-Markovian instants. ``rate`` and ``shift`` accept scalars or
numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np


class SingularRateError(ArithmeticError):
    """The NMR rate or shift denominator vanishes."""


class RateModel:
    """Base class; subclasses are frozen dataclasses."""

    name = "rate"

    def rate(self, t):
        raise NotImplementedError

    def shift(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def integral(self, t):
        """Closed-form running integral of the rate from 0 to ``t``."""
        raise NotImplementedError

    @property
    def has_shift(self) -> bool:
        return False

    @property
    def period(self) -> float | None:
        """Fundamental period, or None for time-independent models."""
        return None

    @property
    def max_frequency(self) -> float:
        """Largest angular frequency present in the rate (0 if constant)."""
        return 0.0

    def params(self) -> dict:
        raise NotImplementedError

    def with_param(self, name: str, value: float) -> "RateModel":
        """Copy of the model with one scalar parameter replaced."""
        p = self.params()
        if name not in p or isinstance(p[name], (list, tuple)):
            raise KeyError(f"{type(self).__name__} has no scalar parameter {name!r}")
        p[name] = value
        return type(self)(**p)

    def mean_rate(self) -> float:
        """Average of the rate over one period (the rate itself if constant)."""
        return float(_period_mean(self.rate, self.period, 0.0))

    def mean_shift(self) -> float:
        return float(_period_mean(self.shift, self.period, 0.0))

    def to_dict(self) -> dict:
        return {"kind": self.name, **self.params()}


def _period_mean(func, period, t0):
    if period is None:
        return float(np.asarray(func(t0)))
    # periodic trapezoid rule converges spectrally for smooth periodic functions
    t = t0 + period * np.arange(4096) / 4096
    return float(np.mean(func(t)))


@dataclass(frozen=True)
class Constant(RateModel):
    gamma: float
    name = "constant"

    def rate(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.gamma)

    def integral(self, t):
        return self.gamma * np.asarray(t, dtype=float)

    def params(self):
        return {"gamma": self.gamma}


@dataclass(frozen=True)
class Sine(RateModel):
    """gamma(t) = gamma * sin(nu t)."""

    gamma: float
    nu: float
    name = "sine"

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")

    def rate(self, t):
        return self.gamma * np.sin(self.nu * np.asarray(t, dtype=float))

    def integral(self, t):
        return self.gamma * _one_minus_cos(self.nu, t)

    @property
    def period(self):
        return 2 * math.pi / self.nu

    @property
    def max_frequency(self):
        return self.nu

    def params(self):
        return {"gamma": self.gamma, "nu": self.nu}


@dataclass(frozen=True)
class OffsetSine(RateModel):
    """gamma(t) = gamma + gamma0 * sin(nu t)."""

    gamma: float
    gamma0: float = 1.0
    nu: float = 1.0
    name = "offset_sine"

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")

    def rate(self, t):
        return self.gamma + self.gamma0 * np.sin(self.nu * np.asarray(t, dtype=float))

    def integral(self, t):
        return self.gamma * np.asarray(t, dtype=float) + self.gamma0 * _one_minus_cos(self.nu, t)

    @property
    def period(self):
        return 2 * math.pi / self.nu

    @property
    def max_frequency(self):
        return self.nu

    def params(self):
        return {"gamma": self.gamma, "gamma0": self.gamma0, "nu": self.nu}


def _one_minus_cos(nu, t):
    # (1 - cos(nu t)) / nu, written with sin^2 to avoid cancellation at small t
    return 2.0 * np.sin(0.5 * nu * np.asarray(t, dtype=float)) ** 2 / nu


def _common_period(nus: Sequence[float]) -> float:
    # nus are treated as rationals; the fundamental frequency is their gcd
    fr = [Fraction(nu).limit_denominator(10_000) for nu in nus]
    num = reduce(math.gcd, (f.numerator for f in fr))
    den = reduce(lambda x, y: x * y // math.gcd(x, y), (f.denominator for f in fr))
    return 2 * math.pi * den / num


@dataclass(frozen=True)
class SineSum(RateModel):
    """gamma(t) = (gamma / m) * sum_j sin(nu_j t), the average of m sines."""

    gamma: float
    nus: tuple[float, ...]
    name = "sine_sum"

    def __post_init__(self):
        object.__setattr__(self, "nus", tuple(float(n) for n in self.nus))
        if not self.nus or min(self.nus) <= 0:
            raise ValueError("nus must be a non-empty list of positive frequencies")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        total = sum(np.sin(nu * t) for nu in self.nus)
        return self.gamma * total / len(self.nus)

    def integral(self, t):
        return self.gamma * sum(_one_minus_cos(nu, t) for nu in self.nus) / len(self.nus)

    @property
    def period(self):
        return _common_period(self.nus)

    @property
    def max_frequency(self):
        return max(self.nus)

    def params(self):
        return {"gamma": self.gamma, "nus": list(self.nus)}


@dataclass(frozen=True)
class Nmr(RateModel):
    """Rate and energy shift induced by an Ising-coupled ancilla spin.

    ``J`` is the coupling and ``theta`` fixes the ancilla's initial state. The
    common denominator is ``4 * (1 - sin^2(2 theta) sin^2(pi J t))``, which
    vanishes only for ``theta = pi/4``; that value is rejected.
    """

    gamma: float
    J: float = 1.0
    theta: float = 0.0
    name = "nmr"

    def __post_init__(self):
        if self.J <= 0:
            raise ValueError("J must be positive")
        if not 0.0 <= self.theta <= math.pi / 2:
            raise ValueError("theta must lie in [0, pi/2]")
        if self.theta == math.pi / 4:
            raise SingularRateError("theta = pi/4 makes the rate diverge")

    def _denominator(self, t):
        t = np.asarray(t, dtype=float)
        th, x = self.theta, math.pi * self.J * t
        den = 3.0 + 2.0 * math.cos(4 * th) * np.sin(x) ** 2 + np.cos(2 * x)
        if np.any(np.abs(den) < 1e-14):
            raise SingularRateError(f"vanishing denominator for theta={th}")
        return den

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        osc = (math.pi * self.J * math.sin(2 * self.theta) ** 2
               * np.sin(2 * math.pi * self.J * t))
        return self.gamma + osc / self._denominator(t)

    def integral(self, t):
        # the oscillatory part integrates to -log(den / 4) / 4
        t = np.asarray(t, dtype=float)
        a = math.sin(2 * self.theta) ** 2
        return self.gamma * t - 0.25 * np.log1p(-a * np.sin(math.pi * self.J * t) ** 2)

    def shift(self, t):
        return 2 * math.pi * self.J * math.cos(2 * self.theta) / self._denominator(t)

    @property
    def has_shift(self):
        return True

    @property
    def period(self):
        return 1.0 / self.J

    @property
    def max_frequency(self):
        return 2 * math.pi * self.J

    def params(self):
        return {"gamma": self.gamma, "J": self.J, "theta": self.theta}


MODELS = {cls.name: cls for cls in (Constant, Sine, OffsetSine, SineSum, Nmr)}


def rate_at(model: RateModel, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    r = model.rate(t)
    return float(r) if np.ndim(r) == 0 else r


def shift_at(model: RateModel, t):
    if not isinstance(model, Nmr):
        raise TypeError("only the NMR model carries an energy shift")
    s = model.shift(t)
    return float(s) if np.ndim(s) == 0 else s


def from_dict(d: dict) -> RateModel:
    """Build a model from ``{"kind": ..., **params}``."""
    d = dict(d)
    kind = d.pop("kind")
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ValueError(f"unknown rate model {kind!r}; expected one of {sorted(MODELS)}")
    return cls(**d)
