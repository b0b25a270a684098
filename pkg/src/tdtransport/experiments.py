"""Config-driven parameter sweeps and their summaries.

A config document is JSON::

    {"schema_version": 1,
     "description": "...",
     "experiments": [
        {"name": "sine_nu2",
         "chain": {"n_sites": 7, "extraction_site": 5},
         "rate": {"kind": "sine", "gamma": 0.0, "nu": 2.0},
         "sweep": {"parameter": "gamma", "min": 0.0, "max": 2.0, "points": 25},
         "integrator": {"rtol": 1e-8}}
     ]}

Chain fields default to the benchmark transport parameters (omega = 1,
lambda = 0.1, kappa_inj = kappa_ext = 0.01). An experiment with
``"kind": "rate_curves"`` tabulates gamma(t) for a list of parameter values
instead of solving the chain.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .chain import ChainSpec
from .evolution import IntegratorConfig, find_steady_state
from .liouvillian import make_context
from .metrics import (cp_check_single_channel, markovian_crossover, nm_quantifier,
                      observables)
from .rates import Nmr, OffsetSine, RateModel, from_dict

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEP_PARAMETERS = ("gamma", "theta", "nu")
COMPARE_TOL = 1e-9
FIGURES = tuple(range(1, 9))


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class CPViolation(ValueError):
    """A rate model fails the complete-positivity check over the horizon."""


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    min: float
    max: float
    points: int
    spacing: str = "linear"

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise ConfigError("sweep bounds must be finite")
        if self.points < 2:
            raise ConfigError("a sweep needs at least 2 points")
        if self.max <= self.min:
            raise ConfigError("sweep max must exceed min")
        if self.spacing != "linear":
            raise ConfigError("only linear spacing is supported")

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    chain: ChainSpec | None
    rate: RateModel
    sweep: SweepSpec | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    kind: str = "sweep"
    # rate_curves only
    values: tuple = ()
    t_end: float = 2.0
    samples: int = 401

    def models(self) -> list[RateModel]:
        if self.kind == "rate_curves":
            return [self.rate.with_param(self.sweep.parameter, v) for v in self.values]
        return [self.rate.with_param(self.sweep.parameter, float(v))
                for v in self.sweep.values()]

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "rate": self.rate.to_dict(),
             "sweep": asdict(self.sweep), "integrator": asdict(self.integrator)}
        if self.chain is not None:
            d["chain"] = self.chain.to_dict()
        if self.kind == "rate_curves":
            d.update(values=list(self.values), t_end=self.t_end, samples=self.samples)
        return d


@dataclass
class SweepRecord:
    parameter: float
    rescaled_current: float
    spread: float
    populations: np.ndarray
    converged: bool
    periods: int
    F: float
    min_eigenvalue: float
    message: str = ""
    floquet_growth: float | None = None
    max_trace_error: float = 0.0
    max_hermiticity: float = 0.0


def _experiment_from_dict(d: dict, overrides: dict) -> ExperimentConfig:
    d = dict(d)
    name = str(d.get("name", "?"))
    try:
        d.pop("name")
        kind = d.pop("kind", "sweep")
        rate = from_dict(d.pop("rate"))
        sw = d.pop("sweep")
        sweep = SweepSpec(sw["parameter"], float(sw.get("min", 0.0)),
                          float(sw.get("max", 1.0)), int(sw.get("points", 25)),
                          sw.get("spacing", "linear"))
        integ = {**d.pop("integrator", {}), **overrides}
        integrator = IntegratorConfig(**integ)
        if kind == "rate_curves":
            exp = ExperimentConfig(name, None, rate, sweep, integrator, kind,
                                   tuple(float(v) for v in d.pop("values")),
                                   float(d.pop("t_end", 2.0)), int(d.pop("samples", 401)))
        elif kind == "sweep":
            chain = ChainSpec.from_dict(d.pop("chain"))
            exp = ExperimentConfig(name, chain, rate, sweep, integrator)
        else:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        # constructing every model catches forbidden parameter values early
        exp.models()
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, ArithmeticError) as exc:
        raise ConfigError(f"experiment {name}: {type(exc).__name__}: {exc}") from exc
    if d:
        raise ConfigError(f"experiment {name}: unknown fields {sorted(d)}")
    return exp


def parse_document(doc: dict, overrides: dict | None = None) -> list[ExperimentConfig]:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    exps = doc.get("experiments")
    if not isinstance(exps, list) or not exps:
        raise ConfigError("'experiments' must be a non-empty list")
    out = [_experiment_from_dict(e, overrides or {}) for e in exps]
    names = [e.name for e in out]
    if len(set(names)) != len(names):
        raise ConfigError("experiment names must be unique")
    return out


def load_config(path, overrides: dict | None = None) -> list[ExperimentConfig]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_document(doc, overrides)


def figure_document(n: int) -> dict:
    if n not in FIGURES:
        raise ConfigError(f"no bundled config for figure {n}; choose from {FIGURES}")
    text = resources.files("tdtransport").joinpath(f"configs/figure{n}.json").read_text()
    return json.loads(text)


def validate(exp: ExperimentConfig) -> list[tuple[float, bool, float | None]]:
    """CP check of every model in the sweep; raises :class:`CPViolation` on failure."""
    rows = []
    values = exp.values if exp.kind == "rate_curves" else exp.sweep.values()
    for v, model in zip(values, exp.models()):
        rep = cp_check_single_channel(model, exp.integrator.t_max)
        rows.append((float(v), rep.valid, rep.first_violation))
        if not rep.valid:
            raise CPViolation(f"{exp.name}: {model} violates complete positivity "
                              f"at t={rep.first_violation:.6g}")
    return rows


def _window_length(model: RateModel, config: IntegratorConfig) -> float:
    return model.period if model.period is not None else config.probe_window


def solve_point(spec: ChainSpec, model: RateModel, config: IntegratorConfig,
                value: float) -> SweepRecord:
    t0 = time.perf_counter()
    res = find_steady_state(make_context(spec, model), config)
    log.info("%s k=%d: converged=%s p_ext=%.10g (%.1f s)", model, spec.extraction_site,
             res.converged, res.p_ext, time.perf_counter() - t0)
    F = nm_quantifier(model, 0.0, _window_length(model, config))
    if res.converged:
        obs = observables(res.populations, spec)
        Jt, dn = obs.rescaled_current, obs.spread
    else:
        Jt = dn = float("nan")
    inv = res.invariants
    return SweepRecord(float(value), Jt, dn, res.populations, res.converged, res.periods,
                       F, float(inv.min_eigenvalue), res.message, res.floquet_growth,
                       inv.max_trace_error, inv.max_hermiticity)


def _solve_args(args):
    return solve_point(*args)


def run_sweep(exp: ExperimentConfig, threads: int = 1, out=None,
              check_cp: bool = True) -> list[SweepRecord]:
    """Solve every sweep point; results come back in parameter order.

    Points are independent, so a process pool of ``threads`` workers gives
    the same records as a sequential run.
    """
    if exp.kind != "sweep":
        raise ConfigError(f"{exp.name} is not a sweep experiment")
    if check_cp:
        validate(exp)
    tasks = [(exp.chain, m, exp.integrator, v)
             for v, m in zip(exp.sweep.values(), exp.models())]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_solve_args, tasks))
    else:
        records = [solve_point(*t) for t in tasks]
    if out is not None:
        write_csv(records, exp.chain.n_sites, out, exp.sweep.parameter)
    return records


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_header(n_sites: int, parameter: str = "parameter") -> list[str]:
    return ([parameter, "J_tilde", "delta_n"] + [f"n{i}" for i in range(1, n_sites + 1)]
            + ["converged", "periods", "F", "min_eigenvalue"])


def csv_text(records: list[SweepRecord], n_sites: int, parameter: str = "parameter") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(n_sites, parameter))
    for r in records:
        w.writerow([_fmt(r.parameter), _fmt(r.rescaled_current), _fmt(r.spread)]
                   + [_fmt(p) for p in r.populations]
                   + [_fmt(r.converged), _fmt(r.periods), _fmt(r.F), _fmt(r.min_eigenvalue)])
    return buf.getvalue()


def write_csv(records, n_sites, path, parameter="parameter") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(records, n_sites, parameter))


def read_csv(path) -> tuple[list[str], list[SweepRecord]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h[:1] == "n" and h[1:].isdigit())
    recs = []
    for row in body:
        vals = row
        recs.append(SweepRecord(float(vals[0]), float(vals[1]), float(vals[2]),
                                np.array([float(v) for v in vals[3:3 + n]]),
                                vals[3 + n] == "true", int(vals[4 + n]), float(vals[5 + n]),
                                float(vals[6 + n])))
    return header, recs


def rate_curves(exp: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, exp.t_end, exp.samples)
    return t, np.array([np.asarray(m.rate(t), dtype=float) for m in exp.models()])


def rate_curves_csv(exp: ExperimentConfig) -> str:
    t, g = rate_curves(exp)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"gamma[{exp.sweep.parameter}={v!r}]" for v in exp.values])
    for i, ti in enumerate(t):
        w.writerow([_fmt(ti)] + [_fmt(x) for x in g[:, i]])
    return buf.getvalue()


def classify(values, tol: float = COMPARE_TOL) -> str:
    """'increasing', 'decreasing', 'constant', 'interior-max' or 'non-monotonic'."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    up, down = bool(np.all(d >= -tol)), bool(np.all(d <= tol))
    if up and down:
        return "constant"
    if up:
        return "increasing"
    if down:
        return "decreasing"
    i = int(np.argmax(v))
    if 0 < i < len(v) - 1 and v[i] > v[0] + tol and v[i] > v[-1] + tol:
        return "interior-max"
    return "non-monotonic"


def interior_extrema(values, tol: float = COMPARE_TOL) -> list[int]:
    """Indices of strict local maxima or minima away from the grid ends."""
    v = np.asarray(values, dtype=float)
    out = []
    for i in range(1, len(v) - 1):
        a, b = v[i] - v[i - 1], v[i + 1] - v[i]
        if (a > tol and b < -tol) or (a < -tol and b > tol):
            out.append(i)
    return out


def crossover_for(exp: ExperimentConfig) -> float | None:
    """Offset at which a gamma sweep turns Markovian, for offset-type models."""
    if exp.sweep.parameter != "gamma" or not isinstance(exp.rate, (OffsetSine, Nmr)):
        return None
    return markovian_crossover(exp.rate.with_param("gamma", 0.0))


def report_figure_summary(records: list[SweepRecord], crossover: float | None = None,
                          tol: float = COMPARE_TOL) -> dict:
    """Argmax, maximum and shape verdict of the rescaled current.

    The verdict is computed on the converged points; ``complete`` says
    whether that was all of them.
    """
    ok = [r for r in records if r.converged and np.isfinite(r.rescaled_current)]
    summary = {"points": len(records), "converged": len(ok),
               "complete": len(ok) == len(records), "crossover": crossover}
    if not ok:
        summary.update(argmax=None, max_J_tilde=None, verdict="no-data",
                       argmax_delta_n=None, interior_extrema=[])
        return summary
    J = np.array([r.rescaled_current for r in ok])
    dn = np.array([r.spread for r in ok])
    x = [r.parameter for r in ok]
    i = int(np.argmax(J))
    summary.update(argmax=x[i], max_J_tilde=float(J[i]), verdict=classify(J, tol),
                   argmax_delta_n=x[int(np.argmax(dn))],
                   interior_extrema=[x[j] for j in interior_extrema(J, tol)],
                   min_eigenvalue=float(min(r.min_eigenvalue for r in ok)))
    return summary


def default_out_dir(figure: int) -> Path:
    return Path(os.getcwd()) / f"figure{figure}"
