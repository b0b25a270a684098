"""Time evolution of the chain and extraction of its asymptotic regime.

The asymptotic regime under a periodic rate is a limit cycle; observables are
reported as averages over one period of that cycle. Two routes lead there:

``method="relax"``
    Integrate from the all-ground state window by window until consecutive
    window averages of the extraction-site population agree.

``method="shooting"`` (default)
    Solve ``rho = P(rho)`` for the one-period propagator ``P`` by
    preconditioned GMRES, each mat-vec being a fixed-step integration over
    one period; the preconditioner is the period-averaged generator. The
    result is then confirmed with the same window-average test as ``relax``.
    Slowest relaxation rates at the benchmark parameters are ~5e-4 omega, so
    plain relaxation needs t ~ 4e4 / omega to settle at 1e-8.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import ground_state, site_populations
from .integrate import StepSizeUnderflow, integrate_adaptive, integrate_fixed
from .liouvillian import (GeneratorContext, SectorGenerator, apply_rhs,
                          build_constant_superoperator)

log = logging.getLogger(__name__)

TRACE_TOL = 1e-9
HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = -1e-8
NULLSPACE_MAX_SITES = 5
STABILITY_MARGIN = 1e-3
POPULATION_FLOOR = 1e-6


class InvariantViolation(RuntimeError):
    """Trace, Hermiticity or positivity drifted past its threshold."""


class DegenerateSteadyState(RuntimeError):
    """The stationary generator has more than one zero mode."""


@dataclass
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    h0: float | None = None
    max_step: float | None = None
    min_step: float = 1e-10
    t_max: float = 5000.0
    probe_window: float = 10.0
    convergence_tol: float = 1e-8
    checkpoint_every: int = 200
    # "raise" aborts on a negative eigenvalue below POSITIVITY_TOL, "record" only logs it
    positivity: str = "raise"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.positivity not in ("raise", "record"):
            raise ValueError("positivity must be 'raise' or 'record'")


@dataclass
class InvariantLog:
    max_trace_error: float = 0.0
    max_hermiticity: float = 0.0
    min_eigenvalue: float = np.inf
    n_checked_steps: int = 0
    n_checkpoints: int = 0

    def merge(self, other: "InvariantLog") -> None:
        self.max_trace_error = max(self.max_trace_error, other.max_trace_error)
        self.max_hermiticity = max(self.max_hermiticity, other.max_hermiticity)
        self.min_eigenvalue = min(self.min_eigenvalue, other.min_eigenvalue)
        self.n_checked_steps += other.n_checked_steps
        self.n_checkpoints += other.n_checkpoints


@dataclass
class TrajectoryResult:
    t: np.ndarray
    populations: np.ndarray  # (len(t), N)
    rho_final: np.ndarray
    states: np.ndarray | None
    n_steps: int
    n_rejected: int
    invariants: InvariantLog


@dataclass
class SteadyStateResult:
    converged: bool
    p_ext: float
    populations: np.ndarray
    periods: int
    residual: float
    period: float
    method: str
    rho: np.ndarray | None = None
    window_history: list = field(default_factory=list)
    krylov_matvecs: int = 0
    invariants: InvariantLog = field(default_factory=InvariantLog)
    message: str = ""
    floquet_growth: float | None = None


def _dense_rhs(ctx):
    d = ctx.dim

    def f(t, y):
        return apply_rhs(ctx, y.reshape(d, d), t).ravel()
    return f


class _Stepper:
    """Per-step hook: checks drift, then re-symmetrizes and renormalizes."""

    def __init__(self, trace, herm_res, hermitize, min_eig, every, strict=True):
        self.trace, self.herm_res, self.hermitize = trace, herm_res, hermitize
        self.min_eig, self.every, self.strict = min_eig, every, strict
        self.log = InvariantLog()

    def __call__(self, t, y):
        lg = self.log
        tr = self.trace(y)
        terr, herm = abs(tr - 1.0), self.herm_res(y)
        lg.max_trace_error = max(lg.max_trace_error, terr)
        lg.max_hermiticity = max(lg.max_hermiticity, herm)
        lg.n_checked_steps += 1
        if terr > TRACE_TOL or herm > HERMITICITY_TOL or not np.isfinite(terr):
            raise InvariantViolation(
                f"t={t:.6g}: |Tr rho - 1| = {terr:.3e}, Hermiticity residual = {herm:.3e}")
        y = self.hermitize(y)
        y = y / self.trace(y).real
        if lg.n_checked_steps % self.every == 0:
            self.checkpoint(t, y)
        return y

    def checkpoint(self, t, y):
        lam = self.min_eig(y)
        self.log.min_eigenvalue = min(self.log.min_eigenvalue, lam)
        self.log.n_checkpoints += 1
        if lam < POSITIVITY_TOL and self.strict:
            raise InvariantViolation(f"t={t:.6g}: smallest eigenvalue {lam:.3e}")


def _representation(ctx, rho0, gen=None):
    """(generator-like object, initial vector); sector form when rho0 allows."""
    gen = gen or SectorGenerator(ctx)
    if gen.off_sector_norm(rho0) == 0.0:
        return gen, gen.to_vector(rho0)
    return None, np.asarray(rho0, dtype=complex).ravel()


def evolve(ctx: GeneratorContext, rho0: np.ndarray, t0: float, t1: float,
           config: IntegratorConfig | None = None, t_eval=None,
           store_states: bool = False, check_invariants: bool = True,
           generator: SectorGenerator | None = None) -> TrajectoryResult:
    """Integrate the master equation from ``rho0`` at ``t0`` to ``t1``.

    Populations are sampled on ``t_eval`` (default: just ``t1``).
    """
    config = config or IntegratorConfig()
    d, n = ctx.dim, ctx.spec.n_sites
    gen, y0 = _representation(ctx, rho0, generator)
    if gen is not None:
        f = gen
        trace, herm, hermz = gen.trace, gen.hermiticity_residual, gen.hermitize
        min_eig, to_mat = gen.min_eigenvalue, gen.to_matrix
    else:
        f = _dense_rhs(ctx)
        adj = np.arange(d * d).reshape(d, d).T.ravel()
        diag = np.arange(d) * (d + 1)
        trace = lambda v: v[diag].sum()  # noqa: E731
        herm = lambda v: float(np.abs(v - v[adj].conj()).max())  # noqa: E731
        hermz = lambda v: 0.5 * (v + v[adj].conj())  # noqa: E731
        min_eig = lambda v: float(np.linalg.eigvalsh(v.reshape(d, d)).min())  # noqa: E731
        to_mat = lambda v: v.reshape(d, d)  # noqa: E731

    stepper = _Stepper(trace, herm, hermz, min_eig, config.checkpoint_every,
                       strict=config.positivity == "raise")
    t_eval = np.array([t1] if t_eval is None else t_eval, dtype=float)
    max_step = config.max_step or _default_max_step(ctx)
    res = integrate_adaptive(f, t0, t1, y0, rtol=config.rtol, atol=config.atol,
                             h0=config.h0, max_step=max_step, min_step=config.min_step,
                             t_eval=t_eval, on_step=stepper if check_invariants else None)
    if check_invariants:
        stepper.checkpoint(t1, res.y_final)
    if gen is not None:
        pops = gen.populations(res.y)
    else:
        pops = np.array([site_populations(y.reshape(d, d), n) for y in res.y])
    states = np.array([to_mat(y) for y in res.y]) if store_states else None
    return TrajectoryResult(res.t, pops, to_mat(res.y_final), states,
                            res.n_steps, res.n_rejected, stepper.log)


def _default_max_step(ctx):
    model = ctx.model
    if model.max_frequency > 0:
        # keep at least ~20 steps per cycle of the fastest rate component
        return 2 * math.pi / model.max_frequency / 20
    return np.inf


def _samples_per_window(model, T):
    if model.max_frequency == 0:
        return 32
    cycles = T * model.max_frequency / (2 * math.pi)
    return int(max(128, math.ceil(64 * cycles)))


def window_average(ctx: GeneratorContext, gen: SectorGenerator, v0: np.ndarray,
                   t_start: float, length: float, config: IntegratorConfig,
                   n_samples: int, offset: float = 0.0):
    """Average site populations over ``[t_start + offset, t_start + offset + length)``.

    Integration starts at ``t_start`` from ``v0``. Returns
    ``(mean populations, vector at the window end, invariant log)``.
    """
    a = t_start + offset
    grid = a + length * np.arange(n_samples) / n_samples
    b = a + length
    traj = evolve(ctx, gen.to_matrix(v0), t_start, b, config,
                  t_eval=np.append(grid, b), generator=gen)
    pops = traj.populations[:-1].mean(axis=0)
    return pops, gen.to_vector(traj.rho_final), traj.invariants


def _relative_change(new, old):
    # populations below POPULATION_FLOOR are compared on that absolute scale
    return abs(new - old) / max(abs(new), abs(old), POPULATION_FLOOR)


def find_steady_state(ctx: GeneratorContext, config: IntegratorConfig | None = None,
                      method: str = "shooting", verify_windows: int = 3,
                      max_krylov: int = 2000) -> SteadyStateResult:
    """Period-averaged asymptotic populations and extraction-site population."""
    config = config or IntegratorConfig()
    spec, model = ctx.spec, ctx.model
    if spec.kappa_inj <= 0 and spec.kappa_ext <= 0:
        raise ValueError("need kappa_inj > 0 or kappa_ext > 0 for a unique attractor")
    gen = SectorGenerator(ctx)
    T = model.period if model.period is not None else config.probe_window
    n_samples = _samples_per_window(model, T)
    k = spec.extraction_site - 1

    if method == "relax":
        v = gen.to_vector(ground_state(spec.n_sites))
        return _relax(ctx, gen, v, 0.0, T, n_samples, config, k,
                      max_windows=int(config.t_max // T), method="relax")
    if method != "shooting":
        raise ValueError(f"unknown method {method!r}")

    try:
        v, matvecs, residual, growth = _shoot(ctx, gen, T, config, max_krylov)
    except (InvariantViolation, StepSizeUnderflow, ArithmeticError) as exc:
        log.warning("shooting failed (%s); no steady state", exc)
        return _failed(spec, T, str(exc))
    if v is None:
        msg = (f"periodic orbit is unstable: one-period growth factor {growth:.4g} > 1, "
               "populations diverge")
        res = _failed(spec, T, msg)
        res.floquet_growth = growth
        return res
    # verify at the pilot tolerance: at config.rtol the integrator's own per-period
    # error is comparable to the convergence threshold
    tight = replace(config, rtol=config.rtol * 1e-2, atol=config.atol * 1e-2)
    result = _relax(ctx, gen, v, 0.0, T, n_samples, tight, k,
                    max_windows=verify_windows, method="shooting")
    result.krylov_matvecs = matvecs
    result.residual = max(result.residual, residual)
    result.floquet_growth = growth
    return result


def _failed(spec, T, message):
    nan = np.full(spec.n_sites, np.nan)
    return SteadyStateResult(False, float("nan"), nan, 0, float("inf"), T,
                             "shooting", message=message)


def _relax(ctx, gen, v, t, T, n_samples, config, k, max_windows, method):
    history, inv = [], InvariantLog()
    prev = None
    pops = np.full(ctx.spec.n_sites, np.nan)
    converged, message, residual = False, "", float("inf")
    rho_phase0 = gen.to_matrix(v)
    for w in range(max(max_windows, 2)):
        try:
            pops, v_next, lg = window_average(ctx, gen, v, t, T, config, n_samples)
        except (InvariantViolation, StepSizeUnderflow) as exc:
            message = str(exc)
            break
        inv.merge(lg)
        history.append(float(pops[k]))
        if w == 0:
            residual = float(np.abs(v_next - v).max())
        rho_phase0 = gen.to_matrix(v)
        v, t = v_next, t + T
        if prev is not None:
            change = _relative_change(pops[k], prev)
            if change < config.convergence_tol:
                converged = True
                residual = min(residual, float(change))
                break
        prev = pops[k]
    if not converged and not message:
        message = f"no convergence after {len(history)} windows"
    return SteadyStateResult(converged, float(pops[k]), pops, len(history), residual,
                             T, method, rho=rho_phase0, window_history=history,
                             invariants=inv, message=message)


def _steps_per_period(ctx, gen, v, T, config):
    """Fixed step count from an adaptive pilot pass at tightened tolerance."""
    f = gen
    pilot = integrate_adaptive(f, 0.0, T, v, rtol=config.rtol * 1e-2,
                               atol=config.atol * 1e-2, max_step=_default_max_step(ctx))
    return max(4, int(math.ceil(1.25 * pilot.n_steps)))


def _probe_growth(gen, period_map, T, n_iter=None, seed=0):
    """Power iteration on traceless perturbations: per-period growth of the slowest mode.

    The map is far from normal, so early ratios can exceed 1 transiently; the
    estimate is the geometric mean over the last third of the iterations.
    Stops early once the perturbation has grown by ``1e6``.
    """
    if n_iter is None:
        n_iter = int(min(30, max(8, math.ceil(120.0 / T))))
    rng = np.random.default_rng(seed)
    d = gen.hermitize(rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size))
    d[gen.diag_idx] -= gen.trace(d) / len(gen.diag_idx)
    d /= np.linalg.norm(d)
    logs = []
    for _ in range(n_iter):
        d = period_map(d)
        ratio = float(np.linalg.norm(d))
        if not np.isfinite(ratio):
            return float("inf")
        if ratio == 0.0:
            return 0.0
        d /= ratio
        logs.append(math.log(ratio))
        if sum(logs) > math.log(1e6):
            break
    tail = logs[-max(1, len(logs) // 3):]
    return math.exp(sum(tail) / len(tail))


def _period_mean_abs(model):
    if model.period is None:
        return abs(float(model.rate(0.0)))
    t = model.period * np.arange(4096) / 4096
    return float(np.mean(np.abs(model.rate(t))))


def _toggling_average(gen, model, shift, n_grid=1024):
    """Period average of the generator in the frame that absorbs the dephasing.

    With ``G(t)`` the running integral of the rate minus its mean part, the
    substitution ``v = exp(G(t) D) w`` (``D`` the dephasing diagonal) leaves a
    hopping/pumping term whose entry ``(i, j)`` is scaled by
    ``exp(G(t) (D_j - D_i))``. ``G`` is periodic, so the one-period map is
    approximately ``exp(T L_eff)`` with those scalings averaged. This tracks
    the coupling renormalization that a strong zero-mean rate produces, which
    the plain mean-rate generator misses. Returns None when not applicable.
    """
    if model.period is None:
        return None
    T = model.period
    t = T * np.arange(n_grid) / n_grid
    try:
        G = np.asarray(model.integral(t), dtype=float) - model.mean_rate() * t
    except NotImplementedError:
        return None
    L0 = gen.L0.tocoo()
    q = np.rint(gen.deph.real[L0.col] - gen.deph.real[L0.row]).astype(int)
    levels = np.unique(q)
    with np.errstate(over="ignore"):
        avg = np.array([np.mean(np.exp(lv * G)) for lv in levels])
    if not np.all(np.isfinite(avg)):
        return None
    scale = avg[np.searchsorted(levels, q)]
    Leff = sp.csr_matrix((L0.data * scale, (L0.row, L0.col)), shape=L0.shape)
    return (Leff + sp.diags(model.mean_rate() * gen.deph + shift * gen.shift)).tocsr()


def _shoot(ctx, gen, T, config, max_krylov):
    """Periodic state as the fixed point of the one-period map.

    Returns ``(vector or None, mat-vecs, residual, growth)``; the vector is
    None when the probe finds a perturbation growing from period to period.
    """
    model = ctx.model
    n = gen.size
    row = gen.diag_idx[0]
    shift = model.mean_shift() if model.has_shift else 0.0
    # the mean-rate generator can have dark states (e.g. zero mean dephasing and no
    # injection); the mean absolute rate is the fallback
    candidates = [_toggling_average(gen, model, shift), gen.frozen(model.mean_rate(), shift),
                  gen.frozen(_period_mean_abs(model), shift)]
    for Lbar in candidates:
        if Lbar is None:
            continue
        bordered = Lbar.tolil()
        bordered[row, :] = 0.0
        bordered[row, gen.diag_idx] = 1.0
        try:
            lu = spla.splu(bordered.tocsc())
            break
        except RuntimeError:
            continue
    else:
        raise ArithmeticError("period-averaged generator is singular")
    ref = np.zeros(n, dtype=complex)
    ref[gen.diag_idx] = 1.0 / len(gen.diag_idx)

    def precondition(r):
        # inverse of tau-scaled Cayley approximation to I - exp(T Lbar), trace carried by row
        rhs = -r / T
        rhs[row] = gen.trace(r)
        x = lu.solve(rhs)
        return x - 0.5 * T * (Lbar @ x)

    v0 = precondition(ref.copy())
    v0 = gen.hermitize(v0) / gen.trace(v0).real
    n_steps = _steps_per_period(ctx, gen, v0, T, config)
    count = [0]

    def period_map(x):
        return integrate_fixed(gen, 0.0, T, x, n_steps)

    growth = None
    if model.max_frequency > 0:
        growth = _probe_growth(gen, period_map, T)
        if not np.isfinite(growth) or growth > 1 + STABILITY_MARGIN:
            return None, 0, float("inf"), growth

    def A(x):
        count[0] += 1
        return x - period_map(x) + ref * gen.trace(x)

    Aop = spla.LinearOperator((n, n), matvec=A, dtype=complex)
    Mop = spla.LinearOperator((n, n), matvec=precondition, dtype=complex)
    x, info = spla.gmres(Aop, ref, x0=v0, M=Mop, rtol=1e-13, atol=0.0,
                         restart=400, maxiter=max(1, max_krylov // 400))
    tr = gen.trace(x)
    if not np.isfinite(tr) or abs(tr) < 1e-12:
        raise ArithmeticError("shooting solve produced a state with vanishing trace")
    x = gen.hermitize(x / tr)
    residual = float(np.abs(period_map(x) - x).max())
    if info != 0:
        log.info("GMRES stopped with info=%s after %d mat-vecs (residual %.2e)",
                 info, count[0], residual)
    return x, count[0], residual, growth


def steady_state_nullspace(ctx: GeneratorContext, gamma: float, shift: float = 0.0,
                           max_sites: int = NULLSPACE_MAX_SITES,
                           tol: float = 1e-10) -> np.ndarray:
    """Stationary state of the frozen-rate generator from its SVD null space."""
    if ctx.spec.n_sites > max_sites:
        raise ValueError(f"dense null-space solve capped at N <= {max_sites}")
    d = ctx.dim
    L = build_constant_superoperator(ctx, gamma, shift).toarray()
    _, s, vh = scipy.linalg.svd(L)
    null = np.flatnonzero(s <= tol * max(s[0], 1.0))
    if len(null) != 1:
        raise DegenerateSteadyState(f"null space has dimension {len(null)}")
    rho = vh[null[0]].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def steady_state_sparse(ctx: GeneratorContext, gamma: float, shift: float = 0.0,
                        generator: SectorGenerator | None = None) -> np.ndarray:
    """Stationary state of the frozen-rate generator via a bordered sparse LU solve.

    Works in the excitation-sector representation, so N = 7 is cheap.
    """
    gen = generator or SectorGenerator(ctx)
    L = gen.frozen(gamma, shift).tolil()
    row = gen.diag_idx[0]
    L[row, :] = 0.0
    L[row, gen.diag_idx] = 1.0
    rhs = np.zeros(gen.size, dtype=complex)
    rhs[row] = 1.0
    v = spla.spsolve(sp.csc_matrix(L), rhs)
    return gen.to_matrix(gen.hermitize(v))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())
