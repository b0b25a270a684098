import math

import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import solve_ivp

from tdtransport.chain import ChainSpec, ground_state, site_populations
from tdtransport.evolution import (DegenerateSteadyState, IntegratorConfig, InvariantViolation,
                                   SectorGenerator, _samples_per_window, evolve,
                                   find_steady_state, steady_state_nullspace,
                                   steady_state_sparse, trace_distance, window_average)
from tdtransport.integrate import StepSizeUnderflow, integrate_adaptive, integrate_fixed
from tdtransport.liouvillian import apply_rhs, build_constant_superoperator, make_context
from tdtransport.rates import Constant, OffsetSine, Sine


def random_pure(d, seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def test_unitary_evolution_keeps_purity():
    spec = ChainSpec.uniform(3, 2, kappa_inj=0.0, kappa_ext=0.0)
    ctx = make_context(spec, Constant(0.0))
    t = np.linspace(0, 100, 51)
    # a pure state sits on the positivity boundary, so integrate tighter than the default
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-12)
    traj = evolve(ctx, random_pure(8, 0), 0.0, 100.0, cfg, t_eval=t, store_states=True)
    purity = np.einsum("tij,tji->t", traj.states, traj.states).real
    assert np.abs(purity - 1).max() <= 1e-7


def test_single_site_pumping_closed_form():
    kappa = 0.05
    spec = ChainSpec(1, (1.0,), (), kappa, 0.0, 1)
    ctx = make_context(spec, Constant(0.3))
    t = np.linspace(0, 80, 41)
    cfg = IntegratorConfig()
    traj = evolve(ctx, ground_state(1), 0.0, 80.0, cfg, t_eval=t)
    exact = 1 - np.exp(-kappa * t)
    assert np.abs(traj.populations[:, 0] - exact).max() <= 10 * cfg.rtol


def test_halving_rtol_changes_state_less_than_coarse_tolerance():
    spec = ChainSpec.uniform(3, 2)
    ctx = make_context(spec, Sine(0.8, 2.0))
    rho0 = random_pure(8, 4)
    a = evolve(ctx, rho0, 0.0, 30.0, IntegratorConfig(rtol=1e-6, atol=1e-8)).rho_final
    b = evolve(ctx, rho0, 0.0, 30.0, IntegratorConfig(rtol=5e-7, atol=5e-9)).rho_final
    assert np.abs(a - b).max() < 1e-6


def test_fixed_step_order_on_unitary_two_sites():
    spec = ChainSpec(2, (1.0, 1.4), (0.3,), 0.0, 0.0, 2)
    ctx = make_context(spec, Constant(0.0))
    L = build_constant_superoperator(ctx, 0.0).toarray()
    y0 = random_pure(4, 2).ravel()
    T = 3.0
    exact = scipy.linalg.expm(T * L) @ y0
    f = lambda t, y: L @ y  # noqa: E731
    errs = [np.abs(integrate_fixed(f, 0.0, T, y0, n) - exact).max() for n in (20, 40, 80)]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(4.6 < p < 5.4 for p in orders)


def test_embedded_error_estimate_scales_with_fifth_power():
    # rejected-free adaptive runs: halving rtol by 2**5 should roughly halve the step
    spec = ChainSpec(2, (1.0, 1.4), (0.3,), 0.0, 0.0, 2)
    ctx = make_context(spec, Constant(0.0))
    L = build_constant_superoperator(ctx, 0.0).toarray()
    y0 = random_pure(4, 3).ravel()
    f = lambda t, y: L @ y  # noqa: E731
    a = integrate_adaptive(f, 0, 50, y0, rtol=1e-6, atol=1e-12)
    b = integrate_adaptive(f, 0, 50, y0, rtol=1e-6 / 32, atol=1e-12 / 32)
    assert b.n_steps / a.n_steps == pytest.approx(2.0, rel=0.15)


def test_dense_output_matches_expm():
    spec = ChainSpec.uniform(2, 2)
    ctx = make_context(spec, Constant(0.2))
    L = build_constant_superoperator(ctx, 0.2).toarray()
    y0 = random_pure(4, 5).ravel()
    t = np.linspace(0, 20, 37)
    res = integrate_adaptive(lambda s, y: L @ y, 0, 20, y0, rtol=1e-10, atol=1e-12, t_eval=t)
    for ti, yi in zip(t, res.y):
        np.testing.assert_allclose(yi, scipy.linalg.expm(ti * L) @ y0, atol=1e-8)


@pytest.mark.parametrize("n,k", [(2, 2), (3, 2)])
@pytest.mark.parametrize("gamma", [0.0, 0.05, 0.5])
def test_steady_state_matches_nullspace(n, k, gamma):
    ctx = make_context(ChainSpec.uniform(n, k), Constant(gamma))
    res = find_steady_state(ctx)
    assert res.converged
    assert trace_distance(res.rho, steady_state_nullspace(ctx, gamma)) <= 1e-8


def test_relaxation_route_agrees_with_nullspace():
    ctx = make_context(ChainSpec.uniform(2, 2), Constant(0.0))
    res = find_steady_state(ctx, IntegratorConfig(t_max=20000.0), method="relax")
    ref = steady_state_nullspace(ctx, 0.0)
    assert res.converged
    k = 1
    assert res.p_ext == pytest.approx(site_populations(ref, 2)[k], rel=1e-6)


def test_relaxation_reports_non_convergence_with_partial_data():
    ctx = make_context(ChainSpec.uniform(3, 2), Constant(0.1))
    res = find_steady_state(ctx, IntegratorConfig(t_max=30.0), method="relax")
    assert not res.converged
    assert res.periods >= 2 and np.all(np.isfinite(res.populations))
    assert "no convergence" in res.message


@pytest.mark.parametrize("model", [Constant(0.3), OffsetSine(1.2, 1.0, 2.0)])
def test_no_injection_means_no_current(model):
    ctx = make_context(ChainSpec.uniform(3, 2, kappa_inj=0.0), model)
    res = find_steady_state(ctx)
    assert res.converged
    assert res.p_ext == pytest.approx(0.0, abs=1e-10)


def test_no_reservoirs_rejected():
    ctx = make_context(ChainSpec.uniform(3, 2, kappa_inj=0.0, kappa_ext=0.0), Constant(0.1))
    with pytest.raises(ValueError):
        find_steady_state(ctx)
    with pytest.raises(DegenerateSteadyState):
        steady_state_nullspace(ctx, 0.1)


def test_nullspace_state_validity():
    ctx = make_context(ChainSpec.uniform(2, 2), Constant(0.0))
    rho = steady_state_nullspace(ctx, 0.0)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-14)
    assert np.linalg.eigvalsh(rho).min() >= -1e-10
    assert np.abs(apply_rhs(ctx, rho, 0.0)).max() <= 1e-10


def test_nullspace_matches_long_integration_n2():
    ctx = make_context(ChainSpec.uniform(2, 2), Constant(0.0))
    traj = evolve(ctx, ground_state(2), 0.0, 4000.0, IntegratorConfig(rtol=1e-10, atol=1e-12))
    assert trace_distance(traj.rho_final, steady_state_nullspace(ctx, 0.0)) <= 1e-6


def test_nullspace_cap_and_sparse_solver():
    ctx = make_context(ChainSpec.uniform(6, 5), Constant(0.2))
    with pytest.raises(ValueError):
        steady_state_nullspace(ctx, 0.2)
    small = make_context(ChainSpec.uniform(4, 3), Constant(0.2))
    assert trace_distance(steady_state_sparse(small, 0.2),
                          steady_state_nullspace(small, 0.2)) <= 1e-10


def test_trace_and_hermiticity_within_thresholds():
    ctx = make_context(ChainSpec.uniform(4, 3), OffsetSine(1.5, 1.0, 2.0))
    traj = evolve(ctx, ground_state(4), 0.0, 40.0)
    assert traj.invariants.max_trace_error <= 1e-9
    assert traj.invariants.max_hermiticity <= 1e-10
    assert traj.invariants.n_checked_steps == traj.n_steps


def test_negative_rate_triggers_positivity_abort():
    ctx = make_context(ChainSpec.uniform(2, 2), Constant(-0.5))
    rho0 = random_pure(4, 9)
    with pytest.raises(InvariantViolation, match="eigenvalue"):
        evolve(ctx, rho0, 0.0, 20.0, IntegratorConfig(checkpoint_every=1))
    # recording mode keeps going and logs the worst eigenvalue
    traj = evolve(ctx, rho0, 0.0, 1.0, IntegratorConfig(checkpoint_every=1, positivity="record"))
    assert traj.invariants.min_eigenvalue < -1e-8


def test_step_size_underflow():
    ctx = make_context(ChainSpec.uniform(3, 2), Constant(40.0))
    with pytest.raises(StepSizeUnderflow):
        evolve(ctx, random_pure(8, 1), 0.0, 5.0, IntegratorConfig(min_step=0.5, h0=0.6))


def test_unstable_periodic_orbit_is_reported():
    ctx = make_context(ChainSpec.uniform(3, 2), OffsetSine(0.05))
    res = find_steady_state(ctx, IntegratorConfig(positivity="record"))
    assert not res.converged
    assert res.floquet_growth > 1
    assert "unstable" in res.message


def test_instability_is_reproduced_by_an_independent_integrator():
    # scipy's integrator on the full 2^N x 2^N matrix, started from the ground state
    ctx = make_context(ChainSpec.uniform(3, 2), OffsetSine(0.05))
    sol = solve_ivp(lambda t, y: apply_rhs(ctx, y.reshape(8, 8), t).ravel(), (0, 120),
                    ground_state(3).ravel(), rtol=1e-9, atol=1e-12, method="DOP853")
    rho = sol.y[:, -1].reshape(8, 8)
    assert abs(np.trace(rho) - 1) < 1e-6
    assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -1.0


def test_positivity_loss_of_stable_periodic_state():
    ctx = make_context(ChainSpec.uniform(3, 2), Sine(1.0, 4.0))
    strict = find_steady_state(ctx)
    assert not strict.converged and "eigenvalue" in strict.message
    rec = find_steady_state(ctx, IntegratorConfig(positivity="record"))
    assert rec.converged
    assert rec.invariants.min_eigenvalue < -1e-3


def test_window_phase_offset_n7():
    ctx = make_context(ChainSpec.uniform(7, 5), Sine(0.5, 4.0))
    cfg = IntegratorConfig(positivity="record")
    res = find_steady_state(ctx, cfg)
    assert res.converged
    gen = SectorGenerator(ctx)
    T = res.period
    pops, _, _ = window_average(ctx, gen, gen.to_vector(res.rho), 0.0, T, cfg,
                                _samples_per_window(ctx.model, T), offset=T / 3)
    assert abs(pops[4] / 7 - res.p_ext / 7) <= 1e-7
