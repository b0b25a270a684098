import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdtransport.chain import ChainSpec
from tdtransport.metrics import (cp_check_pauli_channels, cp_check_single_channel, current,
                                 markovian_crossover, nm_indicator, nm_quantifier,
                                 non_markov_report, observables, running_integral, spread)
from tdtransport.rates import Constant, Nmr, OffsetSine, Sine, SineSum


def test_current_zero():
    assert current(np.zeros(7), ChainSpec.uniform(7, 5)) == (0.0, 0.0)


def test_rescaled_current_arithmetic():
    pops = np.zeros(7)
    pops[4] = 0.35
    J, Jt = current(pops, ChainSpec.uniform(7, 5))
    assert Jt == pytest.approx(0.05, abs=1e-15)
    assert J == pytest.approx(0.01 * 0.35, abs=1e-17)


@settings(max_examples=50, deadline=None)
@given(pops=st.lists(st.floats(0, 1), min_size=7, max_size=7), k=st.integers(2, 7))
def test_rescaled_current_is_nk_over_n(pops, k):
    spec = ChainSpec.uniform(7, k, kappa_ext=0.037)
    obs = observables(pops, spec)
    assert obs.rescaled_current == pops[k - 1] / 7
    assert obs.current == pytest.approx(0.037 * pops[k - 1], abs=1e-15)
    assert obs.spread <= 1.0
    assert obs.rescaled_current <= 1 / 7


def test_spread_examples():
    assert spread([0.3] * 5, 3) == 1.0
    # mean 0.5 above n_k = 0: 1 - 0.25
    assert spread([0.0, 1.0], 1) == pytest.approx(0.75)
    assert spread([1.0, 0.0, 0.5], 2) == pytest.approx(0.75)


def test_indicator_examples():
    t = np.linspace(0, 20, 200)
    np.testing.assert_array_equal(nm_indicator(Constant(0.3), t), 0.0)
    assert nm_indicator(Sine(1.0, 1.0), 3 * math.pi / 2) == pytest.approx(1.0)
    assert nm_indicator(OffsetSine(0.5, 1.0, 1.0), 3 * math.pi / 2) == pytest.approx(0.5)


def test_quantifier_sine_full_period():
    assert nm_quantifier(Sine(1.0, 1.0), 0.0, 2 * math.pi) == pytest.approx(2.0, abs=1e-8)


def test_quantifier_markovian_cases():
    assert nm_quantifier(Constant(0.2), 0.3, 17.0) == 0.0
    assert nm_quantifier(OffsetSine(1.0, 1.0, 1.0), 0.0, 2 * math.pi) == pytest.approx(0.0, abs=1e-12)


def test_quantifier_offset_sine_closed_form():
    # gamma + sin t < 0 on (pi + a, 2 pi - a), a = asin(gamma)
    g = 0.4
    a = math.asin(g)
    ref = 2 * math.cos(a) - g * (math.pi - 2 * a)
    assert nm_quantifier(OffsetSine(g), 0.0, 2 * math.pi) == pytest.approx(ref, abs=1e-9)


def test_quantifier_nmr_matches_log_antiderivative():
    # for gamma = 0 the negative half period of the odd rate integrates to ln(1 - a sin^2) / 4 at its extremes
    m = Nmr(0.0, 1.0, 0.52)
    F = nm_quantifier(m, 0.0, 1.0)
    assert F == pytest.approx(float(m.integral(0.5)), abs=1e-9)
    assert F > 0


def test_quantifier_requires_ordered_interval():
    with pytest.raises(ValueError):
        nm_quantifier(Sine(1.0, 1.0), 2.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0, 10), w1=st.floats(0.01, 10), w2=st.floats(0.01, 10),
       g=st.floats(0, 2), nu=st.floats(0.1, 5))
def test_quantifier_additive_and_non_negative(a, w1, w2, g, nu):
    m = OffsetSine(g, 1.0, nu)
    b, c = a + w1, a + w1 + w2
    Fab, Fbc, Fac = nm_quantifier(m, a, b), nm_quantifier(m, b, c), nm_quantifier(m, a, c)
    assert min(Fab, Fbc, Fac) >= 0
    assert Fac == pytest.approx(Fab + Fbc, rel=1e-8, abs=1e-10)


def test_quantifier_zero_iff_markovian():
    for m in (Sine(0.5, 2.0), OffsetSine(0.3), Nmr(0.2, 1.0, 0.52), Constant(0.1),
              OffsetSine(1.2), Nmr(1.3, 1.0, 0.52)):
        rep = non_markov_report(m, 4 * (m.period or 1.0))
        assert (rep.quantifier == 0.0) == rep.is_markovian
        assert np.all(rep.indicator >= 0)
        assert rep.is_markovian == bool(np.all(rep.indicator == 0))


@pytest.mark.parametrize("model", [Sine(1.0, 1.0), Sine(2.0, 4.0), Sine(0.7, 0.3),
                                   SineSum(1.0, (0.3, 2.0, 4.0)), SineSum(2.0, (0.3, 1.0, 4.0))])
def test_cp_sine_models_valid(model):
    rep = cp_check_single_channel(model, 500.0)
    assert rep.valid and rep.first_violation is None
    # the numerical path on its own grid agrees
    grid, cum = running_integral(model, 100.0, exact=False)
    assert cum.min() >= -1e-10


def test_cp_negative_constant_fails_immediately():
    rep = cp_check_single_channel(Constant(-0.1), 10.0)
    assert not rep.valid
    assert 0 < rep.first_violation <= 10.0 / 200 + 1e-12


def test_cp_nmr_valid_over_ten():
    rep = cp_check_single_channel(Nmr(0.0, 1.0, 0.52), 10.0)
    assert rep.valid
    grid, cum = running_integral(Nmr(0.0, 1.0, 0.52), 10.0, exact=False)
    assert cum.min() >= -1e-10


def test_cp_callable_rate():
    rep = cp_check_single_channel(lambda t: np.cos(np.asarray(t)) - 0.2, 20.0)
    assert not rep.valid


def test_pauli_identity_map():
    z = lambda t: 0.0 * np.asarray(t)
    assert cp_check_pauli_channels(z, z, z, 3.0)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.001, 3), t=st.floats(0.01, 20))
def test_pauli_equal_positive_channels(c, t):
    g = Constant(c)
    assert cp_check_pauli_channels(g, g, g, t)


@pytest.mark.parametrize("model", [Sine(1.0, 1.0), Constant(-0.1), OffsetSine(-0.2),
                                   lambda t: np.cos(np.asarray(t)) - 0.1, Nmr(0.0, 1.0, 1.0),
                                   lambda t: np.sin(np.asarray(t)) + 0.05])
@pytest.mark.parametrize("horizon", [0.5, 3.0, 12.0])
def test_pauli_two_zero_channels_match_single_channel(model, horizon):
    z = lambda t: 0.0 * np.asarray(t)
    single = cp_check_single_channel(model, horizon)
    grid = np.linspace(0, horizon, 401)[1:]
    pauli = all(cp_check_pauli_channels(z, z, model, float(t)) for t in grid)
    assert pauli == single.valid


def test_markovian_crossover_offset_sine():
    assert markovian_crossover(OffsetSine(0.0, 1.0, 1.0)) == pytest.approx(1.0, abs=1e-10)
    assert markovian_crossover(Constant(0.3)) == 0.0
