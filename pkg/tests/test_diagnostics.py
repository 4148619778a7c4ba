import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscous_midpoint.diagnostics import (
    InitialPolicy,
    fit_decay_rate,
    initial_state,
    sweep_uniformity,
    telescoped_residual,
    uniformity_ratio,
)
from viscous_midpoint.exceptions import DegenerateFitError
from viscous_midpoint.models import build_model, oracle_2x2, smooth_initial_state
from viscous_midpoint.schemes import EnergyLedger


def test_fit_recovers_exact_exponential():
    t = 0.1 * np.arange(200)
    fit = fit_decay_rate(3.0 * np.exp(-0.7 * t), 0.1)
    assert abs(fit.nu0 - 0.7) <= 1e-12
    assert abs(fit.mu0 - 1.0) <= 1e-12
    assert fit.r_squared > 1 - 1e-12
    assert fit.window == (20, 200)


def test_fit_amplitude_for_a_delayed_exponential():
    t = 0.1 * np.arange(100)
    E = np.exp(-t)
    E[0] = 0.25  # initial value below the fitted curve
    fit = fit_decay_rate(E, 0.1)
    assert abs(fit.nu0 - 1.0) <= 1e-12
    assert abs(fit.mu0 - 4.0) <= 1e-9


def test_fit_constant_energy():
    fit = fit_decay_rate(np.full(50, 2.0), 0.1)
    assert fit.nu0 == 0.0 and fit.mu0 == 1.0


def test_fit_stops_at_round_off_floor():
    t = 0.1 * np.arange(400)
    E = np.exp(-2.0 * t)
    E[200:] = 0.0
    fit = fit_decay_rate(E, 0.1)
    assert fit.window[1] <= 200
    assert abs(fit.nu0 - 2.0) <= 1e-10


def test_fit_errors():
    with pytest.raises(DegenerateFitError):
        fit_decay_rate(np.zeros(10), 0.1)
    with pytest.raises(DegenerateFitError):
        fit_decay_rate([1.0, 0.5], 0.1)
    with pytest.raises(DegenerateFitError):
        fit_decay_rate([0.0, 1.0, 1.0, 1.0], 0.1)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(1e-6, 1e6), nu=st.floats(0.01, 5.0), seed=st.integers(0, 10**6))
def test_fit_is_scale_invariant(scale, nu, seed):
    rng = np.random.default_rng(seed)
    t = 0.05 * np.arange(150)
    E = np.exp(-nu * t + 0.1 * rng.standard_normal(t.size))
    E[0] = max(E[0], 1e-3)
    a = fit_decay_rate(E, 0.05)
    b = fit_decay_rate(scale * E, 0.05)
    assert np.isclose(a.nu0, b.nu0, rtol=1e-9, atol=1e-12)
    assert np.isclose(a.mu0, b.mu0, rtol=1e-9)


def test_envelope_bounds_the_window():
    t = 0.1 * np.arange(300)
    E = np.exp(-0.5 * t) * (1.5 + np.cos(3 * t))
    fit = fit_decay_rate(E, 0.1)
    s, e = fit.window
    assert np.all(E[s:e] <= fit.envelope(E[0], t[s:e]) * (1 + 1e-12))


def test_telescoped_residual_detects_a_leak():
    E = np.array([1.0, 0.8, 0.6])
    zeros = np.zeros(3)
    damp = np.array([0.0, 0.2, 0.2])
    good = EnergyLedger(E, E, damp, zeros, zeros)
    assert telescoped_residual(good) <= 1e-15
    leak = EnergyLedger(E, E, np.array([0.0, 0.2, 0.1]), zeros, zeros)
    # worst pair starts at k1 = 1: 0.1 / 0.8
    assert abs(telescoped_residual(leak) - 0.125) <= 1e-12


def test_uniformity_ratio():
    assert uniformity_ratio([1.0, 2.0, 4.0]) == 0.25
    assert uniformity_ratio([1.0, 0.0, 2.0]) is None
    assert uniformity_ratio([]) is None


def test_initial_state_policies():
    m = build_model("wave", 20)
    a = initial_state(m, "random-seeded", seed=5)
    b = initial_state(m, InitialPolicy.RANDOM, seed=5)
    np.testing.assert_array_equal(a, b)
    top = initial_state(m, "highest-mode")
    Az = m.generator @ top
    ratio = np.sqrt((Az @ m.gram @ Az) / (top @ m.gram @ top))
    assert np.isclose(ratio, np.abs(np.linalg.eigvals(m.generator)).max(), rtol=1e-8)
    with pytest.raises(ValueError):
        initial_state(m, "fixed")


def test_sweep_report_on_oracle():
    rep = sweep_uniformity(oracle_2x2(), "midpoint_damped", [0.2, 0.1, 0.05], 20.0, z0=[1.0, 0.0])
    assert rep.dts == [0.2, 0.1, 0.05]
    assert np.all(rep.rates > 0)
    # continuous rate of the oracle is 1
    np.testing.assert_allclose(rep.rates, 1.0, atol=0.1)
    running = rep.running_rho()
    assert running[0] == 1.0 and running[-1] == rep.rho


def test_sweep_conservative_rate_is_zero():
    rep = sweep_uniformity(oracle_2x2(), "midpoint_conservative", [0.2, 0.1, 0.05], 5.0, z0=[1.0, 0.0])
    np.testing.assert_allclose(rep.rates, 0.0, atol=1e-12)
    assert rep.rho is None


def test_sweep_threads_match_serial():
    m = build_model("wave", 20)
    z0 = smooth_initial_state(m)
    a = sweep_uniformity(m, "viscous_damped", [0.1, 0.05, 0.02], 4.0, z0=z0)
    b = sweep_uniformity(m, "viscous_damped", [0.1, 0.05, 0.02], 4.0, z0=z0, threads=3)
    np.testing.assert_array_equal(a.rates, b.rates)


def test_sweep_input_errors():
    with pytest.raises(ValueError):
        sweep_uniformity(oracle_2x2(), "viscous_damped", [0.1, 0.1, 0.05], 1.0, z0=[1.0, 0.0])
    with pytest.raises(ValueError):
        sweep_uniformity(oracle_2x2(), "viscous_damped", [0.1, -0.1, 0.05], 1.0, z0=[1.0, 0.0])


def test_telescoped_residual_survives_deep_decay():
    # exact ledger over twelve decades of decay
    E = np.exp(-np.linspace(0.0, 28.0, 2001))
    damp = np.concatenate([[0.0], E[:-1] - E[1:]])
    zeros = np.zeros_like(E)
    assert telescoped_residual(EnergyLedger(E, E, damp, zeros, zeros)) <= 1e-12


def test_top_mode_decay_under_refinement():
    # at fixed dt the midpoint rate of the top mode collapses as n grows; the viscous one does not
    rates = {}
    for n in (50, 200):
        m = build_model("wave", n)
        for scheme in ("midpoint_damped", "viscous_damped"):
            rep = sweep_uniformity(m, scheme, [0.1, 0.05, 0.02], 20.0, "highest-mode")
            rates[scheme, n] = rep.rates[1]
    assert rates["midpoint_damped", 200] < 0.3 * rates["midpoint_damped", 50]
    assert rates["midpoint_damped", 200] < 1e-3
    assert min(rates["viscous_damped", 50], rates["viscous_damped", 200]) > 0.9
