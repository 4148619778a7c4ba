import numpy as np
import pytest
from conftest import random_model
from hypothesis import given, settings
from hypothesis import strategies as st

from viscous_midpoint.diagnostics import ledger_residuals
from viscous_midpoint.exceptions import SimulationAborted, StepBudgetExceeded
from viscous_midpoint.models import build_model, oracle_2x2, smooth_initial_state
from viscous_midpoint.schemes import (
    SchemeId,
    check_budget,
    num_steps_for,
    simulate,
    step,
    step_viscous_forced,
)


def test_scheme_flags():
    assert SchemeId("viscous_damped").damped and SchemeId("viscous_damped").viscous
    assert not SchemeId.MIDPOINT_CONSERVATIVE.damped
    assert not SchemeId.MIDPOINT_DAMPED.viscous
    with pytest.raises(ValueError):
        SchemeId("euler")


def test_oracle_conservative_steps():
    m = oracle_2x2()
    r = step(m, "midpoint_conservative", 2.0, [1.0, 0.0])
    np.testing.assert_allclose(r.z_next, [0.0, -1.0], atol=1e-15)
    r = step(m, "viscous_conservative", 2.0, [1.0, 0.0])
    np.testing.assert_allclose(r.z_tilde, [0.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(r.z_next, [0.0, -1 / 9], atol=1e-15)


def test_oracle_damped_step():
    m = oracle_2x2()
    r = step(m, "midpoint_damped", 2.0, [1.0, 0.0])
    np.testing.assert_allclose(r.z_next, [1 / 3, -2 / 3], atol=1e-15)
    np.testing.assert_allclose(r.damping_sample, [-1 / 3], atol=1e-15)


def test_oracle_ledger_values():
    traj = simulate(oracle_2x2(), "viscous_conservative", 2.0, 1, [1.0, 0.0])
    led = traj.ledger
    assert abs(led.E[1] - 1 / 162) <= 1e-15
    assert abs(led.visc3[1] - 8 / 81) <= 1e-15
    assert abs(led.visc6[1] - 32 / 81) <= 1e-15
    assert abs(led.E_tilde[1] - 0.5) <= 1e-15
    assert led.damp[1] == 0.0


def test_oracle_damped_ledger():
    led = simulate(oracle_2x2(), "midpoint_damped", 2.0, 1, [1.0, 0.0]).ledger
    assert abs(led.damp[1] - 2 / 9) <= 1e-15
    assert abs(led.E_tilde[1] - 5 / 18) <= 1e-15
    assert led.E[1] == led.E_tilde[1]
    assert led.visc3[1] == led.visc6[1] == 0.0


def test_oracle_forced_step():
    r = step_viscous_forced(oracle_2x2(), 2.0, [0.0, 0.0], [1.0])
    np.testing.assert_allclose(r.z_tilde, [1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(r.z_next, [1 / 9, 1 / 9], atol=1e-15)


def test_ledger_row_zero_and_times():
    traj = simulate(oracle_2x2(), "viscous_damped", 0.1, 5, [1.0, 0.0])
    led = traj.ledger
    assert led.E_tilde[0] == led.E[0] == 0.5
    assert led.damp[0] == led.visc3[0] == led.visc6[0] == 0.0
    assert traj.num_steps == 5 and len(led) == 6
    np.testing.assert_allclose(traj.times, 0.1 * np.arange(6))


@pytest.mark.parametrize("scheme", list(SchemeId))
def test_energy_identities_hold_for_every_scheme(scheme):
    m = build_model("wave", 30)
    traj = simulate(m, scheme, 0.02, 300, smooth_initial_state(m))
    stage, tele = ledger_residuals(traj)
    assert stage <= 1e-10
    assert tele <= 1e-10
    E = traj.ledger.E
    assert np.all(np.diff(E) <= 1e-13 * E[0])


def test_conservative_midpoint_is_exact():
    m = build_model("wave", 30, alpha=0.0)
    E = simulate(m, "midpoint_conservative", 0.05, 400, smooth_initial_state(m)).ledger.E
    assert np.max(np.abs(E - E[0])) <= 1e-12 * E[0]


def test_midpoint_is_second_order():
    # rotation: exact solution is (cos t, -sin t)
    m = oracle_2x2(with_feedback=False)
    errs = []
    for dt in (0.1, 0.05):
        traj = simulate(m, "midpoint_conservative", dt, round(1.0 / dt), [1.0, 0.0])
        errs.append(np.linalg.norm(traj.states[-1] - [np.cos(1.0), -np.sin(1.0)]))
    assert 3.8 < errs[0] / errs[1] < 4.2


def test_step_budget():
    check_budget(10, 10)
    with pytest.raises(StepBudgetExceeded):
        check_budget(11, 10)
    with pytest.raises(StepBudgetExceeded):
        simulate(oracle_2x2(), "viscous_damped", 1e-3, 2000, [1.0, 0.0], max_steps=1000)


def test_non_finite_state_aborts():
    with pytest.raises(SimulationAborted) as info:
        simulate(oracle_2x2(), "midpoint_damped", 0.1, 3, [np.inf, 0.0])
    assert info.value.step == 0
    assert info.value.dt == 0.1


def test_num_steps_for_rounds():
    assert num_steps_for(10.0, 0.01) == 1000
    assert num_steps_for(4.0, 0.1) == 40
    assert num_steps_for(1e-3, 1.0) == 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 6), dt=st.floats(0.01, 2.0),
       a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_forced_step_is_linear(seed, n, dt, a, b):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n, 2)
    w1, w2 = rng.standard_normal((2, n))
    v1, v2 = rng.standard_normal((2, 2))
    r1 = step_viscous_forced(m, dt, w1, v1)
    r2 = step_viscous_forced(m, dt, w2, v2)
    r = step_viscous_forced(m, dt, a * w1 + b * w2, a * v1 + b * v2)
    scale = 1 + np.abs(r1.z_next).max() + np.abs(r2.z_next).max()
    np.testing.assert_allclose(r.z_next, a * r1.z_next + b * r2.z_next, atol=1e-9 * scale * (1 + abs(a) + abs(b)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 6), dt=st.floats(0.01, 3.0))
def test_random_models_satisfy_the_ledger(seed, n, dt):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n)
    traj = simulate(m, "viscous_damped", dt, 5, rng.standard_normal(n))
    stage, tele = ledger_residuals(traj)
    assert stage <= 1e-9
    assert tele <= 1e-9
