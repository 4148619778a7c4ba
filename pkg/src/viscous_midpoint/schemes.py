"""One-step integrators, the forced viscous scheme and the trajectory driver.

All schemes share the midpoint stage

    (I - dt/2 M) z~ = (I + dt/2 M) z,     M = A - B B*  or  M = A,

and the viscous variants follow it with ``(I - dt^3 A^2) z_next = z~``.

Ledger indexing: entries are stored by arrival index, so for ``k >= 1``

    E_tilde[k] = E[k-1] - damp[k]
    E[k] + visc3[k] + visc6[k] = E_tilde[k]

with ``damp[k] = dt |B*((z^{k-1} + z~^k)/2)|^2``.  Row 0 holds
``E_tilde[0] = E[0]`` and zeros elsewhere.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import SimulationAborted, StepBudgetExceeded
from .operator_core import SystemModel, _as_state, gnorm2, shifted_solver, viscosity_solver

DEFAULT_STEP_BUDGET = 10**6


class SchemeId(str, enum.Enum):
    MIDPOINT_DAMPED = "midpoint_damped"
    VISCOUS_DAMPED = "viscous_damped"
    MIDPOINT_CONSERVATIVE = "midpoint_conservative"
    VISCOUS_CONSERVATIVE = "viscous_conservative"

    @property
    def damped(self) -> bool:
        return self in (SchemeId.MIDPOINT_DAMPED, SchemeId.VISCOUS_DAMPED)

    @property
    def viscous(self) -> bool:
        return self in (SchemeId.VISCOUS_DAMPED, SchemeId.VISCOUS_CONSERVATIVE)


@dataclass(frozen=True)
class StepResult:
    z_tilde: np.ndarray
    z_next: np.ndarray
    damping_sample: np.ndarray


@dataclass(frozen=True)
class EnergyLedger:
    E: np.ndarray
    E_tilde: np.ndarray
    damp: np.ndarray
    visc3: np.ndarray
    visc6: np.ndarray

    def __len__(self):
        return len(self.E)

    def stage_residuals(self) -> np.ndarray:
        """Per-row relative residual of the two stage identities (row 0 is 0)."""
        res = np.zeros(len(self.E))
        if len(self.E) < 2:
            return res
        prev = self.E[:-1]
        r1 = np.abs(self.E_tilde[1:] - (prev - self.damp[1:]))
        r2 = np.abs(self.E[1:] + self.visc3[1:] + self.visc6[1:] - self.E_tilde[1:])
        num = np.maximum(r1, r2)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(prev > 0.0, num / np.where(prev > 0.0, prev, 1.0), num)
        res[1:] = rel
        return res


@dataclass(frozen=True)
class Trajectory:
    dt: float
    scheme: SchemeId
    states: np.ndarray
    ledger: EnergyLedger
    model_label: str = ""

    @property
    def num_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.shape[0])


class Stepper:
    """Pre-factorized one-step map for a fixed (model, scheme, dt)."""

    def __init__(self, model: SystemModel, scheme, dt: float):
        self.model = model
        self.scheme = SchemeId(scheme)
        self.dt = float(dt)
        if not self.dt > 0.0:
            raise ValueError(f"time step must be positive, got {dt}")
        M = model.damped_generator if self.scheme.damped else model.generator
        self._explicit = np.eye(model.dim_state) + 0.5 * self.dt * M
        self._implicit = shifted_solver(model, 0.5 * self.dt, self.scheme.damped)
        self._visc = viscosity_solver(model, self.dt) if self.scheme.viscous else None

    def midpoint(self, z, forcing=None):
        rhs = self._explicit @ z
        if forcing is not None:
            rhs = rhs + forcing
        return self._implicit(rhs)

    def step(self, z) -> StepResult:
        z = np.asarray(z, dtype=float)
        zt = self.midpoint(z)
        zn = self._visc(zt) if self._visc is not None else zt
        sample = self.model.bstar @ (0.5 * (z + zt))
        return StepResult(zt, zn, sample)


class ForcedStepper:
    """Viscous conservative step driven through ``dt * B v``."""

    def __init__(self, model: SystemModel, dt: float):
        self.model = model
        self.dt = float(dt)
        self._inner = Stepper(model, SchemeId.VISCOUS_CONSERVATIVE, dt)

    def step(self, w, v) -> StepResult:
        w = np.asarray(w, dtype=float)
        v = np.asarray(v, dtype=float)
        forcing = self.dt * (self.model.feedback @ v)
        wt = self._inner.midpoint(w, forcing)
        wn = self._inner._visc(wt)
        sample = self.model.bstar @ (0.5 * (w + wt))
        return StepResult(wt, wn, sample)


def step(model: SystemModel, scheme, dt: float, z) -> StepResult:
    z = _as_state(model, z)
    return Stepper(model, scheme, dt).step(z)


def step_viscous_forced(model: SystemModel, dt: float, w, v) -> StepResult:
    """One step of the forced viscous scheme ``w^{k+1} = L w^k + dt R B v^k``."""
    w = _as_state(model, w)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape[0] != model.num_channels:
        raise ValueError(f"forcing has {v.shape[0]} channels, model has {model.num_channels}")
    return ForcedStepper(model, dt).step(w, v)


def check_budget(num_steps, max_steps):
    budget = DEFAULT_STEP_BUDGET if max_steps is None else int(max_steps)
    if num_steps > budget:
        raise StepBudgetExceeded(f"{num_steps} steps requested, budget is {budget}")


def simulate(model: SystemModel, scheme, dt: float, num_steps: int, z0,
             max_steps: int | None = None) -> Trajectory:
    """Run ``num_steps`` steps from ``z0`` and record the energy ledger."""
    scheme = SchemeId(scheme)
    num_steps = int(num_steps)
    if num_steps < 1:
        raise ValueError("num_steps must be at least 1")
    check_budget(num_steps, max_steps)
    z = _as_state(model, z0).copy()
    if not np.all(np.isfinite(z)):
        raise SimulationAborted(f"{model.label}: initial state is not finite", step=0, dt=float(dt))
    stepper = Stepper(model, scheme, dt)
    dt = stepper.dt
    A = model.generator

    K = num_steps
    states = np.empty((K + 1, model.dim_state))
    E = np.zeros(K + 1)
    E_tilde = np.zeros(K + 1)
    damp = np.zeros(K + 1)
    visc3 = np.zeros(K + 1)
    visc6 = np.zeros(K + 1)
    states[0] = z
    E[0] = E_tilde[0] = 0.5 * gnorm2(model, z)

    with np.errstate(over="raise", invalid="raise"):
        for k in range(1, K + 1):
            try:
                res = stepper.step(z)
                zn = res.z_next
                if not np.all(np.isfinite(zn)):
                    raise FloatingPointError("non-finite state")
                E_tilde[k] = 0.5 * gnorm2(model, res.z_tilde)
                E[k] = 0.5 * gnorm2(model, zn)
                if scheme.damped:
                    damp[k] = dt * float(res.damping_sample @ res.damping_sample)
                if scheme.viscous:
                    Az = A @ zn
                    visc3[k] = dt**3 * gnorm2(model, Az)
                    visc6[k] = 0.5 * dt**6 * gnorm2(model, A @ Az)
            except FloatingPointError as exc:
                raise SimulationAborted(
                    f"{model.label}: {scheme.value} dt={dt:g} produced a non-finite state at step {k}",
                    step=k, dt=dt,
                ) from exc
            states[k] = zn
            z = zn

    ledger = EnergyLedger(E, E_tilde, damp, visc3, visc6)
    return Trajectory(dt, scheme, states, ledger, model.label)


def num_steps_for(T: float, dt: float) -> int:
    """Number of steps covering ``[0, T]`` (rounded to the nearest integer)."""
    return max(1, int(round(T / dt)))
