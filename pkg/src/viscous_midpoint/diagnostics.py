"""Energy-identity residuals, exponential envelope fits and dt sweeps."""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateFitError, SimulationAborted
from .operator_core import SystemModel
from .schemes import SchemeId, Trajectory, num_steps_for, simulate

TRIM_FRACTION = 0.1
FLOOR_FACTOR = 1e2 * np.finfo(float).eps
CONSTANT_TOL = 1e-12  # spread of log E treated as round-off


def ledger_residuals(traj: Trajectory) -> tuple[float, float]:
    """(max stage residual, max telescoped residual) of a trajectory's ledger.

    The telescoped residual is ``|E_k2 + sum_{k1<j<=k2}(damp+visc3+visc6) - E_k1| / E_k1``
    maximized over all pairs ``k1 < k2``; 0/0 counts as 0.
    """
    led = traj.ledger
    if len(led) == 0:
        raise ValueError("empty trajectory")
    stage = float(led.stage_residuals().max())
    return stage, telescoped_residual(led)


def telescoped_residual(ledger) -> float:
    E = ledger.E
    if E.size < 2:
        return 0.0
    # per-step defects are formed locally; differencing E + cumsum(flux) directly
    # would cost eps * E_0 of absolute accuracy once E has decayed
    flux = (ledger.damp + ledger.visc3 + ledger.visc6)[1:]
    defect = (E[1:] - E[:-1]) + flux
    R = np.concatenate([[0.0], np.cumsum(defect)])
    # max over k2 > k1 of |R[k2] - R[k1]| via suffix extrema
    suf_max = np.maximum.accumulate(R[::-1])[::-1][1:]
    suf_min = np.minimum.accumulate(R[::-1])[::-1][1:]
    dev = np.maximum(suf_max - R[:-1], R[:-1] - suf_min)
    base = E[:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(base > 0.0, dev / np.where(base > 0.0, base, 1.0), dev)
    return float(rel.max())


@dataclass(frozen=True)
class DecayFit:
    mu0: float
    nu0: float
    r_squared: float
    window: tuple[int, int]  # half-open index range [start, stop)

    def envelope(self, e0, t):
        return self.mu0 * e0 * np.exp(-self.nu0 * np.asarray(t))


def fit_decay_rate(energies, dt: float, *, trim_fraction: float = TRIM_FRACTION,
                   min_samples: int = 3) -> DecayFit:
    """Least-squares fit of ``log E_k`` against ``k dt``.

    The first ``trim_fraction`` of the samples is dropped; the window ends at
    the first energy below ``1e2 eps E_0``.  ``nu0`` is minus the slope.
    ``mu0`` is the smallest amplitude >= 1 for which the fitted rate bounds
    every sample in the window, which equals ``exp(intercept)/E_0`` when the
    data are exactly log-linear.
    """
    E = np.asarray(energies, dtype=float)
    if E.size == 0 or not np.any(E > 0):
        raise DegenerateFitError("all energies are zero")
    E0 = E[0]
    if not E0 > 0:
        raise DegenerateFitError("initial energy must be positive")
    start = int(trim_fraction * E.size)
    below = np.nonzero(E[start:] <= FLOOR_FACTOR * E0)[0]
    stop = start + (below[0] if below.size else E.size - start)
    if stop - start < min_samples:
        raise DegenerateFitError(
            f"only {stop - start} usable samples after trimming (need {min_samples})"
        )
    t = dt * np.arange(start, stop)
    y = np.log(E[start:stop])
    tc = t - t.mean()
    yc = y - y.mean()
    if np.ptp(y) <= CONSTANT_TOL:
        yc = np.zeros_like(yc)
    slope = float(tc @ yc / (tc @ tc))
    intercept = float(y.mean() - slope * t.mean())
    ss_res = float(np.sum((yc - slope * tc) ** 2))
    ss_tot = float(yc @ yc)
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    nu0 = -slope
    lift = float(np.max(y + nu0 * t)) - np.log(E0)
    mu0 = max(1.0, float(np.exp(intercept) / E0), float(np.exp(lift)))
    return DecayFit(mu0, nu0 + 0.0, r2, (start, stop))


class InitialPolicy(str, enum.Enum):
    FIXED = "fixed"
    HIGHEST_MODE = "highest-mode"
    RANDOM = "random-seeded"


def initial_state(model: SystemModel, policy, z0=None, seed=None) -> np.ndarray:
    """Initial datum for a sweep: a caller vector, the top mode, or seeded noise."""
    policy = InitialPolicy(policy)
    if policy is InitialPolicy.FIXED:
        if z0 is None:
            raise ValueError("fixed initial policy needs an explicit vector")
        return np.asarray(z0, dtype=float)
    if policy is InitialPolicy.HIGHEST_MODE:
        from .spectral import decompose

        dec = decompose(model)
        # first hit is the cosine-like member of the top pair
        j = int(np.argmax(np.abs(dec.frequencies)))
        return np.array(dec.modes[:, j])
    rng = np.random.default_rng(seed)
    return rng.standard_normal(model.dim_state)


@dataclass(frozen=True)
class SweepMember:
    dt: float
    fit: DecayFit
    energies: np.ndarray


@dataclass(frozen=True)
class SweepReport:
    scheme: SchemeId
    members: list[SweepMember] = field(default_factory=list)

    @property
    def dts(self) -> list[float]:
        return [m.dt for m in self.members]

    @property
    def rates(self) -> np.ndarray:
        return np.array([m.fit.nu0 for m in self.members])

    @property
    def rho(self) -> float | None:
        """``min nu / max nu``; None when some rate is not positive."""
        return uniformity_ratio(self.rates)

    def running_rho(self) -> list[float | None]:
        r = self.rates
        return [uniformity_ratio(r[: i + 1]) for i in range(r.size)]


def uniformity_ratio(rates) -> float | None:
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0 or not np.all(rates > 0):
        return None
    return float(rates.min() / rates.max())


def sweep_uniformity(model: SystemModel, scheme, dt_list, T_final: float, z0_policy="fixed", *,
                     z0=None, seed=None, threads: int = 1, min_samples: int = 10,
                     max_steps: int | None = None) -> SweepReport:
    """Simulate to ``T_final`` for each dt, fit decay rates and the uniformity ratio."""
    scheme = SchemeId(scheme)
    dts = [float(d) for d in dt_list]
    if len(set(dts)) < 3:
        raise ValueError("dt_list needs at least 3 distinct values")
    if any(d <= 0 for d in dts):
        raise ValueError("time steps must be positive")
    start = initial_state(model, z0_policy, z0=z0, seed=seed)

    def run(dt):
        try:
            traj = simulate(model, scheme, dt, num_steps_for(T_final, dt), start, max_steps=max_steps)
        except SimulationAborted as exc:
            raise SimulationAborted(f"dt={dt:g}: {exc}", step=exc.step, dt=dt) from exc
        E = traj.ledger.E
        if E[0] == 0.0:
            fit = DecayFit(1.0, 0.0, 1.0, (0, E.size))
        else:
            fit = fit_decay_rate(E, dt, min_samples=min_samples)
        return SweepMember(dt, fit, E)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(run, dts))
    else:
        members = [run(dt) for dt in dts]
    return SweepReport(scheme, members)
