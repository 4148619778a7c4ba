"""Numerical certificates: Hautus scan, transfer-function bound, graph-norm
constant of B*, observability Gramians, the forced-response bound and the
continuous decay rate.

All quadratic forms live in the G inner product.  Gramians are assembled by
propagating a whole basis (as the columns of one matrix) through the scheme,
so every column shares the cached factorizations.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .exceptions import SolverError, StepBudgetExceeded
from .operator_core import SystemModel
from .schemes import DEFAULT_STEP_BUDGET, ForcedStepper, SchemeId, Stepper
from .spectral import decompose

POINTS_PER_UNIT = 8


# --------------------------------------------------------------------------- Hautus


@dataclass(frozen=True)
class HautusScanReport:
    omega_grid: np.ndarray
    kappa: np.ndarray

    @property
    def kappa_min(self) -> float:
        return float(self.kappa.min())

    @property
    def argmin(self) -> float:
        return float(self.omega_grid[int(np.argmin(self.kappa))])

    @property
    def positive(self) -> bool:
        return self.kappa_min > 0.0

    @property
    def resolvent_constant(self) -> float:
        """Common value of (M, m) = 1/sqrt(kappa_min) valid on the grid."""
        return float(1.0 / np.sqrt(self.kappa_min)) if self.positive else np.inf


def hautus_grid(model: SystemModel, omega_min=None, omega_max=None, num_points=None,
                margin: float = 1.0, include_eigenfrequencies: bool = True) -> np.ndarray:
    """Sorted scan grid, by default covering the spectrum at 8 points per unit."""
    dec = decompose(model)
    top = dec.max_frequency + margin
    lo = -top if omega_min is None else float(omega_min)
    hi = top if omega_max is None else float(omega_max)
    if num_points is None:
        num_points = max(3, int(np.ceil((hi - lo) * POINTS_PER_UNIT)) + 1)
    if num_points < 3:
        raise ValueError("the scan grid needs at least 3 points")
    grid = np.linspace(lo, hi, int(num_points))
    if include_eigenfrequencies:
        f = dec.frequencies
        grid = np.concatenate([grid, f[(f >= lo) & (f <= hi)]])
    return np.unique(grid)


def hautus_scan(model: SystemModel, omega_min=None, omega_max=None, num_points=None, *,
                omega_grid=None, include_eigenfrequencies: bool = True) -> HautusScanReport:
    """``kappa(w) = min_{|y|_G=1} |(iw - A) y|_G^2 + |B* y|^2`` on a frequency grid.

    In the complex eigenbasis of A the form is ``diag((w - mu_j)^2) + U U^H``
    with ``U = (B* Phi)^H``, a rank-m update of a diagonal; for one channel the
    smallest eigenvalue is the root of the secular equation.
    """
    if omega_grid is None:
        omega_grid = hautus_grid(model, omega_min, omega_max, num_points,
                                 include_eigenfrequencies=include_eigenfrequencies)
    grid = np.sort(np.asarray(omega_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty frequency grid")
    dec = decompose(model)
    U = (model.bstar @ dec.complex_modes).conj().T  # N x m
    mu = dec.frequencies
    if model.num_channels == 1:
        w2 = np.abs(U[:, 0]) ** 2
        kappa = np.array([_secular_min((om - mu) ** 2, w2) for om in grid])
    else:
        UUh = U @ U.conj().T
        kappa = np.array([
            sla.eigh(np.diag((om - mu) ** 2) + UUh, eigvals_only=True, subset_by_index=[0, 0])[0]
            for om in grid
        ])
    return HautusScanReport(grid, np.maximum(kappa, 0.0))


def _secular_min(d, w2):
    """Smallest eigenvalue of ``diag(d) + u u^H`` with ``|u_j|^2 = w2``.

    Equal diagonal entries merge into one weighted entry (the others of the
    group stay eigenvalues); entries with negligible weight deflate.  The
    smallest live eigenvalue is the root of
    ``1 - w_1/tau + sum_{j>1} w_j/(d_j - d_1 - tau)`` on ``(0, d_2 - d_1)``.
    """
    order = np.argsort(d, kind="stable")
    d, w2 = d[order], w2[order]
    scale = max(float(d[-1]), float(w2.sum()), np.finfo(float).tiny)
    starts = np.concatenate([[0], np.nonzero(np.diff(d) > 1e-14 * scale)[0] + 1])
    gd = d[starts]
    gw = np.add.reduceat(w2, starts)
    counts = np.diff(np.append(starts, d.size))
    dead = gw <= 1e-18 * scale
    candidates = []
    fixed = (counts > 1) | dead
    if fixed.any():
        candidates.append(float(gd[fixed].min()))
    ld, lw = gd[~dead], gw[~dead]
    if ld.size == 1:
        candidates.append(float(ld[0] + lw[0]))
    elif ld.size > 1:
        gaps = ld[1:] - ld[0]

        def secular(tau):
            with np.errstate(over="ignore", divide="ignore"):
                return 1.0 - lw[0] / tau + np.sum(lw[1:] / (gaps - tau))

        lo = np.finfo(float).tiny
        hi = gaps[0] * (1.0 - 1e-15)
        if secular(hi) <= 0.0:
            tau = hi
        else:
            tau = brentq(secular, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        candidates.append(float(ld[0] + tau))
    return min(candidates)


def kappa_dense(model: SystemModel, omega: float) -> float:
    """Reference value of kappa(w) from the SVD of ``[iw - S; B* L^{-T}]``."""
    L = model.gram_cholesky()
    S = sla.solve_triangular(L, (L.T @ model.generator).T, lower=True).T
    C = model.feedback.T @ L  # B* L^{-T} = B^T G L^{-T} = B^T L
    stacked = np.vstack([1j * omega * np.eye(model.dim_state) - S, C.astype(complex)])
    return float(np.linalg.svd(stacked, compute_uv=False)[-1] ** 2)


# --------------------------------------------------------------------------- transfer function


@dataclass(frozen=True)
class TransferScanReport:
    beta: float
    omega_grid: np.ndarray
    norms: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.norms.max())

    @property
    def argmax(self) -> float:
        return float(self.omega_grid[int(np.argmax(self.norms))])


def transfer_function(model: SystemModel, lam: complex) -> np.ndarray:
    """``H(lam) = B* (lam I - A)^{-1} B`` by m complex solves."""
    N = model.dim_state
    try:
        X = sla.solve(lam * np.eye(N) - model.generator, model.feedback.astype(complex))
    except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        raise SolverError(f"{model.label}: lambda={lam} is in the spectrum") from exc
    return model.bstar @ X


def _schur_form(model):
    def build():
        T, Z = sla.schur(model.generator.astype(complex), output="complex")
        return T, Z, Z.conj().T @ model.feedback, model.bstar @ Z

    return model._cached("schur", build)


def transfer_norm_scan(model: SystemModel, beta: float, omega_grid) -> TransferScanReport:
    """Operator norm of ``H(beta + i w)`` along the vertical line ``Re lambda = beta``.

    ``A = Z T Z^H`` is reduced once; each grid point then costs m triangular
    solves with ``lam I - T``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    grid = np.asarray(omega_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty frequency grid")
    T, _, ZhB, BsZ = _schur_form(model)
    eye = np.eye(model.dim_state)
    norms = np.empty(grid.size)
    for i, w in enumerate(grid):
        shifted = (beta + 1j * w) * eye - T
        diag = np.abs(np.diag(shifted))
        if diag.min() == 0.0:
            raise SolverError(f"{model.label}: lambda={beta}+{w}i is in the spectrum")
        X = sla.solve_triangular(shifted, ZhB, lower=False, check_finite=False)
        norms[i] = np.linalg.norm(BsZ @ X, 2)
    return TransferScanReport(float(beta), grid, norms)


# --------------------------------------------------------------------------- graph norm


def bstar_graph_bound(model: SystemModel) -> float:
    """Smallest C_B with ``|B* z|^2 <= C_B^2 (|A z|_G^2 + |z|_G^2)``."""
    A, G = model.generator, model.gram
    Bs = model.bstar
    num = Bs.T @ Bs
    den = A.T @ G @ A + G
    den = 0.5 * (den + den.T)
    top = sla.eigh(num, den, eigvals_only=True)[-1]
    return float(np.sqrt(max(top, 0.0)))


# --------------------------------------------------------------------------- decay rate


def continuous_decay_rate(model: SystemModel) -> float:
    """Energy decay rate ``-2 max Re sigma(A - B B*)`` of the continuous-time model."""
    ev = np.linalg.eigvals(model.damped_generator)
    return float(-2.0 * ev.real.max()) + 0.0


# --------------------------------------------------------------------------- observability


class GramianVariant(str, enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE_VISCOUS = "discrete_viscous"
    FILTERED = "filtered"


@dataclass(frozen=True)
class ObservabilityReport:
    variant: GramianVariant
    dt: float
    T: float
    lambda_min: float
    lambda_max: float
    term_b: float
    term_a1: float
    term_a2: float
    dim: int

    @property
    def observable(self) -> bool:
        return self.lambda_min > 0.0


def sample_count(T: float, dt: float) -> int:
    """Largest K with ``K dt <= T`` (samples k = 0..K)."""
    return int(np.floor(T / dt + 1e-9))


def observability_gramian(model: SystemModel, variant, dt: float, T: float, delta=None, *,
                          max_steps: int | None = None) -> ObservabilityReport:
    """Extremal G-eigenvalues of the observation form over ``[0, T]``.

    * ``continuous``: ``dt sum_{k<K} |B*(y^k + y^{k+1})/2|^2`` along the
      conservative midpoint flow, a quadrature of ``int_0^T |B* y|^2`` at the
      fine step ``dt``.
    * ``discrete_viscous``: ``dt sum_{k<=K} (|B* u^k|^2 + dt^2 |A u^{k+1}|_G^2
      + dt^5 |A^2 u^{k+1}|_G^2)`` along the viscous conservative scheme.
    * ``filtered``: ``dt sum_{k<=K} |B*(y^k + y^{k+1})/2|^2`` on the span of
      modes with ``|mu| <= delta/dt``, along the conservative midpoint scheme.

    ``term_*`` give the split of ``lambda_min`` at its eigenvector.
    """
    variant = GramianVariant(variant)
    dt = float(dt)
    T = float(T)
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    K = sample_count(T, dt)
    if variant is not GramianVariant.CONTINUOUS and K < 2:
        raise ValueError("discrete Gramians need T/dt >= 2")
    budget = DEFAULT_STEP_BUDGET if max_steps is None else int(max_steps)
    if K + 1 > budget:
        raise StepBudgetExceeded(f"{K + 1} steps requested, budget is {budget}")

    Bs = model.bstar
    A = model.generator
    G = model.gram

    if variant is GramianVariant.FILTERED:
        if delta is None or not delta > 0:
            raise ValueError("the filtered Gramian needs a positive delta")
        basis = decompose(model).filtered_basis(float(delta) / dt)
        if basis.shape[1] == 0:
            raise ValueError(f"no modes with |mu| <= {delta / dt:g}")
    else:
        basis = np.eye(model.dim_state)

    r = basis.shape[1]
    Wb = np.zeros((r, r))
    Wa1 = np.zeros((r, r))
    Wa2 = np.zeros((r, r))
    Y = basis.copy()

    if variant is GramianVariant.DISCRETE_VISCOUS:
        stepper = Stepper(model, SchemeId.VISCOUS_CONSERVATIVE, dt)
        for k in range(K + 1):
            obs = Bs @ Y
            Wb += obs.T @ obs
            Yn = stepper._visc(stepper.midpoint(Y))
            AY = A @ Yn
            Wa1 += AY.T @ G @ AY
            AAY = A @ AY
            Wa2 += AAY.T @ G @ AAY
            Y = Yn
        Wb *= dt
        Wa1 *= dt**3
        Wa2 *= dt**6
    else:
        stepper = Stepper(model, SchemeId.MIDPOINT_CONSERVATIVE, dt)
        n_samples = K if variant is GramianVariant.CONTINUOUS else K + 1
        for _ in range(n_samples):
            Yn = stepper.midpoint(Y)
            obs = Bs @ (0.5 * (Y + Yn))
            Wb += obs.T @ obs
            Y = Yn
        Wb *= dt

    W = Wb + Wa1 + Wa2
    W = 0.5 * (W + W.T)
    metric = basis.T @ G @ basis
    metric = 0.5 * (metric + metric.T)
    lam, vec = sla.eigh(W, metric)
    v = vec[:, 0]
    parts = [float(v @ M @ v) for M in (Wb, Wa1, Wa2)]
    return ObservabilityReport(variant, dt, T, float(lam[0]), float(lam[-1]), *parts, dim=r)


# --------------------------------------------------------------------------- forced bound


@dataclass(frozen=True)
class ForcedBoundReport:
    dt: float
    T: float
    worst_ratio: float
    samples: int
    ratios: np.ndarray


def forced_response(model: SystemModel, dt: float, forcing) -> tuple[float, float]:
    """(LHS, RHS) of the admissibility estimate for forcing ``v`` of shape (K+1, m) or (K+1, m, s).

    LHS = ``dt sum_k |B*((w^k + w~^{k+1})/2)|^2`` from ``w^0 = 0``,
    RHS = ``dt sum_k |v^k|^2``.  A trailing axis runs several forcings at once.
    """
    V = np.asarray(forcing, dtype=float)
    single = V.ndim == 2
    if single:
        V = V[:, :, None]
    if V.ndim != 3 or V.shape[1] != model.num_channels:
        raise ValueError(f"forcing must have shape (steps, {model.num_channels}[, samples])")
    stepper = ForcedStepper(model, dt)
    inner = stepper._inner
    Bfb = model.feedback
    Bs = model.bstar
    W = np.zeros((model.dim_state, V.shape[2]))
    lhs = np.zeros(V.shape[2])
    for k in range(V.shape[0]):
        Wt = inner.midpoint(W, stepper.dt * (Bfb @ V[k]))
        obs = Bs @ (0.5 * (W + Wt))
        lhs += np.sum(obs * obs, axis=0)
        W = inner._visc(Wt)
    lhs *= stepper.dt
    rhs = stepper.dt * np.sum(V * V, axis=(0, 1))
    if single:
        return float(lhs[0]), float(rhs[0])
    return lhs, rhs


def forced_response_ratio(model: SystemModel, dt: float, forcing) -> float:
    """LHS/RHS for one forcing sequence; the zero forcing reports 0."""
    lhs, rhs = forced_response(model, dt, forcing)
    return 0.0 if rhs == 0.0 else lhs / rhs


def forcing_samples(num_samples: int, steps: int, channels: int, seed=None) -> np.ndarray:
    """Unit-norm forcings (sum_k |v^k|^2 = 1): single impulses first, then dense Gaussian.

    Impulses sit at k = 0 and at evenly spaced later times; returns (steps, m, s).
    """
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    rng = np.random.default_rng(seed)
    n_imp = max(1, num_samples // 2)
    V = np.zeros((steps, channels, num_samples))
    times = np.linspace(0, steps - 1, n_imp).round().astype(int)
    for i, k in enumerate(times):
        V[k, i % channels, i] = 1.0
    dense = rng.standard_normal((steps, channels, num_samples - n_imp))
    V[:, :, n_imp:] = dense / np.sqrt(np.sum(dense**2, axis=(0, 1)))
    return V


def forced_bound_ratio(model: SystemModel, dt: float, T: float, num_samples: int, seed=None, *,
                       forcings=None) -> ForcedBoundReport:
    """Worst LHS/RHS of the admissibility estimate over sampled forcings on ``[0, T]``."""
    steps = sample_count(T, dt) + 1
    if forcings is None:
        V = forcing_samples(num_samples, steps, model.num_channels, seed)
    else:
        V = np.asarray(forcings, dtype=float)
        if V.ndim == 2:
            V = V[:, :, None]
    norms = np.sum(V * V, axis=(0, 1))
    if np.any(norms == 0.0):
        raise ValueError("zero-norm forcing sample")
    lhs, rhs = forced_response(model, dt, V)
    ratios = np.asarray(lhs) / np.asarray(rhs)
    return ForcedBoundReport(float(dt), float(T), float(ratios.max()), V.shape[2], ratios)
