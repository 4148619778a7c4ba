"""Finite-dimensional system triples (A, B, G) and the two linear solves.

A model is the triple of a generator ``A`` that is skew-adjoint in the
energy inner product ``<x, y>_G = x^T G y``, a feedback map ``B`` with
``m`` channels and the SPD Gram matrix ``G``.  The adjoint of the feedback
is ``B* = B^T G``.

Every time scheme needs two kinds of solves:

* the shifted midpoint solve ``(I - c M) x = rhs`` with ``M = A - B B*``
  (damped) or ``M = A`` (conservative);
* the viscosity solve ``(I - dt^3 A^2) x = rhs``, which is SPD in the G
  inner product and is done by Cholesky on ``G + dt^3 A^T G A``.

Factorizations are cached on the model instance, keyed by the shift.
"""
from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionMismatchError, ModelStructureError, SolverError

SKEW_TOL = 1e-10
RESIDUAL_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Immutable triple (A, B, G) plus a label.

    ``nodes`` optionally holds the coordinates of the displacement unknowns
    when the model was built from a 1-d grid; ``meta`` carries free-form
    build information (damping node, boundary closure, ...).
    """

    generator: np.ndarray
    feedback: np.ndarray
    gram: np.ndarray
    label: str = "model"
    nodes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = _frozen(self.generator)
        B = np.array(self.feedback, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        B.setflags(write=False)
        G = _frozen(self.gram)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelStructureError(f"{self.label}: generator must be square, got {A.shape}")
        n = A.shape[0]
        if n < 1:
            raise ModelStructureError(f"{self.label}: empty state space")
        if G.shape != (n, n):
            raise ModelStructureError(f"{self.label}: gram shape {G.shape} does not match generator {A.shape}")
        if B.ndim != 2 or B.shape[0] != n or B.shape[1] < 1:
            raise ModelStructureError(f"{self.label}: feedback shape {B.shape} incompatible with N={n}")
        for name, mat in (("generator", A), ("feedback", B), ("gram", G)):
            if not np.all(np.isfinite(mat)):
                raise ModelStructureError(f"{self.label}: {name} has non-finite entries")
        object.__setattr__(self, "generator", A)
        object.__setattr__(self, "feedback", B)
        object.__setattr__(self, "gram", G)
        if self.nodes is not None:
            object.__setattr__(self, "nodes", _frozen(self.nodes))
        object.__setattr__(self, "_cache", {})
        object.__setattr__(self, "_lock", threading.RLock())

    @property
    def dim_state(self) -> int:
        return self.generator.shape[0]

    @property
    def num_channels(self) -> int:
        return self.feedback.shape[1]

    @property
    def bstar(self) -> np.ndarray:
        """The m x N matrix of ``B* = B^T G``."""
        return self._cached("bstar", lambda: _frozen(self.feedback.T @ self.gram))

    @property
    def damped_generator(self) -> np.ndarray:
        """``A - B B*``."""
        return self._cached(
            "damped", lambda: _frozen(self.generator - self.feedback @ self.bstar)
        )

    def gram_cholesky(self) -> np.ndarray:
        """Lower Cholesky factor L of G (G = L L^T)."""

        def build():
            try:
                return _frozen(np.linalg.cholesky(self.gram))
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"{self.label}: gram matrix is not positive definite") from exc

        return self._cached("chol", build)

    def _cached(self, key, build):
        cache = self._cache
        if key in cache:
            return cache[key]
        with self._lock:
            if key not in cache:
                cache[key] = build()
            return cache[key]

    def with_feedback(self, feedback, label=None) -> "SystemModel":
        return SystemModel(self.generator, feedback, self.gram,
                           label=label or self.label, nodes=self.nodes, meta=dict(self.meta))


@dataclass(frozen=True)
class ValidationReport:
    skew_residual: float
    skew_scale: float
    gram_spd: bool
    gram_condition: float
    num_channels: int

    @property
    def skew_ok(self) -> bool:
        return self.skew_residual <= SKEW_TOL * self.skew_scale

    @property
    def passed(self) -> bool:
        return self.skew_ok and self.gram_spd


def validate_model(model: SystemModel) -> ValidationReport:
    """Skewness residual ``||A^T G + G A||_F`` and SPD status of G."""
    A, G = model.generator, model.gram
    GA = G @ A
    residual = float(np.linalg.norm(A.T @ G + GA, "fro"))
    scale = 1.0 + float(np.linalg.norm(GA, "fro"))
    symmetric = np.allclose(G, G.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(G).max()))
    spd = False
    cond = np.inf
    if symmetric:
        try:
            model.gram_cholesky()
            spd = True
        except SolverError:
            spd = False
        if spd:
            w = np.linalg.eigvalsh(G)
            cond = float(w[-1] / w[0])
    return ValidationReport(residual, scale, spd, cond, model.num_channels)


def _as_state(model, z, name="state"):
    z = np.asarray(z, dtype=float)
    if z.shape[0] != model.dim_state:
        raise DimensionMismatchError(
            f"{name} has length {z.shape[0]}, model {model.label} has N={model.dim_state}"
        )
    return z


def energy(model: SystemModel, z) -> float:
    """Discrete energy ``0.5 z^T G z``."""
    z = _as_state(model, z)
    if z.ndim != 1:
        raise DimensionMismatchError("energy expects a single state vector")
    return 0.5 * float(z @ (model.gram @ z))


def gnorm2(model: SystemModel, z) -> np.ndarray | float:
    """Squared G-norm of a vector, or of each column of a matrix."""
    Gz = model.gram @ z
    if np.ndim(z) == 1:
        return float(np.real(np.vdot(z, Gz)))
    return np.real(np.einsum("ij,ij->j", np.conj(z), Gz))


def apply_bstar(model: SystemModel, z) -> np.ndarray:
    """Observation ``B* z = B^T G z`` (an m-vector, or m x k for a block)."""
    z = _as_state(model, z)
    return model.bstar @ z


class _LUSolve:
    """Dense LU with one step of iterative refinement on a large residual."""

    def __init__(self, matrix, label):
        self.matrix = matrix
        try:
            with np.errstate(all="raise"), warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self.lu = sla.lu_factor(matrix, check_finite=True)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"{label}: shifted matrix could not be factorized") from exc
        diag = np.abs(np.diag(self.lu[0]))
        if diag.min() <= np.finfo(float).eps * diag.max() * matrix.shape[0]:
            raise SolverError(f"{label}: shifted matrix is numerically singular")

    def apply(self, x):
        return self.matrix @ x

    def raw(self, rhs):
        return sla.lu_solve(self.lu, rhs, check_finite=False)

    def __call__(self, rhs):
        return _refined(self, rhs)


class _ViscositySolve:
    """Solve ``(I - dt^3 A^2) x = rhs`` through ``(G + dt^3 A^T G A) x = G rhs``."""

    def __init__(self, model, dt):
        A, G = model.generator, model.gram
        self.A = A
        self.coef = dt**3
        spd = G + self.coef * (A.T @ G @ A)
        spd = 0.5 * (spd + spd.T)
        self.G = G
        try:
            self.cho = sla.cho_factor(spd, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"{model.label}: viscosity matrix is not SPD (generator not skew?)") from exc

    def apply(self, x):
        return x - self.coef * (self.A @ (self.A @ x))

    def raw(self, rhs):
        return sla.cho_solve(self.cho, self.G @ rhs, check_finite=False)

    def __call__(self, rhs):
        return _refined(self, rhs)


def _refined(solver, rhs):
    rhs = np.asarray(rhs, dtype=float)
    x = solver.raw(rhs)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(x)
    r = rhs - solver.apply(x)
    if np.linalg.norm(r) > RESIDUAL_TOL * bnorm:
        x = x + solver.raw(r)
    return x


def shifted_solver(model: SystemModel, c: float, with_damping: bool):
    """Cached solver for ``I - c M``."""
    c = float(c)
    if not c > 0.0:
        raise ValueError(f"shift coefficient must be positive, got {c}")

    def build():
        M = model.damped_generator if with_damping else model.generator
        return _LUSolve(np.eye(model.dim_state) - c * M, model.label)

    return model._cached(("shifted", c, bool(with_damping)), build)


def viscosity_solver(model: SystemModel, dt: float):
    """Cached solver for ``I - dt^3 A^2``."""
    dt = float(dt)
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    return model._cached(("viscosity", dt), lambda: _ViscositySolve(model, dt))


def solve_shifted(model: SystemModel, c: float, rhs, with_damping: bool) -> np.ndarray:
    """Solve ``(I - c(A - B B*)) x = rhs`` or ``(I - c A) x = rhs``."""
    rhs = _as_state(model, rhs, "rhs")
    return shifted_solver(model, c, with_damping)(rhs)


def solve_viscosity(model: SystemModel, dt: float, rhs) -> np.ndarray:
    """Solve ``(I - dt^3 A^2) x = rhs``."""
    rhs = _as_state(model, rhs, "rhs")
    return viscosity_solver(model, dt)(rhs)
