"""Finite-difference models: 1-d wave and Euler-Bernoulli beam with a point damper.

Grid: ``x_j = j h`` for ``j = 1..n`` (``h = 1/n``); the Dirichlet node
``x_0 = 0`` is eliminated.  With the forward difference ``(D u)_j = u_j -
u_{j-1}``, the stiffness ``K = D^T D / h`` gives ``u^T K u = sum h u_x^2``
exactly, and the lumped mass ``M = h diag(1, ..., 1, 1/2)`` carries the
trapezoid weight at the Neumann node ``x_n = 1``.  The discrete Laplacian
``Lap = -M^{-1} K`` is then the usual 3-point stencil with the ghost-point
closure ``u_{n+1} = u_{n-1}``.

Wave:  A = [[0, I], [Lap, 0]],   G = diag(K, M).
Beam:  A = [[0, I], [-Lap^2, 0]], G = diag(K M^{-1} K, M).

The beam boundary conditions u = u_xx = 0 at 0 and u_x = u_xxx = 0 at 1 are
closed by odd reflection at 0 and even reflection at 1, which makes the
5-point fourth difference equal to ``Lap^2`` row by row.  In both cases
``G A = [[0, S], [-S, 0]]`` with ``S`` symmetric, so ``A^T G + G A = 0`` up to
rounding.

The damper at ``xi = p/q`` sits on node ``j = n p / q``; the Dirac mass is
``e_j / h`` so ``B = sqrt(alpha) e_j / h`` in the velocity block and
``B* z = sqrt(alpha) v_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exceptions import GridAlignmentError, ModelBuildError, StabilizabilityError, StencilSizeError
from .operator_core import SystemModel


@dataclass(frozen=True)
class WaveModelSpec:
    n: int
    xi_p: int = 1
    xi_q: int = 2
    alpha: float = 1.0
    allow_even_p: bool = False

    @classmethod
    def from_xi(cls, n, xi, alpha=1.0, **kw):
        p, q = parse_xi(xi)
        return cls(int(n), p, q, float(alpha), **kw)

    @property
    def xi(self) -> Fraction:
        return Fraction(self.xi_p, self.xi_q)

    def damping_node(self) -> int:
        """1-based grid index of the damper."""
        return self.n * self.xi_p // self.xi_q

    def check(self, min_n=1):
        if self.n < min_n:
            raise StencilSizeError(f"n={self.n} is too small (need n >= {min_n})")
        if self.xi_q <= 0 or not 0 < self.xi_p < self.xi_q:
            raise ModelBuildError(f"xi = {self.xi_p}/{self.xi_q} must lie in (0, 1)")
        if math.gcd(self.xi_p, self.xi_q) != 1:
            raise ModelBuildError(f"xi = {self.xi_p}/{self.xi_q} is not a reduced fraction")
        if not self.alpha >= 0.0 or not math.isfinite(self.alpha):
            raise ModelBuildError(f"alpha must be a finite non-negative number, got {self.alpha}")
        if self.n % self.xi_q != 0:
            raise GridAlignmentError(
                f"damping point {self.xi_p}/{self.xi_q} is off-grid: {self.xi_q} does not divide n={self.n}"
            )
        if self.xi_p % 2 == 0 and not self.allow_even_p:
            raise StabilizabilityError(
                f"xi = {self.xi_p}/{self.xi_q} has even numerator; pass allow_even_p=True to build anyway"
            )


class BeamModelSpec(WaveModelSpec):
    pass


def parse_xi(xi) -> tuple[int, int]:
    """Parse ``"p/q"`` (or a Fraction) into a reduced pair, rejecting non-reduced input."""
    if isinstance(xi, Fraction):
        return xi.numerator, xi.denominator
    text = str(xi).strip()
    if "/" not in text:
        raise ModelBuildError(f"xi must be written as p/q, got {text!r}")
    p_s, q_s = text.split("/", 1)
    try:
        p, q = int(p_s), int(q_s)
    except ValueError as exc:
        raise ModelBuildError(f"cannot parse xi={text!r}") from exc
    if q <= 0 or math.gcd(p, q) != 1:
        raise ModelBuildError(f"xi={text!r} is not a reduced fraction")
    return p, q


def _stiffness_and_mass(n):
    h = 1.0 / n
    D = np.eye(n) - np.eye(n, k=-1)
    K = (D.T @ D) / h
    m = np.full(n, h)
    m[-1] = 0.5 * h
    return h, K, m


def _feedback(spec, n, h):
    B = np.zeros((2 * n, 1))
    j = spec.damping_node()
    B[n + j - 1, 0] = math.sqrt(spec.alpha) / h
    return B, j


def _assemble(kind, spec, K_u, Lap_op, m, h, closure):
    n = spec.n
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = Lap_op
    G = np.zeros((2 * n, 2 * n))
    G[:n, :n] = K_u
    G[n:, n:] = np.diag(m)
    B, j = _feedback(spec, n, h)
    label = f"{kind}(n={n},xi={spec.xi_p}/{spec.xi_q},alpha={spec.alpha:g})"
    meta = {
        "kind": kind,
        "n": n,
        "h": h,
        "xi": f"{spec.xi_p}/{spec.xi_q}",
        "alpha": spec.alpha,
        "damping_node": j,
        "damping_x": j * h,
        "damping_index": n + j - 1,
        "closure": closure,
    }
    return SystemModel(A, B, G, label=label, nodes=h * np.arange(1, n + 1), meta=meta)


def build_wave_interior(spec: WaveModelSpec) -> SystemModel:
    spec.check(min_n=2)
    h, K, m = _stiffness_and_mass(spec.n)
    Lap = -K / m[:, None]
    closure = "Dirichlet at 0 eliminated; Neumann at 1 by ghost point u_{n+1}=u_{n-1} with half mass"
    return _assemble("wave", spec, K, Lap, m, h, closure)


def build_beam_interior(spec: BeamModelSpec) -> SystemModel:
    spec.check(min_n=5)
    h, K, m = _stiffness_and_mass(spec.n)
    Kb = K @ (K / m[:, None])
    Kb = 0.5 * (Kb + Kb.T)
    closure = "odd reflection at 0 (u=u_xx=0), even reflection at 1 (u_x=u_xxx=0); D4 = Lap^2"
    return _assemble("beam", spec, Kb, -Kb / m[:, None], m, h, closure)


def build_model(kind: str, n: int, xi="1/2", alpha=1.0, allow_even_p=False) -> SystemModel:
    p, q = parse_xi(xi)
    if kind == "wave":
        return build_wave_interior(WaveModelSpec(int(n), p, q, float(alpha), allow_even_p))
    if kind == "beam":
        return build_beam_interior(BeamModelSpec(int(n), p, q, float(alpha), allow_even_p))
    raise ModelBuildError(f"unknown model kind {kind!r} (expected wave or beam)")


def smooth_initial_state(model: SystemModel) -> np.ndarray:
    """Smooth displacement at rest satisfying the boundary conditions.

    Wave: u = x(2 - x).  Beam: u = sin(pi x / 2).  Velocity zero.
    """
    if model.nodes is None:
        raise ModelBuildError(f"{model.label}: smooth initial data needs a grid model")
    x = model.nodes
    n = x.size
    z = np.zeros(2 * n)
    if model.meta.get("kind") == "beam":
        z[:n] = np.sin(0.5 * np.pi * x)
    else:
        z[:n] = x * (2.0 - x)
    return z


def oracle_2x2(with_feedback=True) -> SystemModel:
    """The 2x2 rotation model A = [[0, 1], [-1, 0]], G = I, B = [0; 1]."""
    B = [[0.0], [1.0]] if with_feedback else [[0.0], [0.0]]
    return SystemModel([[0.0, 1.0], [-1.0, 0.0]], B, np.eye(2), label="oracle2x2")


def bandwidths(matrix, tol=0.0) -> tuple[int, int]:
    """(lower, upper) bandwidth of a dense matrix."""
    rows, cols = np.nonzero(np.abs(matrix) > tol)
    if rows.size == 0:
        return 0, 0
    off = cols - rows
    return int(max(0, -off.min())), int(max(0, off.max()))
