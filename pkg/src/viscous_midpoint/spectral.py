"""Modal decomposition of a G-skew generator and frequency filtering.

With ``G = L L^T`` the matrix ``S = L^T A L^{-T}`` is skew-symmetric, so
``iS`` is Hermitian and a dense Hermitian eigensolver gives the spectrum
``{i mu_j}`` of A together with a unitary eigenbasis.  Each pair
``(mu, -mu)`` with ``mu > 0`` is stored as the two real G-orthonormal vectors
``sqrt(2) Re phi`` and ``sqrt(2) Im phi`` spanning its invariant plane; the
kernel of A gets a real orthonormal basis of its own.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import SolverError
from .operator_core import SystemModel, _as_state, gnorm2


@dataclass(frozen=True)
class ModalDecomposition:
    """Frequencies (sorted by ``|mu|``, +mu before -mu) and real G-orthonormal modes.

    ``complex_modes[:, j]`` is the G-normalized eigenvector with
    ``A phi_j = i mu_j phi_j``; ``modes`` is its real counterpart (columns
    ``c, s`` of a pair satisfy ``phi = (c + i s)/sqrt(2)``).
    """

    frequencies: np.ndarray
    modes: np.ndarray
    complex_modes: np.ndarray
    residuals: np.ndarray
    model: SystemModel

    @property
    def max_frequency(self) -> float:
        return float(np.abs(self.frequencies).max()) if self.frequencies.size else 0.0

    def coefficients(self, z) -> np.ndarray:
        """G-inner products ``<z, phi_j>_G`` with the real modes."""
        return self.modes.T @ (self.model.gram @ z)

    def low_mask(self, s: float) -> np.ndarray:
        return np.abs(self.frequencies) <= s

    def filtered_basis(self, s: float) -> np.ndarray:
        return self.modes[:, self.low_mask(s)]


def decompose(model: SystemModel) -> ModalDecomposition:
    """Full spectrum of A via the Hermitian matrix ``i L^T A L^{-T}`` (cached per model)."""
    return model._cached("modal", lambda: _decompose(model))


def _decompose(model):
    N = model.dim_state
    L = model.gram_cholesky()
    # S = L^T A L^{-T}
    S = sla.solve_triangular(L, (L.T @ model.generator).T, lower=True).T
    S = 0.5 * (S - S.T)
    try:
        lam, Q = sla.eigh(1j * S)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"{model.label}: eigensolver failed") from exc
    mu_all = -lam  # S q = -i lam q
    scale = max(np.abs(mu_all).max(), 1.0) if N else 1.0
    tol = 10.0 * N * np.finfo(float).eps * scale

    pos = np.nonzero(mu_all > tol)[0]
    n_pairs = pos.size
    n_zero = N - 2 * n_pairs
    if n_zero < 0:
        raise SolverError(f"{model.label}: spectrum is not symmetric about zero")

    cols_q = []
    freqs = []
    cplx = []
    for j in pos:
        q = Q[:, j]
        cols_q.append(np.sqrt(2.0) * q.real)
        cols_q.append(np.sqrt(2.0) * q.imag)
        freqs.extend([mu_all[j], -mu_all[j]])
        cplx.extend([q, q.conj()])
    if n_zero:
        zero_idx = np.argsort(np.abs(mu_all))[:n_zero]
        V = Q[:, zero_idx]
        U, _, _ = np.linalg.svd(np.hstack([V.real, V.imag]), full_matrices=False)
        for k in range(n_zero):
            cols_q.append(U[:, k])
            freqs.append(0.0)
            cplx.append(U[:, k].astype(complex))
    Qr = np.column_stack(cols_q)
    Qc = np.column_stack(cplx)
    freqs = np.asarray(freqs)

    order = _pair_stable_order(freqs, n_pairs)
    Qr = Qr[:, order]
    Qc = Qc[:, order]
    freqs = freqs[order]

    residuals = np.linalg.norm(S @ Qc - Qc * (1j * freqs), axis=0)
    modes = sla.solve_triangular(L.T, Qr, lower=False)
    cmodes = sla.solve_triangular(L.T, Qc, lower=False)
    for a in (modes, cmodes, freqs, residuals):
        a.setflags(write=False)
    return ModalDecomposition(freqs, modes, cmodes, residuals, model)


def _pair_stable_order(freqs, n_pairs):
    # pairs occupy slots (2i, 2i+1) and must stay adjacent; zero modes go first
    pair_mu = np.abs(freqs[0:2 * n_pairs:2])
    pair_order = np.argsort(pair_mu, kind="stable")
    zero_slots = np.arange(2 * n_pairs, freqs.size)
    idx = [zero_slots] if zero_slots.size else []
    for p in pair_order:
        idx.append(np.array([2 * p, 2 * p + 1]))
    return np.concatenate(idx) if idx else np.arange(0)


def project_filtered(decomp: ModalDecomposition, s: float, z) -> np.ndarray:
    """G-orthogonal projection onto ``span{phi_j : |mu_j| <= s}``."""
    if not s > 0:
        raise ValueError(f"filter level must be positive, got {s}")
    z = _as_state(decomp.model, z)
    mask = decomp.low_mask(s)
    coef = decomp.coefficients(z)
    return decomp.modes[:, mask] @ coef[mask]


@dataclass(frozen=True)
class HighFrequencyCheck:
    min_ratio: float | None
    delta: float
    trials: int
    complement_dim: int

    @property
    def empty(self) -> bool:
        return self.complement_dim == 0

    @property
    def holds(self) -> bool:
        return self.empty or self.min_ratio >= self.delta * (1.0 - 1e-10)


def verify_high_frequency_bound(decomp: ModalDecomposition, delta: float, dt: float,
                                trials: int, seed=None) -> HighFrequencyCheck:
    """Smallest ``dt |A y|_G / |y|_G`` over random y orthogonal to the low modes."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not (delta > 0 and dt > 0):
        raise ValueError("delta and dt must be positive")
    high = ~decomp.low_mask(delta / dt)
    k = int(high.sum())
    if k == 0:
        return HighFrequencyCheck(None, delta, trials, 0)
    rng = np.random.default_rng(seed)
    Y = decomp.modes[:, high] @ rng.standard_normal((k, trials))
    A = decomp.model.generator
    ratios = dt * np.sqrt(gnorm2(decomp.model, A @ Y) / gnorm2(decomp.model, Y))
    return HighFrequencyCheck(float(ratios.min()), delta, trials, k)
