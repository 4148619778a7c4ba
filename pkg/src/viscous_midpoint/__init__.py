"""Viscous implicit-midpoint time stepping for damped skew-adjoint systems.

The package builds finite-dimensional triples ``(A, B, G)``, advances them
with the midpoint rule (optionally followed by a viscosity solve), tracks the
discrete energy identities and computes decay, observability and resolvent
certificates.
"""
from .certification import (
    GramianVariant,
    bstar_graph_bound,
    continuous_decay_rate,
    forced_bound_ratio,
    hautus_scan,
    kappa_dense,
    observability_gramian,
    transfer_function,
    transfer_norm_scan,
)
from .diagnostics import fit_decay_rate, ledger_residuals, sweep_uniformity
from .exceptions import ViscousMidpointError
from .models import build_beam_interior, build_model, build_wave_interior, oracle_2x2
from .operator_core import SystemModel, energy, solve_shifted, solve_viscosity, validate_model
from .schemes import SchemeId, simulate, step, step_viscous_forced
from .spectral import decompose, project_filtered, verify_high_frequency_bound

__version__ = "0.1.0"

__all__ = [
    "GramianVariant",
    "SchemeId",
    "SystemModel",
    "ViscousMidpointError",
    "bstar_graph_bound",
    "build_beam_interior",
    "build_model",
    "build_wave_interior",
    "continuous_decay_rate",
    "decompose",
    "energy",
    "fit_decay_rate",
    "forced_bound_ratio",
    "hautus_scan",
    "kappa_dense",
    "ledger_residuals",
    "observability_gramian",
    "oracle_2x2",
    "project_filtered",
    "simulate",
    "solve_shifted",
    "solve_viscosity",
    "step",
    "step_viscous_forced",
    "sweep_uniformity",
    "transfer_function",
    "transfer_norm_scan",
    "validate_model",
    "verify_high_frequency_bound",
]
