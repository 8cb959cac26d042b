"""Two-species magnetized Vlasov-Poisson PIC solver with adjoint-based
optimal control of the external magnetic field B(t, x) for d = (1, 2)."""

from .control import ControlField, PenaltyConfig, v_inner, v_norm_sq
from .domain import (OccupationTensor, Particle, PhaseGrid, SpeciesParams,
                     SpeciesParticles, TimeGrid, cell_index, electron_params,
                     ion_params, wrap_position)
from .forward import DiagnosticsSeries, ForwardTrajectory, diagnostics, forward_solve
from .adjoint import AdjointTrajectory, adjoint_solve, terminal_condition
from .gradient import (GradientField, GradientResult, assemble_G,
                       assemble_grad_L2, cost, cost_of_control,
                       gradient_of_cost, lift_to_V)
from .optimizer import NcgConfig, OptimizationReport, ncg_minimize
from .problem import Problem
from .pusher import LocalFields, boris_push
from .sampling import RandomStream, sample_direct, sample_rejection
from .tracking import TrackingWeights, gaussian_weight, zero_tracking

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory", "ControlField", "DiagnosticsSeries",
    "ForwardTrajectory", "GradientField", "GradientResult", "LocalFields",
    "NcgConfig", "OccupationTensor", "OptimizationReport", "Particle",
    "PenaltyConfig", "PhaseGrid", "Problem", "RandomStream", "SpeciesParams",
    "SpeciesParticles", "TimeGrid", "TrackingWeights", "adjoint_solve",
    "assemble_G", "assemble_grad_L2", "boris_push", "cell_index", "cost",
    "cost_of_control", "diagnostics", "electron_params", "forward_solve",
    "gaussian_weight", "gradient_of_cost", "ion_params", "lift_to_V",
    "ncg_minimize", "sample_direct", "sample_rejection", "terminal_condition",
    "v_inner", "v_norm_sq", "wrap_position", "zero_tracking",
]
