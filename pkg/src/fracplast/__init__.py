"""Quasi-static phase-field fracture with plasticity and viscous dissipation."""

from .energy import EnergyBreakdown, State, total_energy, virgin_state
from .evolution import EvolutionTrace, Scenario, altmin_step, run_evolution
from .material import MaterialParams, Model, elasticity_tensor, hardening_tensor
from .mesh import Mesh, build_interval_mesh, build_rect_mesh, tag_boundary_segment

__version__ = "0.1.0"

__all__ = [
    "EnergyBreakdown",
    "EvolutionTrace",
    "MaterialParams",
    "Mesh",
    "Model",
    "Scenario",
    "State",
    "altmin_step",
    "build_interval_mesh",
    "build_rect_mesh",
    "elasticity_tensor",
    "hardening_tensor",
    "run_evolution",
    "tag_boundary_segment",
    "total_energy",
    "virgin_state",
]
