"""Discrete energy functionals and their model-specific totals.

All integrals use one-point (barycentric) quadrature: P1 gradients and P0
plastic strains are element-wise constant, so only the terms involving the
nodal phase field are approximate, with O(dx^2) error.  Every functional
is evaluated with a fixed summation order for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError
from .material import MaterialParams, Model, frobenius_inner, frobenius_norm
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class State:
    """One time slice of the evolution.

    u : nodal displacement, (n_nodes,) in 1D or (n_nodes, 2) in 2D
    v : nodal phase field in [0, 1] (1 = intact material)
    p : per-element symmetric plastic strain in component form
    t : loading time of this slice
    """

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    t: float

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.p.copy(), self.t)

    def scaled(self, factor: float) -> "State":
        """u and p multiplied by ``factor``, v kept, time scaled alike."""
        if factor < 0:
            raise InvalidParameterError("scale factor must be >= 0")
        return State(factor * self.u, self.v, factor * self.p, factor * self.t)


def virgin_state(mesh: Mesh) -> State:
    """Crack-free, unloaded, plastically undeformed state at t = 0."""
    shape = (mesh.n_nodes,) if mesh.dim == 1 else (mesh.n_nodes, 2)
    return State(
        np.zeros(shape),
        np.ones(mesh.n_nodes),
        np.zeros((mesh.n_elements, mesh.n_strain_components)),
        0.0,
    )


def validate_state(state: State, mesh: Mesh, tol: float = 1e-12):
    """Shape and range checks; raises ShapeError / InvalidParameterError."""
    mesh.check_nodal(state.u, "u", vector=True)
    v = mesh.check_nodal(state.v, "v")
    mesh.check_elementwise(state.p, "p")
    if not np.all(np.isfinite(state.u)) or not np.all(np.isfinite(state.p)):
        raise InvalidParameterError("non-finite field values")
    if v.min() < -tol or v.max() > 1.0 + tol:
        raise InvalidParameterError("phase field must lie in [0, 1]")


# ----------------------------------------------------------------------
# Individual functionals
# ----------------------------------------------------------------------
def elastic_energy(state: State, params: MaterialParams, mesh: Mesh) -> float:
    """(1/2) integral of (v^2 + eta) A(Eu - p):(Eu - p)."""
    e = mesh.strain(state.u) - mesh.check_elementwise(state.p, "p")
    a = params.effective_stiffness(mesh.element_mean(state.v))
    elas = params.elasticity(mesh.dim)
    dens = a * elas.inner(e, e)
    return float(0.5 * np.dot(mesh.element_measure, dens))


def plastic_dissipation_increment(p, p_prev, tau: float, mesh: Mesh) -> float:
    """tau * integral |p - p_prev| (Frobenius norm per element)."""
    dp = mesh.check_elementwise(p, "p") - mesh.check_elementwise(p_prev, "p_prev")
    return float(tau * np.dot(mesh.element_measure, frobenius_norm(dp, mesh.dim)))


def hardening_energy(p, k_hard: float, mesh: Mesh) -> float:
    """(1/2) integral B p : p with B = k I."""
    p = mesh.check_elementwise(p, "p")
    return float(
        0.5 * k_hard * np.dot(mesh.element_measure, frobenius_inner(p, p, mesh.dim))
    )


def viscoelastic_increment(u, u_prev, beta1: float, h: float, mesh: Mesh) -> float:
    """(beta1 / 2h) * integral |Eu - Eu_prev|^2."""
    if not h > 0:
        raise InvalidParameterError("h must be > 0")
    de = mesh.strain(u) - mesh.strain(u_prev)
    return float(
        0.5 * beta1 / h * np.dot(mesh.element_measure, frobenius_inner(de, de, mesh.dim))
    )


def viscoplastic_increment(p, p_prev, beta2: float, h: float, mesh: Mesh) -> float:
    """(beta2 / 2h) * integral |p - p_prev|^2."""
    if not h > 0:
        raise InvalidParameterError("h must be > 0")
    dp = mesh.check_elementwise(p, "p") - mesh.check_elementwise(p_prev, "p_prev")
    return float(
        0.5 * beta2 / h * np.dot(mesh.element_measure, frobenius_inner(dp, dp, mesh.dim))
    )


def surface_energy(v, epsilon: float, mesh: Mesh) -> float:
    """integral of epsilon |grad v|^2 + (1 - v)^2 / (4 epsilon)."""
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be > 0")
    grad = mesh.scalar_gradient(v)
    vbar = mesh.element_mean(v)
    dens = epsilon * np.sum(grad**2, axis=1) + (1.0 - vbar) ** 2 / (4.0 * epsilon)
    return float(np.dot(mesh.element_measure, dens))


# ----------------------------------------------------------------------
# Model totals
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class EnergyBreakdown:
    """Values of every functional plus the model-specific total.

    Increment terms (plastic, viscous) are measured against the previous
    time slice.  ``total`` is the sum the incremental problem minimizes:
    elastic + plastic always, plus the viscous or hardening term the model
    activates, plus surface.
    """

    elastic: float
    plastic_increment: float
    hardening: float
    viscoelastic_increment: float
    viscoplastic_increment: float
    surface: float
    total: float
    model: Model

    @staticmethod
    def active_terms(model: Model):
        base = ["elastic", "plastic_increment", "surface"]
        extra = {
            Model.PERFECT: [],
            Model.VISCOELASTIC: ["viscoelastic_increment"],
            Model.VISCOPLASTIC: ["viscoplastic_increment"],
            Model.HARDENING: ["hardening"],
        }[model]
        return base + extra


def total_energy(
    state: State,
    prev_state: State,
    params: MaterialParams,
    h: float,
    mesh: Mesh,
) -> EnergyBreakdown:
    """Model-specific incremental energy of ``state`` given the previous slice."""
    model = params.model
    el = elastic_energy(state, params, mesh)
    pl = plastic_dissipation_increment(state.p, prev_state.p, params.tau, mesh)
    hd = hardening_energy(state.p, params.k_hard, mesh)
    sf = surface_energy(state.v, params.epsilon, mesh)
    ve = vp = 0.0
    if model is Model.VISCOELASTIC:
        ve = viscoelastic_increment(state.u, prev_state.u, params.beta1, h, mesh)
    if model is Model.VISCOPLASTIC:
        vp = viscoplastic_increment(state.p, prev_state.p, params.beta2, h, mesh)
    parts = {
        "elastic": el,
        "plastic_increment": pl,
        "hardening": hd,
        "viscoelastic_increment": ve,
        "viscoplastic_increment": vp,
        "surface": sf,
    }
    total = sum(parts[name] for name in EnergyBreakdown.active_terms(model))
    return EnergyBreakdown(el, pl, hd, ve, vp, sf, total, model)
