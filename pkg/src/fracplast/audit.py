"""Independent verification layer.

Analytic 1D oracles (uniform-strain phase-field profile, onset-time
formulas), discrete thermodynamic dissipation checks, energy-balance
residuals with variational reaction forces, and onset detectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import State, elastic_energy, hardening_energy, surface_energy
from .evolution import EvolutionTrace, Scenario
from .exceptions import InvalidParameterError
from .material import MaterialParams, Model, frobenius_inner, frobenius_norm
from .mesh import Mesh
from .subsolvers import assemble_displacement_system, build_dirichlet

DISSIPATION_BAND_COEFF = 10.0


# ----------------------------------------------------------------------
# Analytic 1D oracles
# ----------------------------------------------------------------------
def analytic_v_profile(x, t, L, K, epsilon):
    """Stationary phase-field profile of a uniformly strained bar.

    Solves v'' - (1/(4 eps^2) + K t^2/(2 eps)) v + 1/(4 eps^2) = 0 with
    v(0) = v(L) = 1: a constant plateau 1/(1 + 2 eps K t^2) plus boundary
    layers, evaluated in an overflow-safe form.  Values lie in (0, 1].
    """
    if not (L > 0 and K > 0 and epsilon > 0):
        raise InvalidParameterError("L, K, epsilon must be > 0")
    x = np.asarray(x, dtype=float)
    gamma = 2.0 * epsilon * K * t * t
    v_plateau = 1.0 / (1.0 + gamma)
    rho = gamma / (1.0 + gamma)
    omega = np.sqrt(1.0 + gamma) / (2.0 * epsilon)
    # (sinh(w(L-x)) + sinh(wx)) / sinh(wL), written with decaying exponentials
    num = np.exp(-omega * x) * (1.0 - np.exp(-2.0 * omega * (L - x))) + np.exp(
        -omega * (L - x)
    ) * (1.0 - np.exp(-2.0 * omega * x))
    den = 1.0 - np.exp(-2.0 * omega * L)
    return v_plateau + rho * num / den


def predicted_onset_times(params: MaterialParams, L: float):
    """Homogeneous-bar first-yield and first-crack times (t_p, t_c).

    t_p = tau / K (stress reaches the yield surface) and
    t_c = sqrt(2 / (K L)) (cracked state becomes energetically favorable).
    """
    if not (L > 0 and params.K > 0):
        raise InvalidParameterError("K and L must be > 0")
    t_p = params.tau / params.K
    t_c = float(np.sqrt(2.0 / (params.K * L)))
    return t_p, t_c


# ----------------------------------------------------------------------
# Discrete thermodynamic checks
# ----------------------------------------------------------------------
def _stress(state: State, prev: State, params: MaterialParams, h: float, mesh: Mesh):
    """Per-element end-of-step stress in component form."""
    e = mesh.strain(state.u) - state.p
    a = params.effective_stiffness(mesh.element_mean(state.v))
    sigma = a[:, None] * params.elasticity(mesh.dim).apply(e)
    if params.model is Model.VISCOELASTIC:
        sigma = sigma + params.beta1 / h * (mesh.strain(state.u) - mesh.strain(prev.u))
    return sigma


def free_energy(state: State, params: MaterialParams, mesh: Mesh) -> float:
    """Model free energy: elastic + surface, plus hardening when active."""
    w = elastic_energy(state, params, mesh) + surface_energy(
        state.v, params.epsilon, mesh
    )
    if params.uses_hardening():
        w += hardening_energy(state.p, params.k_hard, mesh)
    return w


def dissipation_per_step(trace: EvolutionTrace, n: int, params, mesh) -> float:
    """Discrete dissipation D_n = int sigma_n : dEu - (W_n - W_{n-1}).

    Thermodynamic consistency requires D_n >= 0 up to a band of width
    O(h) (the stress power uses the backward-rectangle rule).
    """
    if not (1 <= n <= trace.n_accepted()):
        raise IndexError(f"step {n} outside trace")
    h = trace.scenario.h
    state, prev = trace.states[n], trace.states[n - 1]
    sigma = _stress(state, prev, params, h, mesh)
    d_eu = mesh.strain(state.u) - mesh.strain(prev.u)
    power = float(
        np.dot(mesh.element_measure, frobenius_inner(sigma, d_eu, mesh.dim))
    )
    dW = free_energy(state, params, mesh) - free_energy(prev, params, mesh)
    return power - dW


def dissipation_band(trace: EvolutionTrace, n: int, params, mesh) -> float:
    """Tolerance band: D_n >= -c h (1 + |W_n|) with c = 10."""
    w_n = free_energy(trace.states[n], params, mesh)
    return DISSIPATION_BAND_COEFF * trace.scenario.h * (1.0 + abs(w_n))


def reaction_force(state: State, prev: State, scenario: Scenario):
    """Energy-consistent Dirichlet reactions (gradient at constrained dofs)."""
    mesh, params, h = scenario.mesh, scenario.params, scenario.h
    bc = build_dirichlet(mesh, scenario.dirichlet_u, state.t)
    K, f = assemble_displacement_system(mesh, state.v, state.p, prev.u, params, h)
    u_flat = state.u.ravel() if mesh.dim == 2 else state.u
    grad = K @ u_flat - f
    return bc.dofs, grad[bc.dofs]


def energy_balance_residual(trace: EvolutionTrace, params, mesh):
    """Per-step residual of the model's energy balance.

    r_n = (W_n - W_{n-1}) + dissipated increments - boundary work increment,
    where the boundary work uses the variational reaction dotted with the
    prescribed displacement increment.  Returns the array (r_1 ... r_N).
    """
    scenario = trace.scenario
    h = scenario.h
    residuals = np.zeros(trace.n_accepted())
    rates = _dof_rates(scenario)
    for n in range(1, trace.n_accepted() + 1):
        state, prev = trace.states[n], trace.states[n - 1]
        dW = free_energy(state, params, mesh) - free_energy(prev, params, mesh)
        dp = state.p - prev.p
        dissip = params.tau * float(
            np.dot(mesh.element_measure, frobenius_norm(dp, mesh.dim))
        )
        if params.model is Model.VISCOELASTIC:
            de = mesh.strain(state.u) - mesh.strain(prev.u)
            dissip += params.beta1 / h * float(
                np.dot(mesh.element_measure, frobenius_inner(de, de, mesh.dim))
            )
        elif params.model is Model.VISCOPLASTIC:
            dissip += params.beta2 / h * float(
                np.dot(mesh.element_measure, frobenius_inner(dp, dp, mesh.dim))
            )
        dofs, forces = reaction_force(state, prev, scenario)
        work = float(forces @ (rates[dofs] * (state.t - prev.t)))
        residuals[n - 1] = dW + dissip - work
    return residuals


def _dof_rates(scenario: Scenario) -> np.ndarray:
    """Loading rate per constrained dof (prescribed value is t * rate)."""
    mesh = scenario.mesh
    ndof = mesh.n_nodes * (1 if mesh.dim == 1 else 2)
    per_node = 1 if mesh.dim == 1 else 2
    rates = np.zeros(ndof)
    for tag, comp_rates in scenario.dirichlet_u.items():
        comp_rates = (comp_rates,) if np.isscalar(comp_rates) else tuple(comp_rates)
        for comp, rate in enumerate(comp_rates):
            if rate is None:
                continue
            rates[mesh.tagged_nodes(tag) * per_node + comp] = float(rate)
    return rates


# ----------------------------------------------------------------------
# Onset detection
# ----------------------------------------------------------------------
def detect_onsets(trace: EvolutionTrace, v_threshold: float, p_threshold: float):
    """First times with plastic activity / a crack, either may be None.

    t_plastic: first step whose max element |p| exceeds p_threshold;
    t_crack: first step whose min nodal v drops below v_threshold.
    """
    if not (0.0 < v_threshold < 1.0):
        raise InvalidParameterError("v_threshold must lie in (0, 1)")
    if not p_threshold > 0:
        raise InvalidParameterError("p_threshold must be > 0")
    t_plastic = t_crack = None
    dim = trace.scenario.mesh.dim
    for state in trace.states:
        if t_plastic is None and frobenius_norm(state.p, dim).max() > p_threshold:
            t_plastic = state.t
        if t_crack is None and state.v.min() < v_threshold:
            t_crack = state.t
        if t_plastic is not None and t_crack is not None:
            break
    return t_plastic, t_crack


# ----------------------------------------------------------------------
# Geometry helpers for 2D acceptance checks
# ----------------------------------------------------------------------
def connected_low_phase_component(mesh: Mesh, v, threshold: float):
    """Connected components (node sets) of the subgraph with v < threshold."""
    low = v < threshold
    if not np.any(low):
        return []
    edges = mesh.node_adjacency()
    keep = low[edges[:, 0]] & low[edges[:, 1]]
    parent = np.arange(mesh.n_nodes)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges[keep]:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    groups = {}
    for node in np.flatnonzero(low):
        groups.setdefault(find(node), []).append(node)
    return [np.array(sorted(g)) for g in groups.values()]


def crack_band_crosses(mesh: Mesh, v, threshold: float, axis: int = 1) -> bool:
    """True when one connected v<threshold band spans the full ``axis`` extent."""
    coords = mesh.nodes[:, axis]
    lo, hi = coords.min(), coords.max()
    tol = 1e-9 * (hi - lo)
    for comp in connected_low_phase_component(mesh, v, threshold):
        c = coords[comp]
        if c.min() <= lo + tol and c.max() >= hi - tol:
            return True
    return False


# ----------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------
@dataclass
class AuditReport:
    """Outcome of every audit check with the tolerances that were used."""

    dissipation: np.ndarray
    dissipation_bands: np.ndarray
    dissipation_ok: bool
    balance_residuals: np.ndarray
    balance_cumulative: np.ndarray
    max_abs_residual: float
    max_abs_cumulative: float
    t_plastic: float | None
    t_crack: float | None
    predicted_t_plastic: float
    predicted_t_crack: float
    oracle_deviation: float | None
    irreversibility_ok: bool
    v_threshold: float
    p_threshold: float
    notes: list = field(default_factory=list)

    def lines(self):
        out = []
        ok = lambda b: "ok" if b else "VIOLATED"
        out.append(
            f"dissipation >= -band at every step: {ok(self.dissipation_ok)} "
            f"(min margin {np.min(self.dissipation + self.dissipation_bands):.3e})"
        )
        out.append(f"max |balance residual| per step: {self.max_abs_residual:.6e}")
        out.append(f"max |cumulative balance residual|: {self.max_abs_cumulative:.6e}")
        out.append(f"irreversibility (v non-increasing): {ok(self.irreversibility_ok)}")
        out.append(
            f"onsets: plastic={_fmt_time(self.t_plastic)} "
            f"crack={_fmt_time(self.t_crack)} "
            f"(homogeneous-bar predictions: t_p={self.predicted_t_plastic:.6g}, "
            f"t_c={self.predicted_t_crack:.6g})"
        )
        if self.oracle_deviation is not None:
            out.append(
                f"sup |v - uniform-strain profile| at final time: "
                f"{self.oracle_deviation:.6e}"
            )
        out.extend(self.notes)
        return out


def _fmt_time(t):
    return "none" if t is None else f"{t:.6g}"


def run_audit(
    trace: EvolutionTrace,
    v_threshold: float = 0.1,
    p_threshold: float = 1e-6,
) -> AuditReport:
    """Run every audit check on a completed trace."""
    scenario = trace.scenario
    mesh, params = scenario.mesh, scenario.params
    n_steps = trace.n_accepted()

    D = np.array(
        [dissipation_per_step(trace, n, params, mesh) for n in range(1, n_steps + 1)]
    )
    bands = np.array(
        [dissipation_band(trace, n, params, mesh) for n in range(1, n_steps + 1)]
    )
    residuals = energy_balance_residual(trace, params, mesh)
    cumulative = np.cumsum(residuals)

    t_plastic, t_crack = detect_onsets(trace, v_threshold, p_threshold)
    L = mesh.measure() if mesh.dim == 1 else mesh.nodes[:, 0].max()
    t_p, t_c = predicted_onset_times(params, L)

    oracle_dev = None
    if mesh.dim == 1:
        final = trace.states[-1]
        profile = analytic_v_profile(
            mesh.nodes, final.t, mesh.measure(), params.K, params.epsilon
        )
        oracle_dev = float(np.max(np.abs(final.v - profile)))

    from .evolution import check_irreversibility

    return AuditReport(
        dissipation=D,
        dissipation_bands=bands,
        dissipation_ok=bool(np.all(D >= -bands)),
        balance_residuals=residuals,
        balance_cumulative=cumulative,
        max_abs_residual=float(np.max(np.abs(residuals))) if n_steps else 0.0,
        max_abs_cumulative=float(np.max(np.abs(cumulative))) if n_steps else 0.0,
        t_plastic=t_plastic,
        t_crack=t_crack,
        predicted_t_plastic=t_p,
        predicted_t_crack=t_c,
        oracle_deviation=oracle_dev,
        irreversibility_ok=check_irreversibility(trace),
        v_threshold=v_threshold,
        p_threshold=p_threshold,
    )
