"""Discrete-time quasi-static evolution driver.

Each time step solves the incremental minimization by nested alternate
minimization: an outer loop over the phase field and an inner loop
alternating displacement and plastic strain, both stopped on relative
H1-norm increments.  Under monotone proportional loading an optional
backtracking pass repairs steps that a later, lower-energy rescaled state
proves to be merely local minima.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyBreakdown, State, total_energy, virgin_state
from .exceptions import InvalidParameterError, NonConvergenceError
from .material import MaterialParams
from .mesh import Mesh
from .subsolvers import (
    build_dirichlet,
    solve_displacement,
    solve_phase_field,
    solve_plastic,
)

DELTA_DEFAULT = 1e-3
MAX_OUTER_DEFAULT = 500
MAX_INNER_DEFAULT = 500
RESTART_BUDGET_DEFAULT = 3
BACKTRACK_TOL_DEFAULT = 1e-6


@dataclass
class Scenario:
    """Everything needed to run one evolution.

    The Dirichlet schedule is proportional: tag -> one rate per displacement
    component (None leaves a component free), with prescribed value t * rate.
    ``dirichlet_v_tags`` lists the tags whose nodes keep v = 1.
    """

    mesh: Mesh
    params: MaterialParams
    T_f: float
    h: float
    dirichlet_u: dict
    dirichlet_v_tags: tuple = ()
    delta1: float = DELTA_DEFAULT
    delta2: float = DELTA_DEFAULT
    max_inner: int = MAX_INNER_DEFAULT
    max_outer: int = MAX_OUTER_DEFAULT
    backtracking: bool = True
    backtrack_tol: float = BACKTRACK_TOL_DEFAULT
    restart_budget: int = RESTART_BUDGET_DEFAULT
    plastic_method: str = "exact"

    def __post_init__(self):
        if not (self.h > 0 and self.T_f > 0):
            raise InvalidParameterError("T_f and h must be > 0")
        n = self.T_f / self.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise InvalidParameterError("T_f must be an integer multiple of h")
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise InvalidParameterError("tolerances must be > 0")
        for tag in self.dirichlet_v_tags:
            self.mesh.tagged_nodes(tag)
        for tag in self.dirichlet_u:
            self.mesh.tagged_nodes(tag)

    @property
    def n_steps(self) -> int:
        return int(round(self.T_f / self.h))

    def times(self) -> np.ndarray:
        return self.h * np.arange(self.n_steps + 1)

    def dirichlet_v_nodes(self) -> np.ndarray:
        if not self.dirichlet_v_tags:
            return np.empty(0, dtype=np.int64)
        parts = [self.mesh.tagged_nodes(t) for t in self.dirichlet_v_tags]
        return np.unique(np.concatenate(parts))


@dataclass
class StepReport:
    """Iteration counts and the energy after every subsolver call."""

    outer_iterations: int
    inner_iterations: int
    energy_history: list
    converged: bool = True


@dataclass
class EvolutionTrace:
    """Accepted states plus bookkeeping, the unit of audit and persistence.

    states[n] is the state at time n*h (states[0] is the virgin state);
    breakdowns[n-1] belongs to step n.  ``backtrack_events`` records
    (discovered_at, restarted_from) pairs in the order they fired.
    """

    scenario: Scenario
    states: list = field(default_factory=list)
    breakdowns: list = field(default_factory=list)
    outer_iterations: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    backtrack_events: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    complete: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def n_accepted(self) -> int:
        return len(self.states) - 1

    def cumulative_dissipation(self):
        """Running sums of plastic / viscous increments per accepted step."""
        pl = np.cumsum([b.plastic_increment for b in self.breakdowns])
        ve = np.cumsum([b.viscoelastic_increment for b in self.breakdowns])
        vp = np.cumsum([b.viscoplastic_increment for b in self.breakdowns])
        return pl, ve, vp

    def backtracked_steps(self) -> set:
        return {j for (_, j) in self.backtrack_events}

    def min_phase(self) -> np.ndarray:
        return np.array([s.v.min() for s in self.states])

    def max_plastic(self) -> np.ndarray:
        from .material import frobenius_norm

        return np.array(
            [frobenius_norm(s.p, self.scenario.mesh.dim).max() for s in self.states]
        )


# ----------------------------------------------------------------------
# Norms
# ----------------------------------------------------------------------
def h1_norm(mesh: Mesh, x: np.ndarray) -> float:
    """H1 norm from the P1 mass and stiffness matrices (per component)."""
    M = mesh.p1_mass_matrix()
    S = mesh.p1_stiffness_matrix()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        comps = [x]
    else:
        comps = [x[:, c] for c in range(x.shape[1])]
    total = 0.0
    for c in comps:
        total += c @ (M @ c) + c @ (S @ c)
    return float(np.sqrt(total))


def _rel_increment(mesh: Mesh, new, old) -> float:
    return h1_norm(mesh, new - old) / (1.0 + h1_norm(mesh, new))


# ----------------------------------------------------------------------
# One time step
# ----------------------------------------------------------------------
def altmin_step(prev: State, t_n: float, scenario: Scenario, v_init=None):
    """Alternate minimization for the incremental problem at time ``t_n``.

    Outer loop: phase field (upper bound = prev.v).  Inner loop: displacement
    then plastic strain, both against the previous time slice's increments.
    The plastic iterate is warm-started across outer iterations after the
    first pass so the energy never increases between subsolver calls.
    Returns the converged state and a StepReport.
    """
    mesh = scenario.mesh
    params = scenario.params
    h = scenario.h
    bc = build_dirichlet(mesh, scenario.dirichlet_u, t_n)
    v_nodes = scenario.dirichlet_v_nodes()

    v = prev.v.copy() if v_init is None else np.minimum(v_init, prev.v)
    u = prev.u
    p = prev.p
    energies = []
    inner_total = 0

    def record(u_, p_, v_):
        energies.append(
            total_energy(State(u_, v_, p_, t_n), prev, params, h, mesh).total
        )

    outer = 0
    for outer in range(1, scenario.max_outer + 1):
        converged_inner = False
        for _ in range(1, scenario.max_inner + 1):
            inner_total += 1
            u_new, _ = solve_displacement(mesh, v, p, prev.u, bc, params, h)
            record(u_new, p, v)
            p_new, _ = solve_plastic(
                mesh, u_new, v, prev.p, params, h, scenario.plastic_method
            )
            record(u_new, p_new, v)
            du = _rel_increment(mesh, u_new, u)
            u, p = u_new, p_new
            if du <= scenario.delta1:
                converged_inner = True
                break
        if not converged_inner:
            raise NonConvergenceError(
                f"displacement/plastic loop exceeded {scenario.max_inner} iterations",
                last_state=State(u, v, p, t_n),
                energy_history=energies,
            )
        v_new, _ = solve_phase_field(mesh, u, p, prev.v, v_nodes, params, v_init=v)
        record(u, p, v_new)
        dv = _rel_increment(mesh, v_new, v)
        v = v_new
        if dv <= scenario.delta2:
            return State(u, v, p, t_n), StepReport(outer, inner_total, energies)
    raise NonConvergenceError(
        f"phase-field loop exceeded {scenario.max_outer} iterations",
        last_state=State(u, v, p, t_n),
        energy_history=energies,
    )


# ----------------------------------------------------------------------
# Backtracking
# ----------------------------------------------------------------------
def rescale_state(state: State, factor: float) -> State:
    """Proportionally rescaled state: u and p scaled, v kept."""
    if factor > 1.0 + 1e-12:
        raise InvalidParameterError("rescale factor must be <= 1")
    return state.scaled(factor)


def backtracking_scan(trace: EvolutionTrace, n: int, scenario: Scenario):
    """Smallest j < n whose stored energy exceeds the rescaled-state bound.

    The candidate at time t_j is (t_j/t_n u_n, t_j/t_n p_n, v_n); stored and
    candidate energies both measure increments against states[j-1].  Returns
    None when no stored step is beaten beyond the relative tolerance.
    """
    state_n = trace.states[n]
    t_n = state_n.t
    for j in range(1, n):
        stored = trace.breakdowns[j - 1].total
        cand_state = rescale_state(state_n, trace.states[j].t / t_n)
        cand = total_energy(
            cand_state, trace.states[j - 1], scenario.params, scenario.h, scenario.mesh
        ).total
        if stored > cand + scenario.backtrack_tol * (1.0 + abs(cand)):
            return j
    return None


# ----------------------------------------------------------------------
# Full evolution
# ----------------------------------------------------------------------
def run_evolution(scenario: Scenario) -> EvolutionTrace:
    """March the evolution from the virgin state to T_f.

    After every accepted step the backtracking scan (when enabled) compares
    all earlier steps against the rescaled current state; on a violation at
    step j the loop truncates and restarts from j with the current phase
    field as initial guess.  Each step index carries a finite restart
    budget; when it is exhausted a partial trace is returned with a
    diagnostic instead of looping forever.
    """
    mesh = scenario.mesh
    trace = EvolutionTrace(scenario)
    trace.states.append(virgin_state(mesh))
    times = scenario.times()

    budgets: dict[int, int] = {}
    pending_v_init: dict[int, np.ndarray] = {}

    n = 1
    while n <= scenario.n_steps:
        try:
            state, report = altmin_step(
                trace.states[n - 1], float(times[n]), scenario,
                v_init=pending_v_init.pop(n, None),
            )
        except NonConvergenceError as err:
            err.step = n
            raise
        breakdown = total_energy(
            state, trace.states[n - 1], scenario.params, scenario.h, mesh
        )
        _store(trace, n, state, breakdown, report)

        if scenario.backtracking:
            j = backtracking_scan(trace, n, scenario)
            if j is not None:
                remaining = budgets.get(j, scenario.restart_budget)
                if remaining == 0:
                    trace.diagnostics.append(
                        f"restart budget exhausted at step {j} "
                        f"(violation found at step {n}); returning partial trace"
                    )
                    return trace
                budgets[j] = remaining - 1
                trace.backtrack_events.append((n, j))
                pending_v_init[j] = state.v
                _truncate(trace, j)
                n = j
                continue
        n += 1

    trace.complete = True
    return trace


def _store(trace, n, state, breakdown, report):
    del trace.states[n:]
    del trace.breakdowns[n - 1 :]
    del trace.outer_iterations[n - 1 :]
    del trace.inner_iterations[n - 1 :]
    trace.states.append(state)
    trace.breakdowns.append(breakdown)
    trace.outer_iterations.append(report.outer_iterations)
    trace.inner_iterations.append(report.inner_iterations)


def _truncate(trace, j):
    del trace.states[j:]
    del trace.breakdowns[j - 1 :]
    del trace.outer_iterations[j - 1 :]
    del trace.inner_iterations[j - 1 :]


def check_irreversibility(trace: EvolutionTrace, tol: float = 1e-14) -> bool:
    """Node-wise v_n <= v_{n-1} + tol along the whole trace."""
    states = trace.states
    return all(
        np.all(states[i + 1].v <= states[i].v + tol) for i in range(len(states) - 1)
    )
