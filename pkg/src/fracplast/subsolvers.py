"""Single-variable subproblems of the alternate minimization.

* displacement: sparse SPD linear solve (direct, CG fallback),
* plastic strain: element-local proximal update -- closed-form shrinkage
  in 1D, a radial Newton reduction in 2D, with a proximal-gradient descent
  kept as a verification mode,
* phase field: bound-constrained convex quadratic solved by projected SOR.

All solvers are deterministic; element-local updates are vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from ._kernels import projected_sor_sweeps
from .exceptions import ConstraintError, InvalidParameterError, SolverError
from .material import MaterialParams, Model, frobenius_norm, frobenius_weights
from .mesh import Mesh

DISPLACEMENT_RTOL = 1e-10
PLASTIC_TOL = 1e-9  # scaled by (1 + tau)
PHASE_KKT_TOL = 1e-9
SOR_OMEGA = 1.85
SOR_CHECK_EVERY = 16
SOR_MAX_SWEEPS = 400_000


@dataclass(frozen=True)
class SolveReport:
    """Iteration count, final first-order/KKT residual, convergence flag."""

    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class DirichletBC:
    """Resolved Dirichlet constraints: flat dof indices and their values."""

    dofs: np.ndarray
    values: np.ndarray

    def free_mask(self, n_dofs: int) -> np.ndarray:
        mask = np.ones(n_dofs, dtype=bool)
        mask[self.dofs] = False
        return mask


def build_dirichlet(mesh: Mesh, schedule: dict, t: float) -> DirichletBC:
    """Resolve a proportional-loading schedule at time ``t``.

    ``schedule`` maps a boundary tag to one rate per displacement component;
    the prescribed value is ``t * rate``.  A component set to ``None`` stays
    free, which expresses normal-only conditions like u.n = 0 on axis-aligned
    sides.  A dof constrained twice with different values is an error.
    """
    ndof_per_node = 1 if mesh.dim == 1 else 2
    assigned: dict[int, float] = {}
    for tag, rates in schedule.items():
        nodes = mesh.tagged_nodes(tag)
        rates = (rates,) if np.isscalar(rates) else tuple(rates)
        if len(rates) != ndof_per_node:
            raise InvalidParameterError(
                f"schedule for tag {tag!r} needs {ndof_per_node} components"
            )
        for comp, rate in enumerate(rates):
            if rate is None:
                continue
            value = float(rate) * t
            for node in nodes:
                dof = int(node) * ndof_per_node + comp
                if dof in assigned and assigned[dof] != value:
                    raise ConstraintError(
                        f"dof {dof} constrained twice with different values"
                    )
                assigned[dof] = value
    dofs = np.array(sorted(assigned), dtype=np.int64)
    values = np.array([assigned[d] for d in dofs])
    return DirichletBC(dofs, values)


# ----------------------------------------------------------------------
# Displacement
# ----------------------------------------------------------------------
def _element_dof_matrix(mesh: Mesh) -> np.ndarray:
    """Flat dof indices per element, shape (m, nodes_per_element * dim)."""
    if mesh.dim == 1:
        return mesh.elements
    dofs = np.empty((mesh.n_elements, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.elements
    dofs[:, 1::2] = 2 * mesh.elements + 1
    return dofs


def _strain_displacement_matrices(mesh: Mesh) -> np.ndarray:
    """Per-element B with strain components = B @ u_element."""
    key = "B"
    if key not in mesh._cache:
        g = mesh.p1_gradients
        m = mesh.n_elements
        if mesh.dim == 1:
            B = g.transpose(0, 2, 1).copy()  # (m, 1, 2)
        else:
            B = np.zeros((m, 3, 6))
            for loc in range(3):
                B[:, 0, 2 * loc] = g[:, loc, 0]
                B[:, 1, 2 * loc + 1] = g[:, loc, 1]
                B[:, 2, 2 * loc] = 0.5 * g[:, loc, 1]
                B[:, 2, 2 * loc + 1] = 0.5 * g[:, loc, 0]
        mesh._cache[key] = B
    return mesh._cache[key]


def _displacement_element_forms(mesh: Mesh, params: MaterialParams):
    """Cached measure-weighted B' (W A) B and B' W B per element."""
    key = ("disp_forms", params.K, params.nu)
    if key not in mesh._cache:
        B = _strain_displacement_matrices(mesh)
        elas = params.elasticity(mesh.dim)
        W = np.diag(frobenius_weights(mesh.dim))
        WA = W @ elas.matrix
        m = mesh.element_measure[:, None, None]
        forms_A = m * np.einsum("eci,cd,edj->eij", B, WA, B)
        forms_I = m * np.einsum("eci,cd,edj->eij", B, W, B)
        mesh._cache[key] = (forms_A, forms_I, B, WA, W)
    return mesh._cache[key]


def assemble_displacement_system(mesh, v, p, u_prev, params: MaterialParams, h):
    """Global SPD matrix and load vector of the displacement subproblem.

    Minimizes 0.5 (v^2+eta) A(Eu-p):(Eu-p) [+ beta1/2h |Eu - Eu_prev|^2]
    over nodal u; returns (K, f) before Dirichlet elimination.
    """
    forms_A, forms_I, B, WA, W = _displacement_element_forms(mesh, params)
    p = mesh.check_elementwise(p, "p")
    a = params.effective_stiffness(mesh.element_mean(v))
    viscous = params.uses_viscous_strain()
    if viscous:
        if u_prev is None:
            raise InvalidParameterError("viscoelastic model needs u_prev")
        if not (h and h > 0):
            raise InvalidParameterError("viscoelastic model needs h > 0")
        c = params.beta1 / h
    else:
        c = 0.0

    elem_mat = a[:, None, None] * forms_A
    if c:
        elem_mat = elem_mat + c * forms_I

    # rhs: B' (a WA p + c W Eu_prev) per element, measure-weighted
    rhs_comp = a[:, None] * (p @ WA.T)
    if c:
        rhs_comp = rhs_comp + c * (mesh.strain(u_prev) @ W.T)
    elem_rhs = mesh.element_measure[:, None] * np.einsum("eci,ec->ei", B, rhs_comp)

    dofs = _element_dof_matrix(mesh)
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = mesh.n_nodes * (1 if mesh.dim == 1 else 2)
    K = sparse.coo_matrix((elem_mat.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    f = np.zeros(n)
    np.add.at(f, dofs.ravel(), elem_rhs.ravel())
    return K, f


def solve_displacement(mesh, v, p, u_prev, dirichlet: DirichletBC, params, h=None):
    """Equilibrium displacement with (p, v) frozen.

    Returns the unique minimizer of the displacement part of the total
    energy under the given Dirichlet constraints, plus a SolveReport with
    the relative algebraic residual.
    """
    K, f = assemble_displacement_system(mesh, v, p, u_prev, params, h)
    n = K.shape[0]
    free = dirichlet.free_mask(n)
    x = np.zeros(n)
    x[dirichlet.dofs] = dirichlet.values

    if dirichlet.dofs.size == 0 and n > 0:
        raise ConstraintError(
            "no Dirichlet constraints: rigid motions leave the system singular"
        )
    Kff = K[free][:, free].tocsc()
    rhs = f[free] - K[free][:, ~free] @ x[~free]
    if Kff.shape[0] == 0:
        u_flat = x
        resid = 0.0
        iters = 0
    else:
        diag = Kff.diagonal()
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ConstraintError(
                "displacement system is singular; check Dirichlet constraints"
            )
        lu = spla.splu(Kff)
        upiv = np.abs(lu.U.diagonal())
        if upiv.min() <= 1e-14 * upiv.max():
            raise ConstraintError(
                "displacement system is singular (a rigid motion is left free); "
                "check Dirichlet constraints"
            )
        sol = lu.solve(rhs)
        iters = 1
        scale = 1.0 + np.linalg.norm(rhs)
        resid = np.linalg.norm(Kff @ sol - rhs) / scale
        if not np.all(np.isfinite(sol)):
            raise ConstraintError(
                "displacement solve produced non-finite values; "
                "the system is likely singular (rigid motion left free)"
            )
        if resid > DISPLACEMENT_RTOL:
            # conjugate-gradient polish for ill-conditioned factorizations
            sol, info = spla.cg(
                Kff, rhs, x0=sol, rtol=1e-14, atol=0.0, maxiter=10 * Kff.shape[0]
            )
            iters += 1
            resid = np.linalg.norm(Kff @ sol - rhs) / scale
            if info != 0 or resid > DISPLACEMENT_RTOL:
                raise SolverError(
                    f"displacement solver stalled at residual {resid:.3e}",
                    report=SolveReport(iters, float(resid), False),
                )
        u_flat = x
        u_flat[free] = sol

    u = u_flat if mesh.dim == 1 else u_flat.reshape(mesh.n_nodes, 2)
    return u, SolveReport(iters, float(resid), True)


# ----------------------------------------------------------------------
# Plastic strain
# ----------------------------------------------------------------------
def plastic_driving_force(mesh, u, v, p, params: MaterialParams):
    """Per-element driving force a A(Eu - p) - B p (components)."""
    e = mesh.strain(u) - mesh.check_elementwise(p, "p")
    a = params.effective_stiffness(mesh.element_mean(v))
    elas = params.elasticity(mesh.dim)
    return a[:, None] * elas.apply(e) - params.k_hard * p


def _dev_sph_split(s):
    """Split (m, 3) symmetric tensors into deviatoric and spherical parts."""
    mean = 0.5 * (s[:, 0] + s[:, 1])
    sph = np.zeros_like(s)
    sph[:, 0] = mean
    sph[:, 1] = mean
    return s - sph, sph


def plastic_update_elements(a, eu, p_prev, params: MaterialParams, h, dim):
    """Exact per-element minimizer of the plastic increment energy.

    Minimizes, element by element,
        0.5 a A(eu - q):(eu - q) + tau |q - p0| (+ beta2/2h |q - p0|^2)
        (+ 0.5 k |q|^2)
    via the trial-force test and a radial reduction: in the eigenbasis of
    the smooth Hessian the optimal step is collinear with the (rescaled)
    trial force, leaving one scalar equation for the step length, solved
    by a guarded Newton iteration (exact in 1D).
    """
    elas = params.elasticity(dim)
    k = params.k_hard
    b2h = params.beta2 / h if params.uses_viscous_plastic() else 0.0
    tau = params.tau

    s = a[:, None] * elas.apply(eu - p_prev) - k * p_prev
    s_norm = frobenius_norm(s, dim)
    p = p_prev.copy()
    dp = np.zeros_like(p)
    flow = s_norm > tau * (1.0 + 1e-15)
    if not np.any(flow):
        return p, dp, 0

    if tau == 0.0:
        # purely smooth: invert the Hessian mode by mode
        if dim == 1:
            h_iso = a[flow] * params.K + k + b2h
            dp[flow] = s[flow] / h_iso[:, None]
        else:
            sd, ss = _dev_sph_split(s[flow])
            hd = a[flow] * elas.eig_dev + k + b2h
            hs = a[flow] * elas.eig_sph + k + b2h
            dp[flow] = sd / hd[:, None] + ss / hs[:, None]
        p[flow] = p_prev[flow] + dp[flow]
        return p, dp, 0

    if dim == 1:
        h_iso = a[flow] * params.K + k + b2h
        rho = (s_norm[flow] - tau) / h_iso
        dp[flow, 0] = rho * np.sign(s[flow, 0])
        p[flow, 0] = p_prev[flow, 0] + dp[flow, 0]
        return p, dp, 1

    sd, ss = _dev_sph_split(s[flow])
    nd2 = np.sum(frobenius_weights(2) * sd**2, axis=1)
    ns2 = np.sum(frobenius_weights(2) * ss**2, axis=1)
    hd = a[flow] * elas.eig_dev + k + b2h
    hs = a[flow] * elas.eig_sph + k + b2h

    # scalar residual g(rho) = |sd|^2/(hd rho + tau)^2 + |ss|^2/(hs rho + tau)^2 - 1
    # g is decreasing and convex with g(0) > 0, so Newton from 0 converges
    # monotonically from below.
    rho = np.zeros(hd.shape[0])
    iters = 0
    for iters in range(1, 101):
        td = hd * rho + tau
        ts = hs * rho + tau
        g = nd2 / td**2 + ns2 / ts**2 - 1.0
        dg = -2.0 * (hd * nd2 / td**3 + hs * ns2 / ts**3)
        step = g / dg
        rho = rho - step
        if np.max(np.abs(g)) < 1e-14:
            break
    dp[flow] = sd / (hd + tau / rho)[:, None] + ss / (hs + tau / rho)[:, None]
    p[flow] = p_prev[flow] + dp[flow]
    return p, dp, iters


def _plastic_smooth_grad(a, eu, q, p_prev, params, h, dim):
    elas = params.elasticity(dim)
    b2h = params.beta2 / h if params.uses_viscous_plastic() else 0.0
    return (
        -a[:, None] * elas.apply(eu - q)
        + params.k_hard * q
        + b2h * (q - p_prev)
    )


def plastic_update_descent(a, eu, p_prev, params: MaterialParams, h, dim, tol):
    """Proximal gradient descent on the plastic increment energy.

    Verification mode mirroring a plain gradient-descent treatment of the
    smooth part with shrinkage for the |q - p0| term.  Much slower than
    the radial reduction; identical minimizer (the problem is strictly
    convex).
    """
    elas = params.elasticity(dim)
    b2h = params.beta2 / h if params.uses_viscous_plastic() else 0.0
    L = a * max(elas.eig_dev, elas.eig_sph) + params.k_hard + b2h
    step = 1.0 / L
    tau = params.tau
    q = p_prev.copy()
    dq = np.zeros_like(q)
    iters = 0
    for iters in range(1, 200_001):
        grad = _plastic_smooth_grad(a, eu, q, p_prev, params, h, dim)
        y = q - step[:, None] * grad - p_prev
        norm = frobenius_norm(y, dim)
        shrink = np.maximum(0.0, 1.0 - step * tau / np.where(norm > 0, norm, 1.0))
        dq_new = shrink[:, None] * y
        q_new = p_prev + dq_new
        moved = frobenius_norm(q_new - q, dim).max()
        q, dq = q_new, dq_new
        if moved < 1e-14 and iters > 1:
            break
        if iters % 64 == 0:
            if plastic_kkt_residual(a, eu, q, p_prev, params, h, dim, dp=dq) <= tol:
                break
    return q, dq, iters


def plastic_kkt_residual(a, eu, p, p_prev, params: MaterialParams, h, dim, dp=None):
    """Max violation of the discrete flow-rule optimality conditions.

    Where the increment vanishes the driving force must stay inside the
    yield ball; where it flows, the driving force must equal
    tau * dp/|dp| + beta2 dp/h + B p.  Passing the increment ``dp``
    explicitly avoids the quantization of p_prev + dp - p_prev, whose
    recovered direction is meaningless once |dp| ~ eps * |p_prev|.
    """
    elas = params.elasticity(dim)
    b2h = params.beta2 / h if params.uses_viscous_plastic() else 0.0
    tau = params.tau
    if dp is None:
        dp = p - p_prev
    dp_norm = frobenius_norm(dp, dim)
    drive = a[:, None] * elas.apply(eu - p) - params.k_hard * p
    stick = dp_norm <= 1e-14 * (1.0 + frobenius_norm(p_prev, dim))
    resid = np.zeros(p.shape[0])
    if np.any(stick):
        resid[stick] = np.maximum(
            0.0, frobenius_norm(drive[stick], dim) - tau
        )
    flow = ~stick
    if np.any(flow):
        target = (
            tau * dp[flow] / dp_norm[flow, None] + b2h * dp[flow]
        )
        resid[flow] = frobenius_norm(drive[flow] - target, dim)
    return float(resid.max()) if resid.size else 0.0


def solve_plastic(mesh, u, v, p_prev, params: MaterialParams, h=None, method="exact"):
    """Element-wise plastic strain update with (u, v) frozen.

    ``method="exact"`` uses the trial test plus the radial Newton reduction;
    ``method="descent"`` runs the proximal-gradient verification mode.
    """
    if params.uses_viscous_plastic() and not (h and h > 0):
        raise InvalidParameterError("viscoplastic model needs h > 0")
    p_prev = mesh.check_elementwise(p_prev, "p_prev")
    eu = mesh.strain(u)
    a = params.effective_stiffness(mesh.element_mean(v))
    tol = PLASTIC_TOL * (1.0 + params.tau)

    if method == "exact":
        p, dp, iters = plastic_update_elements(a, eu, p_prev, params, h, mesh.dim)
    elif method == "descent":
        p, dp, iters = plastic_update_descent(a, eu, p_prev, params, h, mesh.dim, tol)
    else:
        raise InvalidParameterError(f"unknown plastic method {method!r}")

    resid = plastic_kkt_residual(a, eu, p, p_prev, params, h, mesh.dim, dp=dp)
    if resid > tol:
        worst = int(
            np.argmax(
                np.abs(
                    frobenius_norm(
                        plastic_driving_force(mesh, u, v, p, params), mesh.dim
                    )
                )
            )
        )
        raise SolverError(
            f"plastic update failed KKT check (residual {resid:.3e})",
            worst_element=worst,
            report=SolveReport(iters, resid, False),
        )
    return p, SolveReport(iters, resid, True)


# ----------------------------------------------------------------------
# Phase field
# ----------------------------------------------------------------------
def _phase_structure(mesh: Mesh):
    """Cached CSR scatter pattern and geometric element matrices."""
    key = "phase_structure"
    if key not in mesh._cache:
        k = mesh.nodes_per_element
        rows = np.repeat(mesh.elements, k, axis=1).ravel()
        cols = np.tile(mesh.elements, (1, k)).ravel()
        g = mesh.p1_gradients
        grad_local = np.einsum("eid,ejd->eij", g, g) * mesh.element_measure[:, None, None]
        ones_local = np.full((k, k), 1.0 / k**2)
        mesh._cache[key] = (rows, cols, grad_local, ones_local)
    return mesh._cache[key]


def assemble_phase_system(mesh: Mesh, c_elem, params: MaterialParams):
    """Quadratic form (Q, b) of the phase-field subproblem.

    Minimizing 0.5 v'Qv - b'v reproduces, up to constants, the sum of the
    degraded elastic energy (with per-element strain energy density
    ``c_elem = A e : e``) and the surface energy.
    """
    eps = params.epsilon
    rows, cols, grad_local, ones_local = _phase_structure(mesh)
    coef = mesh.element_measure * (c_elem + 0.5 / eps)
    data = coef[:, None, None] * ones_local[None] + 2.0 * eps * grad_local
    n = mesh.n_nodes
    Q = sparse.coo_matrix((data.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    b = np.zeros(n)
    k = mesh.nodes_per_element
    np.add.at(
        b,
        mesh.elements.ravel(),
        np.repeat(mesh.element_measure / (2.0 * eps * k), k),
    )
    return Q, b


def phase_kkt_residual(Q, b, x, lo, hi, free):
    """Projected first-order residual of the bound-constrained quadratic."""
    r = Q @ x - b
    viol = np.abs(r)
    at_lo = x <= lo + 1e-14
    at_hi = x >= hi - 1e-14
    viol[at_lo] = np.maximum(0.0, -r[at_lo])
    viol[at_hi & ~at_lo] = np.maximum(0.0, r[at_hi & ~at_lo])
    viol[at_lo & at_hi] = 0.0  # pinched bounds leave no feasible direction
    viol[~free] = 0.0
    return float(viol.max()) if viol.size else 0.0


def solve_phase_field(
    mesh, u, p, v_prev, dirichlet_nodes, params: MaterialParams, v_init=None
):
    """Phase field minimizing elastic + surface energy under its bounds.

    Constraints: 0 <= v <= v_prev node-wise (irreversibility) and v = 1 on
    ``dirichlet_nodes``, where the pin overrides the upper bound.  Solved
    by projected SOR, stopping on the KKT residual.
    """
    v_prev = mesh.check_nodal(v_prev, "v_prev")
    if v_prev.min() < -1e-12:
        raise ConstraintError("upper bound v_prev has negative entries")
    e = mesh.strain(u) - mesh.check_elementwise(p, "p")
    elas = params.elasticity(mesh.dim)
    c_elem = elas.inner(e, e)
    Q, b = assemble_phase_system(mesh, c_elem, params)

    n = mesh.n_nodes
    lo = np.zeros(n)
    hi = np.clip(v_prev, 0.0, 1.0)
    free = np.ones(n, dtype=bool)
    dirichlet_nodes = np.asarray(dirichlet_nodes, dtype=np.int64)
    free[dirichlet_nodes] = False

    x = hi.copy() if v_init is None else np.clip(v_init, lo, hi)
    x[dirichlet_nodes] = 1.0

    diag = Q.diagonal()
    sweeps = 0
    resid = phase_kkt_residual(Q, b, x, lo, hi, free)
    while resid > PHASE_KKT_TOL and sweeps < SOR_MAX_SWEEPS:
        projected_sor_sweeps(
            Q.indptr, Q.indices, Q.data, diag, b, x, lo, hi, free,
            SOR_OMEGA, SOR_CHECK_EVERY,
        )
        sweeps += SOR_CHECK_EVERY
        resid = phase_kkt_residual(Q, b, x, lo, hi, free)
    if resid > PHASE_KKT_TOL:
        raise SolverError(
            f"phase-field SOR stalled at KKT residual {resid:.3e}",
            report=SolveReport(sweeps, resid, False),
        )
    return x, SolveReport(sweeps, resid, True)
