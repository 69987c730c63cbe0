"""Interval and structured triangular meshes with P1/P0 bookkeeping.

Meshes are immutable after construction and safe to share read-only.
Nodal (P1) fields are arrays of shape ``(n_nodes,)`` (scalars) or
``(n_nodes, 2)`` (2D vectors); element-wise (P0) fields have one row per
element.  Symmetric tensors are stored in component form: ``(1,)`` in 1D
and ``(xx, yy, xy)`` in 2D.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .exceptions import ConstraintError, InvalidParameterError, ShapeError

SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Geometry plus the connectivity needed by P1/P0 fields.

    Attributes
    ----------
    dim : int
        1 (interval) or 2 (triangulated rectangle).
    nodes : ndarray
        Node coordinates, shape ``(n_nodes,)`` in 1D, ``(n_nodes, 2)`` in 2D.
    elements : ndarray of int
        Node indices per element: 2 per interval element, 3 per triangle.
    element_measure : ndarray
        Length (1D) or area (2D) of each element; strictly positive.
    boundary_tags : dict
        Tag name -> sorted array of boundary node indices.  Tags partition
        the boundary; each boundary node carries exactly one tag.
    p1_gradients : ndarray
        Constant gradient of each local P1 basis function,
        shape ``(n_elements, nodes_per_element, dim)``.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    element_measure: np.ndarray
    boundary_tags: dict
    p1_gradients: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # ------------------------------------------------------------------
    # Basic queries
    # ------------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def nodes_per_element(self) -> int:
        return self.elements.shape[1]

    @property
    def n_strain_components(self) -> int:
        """Components of a symmetric tensor: 1 in 1D, 3 (xx, yy, xy) in 2D."""
        return 1 if self.dim == 1 else 3

    def measure(self) -> float:
        """Total length/area of the domain."""
        return float(self.element_measure.sum())

    def tagged_nodes(self, tag: str) -> np.ndarray:
        try:
            return self.boundary_tags[tag]
        except KeyError:
            raise ConstraintError(f"unknown boundary tag {tag!r}") from None

    # ------------------------------------------------------------------
    # Field operators
    # ------------------------------------------------------------------
    def check_nodal(self, x: np.ndarray, name: str, vector: bool = False):
        x = np.asarray(x, dtype=float)
        want = (self.n_nodes, self.dim) if (vector and self.dim == 2) else (self.n_nodes,)
        if x.shape != want:
            raise ShapeError(f"{name} has shape {x.shape}, expected {want}")
        return x

    def check_elementwise(self, x: np.ndarray, name: str):
        x = np.asarray(x, dtype=float)
        want = (self.n_elements, self.n_strain_components)
        if x.shape != want:
            raise ShapeError(f"{name} has shape {x.shape}, expected {want}")
        return x

    def element_mean(self, v: np.ndarray) -> np.ndarray:
        """Barycentric (one-point quadrature) value of a nodal field."""
        v = self.check_nodal(v, "nodal field")
        return v[self.elements].mean(axis=1)

    def scalar_gradient(self, v: np.ndarray) -> np.ndarray:
        """Element-wise constant gradient of a nodal scalar, shape (m, dim)."""
        v = self.check_nodal(v, "nodal field")
        return np.einsum("ek,ekd->ed", v[self.elements], self.p1_gradients)

    def strain(self, u: np.ndarray) -> np.ndarray:
        """Symmetrized gradient of the displacement in component form.

        Returns shape ``(n_elements, 1)`` in 1D (``u'``) and
        ``(n_elements, 3)`` in 2D (``e_xx, e_yy, e_xy``).
        """
        if self.dim == 1:
            u = self.check_nodal(u, "displacement")
            return self.scalar_gradient(u)
        u = self.check_nodal(u, "displacement", vector=True)
        ue = u[self.elements]  # (m, 3, 2)
        grad = np.einsum("ekc,ekd->ecd", ue, self.p1_gradients)  # d u_c / d x_d
        exx = grad[:, 0, 0]
        eyy = grad[:, 1, 1]
        exy = 0.5 * (grad[:, 0, 1] + grad[:, 1, 0])
        return np.stack([exx, eyy, exy], axis=1)

    # ------------------------------------------------------------------
    # Cached P1 matrices (geometry only)
    # ------------------------------------------------------------------
    def p1_mass_matrix(self) -> sparse.csr_matrix:
        """Consistent P1 mass matrix for scalar fields."""
        if "mass" not in self._cache:
            k = self.nodes_per_element
            local = (np.ones((k, k)) + np.eye(k)) / ((k + 1) * k)
            data = self.element_measure[:, None, None] * local[None, :, :]
            self._cache["mass"] = self._assemble_nodal(data)
        return self._cache["mass"]

    def p1_stiffness_matrix(self) -> sparse.csr_matrix:
        """P1 stiffness (grad-grad) matrix for scalar fields."""
        if "stiffness" not in self._cache:
            g = self.p1_gradients
            local = np.einsum("eid,ejd->eij", g, g)
            data = self.element_measure[:, None, None] * local
            self._cache["stiffness"] = self._assemble_nodal(data)
        return self._cache["stiffness"]

    def _assemble_nodal(self, elem_data: np.ndarray) -> sparse.csr_matrix:
        k = self.nodes_per_element
        rows = np.repeat(self.elements, k, axis=1).ravel()
        cols = np.tile(self.elements, (1, k)).ravel()
        mat = sparse.coo_matrix(
            (elem_data.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes)
        )
        return mat.tocsr()

    def node_adjacency(self):
        """Set of undirected node-node edges appearing in elements (cached)."""
        if "adjacency" not in self._cache:
            pairs = []
            k = self.nodes_per_element
            for i in range(k):
                for j in range(i + 1, k):
                    pairs.append(self.elements[:, [i, j]])
            edges = np.vstack(pairs)
            edges.sort(axis=1)
            self._cache["adjacency"] = np.unique(edges, axis=0)
        return self._cache["adjacency"]


# ----------------------------------------------------------------------
# Constructors
# ----------------------------------------------------------------------
def build_interval_mesh(L: float, dx: float) -> Mesh:
    """Uniform mesh of the interval (0, L).

    The element count is ``round(L/dx)`` clamped to at least one element,
    so the effective spacing is the closest uniform spacing to ``dx``.
    End nodes are tagged "left" (x=0) and "right" (x=L).
    """
    if not L > 0:
        raise InvalidParameterError("L must be > 0")
    if not dx > 0:
        raise InvalidParameterError("dx must be > 0")
    n_el = max(1, int(round(L / dx)))
    nodes = np.linspace(0.0, L, n_el + 1)
    elements = np.column_stack([np.arange(n_el), np.arange(1, n_el + 1)]).astype(np.int64)
    measure = np.diff(nodes)
    grads = np.empty((n_el, 2, 1))
    grads[:, 0, 0] = -1.0 / measure
    grads[:, 1, 0] = 1.0 / measure
    tags = {
        "left": np.array([0], dtype=np.int64),
        "right": np.array([n_el], dtype=np.int64),
    }
    return Mesh(1, nodes, elements, measure, tags, grads)


def build_rect_mesh(Lx: float, Ly: float, dx: float) -> Mesh:
    """Structured triangulation of the rectangle (0, Lx) x (0, Ly).

    ``round(Lx/dx) x round(Ly/dx)`` cells, each split along the same
    diagonal into two triangles.  Side tags partition the boundary, with
    corner nodes assigned to "left"/"right".
    """
    if not (Lx > 0 and Ly > 0):
        raise InvalidParameterError("Lx and Ly must be > 0")
    if not dx > 0:
        raise InvalidParameterError("dx must be > 0")
    nx = max(1, int(round(Lx / dx)))
    ny = max(1, int(round(Ly / dx)))
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):  # column i, row j
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a = nid(i, j)
            b = nid(i + 1, j)
            c = nid(i + 1, j + 1)
            d = nid(i, j + 1)
            tris.append((a, b, c))  # fixed diagonal a-c
            tris.append((a, c, d))
    elements = np.array(tris, dtype=np.int64)

    coords = nodes[elements]  # (m, 3, 2)
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    measure = 0.5 * det
    if not np.all(measure > 0):
        raise InvalidParameterError("degenerate element in structured mesh")

    # P1 gradients: grad N_i = rot90(opposite edge) / (2A)
    grads = np.empty((elements.shape[0], 3, 2))
    for loc in range(3):
        pj = coords[:, (loc + 1) % 3]
        pk = coords[:, (loc + 2) % 3]
        grads[:, loc, 0] = (pj[:, 1] - pk[:, 1]) / det
        grads[:, loc, 1] = (pk[:, 0] - pj[:, 0]) / det

    x, y = nodes[:, 0], nodes[:, 1]
    tol = 1e-12 * max(Lx, Ly)
    on_left = np.abs(x) <= tol
    on_right = np.abs(x - Lx) <= tol
    on_bottom = np.abs(y) <= tol
    on_top = np.abs(y - Ly) <= tol
    # corners go to left/right so that tags partition the boundary
    tags = {
        "left": np.flatnonzero(on_left),
        "right": np.flatnonzero(on_right),
        "bottom": np.flatnonzero(on_bottom & ~on_left & ~on_right),
        "top": np.flatnonzero(on_top & ~on_left & ~on_right),
    }
    tags = {k: v.astype(np.int64) for k, v in tags.items()}
    return Mesh(2, nodes, elements, measure, tags, grads)


def tag_boundary_segment(mesh: Mesh, side: str, interval, tag: str) -> Mesh:
    """Re-tag the nodes of ``side`` whose side coordinate lies in ``interval``.

    The match is inclusive with half-spacing tolerance.  Returns a new mesh;
    the input is unchanged.  Raises if the interval leaves the side extent
    or if it overlaps a region already re-tagged away from ``side``.
    """
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise InvalidParameterError("interval must satisfy a <= b")
    valid_sides = SIDES_1D if mesh.dim == 1 else SIDES_2D
    if side not in valid_sides:
        raise InvalidParameterError(f"unknown side {side!r}")
    if tag in mesh.boundary_tags:
        raise ConstraintError(f"tag {tag!r} already exists")

    if mesh.dim == 1:
        coord_all = mesh.nodes
        geo_side = mesh.tagged_nodes(side)  # single end node
        extent = (0.0, float(mesh.nodes[-1]))
    else:
        axis = 1 if side in ("left", "right") else 0
        fixed_axis = 1 - axis
        fixed_val = {
            "left": 0.0,
            "bottom": 0.0,
            "right": float(mesh.nodes[:, 0].max()),
            "top": float(mesh.nodes[:, 1].max()),
        }[side]
        coord_all = mesh.nodes[:, axis]
        on_side = np.abs(mesh.nodes[:, fixed_axis] - fixed_val) <= 1e-12 * (
            1.0 + abs(fixed_val)
        )
        geo_side = np.flatnonzero(on_side)
        extent = (float(coord_all.min()), float(coord_all.max()))

    coords = coord_all[geo_side]
    if coords.size > 1:
        spacing = float(np.min(np.diff(np.sort(coords))))
    else:
        spacing = extent[1] - extent[0]
    tol = 0.5 * spacing

    if a < extent[0] - tol or b > extent[1] + tol:
        raise InvalidParameterError(
            f"interval [{a}, {b}] outside {side!r} extent {extent}"
        )

    in_range = geo_side[(coords >= a - tol) & (coords <= b + tol)]
    # interior overlap with an existing user tag is an error; nodes that fall
    # only inside the endpoint tolerance zones belong to an adjacent segment
    # and are skipped, so touching intervals tile a side without gaps
    interior = geo_side[(coords > a + tol) & (coords < b - tol)]
    base = set(SIDES_1D if mesh.dim == 1 else SIDES_2D)
    taken = np.empty(0, dtype=np.int64)
    for name, members in mesh.boundary_tags.items():
        if name in base:
            continue
        if np.intersect1d(interior, members).size:
            raise ConstraintError(
                f"interval [{a}, {b}] on {side!r} overlaps nodes already "
                f"tagged {name!r}"
            )
        taken = np.union1d(taken, np.intersect1d(in_range, members))
    side_nodes = mesh.boundary_tags.get(side, np.empty(0, dtype=np.int64))
    # corner nodes owned by another base side are skipped, deterministically
    picked = np.intersect1d(np.setdiff1d(in_range, taken), side_nodes)
    if picked.size == 0:
        raise ConstraintError(
            f"no {side!r} nodes available in [{a}, {b}]"
        )

    new_tags = {k: v.copy() for k, v in mesh.boundary_tags.items()}
    new_tags[side] = np.setdiff1d(side_nodes, picked)
    new_tags[tag] = np.sort(picked)
    return Mesh(
        mesh.dim,
        mesh.nodes,
        mesh.elements,
        mesh.element_measure,
        new_tags,
        mesh.p1_gradients,
    )
