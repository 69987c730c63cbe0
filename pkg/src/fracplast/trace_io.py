"""Persistence: energy-trace CSV, legacy-VTK snapshots, run outputs.

Both formats are plain ASCII with 17-significant-digit floats, so files
are bit-stable across runs and round-trip doubles exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .energy import State
from .evolution import EvolutionTrace
from .exceptions import InvalidParameterError
from .material import Model
from .mesh import Mesh

CSV_HEADER = (
    "t,elastic,plastic_cum,hardening,viscoelastic_cum,viscoplastic_cum,"
    "surface,total,outer_iters,inner_iters,backtracked"
)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trace_rows(trace: EvolutionTrace):
    """CSV rows: per accepted step, cumulative dissipation accounting.

    The total column is the model-specific sum of the row's components,
    i.e. state terms plus the accumulated dissipation sums.
    """
    pl_cum, ve_cum, vp_cum = trace.cumulative_dissipation()
    model = trace.scenario.params.model
    backtracked = trace.backtracked_steps()
    rows = []
    for n in range(1, trace.n_accepted() + 1):
        b = trace.breakdowns[n - 1]
        total = b.elastic + pl_cum[n - 1] + b.surface
        if model is Model.VISCOELASTIC:
            total += ve_cum[n - 1]
        elif model is Model.VISCOPLASTIC:
            total += vp_cum[n - 1]
        elif model is Model.HARDENING:
            total += b.hardening
        rows.append(
            dict(
                t=trace.states[n].t,
                elastic=b.elastic,
                plastic_cum=pl_cum[n - 1],
                hardening=b.hardening,
                viscoelastic_cum=ve_cum[n - 1],
                viscoplastic_cum=vp_cum[n - 1],
                surface=b.surface,
                total=total,
                outer_iters=trace.outer_iterations[n - 1],
                inner_iters=trace.inner_iterations[n - 1],
                backtracked=1 if n in backtracked else 0,
            )
        )
    return rows


def write_energy_csv(trace: EvolutionTrace, path) -> None:
    """One row per final accepted step, sorted by t, 17 significant digits."""
    rows = trace_rows(trace)
    if not rows:
        raise InvalidParameterError("cannot write an empty trace")
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for r in rows:
            f.write(
                ",".join(
                    [
                        _fmt(r["t"]),
                        _fmt(r["elastic"]),
                        _fmt(r["plastic_cum"]),
                        _fmt(r["hardening"]),
                        _fmt(r["viscoelastic_cum"]),
                        _fmt(r["viscoplastic_cum"]),
                        _fmt(r["surface"]),
                        _fmt(r["total"]),
                        str(r["outer_iters"]),
                        str(r["inner_iters"]),
                        str(r["backtracked"]),
                    ]
                )
                + "\n"
            )


def read_energy_csv(path):
    """Rows of the energy CSV as a dict of numpy arrays."""
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise InvalidParameterError(f"unexpected CSV header in {path}")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    cols = CSV_HEADER.split(",")
    return {name: data[:, i] for i, name in enumerate(cols)}


# ----------------------------------------------------------------------
# Legacy VTK snapshots
# ----------------------------------------------------------------------
def write_snapshot(state: State, mesh: Mesh, path) -> None:
    """Legacy-VTK ASCII unstructured grid with u, v, p and |p| fields."""
    n = mesh.n_nodes
    m = mesh.n_elements
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"fracplast state t={_fmt(state.t)}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {n} double\n")
        if mesh.dim == 1:
            for x in mesh.nodes:
                f.write(f"{_fmt(x)} 0 0\n")
        else:
            for x, y in mesh.nodes:
                f.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        k = mesh.nodes_per_element
        f.write(f"CELLS {m} {m * (k + 1)}\n")
        for elem in mesh.elements:
            f.write(" ".join([str(k)] + [str(i) for i in elem]) + "\n")
        f.write(f"CELL_TYPES {m}\n")
        cell_type = 3 if mesh.dim == 1 else 5  # VTK_LINE / VTK_TRIANGLE
        for _ in range(m):
            f.write(f"{cell_type}\n")

        f.write(f"POINT_DATA {n}\n")
        f.write("SCALARS v double 1\nLOOKUP_TABLE default\n")
        for val in state.v:
            f.write(_fmt(val) + "\n")
        f.write("VECTORS u double\n")
        if mesh.dim == 1:
            for val in state.u:
                f.write(f"{_fmt(val)} 0 0\n")
        else:
            for ux, uy in state.u:
                f.write(f"{_fmt(ux)} {_fmt(uy)} 0\n")

        f.write(f"CELL_DATA {m}\n")
        f.write("TENSORS p double\n")
        for row in state.p:
            if mesh.dim == 1:
                pxx, pyy, pxy = row[0], 0.0, 0.0
            else:
                pxx, pyy, pxy = row
            f.write(f"{_fmt(pxx)} {_fmt(pxy)} 0\n")
            f.write(f"{_fmt(pxy)} {_fmt(pyy)} 0\n")
            f.write("0 0 0\n")
        f.write("SCALARS p_norm double 1\nLOOKUP_TABLE default\n")
        if mesh.dim == 1:
            norms = np.abs(state.p[:, 0])
        else:
            norms = np.sqrt(
                state.p[:, 0] ** 2 + state.p[:, 1] ** 2 + 2 * state.p[:, 2] ** 2
            )
        for val in norms:
            f.write(_fmt(val) + "\n")


def read_snapshot(path):
    """Parse a snapshot written by write_snapshot.

    Returns (t, points, cells, point_data, cell_data) with the tensor field
    reduced back to component form.
    """
    with open(path) as f:
        tokens_lines = f.read().splitlines()

    it = iter(tokens_lines)
    next(it)  # version
    title = next(it)
    t = float(title.split("t=")[1]) if "t=" in title else 0.0
    next(it)  # ASCII
    next(it)  # DATASET

    line = next(it).split()
    assert line[0] == "POINTS"
    n = int(line[1])
    points = np.array([next(it).split() for _ in range(n)], dtype=float)

    line = next(it).split()
    assert line[0] == "CELLS"
    m = int(line[1])
    cells = np.array([next(it).split()[1:] for _ in range(m)], dtype=np.int64)
    line = next(it).split()
    assert line[0] == "CELL_TYPES"
    for _ in range(m):
        next(it)

    point_data = {}
    cell_data = {}
    line = next(it).split()
    assert line[0] == "POINT_DATA"
    line = next(it).split()  # SCALARS v
    next(it)  # LOOKUP_TABLE
    point_data["v"] = np.array([float(next(it)) for _ in range(n)])
    line = next(it).split()  # VECTORS u
    point_data["u"] = np.array([next(it).split() for _ in range(n)], dtype=float)

    line = next(it).split()
    assert line[0] == "CELL_DATA"
    next(it)  # TENSORS p
    tensors = []
    for _ in range(m):
        rows = [next(it).split() for _ in range(3)]
        full = np.array(rows, dtype=float)
        tensors.append([full[0, 0], full[1, 1], full[0, 1]])
    cell_data["p"] = np.array(tensors)
    next(it)  # SCALARS p_norm
    next(it)  # LOOKUP_TABLE
    cell_data["p_norm"] = np.array([float(next(it)) for _ in range(m)])
    return t, points, cells, point_data, cell_data


# ----------------------------------------------------------------------
# Run output bundle
# ----------------------------------------------------------------------
def snapshot_steps(trace: EvolutionTrace, stride: int):
    """Step indices persisted as snapshots: every stride-th plus the final."""
    n = trace.n_accepted()
    steps = list(range(0, n + 1, stride))
    if steps[-1] != n:
        steps.append(n)
    return steps


def write_run_outputs(trace: EvolutionTrace, out_dir, stride: int = 10,
                      config_text: str | None = None, figures: bool = True):
    """Write energy CSV, snapshots, config echo and figures into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    write_energy_csv(trace, os.path.join(out_dir, "energy.csv"))
    mesh = trace.scenario.mesh
    for n in snapshot_steps(trace, stride):
        write_snapshot(
            trace.states[n], mesh, os.path.join(out_dir, f"snapshot_{n:06d}.vtk")
        )
    if config_text is not None:
        with open(os.path.join(out_dir, "run.ini"), "w") as f:
            f.write(config_text)
    written = ["energy.csv", "run.ini"] if config_text else ["energy.csv"]
    if figures:
        from . import figures as figmod

        figmod.plot_energy_evolution(
            trace, os.path.join(out_dir, "energies.png")
        )
        figmod.plot_final_state(
            trace.states[-1], mesh, os.path.join(out_dir, "final_state.png")
        )
        written += ["energies.png", "final_state.png"]
    return written
