"""Report figures rendered next to the delimited output."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .material import Model
from .trace_io import trace_rows


def plot_energy_evolution(trace, path):
    """Energy components versus loading time, one line per active term."""
    rows = trace_rows(trace)
    t = np.array([r["t"] for r in rows])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(t, [r["total"] for r in rows], "k-", lw=2, label="total")
    ax.plot(t, [r["elastic"] for r in rows], label="elastic")
    ax.plot(t, [r["plastic_cum"] for r in rows], label="plastic (cum.)")
    model = trace.scenario.params.model
    if model is Model.HARDENING:
        ax.plot(t, [r["hardening"] for r in rows], label="hardening")
    if model is Model.VISCOELASTIC:
        ax.plot(t, [r["viscoelastic_cum"] for r in rows], label="viscoelastic (cum.)")
    if model is Model.VISCOPLASTIC:
        ax.plot(t, [r["viscoplastic_cum"] for r in rows], label="viscoplastic (cum.)")
    ax.plot(t, [r["surface"] for r in rows], label="surface")
    bt = [r["t"] for r in rows if r["backtracked"]]
    if bt:
        for x in bt:
            ax.axvline(x, color="0.8", lw=0.5, zorder=0)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(loc="best", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_final_state(state, mesh, path):
    """Final fields: profiles in 1D, filled triangulations in 2D."""
    if mesh.dim == 1:
        norms = np.abs(state.p[:, 0])
        centers = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        axes[0].plot(mesh.nodes, state.v, "-")
        axes[0].set_ylabel("v")
        axes[0].set_ylim(-0.05, 1.05)
        axes[1].step(centers, norms, where="mid")
        axes[1].set_ylabel("|p|")
        axes[1].set_xlabel("x")
        for ax in axes:
            ax.grid(alpha=0.3)
    else:
        import matplotlib.tri as mtri

        tri = mtri.Triangulation(
            mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.elements
        )
        norms = np.sqrt(
            state.p[:, 0] ** 2 + state.p[:, 1] ** 2 + 2 * state.p[:, 2] ** 2
        )
        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
        pc0 = axes[0].tripcolor(tri, state.v, vmin=0.0, vmax=1.0, cmap="viridis")
        fig.colorbar(pc0, ax=axes[0], label="v")
        axes[0].set_title("phase field")
        pc1 = axes[1].tripcolor(tri, facecolors=norms, cmap="magma")
        fig.colorbar(pc1, ax=axes[1], label="|p|")
        axes[1].set_title("plastic strain magnitude")
        for ax in axes:
            ax.set_aspect("equal")
    fig.suptitle(f"t = {state.t:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
