"""Command-line interface.

``fracplast run <config> [--preset NAME] [--out DIR] [--no-backtracking]
[--audit]`` runs an evolution and writes the energy CSV, VTK snapshots,
figures and (optionally) the audit report.  ``fracplast audit <trace-dir>``
re-checks a stored run offline from its snapshots and CSV.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .audit import run_audit
from .config import PRESET_NAMES, parse_config, render_config
from .evolution import run_evolution
from .exceptions import ConfigError, FracplastError, SolverError
from .trace_io import read_energy_csv, read_snapshot, write_run_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fracplast",
        description="Quasi-static phase-field fracture with plasticity "
        "and viscous dissipation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an evolution from a config file")
    run_p.add_argument("config", help="config file (may be empty when --preset is given)")
    run_p.add_argument("--preset", choices=PRESET_NAMES, help="start from a named preset")
    run_p.add_argument("--out", help="output directory (overrides [output] dir)")
    run_p.add_argument(
        "--no-backtracking", action="store_true", help="disable the backtracking repair"
    )
    run_p.add_argument("--audit", action="store_true", help="also write audit_report.txt")

    audit_p = sub.add_parser("audit", help="re-run the audit on a stored trace")
    audit_p.add_argument("trace_dir", help="directory produced by 'run'")
    return parser


def _cmd_run(args) -> int:
    try:
        with open(args.config) as f:
            text = f.read()
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.preset)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.no_backtracking:
            cfg = replace(cfg, backtracking=False)
        if args.audit:
            cfg = replace(cfg, audit=True)
        scenario = cfg.build_scenario()
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    print(
        f"running {cfg.preset or 'custom scenario'}: "
        f"{scenario.mesh.n_elements} elements, {scenario.n_steps} steps, "
        f"model={cfg.material.model.value}, backtracking={scenario.backtracking}"
    )
    try:
        trace = run_evolution(scenario)
    except SolverError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except FracplastError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        written = write_run_outputs(
            trace, cfg.out_dir, stride=cfg.snapshot_stride,
            config_text=render_config(cfg),
        )
        if cfg.audit:
            report = run_audit(trace)
            with open(os.path.join(cfg.out_dir, "audit_report.txt"), "w") as f:
                f.write("\n".join(report.lines()) + "\n")
            written.append("audit_report.txt")
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO

    for line in _summary_lines(trace):
        print(line)
    print(f"wrote {cfg.out_dir}/: {', '.join(written)}")
    if trace.diagnostics:
        for msg in trace.diagnostics:
            print(f"diagnostic: {msg}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _summary_lines(trace):
    from .audit import detect_onsets

    t_plastic, t_crack = detect_onsets(trace, 0.1, 1e-6)
    fmt = lambda t: "none" if t is None else f"{t:g}"
    return [
        f"completed {trace.n_accepted()} steps "
        f"({len(trace.backtrack_events)} backtracking events)",
        f"onsets: plastic={fmt(t_plastic)} crack={fmt(t_crack)} "
        f"(thresholds |p|>1e-06, v<0.1)",
        f"final: min v = {trace.states[-1].v.min():.4f}, "
        f"total energy = {trace.breakdowns[-1].total:.6g}",
    ]


def _cmd_audit(args) -> int:
    """Offline audit from stored snapshots and the energy CSV.

    Snapshot-based checks run at the stored stride; run with
    snapshot_stride = 1 for a step-exact offline audit.
    """
    d = args.trace_dir
    csv_path = os.path.join(d, "energy.csv")
    try:
        rows = read_energy_csv(csv_path)
        snaps = sorted(
            f for f in os.listdir(d) if f.startswith("snapshot_") and f.endswith(".vtk")
        )
        states = [read_snapshot(os.path.join(d, f)) for f in snaps]
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except Exception as err:  # malformed files
        print(f"error reading trace: {err}", file=sys.stderr)
        return EXIT_IO

    problems = []
    t = rows["t"]
    if not np.all(np.diff(t) > 0):
        problems.append("CSV times are not strictly increasing")
    # totals column must equal the model-specific sum of the row's parts;
    # which extra column is active is inferred from the nonzero columns
    part_sum = rows["elastic"] + rows["plastic_cum"] + rows["surface"]
    for extra in ("hardening", "viscoelastic_cum", "viscoplastic_cum"):
        if np.any(rows[extra] != 0.0) and np.allclose(
            rows["total"], part_sum + rows[extra], rtol=1e-12, atol=0.0
        ):
            part_sum = part_sum + rows[extra]
            break
    if not np.allclose(rows["total"], part_sum, rtol=1e-12, atol=1e-300):
        problems.append("total column does not match the sum of its components")

    v_prev = None
    for tn, _, _, pdata, _ in states:
        if v_prev is not None and np.any(pdata["v"] > v_prev + 1e-14):
            problems.append(f"phase field increased between snapshots (t={tn:g})")
            break
        v_prev = pdata["v"]

    print(f"audited {len(t)} CSV rows and {len(states)} snapshots from {d}")
    vmin = min(st[3]["v"].min() for st in states)
    pmax = max(st[4]["p_norm"].max() for st in states)
    print(f"min v over snapshots: {vmin:.4f}; max |p|: {pmax:.6g}")
    if problems:
        for p in problems:
            print(f"VIOLATED: {p}", file=sys.stderr)
        return EXIT_SOLVER
    print("all offline checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_audit(args)


if __name__ == "__main__":
    sys.exit(main())
