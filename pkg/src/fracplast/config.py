"""Run configuration: line-oriented config text, presets, validation.

The config format is ``key = value`` lines grouped under ``[section]``
headers with sections [mesh], [material], [time], [bc], [output].  Unknown
keys are errors.  A config may start from a named preset and override any
subset of keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .evolution import (
    BACKTRACK_TOL_DEFAULT,
    DELTA_DEFAULT,
    MAX_INNER_DEFAULT,
    MAX_OUTER_DEFAULT,
    RESTART_BUDGET_DEFAULT,
    Scenario,
)
from .exceptions import ConfigError, FracplastError, InvalidParameterError
from .material import MaterialParams, Model
from .mesh import build_interval_mesh, build_rect_mesh, tag_boundary_segment

PRESET_NAMES = (
    "traction1d",
    "traction1d-model1",
    "traction1d-model2",
    "traction1d-model3",
    "traction2d-model3",
    "plasticine-model3",
)


@dataclass(frozen=True)
class MeshSpec:
    """Declarative mesh description, buildable into a Mesh."""

    dim: int
    lx: float
    dx: float
    ly: float = 0.0
    segments: tuple = ()  # (tag, side, a, b) applied in order

    def build(self):
        if self.dim == 1:
            mesh = build_interval_mesh(self.lx, self.dx)
        else:
            mesh = build_rect_mesh(self.lx, self.ly, self.dx)
        for tag, side, a, b in self.segments:
            mesh = tag_boundary_segment(mesh, side, (a, b), tag)
        return mesh


@dataclass(frozen=True)
class RunConfig:
    """Declarative description of one run: scenario + output behaviour."""

    mesh: MeshSpec
    material: MaterialParams
    T_f: float
    h: float
    dirichlet_u: tuple  # ((tag, (rate_or_None, ...)), ...)
    dirichlet_v_tags: tuple
    delta1: float = DELTA_DEFAULT
    delta2: float = 5e-3
    max_inner: int = MAX_INNER_DEFAULT
    max_outer: int = MAX_OUTER_DEFAULT
    restart_budget: int = RESTART_BUDGET_DEFAULT
    backtrack_tol: float = BACKTRACK_TOL_DEFAULT
    backtracking: bool = True
    out_dir: str = "out"
    snapshot_stride: int = 10
    audit: bool = False
    plastic_method: str = "exact"
    preset: str = ""

    def build_scenario(self) -> Scenario:
        return Scenario(
            mesh=self.mesh.build(),
            params=self.material,
            T_f=self.T_f,
            h=self.h,
            dirichlet_u={tag: comps for tag, comps in self.dirichlet_u},
            dirichlet_v_tags=self.dirichlet_v_tags,
            delta1=self.delta1,
            delta2=self.delta2,
            max_inner=self.max_inner,
            max_outer=self.max_outer,
            backtracking=self.backtracking,
            backtrack_tol=self.backtrack_tol,
            restart_budget=self.restart_budget,
            plastic_method=self.plastic_method,
        )


# ----------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------
def _traction1d(model=Model.PERFECT, **mat):
    material = MaterialParams(
        K=4.0, tau=mat.pop("tau", 1.5), epsilon=0.094, eta=1e-6,
        model=model, **mat,
    )
    return RunConfig(
        mesh=MeshSpec(dim=1, lx=10.0, dx=0.015),
        material=material,
        T_f=4.0,
        h=0.025,
        dirichlet_u=(("left", (0.0,)), ("right", (10.0,))),
        dirichlet_v_tags=("left", "right"),
    )


def preset_config(name: str) -> RunConfig:
    """Named experiment configurations with their published parameters."""
    if name == "traction1d":
        cfg = _traction1d()
    elif name == "traction1d-model1":
        cfg = _traction1d(Model.VISCOELASTIC, beta1=0.01)
    elif name == "traction1d-model2":
        cfg = _traction1d(Model.VISCOPLASTIC, tau=1.0, beta2=0.1)
    elif name == "traction1d-model3":
        cfg = _traction1d(Model.HARDENING, tau=1.0, k_hard=0.5)
    elif name == "traction2d-model3":
        cfg = RunConfig(
            mesh=MeshSpec(dim=2, lx=2.0, ly=1.0, dx=0.05),
            material=MaterialParams(
                K=10.0, nu=0.252, tau=1.0, epsilon=0.25, eta=1e-6,
                k_hard=100.0, model=Model.HARDENING,
            ),
            T_f=5.0,
            h=0.1,
            dirichlet_u=(("left", (0.0, 0.0)), ("right", (1.0, 0.0))),
            dirichlet_v_tags=("left", "right"),
        )
    elif name == "plasticine-model3":
        # bottom flanks outside the indenter are the rigid plate face
        # (frictionless contact, u.n = 0); left edge is a symmetry plane.
        cfg = RunConfig(
            mesh=MeshSpec(
                dim=2, lx=1.0, ly=1.0, dx=0.017,
                segments=(
                    ("omega3", "bottom", 0.3, 0.7),
                    ("omega2", "bottom", 0.0, 0.3),
                    ("omega4", "bottom", 0.7, 1.0),
                    ("omega6", "top", 0.0, 1.0),
                    ("omega1", "left", 0.0, 1.0),
                ),
            ),
            material=MaterialParams(
                K=100.0, nu=0.252, tau=1.0, epsilon=0.15, eta=1e-6,
                k_hard=100.0, model=Model.HARDENING,
            ),
            T_f=2.0,
            h=0.05,
            dirichlet_u=(
                ("omega3", (0.0, 1.0)),
                ("omega6", (0.0, 0.0)),
                ("omega1", (0.0, None)),
                ("omega2", (None, 0.0)),
                ("omega4", (None, 0.0)),
            ),
            dirichlet_v_tags=("omega3", "omega6"),
        )
    else:
        raise ConfigError(
            f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}"
        )
    return replace(cfg, preset=name, dirichlet_u=tuple(sorted(cfg.dirichlet_u)))


def preset(name: str) -> Scenario:
    """Scenario for a named preset experiment."""
    return preset_config(name).build_scenario()


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------
_SECTIONS = ("mesh", "material", "time", "bc", "output")

_MESH_KEYS = {"dim", "l", "lx", "ly", "dx"}
_MATERIAL_KEYS = {"model", "k", "nu", "tau", "beta1", "beta2", "k_hard", "epsilon", "eta"}
_TIME_KEYS = {
    "t_f", "h", "delta1", "delta2", "max_inner", "max_outer",
    "restart_budget", "backtrack_tol", "backtracking",
}
_OUTPUT_KEYS = {"dir", "snapshot_stride", "audit", "plastic_solver"}


def _parse_bool(text, line):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}", line=line)


def _parse_float(text, key, line):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {text!r}", line=line) from None


def _parse_component(token, key, line):
    if token.lower() in ("free", "none", "-"):
        return None
    return _parse_float(token, key, line)


def parse_config(text: str, preset_name: str | None = None) -> RunConfig:
    """Parse config text, optionally over a preset's defaults.

    Raises ConfigError with the offending line number for syntax problems
    and with the offending key for validation problems.
    """
    sections: dict[str, list] = {s: [] for s in _SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", line=lineno)
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside any [section]", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        sections[current].append((lineno, key.lower(), key, value))

    if preset_name is not None:
        base = preset_config(preset_name)
    else:
        base = None

    mesh_kw: dict = {}
    segments: list = []
    mat_kw: dict = {}
    time_kw: dict = {}
    bc_u: dict = {}
    v_tags = None
    out_kw: dict = {}

    for lineno, key, key_raw, value in sections["mesh"]:
        if key not in _MESH_KEYS:
            raise ConfigError(f"unknown [mesh] key {key_raw!r}", line=lineno, key=key_raw)
        if key == "dim":
            mesh_kw["dim"] = int(_parse_float(value, key, lineno))
        elif key in ("l", "lx"):
            mesh_kw["lx"] = _parse_float(value, key, lineno)
        else:
            mesh_kw[key] = _parse_float(value, key, lineno)

    for lineno, key, key_raw, value in sections["material"]:
        if key not in _MATERIAL_KEYS:
            raise ConfigError(
                f"unknown [material] key {key_raw!r}", line=lineno, key=key_raw
            )
        if key == "model":
            try:
                mat_kw["model"] = Model.parse(value)
            except InvalidParameterError as err:
                raise ConfigError(str(err), line=lineno, key=key_raw) from None
        elif key == "k":
            mat_kw["K"] = _parse_float(value, key, lineno)
        else:
            mat_kw[key] = _parse_float(value, key, lineno)

    for lineno, key, key_raw, value in sections["time"]:
        if key not in _TIME_KEYS:
            raise ConfigError(f"unknown [time] key {key_raw!r}", line=lineno, key=key_raw)
        if key == "backtracking":
            time_kw["backtracking"] = _parse_bool(value, lineno)
        elif key in ("max_inner", "max_outer", "restart_budget"):
            time_kw[key] = int(_parse_float(value, key, lineno))
        elif key == "t_f":
            time_kw["T_f"] = _parse_float(value, key, lineno)
        else:
            time_kw[key] = _parse_float(value, key, lineno)

    for lineno, key, key_raw, value in sections["bc"]:
        if key.startswith("segment."):
            tag = key_raw.split(".", 1)[1]
            parts = value.split()
            if len(parts) != 3:
                raise ConfigError(
                    f"segment.{tag} expects '<side> <a> <b>'", line=lineno, key=key_raw
                )
            segments.append(
                (tag, parts[0].lower(),
                 _parse_float(parts[1], key, lineno), _parse_float(parts[2], key, lineno))
            )
        elif key.startswith("u."):
            tag = key_raw.split(".", 1)[1]
            comps = tuple(
                _parse_component(tok, key, lineno) for tok in value.split()
            )
            if not comps:
                raise ConfigError(f"u.{tag} needs component rates", line=lineno, key=key_raw)
            bc_u[tag] = comps
        elif key == "v1.tags":
            v_tags = tuple(value.split())
        else:
            raise ConfigError(f"unknown [bc] key {key_raw!r}", line=lineno, key=key_raw)

    for lineno, key, key_raw, value in sections["output"]:
        if key not in _OUTPUT_KEYS:
            raise ConfigError(f"unknown [output] key {key_raw!r}", line=lineno, key=key_raw)
        if key == "dir":
            out_kw["out_dir"] = value
        elif key == "snapshot_stride":
            out_kw["snapshot_stride"] = int(_parse_float(value, key, lineno))
        elif key == "audit":
            out_kw["audit"] = _parse_bool(value, lineno)
        else:
            out_kw["plastic_method"] = value.strip().lower()

    # ---- merge over the preset ------------------------------------
    if base is not None:
        spec = base.mesh
        if mesh_kw:
            spec = replace(
                spec,
                dim=mesh_kw.get("dim", spec.dim),
                lx=mesh_kw.get("lx", spec.lx),
                ly=mesh_kw.get("ly", spec.ly),
                dx=mesh_kw.get("dx", spec.dx),
            )
        if segments:
            spec = replace(spec, segments=tuple(segments))
        try:
            material = replace(base.material, **mat_kw) if mat_kw else base.material
        except FracplastError as err:
            raise ConfigError(str(err), key="material") from None
        dirichlet = dict(base.dirichlet_u)
        dirichlet.update(bc_u)
        cfg = replace(
            base,
            mesh=spec,
            material=material,
            dirichlet_u=tuple(sorted(dirichlet.items())),
            dirichlet_v_tags=v_tags if v_tags is not None else base.dirichlet_v_tags,
            **time_kw,
            **out_kw,
        )
    else:
        missing = [
            name
            for name, ok in (
                ("[mesh] dim/l/dx", {"dim", "lx", "dx"} <= set(mesh_kw)),
                ("[material] K/tau/epsilon/eta", {"K", "tau", "epsilon", "eta"} <= set(mat_kw)),
                ("[time] T_f/h", {"T_f", "h"} <= set(time_kw)),
                ("[bc] u.<tag>", bool(bc_u)),
            )
            if not ok
        ]
        if missing:
            raise ConfigError(
                "config without preset is incomplete; missing " + "; ".join(missing)
            )
        if mesh_kw["dim"] == 2 and "ly" not in mesh_kw:
            raise ConfigError("2D mesh needs ly", key="ly")
        spec = MeshSpec(
            dim=mesh_kw["dim"],
            lx=mesh_kw["lx"],
            ly=mesh_kw.get("ly", 0.0),
            dx=mesh_kw["dx"],
            segments=tuple(segments),
        )
        try:
            material = MaterialParams(**mat_kw)
        except FracplastError as err:
            raise ConfigError(str(err), key="material") from None
        cfg = RunConfig(
            mesh=spec,
            material=material,
            dirichlet_u=tuple(sorted(bc_u.items())),
            dirichlet_v_tags=v_tags or (),
            **time_kw,
            **out_kw,
        )

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.snapshot_stride < 1:
        raise ConfigError("snapshot_stride must be >= 1", key="snapshot_stride")
    if cfg.plastic_method not in ("exact", "descent"):
        raise ConfigError(
            f"plastic_solver must be 'exact' or 'descent', got {cfg.plastic_method!r}",
            key="plastic_solver",
        )
    try:
        cfg.build_scenario()
    except FracplastError as err:
        raise ConfigError(str(err)) from None


# ----------------------------------------------------------------------
# Rendering (config round-trip)
# ----------------------------------------------------------------------
def render_config(cfg: RunConfig) -> str:
    """Config text that parses back to ``cfg`` (up to float formatting)."""
    lines = []
    lines.append("[mesh]")
    lines.append(f"dim = {cfg.mesh.dim}")
    lines.append(f"lx = {cfg.mesh.lx!r}")
    if cfg.mesh.dim == 2:
        lines.append(f"ly = {cfg.mesh.ly!r}")
    lines.append(f"dx = {cfg.mesh.dx!r}")
    lines.append("")
    lines.append("[material]")
    m = cfg.material
    lines.append(f"model = {m.model.value}")
    lines.append(f"K = {m.K!r}")
    lines.append(f"nu = {m.nu!r}")
    lines.append(f"tau = {m.tau!r}")
    lines.append(f"beta1 = {m.beta1!r}")
    lines.append(f"beta2 = {m.beta2!r}")
    lines.append(f"k_hard = {m.k_hard!r}")
    lines.append(f"epsilon = {m.epsilon!r}")
    lines.append(f"eta = {m.eta!r}")
    lines.append("")
    lines.append("[time]")
    lines.append(f"T_f = {cfg.T_f!r}")
    lines.append(f"h = {cfg.h!r}")
    lines.append(f"delta1 = {cfg.delta1!r}")
    lines.append(f"delta2 = {cfg.delta2!r}")
    lines.append(f"max_inner = {cfg.max_inner}")
    lines.append(f"max_outer = {cfg.max_outer}")
    lines.append(f"restart_budget = {cfg.restart_budget}")
    lines.append(f"backtrack_tol = {cfg.backtrack_tol!r}")
    lines.append(f"backtracking = {str(cfg.backtracking).lower()}")
    lines.append("")
    lines.append("[bc]")
    for tag, side, a, b in cfg.mesh.segments:
        lines.append(f"segment.{tag} = {side} {a!r} {b!r}")
    for tag, comps in cfg.dirichlet_u:
        rendered = " ".join("free" if c is None else repr(float(c)) for c in comps)
        lines.append(f"u.{tag} = {rendered}")
    if cfg.dirichlet_v_tags:
        lines.append("v1.tags = " + " ".join(cfg.dirichlet_v_tags))
    lines.append("")
    lines.append("[output]")
    lines.append(f"dir = {cfg.out_dir}")
    lines.append(f"snapshot_stride = {cfg.snapshot_stride}")
    lines.append(f"audit = {str(cfg.audit).lower()}")
    lines.append(f"plastic_solver = {cfg.plastic_method}")
    lines.append("")
    return "\n".join(lines)
