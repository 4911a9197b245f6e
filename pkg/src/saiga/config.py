"""Run configuration files.

A configuration is an INI file with fixed sections (``geometry``, ``material``,
``laser``, ``scan``, ``boundary``, ``mesh``, ``stepping``, ``output``). Every
key is validated and typed here, so that a run either gets a complete
:class:`RunConfig` or a :class:`ConfigError` pointing at ``file:line``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .analytic import DEFAULT_CULL, LaserSpec, Material, ScanPath
from .discretization import ROLES, BoundaryTags, ConfigError, refine_to_size
from .splines import (FaceId, NurbsVolume, box_volume, elevate_degree,
                      parse_geometry, quarter_cylinder_part)

REQUIRED = object()
BUILTIN_CASES = ("single_source", "contour_scan")


# -- value converters; each raises ValueError with a short reason -------------

def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _positive(s):
    v = _float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonneg(s):
    v = _float(s)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _posint(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _floats(n=None):
    def conv(s):
        vals = [_float(t) for t in s.replace(",", " ").split()]
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return tuple(vals)
    return conv


def _times(s):
    vals = _floats()(s)
    if any(v < 0 for v in vals):
        raise ValueError("times must be non-negative")
    return tuple(sorted(set(vals)))


_BOOL = {"yes": True, "true": True, "on": True, "1": True,
         "no": False, "false": False, "off": False, "0": False}


def _bools3(s):
    parts = s.split()
    if len(parts) != 3:
        raise ValueError("expected three yes/no flags")
    try:
        return tuple(_BOOL[p.lower()] for p in parts)
    except KeyError as exc:
        raise ValueError(f"not a yes/no flag: {exc.args[0]}") from None


def _ints3_or_one(s):
    vals = [int(t) for t in s.split()]
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3 or min(vals) < 1:
        raise ValueError("expected one or three positive integers")
    return tuple(vals)


def _face(s):
    try:
        return FaceId.parse(s.strip())
    except (KeyError, ValueError):
        raise ValueError(f"unknown face {s.strip()!r}") from None


def _role(s):
    s = s.strip().lower()
    if s not in ROLES:
        raise ValueError(f"role must be one of {', '.join(ROLES)}")
    return s


def _probes(s):
    out = {}
    for item in filter(None, (p.strip() for p in s.split(";"))):
        name, sep, rest = item.partition(":")
        name = name.strip()
        if not sep or not re.fullmatch(r"[A-Za-z0-9_\-]+", name):
            raise ValueError(f"probe entries look like 'name: xi eta zeta', got {item!r}")
        xi = _floats(3)(rest)
        if any(v < 0 or v > 1 for v in xi):
            raise ValueError(f"probe {name} lies outside [0, 1]^3")
        if name in out:
            raise ValueError(f"duplicate probe {name}")
        out[name] = xi
    return out


def _waypoints(s):
    pts = [_floats(2)(p) for p in s.split(";") if p.strip()]
    if not pts:
        raise ValueError("no waypoints")
    return tuple(pts)


def _arc(s):
    vals = _floats()(s)
    if len(vals) not in (5, 6):
        raise ValueError("arc = cx cy radius start_deg end_deg [segments]")
    if not vals[2] > 0:
        raise ValueError("arc radius must be positive")
    if len(vals) == 6 and (vals[5] < 1 or vals[5] != int(vals[5])):
        raise ValueError("arc segments must be a positive integer")
    return vals


def _shape3(s):
    vals = tuple(int(t) for t in s.split())
    if len(vals) != 3 or min(vals) < 2:
        raise ValueError("expected three integers >= 2")
    return vals


SCHEMA = {
    "geometry": {
        "builtin": (str, None), "file": (str, None), "block": (str, None),
        "size": (_positive, 2e-3), "radius": (_positive, 1e-3), "height": (_positive, 2e-3),
        "lengths": (_floats(3), (1.0, 1.0, 1.0)), "degrees": (_ints3_or_one, (2, 2, 2)),
        "elements": (_ints3_or_one, (1, 1, 1)), "origin": (_floats(3), (0.0, 0.0, 0.0)),
    },
    "material": {
        "k": (_positive, REQUIRED), "rho": (_positive, REQUIRED), "cp": (_positive, REQUIRED),
        "T_c": (_float, 0.0),
    },
    "laser": {
        "power": (_nonneg, REQUIRED), "speed": (_positive, REQUIRED),
        "spot_radius": (_positive, REQUIRED), "absorptivity": (_positive, REQUIRED),
        "dt": (_positive, 1e-5),
    },
    "scan": {
        "waypoints": (_waypoints, None), "arc": (_arc, None),
        "start_time": (_nonneg, 0.0), "z": (_float, None),
    },
    "boundary": {f.value: (_role, REQUIRED) for f in FaceId},
    "mesh": {
        "degree": (_ints3_or_one, None), "l_e": (_positive, None), "target_size": (_positive, None),
        "anchor": (_floats(3), (0.5, 0.0, 1.0)), "graded": (_bools3, (True, True, True)),
        "grading_ratio": (_positive, 1.25), "max_size": (_positive, None),
        "scan_face": (_face, FaceId.ETAMIN), "quad_order": (_ints3_or_one, None),
        "boundary_quad_multiplier": (_posint, 3),
    },
    "stepping": {
        "theta": (_float, 0.5), "dt": (_positive, None), "substeps": (_posint, 1),
        "t_end": (_positive, REQUIRED), "solver_tol": (_positive, 1e-10),
        "max_iter": (_posint, None), "cull_exponent": (_positive, DEFAULT_CULL),
        "threads": (_posint, 1),
    },
    "output": {
        "directory": (str, "output"), "probes": (_probes, {}), "probe_every": (_posint, 1),
        "field_times": (_times, ()), "field_grid": (_shape3, (21, 21, 11)),
        "profile_face": (_face, FaceId.ETAMIN), "profile_times": (_times, ()),
        "profile_samples": (_posint, 801), "profile_depth": (_float, 1.0),
        "axis_center": (_floats(2), None), "error_time": (_positive, None),
    },
}
OPTIONAL_SECTIONS = {"geometry", "mesh", "stepping", "output", "scan"}


def _line_index(text: str):
    """``(section, key) -> line`` and ``section -> line`` for error messages."""
    keys, sections = {}, {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            sections.setdefault(section, n)
            continue
        m = re.match(r"([^\s=:#;][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            keys.setdefault((section, m.group(1).strip().lower()), n)
    return keys, sections


@dataclass
class MeshSettings:
    degree: tuple | None = None
    l_e: float | None = None
    target_size: float | None = None
    anchor: tuple = (0.5, 0.0, 1.0)
    graded: tuple = (True, True, True)
    grading_ratio: float = 1.25
    max_size: float | None = None
    scan_face: FaceId = FaceId.ETAMIN
    quad_order: tuple | None = None
    boundary_quad_multiplier: int = 3


@dataclass
class SteppingSettings:
    t_end: float
    theta: float = 0.5
    dt: float | None = None
    substeps: int = 1
    solver_tol: float = 1e-10
    max_iter: int | None = None
    cull_exponent: float = DEFAULT_CULL
    threads: int = 1


@dataclass
class OutputSettings:
    directory: str = "output"
    probes: dict = field(default_factory=dict)
    probe_every: int = 1
    field_times: tuple = ()
    field_grid: tuple = (21, 21, 11)
    profile_face: FaceId = FaceId.ETAMIN
    profile_times: tuple = ()
    profile_samples: int = 801
    profile_depth: float = 1.0
    axis_center: tuple | None = None
    error_time: float | None = None


@dataclass
class RunConfig:
    geometry: NurbsVolume
    material: Material
    laser: LaserSpec
    path: ScanPath
    tags: BoundaryTags
    mesh: MeshSettings
    stepping: SteppingSettings
    output: OutputSettings
    values: dict = field(repr=False, default_factory=dict)
    source: str = "<config>"
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def step(self) -> float:
        """Integration step (source step divided by the substep count)."""
        dt = self.stepping.dt if self.stepping.dt is not None else self.laser.dt
        return dt / self.stepping.substeps

    def step_index(self, t: float, what: str = "time") -> int:
        """Index of ``t`` on the step grid; raises ConfigError off-grid or past t_end."""
        n = int(round(t / self.step))
        if abs(n * self.step - t) > 1e-6 * self.step:
            raise ConfigError(f"{what} {t!r} is not a multiple of the step {self.step!r}")
        if n > self.n_steps:
            raise ConfigError(f"{what} {t!r} is beyond t_end={self.stepping.t_end!r}")
        return n

    @property
    def n_steps(self) -> int:
        return int(round(self.stepping.t_end / self.step))

    @property
    def target_size(self) -> float | None:
        if self.mesh.target_size is not None:
            return self.mesh.target_size
        if self.mesh.l_e is not None:
            return self.mesh.l_e * self.laser.spot_radius
        return None

    def volume(self, l_e: float | None = None) -> NurbsVolume:
        """Analysis patch: degree-elevated and refined geometry."""
        vol = self.geometry
        if self.mesh.degree is not None:
            vol = elevate_degree(vol, [max(a, b) for a, b in zip(self.mesh.degree, vol.degrees)])
        size = l_e * self.laser.spot_radius if l_e is not None else self.target_size
        if size is not None:
            vol = refine_to_size(vol, size, self.mesh.anchor, self.mesh.graded,
                                 self.mesh.grading_ratio, self.mesh.max_size)
        return vol


def _builtin_geometry(v, label):
    name = v["builtin"].strip().lower()
    if name == "quarter_cylinder":
        return quarter_cylinder_part(v["size"], v["radius"], v["height"])
    if name == "box":
        return box_volume(v["lengths"], v["degrees"], v["elements"], v["origin"])
    raise ConfigError(f"{label}: unknown builtin geometry {name!r} (quarter_cylinder, box)")


def parse_config_text(text: str, source: str = "<config>", base_dir=None) -> RunConfig:
    """Parse configuration text; see :func:`parse_config`."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    keys, sec_lines = _line_index(text)

    def where(section, key=None):
        line = keys.get((section, key)) if key else None
        line = line or sec_lines.get(section)
        return f"{source}:{line}" if line else source

    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ConfigError(f"{source}:{lineno or '?'}: syntax error: {msg}") from None

    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{where(section)}: unknown section [{section}]")
    for section, schema in SCHEMA.items():
        present = cp.has_section(section)
        if not present and section not in OPTIONAL_SECTIONS:
            raise ConfigError(f"{source}: missing section [{section}]")
        raw = dict(cp.items(section)) if present else {}
        for key in raw:
            if key not in schema:
                raise ConfigError(f"{where(section, key.lower())}: unknown key {section}.{key}")
        out = {}
        for key, (conv, default) in schema.items():
            if key in raw:
                try:
                    out[key] = conv(raw[key].strip()) if conv is not str else raw[key].strip()
                except ValueError as exc:
                    raise ConfigError(f"{where(section, key.lower())}: {section}.{key}: {exc}") from None
            elif default is REQUIRED:
                raise ConfigError(f"{where(section)}: missing key {section}.{key}")
            else:
                out[key] = default
        values[section] = out

    g = values["geometry"]
    given = [k for k in ("builtin", "file", "block") if g[k] is not None]
    if len(given) != 1:
        raise ConfigError(f"{where('geometry')}: give exactly one of geometry.builtin, "
                          f"geometry.file, geometry.block")
    try:
        if g["builtin"] is not None:
            geom = _builtin_geometry(g, where("geometry", "builtin"))
        elif g["file"] is not None:
            gpath = base_dir / g["file"]
            try:
                gtext = gpath.read_text()
            except OSError as exc:
                raise ConfigError(f"{where('geometry', 'file')}: cannot read {gpath}: {exc.strerror}") from None
            geom = parse_geometry(gtext, str(gpath))
        else:
            geom = parse_geometry(g["block"], where("geometry", "block"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where('geometry')}: {exc}") from None

    m = values["material"]
    mat = Material(m["k"], m["rho"], m["cp"], m["T_c"])
    la = values["laser"]
    if la["absorptivity"] > 1:
        raise ConfigError(f"{where('laser', 'absorptivity')}: laser.absorptivity must not exceed 1")
    laser = LaserSpec(la["power"], la["speed"], la["spot_radius"], la["absorptivity"], la["dt"])

    s = values["scan"]
    if (s["waypoints"] is None) == (s["arc"] is None):
        raise ConfigError(f"{where('scan')}: give exactly one of scan.waypoints, scan.arc")
    z = s["z"] if s["z"] is not None else float(geom.control[..., 2].max())
    try:
        if s["arc"] is not None:
            cx, cy, r, a0, a1, *rest = s["arc"]
            path = ScanPath.arc((cx, cy), r, math.radians(a0), math.radians(a1),
                                int(rest[0]) if rest else 720, s["start_time"], z)
        else:
            path = ScanPath(np.array(s["waypoints"]), s["start_time"], z)
    except ValueError as exc:
        raise ConfigError(f"{where('scan')}: {exc}") from None

    try:
        tags = BoundaryTags({f: values["boundary"][f.value] for f in FaceId})
    except ValueError as exc:
        raise ConfigError(f"{where('boundary')}: {exc}") from None

    mesh = MeshSettings(**values["mesh"])
    if mesh.l_e is not None and mesh.target_size is not None:
        raise ConfigError(f"{where('mesh', 'l_e')}: give mesh.l_e or mesh.target_size, not both")
    if any(not 0 <= a <= 1 for a in mesh.anchor):
        raise ConfigError(f"{where('mesh', 'anchor')}: mesh.anchor must lie in [0, 1]^3")
    if mesh.grading_ratio < 1:
        raise ConfigError(f"{where('mesh', 'grading_ratio')}: mesh.grading_ratio must be >= 1")

    st = SteppingSettings(**values["stepping"])
    if not 0 <= st.theta <= 1:
        raise ConfigError(f"{where('stepping', 'theta')}: stepping.theta must lie in [0, 1]")
    out = OutputSettings(**values["output"])
    if out.profile_face.axis == 2:
        raise ConfigError(f"{where('output', 'profile_face')}: profiles need a lateral face")
    if not 0 <= out.profile_depth <= 1:
        raise ConfigError(f"{where('output', 'profile_depth')}: output.profile_depth must lie in [0, 1]")

    cfg = RunConfig(geom, mat, laser, path, tags, mesh, st, out, values, source, base_dir)
    if abs(cfg.n_steps * cfg.step - st.t_end) > 1e-6 * cfg.step:
        raise ConfigError(f"{where('stepping', 't_end')}: stepping.t_end is not a multiple of the step")
    for key in ("field_times", "profile_times"):
        for t in getattr(out, key):
            try:
                cfg.step_index(t, f"output.{key}")
            except ConfigError as exc:
                raise ConfigError(f"{where('output', key)}: {exc}") from None
    if out.error_time is not None:
        try:
            cfg.step_index(out.error_time, "output.error_time")
        except ConfigError as exc:
            raise ConfigError(f"{where('output', 'error_time')}: {exc}") from None
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file.

    ``path`` may also name a bundled case (``single_source``, ``contour_scan``).
    Relative geometry files resolve against the file's directory.
    """
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN_CASES:
        text = resources.files("saiga.cases").joinpath(f"{path}.cfg").read_text()
        return parse_config_text(text, f"{path}.cfg", Path.cwd())
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such configuration file") from None
    return parse_config_text(text, str(p), p.parent)


def _fmt_value(v):
    if isinstance(v, FaceId):
        return v.value
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return "; ".join(f"{k}: " + " ".join(repr(float(c)) for c in xi) for k, xi in v.items())
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(" ".join(repr(float(c)) for c in p) for p in v)
    if isinstance(v, tuple):
        return " ".join(_fmt_value(x) for x in v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Configuration text that parses back to the same settings."""
    lines = []
    for section, vals in cfg.values.items():
        lines.append(f"[{section}]")
        for key, v in vals.items():
            if v is None or (isinstance(v, (tuple, dict)) and not v):
                continue
            text = _fmt_value(v)
            if key == "block":
                text = "\n" + "\n".join("    " + ln for ln in text.splitlines() if ln.strip())
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)
