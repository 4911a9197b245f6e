"""Point-source temperature fields of a discretized laser scan.

Each exposure is an instantaneous point source in an infinite medium,
regularized by shifting its start to ``tau = t_I - r_laser**2 / (8 alpha)``.
All temperatures here are rises above the platform temperature.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

DEFAULT_CULL = 60.0


@dataclass(frozen=True)
class Material:
    k: float
    rho: float
    cp: float
    T_c: float = 0.0

    def __post_init__(self):
        for name in ("k", "rho", "cp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"material {name} must be positive")

    @property
    def alpha(self) -> float:
        return self.k / (self.rho * self.cp)

    @property
    def rho_cp(self) -> float:
        return self.rho * self.cp


TI6AL4V = Material(k=42.0, rho=4420.0, cp=990.0)


@dataclass(frozen=True)
class LaserSpec:
    power: float
    speed: float
    spot_radius: float
    absorptivity: float
    dt: float = 1e-5

    def __post_init__(self):
        for name in ("speed", "spot_radius", "absorptivity", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"laser {name} must be positive")
        if self.power < 0:
            raise ValueError("laser power must be non-negative")
        if self.absorptivity > 1:
            raise ValueError("absorptivity must not exceed 1")

    @property
    def energy(self) -> float:
        """Energy deposited per exposure step."""
        return self.absorptivity * self.power * self.dt

    @property
    def spacing(self) -> float:
        return self.speed * self.dt

    def tau_shift(self, mat: Material) -> float:
        return self.spot_radius ** 2 / (8.0 * mat.alpha)


@dataclass(frozen=True)
class PointSource:
    x: np.ndarray
    E: float
    t: float
    tau: float


@dataclass(frozen=True)
class ScanPath:
    """Polyline on the top plane; a single waypoint is a dwell (one pulse)."""

    waypoints: np.ndarray
    start_time: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if wp.size == 0:
            raise ValueError("scan path has no waypoints")
        if wp.shape[1] != 2:
            raise ValueError("waypoints are (x, y) pairs")
        if len(wp) > 1 and np.any(np.linalg.norm(np.diff(wp, axis=0), axis=1) == 0):
            raise ValueError("consecutive waypoints must be distinct")
        object.__setattr__(self, "waypoints", wp)

    @classmethod
    def arc(cls, center, radius, theta0, theta1, segments=720, start_time=0.0, z=0.0):
        """Circular arc sampled as a fine polyline; angles in radians from +x."""
        th = np.linspace(theta0, theta1, segments + 1)
        wp = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
        return cls(wp, start_time, z)

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())


@dataclass
class SourceSet:
    """Array form of a source list, used for vectorized evaluation."""

    x: np.ndarray
    E: np.ndarray
    t: np.ndarray
    tau: np.ndarray

    def __len__(self):
        return len(self.E)

    def __getitem__(self, i) -> PointSource:
        return PointSource(self.x[i].copy(), float(self.E[i]), float(self.t[i]), float(self.tau[i]))

    @classmethod
    def from_sources(cls, sources) -> "SourceSet":
        if isinstance(sources, SourceSet):
            return sources
        sources = list(sources)
        if not sources:
            return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0))
        return cls(np.array([s.x for s in sources], dtype=float),
                   np.array([s.E for s in sources], dtype=float),
                   np.array([s.t for s in sources], dtype=float),
                   np.array([s.tau for s in sources], dtype=float))

    def active(self, t: float) -> "SourceSet":
        """Sources switched on strictly before ``t``, so every field vanishes at
        the first activation instant."""
        m = self.t < t
        return SourceSet(self.x[m], self.E[m], self.t[m], self.tau[m])


def discretize_scan(path: ScanPath, laser: LaserSpec, mat: Material) -> SourceSet:
    """Place one source every ``v * dt`` of arc length along the path."""
    wp = path.waypoints
    shift = laser.tau_shift(mat)
    if len(wp) == 1:
        pos = wp.copy()
    else:
        seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        n = int(math.floor(cum[-1] / laser.spacing * (1 + 1e-12))) + 1
        s = np.arange(n) * laser.spacing
        pos = np.column_stack([np.interp(s, cum, wp[:, 0]), np.interp(s, cum, wp[:, 1])])
    n = len(pos)
    x = np.column_stack([pos, np.full(n, path.z)])
    t = path.start_time + np.arange(n) * laser.dt
    return SourceSet(x, np.full(n, laser.energy), t, t - shift)


def temp_point_source(src: PointSource, mat: Material, x, t: float):
    """Temperature rise of one source; zero for ``t <= tau``."""
    x = np.asarray(x, dtype=float)
    s = t - src.tau
    if s <= 0:
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    r2 = np.sum((x - src.x) ** 2, axis=-1)
    a4 = 4.0 * mat.alpha * s
    return src.E / (mat.rho_cp * (math.pi * a4) ** 1.5) * np.exp(-r2 / a4)


def grad_point_source(src: PointSource, mat: Material, x, t: float):
    """Spatial gradient of :func:`temp_point_source`."""
    x = np.asarray(x, dtype=float)
    s = t - src.tau
    if s <= 0:
        return np.zeros(x.shape)
    T = temp_point_source(src, mat, x, t)
    return np.asarray(T)[..., None] * (-(x - src.x) / (2.0 * mat.alpha * s))


def _superpose_block(src: SourceSet, mat: Material, x: np.ndarray, t: float, cull: float):
    npts = x.shape[0]
    T = np.zeros(npts)
    G = np.zeros((npts, 3))
    if len(src) == 0:
        return T, G
    s = t - src.tau
    keep = s > 0
    if not np.all(keep):
        src = SourceSet(src.x[keep], src.E[keep], src.t[keep], src.tau[keep])
        s = s[keep]
    a4 = 4.0 * mat.alpha * s
    amp = src.E / (mat.rho_cp * (math.pi * a4) ** 1.5)
    chunk = max(1, 2_000_000 // max(npts, 1))
    for lo in range(0, len(src), chunk):
        sl = slice(lo, lo + chunk)
        d = x[:, None, :] - src.x[None, sl, :]
        expo = -np.einsum("pka,pka->pk", d, d) / a4[None, sl]
        live = expo > -cull
        if not live.any():
            continue
        val = np.where(live, amp[None, sl] * np.exp(np.where(live, expo, 0.0)), 0.0)
        T += val.sum(axis=1)
        G -= np.einsum("pk,pka->pa", val / (0.5 * a4[None, sl]), d)
    return T, G


def superpose(sources, mat: Material, x, t: float, cull: float = DEFAULT_CULL, threads: int = 1):
    """Analytic field and gradient at points ``x`` (npts, 3) from all active sources.

    Contributions whose exponent is below ``-cull`` are dropped. With
    ``threads > 1`` the points are split across a thread pool; each point is
    still summed by one worker, so the result does not depend on ``threads``.
    """
    src = SourceSet.from_sources(sources).active(t)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if threads > 1 and len(x) >= 2 * threads:
        parts = np.array_split(np.arange(len(x)), threads)
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(lambda ix: _superpose_block(src, mat, x[ix], t, cull), parts))
        T = np.concatenate([r[0] for r in res])
        G = np.concatenate([r[1] for r in res])
    else:
        T, G = _superpose_block(src, mat, x, t, cull)
    if single:
        return float(T[0]), G[0]
    return T, G
