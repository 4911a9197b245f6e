"""Theta-scheme integration of the correction field and the simulation loop."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import postproc as pp
from .analytic import DEFAULT_CULL, LaserSpec, Material, ScanPath, discretize_scan
from .assembly import SystemMatrices, apply_dirichlet, assemble_flux_load, assemble_system
from .discretization import (EXTRUDED_TAGS, BoundaryTags, DofMap, build_mesh, classify_boundary,
                             dirichlet_values, mesh_stats)
from .splines import FaceId, NurbsVolume

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The linear solver did not reach its tolerance."""


def solve_spd(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||b - A x|| <= tol * ||b||`` (checked on the true residual).
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if max_iter is None:
        max_iter = max(1000, 10 * n)
    inv_diag = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    it = 0
    while it < max_iter:
        z = inv_diag * r
        p = z.copy()
        rz = r @ z
        while it < max_iter and np.linalg.norm(r) > tol * bnorm:
            Ap = A @ p
            a = rz / (p @ Ap)
            x += a * p
            r -= a * Ap
            z = inv_diag * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bnorm:
            return x
    raise SolverError(f"CG did not converge in {max_iter} iterations "
                      f"(relative residual {np.linalg.norm(r) / bnorm:.3e}, tol {tol:.1e})")


@dataclass(frozen=True)
class ThetaScheme:
    theta: float = 0.5
    dt: float = 1e-5

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not self.dt > 0:
            raise ValueError("time step must be positive")


@dataclass(frozen=True)
class State:
    """Correction-field coefficients (rise above T_c) at one time level."""

    u: np.ndarray      # free coefficients
    c: np.ndarray      # constrained coefficients
    t: float
    step: int

    def full(self, dofs: DofMap) -> np.ndarray:
        return dofs.scatter(self.u, self.c)


def theta_step(system: SystemMatrices, state: State, F_old, F_new, c_new, scheme: ThetaScheme,
               tol: float = 1e-10, max_iter: int | None = None) -> State:
    """Advance one step of ``M dT/dt + K T = F`` with Dirichlet lifting.

    ``F_old``/``F_new`` are full-length load vectors at ``t_n``/``t_{n+1}``.
    """
    th, dt = scheme.theta, scheme.dt
    f = system.dofs.free
    A, lift = apply_dirichlet(system, state.c, c_new, th, dt)
    _, B, _, _ = system.reduced(th, dt)
    rhs = B @ state.u + th * np.asarray(F_new)[f] + (1.0 - th) * np.asarray(F_old)[f] + lift
    u = solve_spd(A, rhs, tol=tol, max_iter=max_iter, x0=state.u)
    return State(u, np.asarray(c_new, dtype=float), (state.step + 1) * dt, state.step + 1)


@dataclass
class Timings:
    assembly: float = 0.0
    flux: float = 0.0
    dirichlet: float = 0.0
    solve: float = 0.0
    output: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


class Simulation:
    """Semi-analytical model of one scan on one NURBS part.

    Builds the mesh, boundary sets and matrices once; :meth:`run` then steps
    the correction field, re-evaluating the analytic boundary flux and the
    platform values at every step.
    """

    def __init__(self, volume: NurbsVolume, material: Material, laser: LaserSpec, path: ScanPath,
                 tags=EXTRUDED_TAGS, *, quad_order=None, boundary_multiplier: int = 3,
                 theta: float = 0.5, dt: float | None = None, substeps: int = 1,
                 solver_tol: float = 1e-10, max_iter: int | None = None,
                 cull: float = DEFAULT_CULL, threads: int = 1, scan_face=FaceId.ETAMIN):
        self.timings = Timings()
        t0 = time.perf_counter()
        self.volume = volume
        self.material = material
        self.laser = laser
        self.tags = tags if isinstance(tags, BoundaryTags) else BoundaryTags(tags)
        self.mesh = build_mesh(volume, quad_order)
        self.boundary = classify_boundary(volume, self.tags, quad_order, boundary_multiplier)
        self.dofs = DofMap(volume.n_basis, self.boundary.bottom.dofs)
        self.system = assemble_system(self.mesh, material, self.dofs)
        if substeps < 1:
            raise ValueError("substeps must be a positive integer")
        self.scheme = ThetaScheme(theta, (dt if dt is not None else laser.dt) / substeps)
        self.system.reduced(self.scheme.theta, self.scheme.dt)
        self.sources = discretize_scan(path, laser, material)
        self.solver_tol = solver_tol
        self.max_iter = max_iter
        self.cull = cull
        self.threads = threads
        self.scan_face = scan_face if isinstance(scan_face, FaceId) else FaceId.parse(scan_face)
        self.timings.assembly = time.perf_counter() - t0
        self._stats = None

    @property
    def stats(self):
        if self._stats is None:
            self._stats = mesh_stats(self.mesh, self.scan_face, self.laser.spot_radius, self.dofs)
        return self._stats

    def flux_load(self, t: float) -> np.ndarray:
        t0 = time.perf_counter()
        F = assemble_flux_load(self.mesh.n_basis, self.boundary.lateral, self.sources,
                               self.material, t, cull=self.cull, threads=self.threads)
        self.timings.flux += time.perf_counter() - t0
        return F

    def dirichlet(self, t: float) -> np.ndarray:
        t0 = time.perf_counter()
        c = dirichlet_values(self.boundary.bottom, self.sources, self.material, t, cull=self.cull)
        self.timings.dirichlet += time.perf_counter() - t0
        return c

    def initial_state(self) -> State:
        return State(np.zeros(self.dofs.n_free), self.dirichlet(0.0), 0.0, 0)

    def time_of(self, step: int) -> float:
        return step * self.scheme.dt

    def n_steps(self, t_end: float) -> int:
        n = int(round(t_end / self.scheme.dt))
        if n < 1 or abs(n * self.scheme.dt - t_end) > 1e-6 * self.scheme.dt:
            raise ValueError(f"t_end={t_end!r} is not a positive multiple of dt={self.scheme.dt!r}")
        return n

    def run(self, t_end: float, observer=None) -> State:
        """Step to ``t_end``; ``observer(sim, state)`` is called at every level."""
        state = self.initial_state()
        F_old = self.flux_load(0.0)
        if observer is not None:
            observer(self, state)
        for n in range(self.n_steps(t_end)):
            t_new = self.time_of(n + 1)
            F_new = self.flux_load(t_new)
            c_new = self.dirichlet(t_new)
            t0 = time.perf_counter()
            state = theta_step(self.system, state, F_old, F_new, c_new, self.scheme,
                               tol=self.solver_tol, max_iter=self.max_iter)
            self.timings.solve += time.perf_counter() - t0
            F_old = F_new
            if observer is not None:
                observer(self, state)
        return state

    def coefficients(self, state: State) -> np.ndarray:
        return state.full(self.dofs)


# --- configured runs ----------------------------------------------------------

def build_simulation(cfg, l_e: float | None = None, threads: int | None = None) -> Simulation:
    """Simulation for a :class:`~saiga.config.RunConfig`; ``l_e`` overrides the mesh level."""
    st, ms = cfg.stepping, cfg.mesh
    return Simulation(cfg.volume(l_e), cfg.material, cfg.laser, cfg.path, cfg.tags,
                      quad_order=ms.quad_order, boundary_multiplier=ms.boundary_quad_multiplier,
                      theta=st.theta, dt=st.dt, substeps=st.substeps, solver_tol=st.solver_tol,
                      max_iter=st.max_iter, cull=st.cull_exponent,
                      threads=threads if threads is not None else st.threads,
                      scan_face=ms.scan_face)


@dataclass
class RunResult:
    state: State
    probes: dict                 # name -> (n, 4) rows of t, T_tilde, T_hat, T_total
    metrics: list                # (t, I_net, I_ana, ratio or None)
    profiles: dict               # t -> FluxProfile
    stats: object
    timings: dict
    wall_time: float
    files: list = field(default_factory=list)

    def probe_peak(self, name: str):
        """``(t, T_hat)`` at the largest correction-field value of a probe."""
        rows = self.probes[name]
        k = int(np.argmax(rows[:, 2]))
        return float(rows[k, 0]), float(rows[k, 2])


def _time_tag(t: float) -> str:
    return f"{t:.6e}".replace("+", "")


def write_metrics_csv(metrics, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "I_net_W_m", "I_ana_W_m", "ratio"])
        for t, i_net, i_ana, ratio in metrics:
            w.writerow([repr(float(t)), repr(float(i_net)), repr(float(i_ana)),
                        "" if ratio is None else repr(float(ratio))])
    return path


def run_simulation(cfg, output_dir=None, *, l_e: float | None = None, threads: int | None = None,
                   t_end: float | None = None, profile_times=None, write: bool = True) -> RunResult:
    """Run a configured case and write its outputs.

    Probes are sampled every ``probe_every`` steps (and always at the last
    step), fields and flux profiles at their scheduled times. Files go to
    ``output_dir`` (default: the configured directory next to the config).
    Probe and metrics files collected so far are still written when a step
    fails; the error is then re-raised.
    """
    wall0 = time.perf_counter()
    out = cfg.output
    t_end = cfg.stepping.t_end if t_end is None else t_end
    n_end = cfg.step_index(t_end, "end time")
    if n_end < 1:
        raise ValueError("end time must be at least one step")
    ptimes = out.profile_times if profile_times is None else tuple(sorted(set(profile_times)))
    profile_steps = {cfg.step_index(t, "profile time"): t for t in ptimes}
    field_steps = {cfg.step_index(t, "field time"): t for t in out.field_times}
    for steps in (profile_steps, field_steps):
        for n in [n for n in steps if n > n_end]:
            del steps[n]

    if write:
        odir = Path(output_dir) if output_dir is not None else cfg.base_dir / out.directory
        odir.mkdir(parents=True, exist_ok=True)
    sim = build_simulation(cfg, l_e, threads)
    mat = cfg.material
    names = list(out.probes)
    probe_xi = np.array([out.probes[k] for k in names]).reshape(-1, 3)
    rows = {k: [] for k in names}
    metrics, profiles, files = [], {}, []

    def observe(s: Simulation, state: State):
        n = state.step
        due_probe = n % out.probe_every == 0 or n == n_end
        if not (due_probe or n in profile_steps or n in field_steps):
            return
        t0 = time.perf_counter()
        u = s.coefficients(state)
        t = s.time_of(n)
        if due_probe and names:
            T, Tt, Th = pp.total_temperature(s.volume, u, s.sources, mat, probe_xi, t, cull=s.cull)
            for i, k in enumerate(names):
                rows[k].append((t, Tt[i], Th[i], T[i]))
        if n in profile_steps:
            prof = pp.boundary_flux_profile(s.volume, u, s.sources, mat, out.profile_face,
                                            out.profile_samples, t, out.profile_depth,
                                            out.axis_center, cull=s.cull)
            profiles[t] = prof
            metrics.append((t,) + pp.integrated_abs_flux(prof))
            if write:
                files.append(pp.export_profile_csv(prof, odir / f"profile_t{_time_tag(t)}.csv"))
        if n in field_steps and write:
            files.append(pp.export_field(s.volume, u, s.sources, mat, out.field_grid, t,
                                         odir / f"field_t{_time_tag(t)}.vtk", cull=s.cull))
        s.timings.output += time.perf_counter() - t0

    def flush():
        if not write:
            return
        for k in names:
            files.append(pp.write_probe_csv(rows[k], odir / f"probe_{k}.csv"))
        if profile_steps:
            files.append(write_metrics_csv(metrics, odir / "metrics.csv"))

    try:
        state = sim.run(sim.time_of(n_end), observe)
    except BaseException:
        flush()
        raise
    flush()
    stats = sim.stats
    result = RunResult(state, {k: np.array(v, dtype=float).reshape(-1, 4) for k, v in rows.items()},
                       metrics, profiles, stats, sim.timings.as_dict(),
                       time.perf_counter() - wall0, files)
    if write:
        summary = {
            "config": cfg.source,
            "n_dofs": stats.n_dofs, "n_free": stats.n_free, "n_elements": stats.n_elements,
            "l_min_m": stats.l_min, "l_e": stats.l_e,
            "degrees": list(sim.volume.degrees), "steps": n_end, "dt_s": sim.scheme.dt,
            "n_sources": len(sim.sources),
            "wall_time_s": result.wall_time, "timings_s": result.timings,
            "probe_peaks": {k: dict(zip(("t_s", "T_hat_C"), result.probe_peak(k)))
                            for k in names if len(result.probes[k])},
            "metrics": [{"t_s": m[0], "I_net": m[1], "I_ana": m[2], "ratio": m[3]} for m in metrics],
        }
        path = odir / "summary.json"
        path.write_text(json.dumps(summary, indent=2) + "\n")
        files.append(path)
    log.info("run finished: %d DOFs, l_e=%.3g, %.2f s", stats.n_dofs, stats.l_e, result.wall_time)
    return result
