"""Field reconstruction, boundary heat-loss profiles, metrics and exporters."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analytic import DEFAULT_CULL, Material, superpose
from .discretization import gauss_legendre
from .splines import DomainError, FaceId, NurbsVolume, face_normals

PROFILE_HEADER = ["s_m", "theta_rad", "q_tilde_W_m2", "q_hat_W_m2", "q_net_W_m2"]
PROBE_HEADER = ["t_s", "T_tilde_C", "T_hat_C", "T_total_C"]


def _check_param(xi):
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != 3:
        raise ValueError("parametric points must have three coordinates")
    if np.any(xi < -1e-12) or np.any(xi > 1 + 1e-12) or np.any(np.isnan(xi)):
        raise DomainError("parametric point outside the patch [0, 1]^3")
    return np.clip(xi, 0.0, 1.0)


def correction_field(vol: NurbsVolume, coeffs, xi):
    """Spline field ``sum_i R_i(xi) c_i`` and its physical gradient."""
    xi = _check_param(xi)
    x, J, idx, R, dR = vol.evaluate(xi)
    c = np.asarray(coeffs)[idx]
    val = np.einsum("pi,pi->p", R, c)
    g_xi = np.einsum("pib,pi->pb", dR, c)
    grad = np.linalg.solve(np.transpose(J, (0, 2, 1)), g_xi[..., None])[..., 0]
    return val, grad, x


def total_temperature(vol: NurbsVolume, coeffs, sources, mat: Material, xi, t: float,
                      cull: float = DEFAULT_CULL):
    """``(T_total, T_tilde, T_hat)`` at parametric points, in deg C.

    ``coeffs`` is the full coefficient vector of the correction field (free and
    constrained entries, rise convention).
    """
    T_hat, _, x = correction_field(vol, coeffs, xi)
    T_tilde, _ = superpose(sources, mat, x, t, cull=cull)
    return mat.T_c + T_tilde + T_hat, T_tilde, T_hat


@dataclass
class FluxProfile:
    """Heat-loss rates sampled along a boundary curve (W/m^2)."""

    s: np.ndarray
    theta: np.ndarray
    q_tilde: np.ndarray
    q_hat: np.ndarray
    q_net: np.ndarray
    x: np.ndarray = None

    def __len__(self):
        return len(self.s)


def _edge_points(face: FaceId, along: int, depth_axis: int, depth: float, u):
    xi = np.empty((len(u), 3))
    xi[:, face.axis] = float(face.side)
    xi[:, depth_axis] = depth
    xi[:, along] = u
    return xi


def boundary_flux_profile(vol: NurbsVolume, coeffs, sources, mat: Material, face: FaceId,
                          n_samples: int, t: float, depth: float = 1.0, axis_center=None,
                          cull: float = DEFAULT_CULL) -> FluxProfile:
    """Sample ``q = -k dT/dn`` of both fields along an edge of ``face``.

    The curve runs along the face's tangent direction other than zeta, at
    ``zeta = depth`` (1.0 is the top surface). With ``axis_center`` (x1, x2)
    the angle about that vertical axis, measured from the x2 direction, is
    reported; otherwise the angle column is NaN.
    """
    face = face if isinstance(face, FaceId) else FaceId.parse(face)
    if n_samples < 2:
        raise ValueError("a profile needs at least two samples")
    if face.axis == 2:
        raise ValueError("profiles run along lateral faces, not zeta faces")
    (along,) = [a for a in face.tangent_axes if a != 2]
    u = np.linspace(0.0, 1.0, n_samples)
    xi = _edge_points(face, along, 2, depth, u)
    x, J, idx, R, dR = vol.evaluate(xi)
    n, _ = face_normals(J, face)
    _, g_hat, _ = correction_field(vol, coeffs, xi)
    _, g_tilde = superpose(sources, mat, x, t, cull=cull)
    q_tilde = -mat.k * np.einsum("pa,pa->p", g_tilde, n)
    q_hat = -mat.k * np.einsum("pa,pa->p", g_hat, n)

    g, w = gauss_legendre(4)
    du = np.diff(u)
    uq = (u[:-1, None] + du[:, None] * g[None, :]).ravel()
    _, Jq, *_ = vol.evaluate(_edge_points(face, along, 2, depth, uq))
    speed = np.linalg.norm(Jq[:, :, along], axis=1).reshape(-1, len(g))
    s = np.concatenate([[0.0], np.cumsum(speed @ w * du)])

    if axis_center is not None:
        theta = np.arctan2(axis_center[0] - x[:, 0], x[:, 1] - axis_center[1])
    else:
        theta = np.full(n_samples, np.nan)
    return FluxProfile(s, theta, q_tilde, q_hat, q_tilde + q_hat, x)


def integrated_abs_flux(profile: FluxProfile):
    """``(I_net, I_ana, ratio)`` by the trapezoid rule in arc length; ratio is
    ``None`` when the analytic integral vanishes."""
    if len(profile) < 2:
        raise ValueError("need at least two samples")
    I_net = float(np.trapezoid(np.abs(profile.q_net), profile.s))
    I_ana = float(np.trapezoid(np.abs(profile.q_tilde), profile.s))
    ratio = I_net / I_ana if I_ana > 0 else None
    return I_net, I_ana, ratio


def relative_error(value: float, reference: float) -> float:
    if reference == 0:
        raise ZeroDivisionError("relative error against a zero reference")
    return abs(value - reference) / abs(reference)


def _fmt(v: float) -> str:
    return repr(float(v))


def export_profile_csv(profile: FluxProfile, path) -> Path:
    if len(profile) == 0:
        raise ValueError("refusing to write an empty profile")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for row in zip(profile.s, profile.theta, profile.q_tilde, profile.q_hat, profile.q_net):
            w.writerow([_fmt(v) for v in row])
    return path


def read_profile_csv(path) -> FluxProfile:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return FluxProfile(data["s_m"], data["theta_rad"], data["q_tilde_W_m2"],
                       data["q_hat_W_m2"], data["q_net_W_m2"])


def write_probe_csv(rows, path) -> Path:
    """Rows of ``(t, T_tilde, T_hat, T_total)``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROBE_HEADER)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def sample_grid(shape):
    """Parametric grid points, xi fastest, covering the closed unit cube."""
    nx, ny, nz = shape
    if min(shape) < 2:
        raise ValueError("field grid needs at least two points per direction")
    u, v, w = (np.linspace(0.0, 1.0, n) for n in (nx, ny, nz))
    W, V, U = np.meshgrid(w, v, u, indexing="ij")
    return np.column_stack([U.ravel(), V.ravel(), W.ravel()])


def export_field(vol: NurbsVolume, coeffs, sources, mat: Material, shape, t: float, path,
                 cull: float = DEFAULT_CULL) -> Path:
    """Legacy ASCII VTK structured grid with ``T_total``, ``T_tilde``, ``T_hat``."""
    xi = sample_grid(shape)
    T_hat, _, x = correction_field(vol, coeffs, xi)
    T_tilde, _ = superpose(sources, mat, x, t, cull=cull)
    T_total = mat.T_c + T_tilde + T_hat
    path = Path(path)
    n = len(xi)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"temperature at t={float(t)!r} s\nASCII\nDATASET STRUCTURED_GRID\n")
        fh.write("DIMENSIONS {} {} {}\n".format(*shape))
        fh.write(f"POINTS {n} double\n")
        for p in x:
            fh.write(" ".join(_fmt(c) for c in p) + "\n")
        fh.write(f"POINT_DATA {n}\n")
        for name, arr in (("T_total", T_total), ("T_tilde", T_tilde), ("T_hat", T_hat)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.writelines(_fmt(v) + "\n" for v in arr)
    return path
