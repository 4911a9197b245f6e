"""Trivariate NURBS patches.

B-spline basis evaluation (Cox-de Boor, with derivatives), the rational
geometry map with its Jacobian, outward face normals and knot insertion.
Knot vectors are stored normalized to ``[0, 1]``; the parametric cube of a
``NurbsVolume`` is therefore always ``[0, 1]^3``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Parameter outside the knot range."""


class GeometryError(ValueError):
    """Invalid geometry: bad control net, non-positive Jacobian, degenerate face."""


_PARAM_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open (clamped) knot vector of a given degree."""

    values: np.ndarray
    degree: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        p = int(self.degree)
        object.__setattr__(self, "degree", p)
        if p < 0:
            raise ValueError("degree must be non-negative")
        if values.ndim != 1 or len(values) < 2 * p + 2:
            raise ValueError(f"knot vector too short for degree {p}")
        if np.any(np.diff(values) < 0):
            raise ValueError("knot values must be non-decreasing")
        if not (np.all(values[: p + 1] == values[0]) and np.all(values[-p - 1:] == values[-1])):
            raise ValueError("knot vector is not clamped")
        if values[p + 1] == values[0] or values[-p - 2] == values[-1]:
            raise ValueError(f"end knots must have multiplicity exactly {p + 1}")
        if values[-1] <= values[0]:
            raise ValueError("knot vector has no span of positive length")

    @property
    def n_basis(self) -> int:
        return len(self.values) - self.degree - 1

    @property
    def lo(self) -> float:
        return float(self.values[0])

    @property
    def hi(self) -> float:
        return float(self.values[-1])

    def nonzero_spans(self) -> np.ndarray:
        """Indices ``i`` with ``values[i] < values[i + 1]``."""
        v = self.values
        idx = np.arange(self.degree, self.n_basis)
        return idx[v[idx] < v[idx + 1]]

    def normalized(self) -> "KnotVector":
        v = (self.values - self.lo) / (self.hi - self.lo)
        v[: self.degree + 1] = 0.0
        v[-self.degree - 1:] = 1.0
        return KnotVector(v, self.degree)

    def greville(self) -> np.ndarray:
        p = self.degree
        if p == 0:
            return 0.5 * (self.values[:-1] + self.values[1:])
        v = self.values
        return np.array([v[i + 1: i + p + 1].mean() for i in range(self.n_basis)])

    def multiplicity(self, u: float) -> int:
        return int(np.count_nonzero(self.values == u))


def find_span(kv: KnotVector, u):
    """Index of the nonzero knot span containing ``u``.

    Works on scalars and arrays. The right end of the knot range maps to the
    last nonzero span.
    """
    u_arr = np.asarray(u, dtype=float)
    lo, hi = kv.lo, kv.hi
    tol = _PARAM_SLACK * max(1.0, hi - lo)
    if np.any(u_arr < lo - tol) or np.any(u_arr > hi + tol) or np.any(np.isnan(u_arr)):
        raise DomainError(f"parameter outside knot range [{lo}, {hi}]")
    u_arr = np.clip(u_arr, lo, hi)
    span = np.searchsorted(kv.values, u_arr, side="right") - 1
    span = np.clip(span, kv.degree, kv.n_basis - 1)
    if np.ndim(u) == 0:
        return int(span)
    return span


def _ders_basis(kv: KnotVector, u: np.ndarray, span: np.ndarray, n: int) -> np.ndarray:
    """Vectorized NURBS-book A2.3: returns ``(npts, n + 1, p + 1)``."""
    p = kv.degree
    U = kv.values
    npts = u.shape[0]
    nd = min(n, p)
    ndu = np.zeros((p + 1, p + 1, npts))
    ndu[0, 0] = 1.0
    left = np.zeros((p + 1, npts))
    right = np.zeros((p + 1, npts))
    for j in range(1, p + 1):
        left[j] = u - U[span + 1 - j]
        right[j] = U[span + j] - u
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((npts, n + 1, p + 1))
    ders[:, 0, :] = ndu[:, p, :].T
    a = np.zeros((2, p + 1, npts))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[0, 0] = 1.0
        for k in range(1, nd + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, nd + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return ders


def basis_values(kv: KnotVector, u, max_deriv: int = 0) -> np.ndarray:
    """Nonzero basis functions at ``u`` and their derivatives.

    Returns an array of shape ``(max_deriv + 1, p + 1)`` for scalar ``u`` or
    ``(npts, max_deriv + 1, p + 1)`` for an array. Row ``k`` holds the k-th
    derivatives of ``N_{span-p}, ..., N_{span}``; rows above ``p`` are zero.
    """
    scalar = np.ndim(u) == 0
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    span = np.atleast_1d(find_span(kv, u_arr))
    u_arr = np.clip(u_arr, kv.lo, kv.hi)
    ders = _ders_basis(kv, u_arr, span, int(max_deriv))
    return ders[0] if scalar else ders


class FaceId(enum.Enum):
    """The six parametric faces of a trivariate patch."""

    XIMIN = "ximin"
    XIMAX = "ximax"
    ETAMIN = "etamin"
    ETAMAX = "etamax"
    ZETAMIN = "zetamin"
    ZETAMAX = "zetamax"

    @property
    def axis(self) -> int:
        return {"xi": 0, "eta": 1, "zeta": 2}[self.value[:-3]]

    @property
    def side(self) -> int:
        """0 for the ``min`` face, 1 for the ``max`` face."""
        return 0 if self.value.endswith("min") else 1

    @property
    def tangent_axes(self) -> tuple[int, int]:
        return tuple(d for d in range(3) if d != self.axis)

    @classmethod
    def parse(cls, name: str) -> "FaceId":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown face {name!r}; expected one of "
                             + ", ".join(f.value for f in cls)) from None


class NurbsVolume:
    """Single-patch trivariate NURBS solid.

    Parameters
    ----------
    knots : sequence of three KnotVector
        Clamped knot vectors in the xi, eta, zeta directions (any range;
        they are normalized to [0, 1]).
    control : array (n1, n2, n3, 3)
        Control points in meters.
    weights : array (n1, n2, n3), optional
        Positive weights; defaults to all ones (plain B-spline).
    """

    def __init__(self, knots, control, weights=None):
        if len(knots) != 3:
            raise GeometryError("a volume needs three knot vectors")
        self.knots = tuple(kv.normalized() for kv in knots)
        control = np.array(control, dtype=float)
        shape = tuple(kv.n_basis for kv in self.knots)
        if control.shape != shape + (3,):
            raise GeometryError(f"control grid has shape {control.shape[:-1]}, knot vectors need {shape}")
        if weights is None:
            weights = np.ones(shape)
        weights = np.array(weights, dtype=float)
        if weights.shape != shape:
            raise GeometryError(f"weight grid has shape {weights.shape}, expected {shape}")
        if np.any(~(weights > 0)):
            raise GeometryError("all weights must be strictly positive")
        self.control = control
        self.weights = weights
        self.control.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def degrees(self) -> tuple[int, int, int]:
        return tuple(kv.degree for kv in self.knots)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.weights.shape

    @property
    def n_basis(self) -> int:
        return int(np.prod(self.shape))

    def flat_index(self, i1, i2, i3):
        """Global function number; xi fastest (lexicographic control-grid order)."""
        n1, n2, _ = self.shape
        return i1 + n1 * (i2 + n2 * i3)

    @property
    def control_flat(self) -> np.ndarray:
        return self.control.reshape(-1, 3, order="F")

    @property
    def weights_flat(self) -> np.ndarray:
        return self.weights.reshape(-1, order="F")

    def local_basis(self, xi, spans=None, ders1d=None):
        """B-spline (non-rational) tensor basis at points ``xi`` (npts, 3).

        Returns ``(idx, N, dN)`` with global indices ``(npts, nloc)``, values
        ``(npts, nloc)`` and parametric gradients ``(npts, nloc, 3)``.
        ``spans``/``ders1d`` may be supplied to skip the span search.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        npts = xi.shape[0]
        if spans is None:
            spans = [np.atleast_1d(find_span(self.knots[d], xi[:, d])) for d in range(3)]
        if ders1d is None:
            ders1d = [_ders_basis(self.knots[d], np.clip(xi[:, d], 0.0, 1.0), spans[d], 1)
                      for d in range(3)]
        p1, p2, p3 = self.degrees
        b1, b2, b3 = (ders1d[0][:, 0], ders1d[1][:, 0], ders1d[2][:, 0])
        g1, g2, g3 = (ders1d[0][:, 1], ders1d[1][:, 1], ders1d[2][:, 1])
        # local ordering: a1 fastest, matching the global flat order
        N = np.einsum("pk,pj,pi->pkji", b3, b2, b1).reshape(npts, -1)
        dN = np.stack([
            np.einsum("pk,pj,pi->pkji", b3, b2, g1).reshape(npts, -1),
            np.einsum("pk,pj,pi->pkji", b3, g2, b1).reshape(npts, -1),
            np.einsum("pk,pj,pi->pkji", g3, b2, b1).reshape(npts, -1),
        ], axis=-1)
        i1 = spans[0][:, None] - p1 + np.arange(p1 + 1)[None, :]
        i2 = spans[1][:, None] - p2 + np.arange(p2 + 1)[None, :]
        i3 = spans[2][:, None] - p3 + np.arange(p3 + 1)[None, :]
        n1, n2, _ = self.shape
        idx = (i1[:, None, None, :] + n1 * (i2[:, None, :, None] + n2 * i3[:, :, None, None]))
        return idx.reshape(npts, -1), N, dN

    def rational_basis(self, idx, N, dN):
        """Turn B-spline values into NURBS values ``R`` and ``dR/dxi``."""
        w = self.weights_flat[idx]
        Nw = N * w
        W = Nw.sum(axis=1)
        dW = np.einsum("pi,pid->pd", w, dN)
        R = Nw / W[:, None]
        dR = (w[:, :, None] * dN - R[:, :, None] * dW[:, None, :]) / W[:, None, None]
        return R, dR

    def evaluate(self, xi):
        """Physical points and Jacobians ``dx/dxi`` at parametric points.

        Returns ``(x, J, idx, R, dR)`` where ``x`` is (npts, 3) and ``J`` is
        (npts, 3, 3) with ``J[p, a, b] = dx_a / dxi_b``.
        """
        idx, N, dN = self.local_basis(xi)
        R, dR = self.rational_basis(idx, N, dN)
        P = self.control_flat[idx]
        x = np.einsum("pi,pia->pa", R, P)
        J = np.einsum("pia,pib->pab", P, dR)
        return x, J, idx, R, dR


def map_point(vol: NurbsVolume, xi):
    """Map one parametric point to ``(x, J, detJ)``; rejects ``detJ <= 0``."""
    xi = np.asarray(xi, dtype=float).reshape(1, 3)
    x, J, *_ = vol.evaluate(xi)
    detJ = float(np.linalg.det(J[0]))
    if not detJ > 0:
        raise GeometryError(f"non-positive Jacobian determinant {detJ:.3e} at xi={xi[0].tolist()}")
    return x[0], J[0], detJ


def face_point(face: FaceId, uv) -> np.ndarray:
    """Parametric 3D point(s) on ``face`` from its two in-face coordinates."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    xi = np.empty((uv.shape[0], 3))
    a, b = face.tangent_axes
    xi[:, face.axis] = float(face.side)
    xi[:, a] = uv[:, 0]
    xi[:, b] = uv[:, 1]
    return xi


def face_normals(J: np.ndarray, face: FaceId):
    """Unit outward normals and area scale from volume Jacobians on a face.

    The cofactor column ``t_a x t_b`` (cyclic) equals ``detJ * J^-T e_d``,
    i.e. it points toward increasing ``xi_d``; min faces flip it.
    """
    d = face.axis
    a, b = (d + 1) % 3, (d + 2) % 3
    c = np.cross(J[:, :, a], J[:, :, b])
    area = np.linalg.norm(c, axis=1)
    scale = np.abs(J).reshape(len(J), -1).max(axis=1) ** 2
    if np.any(area <= 1e-14 * scale):
        raise GeometryError(f"degenerate surface point on face {face.value}")
    detJ = np.linalg.det(J)
    sign = np.sign(detJ) * (1.0 if face.side == 1 else -1.0)
    n = c * (sign / area)[:, None]
    return n, area


def face_normal(vol: NurbsVolume, face: FaceId, uv):
    """Unit outward normal and surface Jacobian at one face point."""
    xi = face_point(face, uv)
    _, J, *_ = vol.evaluate(xi)
    n, area = face_normals(J, face)
    return n[0], float(area[0])


def _insert_knot_axis(kv: KnotVector, Pw: np.ndarray, u: float):
    """Boehm insertion of one knot along axis 0 of homogeneous points ``Pw``."""
    p = kv.degree
    U = kv.values
    if kv.multiplicity(u) >= p:
        raise ValueError(f"inserting {u} would exceed multiplicity {p}")
    k = find_span(kv, u)
    n = kv.n_basis
    Q = np.empty((n + 1,) + Pw.shape[1:])
    Q[: k - p + 1] = Pw[: k - p + 1]
    Q[k + 1:] = Pw[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (u - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * Pw[i] + (1.0 - alpha) * Pw[i - 1]
    new_kv = KnotVector(np.insert(U, k + 1, u), p)
    return new_kv, Q


def h_refine(vol: NurbsVolume, new_knots) -> NurbsVolume:
    """Insert knots (normalized coordinates) in each direction.

    ``new_knots`` is a sequence of three iterables. The geometry is unchanged;
    knots must lie strictly inside (0, 1).
    """
    Pw = np.concatenate([vol.control * vol.weights[..., None], vol.weights[..., None]], axis=-1)
    knots = list(vol.knots)
    for d in range(3):
        ins = sorted(float(u) for u in new_knots[d])
        if not ins:
            continue
        if ins[0] <= 0.0 or ins[-1] >= 1.0:
            raise DomainError(f"inserted knots must lie strictly inside (0, 1) (direction {d})")
        arr = np.moveaxis(Pw, d, 0)
        kv = knots[d]
        for u in ins:
            kv, arr = _insert_knot_axis(kv, arr, u)
        knots[d] = kv
        Pw = np.moveaxis(arr, 0, d)
    w = Pw[..., 3]
    return NurbsVolume(knots, Pw[..., :3] / w[..., None], w)


def _elevate_bezier(arr: np.ndarray, p: int, q: int) -> np.ndarray:
    """Raise one Bezier segment (axis 0 of ``arr``) from degree p to q."""
    for r in range(p, q):
        Q = np.empty((r + 2,) + arr.shape[1:])
        Q[0], Q[-1] = arr[0], arr[-1]
        for i in range(1, r + 1):
            a = i / (r + 1)
            Q[i] = a * arr[i - 1] + (1 - a) * arr[i]
        arr = Q
    return arr


def elevate_degree(vol: NurbsVolume, degrees) -> NurbsVolume:
    """Raise each direction to at least ``degrees[d]``; geometry is unchanged.

    A direction can be elevated when it is in Bezier form, i.e. every
    interior knot has multiplicity equal to the degree (C0 joints, as in the
    built-in part). Elevate before refining.
    """
    Pw = np.concatenate([vol.control * vol.weights[..., None], vol.weights[..., None]], axis=-1)
    knots = list(vol.knots)
    for d in range(3):
        kv = knots[d]
        p, q = kv.degree, int(degrees[d])
        if q <= p:
            continue
        breaks = np.unique(kv.values)
        if any(kv.multiplicity(u) != p for u in breaks[1:-1]):
            raise ValueError(f"direction {d} has interior knots of multiplicity below the degree; "
                             "elevate before refining")
        arr = np.moveaxis(Pw, d, 0)
        segs = [_elevate_bezier(arr[s * p: s * p + p + 1], p, q) for s in range(len(breaks) - 1)]
        arr = np.concatenate([segs[0]] + [g[1:] for g in segs[1:]])
        knots[d] = KnotVector(np.concatenate([np.zeros(q + 1), np.repeat(breaks[1:-1], q),
                                              np.ones(q + 1)]), q)
        Pw = np.moveaxis(arr, 0, d)
    w = Pw[..., 3]
    return NurbsVolume(knots, Pw[..., :3] / w[..., None], w)


def uniform_split_knots(kv: KnotVector, parts: int) -> list[float]:
    """Knots that cut every nonzero span into ``parts`` equal pieces."""
    out = []
    v = kv.values
    for s in kv.nonzero_spans():
        a, b = v[s], v[s + 1]
        out.extend(a + (b - a) * np.arange(1, parts) / parts)
    return out


# --- bundled geometries -----------------------------------------------------

def quarter_cylinder_part(size=2e-3, radius=1e-3, height=2e-3) -> NurbsVolume:
    """Cube with a quarter-cylinder removed, as a degree (2, 1, 1) patch.

    xi runs along the arc from (size/2, 0) to (size, size/2); eta runs from the
    arc (eta = 0) to the outer L-shaped boundary; zeta from the platform
    (z = 0) to the top (z = height). Arc centre at (size, 0).
    """
    if not math.isclose(size, 2 * radius):
        raise GeometryError("control net is defined for size == 2 * radius")
    s2 = math.sqrt(2.0)
    unit_arc = [(1, 0), (1, s2 - 1), (2 - s2 / 2, s2 / 2), (3 - s2, 1), (2, 1)]
    unit_out = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2)]
    w_xi = np.array([1.0, math.cos(math.pi / 8), 1.0, math.cos(math.pi / 8), 1.0])
    ctrl = np.zeros((5, 2, 2, 3))
    for i in range(5):
        for j, row in enumerate((unit_arc, unit_out)):
            ctrl[i, j, :, 0] = row[i][0] * radius
            ctrl[i, j, :, 1] = row[i][1] * radius
    ctrl[:, :, 0, 2] = 0.0
    ctrl[:, :, 1, 2] = height
    weights = np.broadcast_to(w_xi[:, None, None], (5, 2, 2)).copy()
    knots = (KnotVector([0, 0, 0, 0.5, 0.5, 1, 1, 1], 2),
             KnotVector([0, 0, 1, 1], 1),
             KnotVector([0, 0, 1, 1], 1))
    return NurbsVolume(knots, ctrl, weights)


def box_volume(lengths=(1.0, 1.0, 1.0), degrees=(2, 2, 2), elements=(1, 1, 1), origin=(0.0, 0.0, 0.0)):
    """Axis-aligned box as a uniform B-spline patch with an affine map."""
    knots, coords = [], []
    for L, p, ne, o in zip(lengths, degrees, elements, origin):
        inner = np.arange(1, ne) / ne
        kv = KnotVector(np.concatenate([np.zeros(p + 1), inner, np.ones(p + 1)]), p)
        knots.append(kv)
        coords.append(o + L * kv.greville())
    X, Y, Z = np.meshgrid(*coords, indexing="ij")
    return NurbsVolume(knots, np.stack([X, Y, Z], axis=-1))


# --- plain-text geometry block ----------------------------------------------

def parse_geometry(text: str, origin: str = "<geometry>") -> NurbsVolume:
    """Read the plain-text geometry block.

    Layout (``#`` starts a comment)::

        n1 n2 n3            # control grid dimensions
        p1 p2 p3            # degrees
        <knots xi>
        <knots eta>
        <knots zeta>
        x y z w             # n1*n2*n3 lines, xi fastest, meters
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            try:
                rows.append((lineno, [float(t) for t in line.replace(",", " ").split()]))
            except ValueError:
                raise GeometryError(f"{origin}:{lineno}: non-numeric entry in {raw.strip()!r}") from None
    if len(rows) < 5:
        raise GeometryError(f"{origin}: geometry block needs a header, degrees and three knot vectors")

    def ints(row, what):
        lineno, vals = row
        if len(vals) != 3 or any(v != int(v) or v < 0 for v in vals):
            raise GeometryError(f"{origin}:{lineno}: expected three non-negative integers ({what})")
        return tuple(int(v) for v in vals)

    dims = ints(rows[0], "dimensions")
    degs = ints(rows[1], "degrees")
    knots = []
    for d in range(3):
        lineno, vals = rows[2 + d]
        try:
            kv = KnotVector(vals, degs[d])
        except ValueError as exc:
            raise GeometryError(f"{origin}:{lineno}: {exc}") from None
        if kv.n_basis != dims[d]:
            raise GeometryError(f"{origin}:{lineno}: knot vector gives {kv.n_basis} functions, header says {dims[d]}")
        knots.append(kv)
    pts = rows[5:]
    n = dims[0] * dims[1] * dims[2]
    if len(pts) != n:
        raise GeometryError(f"{origin}: expected {n} control points, found {len(pts)}")
    data = np.empty((n, 4))
    for k, (lineno, vals) in enumerate(pts):
        if len(vals) != 4:
            raise GeometryError(f"{origin}:{lineno}: control point needs x y z w")
        data[k] = vals
    ctrl = data[:, :3].reshape(dims + (3,), order="F")
    w = data[:, 3].reshape(dims, order="F")
    return NurbsVolume(knots, ctrl, w)


def format_geometry(vol: NurbsVolume) -> str:
    """Inverse of :func:`parse_geometry` (full double precision)."""
    lines = [" ".join(str(n) for n in vol.shape), " ".join(str(p) for p in vol.degrees)]
    lines += [" ".join(repr(float(v)) for v in kv.values) for kv in vol.knots]
    for P, w in zip(vol.control_flat, vol.weights_flat):
        lines.append(" ".join(repr(float(v)) for v in (*P, w)))
    return "\n".join(lines) + "\n"
