"""Mesh of nonzero knot spans, quadrature, boundary bookkeeping, Dirichlet data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import DEFAULT_CULL, Material, superpose
from .splines import (FaceId, GeometryError, NurbsVolume, _ders_basis, face_normals,
                      face_point, h_refine)

ROLES = ("bottom", "lateral", "top")


class ConfigError(ValueError):
    """Invalid user configuration."""


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0):
    """``n``-point Gauss-Legendre rule on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w


@dataclass
class ElementBatch:
    """Quadrature data for a group of elements."""

    elements: np.ndarray   # (B,)
    idx: np.ndarray        # (B, nloc) global function numbers
    R: np.ndarray          # (B, nq, nloc)
    dRdx: np.ndarray       # (B, nq, nloc, 3)
    wdetJ: np.ndarray      # (B, nq) quadrature weight times detJ
    x: np.ndarray          # (B, nq, 3)


class Mesh:
    """Elements are the Cartesian products of nonzero knot spans (xi fastest).

    Per-direction basis tables are cached at build time together with the
    physical quadrature points and ``w * detJ``; basis gradients are formed
    batch by batch in :meth:`batches` to bound memory.
    """

    def __init__(self, volume: NurbsVolume, quad_order=None, batch_size: int = 1024):
        self.volume = volume
        if quad_order is None:
            quad_order = tuple(p + 1 for p in volume.degrees)
        elif np.isscalar(quad_order):
            quad_order = (int(quad_order),) * 3
        self.quad_order = tuple(int(q) for q in quad_order)
        if min(self.quad_order) < 1:
            raise ValueError("quadrature order must be at least 1")
        self.batch_size = batch_size
        self.spans = [kv.nonzero_spans() for kv in volume.knots]
        self._tables = []
        for kv, q, spans in zip(volume.knots, self.quad_order, self.spans):
            pts, wts, ders = [], [], []
            for s in spans:
                x, w = gauss_legendre(q, kv.values[s], kv.values[s + 1])
                pts.append(x)
                wts.append(w)
                ders.append(_ders_basis(kv, x, np.full(q, s), 1))
            self._tables.append((np.array(pts), np.array(wts), np.array(ders)))
        n1, n2, n3 = (len(s) for s in self.spans)
        g3, g2, g1 = np.meshgrid(np.arange(n3), np.arange(n2), np.arange(n1), indexing="ij")
        self.elements = np.column_stack([g1.ravel(), g2.ravel(), g3.ravel()])
        self.wdetJ = np.empty((self.n_elements, self.n_qp))
        self.x = np.empty((self.n_elements, self.n_qp, 3))
        for b in self.batches():
            self.wdetJ[b.elements] = b.wdetJ
            self.x[b.elements] = b.x

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_qp(self) -> int:
        return int(np.prod(self.quad_order))

    @property
    def n_basis(self) -> int:
        return self.volume.n_basis

    @property
    def n_local(self) -> int:
        return int(np.prod([p + 1 for p in self.volume.degrees]))

    def element_box(self, e: int) -> np.ndarray:
        """Parametric box ``[[lo, hi]] * 3`` of element ``e``."""
        box = np.empty((3, 2))
        for d in range(3):
            s = self.spans[d][self.elements[e, d]]
            v = self.volume.knots[d].values
            box[d] = v[s], v[s + 1]
        return box

    def element_indices(self, elems) -> np.ndarray:
        vol = self.volume
        p1, p2, p3 = vol.degrees
        n1, n2, _ = vol.shape
        s = [self.spans[d][self.elements[elems, d]] for d in range(3)]
        i1 = s[0][:, None] - p1 + np.arange(p1 + 1)
        i2 = s[1][:, None] - p2 + np.arange(p2 + 1)
        i3 = s[2][:, None] - p3 + np.arange(p3 + 1)
        idx = i1[:, None, None, :] + n1 * (i2[:, None, :, None] + n2 * i3[:, :, None, None])
        return idx.reshape(len(elems), -1)

    def element_data(self, elems) -> ElementBatch:
        elems = np.asarray(elems)
        B = len(elems)
        vol = self.volume
        tabs = []
        for d in range(3):
            _, w, ders = self._tables[d]
            pos = self.elements[elems, d]
            tabs.append((w[pos], ders[pos, :, 0, :], ders[pos, :, 1, :]))
        (w1, b1, g1), (w2, b2, g2), (w3, b3, g3) = tabs
        nq, nl = self.n_qp, self.n_local
        prod = "bwz,bvy,bux->bwvuzyx"
        N = np.einsum(prod, b3, b2, b1).reshape(B * nq, nl)
        dN = np.stack([np.einsum(prod, b3, b2, g1).reshape(B * nq, nl),
                       np.einsum(prod, b3, g2, b1).reshape(B * nq, nl),
                       np.einsum(prod, g3, b2, b1).reshape(B * nq, nl)], axis=-1)
        idx = self.element_indices(elems)
        idx_q = np.repeat(idx, nq, axis=0)
        R, dR = vol.rational_basis(idx_q, N, dN)
        P = vol.control_flat[idx_q]
        x = np.einsum("pi,pia->pa", R, P)
        J = np.einsum("pia,pib->pab", P, dR)
        detJ = np.linalg.det(J)
        if np.any(~(detJ > 0)):
            bad = elems[np.nonzero(~(detJ.reshape(B, nq) > 0).all(axis=1))[0][0]]
            raise GeometryError(f"non-positive Jacobian determinant in element {int(bad)}")
        invJ = np.linalg.inv(J)
        dRdx = np.einsum("pib,pba->pia", dR, invJ)
        wq = np.einsum("bw,bv,bu->bwvu", w3, w2, w1).reshape(B, nq)
        return ElementBatch(elems, idx, R.reshape(B, nq, nl), dRdx.reshape(B, nq, nl, 3),
                            wq * detJ.reshape(B, nq), x.reshape(B, nq, 3))

    def batches(self, size=None):
        size = size or self.batch_size
        for lo in range(0, self.n_elements, size):
            yield self.element_data(np.arange(lo, min(lo + size, self.n_elements)))

    def volume_measure(self) -> float:
        return float(self.wdetJ.sum())


def build_mesh(vol: NurbsVolume, quad_order=None) -> Mesh:
    """Mesh with Gauss rules of ``p + 1`` points per direction by default."""
    return Mesh(vol, quad_order)


# --- boundary -----------------------------------------------------------------

class BoundaryTags(dict):
    """Map ``FaceId -> role`` with role in bottom / lateral / top."""

    def __init__(self, mapping):
        super().__init__()
        for face, role in dict(mapping).items():
            f = face if isinstance(face, FaceId) else FaceId.parse(face)
            if role not in ROLES:
                raise ConfigError(f"face {f.value}: role must be one of {', '.join(ROLES)}, got {role!r}")
            self[f] = role
        missing = [f.value for f in FaceId if f not in self]
        if missing:
            raise ConfigError("boundary tags missing for faces: " + ", ".join(missing))
        bottoms = self.faces("bottom")
        if len(bottoms) != 1:
            raise ConfigError(f"exactly one face must be tagged bottom (found {len(bottoms)})")
        if not self.faces("lateral"):
            raise ConfigError("at least one face must be tagged lateral")

    def faces(self, role: str) -> list[FaceId]:
        return [f for f in FaceId if self.get(f) == role]

    @property
    def bottom(self) -> FaceId:
        return self.faces("bottom")[0]


EXTRUDED_TAGS = {"ximin": "lateral", "ximax": "lateral", "etamin": "lateral",
                 "etamax": "lateral", "zetamin": "bottom", "zetamax": "top"}


@dataclass
class FaceQuadrature:
    """Surface quadrature on one face: points, outward normals, ``w * dS``, basis."""

    face: FaceId
    x: np.ndarray
    normal: np.ndarray
    weight: np.ndarray
    idx: np.ndarray
    R: np.ndarray

    @property
    def area(self) -> float:
        return float(self.weight.sum())


def face_quadrature(vol: NurbsVolume, face: FaceId, order) -> FaceQuadrature:
    """Tensor Gauss rule over the nonzero spans of a face."""
    a, b = face.tangent_axes
    qa, qb = (order, order) if np.isscalar(order) else order
    uv_a, w_a = [], []
    for s in vol.knots[a].nonzero_spans():
        x, w = gauss_legendre(qa, *vol.knots[a].values[s: s + 2])
        uv_a.append(x)
        w_a.append(w)
    uv_b, w_b = [], []
    for s in vol.knots[b].nonzero_spans():
        x, w = gauss_legendre(qb, *vol.knots[b].values[s: s + 2])
        uv_b.append(x)
        w_b.append(w)
    ua, ub = np.concatenate(uv_a), np.concatenate(uv_b)
    wa, wb = np.concatenate(w_a), np.concatenate(w_b)
    UB, UA = np.meshgrid(ub, ua, indexing="ij")
    WB, WA = np.meshgrid(wb, wa, indexing="ij")
    xi = face_point(face, np.column_stack([UA.ravel(), UB.ravel()]))
    x, J, idx, R, _ = vol.evaluate(xi)
    n, area = face_normals(J, face)
    return FaceQuadrature(face, x, n, (WA * WB).ravel() * area, idx, R)


@dataclass
class DirichletData:
    face: FaceId
    dofs: np.ndarray     # constrained global functions, sorted
    points: np.ndarray   # Greville collocation points (physical), aligned with dofs


@dataclass
class BoundarySets:
    lateral: list
    bottom: DirichletData
    top: list


def constrained_functions(vol: NurbsVolume, face: FaceId) -> np.ndarray:
    """Functions with support on ``face`` (clamped knots: first/last layer)."""
    shape = vol.shape
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    layer = 0 if face.side == 0 else shape[face.axis] - 1
    mask = grids[face.axis] == layer
    flat = vol.flat_index(*[g[mask] for g in grids])
    return np.sort(flat)


def classify_boundary(vol: NurbsVolume, tags, quad_order=None, multiplier: int = 3) -> BoundarySets:
    """Surface quadrature on lateral faces and collocation data on the bottom.

    Lateral faces use ``multiplier * (p + 1)`` Gauss points per tangent
    direction because the analytic flux is sharply peaked near the scan.
    """
    tags = tags if isinstance(tags, BoundaryTags) else BoundaryTags(tags)
    lateral = []
    for face in tags.faces("lateral"):
        a, b = face.tangent_axes
        if quad_order is None:
            qa, qb = vol.degrees[a] + 1, vol.degrees[b] + 1
        elif np.isscalar(quad_order):
            qa = qb = int(quad_order)
        else:
            qa, qb = int(quad_order[a]), int(quad_order[b])
        lateral.append(face_quadrature(vol, face, (multiplier * qa, multiplier * qb)))
    bot = tags.bottom
    dofs = constrained_functions(vol, bot)
    greville = [kv.greville() for kv in vol.knots]
    n1, n2, _ = vol.shape
    ijk = np.column_stack([dofs % n1, (dofs // n1) % n2, dofs // (n1 * n2)])
    xi = np.column_stack([greville[d][ijk[:, d]] for d in range(3)])
    xi[:, bot.axis] = float(bot.side)
    x, *_ = vol.evaluate(xi)
    return BoundarySets(lateral, DirichletData(bot, dofs, x), tags.faces("top"))


class DofMap:
    """Split of the global functions into free and constrained sets."""

    def __init__(self, n: int, constrained):
        self.n = int(n)
        self.constrained = np.asarray(constrained, dtype=int)
        mask = np.ones(self.n, dtype=bool)
        mask[self.constrained] = False
        self.free = np.nonzero(mask)[0]
        self.free_pos = np.full(self.n, -1)
        self.free_pos[self.free] = np.arange(len(self.free))

    @property
    def n_free(self) -> int:
        return len(self.free)

    def scatter(self, u_free, c) -> np.ndarray:
        u = np.empty(self.n)
        u[self.free] = u_free
        u[self.constrained] = c
        return u


def dirichlet_values(bottom: DirichletData, sources, mat: Material, t: float,
                     cull: float = DEFAULT_CULL) -> np.ndarray:
    """Coefficients imposing ``T_hat = -T_tilde`` (rise convention) on the bottom.

    Collocation at the Greville points of the bottom face: each constrained
    coefficient takes the target value at its own Greville point.
    """
    T, _ = superpose(sources, mat, bottom.points, t, cull=cull)
    return -T


# --- mesh size control ------------------------------------------------------

def _line_arclength(vol: NurbsVolume, d: int, anchor, n: int = 4097):
    u = np.linspace(0.0, 1.0, n)
    xi = np.tile(np.asarray(anchor, dtype=float), (n, 1))
    xi[:, d] = u
    _, J, *_ = vol.evaluate(xi)
    speed = np.linalg.norm(J[:, :, d], axis=1)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(u))])
    return u, s


def _graded_positions(sa: float, S: float, h0: float, ratio: float, hmax):
    """Points moving away from ``sa`` with geometrically growing spacing."""
    out = []
    for direction, room in ((1, S - sa), (-1, sa)):
        pos, h = 0.0, h0
        while room - pos > 1.5 * h:
            pos += h
            out.append((sa + direction * pos, h))
            h = h * ratio if hmax is None else min(h * ratio, hmax)
    return out


def refine_to_size(vol: NurbsVolume, target: float, anchor=(0.5, 0.0, 1.0),
                   graded=(True, True, True), ratio: float = 1.25, max_size=None) -> NurbsVolume:
    """Insert knots so elements at ``anchor`` have physical size ``target``.

    Sizes are measured along the parametric lines through ``anchor``. Graded
    directions grow geometrically by ``ratio`` away from the anchor; the
    other directions are split uniformly (in arc length) inside each existing
    span.
    """
    if not target > 0:
        raise ValueError("target element size must be positive")
    new = []
    for d in range(3):
        kv = vol.knots[d]
        u, s = _line_arclength(vol, d, anchor)
        existing = kv.values[kv.nonzero_spans()].tolist() + [1.0]
        s_exist = np.interp(existing, u, s)
        cand = []
        if graded[d]:
            sa = float(np.interp(anchor[d], u, s))
            for pos, h in _graded_positions(sa, s[-1], target, ratio, max_size):
                if np.min(np.abs(s_exist - pos)) > 0.5 * h:
                    cand.append(pos)
        else:
            for a, b in zip(s_exist[:-1], s_exist[1:]):
                n = max(1, math.ceil((b - a) / target - 1e-9))
                cand.extend(a + (b - a) * np.arange(1, n) / n)
        knots = np.interp(cand, s, u) if cand else np.zeros(0)
        new.append(np.unique(knots[(knots > 0) & (knots < 1)]))
    return h_refine(vol, new)


def face_edge_lengths(mesh: Mesh, face: FaceId, n_gauss: int = 8) -> np.ndarray:
    """Physical lengths of all element edges lying in ``face``."""
    vol = mesh.volume
    g, w = gauss_legendre(n_gauss)
    lengths = []
    for d in face.tangent_axes:
        (o,) = [a for a in face.tangent_axes if a != d]
        v_d = vol.knots[d].values
        spans_d = mesh.spans[d]
        lines = np.unique(np.concatenate([vol.knots[o].values[mesh.spans[o]], [1.0]]))
        lo, hi = v_d[spans_d], v_d[spans_d + 1]
        # (lines, spans, gauss) parametric points
        U = lo[None, :, None] + (hi - lo)[None, :, None] * g[None, None, :]
        U = np.broadcast_to(U, (len(lines),) + U.shape[1:])
        xi = np.empty(U.shape + (3,))
        xi[..., d] = U
        xi[..., o] = lines[:, None, None]
        xi[..., face.axis] = float(face.side)
        _, J, *_ = vol.evaluate(xi.reshape(-1, 3))
        speed = np.linalg.norm(J[:, :, d], axis=1).reshape(U.shape)
        lengths.append(((speed @ w) * (hi - lo)[None, :]).ravel())
    return np.concatenate(lengths)


@dataclass(frozen=True)
class MeshStats:
    l_min: float
    l_e: float
    n_dofs: int
    n_free: int
    n_elements: int


def mesh_stats(mesh: Mesh, face: FaceId, r_laser: float, dofmap: DofMap = None) -> MeshStats:
    """Minimum element edge lying in ``face`` and its ratio to the spot radius."""
    l_min = float(face_edge_lengths(mesh, face).min())
    n_free = dofmap.n_free if dofmap is not None else mesh.n_basis
    return MeshStats(l_min, l_min / r_laser, mesh.n_basis, n_free, mesh.n_elements)
