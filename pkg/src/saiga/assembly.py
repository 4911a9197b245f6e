"""Sparse mass/stiffness assembly, boundary-flux load, Dirichlet elimination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .analytic import DEFAULT_CULL, Material, superpose
from .discretization import DofMap, Mesh


def _element_coo(mesh: Mesh, kernel):
    rows, cols, vals = [], [], []
    nl = mesh.n_local
    for b in mesh.batches():
        Ke = kernel(b)
        rows.append(np.repeat(b.idx, nl, axis=1).ravel())
        cols.append(np.tile(b.idx, (1, nl)).ravel())
        vals.append(Ke.ravel())
    n = mesh.n_basis
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_mass(mesh: Mesh, mat: Material) -> sp.csr_matrix:
    """``M_ij = int rho c_p N_i N_j dV``."""
    return _element_coo(mesh, lambda b: mat.rho_cp * np.einsum("bq,bqi,bqj->bij", b.wdetJ, b.R, b.R))


def assemble_stiffness(mesh: Mesh, mat: Material) -> sp.csr_matrix:
    """``K_ij = int k grad N_i . grad N_j dV``."""
    return _element_coo(mesh, lambda b: mat.k * np.einsum("bq,bqia,bqja->bij", b.wdetJ, b.dRdx, b.dRdx))


def assemble_volume_load(mesh: Mesh, f) -> np.ndarray:
    """``b_i = int f N_i dV`` for a callable ``f(x)`` on (npts, 3) points."""
    out = np.zeros(mesh.n_basis)
    for b in mesh.batches():
        fx = f(b.x.reshape(-1, 3)).reshape(b.wdetJ.shape)
        out += np.bincount(b.idx.ravel(), np.einsum("bq,bqi->bi", fx * b.wdetJ, b.R).ravel(),
                           minlength=mesh.n_basis)
    return out


def assemble_flux_load(n: int, lateral, sources, mat: Material, t: float,
                       cull: float = DEFAULT_CULL, threads: int = 1) -> np.ndarray:
    """``F_i = int_lat (-q_N) N_i dS`` with ``q_N = k grad(T_tilde) . n``.

    ``lateral`` is the list of face quadrature sets; ``n`` the number of
    global functions.
    """
    F = np.zeros(n)
    for fq in lateral:
        _, G = superpose(sources, mat, fq.x, t, cull=cull, threads=threads)
        q_N = mat.k * np.einsum("pa,pa->p", G, fq.normal)
        F += np.bincount(fq.idx.ravel(), ((-q_N * fq.weight)[:, None] * fq.R).ravel(), minlength=n)
    return F


def dump_coo(A, path) -> None:
    """Write ``row col value`` lines (0-based), full precision."""
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {float(v)!r}\n")


@dataclass
class SystemMatrices:
    """Full ``M`` and ``K`` plus the free/constrained blocks used for lifting."""

    M: sp.csr_matrix
    K: sp.csr_matrix
    dofs: DofMap
    _reduced: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        f, c = self.dofs.free, self.dofs.constrained
        self.M_ff = self.M[f][:, f].tocsr()
        self.K_ff = self.K[f][:, f].tocsr()
        self.M_fc = self.M[f][:, c].tocsr()
        self.K_fc = self.K[f][:, c].tocsr()

    def reduced(self, theta: float, dt: float):
        """``(A, B, A_fc, B_fc)`` for the theta scheme, cached per ``(theta, dt)``."""
        key = (float(theta), float(dt))
        if key not in self._reduced:
            A = (self.M_ff / dt + theta * self.K_ff).tocsr()
            B = (self.M_ff / dt - (1.0 - theta) * self.K_ff).tocsr()
            A_fc = (self.M_fc / dt + theta * self.K_fc).tocsr()
            B_fc = (self.M_fc / dt - (1.0 - theta) * self.K_fc).tocsr()
            self._reduced[key] = (A, B, A_fc, B_fc)
        return self._reduced[key]


def assemble_system(mesh: Mesh, mat: Material, dofs: DofMap) -> SystemMatrices:
    return SystemMatrices(assemble_mass(mesh, mat), assemble_stiffness(mesh, mat), dofs)


def apply_dirichlet(system: SystemMatrices, c_old, c_new, theta: float, dt: float):
    """Reduced operator and the lifted right-hand-side contribution.

    Returns ``(A_ff, lift)`` where ``lift = -(M_fc/dt + theta K_fc) c_new
    + (M_fc/dt - (1 - theta) K_fc) c_old``.
    """
    n_c = len(system.dofs.constrained)
    c_old = np.asarray(c_old, dtype=float)
    c_new = np.asarray(c_new, dtype=float)
    if c_old.shape != (n_c,) or c_new.shape != (n_c,):
        raise ValueError(f"expected {n_c} constrained values, got {c_old.shape} and {c_new.shape}")
    A, _, A_fc, B_fc = system.reduced(theta, dt)
    return A, B_fc @ c_old - A_fc @ c_new
