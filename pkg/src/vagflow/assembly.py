"""Discrete VAG operators: local stiffness, fluxes, residuals and Jacobians.

Unknowns are stored in flat arrays with the vertex values first and the cell
values after them, matching the (vertex, cell) block layout of the Newton
system.  :class:`DofVector` is the structured view used at the API surface.

Per-cell work is vectorized over groups of cells with the same number of
vertices.  Reductions into global arrays use ``np.bincount`` in a fixed
order, so repeated assemblies are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import (
    LumpedMeasures,
    Mesh,
    MeshError,
    QualityReport,
    Submesh,
    basis_integrals,
    build_submesh,
    compute_lumping,
    mesh_quality,
)
from .physics import HeteroModel, Model, Potential, TensorField

__all__ = [
    "FluxScheme",
    "DofVector",
    "LocalStiffness",
    "JacobianBlocks",
    "JacobianError",
    "DirichletBC",
    "Discretization",
    "Problem",
    "PressureProblem",
    "local_stiffness",
    "reconstruct",
    "relative_entropy",
    "discretize_initial",
    "tag_cells",
]


class FluxScheme(str, Enum):
    NONLINEAR = "nonlinear"
    LINEAR = "linear"
    QUASILINEAR = "quasilinear"


class JacobianError(ArithmeticError):
    """The cell block of the Jacobian is singular or not finite."""


@dataclass(frozen=True)
class DofVector:
    vertex: np.ndarray
    cell: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.vertex, self.cell]).astype(float)

    @classmethod
    def from_array(cls, a, n_vertices: int) -> "DofVector":
        a = np.asarray(a, dtype=float)
        return cls(a[:n_vertices].copy(), a[n_vertices:].copy())

    def min(self) -> float:
        return float(min(self.vertex.min(), self.cell.min()))


def _flat(u) -> np.ndarray:
    if isinstance(u, DofVector):
        return u.to_array()
    return np.asarray(u, dtype=float)


@dataclass(frozen=True, eq=False)
class LocalStiffness:
    cell: int
    vertices: tuple[int, ...]
    matrix: np.ndarray
    cond: float


@dataclass(eq=False)
class JacobianBlocks:
    """Newton system ``[[A, B], [C, diag(D)]] [dv; dc] = [b1; b2]``."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    D: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def full(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B], [self.C, sp.diags(self.D)]], format="csr")

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.b1, self.b2])


@dataclass(frozen=True, eq=False)
class DirichletBC:
    """Fixed values on a set of vertices; ``value(points, t)`` gives the data."""

    vertices: np.ndarray
    value: Callable[[np.ndarray, float], np.ndarray]

    @classmethod
    def on_sides(cls, mesh: Mesh, sides: Sequence[str], value, tol: float = 1e-12) -> "DirichletBC":
        idx = np.unique(np.concatenate([mesh.boundary_side(s, tol) for s in sides]))
        return cls(idx, value)


@dataclass(frozen=True, eq=False)
class _Group:
    cells: np.ndarray  # (n,)
    verts: np.ndarray  # (n, l)
    incidence: np.ndarray  # (n, l) positions in the flat cell/vertex incidence
    A: np.ndarray  # (n, l, l)


def _p1_gradients(p0, p1, p2):
    """Gradients of the three P1 basis functions on counterclockwise triangles."""
    two_s = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    g0 = np.column_stack([p1[:, 1] - p2[:, 1], p2[:, 0] - p1[:, 0]]) / two_s[:, None]
    g1 = np.column_stack([p2[:, 1] - p0[:, 1], p0[:, 0] - p2[:, 0]]) / two_s[:, None]
    g2 = np.column_stack([p0[:, 1] - p1[:, 1], p1[:, 0] - p0[:, 0]]) / two_s[:, None]
    return g0, g1, g2


def _build_groups(mesh: Mesh, submesh: Submesh, cell_tensors: np.ndarray) -> list[_Group]:
    p0, p1, p2 = submesh.points(mesh)
    _, g1, g2 = _p1_gradients(p0, p1, p2)
    L = cell_tensors[submesh.cell]
    Lg1 = np.einsum("tij,tj->ti", L, g1)
    Lg2 = np.einsum("tij,tj->ti", L, g2)
    area = submesh.area
    k11 = area * np.einsum("ti,ti->t", Lg1, g1)
    k22 = area * np.einsum("ti,ti->t", Lg2, g2)
    k12 = area * np.einsum("ti,ti->t", Lg1, g2)

    sizes = mesh.cell_sizes()
    groups = []
    for ell in np.unique(sizes):
        cells = np.nonzero(sizes == ell)[0]
        inc = mesh.cv_offsets[cells][:, None] + np.arange(ell)[None, :]
        verts = mesh.cv_vertex[inc]
        A = np.zeros((len(cells), ell, ell))
        for i in range(ell):
            j = (i + 1) % ell
            t = inc[:, i]
            A[:, i, i] += k11[t]
            A[:, j, j] += k22[t]
            A[:, i, j] += k12[t]
            A[:, j, i] += k12[t]
        A.setflags(write=False)
        groups.append(_Group(cells, verts, inc, A))
    return groups


class Discretization:
    """Mesh, submesh, lumped masses and local stiffness matrices."""

    def __init__(self, mesh: Mesh, tensor: TensorField, lumping: LumpedMeasures | float = 0.1):
        self.mesh = mesh
        self.tensor = tensor
        self.submesh = build_submesh(mesh)
        self.lumped = lumping if isinstance(lumping, LumpedMeasures) else compute_lumping(mesh, lumping)
        self.masses = self.lumped.dof_masses()
        self.groups = _build_groups(mesh, self.submesh, tensor.for_cells(mesh.tags))
        self.points = mesh.dof_points()

    @property
    def nv(self) -> int:
        return self.mesh.n_vertices

    @property
    def nc(self) -> int:
        return self.mesh.n_cells

    def stiffness(self, cell: int) -> LocalStiffness:
        for g in self.groups:
            hit = np.nonzero(g.cells == cell)[0]
            if hit.size:
                A = g.A[hit[0]].copy()
                ev = np.linalg.eigvalsh(A)
                return LocalStiffness(int(cell), tuple(int(v) for v in g.verts[hit[0]]), A, float(ev[-1] / ev[0]))
        raise IndexError(f"no cell {cell}")

    def condition_range(self) -> tuple[float, float]:
        conds = []
        for g in self.groups:
            ev = np.linalg.eigvalsh(g.A)
            conds.append(ev[:, -1] / ev[:, 0])
        c = np.concatenate(conds)
        return float(c.min()), float(c.max())

    def quality(self) -> QualityReport:
        return mesh_quality(self.mesh, self.submesh, self.lumped, self.condition_range())

    def basis_integrals(self) -> np.ndarray:
        return basis_integrals(self.mesh, self.submesh)

    def split(self, x) -> DofVector:
        return DofVector.from_array(_flat(x), self.nv)


def local_stiffness(mesh: Mesh, cell: int, tensor, submesh: Submesh | None = None) -> LocalStiffness:
    """Stiffness matrix of one cell for a constant tensor (2x2 array or TensorField)."""
    submesh = submesh or build_submesh(mesh)
    L = tensor.tensors[int(mesh.tags[cell])] if isinstance(tensor, TensorField) else np.asarray(tensor, float)
    lo, hi = mesh.cv_offsets[cell], mesh.cv_offsets[cell + 1]
    t = np.arange(lo, hi)
    p0, p1, p2 = mesh.centers[submesh.cell[t]], mesh.vertices[submesh.a[t]], mesh.vertices[submesh.b[t]]
    _, g1, g2 = _p1_gradients(p0, p1, p2)
    ell = hi - lo
    A = np.zeros((ell, ell))
    for i in range(ell):
        j = (i + 1) % ell
        s = submesh.area[t[i]]
        A[i, i] += s * g1[i] @ L @ g1[i]
        A[j, j] += s * g2[i] @ L @ g2[i]
        A[i, j] += s * g1[i] @ L @ g2[i]
        A[j, i] += s * g1[i] @ L @ g2[i]
    ev = np.linalg.eigvalsh(A)
    if ev[0] <= 0:
        raise MeshError(f"stiffness of cell {cell} is not positive definite", cell=cell)
    return LocalStiffness(int(cell), mesh.cells[cell], A, float(ev[-1] / ev[0]))


# ---------------------------------------------------------------------------
# flux kernels on a group of cells


def _nonlinear_kernel(A, Ec, dEc, Ev, dEv, Hc, dHc, Hv, dHv, jac: bool):
    """F_i = s_i sum_j a_ij s_j (Hc - Hv_j) with s_j = sqrt((Ec + Ev_j) / 2)."""
    s = np.sqrt(0.5 * (Ec[:, None] + Ev))
    d = Hc[:, None] - Hv
    q = s * d
    g = np.einsum("nij,nj->ni", A, q)
    F = s * g
    if not jac:
        return F, None, None
    with np.errstate(divide="ignore", invalid="ignore"):
        inv4s = np.where(s > 0, 0.25 / s, 0.0)
    ds_c = dEc[:, None] * inv4s  # d s_j / d x_c
    ds_v = dEv * inv4s  # d s_k / d x_k
    # dF_i/dx_c = ds_i g_i + s_i sum_j a_ij (ds_j d_j + s_j dHc)
    inner_c = np.einsum("nij,nj->ni", A, ds_c * d + s * dHc[:, None])
    dFc = ds_c * g + s * inner_c
    # dF_i/dx_k = delta_ik ds_k g_i + s_i a_ik (ds_k d_k - s_k dHv_k)
    w = ds_v * d - s * dHv
    dFv = s[:, :, None] * A * w[:, None, :]
    idx = np.arange(A.shape[1])
    dFv[:, idx, idx] += ds_v * g
    return F, dFc, dFv


def _linear_kernel(A, uc, uv, Vc, Vv, square: bool, jac: bool):
    """sum_j a_ij (f(u_c) - f(u_j)) + (u_c + u_i)/2 sum_j a_ij (V_c - V_j).

    f is the identity, or u|u| for the quasilinear flux (u^2 on the
    nonnegative states, extended oddly so that diffusion stays monotone).
    """
    conv = np.einsum("nij,nj->ni", A, Vc[:, None] - Vv)
    if square:
        diff = np.einsum("nij,nj->ni", A, (uc * np.abs(uc))[:, None] - uv * np.abs(uv))
    else:
        diff = np.einsum("nij,nj->ni", A, uc[:, None] - uv)
    F = diff + 0.5 * (uc[:, None] + uv) * conv
    if not jac:
        return F, None, None
    rows = A.sum(axis=2)
    dfc = 2.0 * np.abs(uc) if square else np.ones_like(uc)
    dfv = 2.0 * np.abs(uv) if square else np.ones_like(uv)
    dFc = dfc[:, None] * rows + 0.5 * conv
    dFv = -A * dfv[:, None, :]
    idx = np.arange(A.shape[1])
    dFv[:, idx, idx] += 0.5 * conv
    return F, dFc, dFv


# ---------------------------------------------------------------------------


class _Base:
    """Residual/Jacobian assembly shared by the u- and p-formulations."""

    disc: Discretization
    bc: DirichletBC | None

    affine = False

    def clamp_floor(self, eps: float) -> float | None:
        return None

    # subclasses provide these
    def _group_fluxes(self, x, jac):  # pragma: no cover - interface
        raise NotImplementedError

    def _accumulation(self, x, x_prev, dt):  # pragma: no cover - interface
        raise NotImplementedError

    def dirichlet(self, t: float):
        if self.bc is None:
            return np.empty(0, dtype=int), np.empty(0)
        idx = self.bc.vertices
        return idx, np.asarray(self.bc.value(self.disc.mesh.vertices[idx], t), dtype=float)

    def impose(self, x, t: float, floor: float | None = None) -> np.ndarray:
        x = np.array(x, dtype=float)
        idx, val = self.dirichlet(t)
        if floor is not None:
            val = np.maximum(val, floor)
        x[idx] = val
        return x

    def residual(self, u, u_prev, dt: float, t: float = 0.0) -> np.ndarray:
        x, x_prev = _flat(u), _flat(u_prev)
        nv, nc = self.disc.nv, self.disc.nc
        acc, _ = self._accumulation(x, x_prev, dt)
        R = acc.copy()
        for g, (F, _, _) in zip(self.disc.groups, self._group_fluxes(x, jac=False)):
            R[:nv] -= np.bincount(g.verts.ravel(), weights=F.ravel(), minlength=nv)
            R[nv:] += np.bincount(g.cells, weights=F.sum(axis=1), minlength=nc)
        idx, val = self.dirichlet(t)
        R[idx] = x[idx] - val
        return R

    def jacobian(self, u, u_prev, dt: float, t: float = 0.0, residual: np.ndarray | None = None) -> JacobianBlocks:
        x, x_prev = _flat(u), _flat(u_prev)
        nv, nc = self.disc.nv, self.disc.nc
        acc, dacc = self._accumulation(x, x_prev, dt)
        R = acc.copy()
        D = dacc[nv:].copy()
        ar, ac, av = [np.arange(nv)], [np.arange(nv)], [dacc[:nv]]
        br, bc_, bv = [], [], []
        cr, cc, cv = [], [], []
        for g, (F, dFc, dFv) in zip(self.disc.groups, self._group_fluxes(x, jac=True)):
            n, ell = g.verts.shape
            R[:nv] -= np.bincount(g.verts.ravel(), weights=F.ravel(), minlength=nv)
            R[nv:] += np.bincount(g.cells, weights=F.sum(axis=1), minlength=nc)
            D += np.bincount(g.cells, weights=dFc.sum(axis=1), minlength=nc)
            ar.append(np.repeat(g.verts, ell, axis=1).ravel())
            ac.append(np.tile(g.verts, (1, ell)).ravel())
            av.append(-dFv.reshape(n, ell * ell).ravel())
            br.append(g.verts.ravel())
            bc_.append(np.repeat(g.cells, ell))
            bv.append(-dFc.ravel())
            cr.append(np.repeat(g.cells, ell))
            cc.append(g.verts.ravel())
            cv.append(dFv.sum(axis=1).ravel())
        ar, ac, av = np.concatenate(ar), np.concatenate(ac), np.concatenate(av)
        br, bc_, bv = np.concatenate(br), np.concatenate(bc_), np.concatenate(bv)

        idx, val = self.dirichlet(t)
        if idx.size:
            fixed = np.zeros(nv, dtype=bool)
            fixed[idx] = True
            keep = ~fixed[ar]
            ar, ac, av = np.concatenate([ar[keep], idx]), np.concatenate([ac[keep], idx]), np.concatenate([av[keep], np.ones(idx.size)])
            keep = ~fixed[br]
            br, bc_, bv = br[keep], bc_[keep], bv[keep]
            R[idx] = x[idx] - val

        if not np.all(np.isfinite(D)) or np.any(D == 0.0):
            raise JacobianError("cell block of the Jacobian is singular or not finite")
        A = sp.csr_matrix((av, (ar, ac)), shape=(nv, nv))
        B = sp.csr_matrix((bv, (br, bc_)), shape=(nv, nc))
        C = sp.csr_matrix((np.concatenate(cv), (np.concatenate(cr), np.concatenate(cc))), shape=(nc, nv))
        return JacobianBlocks(A, B, C, D, -R[:nv], -R[nv:])

    def cell_flux(self, u, cell: int) -> np.ndarray:
        """Fluxes F_{k,s} from cell ``cell`` to each of its vertices (cell order)."""
        x = _flat(u)
        for g, (F, _, _) in zip(self.disc.groups, self._group_fluxes(x, jac=False)):
            hit = np.nonzero(g.cells == cell)[0]
            if hit.size:
                return F[hit[0]].copy()
        raise IndexError(f"no cell {cell}")


class Problem(_Base):
    """Scheme with the density ``u`` as unknown.

    ``scheme`` selects the nonlinear flux (free-energy diminishing), the
    linear flux (Fokker-Planck model only) or the quasilinear flux (porous
    medium with drift only).
    """

    def __init__(
        self,
        disc: Discretization,
        model: Model,
        potential: Potential | None = None,
        scheme: FluxScheme | str = FluxScheme.NONLINEAR,
        bc: DirichletBC | None = None,
    ):
        self.disc = disc
        self.model = model
        self.potential = potential or Potential()
        self.scheme = FluxScheme(scheme)
        self.bc = bc
        if self.scheme is FluxScheme.QUASILINEAR and model.name != "pme_drift":
            raise ValueError("the quasilinear scheme requires the pme_drift model")
        if self.scheme is FluxScheme.LINEAR and model.name != "fokker_planck_log":
            raise ValueError("the linear scheme requires the fokker_planck_log model")
        self.V = self.potential(disc.points)
        self.affine = self.scheme is FluxScheme.LINEAR

    def clamp_floor(self, eps: float) -> float | None:
        if self.scheme is FluxScheme.NONLINEAR and self.model.singular:
            return eps
        return None

    def _accumulation(self, x, x_prev, dt):
        m = self.disc.masses
        return m * (x - x_prev) / dt, m / dt

    def _group_fluxes(self, x, jac):
        nv = self.disc.nv
        if self.scheme is not FluxScheme.NONLINEAR:
            square = self.scheme is FluxScheme.QUASILINEAR
            Vv, Vc = self.V[:nv], self.V[nv:]
            uv, uc = x[:nv], x[nv:]
            for g in self.disc.groups:
                yield _linear_kernel(g.A, uc[g.cells], uv[g.verts], Vc[g.cells], Vv[g.verts], square, jac)
            return
        m = self.model
        if m.singular and np.any(x <= 0):
            raise ValueError("inadmissible state: the pressure is singular at nonpositive values")
        E, H = m.eta(x), m.pressure(x) + self.V
        dE = m.deta(x) if jac else E
        dH = m.dpressure(x) if jac else H
        for g in self.disc.groups:
            c = g.cells + nv
            yield _nonlinear_kernel(
                g.A, E[c], dE[c], E[g.verts], dE[g.verts], H[c], dH[c], H[g.verts], dH[g.verts], jac
            )

    # -- functionals --------------------------------------------------------

    def hydrostatic(self, u) -> np.ndarray:
        return self.model.pressure(_flat(u)) + self.V

    def energy(self, u) -> float:
        x = _flat(u)
        if self.model.singular and np.any(x < 0):
            return math.inf
        G = self.model.entropy(x)
        return float(np.dot(self.disc.masses, G + x * self.V))

    def dissipation(self, u) -> float:
        """sum_k delta_k h . B_k(u) delta_k h for the model's mobility."""
        x = _flat(u)
        if self.model.singular and np.any(x <= 0):
            return math.inf
        nv = self.disc.nv
        E, H = self.model.eta(x), self.hydrostatic(x)
        total = 0.0
        for g in self.disc.groups:
            c = g.cells + nv
            s = np.sqrt(0.5 * (E[c][:, None] + E[g.verts]))
            q = s * (H[c][:, None] - H[g.verts])
            total += float(np.einsum("ni,nij,nj->", q, g.A, q))
        return total

    def mass(self, u) -> float:
        return float(np.dot(self.disc.masses, _flat(u)))


class PressureProblem(_Base):
    """Nonlinear scheme with the pressure as unknown on a heterogeneous medium.

    Each cell inverts its own pressure law, so the vertex pressure is shared
    by all neighbouring cells while the density may jump across subdomains.
    """

    def __init__(self, disc: Discretization, hetero: HeteroModel, bc: DirichletBC | None = None):
        self.disc = disc
        self.hetero = hetero
        self.bc = bc
        self.cell_scale = hetero.cell_scales(disc.mesh.tags)
        mesh = disc.mesh
        self._cv_scale = self.cell_scale[mesh.cv_cell]

    def _accumulation(self, x, x_prev, dt):
        nv = self.disc.nv
        mesh, lumped = self.disc.mesh, self.disc.lumped
        inv, dinv = self.hetero.inverse, self.hetero.dinverse
        pc, pc0 = x[nv:], x_prev[nv:]
        acc_c = lumped.m_cell * (inv(pc, self.cell_scale) - inv(pc0, self.cell_scale)) / dt
        dacc_c = lumped.m_cell * dinv(pc, self.cell_scale) / dt
        pv, pv0 = x[mesh.cv_vertex], x_prev[mesh.cv_vertex]
        mcv = lumped.m_cell_vertex
        acc_v = np.bincount(mesh.cv_vertex, weights=mcv * (inv(pv, self._cv_scale) - inv(pv0, self._cv_scale)) / dt, minlength=nv)
        dacc_v = np.bincount(mesh.cv_vertex, weights=mcv * dinv(pv, self._cv_scale) / dt, minlength=nv)
        return np.concatenate([acc_v, acc_c]), np.concatenate([dacc_v, dacc_c])

    def _group_fluxes(self, x, jac):
        nv = self.disc.nv
        inv, dinv = self.hetero.inverse, self.hetero.dinverse
        for g in self.disc.groups:
            sc = self.cell_scale[g.cells]
            pc, pv = x[nv + g.cells], x[g.verts]
            # linear mobility: eta = u_k(p)
            Ec, Ev = inv(pc, sc), inv(pv, sc[:, None])
            dEc, dEv = dinv(pc, sc), dinv(pv, sc[:, None])
            ones_c, ones_v = np.ones_like(pc), np.ones_like(pv)
            yield _nonlinear_kernel(g.A, Ec, dEc, Ev, dEv, pc, ones_c, pv, ones_v, jac)

    def derived_density(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Cell densities u_k(p_k) and per-incidence densities u_k(p_s)."""
        x = _flat(p)
        nv = self.disc.nv
        mesh = self.disc.mesh
        return (
            self.hetero.inverse(x[nv:], self.cell_scale),
            self.hetero.inverse(x[mesh.cv_vertex], self._cv_scale),
        )

    def mass(self, p) -> float:
        uc, ucv = self.derived_density(p)
        lumped = self.disc.lumped
        return float(np.dot(lumped.m_cell, uc) + np.dot(lumped.m_cell_vertex, ucv))


# ---------------------------------------------------------------------------
# reconstructions and functionals


def _locate(disc: Discretization, x) -> tuple[int, np.ndarray]:
    x = np.asarray(x, dtype=float)
    p0, p1, p2 = disc.submesh.points(disc.mesh)
    two_s = 2.0 * disc.submesh.area
    l1 = ((x[0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (x[1] - p0[:, 1])) / two_s
    l2 = ((p1[:, 0] - p0[:, 0]) * (x[1] - p0[:, 1]) - (x[0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])) / two_s
    l0 = 1.0 - l1 - l2
    lam = np.column_stack([l0, l1, l2])
    ok = np.nonzero(lam.min(axis=1) >= -1e-12)[0]
    if not ok.size:
        raise ValueError(f"point {tuple(x)} lies outside the mesh")
    t = int(ok[0])
    return t, lam[t]


def reconstruct(disc: Discretization, kind: str, v, x) -> float:
    """Evaluate a reconstruction of ``v`` at point ``x``.

    ``piecewise_affine`` is the P1 interpolant on the submesh, ``cellwise``
    the piecewise constant cell values.  ``lumped`` is only defined at dof
    sites since the lumping subdomains are never built.
    """
    a = _flat(v)
    nv = disc.nv
    if kind == "lumped":
        d = np.linalg.norm(disc.points - np.asarray(x, dtype=float), axis=1)
        hit = np.nonzero(d <= 1e-14)[0]
        if not hit.size:
            raise ValueError("lumped reconstruction is only evaluated at dof sites")
        return float(a[hit[0]])
    t, lam = _locate(disc, x)
    sm = disc.submesh
    if kind == "cellwise":
        return float(a[nv + sm.cell[t]])
    if kind == "piecewise_affine":
        return float(lam[0] * a[nv + sm.cell[t]] + lam[1] * a[sm.a[t]] + lam[2] * a[sm.b[t]])
    raise ValueError(f"unknown reconstruction {kind!r}")


def relative_entropy(u, w_samples, masses) -> float:
    """sum_b m_b (u_b log(u_b / w_b) - u_b + w_b); NaN when some u_b < 0."""
    u, w, m = _flat(u), np.asarray(w_samples, float), np.asarray(masses, float)
    if np.any(u < 0):
        return math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        ulog = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0) / w), 0.0)
    return float(np.dot(m, ulog - u + w))


def discretize_initial(disc: Discretization, u0: Callable[[np.ndarray], np.ndarray]) -> DofVector:
    """Sample the initial data at vertices and cell centers."""
    vals = np.asarray(u0(disc.points), dtype=float)
    if np.any(vals < 0):
        raise ValueError("initial data must be nonnegative")
    return DofVector.from_array(vals, disc.nv)


def tag_cells(mesh: Mesh, region: Callable[[np.ndarray], np.ndarray]) -> Mesh:
    """Tag every cell by ``region(center)``; reject cells crossing a region boundary."""
    tags = np.asarray(region(mesh.centers), dtype=int)
    c = mesh.centers[mesh.cv_cell]
    inside = c + (1.0 - 1e-9) * (mesh.vertices[mesh.cv_vertex] - c)
    bad = np.nonzero(np.asarray(region(inside), dtype=int) != tags[mesh.cv_cell])[0]
    if bad.size:
        k = int(mesh.cv_cell[bad[0]])
        raise MeshError(f"cell {k} straddles a subdomain interface", cell=k)
    return mesh.with_tags(tags)
