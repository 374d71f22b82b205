"""Q1-iso-Q2 / Q1 Stokes elements on periodic structured mapped meshes.

Nodes form a grid ``(i, j)``: ``i`` runs along a periodic parameter ``t``
and ``j`` across rows.  Row ``j`` is a curve ``X_j(t)`` and every sub-quad
is the blend ``(1 - eta) X_j(t) + eta X_{j+1}(t)``, so curved walls are
represented exactly.  Velocity is bilinear on sub-quads, pressure bilinear
on macro elements of 2x2 sub-quads.  Velocity unknowns at a node are
components in a node basis rotated by ``basis_angle(t)``; for polar
components this turns rotational periodicity into index periodicity.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError

_G = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_W = np.array([5.0, 8.0, 5.0]) / 18.0
XI, ETA = (a.ravel() for a in np.meshgrid(_G, _G, indexing="ij"))
WQ = np.outer(_W, _W).ravel()


def _bilinear(xi, eta):
    """Values and reference derivatives; local order (0,0), (1,0), (0,1), (1,1)."""
    val = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1)
    dxi = np.stack([-(1 - eta), 1 - eta, -eta, eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, 1 - xi, xi], axis=-1)
    return val, dxi, deta


class MappedMesh:
    """Base class; subclasses provide ``row_curve`` and ``basis_angle``."""

    def __init__(self, t_nodes, period: float, n_rows: int):
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.period = float(period)
        self.nt, self.nr = self.t_nodes.size, int(n_rows)
        if self.nt % 2 or (self.nr - 1) % 2:
            raise GeometryError("node grid must have even interval counts")
        self.n_nodes = self.nt * self.nr
        self.npt, self.npr = self.nt // 2, (self.nr - 1) // 2 + 1
        self.n_pressure = self.npt * self.npr

    # subclass hooks
    def row_curve(self, j, t):
        """Points ``X_j(t)`` and tangents ``X_j'(t)``, each with a trailing axis of size 2."""
        raise NotImplementedError

    def basis_angle(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    # ------------------------------------------------------------ indexing

    def node(self, i, j):
        return (np.asarray(i) % self.nt) * self.nr + np.asarray(j)

    def pnode(self, I, J):
        return (np.asarray(I) % self.npt) * self.npr + np.asarray(J)

    def dof(self, node, comp):
        return 2 * np.asarray(node) + comp

    @property
    def n_velocity(self):
        return 2 * self.n_nodes

    def node_points(self):
        t = np.broadcast_to(self.t_nodes[:, None], (self.nt, self.nr))
        j = np.broadcast_to(np.arange(self.nr)[None, :], (self.nt, self.nr))
        return self.row_curve(j, t)[0]

    def _next_t(self, i):
        return np.where(i + 1 < self.nt, self.t_nodes[(i + 1) % self.nt], self.t_nodes[0] + self.period)

    # ------------------------------------------------------------ quadrature

    def build(self):
        nt, nr = self.nt, self.nr
        ii, jj = np.meshgrid(np.arange(nt), np.arange(nr - 1), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        self.quad_i, self.quad_j = ii, jj
        t0 = self.t_nodes[ii]
        dt = self._next_t(ii) - t0
        t = t0[:, None] + XI[None, :] * dt[:, None]
        eta = np.broadcast_to(ETA, t.shape)[..., None]
        x0, dx0 = self.row_curve(jj[:, None], t)
        x1, dx1 = self.row_curve(jj[:, None] + 1, t)
        jx = ((1 - eta) * dx0 + eta * dx1) * dt[:, None, None]
        je = x1 - x0
        det = jx[..., 0] * je[..., 1] - jx[..., 1] * je[..., 0]
        sign = np.sign(np.median(det))
        if sign == 0 or np.any(det * sign <= 0):
            raise GeometryError("mesh has inverted or degenerate elements")
        self.det = det * sign
        self.weight = self.det * WQ[None, :]
        self.points = (1 - eta) * x0 + eta * x1
        self.q_t = t

        val, dxi, deta = _bilinear(XI, ETA)
        inv = 1.0 / det
        gx = inv[..., None] * (je[..., 1, None] * dxi - jx[..., 1, None] * deta)
        gy = inv[..., None] * (-je[..., 0, None] * dxi + jx[..., 0, None] * deta)
        self.phi = val
        self.grad = np.stack([gx, gy], axis=-1)  # (nquad, NQ, 4, 2)

        loc_i = np.stack([ii, ii + 1, ii, ii + 1], axis=-1)
        loc_j = np.stack([jj, jj, jj + 1, jj + 1], axis=-1)
        self.local_nodes = self.node(loc_i, loc_j)
        t_loc = np.where(loc_i >= nt, self.t_nodes[0] + self.period, self.t_nodes[loc_i % nt])
        self.local_angle = self.basis_angle(t_loc)

        a, b = ii % 2, jj % 2
        self.psi = _bilinear((a[:, None] + XI[None, :]) / 2, (b[:, None] + ETA[None, :]) / 2)[0]
        I, J = ii // 2, jj // 2
        self.local_pnodes = np.stack(
            [self.pnode(I, J), self.pnode(I + 1, J), self.pnode(I, J + 1), self.pnode(I + 1, J + 1)], axis=-1
        )
        return self

    def node_basis(self):
        """First and second node basis vectors of every local node, shape (nquad, 4, 2)."""
        a = self.local_angle
        e0 = np.stack([np.cos(a), np.sin(a)], axis=-1)
        e1 = np.stack([-np.sin(a), np.cos(a)], axis=-1)
        return e0, e1

    def quads_in_rows(self, j0, j1=None):
        """Mask of sub-quads between node rows ``j0`` and ``j1``."""
        j1 = self.nr - 1 if j1 is None else j1
        return (self.quad_j >= j0) & (self.quad_j < j1)


def assemble(mesh: MappedMesh):
    """Vector Laplacian ``K`` and divergence ``D`` (rows: pressure) in node-basis unknowns."""
    e0, e1 = mesh.node_basis()
    basis = np.stack([e0, e1], axis=2)  # (nquad, 4, comp, xy)
    gg = np.einsum("eq,eqak,eqbk->eab", mesh.weight, mesh.grad, mesh.grad)
    dots = np.einsum("eaik,ebjk->eaibj", basis, basis)
    kloc = gg[:, :, None, :, None] * dots
    base = mesh.dof(mesh.local_nodes, 0)
    rows = base[:, :, None, None, None] + np.arange(2)[None, None, :, None, None]
    cols = base[:, None, None, :, None] + np.arange(2)[None, None, None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    n = mesh.n_velocity
    K = sp.csr_matrix((kloc.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))

    gdot = np.einsum("eqak,eaik->eqai", mesh.grad, basis)
    dloc = np.einsum("eq,eqp,eqai->epai", mesh.weight, mesh.psi, gdot)
    prow = np.broadcast_to(mesh.local_pnodes[:, :, None, None], dloc.shape)
    dcol = np.broadcast_to(base[:, None, :, None], dloc.shape) + np.arange(2)
    D = sp.csr_matrix((dloc.ravel(), (prow.ravel(), dcol.ravel())), shape=(mesh.n_pressure, n))
    return K, D


def pressure_mass(mesh: MappedMesh, quads=None):
    w = mesh.weight if quads is None else mesh.weight * quads[:, None]
    vals = np.einsum("eq,eqp->ep", w, mesh.psi)
    return np.bincount(mesh.local_pnodes.ravel(), vals.ravel(), minlength=mesh.n_pressure)


def row_mass(mesh: MappedMesh, row: int, weight=None):
    """Consistent 1D mass matrix along node row ``row`` (arc length), over the index ``i``.

    ``weight(t)`` multiplies the integrand.
    """
    nt = mesh.nt
    i = np.arange(nt)
    t0 = mesh.t_nodes
    dt = mesh._next_t(i) - t0
    t = t0[:, None] + _G[None, :] * dt[:, None]
    _, dx = mesh.row_curve(np.full(t.shape, row), t)
    wq = _W[None, :] * dt[:, None] * np.linalg.norm(dx, axis=-1)
    if weight is not None:
        wq = wq * weight(t)
    phi = np.stack([1 - _G, _G], axis=-1)
    loc = np.einsum("eq,qa,qb->eab", wq, phi, phi)
    nodes = np.stack([i, (i + 1) % nt], axis=-1)
    rows, cols = np.broadcast_arrays(nodes[:, :, None], nodes[:, None, :])
    return sp.csr_matrix((loc.ravel(), (rows.ravel(), cols.ravel())), shape=(nt, nt))


def evaluate(mesh: MappedMesh, values):
    """Cartesian values and gradients at quadrature points of nodal values ``(n_nodes, 2)``."""
    values = np.asarray(values, dtype=float).reshape(mesh.n_nodes, 2)
    e0, e1 = mesh.node_basis()
    loc = values[mesh.local_nodes]
    cart = loc[..., 0, None] * e0 + loc[..., 1, None] * e1
    u = np.einsum("qa,eak->eqk", mesh.phi, cart)
    grad = np.einsum("eqal,eak->eqkl", mesh.grad, cart)  # d u_k / d x_l
    return u, grad


def solve_stokes(mesh: MappedMesh, fixed, value, load=None, extra=None):
    """Solve with Dirichlet data on ``fixed`` unknowns; ``extra`` is added to ``K``.

    Returns nodal unknowns, pressure (mean zero over the mesh) and the solve info.
    """
    from .linalg import solve_saddle

    K, D = assemble(mesh)
    if extra is not None:
        K = K + extra
    n = mesh.n_velocity
    f = np.zeros(n) if load is None else np.asarray(load, dtype=float)
    free = ~fixed
    Kc = K.tocsr()
    rhs = f[free] - Kc[free][:, fixed] @ value[fixed]
    Dc = D.tocsc()
    g = Dc[:, fixed] @ value[fixed]
    u_free, p, info = solve_saddle(Kc[free][:, free], Dc[:, free], rhs, g, pin=0, method="direct")
    u = value.copy()
    u[free] = u_free
    w = pressure_mass(mesh)
    p = p - w @ p / w.sum()
    return u, p, info, float(np.max(np.abs(D @ u))), K
