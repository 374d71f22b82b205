"""Staggered grid for the truncated periodic cell and assembly of the Stokes blocks.

Unknowns are the transformed velocity ``v = B^T beta`` on cell faces and the
pressure at cell centers.  For diagonal ``A`` the cell system becomes

    (1/a_j) (-sum_k a_k d_k^2 v_j) + d_j omega = -g_j delta_S,   div v = 0,

with ``g = B^{-1} lambda``.  The tangential directions are periodic with
``n`` cells of width ``h = 1/n``; the vertical axis ``z = y_d`` is cut at
``-L`` (free slip: Neumann for tangential components, ``v_d = 0``) and
closed above the roughness.  A cell is fluid iff its center lies strictly
below the roughness height, a face is active iff both adjacent cells are
fluid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import GeometryError, ResolutionError


@dataclass(frozen=True)
class CellResolution:
    n: int = 32  # cells per unit in each periodic direction
    hz: float | None = None  # vertical spacing near S, defaults to 1/n
    fine_depth: float | None = None  # uniform spacing down to this depth, defaults to L
    stretch: float = 1.1  # growth ratio of the vertical spacing below fine_depth


def vertical_faces(top_height, depth, hz, fine_depth, stretch):
    """Face coordinates from ``-depth`` to the top.

    Cell centers sit at multiples of ``hz`` near the interface, so ``z = 0``
    is a level of tangential-velocity nodes; the top row of cells is always
    solid.
    """
    if depth <= 0:
        raise GeometryError("truncation depth must be positive")
    n_top = max(1, int(math.ceil(top_height / hz - 1e-9)))
    upper = hz * (np.arange(0, n_top + 1) + 0.5)
    fine_depth = min(depth, fine_depth)
    n_fine = max(1, int(round(fine_depth / hz - 0.5)))
    lower = -hz * (np.arange(0, n_fine) + 0.5)
    z, dz = lower[-1], hz
    extra = []
    while z > -depth + 1e-12:
        dz = dz * stretch if stretch > 1 else dz
        z = max(z - dz, -depth)
        if -depth < z < -depth + 0.3 * dz:
            z = -depth
        extra.append(z)
    faces = np.concatenate([np.array(extra)[::-1], lower[::-1], upper])
    return np.unique(np.round(faces, 14))


@dataclass
class CellGrid:
    dim: int
    n: int
    zf: np.ndarray
    fluid: np.ndarray  # shape (n,)*(d-1) + (nz,)
    a_diag: np.ndarray  # (a_1, ..., a_{d-1}, 1)
    face_heights: list | None = None  # roughness height at each tangential face column

    def __post_init__(self):
        self.h = 1.0 / self.n
        self.zc = 0.5 * (self.zf[1:] + self.zf[:-1])
        self.dz = np.diff(self.zf)
        self.nz = self.zc.size
        self.k_s = int(np.flatnonzero(np.abs(self.zc) < 1e-12)[0])
        d = self.dim
        self.tshape = (self.n,) * (d - 1)
        self.active = []
        for j in range(d - 1):
            self.active.append(self.fluid & np.roll(self.fluid, 1, axis=j))
        vert = np.zeros(self.tshape + (self.nz + 1,), dtype=bool)
        vert[..., 1:-1] = self.fluid[..., :-1] & self.fluid[..., 1:]
        self.active.append(vert)
        self.index = []
        offset = 0
        for act in self.active:
            idx = np.full(act.shape, -1, dtype=np.int64)
            cnt = int(act.sum())
            idx[act] = offset + np.arange(cnt)
            self.index.append(idx)
            offset += cnt
        self.n_velocity = offset
        cidx = np.full(self.fluid.shape, -1, dtype=np.int64)
        cidx[self.fluid] = np.arange(int(self.fluid.sum()))
        self.cell_index = cidx
        self.n_pressure = int(self.fluid.sum())
        # dual heights of vertical faces
        dzf = np.empty(self.nz + 1)
        dzf[1:-1] = np.diff(self.zc)
        dzf[0] = self.zc[0] - self.zf[0]
        dzf[-1] = self.zf[-1] - self.zc[-1]
        self.dzf = dzf
        self.top_dist = [self._top_distance(j) for j in range(d - 1)]

    def _top_distance(self, j):
        """Distance from each tangential node to the wall above it.

        Where the roughness crosses between the node and the next node up,
        the true distance is used (clipped below at a tenth of the spacing);
        otherwise the wall is the top face of the cell.
        """
        half = np.broadcast_to(self.zf[1:] - self.zc, self.active[j].shape)
        if self.face_heights is None:
            return np.array(half)
        gap = np.append(np.diff(self.zc), self.dz[-1])
        dist = np.asarray(self.face_heights[j])[..., None] - self.zc
        cut = (dist > 0) & (dist <= gap)
        return np.where(cut, np.maximum(dist, 0.1 * gap), half)

    # ------------------------------------------------------------ coordinates

    def tangential_coords(self, comp: int):
        """Periodic coordinates (one array per tangential axis) of component ``comp``."""
        out = []
        for m in range(self.dim - 1):
            shift = 0.0 if m == comp else 0.5
            out.append((np.arange(self.n) + shift) * self.h)
        return out

    def vertical_coords(self, comp: int):
        return self.zf if comp == self.dim - 1 else self.zc

    def vertical_extent(self, comp: int):
        return self.dzf if comp == self.dim - 1 else self.dz

    def cell_volumes(self):
        return np.broadcast_to(self.dz * self.h ** (self.dim - 1), self.fluid.shape)

    def split(self, x):
        """Velocity vector -> list of full component arrays (inactive faces zero)."""
        out = []
        for act, idx in zip(self.active, self.index):
            arr = np.zeros(act.shape)
            arr[act] = x[idx[act]]
            out.append(arr)
        return out

    def pressure_array(self, p):
        arr = np.full(self.fluid.shape, np.nan)
        arr[self.fluid] = p
        return arr

    def interface_trace(self, comps):
        """Values of each component on ``S``.

        Tangential nodes lie on ``S``; the normal component is the mean of
        the two faces straddling it.
        """
        d, ks = self.dim, self.k_s
        out = [comps[j][..., ks] for j in range(d - 1)]
        out.append(0.5 * (comps[d - 1][..., ks] + comps[d - 1][..., ks + 1]))
        return out

    def cell_centered(self, comps):
        """Average face values to cell centers, shape ``(d,) + fluid.shape``."""
        d = self.dim
        out = np.zeros((d,) + self.fluid.shape)
        for j in range(d - 1):
            out[j] = 0.5 * (comps[j] + np.roll(comps[j], -1, axis=j))
        out[d - 1] = 0.5 * (comps[d - 1][..., :-1] + comps[d - 1][..., 1:])
        return out


def build_cell_grid(dim, n, profile_values, a_diag, depth, resolution: CellResolution, face_heights=None):
    """``profile_values``: roughness heights at the cell-center columns."""
    if n < 4:
        raise ResolutionError("cell grid needs at least 4 cells per periodic direction")
    hz = resolution.hz or 1.0 / n
    top = float(np.max(profile_values))
    fine = depth if resolution.fine_depth is None else resolution.fine_depth
    zf = vertical_faces(top, depth, hz, fine, resolution.stretch)
    zc = 0.5 * (zf[1:] + zf[:-1])
    fluid = zc[None, :] < np.asarray(profile_values).reshape(-1, 1)
    fluid = fluid.reshape(tuple(np.shape(profile_values)) + (zc.size,))
    return CellGrid(
        dim=dim, n=n, zf=zf, fluid=fluid, a_diag=np.asarray(a_diag, dtype=float), face_heights=face_heights
    )


# ---------------------------------------------------------------- assembly


def _coupling(rows, cols, vals, pi, qi, w):
    rows.extend([pi, qi, pi, qi])
    cols.extend([pi, qi, qi, pi])
    vals.extend([w, w, -w, -w])


def assemble_stokes(grid: CellGrid, wall_trace=None):
    """Return ``K, D, rhs_u, rhs_p`` of ``K v - D^T w = f, -D v = g``.

    ``wall_trace(comp, points)`` gives Dirichlet values of ``v`` on the flat
    top wall (used by seeded single-mode tests); ``None`` means no-slip.
    """
    d, h, a = grid.dim, grid.h, grid.a_diag
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.n_velocity)
    rhs = np.zeros(grid.n_velocity)
    g_cont = np.zeros(grid.n_pressure)
    area_h = h ** (d - 1)

    for j in range(d):
        act, idx = grid.active[j], grid.index[j]
        ext = grid.vertical_extent(j)
        # periodic tangential directions
        for m in range(d - 1):
            w_line = h ** (d - 2) * ext / h * a[m] / a[j]
            w = np.broadcast_to(w_line, act.shape)
            act_q = np.roll(act, -1, axis=m)
            idx_q = np.roll(idx, -1, axis=m)
            both = act & act_q
            sel = both & (idx != idx_q)
            _coupling(rows, cols, vals, idx[sel], idx_q[sel], w[sel])
            # wall between a node and an inactive neighbour: half spacing unless on the same axis
            factor = 1.0 if m == j else 2.0
            one = act & ~act_q
            np.add.at(diag, idx[one], factor * w[one])
            act_b = np.roll(act, 1, axis=m)
            one = act & ~act_b
            w_b = np.roll(w, 1, axis=m)
            np.add.at(diag, idx[one], factor * w_b[one])
        # vertical direction
        if j < d - 1:
            dist = np.diff(grid.zc)
            w_line = area_h / dist / a[j]
            p_act, q_act = act[..., :-1], act[..., 1:]
            w = np.broadcast_to(w_line, p_act.shape)
            sel = p_act & q_act
            _coupling(rows, cols, vals, idx[..., :-1][sel], idx[..., 1:][sel], w[sel])
            # wall above an active face (includes the domain top)
            above = np.zeros(act.shape, dtype=bool)
            above[..., :-1] = act[..., :-1] & ~act[..., 1:]
            above[..., -1] = act[..., -1]
            w_wall = area_h / grid.top_dist[j] / a[j]
            np.add.at(diag, idx[above], w_wall[above])
            if wall_trace is not None and np.any(above):
                pts = _points(grid, j, above)
                vals_wall = wall_trace(j, pts)
                np.add.at(rhs, idx[above], w_wall[above] * vals_wall)
        else:
            w_line = area_h / grid.dz  # pair (k, k+1) straddles cell k
            p_act, q_act = act[..., :-1], act[..., 1:]
            w = np.broadcast_to(w_line, p_act.shape)
            sel = p_act & q_act
            _coupling(rows, cols, vals, idx[..., :-1][sel], idx[..., 1:][sel], w[sel])
            up = p_act & ~q_act
            np.add.at(diag, idx[..., :-1][up], w[up])
            down = q_act & ~p_act
            np.add.at(diag, idx[..., 1:][down], w[down])
            if wall_trace is not None and np.any(up):
                full = np.zeros(act.shape, dtype=bool)
                full[..., 1:] = up  # the inactive face above, where the data lives
                pts = _points(grid, j, full)
                vals_wall = wall_trace(j, pts)
                np.add.at(rhs, idx[..., :-1][up], w[up] * vals_wall)
                # known flux through the top face of the cell below the wall
                np.add.at(g_cont, grid.cell_index[up], area_h * vals_wall)

    n_u = grid.n_velocity
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    K = sp.coo_matrix((v, (r, c)), shape=(n_u, n_u)).tocsr() + sp.diags(diag)
    D = assemble_divergence(grid)
    return K.tocsr(), D, rhs, g_cont


def _points(grid, comp, mask):
    """Tangential coordinates of masked faces of ``comp``; shape (N, d-1)."""
    coords = grid.tangential_coords(comp)
    mesh = np.meshgrid(*coords, indexing="ij")
    pts = []
    for arr in mesh:
        full = np.broadcast_to(arr[..., None], mask.shape)
        pts.append(full[mask])
    return np.stack(pts, axis=-1)


def assemble_divergence(grid: CellGrid):
    """Integrated outward flux per fluid cell."""
    d, h = grid.dim, grid.h
    rows, cols, vals = [], [], []
    cid = grid.cell_index
    fl = grid.fluid
    for j in range(d - 1):
        act, idx = grid.active[j], grid.index[j]
        area = np.broadcast_to(h ** (d - 2) * grid.dz, fl.shape)
        # face i is the left face of cell i and the right face of cell i-1
        left = fl & act
        rows.append(cid[left]); cols.append(idx[left]); vals.append(-area[left])
        idx_r = np.roll(idx, -1, axis=j)
        act_r = np.roll(act, -1, axis=j)
        right = fl & act_r
        rows.append(cid[right]); cols.append(idx_r[right]); vals.append(area[right])
    act, idx = grid.active[d - 1], grid.index[d - 1]
    area = h ** (d - 1)
    bot = fl & act[..., :-1]
    rows.append(cid[bot]); cols.append(idx[..., :-1][bot]); vals.append(np.full(bot.sum(), -area))
    top = fl & act[..., 1:]
    rows.append(cid[top]); cols.append(idx[..., 1:][top]); vals.append(np.full(top.sum(), area))
    D = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_pressure, grid.n_velocity),
    )
    return D.tocsr()


def interface_load(grid: CellGrid, g):
    """Discrete surface load ``-int_S g . psi`` consistent with ``interface_trace``."""
    d, ks = grid.dim, grid.k_s
    f = np.zeros(grid.n_velocity)
    area = grid.h ** (d - 1)
    for j in range(d - 1):
        act, idx = grid.active[j], grid.index[j]
        sel = act[..., ks]
        f[idx[..., ks][sel]] -= g[j] * area
    act, idx = grid.active[d - 1], grid.index[d - 1]
    for k in (ks, ks + 1):
        sel = act[..., k]
        f[idx[..., k][sel]] -= 0.5 * g[d - 1] * area
    return f
