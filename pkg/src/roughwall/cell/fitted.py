"""Boundary-fitted finite-element solver for two-dimensional cells.

Rows of the node grid follow the roughness (``z = rho * gamma(y1)``) above
the interface and are graded flat lines below it, so the rough wall is
represented exactly instead of by stair steps.  The tangential coordinate
is rescaled by ``sqrt(a_1)``, which turns the cell system into the plain
Stokes system; the unknowns are ``w = (v_1 / sqrt(a_1), v_2)`` with
``v = B^T beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError, IncompatibleError
from ..fem import MappedMesh, pressure_mass, row_mass, solve_stokes
from ..geometry import _graded_radii
from ..linalg import SolveInfo


class StripMesh(MappedMesh):
    """Periodic strip ``[0, period) x (-depth, gamma]`` in rescaled coordinates."""

    def __init__(self, profile, a1: float, n: int, depth: float, growth: float = 1.1, max_spacing: float = 0.25):
        if n < 4 or n % 2:
            raise GeometryError("fitted cell needs an even number (>= 4) of intervals per period")
        self.profile = profile
        self.scale = math.sqrt(a1)  # y1 = scale * x1
        h = 1.0 / (n * self.scale)
        self.h = h
        t = np.arange(n) * h
        ys = self.scale * np.linspace(0, 1.0 / self.scale, 4 * n, endpoint=False)
        top = float(np.max(profile(ys[:, None])))
        if top <= 0:
            raise GeometryError("roughness never rises above the interface")
        layer = max(2, 2 * math.ceil(top / (2 * h)))
        self.rho = np.linspace(0.0, 1.0, layer + 1)
        below = _graded_radii(0.0, depth, h, growth, max(h, max_spacing))
        self.z_below = -below[::-1]  # -depth .. 0
        self.k_s = self.z_below.size - 1
        super().__init__(t, 1.0 / self.scale, self.z_below.size + layer)
        self.build()

    def gamma(self, t):
        return np.asarray(self.profile(np.asarray(t)[..., None] * self.scale), dtype=float).reshape(np.shape(t))

    def row_curve(self, j, t):
        j, t = np.broadcast_arrays(np.asarray(j), np.asarray(t, dtype=float))
        z = np.empty(t.shape)
        dz = np.zeros(t.shape)
        low = j <= self.k_s
        z[low] = self.z_below[j[low]]
        up = ~low
        if np.any(up):
            tu = t[up]
            rho = self.rho[j[up] - self.k_s]
            step = 1e-6 * self.h
            z[up] = rho * self.gamma(tu)
            dz[up] = rho * (self.gamma(tu + step) - self.gamma(tu - step)) / (2 * step)
        return np.stack([t, z], axis=-1), np.stack([np.ones_like(t), dz], axis=-1)

    def locate(self, x1, z):
        """Element indices, local coordinates and an inside-the-fluid mask for points."""
        x1 = np.mod(np.asarray(x1, dtype=float), self.period)
        z = np.asarray(z, dtype=float)
        i = np.minimum((x1 / self.h).astype(int), self.nt - 1)
        xi = (x1 - i * self.h) / self.h
        g = self.gamma(x1)
        rows = np.concatenate([np.broadcast_to(self.z_below, z.shape + self.z_below.shape),
                               self.rho[1:] * g[..., None]], axis=-1)
        j = np.clip(np.sum(rows <= z[..., None], axis=-1) - 1, 0, self.nr - 2)
        lo = np.take_along_axis(rows, j[..., None], -1)[..., 0]
        hi = np.take_along_axis(rows, (j + 1)[..., None], -1)[..., 0]
        eta = np.where(hi > lo, (z - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
        inside = (z >= self.z_below[0]) & (z <= g)
        return i, j, xi, np.clip(eta, 0.0, 1.0), inside


@dataclass
class FittedCellSolution:
    spec: object
    mesh: StripMesh
    w: np.ndarray  # (nt, nr, 2) rescaled unknowns
    pressure: np.ndarray
    bl_constant: np.ndarray
    info: SolveInfo
    residuals: dict = field(default_factory=dict)
    interface_level: float = 0.0

    @property
    def b_inv_t(self):
        return np.linalg.inv(self.spec.coeffs.b_matrix).T

    def _v(self, w):
        return np.stack([self.mesh.scale * w[..., 0], w[..., 1]], axis=-1)

    def beta_at(self, y1, yd):
        """``beta`` at cell points; zero inside the roughness, deepest level below the domain."""
        m = self.mesh
        y1, yd = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(yd, dtype=float))
        if m is None:
            return np.zeros(y1.shape + (2,))
        i, j, xi, eta, inside = m.locate(y1 / m.scale, np.maximum(yd, m.z_below[0]))
        w = self.w
        vals = (
            (1 - xi)[..., None] * (1 - eta)[..., None] * w[i % m.nt, j]
            + xi[..., None] * (1 - eta)[..., None] * w[(i + 1) % m.nt, j]
            + (1 - xi)[..., None] * eta[..., None] * w[i % m.nt, j + 1]
            + xi[..., None] * eta[..., None] * w[(i + 1) % m.nt, j + 1]
        )
        beta = self._v(vals) @ self.b_inv_t.T
        return np.where(inside[..., None], beta, 0.0)

    def level_average(self, j: int) -> np.ndarray:
        """Periodic mean of ``beta`` on a flat node row below the interface."""
        if j > self.mesh.k_s:
            raise IncompatibleError("level averages are defined on the flat rows only")
        return self.b_inv_t @ self._v(self.w[:, j]).mean(axis=0)

    def decay_samples(self) -> np.ndarray:
        """Rows ``(y_d, ||beta - c_bl||)`` on the flat rows below the interface."""
        m = self.mesh
        beta = self._v(self.w[:, : m.k_s]) @ self.b_inv_t.T
        diff = beta - self.bl_constant
        return np.column_stack([m.z_below[:-1], np.sqrt((diff**2).sum(-1).mean(0))])

    def normal_flux(self) -> np.ndarray:
        return self.w[:, : self.mesh.k_s + 1, 1].mean(axis=0)


def solve_fitted_cell(spec, growth: float = 1.1, max_spacing: float = 0.25) -> FittedCellSolution:
    """Solve a 2D cell problem on the boundary-fitted strip."""
    if spec.dim != 2:
        raise IncompatibleError("the fitted cell solver is two-dimensional")
    if spec.wall_trace is not None:
        raise IncompatibleError("seeded wall data needs the staggered solver")
    a1 = float(spec.coeffs.tangential_diagonal()[0])
    lam = np.asarray(spec.jump_vector, dtype=float)
    if lam.shape != (2,):
        raise IncompatibleError("jump vector must have 2 components")
    ys = np.linspace(0.0, 1.0, 4 * spec.resolution.n, endpoint=False)[:, None]
    if float(np.max(spec.profile(ys))) <= 0:
        # wall on the interface: the cell velocity vanishes identically
        info = SolveInfo("none", 0, 0.0, 0)
        return FittedCellSolution(spec, None, np.zeros((0, 0, 2)), np.zeros((0, 0)), np.zeros(2), info)
    mesh = StripMesh(spec.profile, a1, spec.resolution.n, spec.depth, growth, max_spacing)
    nt, nr, ks = mesh.nt, mesh.nr, mesh.k_s
    n = mesh.n_velocity
    i = np.arange(nt)
    fixed = np.zeros(n, dtype=bool)
    value = np.zeros(n)
    top = mesh.node(i, nr - 1)
    fixed[mesh.dof(top, 0)] = fixed[mesh.dof(top, 1)] = True
    # columns where the wall touches the interface: the layer collapses onto the wall
    touch = i[np.abs(mesh.gamma(mesh.t_nodes)) <= 1e-14]
    for j in range(ks, nr):
        fixed[mesh.dof(mesh.node(touch, j), 0)] = fixed[mesh.dof(mesh.node(touch, j), 1)] = True
    # free slip at the bottom cut: no normal velocity
    fixed[mesh.dof(mesh.node(i, 0), 1)] = True

    g = np.linalg.solve(spec.coeffs.b_matrix, lam)
    G = np.array([mesh.scale * g[0], g[1]])
    ones = row_mass(mesh, ks) @ np.ones(nt)
    load = np.zeros(n)
    load[mesh.dof(mesh.node(i, ks), 0)] = -G[0] * ones
    load[mesh.dof(mesh.node(i, ks), 1)] = -G[1] * ones
    u, p, info, div, K = solve_stokes(mesh, fixed, value, load=load)
    wts = pressure_mass(mesh, mesh.quads_in_rows(0, ks))
    p = p - wts @ p / wts.sum()
    w = u.reshape(nt, nr, 2)
    vbar = np.array([mesh.scale * w[:, ks, 0].mean(), w[:, ks, 1].mean()])
    c_bl = np.linalg.inv(spec.coeffs.b_matrix).T @ vbar
    sol = FittedCellSolution(spec, mesh, w, p.reshape(mesh.npt, mesh.npr), c_bl, info)
    sol.residuals = {"divergence": div, "energy": float(-(u @ (K @ u)))}
    return sol
