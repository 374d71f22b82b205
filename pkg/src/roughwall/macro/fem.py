"""Boundary-fitted annulus mesh with polar velocity components."""

from __future__ import annotations

import numpy as np

from ..fem import MappedMesh, assemble, evaluate, pressure_mass, row_mass
from ..geometry import RoughAnnulus

__all__ = ["AnnulusMesh", "assemble", "evaluate", "pressure_mass", "boundary_mass"]


class AnnulusMesh(MappedMesh):
    """Node ``(i, j)`` sits at angle ``theta[i]`` on radial row ``j``.

    Unknowns are ``(u_r, u_theta)``; rows below ``gamma_row`` fill the
    roughness layer, the others the smooth annulus.
    """

    def __init__(self, annulus: RoughAnnulus, rough: bool):
        self.annulus = annulus
        self.rough = bool(rough and annulus.has_layer)
        self.radii = annulus.node_radii(self.rough)
        super().__init__(annulus.theta, annulus.sector_angle, self.radii.shape[1])
        self.theta = self.t_nodes
        self.sector = self.period
        self.gamma_row = annulus.fictitious_row(self.rough)
        self._layer_rho = annulus.layer_rho if self.rough else None
        self.build()
        self.q_theta = self.q_t
        self.omega_quads = self.quad_j >= self.gamma_row

    def basis_angle(self, t):
        return np.asarray(t, dtype=float)

    def polar_basis(self):
        return self.node_basis()

    def omega_radii(self):
        return self.radii[:, self.gamma_row :]

    def same_omega(self, other: "AnnulusMesh") -> bool:
        a, b = self.omega_radii(), other.omega_radii()
        return a.shape == b.shape and np.allclose(a, b, atol=1e-14) and np.allclose(self.theta, other.theta, atol=1e-14)

    def _row_radius(self, j, th):
        j, th = np.broadcast_arrays(np.asarray(j), np.asarray(th, dtype=float))
        r = np.empty(th.shape)
        dr = np.zeros(th.shape)
        if self._layer_rho is None:
            r[...] = self.radii[0, j]
            return r, dr
        ann = self.annulus
        layer = j < self.gamma_row
        r[~layer] = self.radii[0, j[~layer]]
        if np.any(layer):
            t = th[layer]
            rho = self._layer_rho[j[layer]]
            rw = ann.wall_radius(t)
            step = 1e-6 * ann.eps
            drw = (ann.wall_radius(t + step) - ann.wall_radius(t - step)) / (2 * step)
            r[layer] = rw + (ann.inner_radius - rw) * rho
            dr[layer] = drw * (1 - rho)
        return r, dr

    def row_curve(self, j, t):
        r, dr = self._row_radius(j, t)
        t = np.broadcast_to(np.asarray(t, dtype=float), r.shape)
        er = np.stack([np.cos(t), np.sin(t)], axis=-1)
        et = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        return r[..., None] * er, dr[..., None] * er + r[..., None] * et


def boundary_mass(mesh: AnnulusMesh, row: int, weight=None):
    return row_mass(mesh, row, weight)
