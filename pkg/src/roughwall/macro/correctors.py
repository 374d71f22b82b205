"""First-order boundary-layer correctors for the annulus.

The oscillating part rescales cell solutions into the roughness layer and
weights them with the wall traction of the no-slip solution.  The
non-oscillating part solves a smooth Stokes problem whose tangential wall
data is the slip coefficient times that traction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..cell import CellProblemSpec, CellResolution, solve_cell
from ..errors import IncompatibleError, ResolutionError
from ..geometry import circle_patch, metric_matrices
from .fem import AnnulusMesh
from .norms import MacroField
from .solve import MacroProblemSpec, MacroSolution, solve_macro


@dataclass
class CorrectorBundle:
    mesh: AnnulusMesh  # rough mesh
    oscillating: np.ndarray  # eta^eps, nodal polar (nt, nr, 2)
    non_oscillating: np.ndarray  # bar eta^eps, nodal polar (nt, nr, 2)
    traction: np.ndarray  # chi_l at the angle nodes, (nt, d)
    slip_matrix: np.ndarray
    auxiliary: MacroSolution | None

    def augmented(self, base: MacroSolution) -> MacroField:
        """``u + bar eta + eta`` on the rough mesh; ``base`` is zero in the roughness layer."""
        vals = self.oscillating + self.non_oscillating
        vals = vals.copy()
        vals[:, self.mesh.gamma_row :] += base.velocity
        return MacroField(self.mesh, vals)

    def oscillating_field(self) -> MacroField:
        return MacroField(self.mesh, self.oscillating)


def normal_derivative(r, f):
    """One-sided second-order derivative at ``r[0]`` from three samples (nonuniform spacing)."""
    h1, h2 = r[1] - r[0], r[2] - r[0]
    return -(h1 + h2) / (h1 * h2) * f[0] + h2 / (h1 * (h2 - h1)) * f[1] - h1 / (h2 * (h2 - h1)) * f[2]


def wall_traction(sol: MacroSolution):
    """``d u_theta / d nu`` and ``p`` on the fictitious circle at every angle node.

    The normal points out of the fluid (towards the wall), so ``d/d nu = -d/dr``.
    """
    mesh = sol.mesh
    g = mesh.gamma_row
    if mesh.nr - g < 3:
        raise ResolutionError("need at least three radial nodes to extract the wall traction")
    r = mesh.radii[:, g : g + 3].T
    ut = sol.velocity[:, g : g + 3, 1].T
    dudn = -normal_derivative(r, ut)
    p_even = sol.pressure_on_gamma()
    p = np.empty(mesh.nt)
    p[0::2] = p_even
    p[1::2] = 0.5 * (p_even + np.roll(p_even, -1))
    return dudn, p


def annulus_cell_solutions(annulus, resolution: CellResolution | None = None, method: str = "fitted", **kw):
    """Cell solutions for the tangent and the normal jump at angle 0 of the fictitious circle.

    The boundary-fitted solver is the default: the corrected error is
    sensitive to the slip constant at the 1e-5 level, which the staggered
    grid only reaches at impractical sizes.
    """
    patch = circle_patch(annulus.inner_radius, orientation=-1)
    xt = np.array([0.0])
    coeffs = metric_matrices(patch, xt)
    frame = np.vstack([patch.tangent_frame(xt), patch.normal(xt)])
    res = resolution or CellResolution(n=256)
    sols = [solve_cell(CellProblemSpec(coeffs, annulus.profile, lam, resolution=res, method=method, **kw)) for lam in frame]
    return sols, frame


def _beta_interpolators(sol):
    """Interpolants of the cell fluctuation ``beta - c_bl`` in cell coordinates."""
    if hasattr(sol, "beta_at"):
        z_lo = sol.mesh.z_below[0]

        def fitted_bar(y1, yd):
            out = sol.beta_at(y1, yd) - sol.bl_constant
            out[yd <= z_lo] = 0.0
            return out

        return fitted_bar
    g = sol.grid
    n = g.n
    interps = []
    for comp, (ty, z) in enumerate([(np.arange(n + 1) / n, g.zc), ((np.arange(n + 2) - 0.5) / n, g.zf)]):
        v = sol.v[comp]
        pad = np.concatenate([v, v[:1]]) if comp == 0 else np.concatenate([v[-1:], v, v[:1]])
        interps.append(RegularGridInterpolator((ty, z), pad, bounds_error=False, fill_value=None))
    b_inv_t = sol.b_inv_t
    c = sol.bl_constant
    z_lo = g.zf[0]

    def beta_bar(y1, yd):
        y1 = np.mod(y1, 1.0)
        pts = np.stack([y1, np.clip(yd, z_lo, g.zf[-1])], axis=-1)
        v = np.stack([f(pts) for f in interps])
        beta = np.einsum("ij,j...->...i", b_inv_t, v)
        out = beta - c
        out[yd <= z_lo] = 0.0
        return out

    return beta_bar


def build_correctors(dirichlet: MacroSolution, cell_solutions, frame, auxiliary: bool = True) -> CorrectorBundle:
    """Assemble both correctors for a no-slip smooth-domain solution.

    ``cell_solutions[l]`` solves the cell problem with jump ``frame[l]``
    (Cartesian, at angle 0); the last frame vector is the normal.
    """
    if dirichlet.variant != "dirichlet":
        raise IncompatibleError("correctors are built from the no-slip smooth solution")
    ann = dirichlet.spec.annulus
    if not ann.has_layer:
        raise IncompatibleError("correctors need a rough annulus")
    eps = ann.eps
    rough = AnnulusMesh(ann, True)
    nt, nr = rough.nt, rough.nr
    frame = np.asarray(frame, dtype=float)
    d = frame.shape[0]
    # polar components (r, theta) at angle 0 are the Cartesian (x, y)
    frame_polar = frame

    dudn, p = wall_traction(dirichlet)
    chi = np.zeros((nt, d))
    chi[:, 0] = dudn * frame_polar[0, 1]  # (d u_tau / d nu) . lambda^1
    chi[:, -1] = -p

    cmat = np.array([[s.bl_constant @ frame[k] for k in range(d - 1)] for s in cell_solutions[: d - 1]])
    # c_bl du_tau/dnu = sum_lk c_lk chi_k lambda^l
    wall = np.einsum("lk,ik,lc->ic", cmat, chi[:, : d - 1], frame_polar[: d - 1])

    th = rough.theta
    y1 = (th * ann.inner_radius / eps)[:, None] * np.ones((1, nr))
    yd = (ann.inner_radius - rough.radii) / eps
    osc = np.zeros((nt, nr, 2))
    for sol, lam_idx in zip(cell_solutions, range(d)):
        bb = _beta_interpolators(sol)(y1, yd)
        osc += eps * chi[:, lam_idx, None, None] * bb
    # beta vanishes on the rough wall; impose it exactly instead of the stair-step interpolant
    cvec = np.array([s.bl_constant for s in cell_solutions])
    osc[:, 0] = -eps * chi @ cvec

    non_osc = np.zeros((nt, nr, 2))
    aux = None
    g = rough.gamma_row
    non_osc[:, :g] = eps * wall[:, None, :]
    if auxiliary and np.any(wall != 0):
        angles = np.append(th, th[0] + ann.sector_angle)
        vals = np.vstack([wall, wall[:1]])

        def inner_velocity(t):
            t = th[0] + np.mod(np.asarray(t) - th[0], ann.sector_angle)
            return np.stack([np.interp(t, angles, vals[:, 0]), np.interp(t, angles, vals[:, 1])], axis=-1)

        aux = solve_macro(
            MacroProblemSpec(ann, "corrector", outer_velocity=_zero_velocity, inner_velocity=inner_velocity)
        )
        non_osc[:, g:] = eps * aux.velocity
    return CorrectorBundle(rough, osc, non_osc, chi, cmat, aux)


def _zero_velocity(theta):
    return np.zeros(np.shape(theta) + (2,))
