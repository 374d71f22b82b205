"""Stokes flow between a rough inner wall and a rotating outer wall."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import CompatibilityError, IllPosedBoundaryError, IncompatibleError
from ..geometry import RoughAnnulus
from ..linalg import SolveInfo
from ..fem import solve_stokes
from .fem import AnnulusMesh, boundary_mass

VARIANTS = ("rough", "dirichlet", "navier", "corrector")


@dataclass(frozen=True)
class MacroProblemSpec:
    """One macro solve.

    ``outer_velocity`` gives polar components ``(u_r, u_theta)`` of the data
    on the outer circle as a function of angle; the default is unit rotation.
    ``inner_velocity`` does the same for the fictitious circle and is only
    used by the ``corrector`` variant (the auxiliary smooth problem).
    """

    annulus: RoughAnnulus
    variant: str = "rough"
    outer_velocity: Callable | None = None
    inner_velocity: Callable | None = None
    body_force: Callable | None = None  # x (n, 2) -> f (n, 2), Cartesian

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def eps(self) -> float:
        return self.annulus.eps

    @property
    def rough(self) -> bool:
        return self.variant == "rough"


def unit_rotation(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.zeros_like(theta), np.ones_like(theta)], axis=-1)


@dataclass
class MacroSolution:
    spec: MacroProblemSpec
    mesh: AnnulusMesh
    velocity: np.ndarray  # (nt, nr, 2) polar components at nodes
    pressure: np.ndarray  # (npt, npr) at macro vertices, mean zero
    divergence_residual: float
    info: SolveInfo
    wall_time: float = 0.0
    boundary_dissipation: float = 0.0  # int_Gamma u_t (eps c)^{-1} u_t, navier only
    extras: dict = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return self.spec.variant

    def u_theta(self):
        return self.velocity[..., 1]

    def omega_velocity(self):
        """Nodal velocity restricted to the smooth part."""
        return self.velocity[:, self.mesh.gamma_row :]

    def pressure_on_gamma(self):
        """Pressure trace at the fictitious circle (pressure nodes of even angle index)."""
        return self.pressure[:, self.mesh.gamma_row // 2]


def _check_flux(mesh, outer):
    th = np.linspace(0, mesh.sector, 257)
    ur = outer(th)[:, 0]
    flux = np.trapezoid(ur, th) * mesh.annulus.outer_radius
    if abs(flux) > 1e-12 * max(1.0, np.abs(ur).max()):
        raise CompatibilityError(f"outer boundary data has net flux {flux:.3e}")


def _body_load(mesh, f):
    vals = f(mesh.points.reshape(-1, 2)).reshape(mesh.points.shape)
    er, et = mesh.polar_basis()
    # int f . phi_a e_alpha
    fr = np.einsum("eq,qa,eqk,eak->ea", mesh.weight, mesh.phi, vals, er)
    ft = np.einsum("eq,qa,eqk,eak->ea", mesh.weight, mesh.phi, vals, et)
    out = np.zeros(mesh.n_velocity)
    np.add.at(out, mesh.dof(mesh.local_nodes, 0), fr)
    np.add.at(out, mesh.dof(mesh.local_nodes, 1), ft)
    return out


def solve_macro(spec: MacroProblemSpec, slip=None) -> MacroSolution:
    """Solve the variant's Stokes problem on the annulus sector.

    ``slip`` is required for the ``navier`` variant: a slip field with a
    ``scalar(s)`` method (``s`` is the angle) or a plain callable of the
    angle.  A coefficient of exactly zero everywhere reproduces no-slip.
    """
    t0 = time.perf_counter()
    mesh = AnnulusMesh(spec.annulus, spec.rough)
    outer = spec.outer_velocity or unit_rotation
    _check_flux(mesh, outer)
    n = mesh.n_velocity
    extra = None
    nt, nr = mesh.nt, mesh.nr
    i = np.arange(nt)
    fixed = np.zeros(n, dtype=bool)
    value = np.zeros(n)

    def fix(nodes, comp, vals):
        d = mesh.dof(nodes, comp)
        fixed[d] = True
        value[d] = vals

    ob = outer(mesh.theta)
    fix(mesh.node(i, nr - 1), 0, ob[:, 0])
    fix(mesh.node(i, nr - 1), 1, ob[:, 1])

    g0 = mesh.gamma_row
    dissipation_weight = None
    if spec.variant == "rough":
        fix(mesh.node(i, 0), 0, 0.0)
        fix(mesh.node(i, 0), 1, 0.0)
        if g0 > 0:
            # columns where the roughness touches the fictitious circle collapse onto the wall
            rw = spec.annulus.wall_radius(mesh.theta)
            touch = np.nonzero(np.abs(mesh.annulus.inner_radius - rw) <= 1e-14)[0]
            for j in range(1, g0 + 1):
                fix(mesh.node(touch, j), 0, 0.0)
                fix(mesh.node(touch, j), 1, 0.0)
    elif spec.variant == "dirichlet":
        fix(mesh.node(i, 0), 0, 0.0)
        fix(mesh.node(i, 0), 1, 0.0)
    elif spec.variant == "corrector":
        if spec.inner_velocity is None:
            raise IncompatibleError("corrector variant needs inner_velocity data")
        ib = spec.inner_velocity(mesh.theta)
        fix(mesh.node(i, 0), 0, ib[:, 0])
        fix(mesh.node(i, 0), 1, ib[:, 1])
    else:  # navier
        if slip is None:
            raise IncompatibleError("navier variant needs a slip field")
        coef = slip.scalar if hasattr(slip, "scalar") else slip
        c_nodes = np.asarray(coef(mesh.theta), dtype=float)
        if np.any(c_nodes > 0):
            raise IllPosedBoundaryError("slip coefficient must be negative (or zero for no-slip)")
        fix(mesh.node(i, 0), 0, 0.0)
        if np.all(c_nodes == 0):
            fix(mesh.node(i, 0), 1, 0.0)
        else:
            if np.any(c_nodes == 0):
                raise IllPosedBoundaryError("slip coefficient vanishes on part of the wall only")
            eps = spec.eps

            def dissipation_weight(th):
                return -1.0 / (eps * np.asarray(coef(th), dtype=float))

            M = boundary_mass(mesh, 0, dissipation_weight)
            P = _scatter(mesh.dof(mesh.node(i, 0), 1), n)
            extra = P @ M @ P.T

    f = None if spec.body_force is None else _body_load(mesh, spec.body_force)
    u, p, info, div, _ = solve_stokes(mesh, fixed, value, load=f, extra=extra)
    sol = MacroSolution(
        spec=spec,
        mesh=mesh,
        velocity=u.reshape(nt, nr, 2),
        pressure=p.reshape(mesh.npt, mesh.npr),
        divergence_residual=div,
        info=info,
    )
    if dissipation_weight is not None:
        ut = sol.velocity[:, 0, 1]
        sol.boundary_dissipation = -float(ut @ (boundary_mass(mesh, 0, dissipation_weight) @ ut))
    sol.wall_time = time.perf_counter() - t0
    return sol


def _scatter(rows, n):
    import scipy.sparse as sp

    m = len(rows)
    return sp.csr_matrix((np.ones(m), (rows, np.arange(m))), shape=(n, m))


# ---------------------------------------------------------------- closed forms


def couette_profile(r, inner=1.0, outer=2.0, speed=1.0):
    """Azimuthal velocity between a fixed inner and a rotating outer circle."""
    r = np.asarray(r, dtype=float)
    return speed * (r - inner**2 / r) / (outer - inner**2 / outer)


def navier_couette_profile(r, slip_length, inner=1.0, outer=2.0, speed=1.0):
    """Couette flow with ``u_theta = -slip_length * du_theta/dr`` at the inner circle.

    ``slip_length = eps * c`` with ``c`` the (negative) slip coefficient; the
    derivative along the outward normal of the fluid at the inner circle is
    ``-d/dr``.  Solution ``a r + b / r``.
    """
    s = float(slip_length)
    # a R_i + b/R_i = -s (a - b/R_i^2) ;  a R_o + b/R_o = speed
    m = np.array([[inner + s, 1.0 / inner - s / inner**2], [outer, 1.0 / outer]])
    a, b = np.linalg.solve(m, [0.0, speed])
    r = np.asarray(r, dtype=float)
    return a * r + b / r
