"""Boundary-layer cell problem on the truncated periodic half-cylinder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..errors import IncompatibleError, GeometryError
from ..geometry import CellCoefficients, RoughnessProfile, decay_rate_bound
from ..linalg import SolveInfo, solve_saddle
from .grid import (
    CellGrid,
    CellResolution,
    assemble_stokes,
    build_cell_grid,
    interface_load,
)

TRUNCATION_TOL = 1e-8


def default_depth(alpha: float, tol: float = TRUNCATION_TOL) -> float:
    """Smallest ``L >= 3`` with ``exp(-alpha L) < tol``; 18.5 ~ -log(1e-8)."""
    return float(max(3, math.ceil(-math.log(tol) / alpha)))


@dataclass(frozen=True)
class CellProblemSpec:
    coeffs: CellCoefficients
    profile: RoughnessProfile | Callable
    jump_vector: np.ndarray
    truncation_depth: float | None = None
    resolution: CellResolution = field(default_factory=CellResolution)
    tol: float = 1e-10
    method: str = "auto"  # "direct", "minres" or "fitted" (2D boundary-fitted elements)
    wall_trace: Callable | None = None  # beta on a flat top wall, for seeded tests

    @property
    def dim(self) -> int:
        return self.coeffs.dim

    @property
    def alpha(self) -> float:
        return decay_rate_bound(self.coeffs)

    @property
    def depth(self) -> float:
        if self.truncation_depth is not None:
            return float(self.truncation_depth)
        return default_depth(self.alpha)

    def with_jump(self, lam) -> "CellProblemSpec":
        return replace(self, jump_vector=np.asarray(lam, dtype=float))


@dataclass(frozen=True)
class CellSolution:
    spec: CellProblemSpec
    grid: CellGrid
    v: list  # staggered components of B^T beta
    pressure: np.ndarray  # NaN in solid cells
    bl_constant: np.ndarray
    decay_samples: np.ndarray  # columns (y_d, fluctuation norm)
    residuals: dict
    info: SolveInfo | None = None
    interface_level: float = 0.0

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def b_inv_t(self) -> np.ndarray:
        return np.linalg.inv(self.spec.coeffs.b_matrix).T

    def beta_centers(self) -> np.ndarray:
        """beta averaged to cell centers, shape ``(d,) + fluid.shape``."""
        vc = self.grid.cell_centered(self.v)
        return np.einsum("ij,j...->i...", self.b_inv_t, vc)

    def level_average(self, k: int) -> np.ndarray:
        """Periodic average of beta on cell level ``k``."""
        return self.beta_centers()[..., k].reshape(self.dim, -1).mean(axis=1)

    def normal_flux(self) -> np.ndarray:
        """``int_{Z'} beta . nu`` on every vertical face level below ``S``."""
        g = self.grid
        vd = self.v[-1][..., : g.k_s + 1]
        return vd.reshape(-1, g.k_s + 1).mean(axis=0)


def column_heights(profile, dim: int, n: int, comp: int | None = None) -> np.ndarray:
    """Roughness height at cell-center columns, or at the face columns of ``comp``."""
    axes = [(np.arange(n) + (0.0 if m == comp else 0.5)) / n for m in range(dim - 1)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, dim - 1)
    shape = (n,) * (dim - 1)
    vals = np.asarray(profile(pts), dtype=float).reshape(shape)
    if np.any(vals < 0):
        raise GeometryError("roughness profile must be nonnegative")
    return vals


def _b_inverse(coeffs):
    return np.linalg.inv(coeffs.b_matrix)


def solve_cell(spec: CellProblemSpec) -> CellSolution:
    if spec.method == "fitted":
        from .fitted import solve_fitted_cell

        return solve_fitted_cell(spec)
    d = spec.dim
    res = spec.resolution
    a_diag = np.append(spec.coeffs.tangential_diagonal(), 1.0)
    lam = np.asarray(spec.jump_vector, dtype=float)
    if lam.shape != (d,):
        raise IncompatibleError(f"jump vector must have {d} components")
    heights = column_heights(spec.profile, d, res.n)
    faces = [column_heights(spec.profile, d, res.n, comp=j) for j in range(d - 1)]
    grid = build_cell_grid(d, res.n, heights, a_diag, spec.depth, res, face_heights=faces)
    g = _b_inverse(spec.coeffs) @ lam

    # columns identical and no seeded data: the discrete solution is
    # translation invariant, so one column carries all of it
    uniform = spec.wall_trace is None and np.ptp(heights) == 0.0
    work = grid
    if uniform:
        one = (slice(0, 1),) * (d - 1)
        work = CellGrid(dim=d, n=1, zf=grid.zf, fluid=grid.fluid[one], a_diag=a_diag,
                        face_heights=[f[one] for f in faces])

    wall = None
    if spec.wall_trace is not None:
        bt = spec.coeffs.b_matrix.T

        def wall(comp, pts):
            return (np.asarray(spec.wall_trace(pts)) @ bt.T)[:, comp]

    K, D, f_wall, g_cont = assemble_stokes(work, wall)
    f = f_wall + interface_load(work, g)
    method = spec.method
    if method == "auto":
        # sparse LU fill grows quickly in 3D; MINRES with AMG scales better
        method = "direct" if work.n_velocity < 20000 else "minres"
    weights = work.cell_volumes()[work.fluid]
    # iterative solves work on the singular system directly; pinning one
    # pressure would create a tiny Schur eigenvalue and stall MINRES
    pin = 0 if method == "direct" else None
    u, p, info = solve_saddle(K, D, f, g_cont, pin=pin, method=method, tol=spec.tol, pressure_weights=weights)

    comps = work.split(u)
    parr = work.pressure_array(p)
    if uniform:
        comps = [np.broadcast_to(c, grid.tshape + c.shape[-1:]).copy() for c in comps]
        parr = np.broadcast_to(parr, grid.fluid.shape).copy()
    parr = _gauge(grid, parr)

    residuals = {
        "momentum": float(np.linalg.norm(K @ u - D.T @ p - f) / max(np.linalg.norm(f), 1e-300)),
        "divergence": float(np.max(np.abs(D @ u + g_cont), initial=0.0)),
    }
    trace = grid.interface_trace(comps)
    vbar = np.array([t.mean() for t in trace])
    c_bl = np.linalg.inv(spec.coeffs.b_matrix).T @ vbar
    sol = CellSolution(
        spec=spec,
        grid=grid,
        v=comps,
        pressure=parr,
        bl_constant=c_bl,
        decay_samples=np.zeros((0, 2)),
        residuals=residuals,
        info=info,
    )
    samples = fluctuation_profile(sol, c_bl)
    sol = replace(sol, decay_samples=samples)
    sol.residuals["jump"] = jump_residual(sol, lam)
    return sol


def _gauge(grid: CellGrid, parr):
    flat = grid.fluid & (grid.zc < 0)
    vol = grid.cell_volumes()
    mean = np.sum(parr[flat] * vol[flat]) / np.sum(vol[flat])
    return parr - mean


def fluctuation_profile(sol: CellSolution, c_bl) -> np.ndarray:
    """Rows ``(y_d, ||beta(., y_d) - c_bl||_{L2(Z')})`` for cell levels below S."""
    g = sol.grid
    beta = sol.beta_centers()[..., : g.k_s]
    diff = beta - np.asarray(c_bl).reshape((-1,) + (1,) * (beta.ndim - 1))
    sq = np.sum(diff**2, axis=0).reshape(-1, g.k_s).mean(axis=0)
    return np.column_stack([g.zc[: g.k_s], np.sqrt(sq)])


def boundary_layer_constant(sol: CellSolution, where: str = "interface") -> np.ndarray:
    """Interface average of beta over S, or the average on the deepest level."""
    if where == "interface":
        return sol.bl_constant.copy()
    if where == "deep":
        return sol.level_average(0)
    raise ValueError("where must be 'interface' or 'deep'")


def _node_level(grid: CellGrid, level: float) -> int:
    k = int(np.argmin(np.abs(grid.zc - level)))
    if abs(grid.zc[k] - level) > 1e-9:
        raise GeometryError(f"level {level} is not a level of tangential nodes")
    return k


def jump_residual(sol: CellSolution, lam, level: float | None = None) -> float:
    """``|| [d beta/d y_d - omega nu] - lambda ||_{L2}`` across a node level.

    One-sided differences of cell-centered values on each side; the pressure
    jump is taken between the cells just above and just below the level.
    """
    g = sol.grid
    lam = np.asarray(lam, dtype=float)
    k = _node_level(g, sol.interface_level if level is None else level)
    if k < 1 or k + 1 >= g.nz:
        raise GeometryError("jump level too close to the grid boundary")
    beta = sol.beta_centers()
    nu = sol.spec.coeffs.normal
    zc = g.zc
    up = (beta[..., k + 1] - beta[..., k]) / (zc[k + 1] - zc[k])
    dn = (beta[..., k] - beta[..., k - 1]) / (zc[k] - zc[k - 1])
    p = np.nan_to_num(sol.pressure)
    w_up, w_dn = p[..., k + 1], p[..., k - 1]
    jump = (up - dn) - (w_up - w_dn)[None] * nu.reshape((-1,) + (1,) * (up.ndim - 1))
    r = jump - lam.reshape((-1,) + (1,) * (up.ndim - 1))
    return float(np.sqrt(np.mean(np.sum(r**2, axis=0))))


def shift_solution(sol: CellSolution, b: float) -> CellSolution:
    """Move the interface to ``y_d = b``.

    Tangential jump ``lambda_t`` is absorbed as ``beta + lambda_t y_d`` on
    ``(b, 0]`` and ``beta + b lambda_t`` below; the normal part of the jump is
    absorbed by lowering omega by ``lambda . nu`` on ``(b, 0]``, which keeps
    the field solenoidal.
    """
    g = sol.grid
    if not (-sol.spec.depth < b < 0):
        raise GeometryError(f"shift level {b} outside (-L, 0)")
    kb = _node_level(g, b)
    b = float(g.zc[kb])
    lam = np.asarray(sol.spec.jump_vector, dtype=float)
    nu = sol.spec.coeffs.normal
    lam_n = float(lam @ nu)
    lam_t = lam - lam_n * nu
    shift_v = sol.spec.coeffs.b_matrix.T @ lam_t  # last entry is nu . lam_t = 0
    comps = []
    for j, c in enumerate(sol.v):
        z = g.vertical_coords(j)
        prof = np.where(z > 0, 0.0, np.where(z > b, z, b))
        add = shift_v[j] * prof
        comps.append(np.where(g.active[j], c + add, c))
    parr = sol.pressure.copy()
    band = (g.zc > b) & (g.zc <= 0)
    parr[..., band] -= lam_n
    parr = _gauge(g, parr)
    shifted = replace(sol, v=comps, pressure=parr, interface_level=b, residuals=dict(sol.residuals))
    c_deep = shifted.level_average(0)
    shifted = replace(shifted, bl_constant=c_deep, decay_samples=fluctuation_profile(shifted, c_deep))
    shifted.residuals["jump"] = jump_residual(shifted, lam, level=b)
    return shifted


# ---------------------------------------------------------------- slip matrix


def _solve_pair(coeffs, profile, tangent_frame, **kw):
    frame = np.atleast_2d(np.asarray(tangent_frame, dtype=float))
    base = CellProblemSpec(coeffs=coeffs, profile=profile, jump_vector=frame[0], **kw)
    return [solve_cell(base.with_jump(t)) for t in frame], frame


def slip_matrix_from_solutions(solutions, frame) -> np.ndarray:
    m = len(solutions)
    out = np.empty((m, m))
    for l in range(m):
        for k in range(m):
            out[l, k] = solutions[l].bl_constant @ frame[k]
    return out


def slip_matrix(coeffs, profile, tangent_frame, **kw) -> np.ndarray:
    """``c_lk = c_bl(lambda^l) . lambda^k`` for an orthonormal tangent frame."""
    return slip_matrix_and_solutions(coeffs, profile, tangent_frame, **kw)[0]


def slip_matrix_and_solutions(coeffs, profile, tangent_frame, **kw):
    frame = np.atleast_2d(np.asarray(tangent_frame, dtype=float))
    nu = coeffs.normal
    if np.max(np.abs(frame @ frame.T - np.eye(len(frame)))) > 1e-10 or np.max(np.abs(frame @ nu)) > 1e-10:
        raise GeometryError("tangent frame must be orthonormal and orthogonal to the normal")
    sols, frame = _solve_pair(coeffs, profile, frame, **kw)
    return slip_matrix_from_solutions(sols, frame), sols


def energy_matrix(solutions) -> np.ndarray:
    """``-(B grad beta^k, B grad beta^l)`` by face-difference quadrature."""
    sols = list(solutions)
    if not sols:
        return np.zeros((0, 0))
    ref = sols[0]
    for s in sols[1:]:
        if not (s.spec.coeffs.same_as(ref.spec.coeffs) and s.grid.fluid.shape == ref.grid.fluid.shape
                and np.array_equal(s.grid.fluid, ref.grid.fluid) and np.allclose(s.grid.zf, ref.grid.zf)):
            raise IncompatibleError("energy_matrix needs solutions of the same cell geometry")
    grads = [_gradient_samples(s) for s in sols]
    m = len(sols)
    out = np.empty((m, m))
    for k in range(m):
        for l in range(m):
            out[k, l] = -sum(np.sum(w * gk * gl) for (w, gk), (_, gl) in zip(grads[k], grads[l]))
    return out


def _gradient_samples(sol: CellSolution):
    """List of ``(weight, difference)`` arrays whose weighted products give the energy.

    Weights include the metric factor ``a_k / a_j``; walls contribute the
    face value over the distance to the wall (half a cell where the wall
    sits between faces).
    """
    g = sol.grid
    d, h, a = g.dim, g.h, g.a_diag
    area_h = h ** (d - 1)
    out = []
    for j in range(d):
        v, act = sol.v[j], g.active[j]
        ext = g.vertical_extent(j)
        for m in range(d - 1):
            w = np.broadcast_to(h ** (d - 2) * ext / h * a[m] / a[j], act.shape)
            nxt, act_n = np.roll(v, -1, axis=m), np.roll(act, -1, axis=m)
            both = act & act_n
            out.append((np.where(both, w, 0.0), nxt - v))
            factor = 1.0 if m == j else 2.0
            for sh in (-1, 1):
                wall = act & ~np.roll(act, sh, axis=m)
                out.append((np.where(wall, factor * w, 0.0), v))
        if j < d - 1:
            wv = np.broadcast_to(area_h / np.diff(g.zc) / a[j], v[..., :-1].shape)
            both = act[..., :-1] & act[..., 1:]
            out.append((np.where(both, wv, 0.0), v[..., 1:] - v[..., :-1]))
            above = np.concatenate([act[..., :-1] & ~act[..., 1:], act[..., -1:]], axis=-1)
            out.append((np.where(above, area_h / g.top_dist[j] / a[j], 0.0), v))
        else:
            wv = np.broadcast_to(area_h / g.dz, v[..., :-1].shape)
            lo, hi = act[..., :-1], act[..., 1:]
            out.append((np.where(lo & hi, wv, 0.0), v[..., 1:] - v[..., :-1]))
            out.append((np.where(lo & ~hi, wv, 0.0), v[..., :-1]))
            out.append((np.where(hi & ~lo, wv, 0.0), v[..., 1:]))
    return out
