"""Charts of the fictitious boundary, roughness profiles and the rough annulus.

A chart maps parameters ``xt`` (shape ``(d-1,)``) to a point of the
fictitious surface in R^d.  The cell problem sees the chart only through the
constant matrices ``B = (Dphi, nu)^{-T}`` and ``A = B^T B`` evaluated at one
base point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateChartError,
    GeometryError,
    InvalidCoefficientsError,
    OutOfTubeError,
    ResolutionError,
)

ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class SurfacePatch:
    chart: Callable[[np.ndarray], np.ndarray]
    chart_jacobian: Callable[[np.ndarray], np.ndarray]
    normal: Callable[[np.ndarray], np.ndarray]
    tube_halfwidth: float
    patch_id: int = 0
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    lower: tuple = ()
    upper: tuple = ()

    @property
    def dim(self) -> int:
        return len(self.normal(np.asarray(self.lower, dtype=float)))

    def frame(self, xt) -> np.ndarray:
        """Columns ``(Dphi, nu)`` at ``xt``."""
        xt = np.atleast_1d(np.asarray(xt, dtype=float))
        return np.column_stack([self.chart_jacobian(xt), self.normal(xt)])

    def contains(self, xt) -> bool:
        xt = np.atleast_1d(np.asarray(xt, dtype=float))
        return bool(np.all(xt >= np.asarray(self.lower)) and np.all(xt <= np.asarray(self.upper)))

    def tangent_frame(self, xt) -> np.ndarray:
        """Orthonormal tangents (rows) by Gram-Schmidt on the chart tangents."""
        jac = self.chart_jacobian(np.atleast_1d(np.asarray(xt, dtype=float)))
        q, r = np.linalg.qr(jac)
        # keep the orientation of the chart tangents
        q = q * np.sign(np.diag(r))
        return q.T


@dataclass(frozen=True)
class CellCoefficients:
    b_matrix: np.ndarray
    a_matrix: np.ndarray
    base_point: tuple = ()

    @property
    def dim(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def normal(self) -> np.ndarray:
        # B e_d = nu because nu is orthogonal to the chart tangents
        return self.b_matrix[:, -1]

    def tangential_diagonal(self) -> np.ndarray:
        """Diagonal of the in-surface block; raises if the block is not diagonal."""
        d = self.dim
        block = self.a_matrix[: d - 1, : d - 1]
        off = block - np.diag(np.diag(block))
        if np.max(np.abs(off), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(block))):
            raise InvalidCoefficientsError(
                "metric block is not diagonal; only orthogonal chart parameterizations "
                "are supported by the staggered cell solver"
            )
        return np.diag(block).copy()

    def same_as(self, other: "CellCoefficients", tol=1e-13) -> bool:
        return (
            self.b_matrix.shape == other.b_matrix.shape
            and np.allclose(self.b_matrix, other.b_matrix, rtol=0, atol=tol)
        )


def coefficients_from_b(b_matrix, base_point=()) -> CellCoefficients:
    b = np.asarray(b_matrix, dtype=float)
    a = b.T @ b
    return CellCoefficients(b_matrix=b, a_matrix=0.5 * (a + a.T), base_point=tuple(base_point))


def metric_matrices(patch: SurfacePatch, base_point) -> CellCoefficients:
    xt = np.atleast_1d(np.asarray(base_point, dtype=float))
    frame = patch.frame(xt)
    if not np.all(np.isfinite(frame)):
        raise DegenerateChartError(f"non-finite chart frame at {xt}")
    sv = np.linalg.svd(frame, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1.0):
        raise DegenerateChartError(f"chart frame singular at {xt} (smallest singular value {sv[-1]:.3e})")
    b = np.linalg.inv(frame).T
    return coefficients_from_b(b, base_point=tuple(xt))


def check_patch(patch: SurfacePatch, samples) -> None:
    """Verify the immersion / unit-normal invariants at the given parameters."""
    for xt in np.atleast_2d(samples):
        jac = patch.chart_jacobian(xt)
        nu = patch.normal(xt)
        if np.linalg.matrix_rank(jac, tol=1e-12) < jac.shape[1]:
            raise DegenerateChartError(f"chart is not an immersion at {xt}")
        if abs(np.linalg.norm(nu) - 1.0) > ORTHO_TOL:
            raise GeometryError(f"normal not unit length at {xt}")
        if np.max(np.abs(jac.T @ nu)) > ORTHO_TOL * max(1.0, np.max(np.abs(jac))):
            raise GeometryError(f"normal not orthogonal to chart tangents at {xt}")


def tube_point(patch: SurfacePatch, xt, t: float) -> np.ndarray:
    if abs(t) >= patch.tube_halfwidth:
        raise OutOfTubeError(f"|t|={abs(t)} outside tube half-width {patch.tube_halfwidth}")
    xt = np.atleast_1d(np.asarray(xt, dtype=float))
    return patch.chart(xt) + t * patch.normal(xt)


def decay_rate_bound(coeffs: CellCoefficients) -> float:
    d = coeffs.dim
    block = coeffs.a_matrix[: d - 1, : d - 1]
    lam = np.linalg.eigvalsh(0.5 * (block + block.T))
    if lam[0] <= 0:
        raise InvalidCoefficientsError("tangential metric block is not positive definite")
    return math.pi * math.sqrt(lam[0])


# ---------------------------------------------------------------- chart families


def plane_patch(scale=(1.0, 1.0), tube_halfwidth=1.0, patch_id=0, lower=(-1.0, -1.0), upper=(1.0, 1.0)):
    sx, sy = (float(s) for s in scale)
    return SurfacePatch(
        chart=lambda xt: np.array([sx * xt[0], sy * xt[1], 0.0]),
        chart_jacobian=lambda xt: np.array([[sx, 0.0], [0.0, sy], [0.0, 0.0]]),
        normal=lambda xt: np.array([0.0, 0.0, 1.0]),
        tube_halfwidth=tube_halfwidth,
        patch_id=patch_id,
        kind="plane",
        params={"scale": [sx, sy]},
        lower=tuple(lower),
        upper=tuple(upper),
    )


def cylinder_patch(radius=1.0, patch_id=0, lower=(0.0, -1.0), upper=(2 * math.pi, 1.0)):
    """Cylinder around the z-axis, parameters (angle, height), normal pointing out."""
    r = float(radius)
    return SurfacePatch(
        chart=lambda xt: np.array([r * math.cos(xt[0]), r * math.sin(xt[0]), xt[1]]),
        chart_jacobian=lambda xt: np.array(
            [[-r * math.sin(xt[0]), 0.0], [r * math.cos(xt[0]), 0.0], [0.0, 1.0]]
        ),
        normal=lambda xt: np.array([math.cos(xt[0]), math.sin(xt[0]), 0.0]),
        tube_halfwidth=0.5 * r,
        patch_id=patch_id,
        kind="cylinder",
        params={"radius": r},
        lower=tuple(lower),
        upper=tuple(upper),
    )


def sphere_patch(radius=1.0, patch_id=0, lower=(0.2, 0.0), upper=(math.pi - 0.2, 2 * math.pi)):
    """Polar/azimuth chart ``(sin a cos b, sin a sin b, cos a)``, outward normal."""
    r = float(radius)

    def chart(xt):
        a, b = xt
        return r * np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])

    def jac(xt):
        a, b = xt
        return r * np.array(
            [
                [math.cos(a) * math.cos(b), -math.sin(a) * math.sin(b)],
                [math.cos(a) * math.sin(b), math.sin(a) * math.cos(b)],
                [-math.sin(a), 0.0],
            ]
        )

    return SurfacePatch(
        chart=chart,
        chart_jacobian=jac,
        normal=lambda xt: chart(xt) / r,
        tube_halfwidth=0.5 * r,
        patch_id=patch_id,
        kind="sphere",
        params={"radius": r},
        lower=tuple(lower),
        upper=tuple(upper),
    )


def circle_patch(radius=1.0, orientation=1.0, patch_id=0, lower=(0.0,), upper=(2 * math.pi,)):
    """2D circle ``radius (cos t, sin t)``; ``orientation=-1`` points the normal inward."""
    r = float(radius)
    s = 1.0 if orientation >= 0 else -1.0
    return SurfacePatch(
        chart=lambda xt: r * np.array([math.cos(xt[0]), math.sin(xt[0])]),
        chart_jacobian=lambda xt: r * np.array([[-math.sin(xt[0])], [math.cos(xt[0])]]),
        normal=lambda xt: s * np.array([math.cos(xt[0]), math.sin(xt[0])]),
        tube_halfwidth=0.5 * r,
        patch_id=patch_id,
        kind="circle",
        params={"radius": r, "orientation": s},
        lower=tuple(lower),
        upper=tuple(upper),
    )


def line_patch(scale=1.0, patch_id=0, lower=(-1.0,), upper=(1.0,)):
    """Flat 2D wall ``(scale*t, 0)`` with normal ``e_2``."""
    sx = float(scale)
    return SurfacePatch(
        chart=lambda xt: np.array([sx * xt[0], 0.0]),
        chart_jacobian=lambda xt: np.array([[sx], [0.0]]),
        normal=lambda xt: np.array([0.0, 1.0]),
        tube_halfwidth=1.0,
        patch_id=patch_id,
        kind="line",
        params={"scale": sx},
        lower=tuple(lower),
        upper=tuple(upper),
    )


CHART_FAMILIES = {
    "plane": plane_patch,
    "cylinder": cylinder_patch,
    "sphere": sphere_patch,
    "circle": circle_patch,
    "line": line_patch,
}


def make_patch(kind: str, **params) -> SurfacePatch:
    try:
        factory = CHART_FAMILIES[kind]
    except KeyError:
        raise GeometryError(f"unknown chart kind {kind!r}; expected one of {sorted(CHART_FAMILIES)}") from None
    return factory(**params)


# ---------------------------------------------------------------- roughness


@dataclass(frozen=True)
class RoughnessProfile:
    """Nonnegative, unit-periodic height ``gamma(xt, y)`` in cell units.

    ``y`` has trailing dimension ``d-1``; ``xt`` is the chart base point and
    is ignored by profiles that do not vary along the surface.
    """

    height: Callable
    bound: float
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, y, xt=None):
        return self.height(np.asarray(y, dtype=float), xt)

    def at(self, xt) -> "RoughnessProfile":
        return RoughnessProfile(
            height=lambda y, _xt=None: self.height(y, xt),
            bound=self.bound,
            kind=self.kind,
            params=dict(self.params, base_point=None if xt is None else list(np.atleast_1d(xt))),
        )

    def minimum(self, dim: int, samples=257, xt=None) -> float:
        grid = _sample_grid(dim, samples)
        return float(np.min(self.height(grid, xt)))

    def maximum(self, dim: int, samples=257, xt=None) -> float:
        grid = _sample_grid(dim, samples)
        return float(np.max(self.height(grid, xt)))


def _sample_grid(dim, samples):
    s = np.linspace(0.0, 1.0, samples if dim == 2 else max(9, int(math.sqrt(samples * 16))), endpoint=False)
    if dim == 2:
        return s[:, None]
    yy = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1)
    return yy.reshape(-1, 2)


def check_profile(profile: RoughnessProfile, dim: int, samples=64, tol=1e-12) -> None:
    rng = np.random.default_rng(0)
    y = rng.random((samples, dim - 1))
    g = profile(y)
    if np.any(g < -tol) or np.any(g > profile.bound + tol):
        raise GeometryError("roughness profile leaves [0, M]")
    for k in range(dim - 1):
        shift = np.zeros(dim - 1)
        shift[k] = 1.0
        if np.max(np.abs(profile(y + shift) - g)) > tol * max(1.0, profile.bound) * 10:
            raise GeometryError("roughness profile is not unit periodic")


def constant_profile(d0: float) -> RoughnessProfile:
    d0 = float(d0)
    if d0 < 0:
        raise GeometryError("roughness height must be nonnegative")
    return RoughnessProfile(
        height=lambda y, xt=None: np.full(np.shape(y)[:-1], d0),
        bound=d0,
        kind="constant",
        params={"offset": d0},
    )


def cosine_profile(amplitude: float, offset: float = 0.0, wavevector=(1,)) -> RoughnessProfile:
    """``offset + amplitude * (1 + cos 2 pi k.y)``; riblets for ``k = (1,)`` or ``(1, 0)``."""
    a, c = float(amplitude), float(offset)
    k = np.asarray(wavevector, dtype=float)
    if a < 0 or c < 0:
        raise GeometryError("cosine profile needs nonnegative amplitude and offset")

    def height(y, xt=None):
        kk = k[: y.shape[-1]] if y.shape[-1] <= k.size else np.pad(k, (0, y.shape[-1] - k.size))
        return c + a * (1.0 + np.cos(2 * math.pi * (y @ kk)))

    return RoughnessProfile(
        height=height,
        bound=c + 2 * a,
        kind="cosine",
        params={"amplitude": a, "offset": c, "wavevector": list(k)},
    )


def two_scale_profile(amplitude: float, offset: float = 0.0, modulation: float = 0.5) -> RoughnessProfile:
    """Riblet whose amplitude varies slowly with the first chart parameter."""
    a, c, m = float(amplitude), float(offset), float(modulation)

    def height(y, xt=None):
        slow = 1.0 if xt is None else (1.0 + m * math.cos(float(np.atleast_1d(xt)[0]))) / (1.0 + abs(m))
        return c + a * slow * (1.0 + np.cos(2 * math.pi * y[..., 0]))

    return RoughnessProfile(
        height=height,
        bound=c + 2 * a,
        kind="two-scale",
        params={"amplitude": a, "offset": c, "modulation": m},
    )


def fourier_profile(offset: float, coefficients) -> RoughnessProfile:
    """``offset + sum a_k cos(2 pi k.y + phi_k)`` with rows ``(a, phi, k_1[, k_2])``.

    The offset must dominate the summed amplitudes so the height stays
    nonnegative.
    """
    rows = np.atleast_2d(np.asarray(coefficients, dtype=float))
    c = float(offset)
    total = float(np.sum(np.abs(rows[:, 0])))
    if total > c + 1e-15:
        raise GeometryError("fourier profile would become negative")

    def height(y, xt=None):
        out = np.full(y.shape[:-1], c)
        for row in rows:
            kk = row[2 : 2 + y.shape[-1]]
            out = out + row[0] * np.cos(2 * math.pi * (y @ kk) + row[1])
        return out

    return RoughnessProfile(
        height=height,
        bound=c + total,
        kind="fourier",
        params={"offset": c, "coefficients": rows.tolist()},
    )


PROFILE_KINDS = ("constant", "cosine", "two-scale", "fourier")


def make_profile(kind: str, amplitude: float = 0.0, offset: float = 0.0, bound_M=None, **extra) -> RoughnessProfile:
    if kind in ("multi-valued", "overhang"):
        raise GeometryError("multi-valued roughness profiles are not supported; use a single-valued graph")
    if kind == "constant":
        prof = constant_profile(offset if offset else amplitude)
    elif kind == "cosine":
        prof = cosine_profile(amplitude, offset, extra.get("wavevector", (1,)))
    elif kind == "two-scale":
        prof = two_scale_profile(amplitude, offset, extra.get("modulation", 0.5))
    elif kind == "fourier":
        prof = fourier_profile(offset, extra["coefficients"])
    else:
        raise GeometryError(f"unknown roughness kind {kind!r}; expected one of {PROFILE_KINDS}")
    if bound_M is not None:
        if prof.bound > float(bound_M) + 1e-12:
            raise GeometryError(f"profile maximum {prof.bound} exceeds declared bound M={bound_M}")
        prof = RoughnessProfile(prof.height, float(bound_M), prof.kind, prof.params)
    return prof


# ---------------------------------------------------------------- rough annulus


@dataclass(frozen=True)
class MacroResolution:
    """Mesh density for the annulus; element counts refer to macro elements.

    Each macro element carries a 3x3 velocity node patch, so the node
    spacing is half the element size.
    """

    elements_per_period: int = 8
    layer_elements: int = 6
    wall_spacing: float = 1.0 / 16  # first radial element height, in units of eps
    growth: float = 1.1
    max_spacing: float = 1.0 / 16
    sector_elements: int = 16  # angular elements when eps == 0


@dataclass(frozen=True)
class RoughAnnulus:
    inner_radius: float
    outer_radius: float
    eps: float  # effective roughness period in chart units (angle)
    eps_requested: float
    n_periods: int
    sector_periods: int
    profile: RoughnessProfile | None
    theta: np.ndarray  # node angles on [0, sector_angle), periodic
    omega_radii: np.ndarray  # node radii of the smooth part, inner -> outer
    layer_rho: np.ndarray  # node parameters in [0, 1] across the rough layer
    sector_angle: float = 2 * math.pi

    @property
    def sector_fraction(self) -> float:
        """Fraction of the full annulus covered by the sector."""
        return self.sector_angle / (2 * math.pi)

    @property
    def has_layer(self) -> bool:
        return self.eps > 0 and self.layer_rho.size > 1

    def wall_radius(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.has_layer:
            return np.full(theta.shape, self.inner_radius)
        s = (theta / self.eps)[..., None]
        return self.inner_radius - self.eps * self.profile(s, xt=None)

    def node_radii(self, rough: bool) -> np.ndarray:
        """Radii on the structured node grid, shape ``(n_theta, n_r)``."""
        nt = self.theta.size
        omega = np.broadcast_to(self.omega_radii, (nt, self.omega_radii.size))
        if not (rough and self.has_layer):
            return np.array(omega)
        rw = self.wall_radius(self.theta)[:, None]
        layer = rw + (self.inner_radius - rw) * self.layer_rho[None, :]
        return np.concatenate([layer[:, :-1], omega], axis=1)

    def fictitious_row(self, rough: bool) -> int:
        """Radial node index of the curve r = inner_radius."""
        return self.layer_rho.size - 1 if (rough and self.has_layer) else 0


def _graded_radii(r0, r1, h0, growth, hmax):
    """Even number of node intervals, graded from ``h0`` at r0 up to ``hmax``."""
    sizes = []
    total, h = 0.0, h0
    length = r1 - r0
    while total < length - 1e-14:
        sizes.append(h)
        total += h
        h = min(h * growth, hmax)
    sizes = np.array(sizes)
    if sizes.size % 2:
        sizes = np.append(sizes, sizes[-1])
    sizes *= length / sizes.sum()
    # merge consecutive pairs into macro elements with a midpoint node
    return r0 + np.concatenate([[0.0], np.cumsum(sizes)])


def build_rough_annulus(
    inner_radius: float,
    outer_radius: float,
    eps: float,
    profile: RoughnessProfile | None,
    resolution: MacroResolution | None = None,
    sector_periods: int | None = 1,
) -> RoughAnnulus:
    """Boundary-fitted node layout for the annulus with a rough inner wall.

    The roughness period must tile the circle, so ``eps`` is rounded to
    ``2 pi / N`` with ``N = round(2 pi / eps)`` periods; ``RoughAnnulus.eps``
    holds the rounded value.  Only ``sector_periods`` consecutive periods are
    meshed (``None`` meshes the full circle); callers must supply data with
    the same rotational symmetry.
    """
    res = resolution or MacroResolution()
    r_in, r_out = float(inner_radius), float(outer_radius)
    if not 0 < r_in < r_out:
        raise GeometryError("need 0 < inner_radius < outer_radius")
    if eps < 0:
        raise GeometryError("eps must be nonnegative")
    if eps > 0 and profile is None:
        raise GeometryError("rough annulus needs a roughness profile")
    if eps > 0:
        n = max(1, int(round(2 * math.pi / eps)))
        eps_eff = 2 * math.pi / n
        if eps_eff * profile.bound >= r_in:
            raise GeometryError("roughness depth reaches the annulus center (self-intersecting wall)")
        if 2 * res.elements_per_period < 8:
            raise ResolutionError(
                f"{2 * res.elements_per_period} node intervals per roughness period; at least 8 required"
            )
        periods = n if sector_periods is None else int(sector_periods)
        if n % periods:
            raise GeometryError(f"sector of {periods} periods does not tile {n} periods")
        n_theta = 2 * res.elements_per_period * periods
        sector = 2 * math.pi * periods / n
        h0 = res.wall_spacing * eps_eff * r_in
        layer_rho = np.linspace(0.0, 1.0, 2 * res.layer_elements + 1) if profile.bound > 0 else np.zeros(1)
    else:
        n, eps_eff, periods = 0, 0.0, 1
        n_theta = 2 * res.sector_elements
        sector = 2 * math.pi if sector_periods is None else 2 * math.pi / max(int(sector_periods), 1)
        h0 = res.max_spacing
        layer_rho = np.zeros(1)
    theta = np.arange(n_theta) * (sector / n_theta)
    radii = _graded_radii(r_in, r_out, min(h0, res.max_spacing), res.growth, res.max_spacing)
    ann = RoughAnnulus(
        inner_radius=r_in,
        outer_radius=r_out,
        eps=eps_eff,
        eps_requested=float(eps),
        n_periods=n,
        sector_periods=periods,
        profile=profile,
        theta=theta,
        omega_radii=radii,
        layer_rho=layer_rho,
        sector_angle=sector,
    )
    if ann.has_layer:
        rw = ann.wall_radius(np.linspace(0, sector, 4 * n_theta, endpoint=False))
        if np.any(rw <= 0) or np.any(rw > r_in + 1e-15):
            raise GeometryError("rough wall must lie inside the fictitious circle")
    return ann

