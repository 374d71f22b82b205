"""Slip-coefficient field along the fictitious boundary.

Samples sit at parameters ``s`` of a curve on Gamma.  Every sample solves
the cell problem on each chart covering it and blends the results with
normalized polynomial cutoffs.  Blending is done on the frame-free tensor
``sum c_lk lambda^l (x) lambda^k``, so charts with different tangent frames
can overlap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .cell import CellResolution, slip_matrix
from .cell.solver import column_heights
from .errors import GeometryError, RoughWallError, SlipFieldError
from .geometry import SurfacePatch, metric_matrices


@dataclass(frozen=True)
class CoverPatch:
    """A chart together with the ``s``-interval it covers along the curve."""

    patch: SurfacePatch
    s_range: tuple
    to_chart: Callable  # s -> chart parameters
    ramp: float = 0.0  # width of the polynomial cutoff ramp at each end


@dataclass(frozen=True)
class SlipSample:
    s: float
    surface_point: np.ndarray
    tangent_frame: np.ndarray  # rows are the tangents
    normal: np.ndarray
    matrix: np.ndarray
    patch_id: int
    weights: dict = field(default_factory=dict)  # patch_id -> cutoff value

    @property
    def tensor(self) -> np.ndarray:
        """Frame-free slip tensor in physical coordinates."""
        return self.tangent_frame.T @ self.matrix @ self.tangent_frame


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def raw_cutoff(cover: CoverPatch, s, period=None):
    """Polynomial bump: 1 inside the range, smooth ramp of width ``ramp`` at each end."""
    lo, hi = cover.s_range
    s = np.asarray(s, dtype=float)
    if period is not None:
        s = lo + np.mod(s - lo, period)
    if cover.ramp <= 0:
        return ((s >= lo) & (s <= hi)).astype(float)
    up = _smoothstep((s - lo) / cover.ramp)
    down = _smoothstep((hi - s) / cover.ramp)
    inside = (s >= lo) & (s <= hi)
    return np.where(inside, np.minimum(up, down), 0.0)


def cutoff_weights(covers, s, period=None) -> np.ndarray:
    """Normalized cutoffs, shape ``(len(covers),) + shape(s)``; they sum to one."""
    raw = np.stack([raw_cutoff(c, s, period) for c in covers])
    total = raw.sum(axis=0)
    if np.any(total <= 0):
        bad = np.atleast_1d(np.asarray(s))[np.atleast_1d(total <= 0)]
        raise GeometryError(f"curve parameters {bad[:5]} are not covered by any chart")
    return raw / total


def _local_s(cover, s, period):
    lo = cover.s_range[0]
    return lo + ((s - lo) % period) if period is not None else s


class _SolveCache:
    """Cell solves keyed by the discrete problem.

    The cell system sees the chart only through ``A`` and the loads
    ``B^-1 lambda``, and ``c_lk`` is the interface mean paired with those
    loads, so charts that differ by a rotation share one solve.
    """

    def __init__(self, resolution, cell_kw):
        self.resolution = resolution
        self.cell_kw = cell_kw
        self.store = {}
        self.solves = 0

    def key(self, coeffs, profile, frame):
        n = self.resolution.n
        d = coeffs.dim
        hts = column_heights(profile, d, n)
        loads = np.linalg.solve(coeffs.b_matrix, np.asarray(frame, dtype=float).T)
        return (coeffs.a_matrix.round(12).tobytes(), hts.round(14).tobytes(), (loads.round(12) + 0.0).tobytes())

    def slip(self, coeffs, profile, frame):
        k = self.key(coeffs, profile, frame)
        if k not in self.store:
            self.store[k] = slip_matrix(coeffs, profile, frame, resolution=self.resolution, **self.cell_kw)
            self.solves += 1
        return self.store[k]


def _rotation(angle, dim):
    if dim == 2:
        # a one-dimensional tangent space only admits the reflections +-1
        return np.array([[1.0 if math.cos(angle) >= 0 else -1.0]])
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass
class SlipField:
    samples: list
    covers: list
    interpolation_order: int = 1
    period: float | None = None
    profiles: dict = field(default_factory=dict)
    resolution: CellResolution = field(default_factory=CellResolution)
    cell_kw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.interpolation_order not in (1, 3):
            raise SlipFieldError("interpolation order must be 1 or 3")
        self.s = np.array([smp.s for smp in self.samples])
        self._build()

    @property
    def dim(self):
        return self.samples[0].normal.size

    def _build(self):
        m = self.dim - 1
        vals = np.stack([smp.matrix for smp in self.samples]).reshape(len(self.samples), m * m)
        s = self.s
        if self.period is not None:
            s = np.append(s, s[0] + self.period)
            vals = np.vstack([vals, vals[:1]])
        self._xs, self._vals = s, vals
        if self.interpolation_order == 3:
            bc = "periodic" if self.period is not None else "not-a-knot"
            if len(s) < 4:
                raise SlipFieldError("cubic interpolation needs at least 3 samples")
            self._spline = CubicSpline(s, vals, axis=0, bc_type=bc)

    def weights(self, s):
        return cutoff_weights(self.covers, s, self.period)

    def frame_at(self, s: float):
        """Field frame: tangents of the chart with the largest cutoff at ``s``."""
        w = self.weights(np.array([s]))[:, 0]
        cov = self.covers[int(np.argmax(w))]
        xt = np.atleast_1d(cov.to_chart(_local_s(cov, s, self.period)))
        return cov.patch.tangent_frame(xt), cov.patch.normal(xt)

    def query(self, s) -> np.ndarray:
        """Interpolated slip matrix(es) in the field frame at ``s``."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        x = s_arr
        if self.period is not None:
            x = self._xs[0] + np.mod(s_arr - self._xs[0], self.period)
        if self.interpolation_order == 1:
            out = np.stack([np.interp(x, self._xs, self._vals[:, j]) for j in range(self._vals.shape[1])], axis=-1)
        else:
            out = self._spline(x)
        m = self.dim - 1
        return out.reshape(np.shape(s) + (m, m))

    def scalar(self, s):
        """First diagonal entry; in 2D this is the whole slip coefficient."""
        q = self.query(s)
        return q[..., 0, 0]

    # ------------------------------------------------------------ persistence

    def to_dict(self) -> dict:
        return {
            "interpolation_order": self.interpolation_order,
            "period": self.period,
            "samples": [
                {
                    "s": smp.s,
                    "surface_point": smp.surface_point.tolist(),
                    "tangent_frame": smp.tangent_frame.tolist(),
                    "normal": smp.normal.tolist(),
                    "matrix": smp.matrix.tolist(),
                    "patch_id": smp.patch_id,
                }
                for smp in self.samples
            ],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def load_samples(path_or_dict):
    """Samples and settings from a manifest written by ``SlipField.to_json``."""
    data = path_or_dict
    if not isinstance(data, dict):
        with open(path_or_dict) as fh:
            data = json.load(fh)
    samples = [
        SlipSample(
            s=float(x["s"]),
            surface_point=np.array(x["surface_point"]),
            tangent_frame=np.array(x["tangent_frame"]),
            normal=np.array(x["normal"]),
            matrix=np.array(x["matrix"]),
            patch_id=int(x["patch_id"]),
        )
        for x in data["samples"]
    ]
    return samples, data["interpolation_order"], data["period"]


def _sample(s, covers, profiles, cache, period, frame_rotation=0.0):
    w = cutoff_weights(covers, np.array([s]), period)[:, 0]
    main = int(np.argmax(w))
    tensor = None
    for i, (cov, wi) in enumerate(zip(covers, w)):
        if wi <= 0:
            continue
        xt = np.atleast_1d(cov.to_chart(_local_s(cov, s, period)))
        coeffs = metric_matrices(cov.patch, xt)
        frame = cov.patch.tangent_frame(xt)
        rot = _rotation(frame_rotation, coeffs.dim)
        frame = rot @ frame
        prof = profiles.get(cov.patch.patch_id, profiles.get(None))
        prof = prof.at(xt) if hasattr(prof, "at") else prof
        try:
            mat = cache.slip(coeffs, prof, frame)
        except RoughWallError as exc:
            raise SlipFieldError(f"cell solve failed at s={s} (patch {cov.patch.patch_id}): {exc}") from exc
        part = frame.T @ mat @ frame
        tensor = wi * part if tensor is None else tensor + wi * part
        if i == main:
            main_frame, main_xt, main_patch = frame, xt, cov.patch
    matrix = main_frame @ tensor @ main_frame.T
    return SlipSample(
        s=float(s),
        surface_point=main_patch.chart(main_xt),
        tangent_frame=main_frame,
        normal=main_patch.normal(main_xt),
        matrix=0.5 * (matrix + matrix.T),
        patch_id=main_patch.patch_id,
        weights={c.patch.patch_id: float(wi) for c, wi in zip(covers, w)},
    )


def assemble_slip_field(
    covers,
    profiles,
    sample_count: int = 16,
    s_range=None,
    period: float | None = None,
    interpolation_order: int = 1,
    resolution: CellResolution | None = None,
    scan_factor: int = 4,
    frame_rotation: float = 0.0,
    **cell_kw,
) -> SlipField:
    """Solve cell problems at equispaced samples and build the interpolated field.

    ``profiles`` maps ``patch_id`` to a roughness profile (key ``None`` is
    the default); a single profile applies to every chart.
    ``frame_rotation`` turns every chart's tangent frame before the cell
    solves; the physical field must not depend on it.
    """
    covers = list(covers)
    if not isinstance(profiles, dict):
        profiles = {None: profiles}
    res = resolution or CellResolution()
    if s_range is None:
        s_range = (min(c.s_range[0] for c in covers), max(c.s_range[1] for c in covers))
    lo, hi = s_range
    if period is not None:
        s = lo + period * np.arange(sample_count) / sample_count
    else:
        s = np.linspace(lo, hi, sample_count)
    cache = _SolveCache(res, cell_kw)
    samples = [_sample(si, covers, profiles, cache, period, frame_rotation) for si in s]
    fld = SlipField(samples, covers, interpolation_order, period, profiles, res, dict(cell_kw))
    fld.solve_count = cache.solves
    fld._cache = cache
    margin = negdef_scan(fld, scan_factor * sample_count)
    if margin < -1e-12 * max(1.0, max(np.abs(smp.matrix).max() for smp in samples)):
        raise SlipFieldError(f"interpolated slip matrix has a positive eigenvalue (margin {margin:.3e}); reduce sample spacing")
    return fld


def negdef_scan(fld: SlipField, query_count: int = 1024) -> float:
    """``min_s (-lambda_max(C(s)))`` over equispaced queries; positive means negative definite."""
    s0 = fld.s[0]
    if fld.period is not None:
        q = s0 + fld.period * np.arange(query_count) / query_count
    else:
        q = np.linspace(fld.s[0], fld.s[-1], query_count)
    mats = fld.query(q)
    scale = max(1e-300, float(np.max(np.abs(mats))))
    asym = np.max(np.abs(mats - np.swapaxes(mats, -1, -2)))
    if asym > 1e-8 * scale:
        raise SlipFieldError(f"slip field is not symmetric (max asymmetry {asym:.3e})")
    eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
    return float(np.min(-eig[..., -1]))


def rotate_frame_check(fld: SlipField, angles) -> float:
    """Max relative discrepancy of the physical slip action under frame rotation.

    Each sample is re-solved with its tangent frames rotated by the given
    angle; ``sum_lk c_lk (g . lambda^k) lambda^l`` is compared for ``g`` equal
    to each original tangent.
    """
    angles = np.broadcast_to(np.asarray(angles, dtype=float), fld.s.shape)
    cache = getattr(fld, "_cache", None) or _SolveCache(fld.resolution, fld.cell_kw)
    worst = 0.0
    for smp, ang in zip(fld.samples, angles):
        if ang == 0.0:
            continue
        rot = _sample(smp.s, fld.covers, fld.profiles, cache, fld.period, frame_rotation=float(ang))
        for g in smp.tangent_frame:
            a = _action(smp, g)
            b = _action(rot, g)
            scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
            worst = max(worst, float(np.linalg.norm(a - b) / scale))
    return worst


def _action(smp: SlipSample, g) -> np.ndarray:
    lam = smp.tangent_frame
    coef = lam @ g  # g . lambda^k
    return lam.T @ (smp.matrix @ coef)
