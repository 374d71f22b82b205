"""Splitting a mean-zero source over star-shaped pieces and solving div u = f.

Fields live at the cells of one uniform grid.  A piece is a polygon whose
cells are those with centers inside it, so overlaps and unions are exact
cell sets and every quadrature below is the plain cell sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from shapely import contains_xy
from shapely.geometry import LineString, Point, Polygon, box

from .errors import CompatibilityError, DecompositionError
from .linalg import solve_saddle

MEAN_TOL = 1e-12


def cbar(q: float) -> float:
    """Power-mean constant in ``|a + b|^q <= cbar(q) (|a|^q + |b|^q)``."""
    return 2.0 ** (q - 1)


@dataclass(frozen=True)
class Grid2D:
    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.h * self.h

    def centers(self):
        x = self.x0 + (np.arange(self.nx) + 0.5) * self.h
        y = self.y0 + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def mask(self, polygon) -> np.ndarray:
        X, Y = self.centers()
        return contains_xy(polygon, X, Y)


@dataclass(frozen=True)
class Piece:
    """Polygon star-shaped with respect to the ball ``B(center, radius)``."""

    polygon: Polygon
    center: tuple
    radius: float

    @property
    def diameter(self) -> float:
        pts = np.asarray(self.polygon.exterior.coords)
        return float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))


def rectangle_piece(x0, y0, x1, y1) -> Piece:
    c = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    return Piece(box(x0, y0, x1, y1), c, 0.5 * min(x1 - x0, y1 - y0))


def is_star_shaped(piece: Piece, boundary_samples: int = 64, ball_samples: int = 8) -> bool:
    """Ray test: segments from points of the ball to the boundary stay inside."""
    poly = piece.polygon
    cx, cy = piece.center
    if not poly.contains(Point(cx, cy).buffer(piece.radius * (1 - 1e-9), quad_segs=8)):
        return False
    ring = poly.exterior
    targets = [ring.interpolate(t, normalized=True) for t in np.linspace(0, 1, boundary_samples, endpoint=False)]
    angles = np.linspace(0, 2 * np.pi, ball_samples, endpoint=False)
    sources = [(cx, cy)] + [(cx + piece.radius * math.cos(a), cy + piece.radius * math.sin(a)) for a in angles]
    fat = poly.buffer(1e-9 * max(piece.diameter, 1e-300))
    return all(fat.covers(LineString([s, (t.x, t.y)])) for s in sources for t in targets)


@dataclass
class StarDecomposition:
    """Pieces on a grid; ``kind`` is ``"star"`` (piece 0 is the macro piece) or ``"chain"``."""

    grid: Grid2D
    pieces: list
    kind: str = "star"
    masks: list = field(init=False)

    def __post_init__(self):
        if self.kind not in ("star", "chain"):
            raise DecompositionError(f"unknown decomposition kind {self.kind!r}")
        self.masks = [self.grid.mask(p.polygon) for p in self.pieces]
        for k, m in enumerate(self.masks):
            if not m.any():
                raise DecompositionError(f"piece {k} contains no grid cell")

    @property
    def union(self) -> np.ndarray:
        return np.logical_or.reduce(self.masks)

    def overlap(self, k: int, l: int) -> np.ndarray:
        return self.masks[k] & self.masks[l]

    def shape_constant(self) -> float:
        """Smallest ``l`` with ``diam/R <= l`` for all pieces and ``|G_k|/|G_k n G_0| <= l`` for micro pieces."""
        ratios = [p.diameter / p.radius for p in self.pieces]
        if self.kind == "star":
            for k in range(1, len(self.pieces)):
                ov = self.overlap(0, k).sum()
                ratios.append(np.inf if ov == 0 else self.masks[k].sum() / ov)
        return float(max(ratios))

    def validate(self, max_shape: float | None = None) -> None:
        for k, p in enumerate(self.pieces):
            if not is_star_shaped(p):
                raise DecompositionError(f"piece {k} is not star-shaped with respect to its ball")
        if self.kind == "star":
            for k in range(1, len(self.masks)):
                if not self.overlap(0, k).any():
                    raise DecompositionError(f"micro piece {k} does not overlap the macro piece")
                for l in range(k + 1, len(self.masks)):
                    if self.overlap(k, l).any():
                        raise DecompositionError(f"micro pieces {k} and {l} intersect")
        else:
            for k in range(len(self.masks) - 1):
                if not self.overlap(k, k + 1).any():
                    raise DecompositionError(f"chain pieces {k} and {k + 1} do not overlap")
        if max_shape is not None and self.shape_constant() > max_shape:
            raise DecompositionError(f"shape constant {self.shape_constant():.3g} exceeds {max_shape}")


@dataclass
class SplitSource:
    pieces: list  # cell arrays, one per piece
    means: np.ndarray  # integral of each piece
    norm_ratios: np.ndarray  # ||f_k||_q / ||f||_q
    local_ratios: np.ndarray  # ||f_k||_q^q / ||f||_{L^q(G_k)}^q
    coefficients: np.ndarray  # the constants a_k


def _norm_q(grid, f, q, mask=None):
    vals = np.abs(f) ** q if mask is None else np.abs(f[mask]) ** q
    return float(np.sum(vals) * grid.area)


def _check_mean(decomp, f):
    f = np.asarray(f, dtype=float)
    if f.shape != decomp.grid.shape:
        raise CompatibilityError("source must be given on the decomposition grid")
    if np.any(f[~decomp.union] != 0):
        raise CompatibilityError("source does not vanish outside the decomposed domain")
    total = f.sum() * decomp.grid.area
    if abs(total) > MEAN_TOL * max(1.0, np.abs(f).sum() * decomp.grid.area):
        raise CompatibilityError(f"source has nonzero mean {total:.3e}")
    return f


def _finish(decomp, f, pieces, coeffs, q):
    a = decomp.grid.area
    fq = _norm_q(decomp.grid, f, q)
    means = np.array([p.sum() * a for p in pieces])
    ratios = np.array([(_norm_q(decomp.grid, p, q) / fq) ** (1 / q) if fq > 0 else 0.0 for p in pieces])
    local = []
    for p, m in zip(pieces, decomp.masks):
        loc = _norm_q(decomp.grid, f, q, m)
        local.append(_norm_q(decomp.grid, p, q) / loc if loc > 0 else 0.0)
    return SplitSource(pieces, means, ratios, np.array(local), np.asarray(coeffs))


def split_source_star(decomp: StarDecomposition, f, q: float = 2.0) -> SplitSource:
    """``f_k = f`` on ``G_k`` outside ``G_0`` and ``f - a_k`` on ``G_k n G_0``; ``f_0`` takes the rest."""
    if decomp.kind != "star":
        raise DecompositionError("star splitting needs a macro piece with micro pieces")
    f = _check_mean(decomp, f)
    pieces, coeffs = [], [0.0]
    for k in range(1, len(decomp.masks)):
        ov = decomp.overlap(0, k)
        if not ov.any():
            raise DecompositionError(f"micro piece {k} does not overlap the macro piece")
        ak = f[decomp.masks[k]].sum() / ov.sum()  # integral over G_k / |overlap|
        fk = np.where(decomp.masks[k], f, 0.0)
        fk[ov] -= ak
        pieces.append(fk)
        coeffs.append(ak)
    f0 = f - sum(pieces) if pieces else f.copy()
    return _finish(decomp, f, [f0] + pieces, coeffs, q)


def split_source_chain(decomp: StarDecomposition, f, q: float = 2.0) -> SplitSource:
    """Recursive splitting along a chain where each piece overlaps the next."""
    if decomp.kind != "chain":
        raise DecompositionError("chain splitting needs a chain decomposition")
    f = _check_mean(decomp, f)
    masks = decomp.masks
    n = len(masks)
    earlier = np.zeros(decomp.grid.shape, dtype=bool)
    incoming, a_prev = None, 0.0
    pieces, coeffs = [], []
    for j in range(n):
        fj = np.zeros(decomp.grid.shape)
        own = masks[j] & ~earlier
        fj[own] = f[own]
        if incoming is not None:
            fj[incoming] = a_prev
        outgoing = None
        if j + 1 < n:
            outgoing = masks[j] & masks[j + 1] & ~earlier
            if not outgoing.any():
                raise DecompositionError(f"chain pieces {j} and {j + 1} share no new cells")
            seen = earlier | masks[j]
            a_j = f[seen].sum() / outgoing.sum()
            fj[outgoing] -= a_j
            coeffs.append(a_j)
            a_prev = a_j
        pieces.append(fj)
        earlier = earlier | masks[j]
        incoming = outgoing
    return _finish(decomp, f, pieces, coeffs, q)


# ---------------------------------------------------------------- divergence solve


@dataclass
class _Faces:
    """Free MAC faces of a cell mask: x-faces ``(nx+1, ny)``, y-faces ``(nx, ny+1)``."""

    mask: np.ndarray
    free_x: np.ndarray
    free_y: np.ndarray
    idx_x: np.ndarray
    idx_y: np.ndarray

    @property
    def n(self):
        return int(self.free_x.sum() + self.free_y.sum())


def _faces(mask):
    nx, ny = mask.shape
    pad = np.zeros((nx + 2, ny), dtype=bool)
    pad[1:-1] = mask
    free_x = pad[:-1] & pad[1:]
    pad = np.zeros((nx, ny + 2), dtype=bool)
    pad[:, 1:-1] = mask
    free_y = pad[:, :-1] & pad[:, 1:]
    idx_x = np.full(free_x.shape, -1)
    idx_x[free_x] = np.arange(free_x.sum())
    idx_y = np.full(free_y.shape, -1)
    idx_y[free_y] = free_x.sum() + np.arange(free_y.sum())
    return _Faces(mask, free_x, free_y, idx_x, idx_y)


def _laplacian(faces: _Faces):
    """Dirichlet energy ``sum |grad u|^2`` of face values that vanish on the walls.

    Normal neighbours missing from the mask sit a full spacing away, side
    walls half a spacing away.
    """
    n = faces.n
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for free, idx, normal_axis in ((faces.free_x, faces.idx_x, 0), (faces.free_y, faces.idx_y, 1)):
        for axis in (0, 1):
            wall_w = 1.0 if axis == normal_axis else 2.0
            nb_free = np.zeros_like(free)
            nb_idx = np.full_like(idx, -1)
            sl_a = [slice(None)] * 2
            sl_b = [slice(None)] * 2
            sl_a[axis], sl_b[axis] = slice(0, -1), slice(1, None)
            nb_free[tuple(sl_a)] = free[tuple(sl_b)]
            nb_idx[tuple(sl_a)] = idx[tuple(sl_b)]
            both = free & nb_free
            a, b = idx[both], nb_idx[both]
            rows += [a, b, a, b]
            cols += [a, b, b, a]
            vals += [np.ones(a.size), np.ones(a.size), -np.ones(a.size), -np.ones(a.size)]
            # one-sided: a free face next to a wall in +axis or -axis direction
            up = free & ~nb_free
            np.add.at(diag, idx[up], wall_w)
            prev_free = np.zeros_like(free)
            prev_free[tuple(sl_b)] = free[tuple(sl_a)]
            down = free & ~prev_free
            np.add.at(diag, idx[down], wall_w)
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return (K + sp.diags(diag)).tocsr()


def _divergence(faces: _Faces, h: float):
    """Cell integrals of div u: rows are the mask cells in C order."""
    mask = faces.mask
    cells = np.full(mask.shape, -1)
    cells[mask] = np.arange(mask.sum())
    rows, cols, vals = [], [], []
    for free, idx, axis in ((faces.free_x, faces.idx_x, 0), (faces.free_y, faces.idx_y, 1)):
        sl_lo = [slice(None)] * 2
        sl_hi = [slice(None)] * 2
        sl_lo[axis], sl_hi[axis] = slice(0, -1), slice(1, None)
        # face i is the low face of cell i and the high face of cell i-1
        lo_free, lo_idx = free[tuple(sl_lo)], idx[tuple(sl_lo)]
        hi_free, hi_idx = free[tuple(sl_hi)], idx[tuple(sl_hi)]
        sel = mask & lo_free
        rows.append(cells[sel])
        cols.append(lo_idx[sel])
        vals.append(np.full(sel.sum(), -h))
        sel = mask & hi_free
        rows.append(cells[sel])
        cols.append(hi_idx[sel])
        vals.append(np.full(sel.sum(), h))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(int(mask.sum()), faces.n)
    )


@dataclass
class DivergenceSolution:
    grid: Grid2D
    mask: np.ndarray
    ux: np.ndarray  # (nx+1, ny) face values
    uy: np.ndarray  # (nx, ny+1)
    ratio: float  # ||grad u||_2 / ||f||_2
    grad_norm: float
    source_norm: float
    residual: float  # max cell |div u - f|


def _scatter(faces, u, grid):
    ux = np.zeros((grid.nx + 1, grid.ny))
    uy = np.zeros((grid.nx, grid.ny + 1))
    ux[faces.free_x] = u[faces.idx_x[faces.free_x]]
    uy[faces.free_y] = u[faces.idx_y[faces.free_y]]
    return ux, uy


def _gather(faces, ux, uy):
    u = np.zeros(faces.n)
    u[faces.idx_x[faces.free_x]] = ux[faces.free_x]
    u[faces.idx_y[faces.free_y]] = uy[faces.free_y]
    return u


def divergence_solve(grid: Grid2D, mask, f) -> DivergenceSolution:
    """Minimal-energy ``u`` with ``div u = f`` in the mask and ``u = 0`` on its boundary.

    The Stokes system ``-lap u + grad p = 0``, ``div u = f`` gives exactly
    the minimizer of ``||grad u||`` under the constraint.  ``f`` must have
    zero mean over the mask, which must be connected.
    """
    mask = np.asarray(mask, dtype=bool)
    f = np.asarray(f, dtype=float)
    if np.any(f[~mask] != 0):
        raise CompatibilityError("source does not vanish outside the piece")
    total = f[mask].sum() * grid.area
    if abs(total) > MEAN_TOL * max(1.0, np.abs(f).sum() * grid.area):
        raise CompatibilityError(f"source has nonzero mean {total:.3e} on the piece")
    faces = _faces(mask)
    K = _laplacian(faces)
    D = _divergence(faces, grid.h)
    rhs = f[mask] * grid.area
    u, _, _ = solve_saddle(K, D, np.zeros(faces.n), -rhs, pin=0, method="direct")
    ux, uy = _scatter(faces, u, grid)
    energy = float(u @ (K @ u))
    fn = math.sqrt(_norm_q(grid, f, 2))
    gn = math.sqrt(max(energy, 0.0))
    res = float(np.max(np.abs(D @ u - rhs), initial=0.0)) / grid.area
    return DivergenceSolution(grid, mask, ux, uy, gn / fn if fn > 0 else 0.0, gn, fn, res)


def field_grad_norm(grid: Grid2D, mask, ux, uy) -> tuple[float, float]:
    """``||grad u||_2`` on the mask and the max cell value of ``div u`` for face fields vanishing on its walls."""
    faces = _faces(np.asarray(mask, dtype=bool))
    u = _gather(faces, ux, uy)
    # faces that are not free must carry zero
    leak = max(np.abs(ux[~faces.free_x]).max(initial=0.0), np.abs(uy[~faces.free_y]).max(initial=0.0))
    if leak > 0:
        raise CompatibilityError("field does not vanish on the walls of the mask")
    K = _laplacian(faces)
    div = (_divergence(faces, grid.h) @ u) / grid.area
    return math.sqrt(max(float(u @ (K @ u)), 0.0)), div


# ---------------------------------------------------------------- the eps study


def comb_decomposition(eps: float, h: float, overlap: float = 0.5, height: float = 1.0, gap: float = 1.0):
    """Unit macro square with ``m ~ 1/(2 eps)`` teeth of width ``eps`` on its top side.

    Tooth ``k`` is ``[x_k, x_k + eps] x [1 - overlap eps, 1 + height eps]``;
    neighbouring teeth are ``gap eps`` apart, so micro pieces are disjoint.
    """
    m = int(math.floor((1.0 + 1e-12) / ((1.0 + gap) * eps)))
    if m < 1:
        raise DecompositionError("eps too large for a single tooth")
    pitch = 1.0 / m
    top = 1.0 + height * eps
    n = int(round(1.0 / h))
    ny = int(math.ceil(top / h - 1e-9))
    grid = Grid2D(0.0, 0.0, 1.0 / n, n, ny)
    pieces = [rectangle_piece(0.0, 0.0, 1.0, 1.0)]
    for k in range(m):
        x0 = k * pitch + 0.5 * (pitch - eps)
        pieces.append(rectangle_piece(x0, 1.0 - overlap * eps, x0 + eps, top))
    return StarDecomposition(grid, pieces, "star")


def random_source(decomp: StarDecomposition, rng) -> np.ndarray:
    f = np.zeros(decomp.grid.shape)
    u = decomp.union
    f[u] = rng.standard_normal(int(u.sum()))
    f[u] -= f[u].mean()
    return f


def composite_bound(c0: float, l: float, q: float = 2.0) -> float:
    """Envelope ``c0 (2 cbar (1 + cbar + l^{q-1}))^{1/q}``."""
    c = cbar(q)
    return c0 * (2 * c * (1 + c + l ** (q - 1))) ** (1 / q)


@dataclass
class StudyRow:
    eps: float
    m: int
    pieces: int
    global_ratio: float
    max_piece_ratio: float
    bound_envelope: float
    shape_constant: float
    divergence_residual: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def study_eps(eps: float, seed: int = 0, q: float = 2.0, h: float | None = None, decomp=None) -> StudyRow:
    if q != 2:
        raise CompatibilityError("the constant study measures q = 2 only")
    decomp = decomp or comb_decomposition(eps, h or eps / 8)
    decomp.validate()
    rng = np.random.default_rng(seed)
    f = random_source(decomp, rng)
    split = split_source_star(decomp, f, q)
    grid = decomp.grid
    ux = np.zeros((grid.nx + 1, grid.ny))
    uy = np.zeros((grid.nx, grid.ny + 1))
    piece_ratios = []
    for fk, mk in zip(split.pieces, decomp.masks):
        sol = divergence_solve(grid, mk, fk)
        ux += sol.ux
        uy += sol.uy
        piece_ratios.append(sol.ratio)
    gnorm, div = field_grad_norm(grid, decomp.union, ux, uy)
    res = float(np.max(np.abs(div - f[decomp.union])))
    fn = math.sqrt(_norm_q(grid, f, 2))
    l = decomp.shape_constant()
    c0 = max(piece_ratios)
    return StudyRow(eps, len(decomp.pieces) - 1, len(decomp.pieces), gnorm / fn, c0, composite_bound(c0, l, q), l, res)


def constant_study(eps_values, seed: int = 0, q: float = 2.0, h: float | None = None):
    """One row per eps on a common grid (spacing ``min(eps)/8`` unless given)."""
    eps_values = [float(e) for e in eps_values]
    h = h or min(eps_values) / 8
    rows = [study_eps(e, seed, q, h) for e in eps_values]
    ratios = [r.global_ratio for r in rows]
    spread = max(ratios) / min(ratios)
    verdict = {
        "spread": spread,
        "pass": bool(spread <= 2.0),
        "piece_growth": rows[-1].m / rows[0].m if rows[0].m else float("inf"),
    }
    return rows, verdict
