"""Fourier-mode reconstruction below the interface and decay measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidCoefficientsError
from .solver import CellSolution


def wavenumbers(n: int, dim: int):
    """Integer mode grids, one array per periodic axis, shape ``(n,)*(d-1)``."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    return np.meshgrid(*([k] * (dim - 1)), indexing="ij")


def _phase(grid, comp, sign):
    """Phase factor for the staggered offset of ``comp`` along each axis."""
    modes = wavenumbers(grid.n, grid.dim)
    total = np.ones(modes[0].shape, dtype=complex)
    for m, km in enumerate(modes):
        shift = 0.0 if m == comp else 0.5
        total = total * np.exp(sign * 2j * math.pi * km * shift / grid.n)
    return total


def to_modes(grid, comp, values):
    """Fourier coefficients of a periodic slice (last axis kept) of component ``comp``."""
    axes = tuple(range(grid.dim - 1))
    hat = np.fft.fftn(values, axes=axes) / grid.n ** (grid.dim - 1)
    ph = _phase(grid, comp, -1)
    return hat * (ph[..., None] if values.ndim == grid.dim else ph)


def from_modes(grid, comp, hat):
    axes = tuple(range(grid.dim - 1))
    ph = _phase(grid, comp, +1)
    ph = ph[..., None] if hat.ndim == grid.dim else ph
    return np.real(np.fft.ifftn(hat * ph, axes=axes)) * grid.n ** (grid.dim - 1)


def interface_modes(sol: CellSolution) -> np.ndarray:
    """Fourier coefficients ``c_m^0`` of beta on S, shape ``(d,) + (n,)*(d-1)``."""
    g = sol.grid
    trace = g.interface_trace(sol.v)
    v_hat = np.stack([to_modes(g, j if j < g.dim - 1 else -1, trace[j]) for j in range(g.dim)])
    return np.einsum("ij,j...->i...", sol.b_inv_t, v_hat)


def mode_oracle(coeffs, trace_hat, z):
    """Predicted ``(beta_hat, omega_hat)`` at heights ``z <= 0`` for every mode.

    ``trace_hat`` has shape ``(d,) + (n,)*(d-1)`` with FFT ordering of
    modes.  Results have a trailing axis over ``z``.
    """
    trace_hat = np.asarray(trace_hat, dtype=complex)
    d = trace_hat.shape[0]
    n = trace_hat.shape[1]
    z = np.atleast_1d(np.asarray(z, dtype=float))
    modes = wavenumbers(n, d)
    a = coeffs.a_matrix
    xi = np.zeros(modes[0].shape)
    for j in range(d - 1):
        for l in range(d - 1):
            xi = xi + a[j, l] * modes[j] * modes[l]
    zero = np.zeros(modes[0].shape, dtype=bool)
    zero[(0,) * (d - 1)] = True
    if np.any(xi[~zero] <= 0):
        raise InvalidCoefficientsError("xi_m must be positive for every nonzero mode")
    root = np.sqrt(np.where(zero, 1.0, xi))
    # w = B (i m / sqrt(xi), 1)
    vec = np.stack([1j * mj / root for mj in modes] + [np.ones(root.shape)]).astype(complex)
    w = np.einsum("ij,j...->i...", coeffs.b_matrix, vec)
    dt = np.sum(trace_hat * w, axis=0)  # bilinear, no conjugation
    expo = np.exp(2 * math.pi * root[..., None] * z)
    beta = (trace_hat[..., None] - 2 * math.pi * root[..., None] * z * (dt[..., None] * w[..., None])) * expo
    omega = -4 * math.pi * root[..., None] * dt[..., None] * expo
    beta[(slice(None),) + (0,) * (d - 1)] = trace_hat[(slice(None),) + (0,) * (d - 1)][:, None]
    omega[(0,) * (d - 1)] = 0.0
    return beta, omega


def oracle_fields(sol: CellSolution):
    """Staggered ``v`` components predicted below S from the solver's own trace."""
    g = sol.grid
    c_hat = interface_modes(sol)
    out = []
    bt = sol.spec.coeffs.b_matrix.T
    for j in range(g.dim):
        z = g.vertical_coords(j)
        below = z < 0
        beta_hat, _ = mode_oracle(sol.spec.coeffs, c_hat, z[below])
        v_hat = np.einsum("i,i...->...", bt[j], beta_hat)
        out.append((below, from_modes(g, j if j < g.dim - 1 else -1, v_hat)))
    return out


def oracle_error(sol: CellSolution, z_min: float | None = None, z_max: float = 0.0) -> float:
    """Relative L2 mismatch of the fluctuation below S against the mode oracle.

    Normalized by the L2 norm of the numerical fluctuation ``v - mean(v)``
    over the same region, so the constant far field does not mask errors.
    """
    g = sol.grid
    num = den = 0.0
    vbar = np.array([t.mean() for t in g.interface_trace(sol.v)])
    for j, (below, pred) in enumerate(oracle_fields(sol)):
        z = g.vertical_coords(j)[below]
        sel = z < z_max
        if z_min is not None:
            sel &= z >= z_min
        wts = (g.vertical_extent(j)[below] * g.h ** (g.dim - 1))[sel]
        field = sol.v[j][..., below][..., sel]
        diff = field - pred[..., sel]
        num += np.sum(wts * diff**2)
        den += np.sum(wts * (field - vbar[j]) ** 2)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return math.sqrt(num / den)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    residual: float
    n_points: int
    window: tuple

    @property
    def has_signal(self) -> bool:
        return self.n_points >= 2


NO_DECAY_SIGNAL = DecayFit(rate=math.nan, residual=math.nan, n_points=0, window=())


def decay_fit(sol: CellSolution, floor: float = 1e-12, z_max: float = 0.0) -> DecayFit:
    """Least-squares slope of ``log ||beta - c_bl||`` against ``y_d``.

    Levels whose fluctuation is below ``floor`` (or below the iterative
    solver's error level) are excluded.  Returns ``NO_DECAY_SIGNAL`` when
    fewer than two levels remain.
    """
    z, norm = sol.decay_samples[:, 0], sol.decay_samples[:, 1]
    level = floor
    if sol.info is not None and sol.info.method != "direct":
        level = max(floor, 100 * sol.spec.tol * max(np.max(norm, initial=0.0), np.linalg.norm(sol.bl_constant)))
    sel = (norm > level) & (z < z_max)
    if np.count_nonzero(sel) < 2:
        return NO_DECAY_SIGNAL
    zs, ln = z[sel], np.log(norm[sel])
    coef, res, *_ = np.polyfit(zs, ln, 1, full=True)
    rms = float(np.sqrt(res[0] / zs.size)) if res.size else 0.0
    return DecayFit(rate=float(coef[0]), residual=rms, n_points=int(zs.size), window=(float(zs.min()), float(zs.max())))
