import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughwall.cell import CellProblemSpec, CellResolution, solve_cell
from roughwall.cell.analysis import (
    NO_DECAY_SIGNAL,
    decay_fit,
    interface_modes,
    mode_oracle,
    oracle_error,
)
from roughwall.errors import InvalidCoefficientsError
from roughwall.geometry import (
    CellCoefficients,
    coefficients_from_b,
    constant_profile,
    cosine_profile,
    decay_rate_bound,
)

I2 = coefficients_from_b(np.eye(2))
I3 = coefficients_from_b(np.eye(3))


def test_zero_trace_gives_zero_fluctuation():
    hat = np.zeros((3, 4, 4), dtype=complex)
    hat[:, 0, 0] = [0.2, -0.1, 0.0]
    beta, omega = mode_oracle(I3, hat, np.linspace(-2, 0, 5))
    assert np.all(beta[:, 1:, :, :] == 0) and np.all(beta[:, :, 1:, :] == 0)
    assert np.allclose(beta[:, 0, 0, :], hat[:, 0, 0, None])
    assert np.all(omega == 0)


def test_single_mode_identity():
    # m = (1, 0), c0 = (0, 1, 0): c0 . (i, 0, 1) = 0 so d~ = 0
    hat = np.zeros((3, 4, 4), dtype=complex)
    hat[1, 1, 0] = 1.0
    z = np.array([-1.0, -0.5, 0.0])
    beta, omega = mode_oracle(I3, hat, z)
    assert np.allclose(beta[1, 1, 0], np.exp(2 * math.pi * z))
    assert np.allclose(beta[[0, 2], 1, 0], 0)
    assert np.allclose(omega[1, 0], 0)


def _mode_residuals(coeffs, m, c0, z):
    """Residuals of the mode ODEs at heights z by central differences."""
    d = coeffs.dim
    hat_shape = (d,) + (8,) * (d - 1)
    hat = np.zeros(hat_shape, dtype=complex)
    idx = tuple(int(k) % 8 for k in m)
    hat[(slice(None),) + idx] = c0
    dz = 1e-4
    zz = np.concatenate([z - dz, z, z + dz])
    beta, omega = mode_oracle(coeffs, hat, zz)
    b = beta[(slice(None),) + idx].reshape(d, 3, -1)
    w = omega[idx].reshape(3, -1)
    a = coeffs.a_matrix
    bm = coeffs.b_matrix
    mm = np.asarray(m, dtype=float)
    xi = mm @ a[: d - 1, : d - 1] @ mm
    grad_w = np.concatenate([2j * math.pi * mm[:, None] * w[1], ((w[2] - w[0]) / (2 * dz))[None]])
    lap = (b[:, 2] - 2 * b[:, 1] + b[:, 0]) / dz**2 - 4 * math.pi**2 * xi * b[:, 1]
    momentum = -lap + bm @ grad_w
    v = bm.T @ b[:, 1]
    dv = bm.T @ ((b[:, 2] - b[:, 0]) / (2 * dz))
    div = 2j * math.pi * (mm @ v[: d - 1]) + dv[d - 1]
    return np.max(np.abs(momentum)), np.max(np.abs(div))


@given(
    s1=st.floats(0.4, 2.5),
    s2=st.floats(0.4, 2.5),
    angle=st.floats(0, math.pi),
    m=st.tuples(st.integers(-3, 3), st.integers(-3, 3)).filter(lambda t: t != (0, 0)),
    c0=st.tuples(*[st.floats(-1, 1)] * 6),
)
@settings(max_examples=30, deadline=None)
def test_oracle_solves_mode_equations(s1, s2, angle, m, c0):
    # rotated tangential frame: A has a full tangential block
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    coeffs = coefficients_from_b(rot @ np.diag([s1, s2, 1.0]))
    vec = np.array(c0[:3]) + 1j * np.array(c0[3:])
    mom, div = _mode_residuals(coeffs, m, vec, np.array([-0.6, -0.2]))
    scale = 1 + np.abs(vec).sum()
    assert mom < 2e-3 * scale * (1 + np.dot(m, m)) ** 1.5
    assert div < 1e-6 * scale * (1 + np.dot(m, m))


def test_oracle_rejects_nonpositive_xi():
    bad = CellCoefficients(b_matrix=np.eye(3), a_matrix=np.diag([-1.0, 1.0, 1.0]))
    with pytest.raises(InvalidCoefficientsError):
        mode_oracle(bad, np.ones((3, 4, 4)), [0.0])


def test_flat_wall_has_no_decay_signal():
    sol = solve_cell(CellProblemSpec(I3, constant_profile(0.5), np.array([1.0, 0, 0]), resolution=CellResolution(n=8)))
    assert decay_fit(sol) is NO_DECAY_SIGNAL
    assert not decay_fit(sol).has_signal


def _seeded_2d(n):
    d0 = 0.5 + 0.5 / n  # wall on a vertical-velocity face

    def trace(p):
        y = p[:, 0]
        e = math.exp(2 * math.pi * d0)
        return np.stack([2 * np.cos(2 * math.pi * y) * e, 2 * np.sin(2 * math.pi * y) * e], axis=1)

    return solve_cell(
        CellProblemSpec(I2, constant_profile(d0), np.zeros(2), resolution=CellResolution(n=n), wall_trace=trace)
    )


def test_seeded_single_mode_rate_2d():
    sol = _seeded_2d(64)
    fit = decay_fit(sol)
    assert fit.rate == pytest.approx(2 * math.pi, rel=0.01)
    # the interface trace is the seeded mode itself
    hat = interface_modes(sol)
    assert abs(hat[0, 1] - 1.0) < 1e-2 and abs(hat[1, 1] + 1j) < 1e-2


def test_seeded_single_mode_rate_3d():
    n = 16
    d0 = 0.5 + 0.5 / n

    def trace(p):
        return np.stack(
            [np.zeros(len(p)), np.cos(2 * math.pi * p[:, 0]) * math.exp(2 * math.pi * d0), np.zeros(len(p))], axis=1
        )

    sol = solve_cell(
        CellProblemSpec(I3, constant_profile(d0), np.zeros(3), resolution=CellResolution(n=n), wall_trace=trace)
    )
    # discrete dispersion: cosh(k h) = 1 + 2 sin^2(pi h)
    h = 1.0 / n
    discrete = math.acosh(1 + 2 * math.sin(math.pi * h) ** 2) / h
    fit = decay_fit(sol)
    assert fit.rate == pytest.approx(discrete, rel=5e-3)
    assert discrete < fit.rate * 1.005 < 2 * math.pi * 1.005


def test_riblet_decay_above_bound():
    sol = solve_cell(CellProblemSpec(I2, cosine_profile(0.25), np.array([1.0, 0]), resolution=CellResolution(n=32)))
    assert decay_fit(sol).rate >= decay_rate_bound(I2)


def test_oracle_matches_solver_under_refinement():
    errs = []
    for n in (16, 32):
        sol = solve_cell(CellProblemSpec(I2, cosine_profile(0.25), np.array([1.0, 0]), resolution=CellResolution(n=n)))
        errs.append(oracle_error(sol))
    assert errs[1] < errs[0] / 2.5
