import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Polygon

from roughwall.divergence_lab import (
    Grid2D,
    Piece,
    StarDecomposition,
    cbar,
    comb_decomposition,
    composite_bound,
    divergence_solve,
    field_grad_norm,
    is_star_shaped,
    random_source,
    rectangle_piece,
    split_source_chain,
    split_source_star,
    study_eps,
)
from roughwall.errors import CompatibilityError, DecompositionError


def square_example(h=1 / 40):
    # macro unit square and one tooth [0.4, 0.6] x [0.9, 1.2]
    n = round(1 / h)
    grid = Grid2D(0.0, 0.0, h, n, round(1.2 / h))
    pieces = [rectangle_piece(0, 0, 1, 1), rectangle_piece(0.4, 0.9, 0.6, 1.2)]
    return StarDecomposition(grid, pieces, "star")


def chain_example(n_pieces, h=1 / 20):
    boxes = [rectangle_piece(0.8 * j, 0, 0.8 * j + 1, 1) for j in range(n_pieces)]
    width = 0.8 * (n_pieces - 1) + 1
    grid = Grid2D(0.0, 0.0, h, round(width / h), round(1 / h))
    return StarDecomposition(grid, boxes, "chain")


def test_cbar_is_power_mean_constant():
    assert cbar(2) == 2.0
    a, b = 0.3, -1.7
    assert abs(a + b) ** 3 <= cbar(3) * (abs(a) ** 3 + abs(b) ** 3)


def test_zero_source_splits_to_zero():
    d = square_example()
    split = split_source_star(d, np.zeros(d.grid.shape))
    assert all(np.all(p == 0) for p in split.pieces)


def test_square_example_closed_form():
    d = square_example()
    tooth, macro = d.masks[1], d.masks[0]
    f = np.where(tooth, 1.0, 0.0)
    rest = macro & ~tooth
    f[rest] = -tooth.sum() / rest.sum()
    split = split_source_star(d, f)
    a1 = f[tooth].sum() * d.grid.area / 0.02  # overlap strip area 0.2 x 0.1
    assert split.coefficients[1] == pytest.approx(a1, rel=1e-12)
    assert np.all(np.abs(split.means) <= 1e-12)
    assert np.allclose(sum(split.pieces), f, atol=1e-15)


def test_nonzero_mean_rejected():
    d = square_example()
    with pytest.raises(CompatibilityError):
        split_source_star(d, np.where(d.union, 1.0, 0.0))


def test_missing_overlap_rejected():
    grid = Grid2D(0, 0, 0.05, 20, 30)
    d = StarDecomposition(grid, [rectangle_piece(0, 0, 1, 1), rectangle_piece(0.4, 1.1, 0.6, 1.4)], "star")
    with pytest.raises(DecompositionError):
        d.validate()
    f = np.zeros(grid.shape)
    with pytest.raises(DecompositionError):
        split_source_star(d, f)


def test_intersecting_micro_pieces_rejected():
    grid = Grid2D(0, 0, 0.05, 20, 30)
    pieces = [rectangle_piece(0, 0, 1, 1), rectangle_piece(0.2, 0.9, 0.5, 1.2), rectangle_piece(0.4, 0.9, 0.7, 1.2)]
    with pytest.raises(DecompositionError):
        StarDecomposition(grid, pieces, "star").validate()


def test_star_shape_check():
    assert is_star_shaped(rectangle_piece(0, 0, 1, 2))
    # L-shape is not star-shaped with respect to a ball in one arm
    ell = Polygon([(0, 0), (2, 0), (2, 0.5), (0.5, 0.5), (0.5, 2), (0, 2)])
    assert not is_star_shaped(Piece(ell, (1.6, 0.25), 0.2))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=100, deadline=None)
def test_star_splitting_identities(seed):
    d = comb_decomposition(1 / 8, 1 / 32)
    f = random_source(d, np.random.default_rng(seed))
    split = split_source_star(d, f)
    assert np.max(np.abs(sum(split.pieces) - f)) <= 1e-12
    assert np.all(np.abs(split.means) <= 1e-12)
    for p, m in zip(split.pieces, d.masks):
        assert np.all(p[~m] == 0)
    l = d.shape_constant()
    # per-piece inflation for micro pieces
    assert np.all(split.local_ratios[1:] <= cbar(2) * (1 + l) + 1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_splitting_is_linear(seed, s):
    d = comb_decomposition(1 / 8, 1 / 32)
    rng = np.random.default_rng(seed)
    f, g = random_source(d, rng), random_source(d, rng)
    a, b = split_source_star(d, f), split_source_star(d, g)
    c = split_source_star(d, f + s * g)
    for pa, pb, pc in zip(a.pieces, b.pieces, c.pieces):
        assert np.allclose(pc, pa + s * pb, atol=1e-12)


def test_chain_single_piece_is_identity():
    d = chain_example(1)
    f = random_source(d, np.random.default_rng(1))
    split = split_source_chain(d, f)
    assert np.array_equal(split.pieces[0], f)


def test_chain_two_squares():
    d = chain_example(2)
    X, _ = d.grid.centers()
    width = 1.8
    f = np.where(X < width / 2, 1.0, -1.0)
    split = split_source_chain(d, f)
    ov = d.overlap(0, 1)
    a1 = f[d.masks[0]].sum() / ov.sum()
    assert split.coefficients[0] == pytest.approx(a1, rel=1e-12)
    assert np.all(np.abs(split.means) <= 1e-12)
    assert np.array_equal(sum(split.pieces), f)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_chain_three_random(seed):
    d = chain_example(3)
    f = random_source(d, np.random.default_rng(seed))
    split = split_source_chain(d, f)
    assert np.max(np.abs(sum(split.pieces) - f)) <= 1e-12
    assert np.all(np.abs(split.means) <= 1e-12)
    for p, m in zip(split.pieces, d.masks):
        assert np.all(p[~m] == 0)


def test_divergence_solve_zero():
    g = Grid2D(0, 0, 1 / 8, 8, 8)
    sol = divergence_solve(g, np.ones(g.shape, bool), np.zeros(g.shape))
    assert sol.ratio == 0 and np.all(sol.ux == 0) and np.all(sol.uy == 0)


def _sine(n, side=1.0):
    g = Grid2D(0, 0, side / n, n, n)
    X, Y = g.centers()
    return g, np.sin(2 * np.pi * X / side) * np.sin(2 * np.pi * Y / side)


def test_divergence_solve_converges():
    ratios = []
    for n in (32, 64, 128):
        g, f = _sine(n)
        sol = divergence_solve(g, np.ones(g.shape, bool), f)
        assert sol.residual <= 1e-10
        ratios.append(sol.ratio)
    assert abs(ratios[-1] - ratios[-2]) <= 0.05 * ratios[-1]
    # walls are honoured: the sum field has zero boundary faces
    assert np.all(sol.ux[0] == 0) and np.all(sol.ux[-1] == 0)


def test_divergence_ratio_scale_invariant():
    ratios = []
    for side in (1.0, 0.25, 1 / 16):
        g, f = _sine(32, side)
        ratios.append(divergence_solve(g, np.ones(g.shape, bool), f).ratio)
    assert max(ratios) / min(ratios) - 1 <= 0.02


def test_divergence_solve_rejects_mean():
    g = Grid2D(0, 0, 1 / 8, 8, 8)
    with pytest.raises(CompatibilityError):
        divergence_solve(g, np.ones(g.shape, bool), np.ones(g.shape))


def test_field_grad_norm_matches_solve():
    g, f = _sine(16)
    mask = np.ones(g.shape, bool)
    sol = divergence_solve(g, mask, f)
    gn, div = field_grad_norm(g, mask, sol.ux, sol.uy)
    assert gn == pytest.approx(sol.grad_norm, rel=1e-12)
    assert np.max(np.abs(div - f.ravel())) <= 1e-10


def test_single_piece_study_reduces_to_macro_solve():
    grid = Grid2D(0, 0, 1 / 16, 16, 16)
    d = StarDecomposition(grid, [rectangle_piece(0, 0, 1, 1)], "star")
    row = study_eps(1.0, seed=3, decomp=d)
    f = random_source(d, np.random.default_rng(3))
    assert row.global_ratio == pytest.approx(divergence_solve(grid, d.masks[0], f).ratio, rel=1e-12)
    assert row.m == 0


def test_study_row_small():
    row = study_eps(1 / 8, seed=0, h=1 / 64)
    assert row.m == 4
    assert row.divergence_residual <= 1e-9
    assert row.global_ratio <= row.bound_envelope
    assert row.bound_envelope == pytest.approx(composite_bound(row.max_piece_ratio, row.shape_constant))
    assert math.isfinite(row.global_ratio)
