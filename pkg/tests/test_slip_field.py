import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughwall.cell import CellResolution
from roughwall.errors import GeometryError, SlipFieldError
from roughwall.geometry import circle_patch, constant_profile, cosine_profile, plane_patch
from roughwall.slip_field import (
    CoverPatch,
    SlipField,
    assemble_slip_field,
    cutoff_weights,
    load_samples,
    negdef_scan,
    rotate_frame_check,
)

TWO_PI = 2 * math.pi


def line_cover(patch_id=0, s_range=(-1.0, 1.0), ramp=0.0):
    return CoverPatch(plane_patch(patch_id=patch_id), s_range, lambda s: np.array([s, 0.0]), ramp)


def circle_cover(s_range=(0.0, TWO_PI), ramp=0.0, patch_id=0):
    return CoverPatch(circle_patch(1.0, -1, patch_id=patch_id), s_range, lambda s: np.array([s]), ramp)


def test_flat_field_is_minus_half():
    f = assemble_slip_field([line_cover()], constant_profile(0.5), sample_count=3, resolution=CellResolution(n=8))
    assert np.allclose(f.query(0.37), -0.5 * np.eye(2), atol=1e-12)
    assert negdef_scan(f) == pytest.approx(0.5, abs=1e-12)


def test_flat_field_frame_rotation():
    f = assemble_slip_field([line_cover()], constant_profile(0.5), sample_count=3, resolution=CellResolution(n=8))
    assert rotate_frame_check(f, 0.0) == 0.0
    assert rotate_frame_check(f, math.pi / 7) <= 1e-8


def test_riblet_field_frame_rotation():
    f = assemble_slip_field([line_cover()], cosine_profile(0.25), sample_count=2, resolution=CellResolution(n=16))
    assert rotate_frame_check(f, math.pi / 4) <= 1e-6


def test_circle_field_is_constant_and_periodic():
    f = assemble_slip_field(
        [circle_cover()], cosine_profile(0.25), sample_count=8, period=TWO_PI, resolution=CellResolution(n=16)
    )
    vals = f.scalar(np.linspace(-1.0, 8.0, 37))
    assert np.allclose(vals, vals[0], atol=1e-10)
    assert vals[0] < 0
    assert f.scalar(0.3) == pytest.approx(f.scalar(0.3 + TWO_PI), abs=1e-12)


def test_identical_overlapping_charts_blend_to_single_chart():
    res = CellResolution(n=16)
    single = assemble_slip_field([circle_cover()], cosine_profile(0.25), 6, period=TWO_PI, resolution=res)
    pair = [circle_cover((0.0, 4.0), ramp=0.8, patch_id=0), circle_cover((3.0, TWO_PI + 0.5), ramp=0.8, patch_id=1)]
    blended = assemble_slip_field(pair, cosine_profile(0.25), 6, period=TWO_PI, resolution=res)
    s = np.linspace(0, TWO_PI, 13)
    assert np.allclose(blended.query(s), single.query(s), atol=1e-12)


@given(s=st.floats(-2.0, 10.0))
@settings(max_examples=50, deadline=None)
def test_cutoffs_partition_unity(s):
    covers = [circle_cover((0.0, 4.0), ramp=0.8), circle_cover((3.0, TWO_PI + 0.5), ramp=0.8)]
    w = cutoff_weights(covers, np.array([s]), TWO_PI)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)


def test_uncovered_parameter_raises():
    with pytest.raises(GeometryError):
        cutoff_weights([line_cover(s_range=(0.0, 0.5))], np.array([0.7]))


def test_cubic_interpolation_and_roundtrip(tmp_path):
    res = CellResolution(n=8)
    f = assemble_slip_field(
        [circle_cover()], constant_profile(0.5), 6, period=TWO_PI, interpolation_order=3, resolution=res
    )
    assert np.allclose(f.scalar(np.linspace(0, 7, 11)), -0.5, atol=1e-12)
    path = tmp_path / "field.json"
    f.to_json(path)
    samples, order, period = load_samples(path)
    g = SlipField(samples, f.covers, order, period)
    assert np.allclose(g.query(1.234), f.query(1.234), atol=1e-14)


def test_positive_eigenvalue_is_reported():
    f = assemble_slip_field([line_cover()], constant_profile(0.5), sample_count=3, resolution=CellResolution(n=8))
    bad = [s.__class__(**{**s.__dict__, "matrix": -s.matrix}) for s in f.samples]
    g = SlipField(bad, f.covers)
    assert negdef_scan(g) < 0
    with pytest.raises(SlipFieldError):
        SlipField(f.samples, f.covers, interpolation_order=2)


def test_solves_are_cached():
    f = assemble_slip_field([line_cover()], cosine_profile(0.25), sample_count=5, resolution=CellResolution(n=8))
    # every sample of the plane has the same coefficients
    assert f.solve_count == 1
