import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughwall.cell import CellResolution
from roughwall.errors import CompatibilityError, IllPosedBoundaryError, IncompatibleError
from roughwall.geometry import MacroResolution, build_rough_annulus, constant_profile, cosine_profile
from roughwall.macro import (
    MacroField,
    MacroProblemSpec,
    annulus_cell_solutions,
    annulus_slip_field,
    build_correctors,
    couette_profile,
    error_norms,
    field_norms,
    navier_couette_profile,
    normal_derivative,
    solve_macro,
    wall_traction,
)

RIBLET = cosine_profile(0.125)
COARSE = MacroResolution(elements_per_period=4, layer_elements=3)


def smooth_annulus(h, sector_elements=8):
    res = MacroResolution(max_spacing=h, sector_elements=sector_elements)
    return build_rough_annulus(1.0, 2.0, 0.0, None, res, sector_periods=4)


def exact_field(sol, u_theta):
    vals = np.zeros_like(sol.velocity)
    vals[..., 1] = u_theta(sol.mesh.radii)
    return MacroField(sol.mesh, vals)


def test_zero_data_gives_zero():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    zero = lambda th: np.zeros(np.shape(th) + (2,))
    for variant in ("rough", "dirichlet"):
        sol = solve_macro(MacroProblemSpec(ann, variant, outer_velocity=zero))
        assert np.max(np.abs(sol.velocity)) <= 1e-14
        assert np.max(np.abs(sol.pressure)) <= 1e-12


def test_couette_second_order():
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        # angular elements follow h so both directions are refined
        sol = solve_macro(MacroProblemSpec(smooth_annulus(h, sector_elements=round(1 / h)), "dirichlet"))
        errs.append(error_norms(sol, exact_field(sol, couette_profile))["l2"])
    for a, b in zip(errs, errs[1:]):
        assert 3.2 <= a / b <= 4.8


def test_outer_flux_rejected():
    ann = smooth_annulus(1 / 4)
    outward = lambda th: np.stack([np.ones_like(th), np.zeros_like(th)], axis=-1)
    with pytest.raises(CompatibilityError):
        solve_macro(MacroProblemSpec(ann, "dirichlet", outer_velocity=outward))


def test_navier_zero_coefficient_is_no_slip():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    nav = solve_macro(MacroProblemSpec(ann, "navier"), slip=lambda th: np.zeros(np.shape(th)))
    dir_ = solve_macro(MacroProblemSpec(ann, "dirichlet"))
    assert np.array_equal(nav.velocity, dir_.velocity)
    assert nav.boundary_dissipation == 0.0


def test_navier_coefficient_sign_checked():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    with pytest.raises(IllPosedBoundaryError):
        solve_macro(MacroProblemSpec(ann, "navier"), slip=lambda th: np.full(np.shape(th), 0.1))
    with pytest.raises(IllPosedBoundaryError):
        solve_macro(MacroProblemSpec(ann, "navier"), slip=lambda th: np.where(th < ann.sector_angle / 2, -0.1, 0.0))
    with pytest.raises(IncompatibleError):
        solve_macro(MacroProblemSpec(ann, "navier"))


def test_navier_matches_closed_form():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, MacroResolution(elements_per_period=8, max_spacing=1 / 32))
    c = -0.3
    sol = solve_macro(MacroProblemSpec(ann, "navier"), slip=lambda th: np.full(np.shape(th), c))
    exact = exact_field(sol, lambda r: navier_couette_profile(r, ann.eps * c))
    assert error_norms(sol, exact)["l2"] <= 1e-4
    assert sol.velocity[0, 0, 1] > 0  # the wall slips along with the outer rotation
    assert sol.boundary_dissipation < 0


@given(st.floats(-2.0, -0.01))
@settings(max_examples=6, deadline=None)
def test_navier_dissipation_nonpositive(c):
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    sol = solve_macro(MacroProblemSpec(ann, "navier"), slip=lambda th: np.full(np.shape(th), c))
    assert sol.boundary_dissipation <= 0


def test_rough_solution_is_divergence_free():
    ann = build_rough_annulus(1.0, 2.0, 1 / 16, RIBLET, COARSE)
    sol = solve_macro(MacroProblemSpec(ann, "rough"))
    assert sol.divergence_residual <= 1e-10
    assert np.all(sol.velocity[:, 0] == 0)


def test_rough_approaches_dirichlet():
    errs = []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        ann = build_rough_annulus(1.0, 2.0, eps, RIBLET, COARSE)
        errs.append(
            error_norms(solve_macro(MacroProblemSpec(ann, "rough")), solve_macro(MacroProblemSpec(ann, "dirichlet")))["l2"]
        )
    assert errs[0] > errs[1] > errs[2]


def test_identical_fields_have_zero_norms():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    sol = solve_macro(MacroProblemSpec(ann, "rough"))
    for region in ("omega", "rough"):
        assert all(v == 0 for v in error_norms(sol, sol, region).values())


def test_mismatched_meshes_rejected():
    a = solve_macro(MacroProblemSpec(build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE), "dirichlet"))
    b = solve_macro(MacroProblemSpec(build_rough_annulus(1.0, 2.0, 1 / 16, RIBLET, COARSE), "dirichlet"))
    with pytest.raises(IncompatibleError):
        error_norms(a, b)
    with pytest.raises(IncompatibleError):
        error_norms(a, a, region="rough")


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_norms_are_seminorms(seed):
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    sol = solve_macro(MacroProblemSpec(ann, "dirichlet"))
    rng = np.random.default_rng(seed)
    f, g = (MacroField(sol.mesh, rng.standard_normal(sol.velocity.shape)) for _ in range(2))
    s = MacroField(sol.mesh, f.values + g.values)
    nf, ng, ns = field_norms(f, "omega"), field_norms(g, "omega"), field_norms(s, "omega")
    n2 = field_norms(MacroField(sol.mesh, -2.0 * f.values), "omega")
    for key in ("l2", "h1", "w11"):
        assert ns[key] <= nf[key] + ng[key] + 1e-12
        assert n2[key] == pytest.approx(2 * nf[key], rel=1e-12)


def test_sector_norms_scale_to_full_annulus():
    ann = smooth_annulus(1 / 8, sector_elements=32)
    sol = solve_macro(MacroProblemSpec(ann, "dirichlet"))
    full, part = field_norms(sol, "omega"), field_norms(sol, "omega", full_annulus=False)
    assert full["l2"] == pytest.approx(part["l2"] * 2.0, rel=1e-12)
    assert full["w11"] == pytest.approx(part["w11"] * 4.0, rel=1e-12)
    # exact: int_1^2 u^2 r dr over the circle
    r = np.linspace(1, 2, 20001)
    ref = math.sqrt(2 * math.pi * np.trapezoid(couette_profile(r) ** 2 * r, r))
    assert full["l2"] == pytest.approx(ref, rel=1e-3)


def test_normal_derivative_exact_for_quadratics():
    r = np.array([1.0, 1.1, 1.35])
    f = 3 * r**2 - r + 2
    assert normal_derivative(r, f) == pytest.approx(6 * 1.0 - 1, rel=1e-12)


def test_wall_traction_of_couette():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, MacroResolution(max_spacing=1 / 32))
    sol = solve_macro(MacroProblemSpec(ann, "dirichlet"))
    dudn, p = wall_traction(sol)
    # d/d nu = -d/dr, u = (r - 1/r)/1.5
    assert np.allclose(dudn, -4 / 3, atol=1e-3)
    assert np.max(np.abs(p)) <= 1e-2


def test_flat_wall_correctors_recover_shifted_couette():
    # a flat wall at depth d0 eps: the rough flow is Couette on a smaller inner radius
    d0 = 0.4
    res = MacroResolution(elements_per_period=4, layer_elements=3, max_spacing=1 / 32)
    ann = build_rough_annulus(1.0, 2.0, 1 / 16, constant_profile(d0), res)
    rough = solve_macro(MacroProblemSpec(ann, "rough"))
    dir_ = solve_macro(MacroProblemSpec(ann, "dirichlet"))
    sols, frame = annulus_cell_solutions(ann, CellResolution(n=16))
    assert sols[0].bl_constant @ frame[0] == pytest.approx(-d0, abs=1e-10)
    bundle = build_correctors(dir_, sols, frame)
    plain = error_norms(rough, dir_)["l2"]
    corrected = error_norms(rough, bundle.augmented(dir_))["l2"]
    assert corrected <= 0.05 * plain
    inner = 1 - ann.eps * d0
    exact = exact_field(rough, lambda r: couette_profile(r, inner=inner))
    assert error_norms(rough, exact, "rough")["l2"] <= 1e-4


def test_correctors_need_no_slip_base():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    sol = solve_macro(MacroProblemSpec(ann, "rough"))
    sols, frame = annulus_cell_solutions(ann, CellResolution(n=16))
    with pytest.raises(IncompatibleError):
        build_correctors(sol, sols, frame)


def test_navier_unchanged_under_frame_rotation():
    ann = build_rough_annulus(1.0, 2.0, 1 / 8, RIBLET, COARSE)
    res = CellResolution(n=32)
    fields = [annulus_slip_field(ann, resolution=res, frame_rotation=a) for a in (0.0, math.pi)]
    sols = [solve_macro(MacroProblemSpec(ann, "navier"), slip=f) for f in fields]
    diff = np.max(np.abs(sols[0].velocity - sols[1].velocity))
    assert diff <= 1e-8 * np.max(np.abs(sols[0].velocity))
    assert np.all(fields[0].scalar(ann.theta) < 0)
