import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearflow.errors import (BadInterval, CylinderViolation, DiameterViolation, MeshFailure,
                              NonPositiveLength, WrongSide)
from shearflow.geometry import (ConstantProfile, SineProfile, TableProfile, build_outlet_domain,
                                cross_section, mesh, profile_from_dict, slice_region, truncate,
                                unit_square_mesh, UPPER_WALL, LOWER_WALL)


def test_straight_channel_is_valid(straight):
    assert straight.l1 == 1.0 and straight.l2 == 1.0
    assert np.allclose(straight.width(np.linspace(-9, 9, 7)), 1.0)


def test_wavy_channel_extrema_by_dense_sampling(wavy):
    xs = np.linspace(-50, 50, 200001)
    f2 = wavy.upper.value(xs)
    assert f2.min() == pytest.approx(0.55, abs=1e-6)
    assert f2.max() == pytest.approx(0.95, abs=1e-6)
    assert np.allclose(wavy.lower.value(xs), -f2)


def test_narrow_wall_violates_cylinder():
    with pytest.raises(CylinderViolation):
        build_outlet_domain(upper=ConstantProfile(0.4), l1=1.0, l2=2.0)


def test_wide_wall_violates_diameter():
    with pytest.raises(DiameterViolation):
        build_outlet_domain(upper=ConstantProfile(1.5), l1=1.0, l2=2.0)


def test_l1_above_l2_rejected():
    with pytest.raises(ValueError, match="l1"):
        build_outlet_domain(upper=ConstantProfile(1.0), l1=2.0, l2=1.5)


def test_document_form_round_trip():
    doc = {"profile": {"kind": "sine", "mean": 0.75, "amplitude": 0.2}, "l1": 1.0, "l2": 2.0}
    dom = build_outlet_domain(doc)
    again = build_outlet_domain({"profile": dom.upper.to_dict(), "l1": 1.0, "l2": 2.0})
    xs = np.linspace(-3, 3, 11)
    assert np.array_equal(dom.upper.value(xs), again.upper.value(xs))


def test_unknown_profile_key_rejected():
    with pytest.raises(ValueError):
        profile_from_dict({"kind": "constant", "level": 1.0, "slope": 2.0})


def test_sine_derivatives_match_finite_differences():
    f = SineProfile(0.75, 0.2, 1.3, 0.4)
    x = np.linspace(-4, 4, 17)
    e = 1e-5
    assert np.allclose(f.d1(x), (f.value(x + e) - f.value(x - e)) / (2 * e), atol=1e-8)
    assert np.allclose(f.d2(x), (f.d1(x + e) - f.d1(x - e)) / (2 * e), atol=1e-8)


def test_table_profile_is_constant_beyond_table():
    f = TableProfile([-1.0, 0.0, 1.0], [0.6, 0.8, 0.6])
    assert f.value(5.0) == pytest.approx(0.6)
    assert f.value(-7.0) == pytest.approx(0.6)


def test_truncation_of_straight_channel_is_rectangle(straight):
    region = truncate(straight, 5.0)
    assert region.area() == pytest.approx(10.0, rel=1e-12)
    assert region.contains([[4.9, 0.49]])[0]
    assert not region.contains([[5.1, 0.0]])[0]


def test_truncations_are_nested(wavy, rng):
    small, big = truncate(wavy, 3.0), truncate(wavy, 5.0)
    pts = np.column_stack([rng.uniform(-6, 6, 5000), rng.uniform(-1, 1, 5000)])
    inside = small.contains(pts)
    assert np.all(big.contains(pts[inside]))


def test_truncation_length_must_be_positive(straight):
    with pytest.raises(NonPositiveLength):
        truncate(straight, 0.0)


def test_wavy_area_matches_closed_form(wavy):
    t = 2 * math.pi
    # the sine term integrates to zero over whole periods
    assert truncate(wavy, t).area() == pytest.approx(2 * 0.75 * 2 * t, rel=1e-10)


def test_unit_slice_area(straight, wavy):
    assert slice_region(straight, 1, 4, 5).area() == pytest.approx(1.0)
    exact = 2 * (0.75 + 0.2 * (math.cos(4) - math.cos(5)))
    assert slice_region(wavy, 2, 4, 5).area() == pytest.approx(exact, rel=1e-10)


def test_empty_slice_rejected(straight):
    with pytest.raises(BadInterval):
        slice_region(straight, 1, 4, 4)


def test_cross_sections(straight, wavy):
    sec = cross_section(straight, 2, 3.0)
    assert (sec.lower, sec.upper, sec.normal) == (-0.5, 0.5, (1.0, 0.0))
    assert cross_section(straight, 1, -3.0).normal == (1.0, 0.0)
    assert cross_section(wavy, 2, math.pi / 2).length == pytest.approx(1.9)
    with pytest.raises(WrongSide):
        cross_section(straight, 1, 3.0)


def test_unit_square_mesh_has_positive_areas():
    m = unit_square_mesh(0.25)
    assert m.n_triangles >= 32
    assert np.all(m.signed_areas() > 0)
    assert m.area() == pytest.approx(1.0)


def test_straight_walls_are_exact(straight):
    m = mesh(truncate(straight, 5.0), 0.1)
    lo = m.vertices[m.boundary_vertices([LOWER_WALL]), 1]
    hi = m.vertices[m.boundary_vertices([UPPER_WALL]), 1]
    assert np.max(np.abs(lo + 0.5)) <= 1e-12 and np.max(np.abs(hi - 0.5)) <= 1e-12


def test_wavy_boundary_error_is_second_order(wavy):
    errs = []
    for h in (0.1, 0.05):
        m = mesh(truncate(wavy, 3.0), h)
        e = m.edges_with_tags([UPPER_WALL])
        a, b = m.vertices[e[:, 0]], m.vertices[e[:, 1]]
        s = np.linspace(0, 1, 21)[1:-1, None, None]
        pts = (a[None] * (1 - s) + b[None] * s).reshape(-1, 2)
        errs.append(np.max(np.abs(wavy.upper.value(pts[:, 0]) - pts[:, 1])))
    assert errs[1] <= 0.3 * errs[0]
    assert errs[1] <= 0.2 * 0.05**2


def test_coarse_mesh_rejected(straight):
    with pytest.raises(MeshFailure):
        mesh(truncate(straight, 2.0), 0.3)


def test_nested_meshes_coincide(straight):
    a = mesh(truncate(straight, 2.0), 0.25 / 2)
    b = mesh(truncate(straight, 3.0), 0.25 / 2)
    inner = b.vertices[np.abs(b.vertices[:, 0]) <= 2.0 + 1e-12]
    assert len(inner) == len(a.vertices)
    assert np.allclose(np.sort(inner, axis=0), np.sort(a.vertices, axis=0))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.55, 0.95), st.floats(0.0, 0.3), st.floats(0.1, 2.0))
def test_sine_domains_respect_bounds_or_raise(mean, amp, freq):
    try:
        dom = build_outlet_domain(upper=SineProfile(mean, amp, freq), l1=1.0, l2=2.0)
    except (CylinderViolation, DiameterViolation):
        assert mean - amp < 0.5 - 1e-9 or mean + amp > 1.0 + 1e-9
        return
    xs = np.linspace(-20, 20, 4001)
    assert np.all(dom.width(xs) >= 1.0 - 1e-9)
    assert np.all(dom.width(xs) <= 2.0 + 1e-9)
