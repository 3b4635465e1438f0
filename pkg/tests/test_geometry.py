import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluorpoison.errors import InvalidInputError, UnsupportedShapeError
from fluorpoison.geometry import (
    SHAPES,
    SignBox,
    TriggerPlacement,
    compute_relative_area,
    compute_trigger_side,
    place_trigger,
    placement_center,
    shape_contains,
    shape_mask,
    verify_containment,
    verify_pixel_region,
)

dims = st.floats(min_value=4.0, max_value=2000.0, allow_nan=False)


def box(h, w, u=0.0, v=0.0, shape="triangle"):
    return SignBox(u, v, w, h, shape, "x")


def brute_force_side(h, w, samples=401):
    """Largest square at (w/2, h/4) inside the apex-up triangle, by bisection on dense sampling."""
    lo, hi = 0.0, min(h, w)
    offs = np.linspace(-0.5, 0.5, samples)
    for _ in range(60):
        s = 0.5 * (lo + hi)
        gx, gy = np.meshgrid(w / 2 + offs * s, h / 4 + offs * s)
        inside = (gy >= 0) & (gy <= h) & (np.abs(gx - w / 2) <= (w / 2) * gy / h)
        lo, hi = (s, hi) if inside.all() else (lo, s)
    return lo


@pytest.mark.parametrize("h,w,expected", [(60, 60, 10.0), (40, 80, 10.0)])
def test_trigger_side_examples(h, w, expected):
    assert compute_trigger_side(box(h, w)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("h,w", [(60, 60), (40, 80), (52, 60), (90, 30), (17, 250)])
def test_trigger_side_matches_bisection_oracle(h, w):
    assert compute_trigger_side(box(h, w)) == pytest.approx(brute_force_side(h, w), rel=1e-6)


def test_degenerate_box_rejected():
    with pytest.raises(InvalidInputError):
        compute_trigger_side(box(0, 60))
    with pytest.raises(InvalidInputError):
        SignBox(0, 0, -1, 5)


@pytest.mark.parametrize("h,w,expected", [(60, 60, 1 / 36), (40, 80, 0.03125)])
def test_relative_area_examples(h, w, expected):
    assert compute_relative_area(box(h, w)) == pytest.approx(expected, rel=1e-12)


@given(dims, dims)
def test_area_identity(h, w):
    b = box(h, w)
    s = compute_trigger_side(b)
    assert compute_relative_area(b) * w * h == pytest.approx(s * s, rel=1e-9)
    assert 0 < compute_relative_area(b) < 1


@given(dims, dims, st.floats(min_value=0.01, max_value=100.0))
def test_scale_covariance(h, w, k):
    s = compute_trigger_side(box(h, w))
    assert compute_trigger_side(box(k * h, k * w)) == pytest.approx(k * s, rel=1e-9)
    assert compute_relative_area(box(k * h, k * w)) == pytest.approx(compute_relative_area(box(h, w)), rel=1e-9)


@given(dims, dims)
def test_side_at_most_half_min_dimension(h, w):
    assert 0 < compute_trigger_side(box(h, w)) <= min(w, h) / 2 + 1e-12


def test_placement_center_examples():
    assert placement_center(SignBox(100, 200, 60, 60)) == (130, 215)
    assert placement_center(SignBox(0, 0, 4, 4)) == (2, 1)
    assert placement_center(SignBox(0, 0, 4, 4), mode="center") == (2, 2)
    with pytest.raises(InvalidInputError):
        placement_center(SignBox(0, 0, 4, 4), mode="corner")


def test_triangle_containment_and_doubled_side_fails():
    b = box(52, 60)
    p = place_trigger(b)
    assert verify_containment(b, p)
    doubled = TriggerPlacement(2 * p.side, p.center, 4 * p.relative_area)
    assert not verify_containment(b, doubled)


def test_rectangle_accepts_full_square():
    b = SignBox(10, 10, 40, 30, "rectangle")
    p = TriggerPlacement(30.0, (30.0, 25.0), 30 * 30 / 1200)
    assert verify_containment(b, p)


def test_unsupported_shape():
    b = SignBox(0, 0, 10, 10, "diamond")
    with pytest.raises(UnsupportedShapeError):
        verify_containment(b, place_trigger(b))


@settings(max_examples=200, deadline=None)
@given(
    dims, dims, st.sampled_from(SHAPES), st.sampled_from(["upper", "center"]),
    st.floats(min_value=0.05, max_value=1.0),
)
def test_containment_property(h, w, shape, mode, scale):
    b = box(h, w, 3.0, 5.0, shape)
    assert verify_containment(b, place_trigger(b, scale, mode))


@settings(max_examples=200, deadline=None)
@given(st.integers(8, 300), st.integers(8, 300), st.integers(0, 50), st.integers(0, 50), st.sampled_from(SHAPES))
def test_integer_pixel_region_is_contained(h, w, u, v, shape):
    b = SignBox(u, v, w, h, shape)
    p = place_trigger(b)
    x0, y0, n = p.pixel_region()
    assert n <= p.side + 1e-9
    assert verify_pixel_region(b, (x0, y0, n))


def test_shape_mask_octagon_is_regular_for_square():
    m = shape_mask("octagon", 200, 200, oversample=2)
    # regular octagon area = 2 (1 + sqrt 2) a^2 with side a = L / (1 + sqrt 2)
    a = 200 / (1 + math.sqrt(2))
    assert m.sum() == pytest.approx(2 * (1 + math.sqrt(2)) * a * a, rel=5e-3)


def test_shape_contains_circle_area():
    m = shape_mask("circle", 200, 200, oversample=2)
    assert m.sum() == pytest.approx(math.pi * 100 * 100, rel=5e-3)
    assert shape_contains("triangle", 50.0, 0.0, 100.0, 80.0)
    assert not shape_contains("triangle", 10.0, 5.0, 100.0, 80.0)
