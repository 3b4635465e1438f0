from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluorpoison.errors import InvalidInputError
from fluorpoison.fluorender import (
    GRAFFITI_SURVEY,
    HEART,
    STANDARD_CONDITION,
    WEATHERS,
    EnvironmentCondition,
    GraffitiScore,
    TriggerAsset,
    build_trigger_set,
    fluorescence_intensity,
    interpolate,
    render_parametric,
    select_trigger_design,
    visibility,
)


def solid(rgba, n=4):
    return TriggerAsset(np.tile(np.asarray(rgba, dtype=float), (n, n, 1)))


def test_survey_totals_and_selection():
    # the published first-row sum reads 8, but its components add to 9
    assert [g.total for g in GRAFFITI_SURVEY] == [9, 10, 11, 12, 14, 6]
    assert all(g.total == g.complexity + g.commonness + g.coloration + g.recognizability + g.placement + g.scope
               for g in GRAFFITI_SURVEY)
    assert GRAFFITI_SURVEY[select_trigger_design(GRAFFITI_SURVEY)].name == "heart"


def test_selection_edge_cases():
    one = GraffitiScore(2, 2, 2, 2, 2, 2)
    assert select_trigger_design([one]) == 0
    a = GraffitiScore(1, 2, 1, 3, 1, 1)
    b = GraffitiScore(1, 2, 2, 2, 1, 1)
    assert a.total == b.total
    assert select_trigger_design([a, b]) == 1
    with pytest.raises(InvalidInputError):
        select_trigger_design([])
    with pytest.raises(InvalidInputError):
        GraffitiScore(0, 1, 1, 1, 1, 1)


def test_heart_curve_fits_unit_square():
    x, y = HEART.curve()
    assert x.min() == pytest.approx(0.0, abs=1e-12)
    assert x.max() == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= y.min() and y.max() <= 1.0
    # centred vertically
    assert y.min() == pytest.approx(1.0 - y.max(), abs=1e-12)


def test_zero_uv_power_is_invisible():
    t = render_parametric(replace(STANDARD_CONDITION, uv_power=0.0), 32)
    assert np.all(t.alpha == 0)


def test_small_size_rejected():
    with pytest.raises(InvalidInputError):
        render_parametric(STANDARD_CONDITION, 7)


def test_power_monotone_and_saturation():
    lo = fluorescence_intensity(replace(STANDARD_CONDITION, uv_power=40))
    hi = fluorescence_intensity(replace(STANDARD_CONDITION, uv_power=120))
    assert hi >= lo
    near = render_parametric(replace(STANDARD_CONDITION, uv_distance=1.0), 32)
    far = render_parametric(replace(STANDARD_CONDITION, uv_distance=5.0), 32)
    assert np.array_equal(near.raster, far.raster)


conditions = st.builds(
    EnvironmentCondition,
    ambient_lux=st.floats(0, 5000),
    uv_power=st.floats(0, 200),
    uv_distance=st.floats(0.1, 30),
    camera_distance=st.floats(0, 50),
    weather=st.sampled_from(WEATHERS),
)


@settings(max_examples=40, deadline=None)
@given(conditions)
def test_alpha_zero_outside_silhouette(cond):
    t = render_parametric(cond, 24)
    outside = HEART.coverage(24) == 0
    assert np.all(t.alpha[outside] == 0)
    assert t.alpha.min() >= 0 and t.alpha.max() <= 1
    assert t.rgb.min() >= 0 and t.rgb.max() <= 255


@given(conditions, st.floats(0, 200), st.floats(0.1, 30), st.floats(0, 5000))
def test_visibility_monotone(cond, p2, d2, lux2):
    up = replace(cond, uv_power=max(cond.uv_power, p2))
    assert fluorescence_intensity(up) >= fluorescence_intensity(cond)
    further = replace(cond, uv_distance=max(cond.uv_distance, d2))
    assert fluorescence_intensity(further) <= fluorescence_intensity(cond)
    brighter = replace(cond, ambient_lux=max(cond.ambient_lux, lux2))
    assert visibility(brighter) <= visibility(cond)


def test_interpolate_examples():
    a = solid((200, 0, 0, 1.0))
    b = solid((100, 0, 0, 0.5))
    assert np.array_equal(interpolate(a, b, 0.0).raster, a.raster)
    assert np.array_equal(interpolate(a, b, 1.0).raster, b.raster)
    mid = interpolate(a, b, 0.5)
    assert np.allclose(mid.raster[0, 0], (150, 0, 0, 0.75))
    assert mid.provenance == "interpolated"


def test_interpolate_errors():
    with pytest.raises(InvalidInputError):
        interpolate(solid((1, 1, 1, 1), 4), solid((1, 1, 1, 1), 5), 0.5)
    with pytest.raises(InvalidInputError):
        interpolate(solid((1, 1, 1, 1)), solid((1, 1, 1, 1)), 1.5)


@given(st.floats(0, 1))
def test_interpolate_symmetry(t):
    a = render_parametric(EnvironmentCondition(300, 40, 5, 5, "sunny"), 16)
    b = render_parametric(EnvironmentCondition(3000, 120, 2, 5, "rainy"), 16)
    assert np.allclose(interpolate(a, b, t).raster, interpolate(b, a, 1 - t).raster, atol=1e-9)


@pytest.mark.parametrize("n,steps,expected", [(2, 3, 5), (4, 0, 4), (3, 2, 7)])
def test_trigger_set_length(n, steps, expected):
    conds = [EnvironmentCondition(300 + 100 * i, 40 + 10 * i) for i in range(n)]
    out = build_trigger_set(conds, steps, size=16)
    assert len(out) == expected == n + steps * (n - 1)
    assert [t.provenance for t in out].count("keyframe") == n


def test_trigger_set_needs_two_conditions():
    with pytest.raises(InvalidInputError):
        build_trigger_set([STANDARD_CONDITION], 2, size=16)


def test_png_roundtrip(tmp_path):
    t = render_parametric(STANDARD_CONDITION, 16)
    t.save_png(tmp_path / "t.png")
    back = TriggerAsset.load_png(tmp_path / "t.png")
    assert np.array_equal(back.to_uint8(), t.to_uint8())


def test_resize_preserves_mean_opacity():
    big = render_parametric(STANDARD_CONDITION, 64)
    small = big.resized(8)
    assert small.size == 8
    assert small.alpha.mean() == pytest.approx(big.alpha.mean(), abs=1e-3)
    assert big.resized(64) is big or np.array_equal(big.resized(64).raster, big.raster)


def test_condition_validation():
    with pytest.raises(InvalidInputError):
        EnvironmentCondition(weather="snowy")
    with pytest.raises(InvalidInputError):
        EnvironmentCondition(uv_power=-1)
