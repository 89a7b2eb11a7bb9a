import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadet.errors import ParameterError
from cadet.fusion import (
    FusionContext,
    IntensityGrid,
    ScoreMap,
    ScoreSeries,
    SpatialGrid,
    ba_aggregate,
    ba_loglik_model,
    build_fusion_context,
    default_intensity_grid,
    extract_detection,
    localization_error,
    make_grid,
    wc_aggregate,
    write_score_map_csv,
)
from cadet.scene import GAMMAS_PER_UCI, SourcePlacement, exposure
from cadet.util import logmeanexp


def small_context(theta_grid=None, n_poses=4):
    grid = make_grid(30.0, 1.0, 5.0, 1.0)
    times = np.arange(float(n_poses))
    positions = 10.0 * times
    return build_fusion_context(
        grid,
        times,
        positions,
        array_area_m2=0.25,
        n_elements=100,
        efficiency=0.5,
        window_coverage=0.9,
        theta_grid_rad=theta_grid,
    )


def unmasked_series(rng, context):
    t = context.n_obs
    return ScoreSeries(
        times_s=context.times_s,
        positions_m=context.positions_m,
        s_hat=rng.normal(0.0, 1.0, t),
        b_hat=rng.uniform(20.0, 40.0, t),
        var=rng.uniform(0.5, 2.0, t),
    )


def test_make_grid_axes():
    grid = make_grid(200.0)
    assert grid.along_m[0] == 0.0 and grid.along_m[-1] == 200.0
    assert grid.offset_m[0] == 1.0 and grid.offset_m[-1] == 40.0
    assert grid.shape == (201, 40)
    with pytest.raises(ParameterError):
        SpatialGrid(along_m=np.array([0.0, 1.0]), offset_m=np.array([0.0, 1.0]))
    with pytest.raises(ParameterError):
        make_grid(10.0, step_m=0.0)


def test_intensity_grid_geometric():
    g = default_intensity_grid()
    assert g.values.size == 16
    assert g.values[0] == pytest.approx(0.5)
    assert g.values[-1] == pytest.approx(1500.0)
    ratios = g.values[1:] / g.values[:-1]
    np.testing.assert_allclose(ratios, ratios[0])
    with pytest.raises(ParameterError):
        IntensityGrid(values=np.array([1.0, 1.0]))


def test_context_exposures_match_geometry():
    ctx = small_context()
    # pose at 10 m, cell along=13, offset=4: d = 5
    t, i, j = 1, 13, 3
    assert ctx.exposure_array[t, i, j] == pytest.approx(exposure(5.0, 0.25))
    assert ctx.unit_window_counts_unmasked == pytest.approx(GAMMAS_PER_UCI * 0.5 * 0.9)
    assert ctx.unit_window_counts_masked == pytest.approx(GAMMAS_PER_UCI * 0.5 * 0.9 / 100)
    assert ctx.angle_index is None


def test_context_angle_index_nearest():
    tg = np.deg2rad(np.arange(-80.0, 80.1, 1.0))
    ctx = small_context(theta_grid=tg)
    assert ctx.angle_index.shape == ctx.exposure_array.shape
    t, i, j = 0, 10, 3  # pose 0, cell (10, 4): theta = atan2(10, 4)
    want = np.argmin(np.abs(tg - math.atan2(10.0, 4.0)))
    assert ctx.angle_index[t, i, j] == want
    # beyond the grid ends the index clamps
    assert ctx.angle_index[3, 0, 0] == 0  # far behind: most negative angle


def test_wc_single_observation_identity():
    ctx = small_context(n_poses=1)
    s, b = 3.0, 5.0
    series = ScoreSeries(
        times_s=ctx.times_s,
        positions_m=ctx.positions_m,
        s_hat=np.array([s]),
        b_hat=np.array([b]),
        var=np.array([1.0]),
    )
    out = wc_aggregate(series, ctx)
    np.testing.assert_allclose(out.values, s / math.sqrt(b), rtol=1e-12)
    assert not out.denominator_floored


@given(st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=30, deadline=None)
def test_wc_exposure_rescale_invariance(scale):
    rng = np.random.default_rng(99)
    ctx = small_context()
    series = unmasked_series(rng, ctx)
    base = wc_aggregate(series, ctx)
    scaled_ctx = FusionContext(
        grid=ctx.grid,
        times_s=ctx.times_s,
        positions_m=ctx.positions_m,
        exposure_array=ctx.exposure_array * scale,
        angle_index=ctx.angle_index,
        theta_grid_rad=ctx.theta_grid_rad,
        unit_window_counts_masked=ctx.unit_window_counts_masked,
        unit_window_counts_unmasked=ctx.unit_window_counts_unmasked,
    )
    rescaled = wc_aggregate(series, scaled_ctx)
    np.testing.assert_allclose(rescaled.values, base.values, rtol=1e-12)


def test_wc_matches_direct_formula():
    rng = np.random.default_rng(12)
    ctx = small_context()
    series = unmasked_series(rng, ctx)
    out = wc_aggregate(series, ctx)
    e = ctx.exposure_array
    num = (series.s_hat[:, None, None] / e).sum(axis=0)
    den = (series.b_hat[:, None, None] / e**2).sum(axis=0)
    np.testing.assert_allclose(out.values, num / np.sqrt(den), rtol=1e-12)


def test_wc_denominator_floor_flag():
    ctx = small_context(n_poses=1)
    series = ScoreSeries(
        times_s=ctx.times_s,
        positions_m=ctx.positions_m,
        s_hat=np.array([1.0]),
        b_hat=np.array([0.0]),
        var=np.array([1.0]),
    )
    out = wc_aggregate(series, ctx)
    assert out.denominator_floored
    assert np.all(np.isfinite(out.values))


def test_ba_loglik_model_gaussian():
    lp1, lp0 = ba_loglik_model(np.array([1.5]), None, np.array([2.0]), np.array([0.5]))
    want1 = -0.5 * math.log(4 * math.pi) - (1.5 - 0.5) ** 2 / 4.0
    want0 = -0.5 * math.log(4 * math.pi) - 1.5**2 / 4.0
    assert lp1[0] == pytest.approx(want1, rel=1e-12)
    assert lp0[0] == pytest.approx(want0, rel=1e-12)
    with pytest.raises(ParameterError):
        ba_loglik_model(np.array([1.0]), None, np.array([0.0]), np.array([1.0]))


def test_ba_matches_per_observation_loglr():
    """The sufficient-statistic form must equal the naive per-observation
    Gaussian log likelihood ratio summed over poses and averaged over
    intensities in likelihood space."""
    rng = np.random.default_rng(8)
    ctx = small_context()
    series = unmasked_series(rng, ctx)
    intensities = IntensityGrid(values=np.array([2.0, 20.0, 200.0]))
    out = ba_aggregate(series, ctx, intensities)
    k = ctx.unit_window_counts_unmasked
    want = np.empty(ctx.grid.shape + (3,))
    for n, i_uci in enumerate(intensities.values):
        total = np.zeros(ctx.grid.shape)
        for t in range(ctx.n_obs):
            m = i_uci * k * ctx.exposure_array[t]
            lp1, lp0 = ba_loglik_model(
                series.s_hat[t], series.b_hat[t], series.var[t], m
            )
            total += lp1 - lp0
        want[:, :, n] = total
    np.testing.assert_allclose(out.values, logmeanexp(want, axis=-1), rtol=1e-9)


def test_ba_single_intensity_closed_form():
    ctx = small_context(n_poses=1)
    series = ScoreSeries(
        times_s=ctx.times_s,
        positions_m=ctx.positions_m,
        s_hat=np.array([2.0]),
        b_hat=np.array([30.0]),
        var=np.array([4.0]),
    )
    intensities = IntensityGrid(values=np.array([10.0]))
    out = ba_aggregate(series, ctx, intensities)
    m = 10.0 * ctx.unit_window_counts_unmasked * ctx.exposure_array[0]
    want = (2.0 * m - 0.5 * m**2) / 4.0
    np.testing.assert_allclose(out.values, want, rtol=1e-12)


def test_masked_series_uses_nearest_angle_column():
    tg = np.deg2rad(np.arange(-80.0, 80.1, 1.0))
    ctx = small_context(theta_grid=tg, n_poses=2)
    t_len, n_angles = 2, tg.size
    rng = np.random.default_rng(3)
    s = rng.normal(0.0, 1.0, (t_len, n_angles))
    b = rng.uniform(5.0, 9.0, (t_len, n_angles))
    v = rng.uniform(0.5, 2.0, (t_len, n_angles))
    series = ScoreSeries(
        times_s=ctx.times_s,
        positions_m=ctx.positions_m,
        s_hat=s,
        b_hat=b,
        var=v,
        theta_grid_rad=tg,
    )
    out = wc_aggregate(series, ctx)
    i, j = 7, 2
    idx0 = ctx.angle_index[0, i, j]
    idx1 = ctx.angle_index[1, i, j]
    e0, e1 = ctx.exposure_array[0, i, j], ctx.exposure_array[1, i, j]
    want = (s[0, idx0] / e0 + s[1, idx1] / e1) / math.sqrt(
        b[0, idx0] / e0**2 + b[1, idx1] / e1**2
    )
    assert out.values[i, j] == pytest.approx(want, rel=1e-12)
    # a masked series cannot run against an angle-free context
    with pytest.raises(ParameterError):
        wc_aggregate(series, small_context(n_poses=2))


def test_extract_detection_window_and_ties():
    grid = make_grid(20.0, 1.0, 3.0, 1.0)
    values = np.zeros(grid.shape)
    values[5, 1] = 2.0
    peak = ScoreMap(values=values, method="t", grid=grid)
    score, loc = extract_detection(peak, center_along_m=5.0, halfwidth_m=10.0)
    assert score == 2.0 and loc == (5.0, 2.0)
    # the global max outside the window must not win
    values2 = values.copy()
    values2[19, 0] = 9.0
    score, loc = extract_detection(
        ScoreMap(values=values2, method="t", grid=grid), 5.0, halfwidth_m=10.0
    )
    assert score == 2.0 and loc == (5.0, 2.0)
    # ties: smaller along first, then smaller offset
    flat = ScoreMap(values=np.zeros(grid.shape), method="t", grid=grid)
    score, loc = extract_detection(flat, 10.0, halfwidth_m=3.0)
    assert score == 0.0 and loc == (7.0, 1.0)
    with pytest.raises(ParameterError):
        extract_detection(flat, 1e5, halfwidth_m=1.0)


def test_localization_error_euclidean():
    p = SourcePlacement(along_m=10.0, offset_m=4.0, intensity_uci=1.0)
    assert localization_error((13.0, 8.0), p) == pytest.approx(5.0)


def test_score_map_validation():
    grid = make_grid(5.0, 1.0, 2.0, 1.0)
    with pytest.raises(ParameterError):
        ScoreMap(values=np.zeros((2, 2)), method="t", grid=grid)
    bad = np.zeros(grid.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ParameterError):
        ScoreMap(values=bad, method="t", grid=grid)


def test_score_map_csv(tmp_path):
    grid = make_grid(2.0, 1.0, 2.0, 1.0)
    sm = ScoreMap(values=np.arange(6.0).reshape(3, 2), method="t", grid=grid)
    path = tmp_path / "map.csv"
    write_score_map_csv(path, sm)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "along_m,offset_m,score"
    assert len(lines) == 7
    assert lines[1] == "0.0,1.0,0.0"
    assert lines[-1] == "2.0,2.0,5.0"
