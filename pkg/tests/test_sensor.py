import math

import numpy as np
import pytest

from cadet.errors import ParameterError
from cadet.scene import GAMMAS_PER_UCI, SourcePlacement, make_mask, mask_coefficients
from cadet.sensor import (
    DetectorConfig,
    draw_drive_by_background,
    draw_source_counts,
    observation_at,
    source_mean_counts,
    synthesize_observation,
)


@pytest.fixture(scope="module")
def detectors():
    return DetectorConfig(), DetectorConfig(masked=True)


def test_detector_config_derived():
    det = DetectorConfig()
    assert det.n_elements == 100
    assert det.array_area_m2 == pytest.approx(0.25)
    with pytest.raises(ParameterError):
        DetectorConfig(efficiency=1.5)
    with pytest.raises(ParameterError):
        DetectorConfig(n_columns=0)


def test_source_means_closed_form(template, window, detectors):
    unmasked, _ = detectors
    # abeam at 20 m: d = 20, theta = 0
    p = SourcePlacement(along_m=100.0, offset_m=20.0, intensity_uci=50.0)
    sm = source_mean_counts(p, 100.0, unmasked, template, window)
    per_element = (
        50.0 * GAMMAS_PER_UCI * (1.0 * 0.0025 / (4 * math.pi * 400.0)) * 0.5
    )
    np.testing.assert_allclose(
        sm.element_bin_means,
        per_element * np.outer(np.ones(100), template.mass[window.bins]),
        rtol=1e-12,
    )
    agg = sm.aggregate_bin_means
    assert agg.shape == (128,)
    np.testing.assert_allclose(agg.sum(), 100 * per_element, rtol=1e-12)
    np.testing.assert_allclose(
        sm.element_window_means, per_element * window.mass_coverage, rtol=1e-12
    )


def test_masked_means_scale_by_coefficients(template, window, detectors):
    _, masked = detectors
    mask = make_mask()
    p = SourcePlacement(along_m=110.0, offset_m=15.0, intensity_uci=50.0)
    sm = source_mean_counts(p, 100.0, masked, template, window, mask=mask)
    theta = math.atan2(10.0, 15.0)
    c = mask_coefficients(mask, theta)
    base = (
        50.0
        * GAMMAS_PER_UCI
        * (0.0025 / (4 * math.pi * (10.0**2 + 15.0**2)))
        * 0.5
        * window.mass_coverage
    )
    np.testing.assert_allclose(sm.element_window_means, base * c, rtol=1e-12)
    with pytest.raises(ParameterError):
        source_mean_counts(p, 100.0, masked, template, window, mask=None)


def test_background_draw_shapes_and_invariant(window):
    rng = np.random.default_rng(2)
    rates = np.full((7, 128), 40.0)
    counts = draw_drive_by_background(rng, rates, window)
    assert counts.element_window.shape == (7, 100, window.size)
    assert counts.aggregate.shape == (7, 128)
    # aggregate window bins must equal the element sums exactly
    np.testing.assert_array_equal(
        counts.aggregate[:, window.bins], counts.element_window.sum(axis=1)
    )
    assert counts.element_window_totals().shape == (7, 100)
    with pytest.raises(ParameterError):
        draw_drive_by_background(rng, -rates, window)


def test_draw_determinism_and_order(window):
    rates = np.full((3, 128), 25.0)
    a = draw_drive_by_background(np.random.default_rng(7), rates, window)
    b = draw_drive_by_background(np.random.default_rng(7), rates, window)
    np.testing.assert_array_equal(a.element_window, b.element_window)
    np.testing.assert_array_equal(a.aggregate, b.aggregate)


def test_background_mean_split(window):
    # per-element window means are rates / n_elements
    rng = np.random.default_rng(21)
    rates = np.zeros((1, 128))
    rates[0, window.bins] = 8000.0 / window.size
    draws = [
        draw_drive_by_background(rng, rates, window).element_window.mean()
        for _ in range(50)
    ]
    want = rates[0, window.bins[0]] / 100.0
    assert np.mean(draws) == pytest.approx(want, rel=0.02)


def test_source_plus_background_sum(template, window, detectors):
    unmasked, _ = detectors
    rng = np.random.default_rng(5)
    rates = np.full((2, 128), 30.0)
    p = SourcePlacement(along_m=10.0, offset_m=5.0, intensity_uci=400.0)
    means = [
        source_mean_counts(p, pos, unmasked, template, window) for pos in (0.0, 10.0)
    ]
    bg = draw_drive_by_background(rng, rates, window)
    src = draw_source_counts(rng, means)
    both = bg.add(src)
    np.testing.assert_array_equal(
        both.aggregate[:, window.bins], both.element_window.sum(axis=1)
    )
    np.testing.assert_array_equal(both.aggregate, bg.aggregate + src.aggregate)


def test_observation_extraction(window):
    rng = np.random.default_rng(4)
    rates = np.full((3, 128), 50.0)
    counts = draw_drive_by_background(rng, rates, window)
    obs = observation_at(counts, 1, time_s=1.0, position_m=10.0)
    assert obs.element_window_counts.shape == (100,)
    np.testing.assert_array_equal(
        obs.element_window_counts, counts.element_window[1].sum(axis=1)
    )
    np.testing.assert_array_equal(obs.aggregate_spectrum.counts, counts.aggregate[1])
    assert (
        obs.aggregate_spectrum.counts[window.bins].sum()
        == obs.element_window_counts.sum()
    )


def test_synthesize_observation_matches_means(template, window, detectors):
    # strong source, weak background: totals should land near the model mean
    unmasked, _ = detectors
    p = SourcePlacement(along_m=0.0, offset_m=5.0, intensity_uci=2000.0)
    sm = source_mean_counts(p, 0.0, unmasked, template, window)
    rates = np.full(128, 1.0)
    totals = []
    rng = np.random.default_rng(11)
    for _ in range(200):
        obs = synthesize_observation(rng, rates, window, source=sm)
        totals.append(obs.element_window_counts.sum())
    want = sm.element_window_means.sum() + window.size * 1.0
    got = np.mean(totals)
    assert abs(got - want) < 4 * math.sqrt(want / 200)
