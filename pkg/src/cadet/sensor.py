"""Observation synthesis: Poisson background plus injected source counts.

Both detector modes share one physical model. Background arrives
isotropically and splits uniformly across the 100 elements, so the mask
does not modulate it; source photons arrive from one direction and are
attenuated per element by the mask coefficients in masked mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .scene import (
    GAMMAS_PER_UCI,
    MaskModel,
    SourcePlacement,
    exposure,
    mask_coefficients,
    source_geometry,
)
from .spectra import EnergySpectrum, SourceWindow, SpectrumTemplate


@dataclass(frozen=True)
class DetectorConfig:
    """Array geometry and the single-scalar response model."""

    n_columns: int = 10
    n_rows: int = 10
    element_area_m2: float = 0.0025
    efficiency: float = 0.5  # in-window photopeak efficiency, flat
    masked: bool = False

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ParameterError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if self.n_columns < 1 or self.n_rows < 1 or self.element_area_m2 <= 0:
            raise ParameterError("detector geometry must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_columns * self.n_rows

    @property
    def array_area_m2(self) -> float:
        return self.n_elements * self.element_area_m2


@dataclass(frozen=True)
class Observation:
    """One second of data: per-element window counts and the aggregate
    spectrum. The window counts of the aggregate equal the element sum."""

    time_s: float
    position_m: float
    element_window_counts: np.ndarray  # (n_elements,) counts inside the window
    aggregate_spectrum: EnergySpectrum

    def __post_init__(self):
        counts = np.asarray(self.element_window_counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ParameterError("element window counts must be nonnegative")
        object.__setattr__(self, "element_window_counts", counts)


@dataclass(frozen=True)
class SourceMeans:
    """Expected source counts for one pose, at per-bin resolution.

    element_bin_means[i, j] is element i's mean in the j-th window bin;
    aggregate_out_means[j] is the array total in the j-th out-of-window
    bin. Window-bin aggregates are the element sums.
    """

    element_bin_means: np.ndarray  # (n_elements, window size)
    aggregate_out_means: np.ndarray  # (n_bins - window size,)
    window: SourceWindow
    n_bins: int

    @property
    def element_window_means(self) -> np.ndarray:
        """Per-element mean counts summed over the window: 100-vector."""
        return self.element_bin_means.sum(axis=1)

    @property
    def aggregate_bin_means(self) -> np.ndarray:
        """Array-level mean counts for every bin."""
        out = np.zeros(self.n_bins)
        out[self.window.bins] = self.element_bin_means.sum(axis=0)
        out[self.window.out_of_window(self.n_bins)] = self.aggregate_out_means
        return out


def source_mean_counts(
    placement: SourcePlacement,
    pose_position_m: float,
    config: DetectorConfig,
    template: SpectrumTemplate,
    window: SourceWindow,
    mask: MaskModel | None = None,
    live_time_s: float = 1.0,
) -> SourceMeans:
    """Expected source counts at one pose.

    Emission is one photon per decay: rate = intensity * 3.7e4 /s. Each
    element's mean in bin k is rate * exposure(d, element_area) *
    efficiency * mass[k], times the mask coefficient at the true source
    angle in masked mode.
    """
    if config.masked and mask is None:
        raise ParameterError("masked detector config requires a mask model")
    d, theta = source_geometry(pose_position_m, placement.along_m, placement.offset_m)
    rate = placement.intensity_uci * GAMMAS_PER_UCI
    per_element = rate * exposure(d, config.element_area_m2, live_time_s) * config.efficiency
    if config.masked:
        c = mask_coefficients(
            mask, theta, n_columns=config.n_columns, n_rows=config.n_rows
        )
    else:
        c = np.ones(config.n_elements)
    n_bins = template.mass.size
    mass_window = template.mass[window.bins]
    mass_out = template.mass[window.out_of_window(n_bins)]
    return SourceMeans(
        element_bin_means=np.outer(per_element * c, mass_window),
        aggregate_out_means=per_element * c.sum() * mass_out,
        window=window,
        n_bins=n_bins,
    )


@dataclass(frozen=True)
class DriveByCounts:
    """Counts for a whole pass: (T, n_elements, window size) at element
    resolution inside the window, (T, n_bins) aggregate."""

    element_window: np.ndarray
    aggregate: np.ndarray
    window: SourceWindow

    @property
    def n_obs(self) -> int:
        return self.aggregate.shape[0]

    def element_window_totals(self) -> np.ndarray:
        """(T, n_elements) counts per element summed over window bins."""
        return self.element_window.sum(axis=2)

    def add(self, other: "DriveByCounts") -> "DriveByCounts":
        # window bins of `aggregate` are element sums on both sides, so
        # plain addition preserves the consistency invariant
        return DriveByCounts(
            element_window=self.element_window + other.element_window,
            aggregate=self.aggregate + other.aggregate,
            window=self.window,
        )


def draw_drive_by_background(
    rng: np.random.Generator,
    rates: np.ndarray,
    window: SourceWindow,
    n_elements: int = 100,
) -> DriveByCounts:
    """Poisson background for a (T, n_bins) rate sequence.

    Window bins are drawn per element (mean rate/n_elements each);
    out-of-window bins are drawn at array level, which has the same
    distribution as summing per-element draws. Draw order is fixed:
    element-window block first, then the out-of-window block.
    """
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    if np.any(rates < 0):
        raise ParameterError("background rates must be nonnegative")
    t_len, n_bins = rates.shape
    oow = window.out_of_window(n_bins)
    elem_means = np.broadcast_to(
        rates[:, None, window.bins] / n_elements, (t_len, n_elements, window.size)
    )
    element_window = rng.poisson(elem_means)
    aggregate = np.zeros((t_len, n_bins), dtype=np.int64)
    aggregate[:, window.bins] = element_window.sum(axis=1)
    aggregate[:, oow] = rng.poisson(rates[:, oow])
    return DriveByCounts(element_window=element_window, aggregate=aggregate, window=window)


def draw_source_counts(
    rng: np.random.Generator, means: list[SourceMeans]
) -> DriveByCounts:
    """Poisson source counts for one pass from per-pose means. Same draw
    order as the background: element-window block, then out-of-window."""
    if not means:
        raise ParameterError("need at least one pose of source means")
    window = means[0].window
    n_bins = means[0].n_bins
    elem_means = np.stack([m.element_bin_means for m in means])
    out_means = np.stack([m.aggregate_out_means for m in means])
    element_window = rng.poisson(elem_means)
    aggregate = np.zeros((len(means), n_bins), dtype=np.int64)
    aggregate[:, window.bins] = element_window.sum(axis=1)
    aggregate[:, window.out_of_window(n_bins)] = rng.poisson(out_means)
    return DriveByCounts(element_window=element_window, aggregate=aggregate, window=window)


def observation_at(
    counts: DriveByCounts, index: int, time_s: float, position_m: float
) -> Observation:
    return Observation(
        time_s=time_s,
        position_m=position_m,
        element_window_counts=counts.element_window[index].sum(axis=1),
        aggregate_spectrum=EnergySpectrum(
            counts=counts.aggregate[index], live_time=1.0
        ),
    )


def synthesize_observation(
    rng: np.random.Generator,
    background_rates: np.ndarray,
    window: SourceWindow,
    source: SourceMeans | None = None,
    n_elements: int = 100,
    time_s: float = 0.0,
    position_m: float = 0.0,
) -> Observation:
    """Single-pose synthesis: background draw plus an optional injected
    source draw on top."""
    counts = draw_drive_by_background(
        rng, np.asarray(background_rates)[None, :], window, n_elements
    )
    if source is not None:
        counts = counts.add(draw_source_counts(rng, [source]))
    return observation_at(counts, 0, time_s, position_m)
