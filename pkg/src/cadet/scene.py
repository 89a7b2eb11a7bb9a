"""Drive-by geometry: trajectory, source placement, exposure, and the
coded-aperture mask.

Coordinates: the road is the 1-D ``along`` axis (m); sources sit at a
perpendicular ``offset`` (m) from it. The detector array is a 10 x 10
grid of square elements; columns are indexed along the road, so all ten
elements of a column share one mask coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

#: Photon emissions per second per microcurie (one photon per decay).
GAMMAS_PER_UCI = 3.7e4


@dataclass(frozen=True)
class Trajectory:
    """Vehicle poses at 1 s ticks: (time s, position m along road)."""

    times: np.ndarray
    positions: np.ndarray
    speed: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        if t.shape != p.shape or t.ndim != 1:
            raise ParameterError("times and positions must be matching 1-D arrays")
        if t.size >= 2 and not np.allclose(np.diff(t), 1.0):
            raise ParameterError("poses must be spaced at 1 s ticks")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    @property
    def n_poses(self) -> int:
        return self.times.size


def drive_by_trajectory(span_m: float, speed_mps: float) -> Trajectory:
    """Constant-speed pass along the road starting at position 0."""
    if span_m <= 0 or speed_mps <= 0:
        raise ParameterError("span and speed must be positive")
    n = int(math.ceil(span_m / speed_mps))
    t = np.arange(n, dtype=float)
    return Trajectory(times=t, positions=t * speed_mps, speed=speed_mps)


@dataclass(frozen=True)
class SourcePlacement:
    """A candidate threat source beside the road."""

    along_m: float
    offset_m: float
    intensity_uci: float

    def __post_init__(self):
        if not (1.0 <= self.offset_m <= 40.0):
            raise ParameterError("offset must lie in [1, 40] m")
        if not self.intensity_uci >= 0:
            raise ParameterError("intensity must be nonnegative")


def sample_placement(
    rng: np.random.Generator,
    road_span: tuple[float, float],
    band: tuple[float, float],
    offset_range: tuple[float, float] = (1.0, 40.0),
) -> SourcePlacement:
    """Uniform placement: along ~ U(road span), offset ~ U(1, 40) m,
    intensity ~ U(band)."""
    lo, hi = band
    if not lo < hi:
        raise ParameterError(f"intensity band ({lo}, {hi}) must have lo < hi")
    return SourcePlacement(
        along_m=float(rng.uniform(road_span[0], road_span[1])),
        offset_m=float(rng.uniform(offset_range[0], offset_range[1])),
        intensity_uci=float(rng.uniform(lo, hi)),
    )


def source_geometry(pose_position_m: float, along_m: float, offset_m) -> tuple:
    """Distance (m) and bearing (rad) from a pose to a source location.

    The bearing is 0 when the source is abeam and positive when it lies
    ahead of the vehicle. Accepts scalars or arrays for the source
    coordinates.
    """
    dx = np.asarray(along_m, dtype=float) - pose_position_m
    off = np.asarray(offset_m, dtype=float)
    d = np.sqrt(dx * dx + off * off)
    if np.any(d <= 0):
        raise ParameterError("degenerate geometry: zero source distance")
    theta = np.arctan2(dx, off)
    if np.isscalar(along_m) and np.isscalar(offset_m):
        return float(d), float(theta)
    return d, theta


def exposure(distance_m, area_m2: float, live_time_s: float = 1.0):
    """Solid-angle fraction intercepted by ``area_m2`` at ``distance_m``,
    times live time: e = t * A / (4 pi d^2)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ParameterError("exposure needs distance > 0")
    e = live_time_s * area_m2 / (4.0 * np.pi * d * d)
    return float(e) if np.isscalar(distance_m) else e


@dataclass(frozen=True)
class MaskModel:
    """Random binary coded-aperture mask in front of the detector array.

    ``pattern[j]`` is 1 where cell j is open. The mask plane sits
    ``mask_standoff_m`` in front of the detector plane; a photon arriving
    at bearing theta crosses the mask laterally shifted by
    standoff * tan(theta) relative to where it hits the detector.
    """

    pattern: np.ndarray
    mask_standoff_m: float
    cell_pitch_m: float
    seed: int

    def __post_init__(self):
        pattern = np.asarray(self.pattern, dtype=np.int8)
        if pattern.ndim != 1 or pattern.size == 0:
            raise ParameterError("mask pattern must be a nonempty 1-D binary array")
        if not np.all((pattern == 0) | (pattern == 1)):
            raise ParameterError("mask pattern must be binary")
        object.__setattr__(self, "pattern", pattern)

    @property
    def n_cells(self) -> int:
        return self.pattern.size

    @property
    def open_fraction(self) -> float:
        return float(self.pattern.mean())

    @property
    def extent_m(self) -> float:
        return self.n_cells * self.cell_pitch_m

    def cell_edges(self) -> np.ndarray:
        """Cell boundaries on the mask plane, centered on the array axis."""
        return (np.arange(self.n_cells + 1) - self.n_cells / 2.0) * self.cell_pitch_m


def make_mask(
    n_cells: int = 37,
    open_fraction: float = 0.5,
    mask_standoff_m: float = 0.5,
    cell_pitch_m: float = 0.05,
    seed: int = 362,
) -> MaskModel:
    """Seeded pseudo-random binary mask with the requested open fraction.

    Exactly round(n_cells * open_fraction) cells are open, so the realized
    fraction is within 1/n_cells of the request.
    """
    if n_cells < 1 or not (0 < open_fraction < 1):
        raise ParameterError("need n_cells >= 1 and open_fraction in (0, 1)")
    n_open = int(round(n_cells * open_fraction))
    n_open = min(max(n_open, 1), n_cells - 1)
    rng = np.random.default_rng(seed)
    pattern = np.zeros(n_cells, dtype=np.int8)
    pattern[rng.permutation(n_cells)[:n_open]] = 1
    return MaskModel(
        pattern=pattern,
        mask_standoff_m=mask_standoff_m,
        cell_pitch_m=cell_pitch_m,
        seed=seed,
    )


def element_column_centers(n_columns: int = 10, element_width_m: float = 0.05) -> np.ndarray:
    """Along-road centers of the detector columns, centered on the array axis."""
    return (np.arange(n_columns) - (n_columns - 1) / 2.0) * element_width_m


def mask_coefficients(
    mask: MaskModel,
    theta_rad,
    n_columns: int = 10,
    n_rows: int = 10,
    element_width_m: float = 0.05,
) -> np.ndarray:
    """Per-element open fractions seen from bearing theta.

    Each element column projects through the mask plane with lateral shift
    s = standoff * tan(theta); the coefficient is the open fraction of the
    mask over the projected element footprint. Projections beyond the mask
    extent count as closed. Elements in the same column share a value.

    Returns shape (n_columns * n_rows,) for scalar theta, else
    (len(theta), n_columns * n_rows).
    """
    theta = np.atleast_1d(np.asarray(theta_rad, dtype=float))
    if np.any(np.abs(theta) >= np.pi / 2):
        raise ParameterError("mask coefficients need |theta| < pi/2")
    shift = mask.mask_standoff_m * np.tan(theta)  # (T,)
    centers = element_column_centers(n_columns, element_width_m)  # (C,)
    half_w = element_width_m / 2.0
    lo = centers[None, :] + shift[:, None] - half_w  # (T, C)
    hi = centers[None, :] + shift[:, None] + half_w

    edges = mask.cell_edges()
    open_cells = np.nonzero(mask.pattern == 1)[0]
    cell_lo = edges[open_cells]  # (O,)
    cell_hi = edges[open_cells + 1]

    # open length of [lo, hi] = sum of overlaps with open cells
    overlap = np.clip(
        np.minimum(hi[:, :, None], cell_hi[None, None, :])
        - np.maximum(lo[:, :, None], cell_lo[None, None, :]),
        0.0,
        None,
    )
    col_coeff = overlap.sum(axis=2) / element_width_m  # (T, C)
    col_coeff = np.clip(col_coeff, 0.0, 1.0)

    full = np.repeat(col_coeff, n_rows, axis=1)  # (T, C*R); column-major element order
    if np.isscalar(theta_rad) or np.ndim(theta_rad) == 0:
        return full[0]
    return full


@dataclass(frozen=True)
class ExposureMatrix:
    """Linear model for one observation at a hypothesized bearing.

    Detector rows are [1, c_i]; two extra rows encode Gaussian priors on
    the background level (mean b0, sd sigma_b) and on the source strength
    (mean 0, sd sigma_s, set very large so the source is unconstrained).
    ``prior_targets`` holds the right-hand-side entries for the two prior
    rows, in whitened units.
    """

    rows: np.ndarray
    prior_targets: np.ndarray
    theta_rad: float

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 2:
            raise ParameterError("exposure matrix must have 2 columns")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "prior_targets", np.asarray(self.prior_targets, dtype=float))

    @property
    def n_detector_rows(self) -> int:
        return self.rows.shape[0] - 2


def build_exposure_matrix(
    coefficients: np.ndarray,
    background_prior: tuple[float, float],
    source_prior_sd: float = 1e6,
    theta_rad: float = 0.0,
) -> ExposureMatrix:
    """Augment the per-element design [1, c_i] with two prior rows.

    background_prior = (b0, sigma_b) adds the row [1/sigma_b, 0] with
    target b0/sigma_b; the source row is [0, 1/sigma_s] with target 0.
    """
    b0, sigma_b = background_prior
    if sigma_b <= 0 or source_prior_sd <= 0:
        raise ParameterError("prior standard deviations must be positive")
    c = np.asarray(coefficients, dtype=float)
    rows = np.empty((c.size + 2, 2))
    rows[:-2, 0] = 1.0
    rows[:-2, 1] = c
    rows[-2] = (1.0 / sigma_b, 0.0)
    rows[-1] = (0.0, 1.0 / source_prior_sd)
    return ExposureMatrix(
        rows=rows,
        prior_targets=np.array([b0 / sigma_b, 0.0]),
        theta_rad=theta_rad,
    )
