"""Experiment configuration: one flat record of every tunable, with
factories for the derived domain objects so wiring lives in one place."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .background import SyntheticSurveyConfig, default_background_shape
from .errors import ConfigError
from .fusion import IntensityGrid, SpatialGrid, make_grid
from .scene import MaskModel, make_mask
from .sensor import DetectorConfig
from .spectra import (
    BinningScheme,
    SourceWindow,
    SpectrumTemplate,
    make_quadratic_binning,
    make_snm_template,
    window_from_template,
)

DEFAULT_BANDS = (
    (1.0, 2.5),
    (5.0, 7.5),
    (10.0, 25.0),
    (50.0, 75.0),
    (100.0, 250.0),
    (500.0, 750.0),
)

METHODS = ("mBA", "uBA", "mWC", "uWC")


@dataclass(frozen=True)
class ExperimentConfig:
    # spectral model
    e_min_kev: float = 30.0
    e_max_kev: float = 3000.0
    n_bins: int = 128
    template_peak_kev: float = 186.0
    template_fwhm_fraction: float = 0.12
    window_coverage: float = 0.90

    # geometry and mask
    mask_seed: int = 362
    mask_cells: int = 37
    mask_open_fraction: float = 0.5
    mask_standoff_m: float = 0.5
    element_width_m: float = 0.05
    theta_grid_deg: float = 1.0
    theta_max_deg: float = 80.0
    speed_mps: float = 10.0
    road_length_m: float = 200.0

    # detector
    efficiency: float = 0.5

    # synthetic survey and background model
    survey_seed: int = 11
    survey_duration_s: int = 3600
    base_rate_total: float = 10000.0
    spatial_modulators: tuple = ((0.15, 100.0, 0.9), (0.08, 55.0, 2.3))
    radius_m: float = 20.0

    # experiment
    bands: tuple = DEFAULT_BANDS
    replicates_per_band: int = 2000
    master_seed: int = 20230817
    methods: tuple = METHODS
    fpr_target: float = 0.001
    offset_min_m: float = 1.0
    offset_max_m: float = 40.0
    grid_step_m: float = 1.0
    intensity_grid_points: int = 16
    intensity_grid_lo_uci: float = 0.5
    intensity_grid_hi_uci: float = 1500.0
    noise_floor_counts: float = 1.0
    detection_halfwidth_m: float = 10.0

    def __post_init__(self):
        bands = tuple((float(lo), float(hi)) for lo, hi in self.bands)
        for lo, hi in bands:
            if not 0 < lo < hi:
                raise ConfigError(f"band ({lo}, {hi}) must satisfy 0 < lo < hi")
        for (_, hi), (lo2, _) in zip(bands, bands[1:]):
            if hi > lo2:
                raise ConfigError("bands must be nonoverlapping and increasing")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(
            self,
            "spatial_modulators",
            tuple((float(a), float(w), float(p)) for a, w, p in self.spatial_modulators),
        )
        methods = tuple(self.methods)
        unknown = set(methods) - set(METHODS)
        if unknown or not methods:
            raise ConfigError(
                f"methods must be a nonempty subset of {METHODS}, got {self.methods}"
            )
        object.__setattr__(self, "methods", methods)
        if self.replicates_per_band < 1:
            raise ConfigError("replicates_per_band must be >= 1")
        if not 0 < self.fpr_target < 1:
            raise ConfigError("fpr_target must be in (0, 1)")
        if not 0 < self.offset_min_m < self.offset_max_m:
            raise ConfigError("offset range must satisfy 0 < min < max")

    # derived objects

    def binning(self) -> BinningScheme:
        return make_quadratic_binning(self.e_min_kev, self.e_max_kev, self.n_bins)

    def template(self, binning: BinningScheme | None = None) -> SpectrumTemplate:
        return make_snm_template(
            binning or self.binning(),
            peak_kev=self.template_peak_kev,
            fwhm_fraction=self.template_fwhm_fraction,
        )

    def window(self, template: SpectrumTemplate | None = None) -> SourceWindow:
        return window_from_template(
            template or self.template(), coverage=self.window_coverage
        )

    def mask(self) -> MaskModel:
        return make_mask(
            n_cells=self.mask_cells,
            open_fraction=self.mask_open_fraction,
            mask_standoff_m=self.mask_standoff_m,
            cell_pitch_m=self.element_width_m,
            seed=self.mask_seed,
        )

    def detector(self, masked: bool) -> DetectorConfig:
        return DetectorConfig(
            element_area_m2=self.element_width_m**2,
            efficiency=self.efficiency,
            masked=masked,
        )

    def theta_grid_rad(self) -> np.ndarray:
        # open interval: the extreme bearings are never hypothesized
        degs = np.arange(
            -self.theta_max_deg + self.theta_grid_deg,
            self.theta_max_deg - self.theta_grid_deg / 2,
            self.theta_grid_deg,
        )
        return np.deg2rad(degs)

    def survey_config(self, binning: BinningScheme | None = None) -> SyntheticSurveyConfig:
        return SyntheticSurveyConfig(
            road_length_m=self.road_length_m,
            duration_s=self.survey_duration_s,
            speed_mps=self.speed_mps,
            base_rate_total=self.base_rate_total,
            base_shape=default_background_shape(binning or self.binning()),
            spatial_modulators=self.spatial_modulators,
            seed=self.survey_seed,
        )

    def spatial_grid(self) -> SpatialGrid:
        return make_grid(
            self.road_length_m,
            offset_min_m=self.offset_min_m,
            offset_max_m=self.offset_max_m,
            step_m=self.grid_step_m,
        )

    def intensity_grid(self) -> IntensityGrid:
        return IntensityGrid(
            values=np.geomspace(
                self.intensity_grid_lo_uci,
                self.intensity_grid_hi_uci,
                self.intensity_grid_points,
            )
        )

    # serialization

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["bands"] = [list(b) for b in self.bands]
        out["spatial_modulators"] = [list(m) for m in self.spatial_modulators]
        out["methods"] = list(self.methods)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            if path.suffix.lower() in (".yaml", ".yml"):
                data = yaml.safe_load(text)
            else:
                data = json.loads(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping at top level")
        return cls.from_dict(data)
