import json
from dataclasses import replace

import numpy as np
import pytest

from cadet.config import METHODS, DEFAULT_BANDS, ExperimentConfig
from cadet.errors import ConfigError


def test_default_bands_and_methods():
    cfg = ExperimentConfig()
    assert cfg.bands == DEFAULT_BANDS
    assert len(cfg.bands) == 6
    assert cfg.bands[0] == (1.0, 2.5)
    assert cfg.bands[-1] == (500.0, 750.0)
    assert cfg.methods == METHODS == ("mBA", "uBA", "mWC", "uWC")
    assert cfg.fpr_target == 0.001
    assert cfg.speed_mps == 10.0
    assert cfg.road_length_m == 200.0


def test_factories_consistent():
    cfg = ExperimentConfig()
    binning = cfg.binning()
    assert binning.n_bins == cfg.n_bins
    window = cfg.window()
    assert window.mass_coverage >= cfg.window_coverage
    mask = cfg.mask()
    assert mask.n_cells == cfg.mask_cells
    tg = cfg.theta_grid_rad()
    assert tg.size == 159  # 1 deg steps strictly inside (-80, 80)
    assert np.all(np.abs(np.rad2deg(tg)) <= 79.0 + 1e-9)
    det = cfg.detector(masked=True)
    assert det.masked and det.n_elements == 100
    grid = cfg.spatial_grid()
    assert grid.along_m[-1] == cfg.road_length_m
    assert grid.offset_m[0] == cfg.offset_min_m
    ig = cfg.intensity_grid()
    assert ig.values.size == 16


def test_band_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(bands=((5.0, 2.0),))
    with pytest.raises(ConfigError):
        ExperimentConfig(bands=((1.0, 5.0), (4.0, 10.0)))
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("mBA", "xx"))
    with pytest.raises(ConfigError):
        ExperimentConfig(fpr_target=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(replicates_per_band=0)


def test_dict_roundtrip():
    cfg = ExperimentConfig(replicates_per_band=7, master_seed=5)
    data = cfg.to_dict()
    assert data["replicates_per_band"] == 7
    back = ExperimentConfig.from_dict(data)
    assert back == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"no_such_key": 1})


def test_from_file_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"replicates_per_band": 3, "master_seed": 99}))
    cfg = ExperimentConfig.from_file(path)
    assert cfg.replicates_per_band == 3
    assert cfg.master_seed == 99
    assert cfg.bands == DEFAULT_BANDS  # unspecified keys keep defaults


def test_from_file_yaml(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("replicates_per_band: 5\nfpr_target: 0.01\n")
    cfg = ExperimentConfig.from_file(path)
    assert cfg.replicates_per_band == 5
    assert cfg.fpr_target == 0.01


def test_from_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(bad)
    garbled = tmp_path / "garbled.json"
    garbled.write_text("{nope")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(garbled)
