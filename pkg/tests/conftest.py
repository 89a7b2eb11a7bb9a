import numpy as np
import pytest

from cadet.background import (
    build_background_model,
    estimate_prior,
    generate_survey,
)
from cadet.config import ExperimentConfig
from cadet.scoring import fit_cew
from cadet.spectra import EnergySpectrum


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def binning(config):
    return config.binning()


@pytest.fixture(scope="session")
def template(config):
    return config.template()


@pytest.fixture(scope="session")
def window(config):
    return config.window()


@pytest.fixture(scope="session")
def small_survey(config):
    # 1500 s keeps the CEW 10x training rule satisfied (126 predictors)
    # while staying much cheaper than the full hour
    sc = config.survey_config()
    from dataclasses import replace

    return generate_survey(replace(sc, duration_s=1500))


@pytest.fixture(scope="session")
def learned(config, small_survey, window):
    """(background model, CEW model) fitted on the shortened survey."""
    prior = estimate_prior(small_survey)
    model = build_background_model(small_survey, prior, radius_m=config.radius_m)
    cew = fit_cew([o.spectrum for o in small_survey], window)
    return model, cew
