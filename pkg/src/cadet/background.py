"""Synthetic background survey generation and the learned background model.

The model stores one vector of per-bin rates for each surveyed road
position. Rates are maximum a posteriori estimates under a Poisson count
likelihood and a multivariate Gaussian prior whose mean and covariance
come from the whole survey; each position's estimate uses only the
observations within a fixed along-road radius, so the model behaves like
a moving average that preserves systematic spatial variation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, DataError, NumericError, ParameterError
from .spectra import BinningScheme, EnergySpectrum, SpectrumTemplate

DEFAULT_RADIUS_M = 20.0

# Covariance shrinkage: pull 10% toward the diagonal, then add a small
# ridge so a finite-sample 128 x 128 covariance is safely invertible.
SHRINKAGE_GAMMA = 0.1
RIDGE_SCALE = 1e-6


@dataclass(frozen=True)
class SurveyObservation:
    """One second of aggregate-array data at a known road position."""

    position_m: float
    timestamp_s: float
    spectrum: EnergySpectrum

    def __post_init__(self):
        if not np.isfinite(self.position_m):
            raise ParameterError("observation position must be finite")


@dataclass(frozen=True)
class RatePrior:
    """Gaussian prior over per-bin rates: sample mean and shrunk covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ParameterError("covariance shape must match mean")
        if not np.allclose(cov, cov.T):
            raise ParameterError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def n_bins(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class BackgroundModel:
    """Per-location MAP rate vectors plus the prior they were fit under."""

    locations_m: np.ndarray  # sorted unique road positions
    rates: np.ndarray  # (n_locations, n_bins), all > 0
    prior: RatePrior
    radius_m: float = DEFAULT_RADIUS_M

    def __post_init__(self):
        loc = np.asarray(self.locations_m, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if rates.shape != (loc.size, self.prior.n_bins):
            raise ParameterError("rates shape must be (n_locations, n_bins)")
        if self.radius_m <= 0:
            raise ParameterError("radius must be positive")
        object.__setattr__(self, "locations_m", loc)
        object.__setattr__(self, "rates", rates)

    @property
    def n_locations(self) -> int:
        return self.locations_m.size


@dataclass(frozen=True)
class SyntheticSurveyConfig:
    """Seeded stand-in for an empirical mobile survey.

    The true rate at road position p is
    base_shape * base_rate_total * (1 + sum_j a_j sin(2 pi p / l_j + phi_j))
    and counts are Poisson draws per bin. The vehicle loops the road at
    constant speed, one observation per second.
    """

    road_length_m: float
    duration_s: int
    speed_mps: float
    base_rate_total: float
    base_shape: np.ndarray  # unit-sum spectral shape of the background
    spatial_modulators: tuple = ()  # (amplitude fraction, wavelength m, phase rad)
    seed: int = 0

    def __post_init__(self):
        shape = np.asarray(self.base_shape, dtype=float)
        if np.any(shape < 0) or abs(shape.sum() - 1.0) > 1e-9:
            raise ConfigError("base_shape must be nonnegative with unit sum")
        if self.base_rate_total <= 0:
            raise ConfigError("base_rate_total must be positive")
        if self.road_length_m <= 0 or self.speed_mps <= 0 or self.duration_s < 1:
            raise ConfigError("road_length, speed, and duration must be positive")
        amp_sum = sum(abs(a) for a, _, _ in self.spatial_modulators)
        if amp_sum >= 1.0:
            raise ConfigError(
                f"modulator amplitudes sum to {amp_sum:.3f} >= 1; rates would go nonpositive"
            )
        object.__setattr__(self, "base_shape", shape)
        object.__setattr__(self, "spatial_modulators", tuple(self.spatial_modulators))

    def modulation(self, position_m) -> np.ndarray:
        """Multiplicative spatial factor 1 + sum_j a_j sin(2 pi p / l_j + phi_j)."""
        p = np.asarray(position_m, dtype=float)
        m = np.ones_like(p)
        for a, wavelength, phase in self.spatial_modulators:
            m = m + a * np.sin(2.0 * np.pi * p / wavelength + phase)
        return m

    def true_rates(self, position_m: float) -> np.ndarray:
        """Noise-free per-bin rates at a road position (counts/s)."""
        return self.base_shape * self.base_rate_total * float(self.modulation(position_m))


def default_background_shape(binning: BinningScheme) -> np.ndarray:
    """Falling-continuum background shape: steep exponential in energy with
    a flat tail floor, integrated per bin and normalized to unit sum."""
    pdf = np.exp(-binning.centers / 22.0) + 2.5e-4
    weights = pdf * binning.widths
    return weights / weights.sum()


def generate_survey(config: SyntheticSurveyConfig) -> list[SurveyObservation]:
    """Simulate the survey: the vehicle loops the road, recording one
    aggregate spectrum per second; fully determined by the seed."""
    rng = np.random.default_rng(config.seed)
    t = np.arange(config.duration_s, dtype=float)
    positions = np.mod(t * config.speed_mps, config.road_length_m)
    modulation = config.modulation(positions)
    if np.any(modulation <= 0):
        raise ConfigError("spatial modulation drives the rate nonpositive")
    means = modulation[:, None] * (config.base_rate_total * config.base_shape)[None, :]
    counts = rng.poisson(means)
    return [
        SurveyObservation(
            position_m=float(positions[i]),
            timestamp_s=float(t[i]),
            spectrum=EnergySpectrum(counts=counts[i], live_time=1.0),
        )
        for i in range(config.duration_s)
    ]


def _counts_matrix(observations) -> tuple[np.ndarray, np.ndarray]:
    """Stack observation counts into (n_obs, n_bins) plus live times."""
    counts = np.stack([o.spectrum.counts for o in observations]).astype(float)
    live = np.array([o.spectrum.live_time for o in observations], dtype=float)
    return counts, live


def estimate_prior(observations) -> RatePrior:
    """Sample mean and shrunk sample covariance of per-second rates.

    Shrinkage: S <- (1 - gamma) S + gamma diag(S) + eps I with
    eps = 1e-6 * mean(diag S); a positive floor on eps keeps the matrix
    positive-definite even for degenerate (constant) inputs.
    """
    observations = list(observations)
    if len(observations) < 2:
        raise DataError(f"prior estimation needs >= 2 observations, got {len(observations)}")
    counts, live = _counts_matrix(observations)
    rates = counts / live[:, None]
    mean = rates.mean(axis=0)
    cov = np.cov(rates, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    diag = np.diag(np.diag(cov))
    shrunk = (1.0 - SHRINKAGE_GAMMA) * cov + SHRINKAGE_GAMMA * diag
    eps = RIDGE_SCALE * float(np.mean(np.diag(cov)))
    if eps <= 0:
        eps = RIDGE_SCALE
    shrunk = shrunk + eps * np.eye(mean.size)
    return RatePrior(mean=mean, covariance=shrunk)


def map_objective(
    lam: np.ndarray, counts_total: np.ndarray, live_total: float, prior: RatePrior
) -> float:
    """Log-posterior (up to constants): Poisson likelihood + Gaussian prior.

    f(lam) = sum_k [x_k ln lam_k - lam_k T] - (lam - mu)' Sigma^-1 (lam - mu) / 2
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        return -np.inf
    x = counts_total
    loglik = float(np.sum(np.where(x > 0, x * np.log(lam), 0.0)) - live_total * lam.sum())
    resid = lam - prior.mean
    factor = cho_factor(prior.covariance, lower=True)
    quad = float(resid @ cho_solve(factor, resid))
    return loglik - 0.5 * quad


def _map_gradient(lam, counts_total, live_total, precision_apply):
    return counts_total / lam - live_total - precision_apply(lam)


def map_rates(
    neighborhood,
    prior: RatePrior,
    tol_rel: float = 1e-8,
    max_iter: int = 200,
) -> np.ndarray:
    """MAP rate vector for a neighborhood of observations.

    Maximizes the Poisson log likelihood of the summed counts plus the
    Gaussian log prior by damped Newton iteration. Steps are halved until
    they both stay strictly positive and do not decrease the objective.
    Converged when the gradient inf-norm falls below tol_rel times its
    initial magnitude (floored at tol_rel absolute).

    Bins whose unconstrained optimum would be nonpositive (possible only
    when they saw zero counts) are held at a tiny positive floor and
    excluded from the gradient criterion.
    """
    observations = list(neighborhood)
    if not observations:
        raise DataError("map_rates needs a nonempty neighborhood")
    counts, live = _counts_matrix(observations)
    x = counts.sum(axis=0)
    t_total = float(live.sum())

    factor = cho_factor(prior.covariance, lower=True)

    def precision_apply(v):
        return cho_solve(factor, v - prior.mean)

    def objective(lam):
        if np.any(lam <= 0):
            return -np.inf
        loglik = float(np.sum(np.where(x > 0, x * np.log(lam), 0.0)) - t_total * lam.sum())
        resid = lam - prior.mean
        return loglik - 0.5 * float(resid @ cho_solve(factor, resid))

    floor = 1e-12 * max(float(prior.mean.max()), 1.0)
    lam = 0.5 * (np.maximum(prior.mean, floor) + (x + 0.5) / t_total)
    lam = np.maximum(lam, floor)

    g = _map_gradient(lam, x, t_total, precision_apply)
    tol = tol_rel * max(1.0, float(np.max(np.abs(g))))
    f = objective(lam)
    sigma_inv = np.linalg.inv(prior.covariance)

    for _ in range(max_iter):
        at_floor = (lam <= floor * (1 + 1e-9)) & (g < 0)
        g_eff = np.where(at_floor, 0.0, g)
        if float(np.max(np.abs(g_eff))) <= tol:
            return lam
        hess = sigma_inv + np.diag(x / lam**2)  # negative Hessian; positive-definite
        step = np.linalg.solve(hess, g)
        # near the optimum true improvements fall below the objective's ulp,
        # so accept anything within float noise of no change
        slack = 1e-12 * (1.0 + abs(f))
        alpha = 1.0
        for _ in range(60):
            trial = np.maximum(lam + alpha * step, floor)
            f_trial = objective(trial)
            if f_trial >= f - slack:
                break
            alpha *= 0.5
        else:
            break
        lam, f = trial, f_trial
        g = _map_gradient(lam, x, t_total, precision_apply)

    at_floor = (lam <= floor * (1 + 1e-9)) & (g < 0)
    g_eff = np.where(at_floor, 0.0, g)
    gnorm = float(np.max(np.abs(g_eff)))
    if gnorm > tol:
        raise NumericError(
            f"MAP Newton did not converge: gradient inf-norm {gnorm:.3e} > tol {tol:.3e}"
        )
    return lam


def build_background_model(
    observations,
    prior: RatePrior,
    radius_m: float = DEFAULT_RADIUS_M,
) -> BackgroundModel:
    """Fit MAP rates at every surveyed position from the observations
    within ``radius_m`` along the road.

    Positions are deduplicated: repeated traversals of the same spot share
    one neighborhood and one rate vector, which also makes the result
    independent of observation order.
    """
    observations = list(observations)
    if not observations:
        raise DataError("cannot build a background model from zero observations")
    if radius_m <= 0:
        raise ParameterError("radius must be positive")
    positions = np.array([o.position_m for o in observations])
    order = np.argsort(positions, kind="stable")
    positions = positions[order]
    observations = [observations[i] for i in order]
    unique_pos = np.unique(positions)

    rates = np.empty((unique_pos.size, prior.n_bins))
    for i, pos in enumerate(unique_pos):
        lo = np.searchsorted(positions, pos - radius_m, side="left")
        hi = np.searchsorted(positions, pos + radius_m, side="right")
        rates[i] = map_rates(observations[lo:hi], prior)
    return BackgroundModel(
        locations_m=unique_pos, rates=rates, prior=prior, radius_m=radius_m
    )


def rates_at(model: BackgroundModel, position_m: float) -> np.ndarray:
    """Rates of the stored location nearest to ``position_m``; ties break
    toward the smaller position, queries beyond the ends clamp."""
    loc = model.locations_m
    idx = int(np.searchsorted(loc, position_m))
    if idx == 0:
        return model.rates[0]
    if idx >= loc.size:
        return model.rates[-1]
    left, right = loc[idx - 1], loc[idx]
    # strict inequality: equidistant queries take the smaller position
    if position_m - left <= right - position_m:
        return model.rates[idx - 1]
    return model.rates[idx]


# ---------------------------------------------------------------------------
# serialization


def write_survey_csv(path, observations) -> None:
    """Survey CSV: header t_s,pos_m,c0,...,c<n-1>; one row per second."""
    observations = list(observations)
    if not observations:
        raise DataError("refusing to write an empty survey")
    n_bins = observations[0].spectrum.n_bins
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "pos_m"] + [f"c{k}" for k in range(n_bins)])
        for obs in observations:
            writer.writerow(
                [f"{obs.timestamp_s:g}", repr(float(obs.position_m))]
                + [str(int(c)) for c in obs.spectrum.counts]
            )


def read_survey_csv(path) -> list[SurveyObservation]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read survey {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["t_s", "pos_m"]:
            raise DataError(f"{path}: not a survey CSV (header must start t_s,pos_m)")
        n_bins = len(header) - 2
        out = []
        for row in reader:
            if len(row) != n_bins + 2:
                raise DataError(f"{path}: row with {len(row)} fields, expected {n_bins + 2}")
            out.append(
                SurveyObservation(
                    position_m=float(row[1]),
                    timestamp_s=float(row[0]),
                    spectrum=EnergySpectrum(
                        counts=np.array([int(v) for v in row[2:]], dtype=np.int64),
                        live_time=1.0,
                    ),
                )
            )
    if not out:
        raise DataError(f"{path}: survey contains no observations")
    return out


def save_model(path, model: BackgroundModel, extra: dict | None = None) -> None:
    """Write the model as JSON: prior mean/covariance, locations, rates,
    radius, plus any extra sections (e.g. a trained scorer)."""
    doc = {
        "format": "cadet-background-model",
        "version": 1,
        "n_bins": model.prior.n_bins,
        "radius_m": model.radius_m,
        "prior": {
            "mean": model.prior.mean.tolist(),
            "covariance": model.prior.covariance.tolist(),
        },
        "locations_m": model.locations_m.tolist(),
        "rates": model.rates.tolist(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> tuple[BackgroundModel, dict]:
    """Read a model file; returns the model and the raw document (for any
    extra sections saved alongside it)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse model {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != "cadet-background-model":
        raise DataError(f"{path}: not a cadet background model file")
    prior = RatePrior(
        mean=np.array(doc["prior"]["mean"], dtype=float),
        covariance=np.array(doc["prior"]["covariance"], dtype=float),
    )
    model = BackgroundModel(
        locations_m=np.array(doc["locations_m"], dtype=float),
        rates=np.array(doc["rates"], dtype=float),
        prior=prior,
        radius_m=float(doc["radius_m"]),
    )
    return model, doc
