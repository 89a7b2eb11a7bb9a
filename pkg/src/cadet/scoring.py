"""Per-observation threat scores.

Masked detector: pseudoinverse decoding (PID). Each element's window
count is modeled as background plus the source amplitude scaled by that
element's mask coefficient; a prior-augmented least-squares solve
returns the amplitude estimate and its variance.

Unmasked detector: censored energy windowing (CEW). In-window counts are
predicted from the out-of-window bins with a linear model trained on
source-free data; the score is the residual over the square root of the
prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ParameterError
from .scene import ExposureMatrix
from .spectra import EnergySpectrum, SourceWindow

# slope-only ridge for the CEW fit; keeps degenerate designs solvable
CEW_RIDGE = 1e-6
# prediction floor inside the score denominator (counts)
CEW_PREDICTION_FLOOR = 1.0


@dataclass(frozen=True)
class PidResult:
    s_hat: float  # source window counts per element at unit mask coefficient
    b_hat: float  # background window counts per element
    var_s: float
    theta_rad: float

    def __post_init__(self):
        if not self.var_s > 0:
            raise NumericError(f"PID variance must be positive, got {self.var_s}")


def pid_decode(
    element_window_counts: np.ndarray,
    em: ExposureMatrix,
    noise_var: np.ndarray,
) -> PidResult:
    """Decode (background, source) from per-element window counts.

    Detector rows and targets are whitened by 1/sqrt(noise_var); the
    prior rows arrive pre-whitened in the exposure matrix. The stacked
    system is solved through the pseudoinverse, and var_s is the source
    diagonal of (A'A)^-1 in the whitened coordinates.
    """
    y = np.asarray(element_window_counts, dtype=float)
    v = np.asarray(noise_var, dtype=float)
    n = em.n_detector_rows
    if y.shape != (n,) or v.shape != (n,):
        raise ParameterError(f"expected {n}-vectors of counts and variances")
    if np.any(v <= 0):
        raise ParameterError("noise variances must be positive")
    w = 1.0 / np.sqrt(v)
    a = em.rows.copy()
    a[:n] *= w[:, None]
    rhs = np.concatenate([y * w, em.prior_targets])
    gram = a.T @ a
    if np.linalg.matrix_rank(gram) < 2:
        raise NumericError("augmented design is rank deficient")
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    var_s = float(np.linalg.inv(gram)[1, 1])
    return PidResult(
        s_hat=float(sol[1]), b_hat=float(sol[0]), var_s=var_s, theta_rad=em.theta_rad
    )


def pid_decode_batch(
    element_window_counts: np.ndarray,
    coefficients: np.ndarray,
    noise_var: np.ndarray,
    background_prior: np.ndarray,
    source_prior_sd: float = 1e6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized decode over poses and mask angles.

    element_window_counts: (T, n) counts; coefficients: (A, n) mask
    coefficients per grid angle; noise_var, background_prior: (T,)
    scalars shared by all elements of a pose (uniform background split).
    Returns (s_hat, b_hat, var_s), each (T, A). Matches pid_decode on
    every (pose, angle) pair; kept in closed form because the per-angle
    Gram matrices are 2x2.
    """
    y = np.atleast_2d(np.asarray(element_window_counts, dtype=float))
    c = np.atleast_2d(np.asarray(coefficients, dtype=float))
    v = np.asarray(noise_var, dtype=float)
    b0 = np.asarray(background_prior, dtype=float)
    n = y.shape[1]
    if c.shape[1] != n:
        raise ParameterError("coefficient and count element dimensions differ")
    if np.any(v <= 0) or np.any(b0 <= 0):
        raise ParameterError("noise variances and background priors must be positive")

    inv_v = 1.0 / v  # (T,)
    s1 = c.sum(axis=1)  # (A,)
    s2 = (c * c).sum(axis=1)
    cy = y @ c.T  # (T, A)
    ysum = y.sum(axis=1)

    # prior rows contribute 1/sigma_b^2 = 1/b0 to the bb Gram entry and
    # b0/sigma_b^2 = 1 to the rhs; source prior adds 1/sigma_s^2
    g_bb = n * inv_v + 1.0 / b0  # (T,)
    g_bs = s1[None, :] * inv_v[:, None]  # (T, A)
    g_ss = s2[None, :] * inv_v[:, None] + source_prior_sd**-2
    r_b = ysum * inv_v + 1.0  # (T,)
    r_s = cy * inv_v[:, None]

    det = g_bb[:, None] * g_ss - g_bs**2
    s_hat = (g_bb[:, None] * r_s - g_bs * r_b[:, None]) / det
    b_hat = (g_ss * r_b[:, None] - g_bs * r_s) / det
    var_s = g_bb[:, None] / det
    return s_hat, b_hat, var_s


@dataclass(frozen=True)
class CewModel:
    """Linear predictor of window counts from out-of-window bins."""

    weights: np.ndarray  # slopes over out-of-window bins, intercept last
    window: SourceWindow
    n_bins: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        expected = self.n_bins - self.window.size + 1
        if w.shape != (expected,):
            raise ParameterError(
                f"weight vector must have length {expected}, got {w.shape}"
            )
        object.__setattr__(self, "weights", w)

    @property
    def slopes(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def intercept(self) -> float:
        return float(self.weights[-1])


@dataclass(frozen=True)
class CewResult:
    s_hat: float  # observed minus predicted window counts
    b_hat: float  # predicted window counts
    score: float


def fit_cew(training: list[EnergySpectrum], window: SourceWindow) -> CewModel:
    """Fit the censored-window regression on source-free spectra.

    Least squares of window counts on out-of-window counts plus an
    intercept, with ridge 1e-6 on the slopes only. Requires at least ten
    times as many training spectra as predictors.
    """
    if not training:
        raise DataError("CEW training set is empty")
    n_bins = training[0].n_bins
    window.out_of_window(n_bins)  # validates window fits the binning
    counts = np.stack([s.counts for s in training]).astype(float)
    if counts.shape[1] != n_bins:
        raise DataError("training spectra have inconsistent binning")
    oow = window.out_of_window(n_bins)
    n_pred = oow.size + 1
    if counts.shape[0] < 10 * n_pred:
        raise DataError(
            f"CEW needs >= {10 * n_pred} training spectra for {n_pred} predictors, "
            f"got {counts.shape[0]}"
        )
    x = counts[:, oow]
    y = counts[:, window.bins].sum(axis=1)
    z = np.column_stack([x, np.ones(x.shape[0])])
    gram = z.T @ z
    gram[np.arange(oow.size), np.arange(oow.size)] += CEW_RIDGE
    weights = np.linalg.solve(gram, z.T @ y)
    return CewModel(weights=weights, window=window, n_bins=n_bins)


def cew_predict(model: CewModel, aggregate_counts: np.ndarray) -> np.ndarray:
    """Predicted window counts for (..., n_bins) aggregate spectra."""
    counts = np.asarray(aggregate_counts, dtype=float)
    if counts.shape[-1] != model.n_bins:
        raise ParameterError(
            f"spectrum has {counts.shape[-1]} bins, model expects {model.n_bins}"
        )
    oow = model.window.out_of_window(model.n_bins)
    return counts[..., oow] @ model.slopes + model.intercept


def cew_score(spectrum: EnergySpectrum, model: CewModel) -> CewResult:
    """SNR score: residual over sqrt of the (floored) prediction."""
    b_hat = float(cew_predict(model, spectrum.counts))
    observed = float(spectrum.counts[model.window.bins].sum())
    s_hat = observed - b_hat
    return CewResult(
        s_hat=s_hat,
        b_hat=b_hat,
        score=s_hat / np.sqrt(max(b_hat, CEW_PREDICTION_FLOOR)),
    )


def cew_score_batch(
    aggregate_counts: np.ndarray, model: CewModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(s_hat, b_hat, score) arrays for (T, n_bins) aggregate counts."""
    counts = np.atleast_2d(np.asarray(aggregate_counts, dtype=float))
    b_hat = cew_predict(model, counts)
    s_hat = counts[:, model.window.bins].sum(axis=1) - b_hat
    score = s_hat / np.sqrt(np.maximum(b_hat, CEW_PREDICTION_FLOOR))
    return s_hat, b_hat, score


def cew_model_doc(model: CewModel) -> dict:
    """JSON-ready form of a fitted model, for the composite model file."""
    return {
        "weights": model.weights.tolist(),
        "window_bins": np.asarray(model.window.bins).tolist(),
        "mass_coverage": model.window.mass_coverage,
        "n_bins": model.n_bins,
    }


def cew_model_from_doc(doc: dict) -> CewModel:
    try:
        return CewModel(
            weights=np.array(doc["weights"], dtype=float),
            window=SourceWindow(
                bins=np.array(doc["window_bins"], dtype=np.int64),
                mass_coverage=float(doc["mass_coverage"]),
            ),
            n_bins=int(doc["n_bins"]),
        )
    except KeyError as exc:
        raise DataError(f"model file is missing CEW field {exc}") from exc
