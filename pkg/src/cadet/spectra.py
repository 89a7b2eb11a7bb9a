"""Energy binning, spectra, the source spectral template, and the source window.

All detector spectra share one binning scheme: edges follow a quadratic
spacing law between a hard low-energy threshold and the top of the survey
range, so low energies get fine bins and the sparse high-energy continuum
gets wide ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ParameterError

#: Sentinel bin index for energies below the lowest edge.
BELOW_RANGE = -1


@dataclass(frozen=True)
class BinningScheme:
    """Energy bin edges in keV; ``n_bins`` bins, ``n_bins + 1`` edges."""

    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 3:
            raise ParameterError("binning needs at least 2 bins")
        if not np.all(np.diff(edges) > 0):
            raise ParameterError("bin edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def e_min(self) -> float:
        return float(self.edges[0])

    @property
    def e_max(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def above_range(self) -> int:
        """Sentinel index returned by :func:`bin_of` for energies >= e_max."""
        return self.n_bins


@dataclass(frozen=True)
class EnergySpectrum:
    """Counts per energy bin for a single observation interval."""

    counts: np.ndarray
    live_time: float = 1.0

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ParameterError("counts must be a 1-D vector")
        if np.any(counts < 0):
            raise ParameterError("counts must be nonnegative")
        if not self.live_time > 0:
            raise ParameterError("live_time must be positive")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def n_bins(self) -> int:
        return self.counts.size

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SpectrumTemplate:
    """Unit-mass spectral shape: probability that a detected source photon
    lands in each bin."""

    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if np.any(mass < 0):
            raise ParameterError("template mass must be nonnegative")
        if abs(mass.sum() - 1.0) > 1e-12:
            raise ParameterError("template mass must sum to 1")
        object.__setattr__(self, "mass", mass)

    @property
    def argmax_bin(self) -> int:
        return int(np.argmax(self.mass))


@dataclass(frozen=True)
class SourceWindow:
    """Contiguous run of bins where the source template concentrates.

    ``mass_coverage`` is the fraction of template mass inside the window;
    downstream scorers treat in-window counts as signal-bearing.
    """

    bins: np.ndarray
    mass_coverage: float

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        if bins.size == 0:
            raise ParameterError("window must be nonempty")
        object.__setattr__(self, "bins", bins)

    @property
    def size(self) -> int:
        return self.bins.size

    def out_of_window(self, n_bins: int) -> np.ndarray:
        """Indices of all bins not in the window."""
        mask = np.ones(n_bins, dtype=bool)
        mask[self.bins] = False
        return np.nonzero(mask)[0]


def make_quadratic_binning(e_min: float, e_max: float, n: int) -> BinningScheme:
    """Quadratically spaced bin edges: edge_k = e_min + (e_max - e_min) * (k/n)^2."""
    if not (0 < e_min < e_max):
        raise ParameterError(f"invalid energy range [{e_min}, {e_max}]")
    if n < 2:
        raise ParameterError("need at least 2 bins")
    k = np.arange(n + 1, dtype=float)
    edges = e_min + (e_max - e_min) * (k / n) ** 2
    return BinningScheme(edges=edges)


def bin_of(binning: BinningScheme, energy: float) -> int:
    """Bin index owning ``energy`` under left-inclusive edges.

    Returns ``BELOW_RANGE`` (-1) below the lowest edge and
    ``binning.above_range`` (= n_bins) at or above the highest edge;
    out-of-range is a value, not an error.
    """
    if energy < binning.e_min:
        return BELOW_RANGE
    if energy >= binning.e_max:
        return binning.above_range
    return int(np.searchsorted(binning.edges, energy, side="right") - 1)


def make_snm_template(
    binning: BinningScheme, peak_kev: float = 186.0, fwhm_fraction: float = 0.12
) -> SpectrumTemplate:
    """Single-peak source template: a Gaussian line integrated over the bins.

    The line sits at ``peak_kev`` with FWHM = ``fwhm_fraction * peak_kev``;
    per-bin mass is the Gaussian integral between adjacent edges,
    renormalized over the in-range bins.
    """
    if not (binning.e_min < peak_kev < binning.e_max):
        raise ParameterError(f"peak {peak_kev} keV outside binning range")
    if not (0 < fwhm_fraction < 1):
        raise ParameterError("fwhm_fraction must be in (0, 1)")
    sigma = fwhm_fraction * peak_kev / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    cdf = ndtr((binning.edges - peak_kev) / sigma)
    mass = np.diff(cdf)
    total = mass.sum()
    if total <= 0:
        raise ParameterError("template mass vanished inside the binning range")
    return SpectrumTemplate(mass=mass / total)


def window_from_template(template: SpectrumTemplate, coverage: float = 0.90) -> SourceWindow:
    """Smallest contiguous bin run containing the template argmax whose mass
    reaches ``coverage``.

    Among runs of the minimal length, the one with maximal mass wins (ties
    to the smaller start); that choice makes the recorded coverage monotone
    in the requested coverage.
    """
    if not (0 < coverage < 1):
        raise ParameterError("coverage must be in (0, 1)")
    mass = template.mass
    n = mass.size
    peak = template.argmax_bin
    cumsum = np.concatenate([[0.0], np.cumsum(mass)])
    for length in range(1, n + 1):
        lo_min = max(0, peak - length + 1)
        lo_max = min(peak, n - length)
        starts = np.arange(lo_min, lo_max + 1)
        masses = cumsum[starts + length] - cumsum[starts]
        best = int(np.argmax(masses))
        if masses[best] >= coverage:
            start = int(starts[best])
            return SourceWindow(
                bins=np.arange(start, start + length),
                mass_coverage=float(masses[best]),
            )
    return SourceWindow(bins=np.arange(n), mass_coverage=float(mass.sum()))
