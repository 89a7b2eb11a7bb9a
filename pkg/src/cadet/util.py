"""Small shared helpers: seed mixing, stable log-sum-exp, CSV float formatting."""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def mix64(x: int) -> int:
    """SplitMix64 finalizer: bijective 64-bit mixing of an integer.

    Used to derive statistically independent child seeds from
    (master_seed, band, replicate) triples so that scheduling order can
    never change which random stream a replicate consumes.
    """
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def child_seed(master_seed: int, *indices: int) -> int:
    """Derive a 64-bit child seed from a master seed and an index path."""
    s = mix64(master_seed & _MASK64)
    for i in indices:
        s = mix64(s ^ mix64(i & _MASK64))
    return s


def logmeanexp(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(mean(exp(values))) computed without overflow."""
    v = np.asarray(values, dtype=float)
    vmax = np.max(v, axis=axis, keepdims=True)
    # all -inf would propagate nan through the subtraction; map back to -inf
    vmax = np.where(np.isfinite(vmax), vmax, 0.0)
    out = np.log(np.mean(np.exp(v - vmax), axis=axis)) + np.squeeze(vmax, axis=axis)
    return out


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal representation, for deterministic CSVs."""
    return repr(float(x))
