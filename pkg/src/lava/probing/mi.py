"""Mutual information between one neuron's activation and the binary label.

Used as a diagnostic alongside SVR-RFE selection; values are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DegenerateBandwidth, SingleClass, TooFewSamples
from ..kde import gaussian_density, silverman_bandwidth


@dataclass(frozen=True)
class MiEstimate:
    value_bits: float
    bins: int
    estimator: str
    raw_bits: float


def _check_labels(y: np.ndarray, n: int) -> np.ndarray:
    y = np.asarray(y).ravel()
    if len(y) != n:
        raise ConfigError(f"z has {n} entries but y has {len(y)}")
    if not np.isin(y, (0, 1)).all():
        raise ConfigError("y must contain only 0 and 1")
    return y.astype(np.int64)


def equal_frequency_bins(z, bins: int) -> np.ndarray:
    """Bin index per sample from order statistics; tied values share a bin."""
    z = np.asarray(z, dtype=np.float64).ravel()
    n = len(z)
    srt = np.sort(z)
    cut_pos = np.ceil(np.arange(1, bins) * n / bins).astype(np.int64)
    cuts = srt[np.minimum(cut_pos, n - 1)]
    return np.searchsorted(cuts, z, side="right")


def _plugin_mi_bits(a: np.ndarray, b: np.ndarray, na: int, nb: int) -> float:
    joint = np.zeros((na, nb))
    np.add.at(joint, (a, b), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log2(joint[nz] / (pa @ pb)[nz])).sum())


def mutual_information_discrete(z, y, bins: int | None = None) -> MiEstimate:
    """Plug-in MI after equal-frequency discretization of ``z``.

    ``bins`` defaults to max(2, floor(sqrt(N))).
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    n = len(z)
    y = _check_labels(y, n)
    if bins is None:
        bins = max(2, int(np.floor(np.sqrt(n))))
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    if n < bins:
        raise TooFewSamples(f"{n} samples cannot fill {bins} bins")
    raw = _plugin_mi_bits(equal_frequency_bins(z, bins), y, bins, 2)
    return MiEstimate(max(raw, 0.0), bins, "discrete_binned", raw)


def _entropy_bits(p: np.ndarray, grid: np.ndarray) -> float:
    p = p / np.trapezoid(p, grid)
    f = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return float(-np.trapezoid(f, grid))


def mutual_information_kde(z, y, bandwidth: float | str = "auto", grid: int = 512) -> MiEstimate:
    """MI = H(z) - sum_y p(y) H(z | y) with Gaussian-KDE differential entropies.

    The class-conditional densities are estimated separately (Silverman
    bandwidth per class when ``bandwidth='auto'``) and the marginal is their
    label-weighted mixture, so the estimate is non-negative up to quadrature
    error.  Entropies are integrated on ``grid`` points over
    [min - 3h, max + 3h].
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    n = len(z)
    y = _check_labels(y, n)
    if n < 8:
        raise TooFewSamples(f"need at least 8 samples, got {n}")
    if len(np.unique(y)) < 2:
        raise SingleClass("both label classes must be present")
    if np.ptp(z) == 0:
        raise DegenerateBandwidth("z is constant")

    groups = [z[y == c] for c in (0, 1)]
    if bandwidth == "auto":
        pooled = silverman_bandwidth(z)
        hs = []
        for g in groups:
            try:
                hs.append(silverman_bandwidth(g))
            except DegenerateBandwidth:
                hs.append(pooled)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise DegenerateBandwidth(f"bandwidth must be positive, got {bandwidth}")
        hs = [h, h]

    hmax = max(hs)
    xs = np.linspace(z.min() - 3 * hmax, z.max() + 3 * hmax, grid)
    weights = [len(g) / n for g in groups]
    dens = [gaussian_density(g, xs, h) for g, h in zip(groups, hs)]
    dens = [d / np.trapezoid(d, xs) for d in dens]
    mix = weights[0] * dens[0] + weights[1] * dens[1]
    raw = _entropy_bits(mix, xs) - sum(w * _entropy_bits(d, xs) for w, d in zip(weights, dens))
    return MiEstimate(max(raw, 0.0), grid, "kde", raw)
