"""Gaussian kernel density primitives shared by the MI estimator and the continuum curves."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBandwidth

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def silverman_bandwidth(samples) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5); falls back to sd when the IQR is zero."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if len(x) < 2:
        raise DegenerateBandwidth("need at least 2 samples for a bandwidth")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DegenerateBandwidth("samples are constant")
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if not spread > 0:
        spread = sd
    return float(0.9 * spread * len(x) ** -0.2)


def gaussian_density(samples, grid, h: float, chunk: int = 4096) -> np.ndarray:
    """Gaussian KDE of ``samples`` with bandwidth ``h`` evaluated at ``grid``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    g = np.asarray(grid, dtype=np.float64)
    out = np.zeros_like(g)
    for start in range(0, len(x), chunk):
        u = (g[None, :] - x[start : start + chunk, None]) / h
        out += np.exp(-0.5 * u * u).sum(axis=0)
    return out / (len(x) * h * _SQRT_2PI)
