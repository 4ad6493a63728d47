"""Least-squares rate fits on log2-log2 axes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SlopeFit", "fit_slope", "local_slopes"]


@dataclass(frozen=True)
class SlopeFit:
    slope: float | None
    intercept: float | None
    n_points: int

    @property
    def defined(self) -> bool:
        return self.slope is not None


def fit_slope(x, err, min_points: int = 3) -> SlopeFit:
    """Fit ``log2 err = slope * log2 x + intercept`` over finite, positive points.

    The slope is withheld (``None``) when fewer than ``min_points`` survive.
    """
    x = np.asarray(x, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = np.isfinite(x) & np.isfinite(err) & (x > 0) & (err > 0)
    n = int(ok.sum())
    if n < min_points:
        return SlopeFit(None, None, n)
    lx, ly = np.log2(x[ok]), np.log2(err[ok])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    return SlopeFit(float(slope), float(intercept), n)


def local_slopes(x, err):
    """Slopes between consecutive ladder points."""
    x = np.asarray(x, dtype=float)
    err = np.asarray(err, dtype=float)
    return np.diff(np.log2(err)) / np.diff(np.log2(x))
