"""Image quality metrics and profile tools used to score reconstructions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ShapeMismatchError


def _as_float(img) -> np.ndarray:
    """Real arrays pass through signed; complex arrays are magnitude-reduced."""
    arr = np.asarray(img)
    if np.iscomplexobj(arr):
        return np.abs(arr).astype(np.float64)
    return arr.astype(np.float64)


def psnr(test, reference) -> float:
    """Peak signal-to-noise ratio in dB over magnitudes.

    peak is max |reference|; identical magnitudes return inf; an all-zero
    reference is an error.
    """
    t = np.abs(np.asarray(test)).astype(np.float64)
    r = np.abs(np.asarray(reference)).astype(np.float64)
    if t.shape != r.shape:
        raise ShapeMismatchError(f"shapes differ: {t.shape} vs {r.shape}")
    peak = float(r.max())
    if peak == 0.0:
        raise ValueError("reference image is identically zero")
    mse = float(np.mean((t - r) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(test, reference, k1: float = 0.01, k2: float = 0.03, window: int = 8) -> float:
    """Mean structural similarity over all fully valid window x window tiles.

    Dynamic range is max |reference|. Real inputs are compared signed (so an
    anticorrelated pair scores negative); complex inputs are magnitude-
    reduced first. ssim(x, x) == 1 exactly.
    """
    t = _as_float(test)
    r = _as_float(reference)
    if t.shape != r.shape:
        raise ShapeMismatchError(f"shapes differ: {t.shape} vs {r.shape}")
    if t.shape[0] < window or t.shape[1] < window:
        raise ValueError(f"images smaller than the {window}x{window} window")
    dyn = float(np.abs(r).max())
    if dyn == 0.0:
        raise ValueError("reference image is identically zero")
    c1 = (k1 * dyn) ** 2
    c2 = (k2 * dyn) ** 2

    def window_sums(a):
        # summed-area table -> sum over every valid window placement
        s = np.cumsum(np.cumsum(a, axis=0), axis=1)
        s = np.pad(s, ((1, 0), (1, 0)))
        w = window
        return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]

    n = float(window * window)
    mu_t = window_sums(t) / n
    mu_r = window_sums(r) / n
    # variances/covariance via E[xy] - E[x]E[y]; tiny negatives from rounding
    # are harmless inside the SSIM ratio.
    var_t = window_sums(t * t) / n - mu_t**2
    var_r = window_sums(r * r) / n - mu_r**2
    cov = window_sums(t * r) / n - mu_t * mu_r
    score = ((2 * mu_t * mu_r + c1) * (2 * cov + c2)) / (
        (mu_t**2 + mu_r**2 + c1) * (var_t + var_r + c2)
    )
    return float(np.mean(score))


@dataclass(frozen=True)
class ProfileSpec:
    """Sampled segment from (x0, y0) to (x1, y1) in pixel coordinates
    (x = row, y = column), endpoints inclusive."""

    x0: float
    y0: float
    x1: float
    y1: float
    n_samples: int = 64

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least 2 samples")


def line_profile(img, spec: ProfileSpec) -> np.ndarray:
    """Bilinear samples of |img| along the segment. Endpoints must lie
    inside the grid."""
    mag = np.abs(np.asarray(img)).astype(np.float64)
    nx, ny = mag.shape
    for x, y in ((spec.x0, spec.y0), (spec.x1, spec.y1)):
        if not (0.0 <= x <= nx - 1 and 0.0 <= y <= ny - 1):
            raise ValueError(f"profile endpoint ({x}, {y}) outside grid {nx}x{ny}")
    t = np.linspace(0.0, 1.0, spec.n_samples)
    xs = spec.x0 + t * (spec.x1 - spec.x0)
    ys = spec.y0 + t * (spec.y1 - spec.y0)
    i0 = np.floor(xs).astype(np.intp)
    j0 = np.floor(ys).astype(np.intp)
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    wx = xs - i0
    wy = ys - j0
    return (
        (1 - wx) * (1 - wy) * mag[i0, j0]
        + (1 - wx) * wy * mag[i0, j1]
        + wx * (1 - wy) * mag[i1, j0]
        + wx * wy * mag[i1, j1]
    )


def signal_correlation(a, b) -> tuple[float, float]:
    """Pearson correlation and its square between two 1-D signals.

    Requires equal lengths >= 3 and nonconstant inputs.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ShapeMismatchError(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 3:
        raise ValueError("need at least 3 samples")
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.sqrt(np.sum(da * da)))
    sb = float(np.sqrt(np.sum(db * db)))
    if sa == 0.0 or sb == 0.0:
        raise ValueError("correlation of a constant signal is undefined")
    r = float(np.sum(da * db)) / (sa * sb)
    r = max(-1.0, min(1.0, r))
    return r, r * r
