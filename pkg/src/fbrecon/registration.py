"""Non-rigid registration: coarse-to-fine Gauss-Newton on the SSD metric.

register(moving, reference) estimates the displacement field u minimizing

    SSD(u) = sum_x ( warp(moving, u)(x) - reference(x) )^2

on magnitude images. Each Gauss-Newton step linearizes the warped moving
image via its spatial gradients and solves the Tikhonov-stabilized normal
equations (J^T J + alpha * L) du = -J^T r with conjugate gradients, where L
is the discrete Laplacian (gradient-energy) penalty. Updates are Gaussian
smoothed, and a step-halving safeguard keeps SSD non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .core import DisplacementField
from .operators import div, grad, warp


@dataclass(frozen=True)
class RegistrationParams:
    n_levels: int = 3
    max_gn_iters: int = 10
    update_smoothing_sigma: float = 2.0
    tikhonov_alpha: float = 0.1
    cg_iters: int = 20
    tol: float = 1e-4

    def __post_init__(self):
        if self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        if self.max_gn_iters < 1:
            raise ValueError("max_gn_iters must be >= 1")
        if self.update_smoothing_sigma < 0:
            raise ValueError("update_smoothing_sigma must be >= 0")
        if self.tikhonov_alpha < 0:
            raise ValueError("tikhonov_alpha must be >= 0")
        if self.cg_iters < 1:
            raise ValueError("cg_iters must be >= 1")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")


SsdCallback = Callable[[int, int, float], None]  # (level, iteration, ssd)


def _magnitude(img) -> np.ndarray:
    return np.abs(np.asarray(img)).astype(np.float64)


def _downsample(img: np.ndarray) -> np.ndarray:
    # Anti-alias before decimation so coarse levels stay smooth.
    return gaussian_filter(img, sigma=1.0, mode="nearest")[::2, ::2]


def _upsample_field(u: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear 2x upsampling of a (2, nx, ny) field; values double because
    displacements are in pixel units of the finer grid."""
    xs = np.arange(shape[0], dtype=np.float64) / 2.0
    ys = np.arange(shape[1], dtype=np.float64) / 2.0
    coords = np.meshgrid(xs, ys, indexing="ij")
    out = np.empty((2,) + shape, dtype=np.float64)
    for c in range(2):
        out[c] = map_coordinates(u[c], coords, order=1, mode="nearest")
    return 2.0 * out


def _ssd(moving: np.ndarray, reference: np.ndarray, u: np.ndarray) -> float:
    warped = warp(moving, DisplacementField(u[0], u[1]))
    return float(np.sum((warped - reference) ** 2))


def _solve_normal_equations(gx, gy, resid, alpha, n_iters) -> np.ndarray:
    """CG for (J^T J + alpha * grad^T grad) du = -J^T r, du stacked (2, nx, ny)."""

    def apply(d):
        jd_x = gx * gx * d[0] + gx * gy * d[1]
        jd_y = gx * gy * d[0] + gy * gy * d[1]
        out = np.stack([jd_x, jd_y])
        if alpha > 0:
            out[0] -= alpha * div(grad(d[0]))
            out[1] -= alpha * div(grad(d[1]))
        return out

    b = np.stack([-gx * resid, -gy * resid])
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    b_norm = np.sqrt(float(np.sum(b * b)))
    if b_norm == 0.0:
        return x
    for _ in range(n_iters):
        ap = apply(p)
        denom = float(np.sum(p * ap))
        if denom <= 0.0:
            break
        step = rs / denom
        x += step * p
        r -= step * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= 1e-10 * b_norm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def _register_level(
    moving: np.ndarray,
    reference: np.ndarray,
    u: np.ndarray,
    params: RegistrationParams,
    level: int,
    callback: SsdCallback | None,
) -> np.ndarray:
    ssd_cur = _ssd(moving, reference, u)
    if callback is not None:
        callback(level, 0, ssd_cur)
    for it in range(1, params.max_gn_iters + 1):
        warped = warp(moving, DisplacementField(u[0], u[1]))
        resid = warped - reference
        gx, gy = np.gradient(warped)
        du = _solve_normal_equations(gx, gy, resid, params.tikhonov_alpha, params.cg_iters)
        if params.update_smoothing_sigma > 0:
            du[0] = gaussian_filter(du[0], params.update_smoothing_sigma, mode="nearest")
            du[1] = gaussian_filter(du[1], params.update_smoothing_sigma, mode="nearest")
        step = 1.0
        accepted = False
        for _ in range(6):  # full step plus at most 5 halvings
            ssd_try = _ssd(moving, reference, u + step * du)
            if ssd_try <= ssd_cur:
                u = u + step * du
                improvement = ssd_cur - ssd_try
                ssd_cur = ssd_try
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if callback is not None:
            callback(level, it, ssd_cur)
        if improvement <= params.tol * max(ssd_cur, 1e-30):
            break
    return u


def register(
    moving,
    reference,
    params: RegistrationParams | None = None,
    callback: SsdCallback | None = None,
) -> DisplacementField:
    """Field u with warp(moving, u) approximating reference.

    Magnitudes of complex inputs are registered. The returned field lives on
    the reference grid and points into the moving image's frame (pull
    convention). callback, if given, receives (level, iteration, ssd) after
    the initial evaluation and every accepted Gauss-Newton step; within a
    level the reported SSD never increases.
    """
    params = params if params is not None else RegistrationParams()
    mov = _magnitude(moving)
    ref = _magnitude(reference)
    if mov.shape != ref.shape:
        raise ValueError(f"image shapes differ: {mov.shape} vs {ref.shape}")
    scale = float(ref.max())
    if scale > 0:
        mov = mov / scale
        ref = ref / scale

    pyramid = [(mov, ref)]
    for _ in range(params.n_levels - 1):
        m, r = pyramid[-1]
        if min(m.shape) < 16:  # don't shrink below a usable grid
            break
        pyramid.append((_downsample(m), _downsample(r)))
    pyramid.reverse()

    u = np.zeros((2,) + pyramid[0][0].shape, dtype=np.float64)
    for level, (m, r) in enumerate(pyramid):
        if u.shape[1:] != m.shape:
            u = _upsample_field(u, m.shape)
        u = _register_level(m, r, u, params, level, callback)
    return DisplacementField(ux=u[0], uy=u[1])


def register_bins(
    bin_images,
    reference_bin: int,
    params: RegistrationParams | None = None,
) -> tuple[DisplacementField, ...]:
    """Per-bin fields u_b with warp(reference_image, u_b) matching bin b.

    These fields deform the reference bin's frame (the frame the joint
    reconstruction lives in) into each bin's observed state, which is
    exactly the orientation the encoding operator consumes and the same
    convention the simulator's ground-truth fields use. The reference bin's
    own field is identically zero.
    """
    images = [np.asarray(im) for im in bin_images]
    if len(images) < 1:
        raise ValueError("need at least one bin image")
    if not 0 <= reference_bin < len(images):
        raise ValueError(f"reference_bin {reference_bin} out of range [0, {len(images)})")
    shape = images[reference_bin].shape
    fields = []
    for b, img in enumerate(images):
        if img.shape != shape:
            raise ValueError("bin images must share one shape")
        if b == reference_bin:
            fields.append(DisplacementField.zero(shape[0], shape[1]))
        else:
            fields.append(register(images[reference_bin], img, params))
    return tuple(fields)
