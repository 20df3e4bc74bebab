"""Reconstruction solvers and reference baselines.

The regularized solvers minimize

    ||E(rho) - s||^2 + lam * sum_x sqrt(1 + beta^2 |grad rho|^2)

with the Beltrami surface-area regularizer, which interpolates between
Gaussian (quadratic) smoothing for small beta and total variation for
large beta. The complex image is treated as two real channels inside the
gradient magnitude.

The scheme is a primal-dual projected-gradient method: the regularizer is
lifted through its dual cone, max over ||(p_spatial, p_t)|| <= 1 of
(beta * p_spatial . grad rho + p_t), giving per-pixel dual variables with
2 * channels + 1 real components. Dual ascent with pointwise projection
alternates with explicit primal descent on the smooth data term plus the
dual's spatial coupling, with over-relaxation on the primal and a
backtracking safeguard that keeps accepted objectives non-increasing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import CoilMaps, KSpaceData, ReconParams
from .operators import (
    EncodingOperator,
    div,
    encode_adjoint,
    estimate_norm,
    grad,
    ifft2c,
    warp,
)
from .operators import _adjoint_from_blocks, _encode_blocks  # shared hot path
from .registration import RegistrationParams, register
from .selfnav import BinAssignment

SQRT8 = np.sqrt(8.0)


class SolverDivergenceError(RuntimeError):
    """Objective exceeded 10x its initial value; carries the report so far."""

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    """Diagnostics of one solver run (objectives are accepted-step values)."""

    lam: float
    beta: float
    tau: float
    sigma_dual: float
    operator_norm: float
    objectives: list[float] = field(default_factory=list)
    data_terms: list[float] = field(default_factory=list)
    reg_terms: list[float] = field(default_factory=list)
    iterations: int = 0
    n_backtracks: int = 0
    n_rejected: int = 0
    final_rel_change: float = float("inf")
    converged: bool = False
    wall_time: float = 0.0


def beltrami_energy(img, beta: float) -> float:
    """sum_x sqrt(1 + beta^2 |grad img|^2), complex treated as two channels."""
    if beta <= 0 or not np.isfinite(beta):
        raise ValueError("beta must be positive and finite")
    g = grad(np.asarray(img))
    mag2 = np.abs(g[0]) ** 2 + np.abs(g[1]) ** 2
    return float(np.sum(np.sqrt(1.0 + beta * beta * mag2)))


def beltrami_gradient(img, beta: float) -> np.ndarray:
    """Gradient of beltrami_energy with respect to the image.

    Convention: for f real-valued on complex images, the returned array g
    satisfies d/dt f(img + t*delta) = Re <g, delta> at t = 0.
    """
    g = grad(np.asarray(img, dtype=np.complex128))
    den = np.sqrt(1.0 + beta * beta * (np.abs(g[0]) ** 2 + np.abs(g[1]) ** 2))
    return -div(beta * beta * g / den[None, :, :])


def _data_residual_blocks(op, img, data_blocks):
    enc = _encode_blocks(op, img)
    return [e - d for e, d in zip(enc, data_blocks)]


def _blocks_norm2(blocks) -> float:
    return float(sum(np.vdot(b, b).real for b in blocks))


def _solve_beltrami(
    op: EncodingOperator, data: KSpaceData, params: ReconParams
) -> tuple[np.ndarray, SolveReport]:
    t0 = time.perf_counter()
    data_blocks = list(data.samples)

    adjoint_img = _adjoint_from_blocks(op, data_blocks)
    lam = params.lam
    if lam is None:
        lam = 0.01 * float(np.abs(adjoint_img).max())
        if lam <= 0.0:  # all-zero data: any positive value, nothing to weigh
            lam = 1.0
    beta = params.beta

    op_norm = estimate_norm(op, n_iters=30, seed=0)
    lipschitz = 2.0 * op_norm
    kappa = lam * beta * SQRT8
    sigma_dual = 1.0 / kappa
    tau0 = params.step_safety / (lipschitz / 2.0 + kappa)

    report = SolveReport(
        lam=lam, beta=beta, tau=tau0, sigma_dual=sigma_dual, operator_norm=op_norm
    )

    rho = adjoint_img.copy()  # warm start at E^H s
    rho_bar = rho.copy()
    p_s = np.zeros((2,) + rho.shape, dtype=np.complex128)
    p_t = np.zeros(rho.shape, dtype=np.float64)

    def objective(img):
        resid = _data_residual_blocks(op, img, data_blocks)
        dt = _blocks_norm2(resid)
        reg = beltrami_energy(img, beta)
        return dt + lam * reg, dt, reg, resid

    obj_cur, dt_cur, reg_cur, resid_cur = objective(rho)
    obj_init = obj_cur
    report.objectives.append(obj_cur)
    report.data_terms.append(dt_cur)
    report.reg_terms.append(reg_cur)

    consecutive_rejects = 0
    for it in range(1, params.max_iters + 1):
        report.iterations = it

        # dual ascent at the over-relaxed primal, then pointwise projection
        # onto the unit ball of the stacked (spatial, constant) dual.
        p_s += (sigma_dual * lam * beta) * grad(rho_bar)
        p_t += sigma_dual * lam
        norms = np.sqrt(np.abs(p_s[0]) ** 2 + np.abs(p_s[1]) ** 2 + p_t**2)
        shrink = 1.0 / np.maximum(1.0, norms)
        p_s *= shrink[None, :, :]
        p_t *= shrink

        # primal descent on data term + dual spatial coupling
        g = 2.0 * _adjoint_from_blocks(op, resid_cur) - lam * beta * div(p_s)

        tau = tau0
        accepted = False
        for attempt in range(6):  # full step plus at most 5 halvings
            rho_try = rho - tau * g
            obj_try, dt_try, reg_try, resid_try = objective(rho_try)
            if obj_try <= obj_cur:
                accepted = True
                break
            if attempt < 5:
                report.n_backtracks += 1
                tau *= 0.5

        if accepted:
            rho_new = rho_try
            rel_change = abs(obj_cur - obj_try) / max(obj_cur, 1e-300)
            obj_cur, dt_cur, reg_cur, resid_cur = obj_try, dt_try, reg_try, resid_try
            consecutive_rejects = 0
        else:
            # keep the iterate; the dual continues to tighten
            rho_new = rho
            rel_change = 0.0
            report.n_rejected += 1
            consecutive_rejects += 1

        rho_bar = 2.0 * rho_new - rho
        rho = rho_new
        report.objectives.append(obj_cur)
        report.data_terms.append(dt_cur)
        report.reg_terms.append(reg_cur)
        report.final_rel_change = rel_change

        if obj_cur > 10.0 * max(obj_init, 1e-300):
            report.wall_time = time.perf_counter() - t0
            raise SolverDivergenceError(
                f"objective {obj_cur:.3e} exceeded 10x its initial value {obj_init:.3e}",
                report,
            )
        if accepted and rel_change < params.tol:
            report.converged = True
            break
        if consecutive_rejects >= 5:
            # no primal descent possible and the dual is saturated
            report.converged = True
            break

    report.wall_time = time.perf_counter() - t0
    if not np.all(np.isfinite(rho.view(np.float64))):
        raise SolverDivergenceError("solution contains non-finite values", report)
    return rho, report


def solve_bsense(
    ksp: KSpaceData, coils: CoilMaps, params: ReconParams | None = None
) -> tuple[np.ndarray, SolveReport]:
    """Beltrami-regularized SENSE of one respiratory bin (identity motion)."""
    params = params if params is not None else ReconParams()
    op = EncodingOperator.static(coils, ksp.shot_masks())
    return _solve_beltrami(op, ksp, params)


def solve_mocobel(
    ksp: KSpaceData,
    coils: CoilMaps,
    bins: BinAssignment,
    fields,
    params: ReconParams | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Joint motion-compensated Beltrami reconstruction across all bins.

    fields[b] must deform the reference frame into bin b's observed state
    (the orientation register_bins and the simulator produce); the
    reference bin's field is the zero field.
    """
    params = params if params is not None else ReconParams()
    fields = tuple(fields)
    if bins.n_shots != ksp.n_shots:
        raise ValueError(f"bin assignment covers {bins.n_shots} shots, data has {ksp.n_shots}")
    if len(fields) != bins.n_bins:
        raise ValueError(f"need one field per bin ({bins.n_bins}), got {len(fields)}")
    op = EncodingOperator(
        coils=coils,
        masks=ksp.shot_masks(),
        bin_of_shot=tuple(int(b) for b in bins.bin_of_shot),
        fields=fields,
    )
    return _solve_beltrami(op, ksp, params)


def solve_tikhonov(
    ksp: KSpaceData,
    coils: CoilMaps,
    bins: BinAssignment | None = None,
    fields=None,
    lam: float = 0.0,
    max_iters: int = 50,
    tol: float = 1e-6,
) -> np.ndarray:
    """Motion-compensated Tikhonov baseline: CG on (E^H E + lam I) x = E^H s.

    bins=None or fields=None solves the identity-motion problem. Stops after
    max_iters CG iterations or when the residual drops below tol relative
    to ||E^H s||.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lam must be finite and >= 0")
    if bins is not None and fields is not None:
        fields = tuple(fields)
        if bins.n_shots != ksp.n_shots:
            raise ValueError("bin assignment does not cover the data")
        if len(fields) != bins.n_bins:
            raise ValueError("need one field per bin")
        op = EncodingOperator(
            coils=coils,
            masks=ksp.shot_masks(),
            bin_of_shot=tuple(int(b) for b in bins.bin_of_shot),
            fields=fields,
        )
    else:
        op = EncodingOperator.static(coils, ksp.shot_masks())

    data_blocks = list(ksp.samples)
    b = _adjoint_from_blocks(op, data_blocks)

    def normal_apply(x):
        return _adjoint_from_blocks(op, _encode_blocks(op, x)) + lam * x

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    b_norm = np.sqrt(float(np.vdot(b, b).real))
    if b_norm == 0.0:
        return x
    for _ in range(max_iters):
        ap = normal_apply(p)
        denom = float(np.vdot(p, ap).real)
        if denom <= 0.0:
            break
        step = rs / denom
        x += step * p
        r -= step * ap
        rs_new = float(np.vdot(r, r).real)
        if np.sqrt(rs_new) <= tol * b_norm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def baseline_sos(ksp: KSpaceData, coils: CoilMaps) -> np.ndarray:
    """Motion-ignoring baseline: pool all shots (duplicate lines averaged),
    zero-fill, inverse FFT, root-sum-of-squares coil combination.

    Returns a real magnitude image. The coil maps are only checked for
    layout; RSS needs no sensitivities.
    """
    if ksp.n_coils != coils.n_coils or (ksp.nx, ksp.ny) != (coils.nx, coils.ny):
        raise ValueError("k-space layout does not match coil maps")
    acc = np.zeros((ksp.n_coils, ksp.nx, ksp.ny), dtype=np.complex128)
    count = np.zeros(ksp.nx, dtype=np.float64)
    for r in range(ksp.n_shots):
        lines = ksp.line_indices[r]
        acc[:, lines, :] += ksp.samples[r]
        count[lines] += 1.0
    sampled = count > 0
    acc[:, sampled, :] /= count[sampled][None, :, None]
    coil_imgs = ifft2c(acc)
    return np.sqrt(np.sum(np.abs(coil_imgs) ** 2, axis=0))


def baseline_rra(
    ksp: KSpaceData,
    coils: CoilMaps,
    bins: BinAssignment,
    params: ReconParams | None = None,
    reg_params: RegistrationParams | None = None,
    bin_images=None,
) -> np.ndarray:
    """Register-and-average baseline.

    Reconstruct each bin independently, register every bin's magnitude image
    to the reference bin's, warp them into the reference frame, and average
    the magnitudes. bin_images, if given, skips the per-bin reconstructions
    (useful when the caller already computed them).
    """
    if bins.n_shots != ksp.n_shots:
        raise ValueError("bin assignment does not cover the data")
    if bin_images is None:
        mags = []
        for b in range(bins.n_bins):
            sub = ksp.subset(bins.shots_in_bin(b))
            img, _ = solve_bsense(sub, coils, params)
            mags.append(np.abs(img))
    else:
        bin_images = list(bin_images)
        if len(bin_images) != bins.n_bins:
            raise ValueError("need one bin image per bin")
        mags = [np.abs(np.asarray(im)) for im in bin_images]
    ref = bins.reference_bin
    acc = np.zeros_like(mags[ref])
    for b, mag in enumerate(mags):
        if b == ref:
            acc += mag
        else:
            to_ref = register(mag, mags[ref], reg_params)
            acc += warp(mag, to_ref)
    return acc / bins.n_bins
