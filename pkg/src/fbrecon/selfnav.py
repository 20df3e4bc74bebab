"""Respiratory self-navigation from the fully sampled k-space center.

Every shot re-acquires the same centered block of phase-encode lines, so a
low-resolution image per shot comes for free. The dominant temporal
variation of those navigator images (first principal component) tracks the
breathing state; quantile binning groups shots of similar state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import KSpaceData
from .operators import ifft2c
from .sampling import center_block_lines


@dataclass(frozen=True, eq=False)
class RespiratorySignal:
    """One scalar per shot; zero-mean; the first nonzero deflection is
    positive (sign is otherwise arbitrary for a principal component)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("signal contains non-finite values")
        v = np.array(values, copy=True)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_shots(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class BinAssignment:
    """Shot -> respiratory bin map plus the reference bin."""

    bin_of_shot: np.ndarray
    n_bins: int
    reference_bin: int

    def __post_init__(self):
        bos = np.asarray(self.bin_of_shot, dtype=np.intp)
        if bos.ndim != 1 or bos.size < 1:
            raise ValueError("bin_of_shot must be a non-empty 1-D array")
        if self.n_bins < 1 or set(np.unique(bos)) != set(range(self.n_bins)):
            raise ValueError("every bin in 0..n_bins-1 must own at least one shot")
        if not 0 <= self.reference_bin < self.n_bins:
            raise ValueError("reference_bin out of range")
        b = np.array(bos, copy=True)
        b.flags.writeable = False
        object.__setattr__(self, "bin_of_shot", b)

    @property
    def n_shots(self) -> int:
        return self.bin_of_shot.size

    def shots_in_bin(self, bin_id: int) -> np.ndarray:
        return np.flatnonzero(self.bin_of_shot == bin_id)

    def counts(self) -> np.ndarray:
        return np.bincount(self.bin_of_shot, minlength=self.n_bins)


def _raised_cosine(n: int) -> np.ndarray:
    # Offset so that the edge lines keep a small nonzero weight.
    k = np.arange(n, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * (k + 0.5) / n)


def navigator_images(ksp: KSpaceData, n_center_lines: int) -> list[np.ndarray]:
    """Low-resolution magnitude image per shot from the shared center block.

    The center lines are windowed (raised cosine along phase encode),
    zero-filled, inverse transformed and root-sum-of-squares combined.
    Raises ValueError if any shot is missing part of the center block.
    """
    center = center_block_lines(ksp.nx, n_center_lines)
    window = _raised_cosine(n_center_lines)
    navs = []
    for r in range(ksp.n_shots):
        idx = ksp.line_indices[r]
        pos = np.searchsorted(idx, center)
        if pos.max() >= idx.size or not np.array_equal(idx[pos], center):
            raise ValueError(f"shot {r} does not contain the full {n_center_lines}-line center block")
        filled = np.zeros((ksp.n_coils, ksp.nx, ksp.ny), dtype=np.complex128)
        filled[:, center, :] = ksp.samples[r][:, pos, :] * window[None, :, None]
        coil_imgs = ifft2c(filled)
        navs.append(np.sqrt(np.sum(np.abs(coil_imgs) ** 2, axis=0)))
    return navs


def extract_signal(navigators) -> RespiratorySignal:
    """Per-shot coefficients of the first principal component of the
    navigator series (temporal mean removed). Identical navigators give a
    zero signal."""
    navs = [np.asarray(n, dtype=np.float64) for n in navigators]
    if len(navs) < 1:
        raise ValueError("need at least one navigator image")
    shape = navs[0].shape
    for n in navs:
        if n.shape != shape:
            raise ValueError("navigator images must share one shape")
    x = np.stack([n.ravel() for n in navs], axis=1)
    x -= x.mean(axis=1, keepdims=True)
    # Economy PCA through the small shots-by-shots Gram matrix.
    gram = x.T @ x
    scale = float(np.trace(gram))
    if scale <= 0.0 or not np.isfinite(scale):
        return RespiratorySignal(np.zeros(len(navs)))
    w, v = np.linalg.eigh(gram)
    lead = float(w[-1])
    if lead <= 1e-14 * scale:
        return RespiratorySignal(np.zeros(len(navs)))
    signal = np.sqrt(lead) * v[:, -1]
    nz = np.flatnonzero(np.abs(signal) > 1e-12 * np.abs(signal).max())
    if nz.size and signal[nz[0]] < 0:
        signal = -signal
    return RespiratorySignal(signal)


def bin_shots(signal, n_bins: int) -> BinAssignment:
    """Quantile (equal-count) binning of shots by signal amplitude.

    Bins are numbered in ascending signal order; counts differ by at most
    one (earlier bins take the remainder); ties in amplitude are broken by
    shot index. The reference bin is the most populated one, lowest index
    on ties.
    """
    values = signal.values if isinstance(signal, RespiratorySignal) else np.asarray(signal, dtype=np.float64)
    n_shots = values.size
    if not 1 <= n_bins <= n_shots:
        raise ValueError(f"n_bins must lie in [1, {n_shots}], got {n_bins}")
    order = np.argsort(values, kind="stable")
    bin_of_shot = np.empty(n_shots, dtype=np.intp)
    for b, chunk in enumerate(np.array_split(order, n_bins)):
        bin_of_shot[chunk] = b
    counts = np.bincount(bin_of_shot, minlength=n_bins)
    reference = int(np.argmax(counts))
    return BinAssignment(bin_of_shot=bin_of_shot, n_bins=n_bins, reference_bin=reference)
