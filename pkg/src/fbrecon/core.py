"""Core data types and exact-arithmetic primitives shared by every module.

Conventions used throughout the package:

* Images are 2-D complex numpy arrays of shape ``(nx, ny)``, row-major.
  Rows (axis 0, length ``nx``) are phase-encode lines, columns (axis 1,
  length ``ny``) run along the readout. A k-space "line" is one full row.
* Computation is double precision (complex128/float64). Single precision
  appears only inside file payloads (see :mod:`fbrecon.fileio`).
* Displacement fields are in pixel units and follow the target-to-source
  pull convention: ``warped(x) = source(x + u(x))``.
* Every container below is immutable after construction; the wrapped numpy
  arrays are marked non-writeable so accidental in-place edits fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MIN_GRID = 8


class ShapeMismatchError(ValueError):
    """Two objects that must share a layout do not."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


def as_image(arr) -> np.ndarray:
    """Validate and return a 2-D complex image (complex128 copy).

    Raises ValueError for wrong rank, grids smaller than 8 on either axis,
    or non-finite values.
    """
    img = np.asarray(arr)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    nx, ny = img.shape
    if nx < MIN_GRID or ny < MIN_GRID:
        raise ValueError(f"image grid must be at least {MIN_GRID}x{MIN_GRID}, got {nx}x{ny}")
    img = img.astype(np.complex128, copy=True)
    if not np.all(np.isfinite(img.view(np.float64))):
        raise ValueError("image contains non-finite values")
    return img


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Boolean selection of phase-encode lines out of ``nx``."""

    nx: int
    lines: np.ndarray  # bool, shape (nx,)

    def __post_init__(self):
        lines = np.asarray(self.lines, dtype=bool)
        if lines.shape != (self.nx,):
            raise ValueError(f"mask must have shape ({self.nx},), got {lines.shape}")
        if not lines.any():
            raise ValueError("mask selects no lines")
        object.__setattr__(self, "lines", _freeze(lines))

    @classmethod
    def from_lines(cls, nx: int, line_indices) -> "SamplingMask":
        idx = np.asarray(line_indices, dtype=np.intp)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("need a non-empty 1-D list of line indices")
        if idx.min() < 0 or idx.max() >= nx:
            raise ValueError(f"line indices out of range [0, {nx})")
        lines = np.zeros(nx, dtype=bool)
        lines[idx] = True
        return cls(nx=nx, lines=lines)

    @property
    def n_lines(self) -> int:
        return int(self.lines.sum())

    @property
    def acceleration(self) -> float:
        """nx divided by the number of selected lines."""
        return self.nx / self.n_lines

    def line_indices(self) -> np.ndarray:
        return np.flatnonzero(self.lines)


@dataclass(frozen=True, eq=False)
class CoilMaps:
    """Complex coil sensitivity maps, shape (n_coils, nx, ny).

    Maps are expected normalized: sum of squared magnitudes across coils in
    (0, 1 + 1e-6] at every pixel (see simulator.make_coil_maps).
    """

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise ValueError(f"coil maps must have shape (n_coils, nx, ny), got {maps.shape}")
        if not np.all(np.isfinite(maps.view(np.float64))):
            raise ValueError("coil maps contain non-finite values")
        sos = np.sum(np.abs(maps) ** 2, axis=0)
        if sos.min() <= 0.0 or sos.max() > 1.0 + 1e-6:
            raise ValueError("coil map sum-of-squares must lie in (0, 1 + 1e-6] everywhere")
        object.__setattr__(self, "maps", _freeze(maps))

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def nx(self) -> int:
        return self.maps.shape[1]

    @property
    def ny(self) -> int:
        return self.maps.shape[2]


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Pixel-unit displacement field (ux along rows, uy along columns).

    Pull convention: ``warp(source, u)(x) = source(x + u(x))``.
    """

    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        ux = np.asarray(self.ux, dtype=np.float64)
        uy = np.asarray(self.uy, dtype=np.float64)
        if ux.ndim != 2 or ux.shape != uy.shape:
            raise ValueError(f"field components must be equal-shape 2-D arrays, got {ux.shape} and {uy.shape}")
        if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
            raise ValueError("displacement field contains non-finite values")
        object.__setattr__(self, "ux", _freeze(ux))
        object.__setattr__(self, "uy", _freeze(uy))
        object.__setattr__(self, "_is_zero", bool(not ux.any() and not uy.any()))

    @classmethod
    def zero(cls, nx: int, ny: int) -> "DisplacementField":
        return cls(np.zeros((nx, ny)), np.zeros((nx, ny)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ux.shape

    @property
    def is_zero(self) -> bool:
        return self._is_zero

    def max_abs(self) -> float:
        """Largest displacement magnitude in pixels."""
        return float(np.sqrt(self.ux**2 + self.uy**2).max())


@dataclass(frozen=True, eq=False)
class KSpaceData:
    """Multi-shot multi-coil Cartesian k-space samples.

    Per shot: sorted unique line indices plus a complex sample block of
    shape (n_coils, n_lines, ny). Sample order inside a shot is
    coil-major, then line (in line_indices order), then column.
    """

    nx: int
    ny: int
    n_coils: int
    line_indices: tuple[np.ndarray, ...]
    samples: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.line_indices) != len(self.samples) or len(self.samples) == 0:
            raise ValueError("need one line list and one sample block per shot, at least one shot")
        lines_out = []
        samples_out = []
        for r, (idx, blk) in enumerate(zip(self.line_indices, self.samples)):
            idx = np.asarray(idx, dtype=np.intp)
            blk = np.asarray(blk, dtype=np.complex128)
            if idx.ndim != 1 or idx.size == 0:
                raise ValueError(f"shot {r}: line list must be non-empty and 1-D")
            if idx.min() < 0 or idx.max() >= self.nx:
                raise ValueError(f"shot {r}: line indices out of range [0, {self.nx})")
            if np.any(np.diff(idx) <= 0):
                raise ValueError(f"shot {r}: line indices must be strictly increasing")
            if blk.shape != (self.n_coils, idx.size, self.ny):
                raise ValueError(
                    f"shot {r}: sample block shape {blk.shape} does not match "
                    f"({self.n_coils}, {idx.size}, {self.ny})"
                )
            lines_out.append(_freeze(idx))
            samples_out.append(_freeze(blk))
        object.__setattr__(self, "line_indices", tuple(lines_out))
        object.__setattr__(self, "samples", tuple(samples_out))

    @property
    def n_shots(self) -> int:
        return len(self.samples)

    @property
    def total_samples(self) -> int:
        return sum(s.size for s in self.samples)

    def shot_masks(self) -> tuple[SamplingMask, ...]:
        return tuple(SamplingMask.from_lines(self.nx, idx) for idx in self.line_indices)

    def subset(self, shots: Sequence[int]) -> "KSpaceData":
        """New KSpaceData holding only the given shots, in the given order."""
        shots = list(shots)
        if len(shots) == 0:
            raise ValueError("subset needs at least one shot")
        for r in shots:
            if not 0 <= r < self.n_shots:
                raise ValueError(f"shot index {r} out of range [0, {self.n_shots})")
        return KSpaceData(
            nx=self.nx,
            ny=self.ny,
            n_coils=self.n_coils,
            line_indices=tuple(self.line_indices[r] for r in shots),
            samples=tuple(self.samples[r] for r in shots),
        )

    def stacked(self) -> np.ndarray:
        """All samples as one 1-D complex vector, shot-major."""
        return np.concatenate([blk.ravel() for blk in self.samples])

    def same_layout(self, other: "KSpaceData") -> bool:
        if (self.nx, self.ny, self.n_coils, self.n_shots) != (other.nx, other.ny, other.n_coils, other.n_shots):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.line_indices, other.line_indices))


@dataclass(frozen=True)
class AcquisitionConfig:
    """Geometry and protocol of one simulated multi-shot acquisition."""

    nx: int
    ny: int
    n_coils: int
    n_shots: int
    n_center_lines: int
    n_periphery_lines_per_shot: int
    n_bins: int
    noise_std: float = 0.0
    golden_fraction: float = 0.618

    @property
    def shot_acceleration(self) -> float:
        """nx over lines acquired per shot."""
        return self.nx / (self.n_center_lines + self.n_periphery_lines_per_shot)

    @property
    def periphery_acceleration(self) -> float:
        """Peripheral lines available over peripheral lines acquired per shot."""
        return (self.nx - self.n_center_lines) / self.n_periphery_lines_per_shot

    def validate(self) -> list[str]:
        return validate_config(self)


def validate_config(config: AcquisitionConfig) -> list[str]:
    """Return a list of human-readable invariant violations (empty == valid)."""
    v = []
    if config.nx < MIN_GRID or config.ny < MIN_GRID:
        v.append(f"grid must be at least {MIN_GRID}x{MIN_GRID}, got {config.nx}x{config.ny}")
    if config.n_coils < 1:
        v.append("n_coils must be >= 1")
    if config.n_shots < 1:
        v.append("n_shots must be >= 1")
    if config.n_center_lines < 1:
        v.append("n_center_lines must be >= 1 (the fully sampled center feeds self-navigation)")
    if config.n_periphery_lines_per_shot < 0:
        v.append("n_periphery_lines_per_shot must be >= 0")
    if config.n_center_lines + config.n_periphery_lines_per_shot > config.nx:
        v.append(
            "center plus periphery lines per shot "
            f"({config.n_center_lines} + {config.n_periphery_lines_per_shot}) exceed nx = {config.nx}"
        )
    if not 1 <= config.n_bins <= max(config.n_shots, 1):
        v.append(f"n_bins must lie in [1, n_shots] = [1, {config.n_shots}], got {config.n_bins}")
    if not np.isfinite(config.noise_std) or config.noise_std < 0:
        v.append("noise_std must be finite and >= 0")
    if not 0.0 < config.golden_fraction < 1.0:
        v.append(f"golden_fraction must lie in (0, 1), got {config.golden_fraction}")
    return v


@dataclass(frozen=True)
class ReconParams:
    """Knobs of the Beltrami-regularized solvers.

    lam=None picks the data-driven default at solve time,
    0.01 * max |E^H s|; the value actually used is recorded in the
    SolveReport.
    """

    lam: float | None = None
    beta: float = 10.0
    max_iters: int = 200
    tol: float = 1e-6
    step_safety: float = 0.99

    def __post_init__(self):
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("lam must be positive and finite (or None for the default heuristic)")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive and finite")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (np.isfinite(self.tol) and 0 < self.tol < 1):
            raise ValueError("tol must lie in (0, 1)")
        if not (np.isfinite(self.step_safety) and 0 < self.step_safety < 1):
            raise ValueError("step_safety must lie in (0, 1)")


def inner_product(a, b) -> complex:
    """Complex inner product, conjugate-linear in the first argument.

    Accepts two equal-shape ndarrays or two KSpaceData with identical
    layouts. inner_product(a, a) is real and >= 0 up to rounding.
    """
    if isinstance(a, KSpaceData) or isinstance(b, KSpaceData):
        if not (isinstance(a, KSpaceData) and isinstance(b, KSpaceData)):
            raise ShapeMismatchError("cannot mix KSpaceData with plain arrays")
        if not a.same_layout(b):
            raise ShapeMismatchError("k-space layouts differ")
        return complex(np.vdot(a.stacked(), b.stacked()))
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))
