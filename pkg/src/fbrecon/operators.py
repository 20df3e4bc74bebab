"""Linear operators of the acquisition model and their exact adjoints.

The forward model per shot is

    data = mask . fft2c( coil * warp(image, field) )

with a field shared by all shots of one respiratory bin. Every operator
here comes with an adjoint that is transpose-exact at double precision
(same interpolation weights scattered instead of gathered, zero-fill
instead of mask-select), so dot-product identities hold to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CoilMaps,
    DisplacementField,
    KSpaceData,
    SamplingMask,
    ShapeMismatchError,
)


# ---------------------------------------------------------------------------
# FFT pair (centered, orthonormal, acting on the last two axes)

def fft2c(img: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D FFT over the last two axes."""
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(img, axes=(-2, -1)), norm="ortho"),
        axes=(-2, -1),
    )


def ifft2c(ksp: np.ndarray) -> np.ndarray:
    """Inverse of fft2c (also its adjoint: the transform is unitary)."""
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(ksp, axes=(-2, -1)), norm="ortho"),
        axes=(-2, -1),
    )


# ---------------------------------------------------------------------------
# Bilinear warp and its transpose

def _interp_weights(field: DisplacementField, shape: tuple[int, int]):
    """Bilinear corner indices (flattened) and weights for the pull warp."""
    nx, ny = shape
    xs = np.arange(nx, dtype=np.float64)[:, None] + field.ux
    ys = np.arange(ny, dtype=np.float64)[None, :] + field.uy
    # clamp-to-edge handles samples outside the grid
    xs = np.clip(xs, 0.0, nx - 1.0)
    ys = np.clip(ys, 0.0, ny - 1.0)
    i0 = np.floor(xs).astype(np.intp)
    j0 = np.floor(ys).astype(np.intp)
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    wx = xs - i0
    wy = ys - j0
    idx = (
        (i0 * ny + j0).ravel(),
        (i0 * ny + j1).ravel(),
        (i1 * ny + j0).ravel(),
        (i1 * ny + j1).ravel(),
    )
    w = (
        ((1.0 - wx) * (1.0 - wy)).ravel(),
        ((1.0 - wx) * wy).ravel(),
        (wx * (1.0 - wy)).ravel(),
        (wx * wy).ravel(),
    )
    return idx, w


def warp(img: np.ndarray, field: DisplacementField) -> np.ndarray:
    """Pull warp: out(x) = img(x + u(x)), bilinear, clamped at the edges.

    Linear in img for a fixed field; a zero field reproduces img exactly.
    """
    img = np.asarray(img)
    if img.shape != field.shape:
        raise ShapeMismatchError(f"image shape {img.shape} vs field shape {field.shape}")
    if field.is_zero:
        return img.copy()
    flat = img.ravel()
    idx, w = _interp_weights(field, img.shape)
    out = w[0] * flat[idx[0]] + w[1] * flat[idx[1]] + w[2] * flat[idx[2]] + w[3] * flat[idx[3]]
    return out.reshape(img.shape)


def _scatter(idx: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    if np.iscomplexobj(values):
        return np.bincount(idx, weights=values.real, minlength=n) + 1j * np.bincount(
            idx, weights=values.imag, minlength=n
        )
    return np.bincount(idx, weights=values, minlength=n)


def warp_adjoint(img: np.ndarray, field: DisplacementField) -> np.ndarray:
    """Exact transpose of warp for the same field: scatter, not inverse warp."""
    img = np.asarray(img)
    if img.shape != field.shape:
        raise ShapeMismatchError(f"image shape {img.shape} vs field shape {field.shape}")
    if field.is_zero:
        return img.copy()
    flat = img.ravel()
    idx, w = _interp_weights(field, img.shape)
    n = flat.size
    out = _scatter(idx[0], w[0] * flat, n)
    for k in (1, 2, 3):
        out += _scatter(idx[k], w[k] * flat, n)
    return out.reshape(img.shape)


# ---------------------------------------------------------------------------
# Forward-difference gradient and its negative transpose

def grad(img: np.ndarray) -> np.ndarray:
    """Forward differences with replicate (Neumann) boundary, shape (2, nx, ny).

    The last row of the row-gradient and last column of the column-gradient
    are zero. ||grad||^2 <= 8.
    """
    img = np.asarray(img)
    g = np.zeros((2,) + img.shape, dtype=np.result_type(img.dtype, np.float64))
    g[0, :-1, :] = img[1:, :] - img[:-1, :]
    g[1, :, :-1] = img[:, 1:] - img[:, :-1]
    return g


def div(p: np.ndarray) -> np.ndarray:
    """Discrete divergence with div = -grad^T exactly (dot-product identity)."""
    p = np.asarray(p)
    if p.ndim != 3 or p.shape[0] != 2:
        raise ShapeMismatchError(f"expected shape (2, nx, ny), got {p.shape}")
    px, py = p[0], p[1]
    out = np.zeros(px.shape, dtype=np.result_type(p.dtype, np.float64))
    out[:-1, :] += px[:-1, :]
    out[1:, :] -= px[:-1, :]
    out[:, :-1] += py[:, :-1]
    out[:, 1:] -= py[:, :-1]
    return out


# ---------------------------------------------------------------------------
# Full encoding operator

@dataclass(frozen=True, eq=False)
class EncodingOperator:
    """mask . fft2c . coil-multiply . warp, one branch per shot.

    Shots of the same bin share that bin's displacement field (fields=None
    means identity motion everywhere). Work common to a bin (warp, coil
    multiply, FFT) is done once per bin and the per-shot masks only select
    lines, so duplicate lines across shots enter the data exactly once each.
    """

    coils: CoilMaps
    masks: tuple[SamplingMask, ...]
    bin_of_shot: tuple[int, ...]
    fields: tuple[DisplacementField, ...] | None = None

    def __post_init__(self):
        masks = tuple(self.masks)
        bos = tuple(int(b) for b in self.bin_of_shot)
        if len(masks) == 0:
            raise ValueError("need at least one shot")
        if len(bos) != len(masks):
            raise ValueError("bin_of_shot must assign every shot")
        for m in masks:
            if m.nx != self.coils.nx:
                raise ShapeMismatchError("mask grid does not match coil maps")
        n_bins = max(bos) + 1
        if min(bos) < 0 or set(bos) != set(range(n_bins)):
            raise ValueError("bins must be numbered 0..n_bins-1 and each must own a shot")
        if self.fields is not None:
            fields = tuple(self.fields)
            if len(fields) != n_bins:
                raise ValueError(f"need one field per bin ({n_bins}), got {len(fields)}")
            for f in fields:
                if f.shape != (self.coils.nx, self.coils.ny):
                    raise ShapeMismatchError("field shape does not match coil maps")
            object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "bin_of_shot", bos)
        shots_by_bin = tuple(
            tuple(r for r, b in enumerate(bos) if b == bin_id) for bin_id in range(n_bins)
        )
        object.__setattr__(self, "_shots_by_bin", shots_by_bin)

    @classmethod
    def static(cls, coils: CoilMaps, masks) -> "EncodingOperator":
        """Identity-motion operator: all shots in one bin, no warp."""
        masks = tuple(masks)
        return cls(coils=coils, masks=masks, bin_of_shot=(0,) * len(masks), fields=None)

    @property
    def n_shots(self) -> int:
        return len(self.masks)

    @property
    def n_bins(self) -> int:
        return len(self._shots_by_bin)

    @property
    def nx(self) -> int:
        return self.coils.nx

    @property
    def ny(self) -> int:
        return self.coils.ny

    def _field(self, bin_id: int) -> DisplacementField | None:
        if self.fields is None:
            return None
        return self.fields[bin_id]


def _encode_blocks(op: EncodingOperator, img: np.ndarray) -> list[np.ndarray]:
    """Per-shot sample blocks (n_coils, n_lines, ny), shot order preserved."""
    blocks: list[np.ndarray | None] = [None] * op.n_shots
    for bin_id, shot_ids in enumerate(op._shots_by_bin):
        f = op._field(bin_id)
        moved = img if f is None or f.is_zero else warp(img, f)
        ksp = fft2c(op.coils.maps * moved[None, :, :])
        for r in shot_ids:
            blocks[r] = ksp[:, op.masks[r].line_indices(), :]
    return blocks  # type: ignore[return-value]


def encode(op: EncodingOperator, img: np.ndarray) -> KSpaceData:
    """Forward model: image -> sampled multi-shot k-space."""
    img = np.asarray(img, dtype=np.complex128)
    if img.shape != (op.nx, op.ny):
        raise ShapeMismatchError(f"image shape {img.shape} vs operator grid {(op.nx, op.ny)}")
    blocks = _encode_blocks(op, img)
    return KSpaceData(
        nx=op.nx,
        ny=op.ny,
        n_coils=op.coils.n_coils,
        line_indices=tuple(m.line_indices() for m in op.masks),
        samples=tuple(blocks),
    )


def _adjoint_from_blocks(op: EncodingOperator, blocks) -> np.ndarray:
    out = np.zeros((op.nx, op.ny), dtype=np.complex128)
    for bin_id, shot_ids in enumerate(op._shots_by_bin):
        filled = np.zeros((op.coils.n_coils, op.nx, op.ny), dtype=np.complex128)
        for r in shot_ids:
            filled[:, op.masks[r].line_indices(), :] += blocks[r]
        coil_imgs = ifft2c(filled)
        combined = np.sum(np.conj(op.coils.maps) * coil_imgs, axis=0)
        f = op._field(bin_id)
        if f is None or f.is_zero:
            out += combined
        else:
            out += warp_adjoint(combined, f)
    return out


def encode_adjoint(op: EncodingOperator, ksp: KSpaceData) -> np.ndarray:
    """Exact adjoint: zero-fill, inverse FFT, conjugate coil combine, scatter."""
    if (ksp.nx, ksp.ny, ksp.n_coils, ksp.n_shots) != (op.nx, op.ny, op.coils.n_coils, op.n_shots):
        raise ShapeMismatchError("k-space layout does not match operator")
    for r in range(op.n_shots):
        if not np.array_equal(ksp.line_indices[r], op.masks[r].line_indices()):
            raise ShapeMismatchError(f"shot {r}: line list does not match operator mask")
    return _adjoint_from_blocks(op, ksp.samples)


def estimate_norm(op: EncodingOperator, n_iters: int = 30, seed: int = 0) -> float:
    """Largest eigenvalue of E^H E by power iteration (Rayleigh quotient).

    The returned estimate is monotone nondecreasing in n_iters for a fixed
    seed. For a full-mask, unit-coil, zero-field operator it converges to 1.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((op.nx, op.ny)) + 1j * rng.standard_normal((op.nx, op.ny))
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(n_iters):
        y = _adjoint_from_blocks(op, _encode_blocks(op, x))
        est = float(np.real(np.vdot(x, y)))
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
    return est
