"""Dataset file format and PNG export.

A dataset file is one JSON header line (newline terminated) followed by a
raw little-endian payload:

* kind "kspace": complex64 samples, shot-major, then coil-major, then line
  (in the header's line order), then column. Header carries line_lists.
* kind "image": complex64, nx * ny row-major.
* kind "field": float32, the two displacement components as full planes,
  rows first (ux then uy), each row-major.
* kind "mask": float32, nx values of 0.0/1.0.

Values are stored single precision; everything is promoted back to double
on read. Writing the same object twice produces identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import DisplacementField, KSpaceData, SamplingMask

FORMAT_VERSION = 1


class DataFormatError(Exception):
    """Base class for malformed dataset files."""


class UnsupportedVersionError(DataFormatError):
    pass


class TruncatedPayloadError(DataFormatError):
    pass


class DimensionMismatchError(DataFormatError):
    pass


def _header_bytes(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def write_dataset(path, obj, provenance: dict | None = None) -> None:
    """Serialize a KSpaceData, complex image, DisplacementField, or
    SamplingMask to one file."""
    path = Path(path)
    provenance = provenance if provenance is not None else {}
    if isinstance(obj, KSpaceData):
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "kspace",
            "nx": obj.nx,
            "ny": obj.ny,
            "n_coils": obj.n_coils,
            "n_shots": obj.n_shots,
            "dtype": "c64",
            "line_lists": [idx.tolist() for idx in obj.line_indices],
            "provenance": provenance,
        }
        payload = obj.stacked().astype("<c8").tobytes()
    elif isinstance(obj, DisplacementField):
        nx, ny = obj.shape
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "field",
            "nx": nx,
            "ny": ny,
            "n_coils": 0,
            "n_shots": 0,
            "dtype": "f32",
            "line_lists": [],
            "provenance": provenance,
        }
        payload = np.stack([obj.ux, obj.uy]).astype("<f4").tobytes()
    elif isinstance(obj, SamplingMask):
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "mask",
            "nx": obj.nx,
            "ny": 0,
            "n_coils": 0,
            "n_shots": 0,
            "dtype": "f32",
            "line_lists": [],
            "provenance": provenance,
        }
        payload = obj.lines.astype("<f4").tobytes()
    else:
        img = np.asarray(obj)
        if img.ndim != 2:
            raise ValueError(f"cannot serialize object of type {type(obj).__name__} / shape {img.shape}")
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "image",
            "nx": img.shape[0],
            "ny": img.shape[1],
            "n_coils": 0,
            "n_shots": 0,
            "dtype": "c64",
            "line_lists": [],
            "provenance": provenance,
        }
        payload = img.astype("<c8").tobytes()
    path.write_bytes(_header_bytes(header) + payload)


def _required(header: dict, key: str):
    if key not in header:
        raise DataFormatError(f"header is missing required key '{key}'")
    return header[key]


def read_dataset(path):
    """Read a dataset file back into its domain object.

    Returns (object, provenance dict). Raises UnsupportedVersionError,
    TruncatedPayloadError, or DimensionMismatchError for the corresponding
    defects; other malformed content raises DataFormatError.
    """
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataFormatError("file has no header line")
    try:
        header = json.loads(raw[: newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise DataFormatError("header must be a JSON object")

    version = _required(header, "format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"format_version {version} (supported: {FORMAT_VERSION})")

    kind = _required(header, "kind")
    nx = _required(header, "nx")
    ny = _required(header, "ny")
    provenance = header.get("provenance", {})
    payload = raw[newline + 1 :]

    def take(dtype, count, what):
        item = np.dtype(dtype).itemsize
        expected = item * count
        if len(payload) < expected:
            raise TruncatedPayloadError(
                f"{what}: payload holds {len(payload)} bytes, expected {expected}"
            )
        if len(payload) > expected:
            raise DimensionMismatchError(
                f"{what}: payload holds {len(payload)} bytes, header implies {expected}"
            )
        return np.frombuffer(payload, dtype=dtype, count=count)

    if kind == "kspace":
        n_coils = _required(header, "n_coils")
        n_shots = _required(header, "n_shots")
        line_lists = _required(header, "line_lists")
        if not isinstance(line_lists, list) or len(line_lists) != n_shots:
            raise DimensionMismatchError(
                f"header lists {len(line_lists) if isinstance(line_lists, list) else '?'} "
                f"line lists for {n_shots} shots"
            )
        total = sum(n_coils * len(lines) * ny for lines in line_lists)
        flat = take("<c8", total, "kspace payload").astype(np.complex128)
        blocks = []
        offset = 0
        for lines in line_lists:
            size = n_coils * len(lines) * ny
            blocks.append(flat[offset : offset + size].reshape(n_coils, len(lines), ny))
            offset += size
        try:
            obj = KSpaceData(
                nx=nx,
                ny=ny,
                n_coils=n_coils,
                line_indices=tuple(np.asarray(l, dtype=np.intp) for l in line_lists),
                samples=tuple(blocks),
            )
        except ValueError as exc:
            raise DimensionMismatchError(str(exc)) from exc
        return obj, provenance

    if kind == "image":
        flat = take("<c8", nx * ny, "image payload").astype(np.complex128)
        return flat.reshape(nx, ny), provenance

    if kind == "field":
        flat = take("<f4", 2 * nx * ny, "field payload").astype(np.float64)
        planes = flat.reshape(2, nx, ny)
        return DisplacementField(ux=planes[0], uy=planes[1]), provenance

    if kind == "mask":
        flat = take("<f4", nx, "mask payload")
        return SamplingMask(nx=nx, lines=flat > 0.5), provenance

    raise DataFormatError(f"unknown kind '{kind}'")


def export_png(img, path, window: tuple[float, float] = (1.0, 99.0)) -> None:
    """Write |img| as an 8-bit grayscale PNG with percentile windowing.

    Pixels at or below the low percentile map to 0, at or above the high one
    to 255; a constant image becomes uniform mid-gray. Deterministic: the
    same image yields byte-identical files.
    """
    mag = np.abs(np.asarray(img)).astype(np.float64)
    if mag.ndim != 2:
        raise ValueError("can only export 2-D images")
    lo, hi = np.percentile(mag, window)
    if hi <= lo:
        data = np.full(mag.shape, 128, dtype=np.uint8)
    else:
        scaled = np.clip((mag - lo) / (hi - lo), 0.0, 1.0)
        data = np.round(scaled * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(Path(path), format="PNG")


def export_signal_png(values, path, size: tuple[int, int] = (800, 240)) -> None:
    """Simple deterministic polyline plot of a 1-D signal."""
    from PIL import ImageDraw

    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise ValueError("need at least 2 samples to plot")
    w, h = size
    img = PILImage.new("L", (w, h), color=255)
    draw = ImageDraw.Draw(img)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    margin = 10
    xs = margin + (w - 2 * margin) * np.arange(values.size) / (values.size - 1)
    ys = margin + (h - 2 * margin) * (1.0 - (values - lo) / span)
    draw.line(list(zip(xs.tolist(), ys.tolist())), fill=0, width=2)
    for x, y in zip(xs.tolist(), ys.tolist()):
        draw.ellipse([x - 3, y - 3, x + 3, y + 3], fill=0)
    img.save(Path(path), format="PNG")
