"""Array containers (raw little-endian payload plus JSON sidecar) and logs.

Byte layout: ``NAME.bin`` holds the values in row-major order as
little-endian IEEE-754 numbers (complex values as interleaved real and
imaginary parts). ``NAME.json`` holds the metadata::

    {"format_version": 1, "shape": [...], "dtype": "f32|f64|c64|c128",
     "axis_labels": [...], "pixel_size_nm": float | null,
     "fresnel_number": float | null, "angles_deg": [...] | null,
     "extra": {...}}
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FORMAT_VERSION",
    "ArrayContainer",
    "write_container",
    "read_container",
    "atomic_write_bytes",
    "atomic_write_text",
    "write_history",
    "read_history",
    "normalize_image",
    "export_image",
    "read_image",
]

FORMAT_VERSION = 1

DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "c64": np.dtype("<c8"),
    "c128": np.dtype("<c16"),
}
_CODES = {v.str: k for k, v in DTYPES.items()}


class ContainerError(ValueError):
    """Malformed or inconsistent container on disk."""


@dataclass
class ArrayContainer:
    data: np.ndarray
    axis_labels: list | None = None
    pixel_size_nm: float | None = None
    fresnel_number: float | None = None
    angles_deg: list | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.dtype.newbyteorder("<").str not in _CODES:
            raise ContainerError(f"unsupported dtype {self.data.dtype}")
        if self.axis_labels is not None and len(self.axis_labels) != self.data.ndim:
            raise ContainerError(f"{len(self.axis_labels)} axis labels for a {self.data.ndim}D array")

    @property
    def dtype_code(self):
        return _CODES[self.data.dtype.newbyteorder("<").str]

    @property
    def angles_rad(self):
        return None if self.angles_deg is None else np.deg2rad(np.asarray(self.angles_deg, dtype=float))

    def metadata(self):
        return {
            "format_version": FORMAT_VERSION,
            "shape": list(self.data.shape),
            "dtype": self.dtype_code,
            "axis_labels": self.axis_labels,
            "pixel_size_nm": self.pixel_size_nm,
            "fresnel_number": self.fresnel_number,
            "angles_deg": None if self.angles_deg is None else [float(a) for a in self.angles_deg],
            "extra": self.extra,
        }


def _paths(path):
    p = Path(path)
    if p.suffix in (".bin", ".json"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".bin"), p.with_name(p.name + ".json")


def atomic_write_bytes(path, payload):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_container(path, container):
    """Write ``container`` as ``path.bin`` plus ``path.json``; returns both paths."""
    if not isinstance(container, ArrayContainer):
        container = ArrayContainer(container)
    bin_path, json_path = _paths(path)
    arr = np.ascontiguousarray(container.data, dtype=DTYPES[container.dtype_code])
    atomic_write_bytes(bin_path, arr.tobytes(order="C"))
    atomic_write_text(json_path, json.dumps(container.metadata(), indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def read_container(path):
    """Read a container written by :func:`write_container`."""
    bin_path, json_path = _paths(path)
    if not json_path.exists() or not bin_path.exists():
        raise FileNotFoundError(f"container {bin_path.with_suffix('')} not found (need .bin and .json)")
    try:
        meta = json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise ContainerError(f"{json_path}: invalid JSON ({exc})") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"{json_path}: unsupported format_version {meta.get('format_version')}")
    code = meta.get("dtype")
    if code not in DTYPES:
        raise ContainerError(f"{json_path}: unknown dtype {code!r}")
    shape = tuple(int(n) for n in meta.get("shape", ()))
    dt = DTYPES[code]
    raw = bin_path.read_bytes()
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(raw) != expected:
        raise ContainerError(f"{bin_path}: payload has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    return ArrayContainer(
        data,
        axis_labels=meta.get("axis_labels"),
        pixel_size_nm=meta.get("pixel_size_nm"),
        fresnel_number=meta.get("fresnel_number"),
        angles_deg=meta.get("angles_deg"),
        extra=meta.get("extra") or {},
    )


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_history(path, records):
    """Write one JSON object per line (step, alpha, gamma, cg, residual, ...)."""
    lines = [json.dumps({k: _jsonable(v) for k, v in r.items()}, sort_keys=True) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_history(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def normalize_image(img, normalization="minmax", p_low=1.0, p_high=99.0, bits=8):
    """Map a real image to unsigned integers of the given bit depth.

    Returns the integer image and a dict describing the mapping. Values
    outside ``[lo, hi]`` are clipped. A degenerate range (``hi == lo``) maps
    every pixel to mid-gray.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    top = 2**bits - 1
    dtype = np.uint8 if bits == 8 else np.uint16
    if normalization == "minmax":
        lo, hi = float(img.min()), float(img.max())
    elif normalization == "percentile":
        if not 0 <= p_low < p_high <= 100:
            raise ValueError(f"invalid percentiles {p_low}, {p_high}")
        lo, hi = (float(v) for v in np.percentile(img, [p_low, p_high]))
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    info = {"normalization": normalization, "low": lo, "high": hi, "bits": bits}
    if normalization == "percentile":
        info.update(p_low=p_low, p_high=p_high)
    if not hi > lo:
        info["degenerate"] = "constant range mapped to mid-gray"
        return np.full(img.shape, (top + 1) // 2, dtype=dtype), info
    scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    info["clipped_low"] = int(np.count_nonzero(img < lo))
    info["clipped_high"] = int(np.count_nonzero(img > hi))
    return np.rint(scaled * top).astype(dtype), info


def export_image(img, path, normalization="minmax", p_low=1.0, p_high=99.0, bits=8):
    """Write a grayscale PNG plus a ``.txt`` sidecar documenting the mapping."""
    from PIL import Image

    q, info = normalize_image(img, normalization, p_low, p_high, bits)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".png", dir=path.parent)
    os.close(fd)
    try:
        Image.fromarray(q).save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    lines = [f"{k} = {v}" for k, v in info.items()]
    lines.append(f"value = low + (high - low) * pixel / {2**bits - 1}")
    atomic_write_text(path.with_suffix(path.suffix + ".txt"), "\n".join(lines) + "\n")
    return q, info


def read_image(path):
    """Read a grayscale PNG back as an integer array."""
    from PIL import Image

    with Image.open(path) as im:
        return np.array(im)
