"""Scalar images, volumes, masks, and simple lossless file formats.

Pixel data lives in float64 numpy arrays indexed ``[row, col]`` (row-major),
volumes as ``[slice, row, col]``.  Physical spacing is millimetres per pixel,
ordered ``(sx, sy)`` / ``(sx, sy, sz)`` to match the x-fastest raw payload
layout.

On-disk formats:

* volumes: an MHD-style text header (``Key = Value`` lines) next to a raw
  little-endian payload file, x-fastest, then y, then z;
* 8-bit images and masks: binary PGM (P5, maxval 255), mask foreground
  stored as 255;
* RGB overlays: binary PPM (P6).

All types are immutable value objects; every function here is pure and
thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ELEMENT_TYPES = {
    "uint8": np.dtype("<u1"),
    "int16": np.dtype("<i2"),
    "uint16": np.dtype("<u2"),
    "float32": np.dtype("<f4"),
}


class FileFormatError(Exception):
    """A file exists but its contents do not match the expected format."""


@dataclass(frozen=True, eq=False)
class ScalarImage2D:
    """One 2-D slice of scalar intensities with (sx, sy) mm pixel spacing."""

    values: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("image values must form a non-empty 2-D array")
        if not np.isfinite(v).all():
            raise ValueError("image contains non-finite values")
        sp = (float(self.spacing[0]), float(self.spacing[1]))
        if len(self.spacing) != 2 or sp[0] <= 0 or sp[1] <= 0:
            raise ValueError("spacing components must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", sp)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Stack of co-registered slices with (sx, sy, sz) mm voxel spacing."""

    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError("volume values must form a 3-D array")
        if not np.isfinite(v).all():
            raise ValueError("volume contains non-finite values")
        sp = tuple(float(s) for s in self.spacing)
        if len(sp) != 3 or any(s <= 0 for s in sp):
            raise ValueError("spacing components must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", sp)

    @property
    def depth(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class BinaryMask2D:
    """Per-pixel foreground (1) / background (0) labels."""

    labels: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.labels)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError("mask labels must form a non-empty 2-D array")
        m = m.astype(np.uint8, copy=True)
        if not np.isin(m, (0, 1)).all():
            raise ValueError("mask labels must be exactly 0 or 1")
        object.__setattr__(self, "labels", m)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def foreground_count(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True, eq=False)
class RgbImage2D:
    """8-bit RGB image stored as three (height, width) channel planes."""

    channels: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.channels, dtype=np.uint8)
        if c.ndim != 3 or c.shape[0] != 3:
            raise ValueError("channels must have shape (3, height, width)")
        object.__setattr__(self, "channels", c)

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


# ---------------------------------------------------------------------------
# MHD-style volume I/O


def _parse_header(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FileFormatError(f"{path}:{lineno}: malformed header line {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FileFormatError(f"{path}:{lineno}: malformed header key")
        entries[key] = value.strip()
    return entries


def read_volume(path: str | Path) -> Volume3D:
    """Read an MHD-style header plus raw payload into a Volume3D.

    2-D headers are read as single-slice volumes.  Raises FileNotFoundError
    for missing files and FileFormatError for malformed headers, unsupported
    element types, or a payload whose size disagrees with DimSize.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such header file: {path}")
    hdr = _parse_header(path)

    for key in ("NDims", "DimSize", "ElementType", "ElementDataFile"):
        if key not in hdr:
            raise FileFormatError(f"{path}: missing required header key {key}")
    try:
        ndims = int(hdr["NDims"])
    except ValueError:
        raise FileFormatError(f"{path}: NDims is not an integer") from None
    if ndims not in (2, 3):
        raise FileFormatError(f"{path}: NDims must be 2 or 3, got {ndims}")

    try:
        dims = [int(t) for t in hdr["DimSize"].split()]
    except ValueError:
        raise FileFormatError(f"{path}: DimSize entries are not integers") from None
    if len(dims) != ndims or any(d < 1 for d in dims):
        raise FileFormatError(f"{path}: DimSize must list {ndims} positive sizes")

    etype = hdr["ElementType"]
    if etype not in ELEMENT_TYPES:
        raise FileFormatError(f"{path}: unsupported ElementType {etype!r}")
    dtype = ELEMENT_TYPES[etype]

    if "ElementSpacing" in hdr:
        try:
            spacing = [float(t) for t in hdr["ElementSpacing"].split()]
        except ValueError:
            raise FileFormatError(f"{path}: ElementSpacing entries are not numbers") from None
        if len(spacing) != ndims:
            raise FileFormatError(f"{path}: ElementSpacing must list {ndims} values")
    else:
        spacing = [1.0] * ndims

    raw_path = path.parent / hdr["ElementDataFile"]
    if not raw_path.is_file():
        raise FileNotFoundError(f"no such raw data file: {raw_path}")
    payload = raw_path.read_bytes()

    if ndims == 2:
        dims = dims + [1]
        spacing = spacing + [1.0]
    w, h, d = dims
    expected = w * h * d * dtype.itemsize
    if len(payload) != expected:
        raise FileFormatError(
            f"{raw_path}: payload size mismatch: expected {expected} bytes, "
            f"got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(d, h, w)
    arr = values.astype(np.float64)
    if not np.isfinite(arr).all():
        raise FileFormatError(f"{raw_path}: payload contains non-finite values")
    return Volume3D(arr, (spacing[0], spacing[1], spacing[2]))


def write_volume(vol: Volume3D, path: str | Path) -> None:
    """Write a volume as header + float32 raw pair, overwriting existing files."""
    if vol.depth < 1 or vol.height < 1 or vol.width < 1:
        raise ValueError("empty volume")
    path = Path(path)
    raw_name = path.stem + ".raw"
    sx, sy, sz = vol.spacing
    header = (
        "NDims = 3\n"
        f"DimSize = {vol.width} {vol.height} {vol.depth}\n"
        "ElementType = float32\n"
        f"ElementSpacing = {sx!r} {sy!r} {sz!r}\n"
        f"ElementDataFile = {raw_name}\n"
    )
    path.write_text(header)
    (path.parent / raw_name).write_bytes(
        np.ascontiguousarray(vol.values, dtype="<f4").tobytes()
    )


def extract_slice(vol: Volume3D, k: int) -> ScalarImage2D:
    """Copy slice k of a volume as a 2-D image with the (sx, sy) spacing."""
    if not 0 <= k < vol.depth:
        raise ValueError(f"slice index {k} out of range for depth {vol.depth}")
    return ScalarImage2D(vol.values[k].copy(), vol.spacing[:2])


# ---------------------------------------------------------------------------
# Intensity windowing


def normalize_window(img: ScalarImage2D, lo: float, hi: float) -> ScalarImage2D:
    """Map intensities linearly from [lo, hi] to [0, 1], clamping outside."""
    if not lo < hi:
        raise ValueError(f"window requires lo < hi, got [{lo}, {hi}]")
    out = np.clip((img.values - lo) / (hi - lo), 0.0, 1.0)
    return ScalarImage2D(out, img.spacing)


def to_u8(img: ScalarImage2D, lo: float, hi: float) -> np.ndarray:
    """Window an image into 8-bit grayscale values."""
    norm = normalize_window(img, lo, hi)
    return np.rint(norm.values * 255.0).astype(np.uint8)


def _auto_u8(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# Overlay rendering


def mask_contour(mask: BinaryMask2D) -> np.ndarray:
    """Boolean map of foreground pixels 4-adjacent to a background pixel."""
    m = mask.labels.astype(bool)
    next_to_bg = np.zeros_like(m)
    next_to_bg[1:, :] |= ~m[:-1, :]
    next_to_bg[:-1, :] |= ~m[1:, :]
    next_to_bg[:, 1:] |= ~m[:, :-1]
    next_to_bg[:, :-1] |= ~m[:, 1:]
    return m & next_to_bg


def render_overlay(
    ct: ScalarImage2D,
    gt: BinaryMask2D,
    pred: BinaryMask2D | None = None,
) -> RgbImage2D:
    """Overlay the ground-truth contour (green) and prediction fill (red) on CT.

    The CT slice is auto-windowed to 8-bit grayscale.  Prediction foreground
    is blended 50% red over the base; ground-truth contour pixels are drawn
    on top in pure green.  Output dimensions always equal the inputs'.
    """
    if (gt.height, gt.width) != (ct.height, ct.width):
        raise ValueError("ground-truth mask dimensions do not match the CT slice")
    if pred is not None and (pred.height, pred.width) != (ct.height, ct.width):
        raise ValueError("prediction mask dimensions do not match the CT slice")

    base = _auto_u8(ct.values).astype(np.float64)
    r, g, b = base.copy(), base.copy(), base.copy()

    if pred is not None:
        fill = pred.labels.astype(bool)
        r[fill] = (base[fill] + 255.0) / 2.0
        g[fill] = base[fill] / 2.0
        b[fill] = base[fill] / 2.0

    contour = mask_contour(gt)
    r[contour], g[contour], b[contour] = 0.0, 255.0, 0.0

    channels = np.stack([np.rint(r), np.rint(g), np.rint(b)]).astype(np.uint8)
    return RgbImage2D(channels)


# ---------------------------------------------------------------------------
# PGM / PPM


def write_pgm(values: np.ndarray, path: str | Path) -> None:
    """Write an 8-bit grayscale array as binary PGM (P5, maxval 255)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError("PGM payload must be 2-D")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def _read_netpbm(path: Path, magic: bytes, planes: int) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(magic):
        raise FileFormatError(f"{path}: not a {magic.decode()} file")
    pos = len(magic)
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FileFormatError(f"{path}: truncated header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise FileFormatError(f"{path}: non-numeric header field") from None
    pos += 1  # single whitespace byte separating header from payload
    w, h, maxval = fields
    if maxval != 255:
        raise FileFormatError(f"{path}: only maxval 255 is supported")
    expected = w * h * planes
    payload = data[pos : pos + expected]
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: payload size mismatch: expected {expected} bytes, "
            f"got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(
        (h, w) if planes == 1 else (h, w, planes)
    )


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) file into a (height, width) uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such PGM file: {path}")
    return _read_netpbm(path, b"P5", 1)


def write_mask_pgm(mask: BinaryMask2D, path: str | Path) -> None:
    """Write a binary mask as PGM with foreground stored as 255."""
    write_pgm(mask.labels * np.uint8(255), path)


def read_mask_pgm(path: str | Path) -> BinaryMask2D:
    """Read a PGM mask; any nonzero pixel counts as foreground."""
    return BinaryMask2D((read_pgm(path) > 0).astype(np.uint8))


def write_ppm(img: RgbImage2D, path: str | Path) -> None:
    """Write an RGB image as binary PPM (P6, maxval 255)."""
    interleaved = np.ascontiguousarray(img.channels.transpose(1, 2, 0))
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        f.write(interleaved.tobytes())


def read_ppm(path: str | Path) -> RgbImage2D:
    """Read a binary PPM (P6) file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such PPM file: {path}")
    interleaved = _read_netpbm(path, b"P6", 3)
    return RgbImage2D(interleaved.transpose(2, 0, 1))
