"""Depth/disparity raster ingestion and postprocessing.

Covers the NPY v1.0 reader/writer used for prediction arrays, bilinear
resizing, disparity-to-depth conversion, 8-bit normalization and inversion,
least-squares scale fitting against ground truth, and the universal validity
mask derived from the whole frame sequence.
"""

from __future__ import annotations

import ast
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCRS = {"<f4": np.float32, "<f8": np.float64}


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters plus the stereo baseline used for disparity conversion."""

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float = 0.0

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive (fx=%g, fy=%g)" % (self.fx, self.fy))


@dataclass
class DepthMap:
    """2D raster of per-pixel depth, disparity, or normalized 8-bit values.

    ``values`` is (H, W) float64; ``mask`` marks pixels that carry meaningful
    data. Values must be finite wherever the mask is true.
    """

    values: np.ndarray
    mask: np.ndarray
    kind: str = "depth"

    KINDS = ("depth", "disparity", "normalized8bit")

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("depth raster must be 2-dimensional, got shape %r" % (self.values.shape,))
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape %r does not match values shape %r" % (self.mask.shape, self.values.shape))
        if self.kind not in self.KINDS:
            raise ValueError("unknown raster kind %r" % self.kind)
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("non-finite values inside the valid mask")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def with_mask(self, extra_mask: np.ndarray) -> "DepthMap":
        """Intersect an additional validity mask into this map."""
        extra_mask = np.asarray(extra_mask, dtype=bool)
        if extra_mask.shape != self.values.shape:
            raise ValueError("mask shape mismatch: %r vs %r" % (extra_mask.shape, self.values.shape))
        return DepthMap(self.values.copy(), self.mask & extra_mask, self.kind)


# ---------------------------------------------------------------------------
# NPY v1.0 parsing


def read_npy_2d(path: str | Path, kind: str = "depth") -> DepthMap:
    """Read a 2-D float NPY (format v1.0, C order, <f4 or <f8) bit-exactly.

    The caller decides how to interpret the raster via ``kind``. The returned
    mask is all-true; downstream conversions mark degenerate pixels invalid.
    """
    raw = Path(path).read_bytes()
    if raw[:6] != NPY_MAGIC:
        raise ValueError("%s: not an NPY file" % path)
    if len(raw) < 10:
        raise ValueError("%s: truncated NPY header" % path)
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise ValueError("%s: unsupported NPY version %d.%d" % (path, major, minor))
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise ValueError("%s: truncated NPY header" % path)
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise ValueError("%s: malformed NPY header dict" % path) from exc
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= set(header):
        raise ValueError("%s: malformed NPY header dict" % path)
    if header["fortran_order"]:
        raise ValueError("%s: unsupported array order (fortran_order=True)" % path)
    descr = header["descr"]
    if descr not in _SUPPORTED_DESCRS:
        raise ValueError("%s: unsupported dtype %r (need <f4 or <f8)" % (path, descr))
    shape = tuple(header["shape"])
    if len(shape) != 2:
        raise ValueError("%s: expected a 2-dimensional array, got shape %r" % (path, shape))
    dtype = np.dtype(_SUPPORTED_DESCRS[descr]).newbyteorder("<")
    expected = shape[0] * shape[1] * dtype.itemsize
    payload = raw[header_end:]
    if len(payload) < expected:
        raise ValueError("%s: payload shorter than header shape implies" % path)
    values = np.frombuffer(payload[:expected], dtype=dtype).reshape(shape)
    return DepthMap(values.astype(values.dtype.newbyteorder("="), copy=True), None, kind)


def write_npy_2d(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D float32/float64 array as NPY format v1.0, C order."""
    values = np.ascontiguousarray(values)
    if values.ndim != 2:
        raise ValueError("expected a 2-dimensional array, got shape %r" % (values.shape,))
    if values.dtype == np.float32:
        descr = "<f4"
    elif values.dtype == np.float64:
        descr = "<f8"
    else:
        raise ValueError("unsupported dtype %r (need float32 or float64)" % values.dtype)
    header = "{'descr': '%s', 'fortran_order': False, 'shape': (%d, %d), }" % (
        descr,
        values.shape[0],
        values.shape[1],
    )
    # Pad so that magic + version + length field + header is a multiple of 64.
    unpadded = len(NPY_MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    with open(path, "wb") as fh:
        fh.write(NPY_MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("latin1"))
        fh.write(values.astype(values.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))


# ---------------------------------------------------------------------------
# PNG rasters


def read_depth_png(path: str | Path, unit_scale: float = 1.0) -> DepthMap:
    """Read an 8- or 16-bit grayscale PNG as depth, scaled by ``unit_scale``."""
    img = Image.open(path)
    if img.mode not in ("L", "I", "I;16", "I;16B"):
        img = img.convert("I")
    raw = np.asarray(img, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError("%s: expected a single-channel raster" % path)
    return DepthMap(raw * unit_scale, None, "depth")


def write_gray8_png(path: str | Path, values: np.ndarray) -> None:
    """Write an (H, W) array already in [0, 255] as an 8-bit grayscale PNG."""
    arr = np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def write_gray16_png(path: str | Path, values: np.ndarray) -> None:
    """Write an (H, W) integer array in [0, 65535] as a 16-bit grayscale PNG."""
    arr = np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


# ---------------------------------------------------------------------------
# Postprocessing


def resize_bilinear(depth: DepthMap, width: int, height: int) -> DepthMap:
    """Resize to (height, width) with corner-aligned bilinear interpolation.

    Sample positions that land exactly on source pixels reproduce them
    unchanged. An output pixel is valid only if every source pixel that
    contributes with nonzero weight is valid.
    """
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be positive, got (%d, %d)" % (width, height))
    src_h, src_w = depth.shape
    ys = np.linspace(0.0, src_h - 1.0, height) if height > 1 else np.zeros(1)
    xs = np.linspace(0.0, src_w - 1.0, width) if width > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, src_h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    v = depth.values
    out = (
        v[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + v[np.ix_(y0, x1)] * (1 - wy) * wx
        + v[np.ix_(y1, x0)] * wy * (1 - wx)
        + v[np.ix_(y1, x1)] * wy * wx
    )

    m = depth.mask
    ok = np.ones((height, width), dtype=bool)
    for my, weight_y in ((y0, (1 - wy)), (y1, wy)):
        for mx, weight_x in ((x0, (1 - wx)), (x1, wx)):
            contributes = (weight_y * weight_x) > 0
            ok &= m[np.ix_(my, mx)] | ~contributes
    out[~ok] = 0.0
    return DepthMap(out, ok, depth.kind)


def disparity_to_depth(disparity: DepthMap, intrinsics: CameraIntrinsics) -> DepthMap:
    """Convert disparity to depth via fx * baseline / disparity.

    Pixels with nonpositive disparity are masked out instead of producing
    NaN/Inf; their output value is 0.
    """
    if disparity.kind != "disparity":
        raise ValueError("expected a disparity-kind map, got %r" % disparity.kind)
    if intrinsics.baseline <= 0:
        raise ValueError("disparity conversion requires a positive stereo baseline")
    valid = disparity.mask & (disparity.values > 0)
    depth = np.zeros_like(disparity.values)
    depth[valid] = intrinsics.fx * intrinsics.baseline / disparity.values[valid]
    return DepthMap(depth, valid, "depth")


def normalize_8bit(depth: DepthMap) -> DepthMap:
    """Linearly map valid values onto [0, 255]; invalid pixels become 0."""
    if not depth.mask.any():
        raise ValueError("cannot normalize a raster with no valid pixels")
    valid = depth.values[depth.mask]
    lo = float(valid.min())
    hi = float(valid.max())
    if hi == lo:
        raise ValueError("degenerate depth range (min == max == %g)" % lo)
    out = np.zeros_like(depth.values)
    out[depth.mask] = (depth.values[depth.mask] - lo) / (hi - lo) * 255.0
    return DepthMap(out, depth.mask.copy(), "normalized8bit")


def invert_8bit(depth: DepthMap) -> DepthMap:
    """Map v -> 255 - v on valid pixels of a normalized map; mask unchanged."""
    if depth.kind != "normalized8bit":
        raise ValueError("inversion requires a normalized8bit map, got %r" % depth.kind)
    out = depth.values.copy()
    out[depth.mask] = 255.0 - out[depth.mask]
    return DepthMap(out, depth.mask.copy(), "normalized8bit")


def reinterpret_as_depth(raster: DepthMap) -> DepthMap:
    """Relabel a normalized (relative) raster as depth for back-projection."""
    return DepthMap(raster.values.copy(), raster.mask.copy(), "depth")


def fit_scale(pred: DepthMap, gt: DepthMap) -> float:
    """Least-squares scalar s minimizing sum((s * pred - gt)^2) over joint valid pixels."""
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch: %r vs %r" % (pred.shape, gt.shape))
    joint = pred.mask & gt.mask
    if not joint.any():
        raise ValueError("no jointly valid pixels to fit a scale on")
    p = pred.values[joint]
    g = gt.values[joint]
    denom = float(np.dot(p, p))
    if denom == 0.0:
        raise ValueError("scale undefined: prediction is identically zero on valid pixels")
    return float(np.dot(p, g) / denom)


def generate_universal_mask(rasters: list[np.ndarray], intensity_floor: float) -> np.ndarray:
    """Validity mask shared by the whole sequence.

    A pixel is valid iff its maximum intensity over all frames reaches
    ``intensity_floor``; pixels that stay dark in every frame (black borders,
    dead regions) are masked out. RGB rasters are reduced per-pixel by the
    channel maximum before comparison.
    """
    if not rasters:
        raise ValueError("universal mask needs at least one frame")
    peak = None
    for raster in rasters:
        arr = np.asarray(raster, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr.max(axis=2)
        if arr.ndim != 2:
            raise ValueError("expected 2D or 3-channel rasters, got shape %r" % (arr.shape,))
        if peak is None:
            peak = arr.copy()
        elif arr.shape != peak.shape:
            raise ValueError("frame shape mismatch: %r vs %r" % (arr.shape, peak.shape))
        else:
            np.maximum(peak, arr, out=peak)
    return peak >= intensity_floor
