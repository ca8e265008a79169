"""Grayscale image container, P5 graymap I/O and the lung preprocessing chain.

Pixels are held as float64 arrays of shape ``(height, width)`` with values in
``[0, k - 1]``. Quantisation to 8 bits only happens when writing a file.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = [
    "GrayImage", "LungMask", "HotspotParams", "ImageFormatError",
    "DegenerateImageError", "SegmentationError", "read_image", "write_image",
    "encode_pgm", "decode_pgm", "fshs", "remove_hotspots", "smooth",
    "segment_lung", "remove_artifacts", "resize", "resize_array",
]


class ImageFormatError(ValueError):
    """Malformed or unsupported P5 data."""


class DegenerateImageError(ValueError):
    """Input has no usable intensity spread (constant image, zero std)."""


class SegmentationError(ValueError):
    """No lung region could be extracted."""


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable W x H intensity grid with ``k`` levels.

    ``pixels`` is stored row-major with shape ``(height, width)``.
    """

    pixels: np.ndarray
    k: int = 256

    def __post_init__(self):
        a = _frozen(self.pixels)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {a.shape}")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not np.all(np.isfinite(a)):
            raise ValueError("pixels must be finite")
        lo, hi = a.min(), a.max()
        if lo < 0 or hi > self.k - 1:
            raise ValueError(f"pixel values must lie in [0, {self.k - 1}], got [{lo}, {hi}]")
        object.__setattr__(self, "pixels", a)

    @classmethod
    def clipped(cls, values, k=256):
        """Build an image after clamping ``values`` into ``[0, k - 1]``."""
        return cls(np.clip(np.asarray(values, dtype=np.float64), 0, k - 1), k)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height}, k={self.k})"


@dataclass(frozen=True, eq=False)
class LungMask:
    """Binary lung membership, ``True`` inside the lung."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError("mask must be 2-D")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self):
        return self.bits.shape

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, LungMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class HotspotParams:
    """z-score threshold ``q`` and where the mean/std are measured.

    ``region`` is ``"mask"`` (default) or ``"image"``.
    """

    q: float = 3.0
    region: str = "mask"

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be > 0")
        if self.region not in ("mask", "image"):
            raise ValueError("region must be 'mask' or 'image'")


# ---------------------------------------------------------------------------
# P5 graymap I/O

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_pgm(data: bytes) -> GrayImage:
    """Parse binary P5 bytes into a :class:`GrayImage` with ``k=256``."""
    pos = 0
    fields = []
    for name in ("magic", "width", "height", "maxval"):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError(f"malformed header: missing {name}")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields
    if magic != b"P5":
        raise ImageFormatError(f"malformed header: magic {magic!r} is not P5")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError(f"malformed header: non-integer field ({exc})") from None
    if w < 1:
        raise ImageFormatError(f"malformed header: width {w}")
    if h < 1:
        raise ImageFormatError(f"malformed header: height {h}")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("malformed header: no separator before pixel data")
    raster = data[pos + 1:]
    if len(raster) < w * h:
        raise ImageFormatError(f"truncated pixel data: expected {w * h} bytes, got {len(raster)}")
    px = np.frombuffer(raster[:w * h], dtype=np.uint8).reshape(h, w)
    return GrayImage(px.astype(np.float64), 256)


def quantize(img: GrayImage) -> np.ndarray:
    """Round half up to integer levels, as uint8 (requires k == 256)."""
    return np.floor(img.pixels + 0.5).clip(0, 255).astype(np.uint8)


def encode_pgm(img: GrayImage) -> bytes:
    if img.k != 256:
        raise ValueError("P5 output supports k=256 only")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + quantize(img).tobytes()


def read_image(path) -> GrayImage:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_image(path, img: GrayImage) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def mask_to_image(mask: LungMask) -> GrayImage:
    return GrayImage(np.where(mask.bits, 255.0, 0.0))


def image_to_mask(img: GrayImage) -> LungMask:
    return LungMask(img.pixels > (img.k - 1) / 2)


# ---------------------------------------------------------------------------
# preprocessing

def fshs(img: GrayImage) -> GrayImage:
    """Full-scale histogram stretch: map ``[min, max]`` linearly onto ``[0, k-1]``.

    Raises
    ------
    DegenerateImageError
        If the image is constant.
    """
    v = img.pixels
    a, b = v.min(), v.max()
    if b <= a:
        raise DegenerateImageError("constant image: cannot stretch (max == min)")
    out = (v - a) / (b - a) * (img.k - 1)
    return GrayImage(np.clip(out, 0, img.k - 1), img.k)


def _check_mask(img, mask):
    if mask.shape != img.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {img.shape}")


def remove_hotspots(img: GrayImage, mask: LungMask, params: HotspotParams = HotspotParams()) -> GrayImage:
    """Clamp hot spots inside ``mask`` to ``mean + q * std``.

    A pixel is a hot spot when it lies in the mask and its z-score
    ``(v - mean) / std`` reaches ``q``. Mean and sample std come from the mask
    pixels (or the whole image when ``params.region == "image"``).
    """
    _check_mask(img, mask)
    if mask.area == 0:
        raise SegmentationError("empty mask")
    region = mask.bits if params.region == "mask" else np.ones(img.shape, bool)
    vals = img.pixels[region]
    if vals.size < 2:
        raise DegenerateImageError("need at least two region pixels for a standard deviation")
    mean = vals.mean()
    std = vals.std(ddof=1)
    if std == 0:
        raise DegenerateImageError("region standard deviation is zero")
    z = (img.pixels - mean) / std
    hot = mask.bits & (z >= params.q)
    if not hot.any():
        return img
    out = img.pixels.copy()
    out[hot] = min(mean + params.q * std, img.k - 1)
    return GrayImage(out, img.k)


def smooth(img: GrayImage, radius: int = 1) -> GrayImage:
    """Box-mean filter over a ``(2r+1)^2`` window with clamped borders."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return img
    out = ndimage.uniform_filter(img.pixels, size=2 * radius + 1, mode="nearest")
    # the running sum leaves ~1e-13 drift; keep results inside the input range
    out = np.clip(out, img.pixels.min(), img.pixels.max())
    return GrayImage(out, img.k)


def segment_lung(img: GrayImage, level: float = 0.35) -> LungMask:
    """Threshold at ``level * max`` and keep the lung components.

    The largest 4-connected component is always kept; the second largest is
    kept too when its area is at least a quarter of the largest. Smaller blobs
    (throat, stomach) are discarded and interior holes are filled.
    """
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    v = img.pixels
    above = v > level * v.max()
    if not above.any():
        raise SegmentationError("no pixel above threshold")
    labels, n = ndimage.label(above)
    areas = np.bincount(labels.ravel())[1:]
    # stable: ties go to the lower label (raster order)
    order = np.argsort(-areas, kind="stable")
    keep = [order[0] + 1]
    if n > 1 and areas[order[1]] >= 0.25 * areas[order[0]]:
        keep.append(order[1] + 1)
    mask = np.isin(labels, keep)
    return LungMask(ndimage.binary_fill_holes(mask))


def remove_artifacts(img: GrayImage, mask: LungMask) -> GrayImage:
    """Zero everything outside the lung mask (throat and stomach included)."""
    _check_mask(img, mask)
    if mask.area == 0:
        raise SegmentationError("empty mask")
    return GrayImage(np.where(mask.bits, img.pixels, 0.0), img.k)


def _resize_axis(a, n_new, axis):
    n_old = a.shape[axis]
    if n_old == n_new:
        return a
    # pixel-centre alignment, clamped at the borders
    src = (np.arange(n_new) + 0.5) * (n_old / n_new) - 0.5
    src = np.clip(src, 0, n_old - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_old - 1)
    w = src - i0
    shape = [1] * a.ndim
    shape[axis] = n_new
    w = w.reshape(shape)
    return np.take(a, i0, axis=axis) * (1 - w) + np.take(a, i1, axis=axis) * w


def resize_array(a, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize of a plain 2-D array (any value range)."""
    if new_w < 1 or new_h < 1:
        raise ValueError("new dimensions must be >= 1")
    return _resize_axis(_resize_axis(np.asarray(a, dtype=np.float64), new_h, 0), new_w, 1)


def resize(img: GrayImage, new_w: int, new_h: int) -> GrayImage:
    """Bilinear resize with pixel-centre alignment and clamped borders."""
    a = resize_array(img.pixels, new_w, new_h)
    return GrayImage(np.clip(a, 0, img.k - 1), img.k)
