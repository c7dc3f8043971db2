"""Grayscale image container, convolution, and Gaussian-smoothed derivatives.

Luminance is kept as float64 in [0, 1] (8-bit inputs are divided by 255 on
ingestion). All filtering uses clamp-to-edge borders so that vote maps and
match surfaces stay well behaved near crop boundaries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "GrayImage",
    "DerivativeStack",
    "convolve",
    "derivative_stack",
    "gaussian_kernel_1d",
    "smooth",
    "read_image",
    "write_pgm",
]

# ITU-R 601 luma weights for color ingestion.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class GrayImage:
    """Immutable real-valued luminance raster, row-major, H x W."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise InvalidInputError(f"image must be 2D, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError("image must be at least 1x1")
        if not np.isfinite(px).all():
            raise InvalidInputError("image contains non-finite samples")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> np.ndarray:
        """Row-major flat view of the luminance values."""
        return self.pixels.ravel()

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        return cls(np.asarray(arr, dtype=np.float64))


@dataclass(frozen=True)
class DerivativeStack:
    """First- and second-order luminance derivatives at a smoothing scale."""

    lx: GrayImage
    ly: GrayImage
    lxx: GrayImage
    lxy: GrayImage
    lyy: GrayImage
    sigma: float

    def __post_init__(self):
        shape = self.lx.pixels.shape
        for plane in (self.ly, self.lxx, self.lxy, self.lyy):
            if plane.pixels.shape != shape:
                raise InvalidInputError("derivative planes must share dimensions")
        if not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")


def _pad_edge(arr: np.ndarray, ry: int, rx: int) -> np.ndarray:
    return np.pad(arr, ((ry, ry), (rx, rx)), mode="edge")


def convolve(img: GrayImage, kernel) -> GrayImage:
    """True 2D convolution with clamp-to-edge borders, same-size output.

    The kernel must have odd dimensions and fit inside the image.
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2:
        raise InvalidInputError("kernel must be 2D")
    kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise InvalidInputError(f"kernel dimensions must be odd, got {k.shape}")
    if kh > img.height or kw > img.width:
        raise InvalidInputError(
            f"kernel {k.shape} larger than image {(img.height, img.width)}"
        )
    ry, rx = kh // 2, kw // 2
    padded = _pad_edge(img.pixels, ry, rx)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw))
    # Convolution flips the kernel; correlation over windows with the flipped
    # stencil gives the same-size result.
    out = np.tensordot(windows, k[::-1, ::-1], axes=([2, 3], [0, 1]))
    return GrayImage(out)


def _filter_axis(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate along one axis with clamp-to-edge padding."""
    r = len(taps) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr)
    for i, t in enumerate(taps):
        if t == 0.0:
            continue
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + arr.shape[axis])
        out += t * padded[tuple(sl)]
    return out


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Sampled Gaussian, truncated at radius ceil(3*sigma), normalized to sum 1."""
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (xs / sigma) ** 2)
    return g / g.sum()


def smooth(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian smoothing with clamp-to-edge borders."""
    g = gaussian_kernel_1d(sigma)
    out = _filter_axis(img.pixels, g, axis=1)
    out = _filter_axis(out, g, axis=0)
    return GrayImage(out)

# Central-difference stencils applied to the smoothed image. The composites
# (Gaussian then difference) are the discrete Gaussian-derivative kernels;
# they are exact on affine/quadratic inputs, which the tests rely on.
_D1 = np.array([-0.5, 0.0, 0.5])
_D2 = np.array([1.0, -2.0, 1.0])


def derivative_stack(img: GrayImage, sigma: float) -> DerivativeStack:
    """Compute Lx, Ly, Lxx, Lxy, Lyy of the Gaussian-smoothed image."""
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    if img.height < 5 or img.width < 5:
        raise InvalidInputError(
            f"image {(img.height, img.width)} too small for derivative support"
        )
    s = smooth(img, sigma).pixels
    lx = _filter_axis(s, _D1, axis=1)
    ly = _filter_axis(s, _D1, axis=0)
    lxx = _filter_axis(s, _D2, axis=1)
    lyy = _filter_axis(s, _D2, axis=0)
    lxy = _filter_axis(lx, _D1, axis=0)
    return DerivativeStack(
        lx=GrayImage(lx),
        ly=GrayImage(ly),
        lxx=GrayImage(lxx),
        lxy=GrayImage(lxy),
        lyy=GrayImage(lyy),
        sigma=float(sigma),
    )


def _read_pgm(path: Path) -> GrayImage:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise InvalidInputError(f"{path}: not a binary (P5) PGM file")
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise InvalidInputError(f"{path}: malformed PGM header")
        tokens.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = tokens
    if not (0 < maxval < 256):
        raise InvalidInputError(f"{path}: unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise InvalidInputError(f"{path}: truncated PGM raster")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(arr.astype(np.float64) / maxval)


def _read_png(path: Path) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise InvalidInputError(f"{path}: unsupported PNG sample type {arr.dtype}")
    arr = arr.astype(np.float64) / scale
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[:, :, :3]
        if arr.shape[2] != 3:
            raise InvalidInputError(f"{path}: unsupported channel count {arr.shape[2]}")
        w = np.array(_LUMA_WEIGHTS)
        arr = arr @ w
    return GrayImage(arr)


def read_image(path) -> GrayImage:
    """Load an 8-bit grayscale PGM (P5) or a PNG; color PNG uses 601 luma."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _read_pgm(path)
    if suffix == ".png":
        return _read_png(path)
    raise InvalidInputError(f"{path}: unsupported image format '{suffix}'")


def write_pgm(img: GrayImage, path) -> None:
    """Write as binary P5, quantizing [0, 1] luminance to 8 bits."""
    arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())
