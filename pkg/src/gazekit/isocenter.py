"""Eye-center localization from isophote curvature voting.

Every pixel with enough gradient proposes the center of the osculating
circle of the isophote through it: the displacement vector has length equal
to the isophote radius and points at the center regardless of edge polarity.
Votes are kept only where the curvature sign indicates a dark interior
(iris/pupil darker than sclera), weighted by curvedness, accumulated into a
center map, Gaussian-blurred, and refined by mean shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .imgproc import DerivativeStack, GrayImage, derivative_stack, smooth

__all__ = [
    "CenterMap",
    "PupilEstimate",
    "isophote_curvature",
    "displacement_field",
    "curvedness",
    "accumulate_centermap",
    "mean_shift_refine",
    "locate_eye_center",
]

# Numerical gates for near-flat pixels (normalized-luminance units).
EPS_GRADIENT = 1e-4
EPS_DENOMINATOR = 1e-6

DEFAULT_SIGMA = 1.0
DEFAULT_SIGMA_ACC = 1.5
DEFAULT_WINDOW = 15


@dataclass(frozen=True)
class CenterMap:
    """Accumulator of center votes, same dimensions as the source image."""

    votes: GrayImage

    @property
    def width(self) -> int:
        return self.votes.width

    @property
    def height(self) -> int:
        return self.votes.height


@dataclass(frozen=True)
class PupilEstimate:
    """Subpixel center estimate with the local vote density as confidence."""

    x: float
    y: float
    confidence: float


def _curvature_terms(stack: DerivativeStack):
    lx = stack.lx.pixels
    ly = stack.ly.pixels
    grad_sq = lx**2 + ly**2
    num = ly**2 * stack.lxx.pixels - 2.0 * lx * stack.lxy.pixels * ly + lx**2 * stack.lyy.pixels
    return lx, ly, grad_sq, num


def isophote_curvature(stack: DerivativeStack) -> GrayImage:
    """Per-pixel isophote curvature; near-flat pixels emit 0.

    kappa = -(Ly^2 Lxx - 2 Lx Lxy Ly + Lx^2 Lyy) / (Lx^2 + Ly^2)^(3/2),
    the reciprocal of the radius of the osculating circle, negative where
    the interior of the curve is darker than the exterior.
    """
    _, _, grad_sq, num = _curvature_terms(stack)
    ok = grad_sq > EPS_GRADIENT**2
    out = np.zeros_like(grad_sq)
    np.divide(-num, grad_sq**1.5, out=out, where=ok)
    return GrayImage(out)


def displacement_field(stack: DerivativeStack) -> np.ndarray:
    """Per-pixel (dx, dy) vectors toward the estimated circle centers.

    D = -{Lx, Ly} (Lx^2 + Ly^2) / (Ly^2 Lxx - 2 Lx Lxy Ly + Lx^2 Lyy).
    Pixels with a tiny gradient or a tiny denominator emit the zero vector
    and do not vote. Shape (H, W, 2).
    """
    lx, ly, grad_sq, num = _curvature_terms(stack)
    ok = (grad_sq > EPS_GRADIENT**2) & (np.abs(num) > EPS_DENOMINATOR)
    scale = np.zeros_like(grad_sq)
    np.divide(-grad_sq, num, out=scale, where=ok)
    return np.stack((lx * scale, ly * scale), axis=-1)


def curvedness(stack: DerivativeStack) -> GrayImage:
    """sqrt(Lxx^2 + 2 Lxy^2 + Lyy^2): high near curved edges, 0 on flats."""
    return GrayImage(
        np.sqrt(
            stack.lxx.pixels ** 2
            + 2.0 * stack.lxy.pixels ** 2
            + stack.lyy.pixels ** 2
        )
    )


def accumulate_centermap(stack: DerivativeStack, sigma_acc: float = DEFAULT_SIGMA_ACC) -> CenterMap:
    """Cast curvedness-weighted votes for dark centers and blur the result.

    Only pixels with negative curvature vote (dark interior); each vote lands
    at the pixel nearest position + displacement, votes outside the image are
    dropped, and the accumulator is smoothed with a Gaussian at ``sigma_acc``.
    """
    kappa = isophote_curvature(stack).pixels
    disp = displacement_field(stack)
    weight = curvedness(stack).pixels

    h, w = kappa.shape
    ys, xs = np.mgrid[0:h, 0:w]
    voting = (kappa < 0) & ((disp[..., 0] != 0) | (disp[..., 1] != 0))
    tx = np.rint(xs + disp[..., 0]).astype(np.int64)
    ty = np.rint(ys + disp[..., 1]).astype(np.int64)
    voting &= (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)

    acc = np.zeros((h, w))
    np.add.at(acc, (ty[voting], tx[voting]), weight[voting])
    blurred = smooth(GrayImage(acc), sigma_acc)
    return CenterMap(votes=blurred)


def mean_shift_refine(
    cmap: CenterMap, seed: tuple[float, float], window: int = DEFAULT_WINDOW
) -> PupilEstimate:
    """Iterate the vote-weighted centroid of a square window around the seed.

    Stops when the shift drops below 0.1 px or after 20 iterations. A window
    with zero total votes returns the seed with confidence 0; otherwise the
    confidence is the mean vote weight of the final window.
    """
    if window < 3:
        raise InvalidInputError("mean-shift window must be at least 3 px")
    sx, sy = float(seed[0]), float(seed[1])
    if not (0 <= sx < cmap.width and 0 <= sy < cmap.height):
        raise InvalidInputError(f"seed {seed} outside the center map")
    votes = cmap.votes.pixels
    half = (window - 1) / 2.0
    cx, cy = sx, sy
    for _ in range(20):
        x0 = max(0, int(np.ceil(cx - half)))
        x1 = min(cmap.width - 1, int(np.floor(cx + half)))
        y0 = max(0, int(np.ceil(cy - half)))
        y1 = min(cmap.height - 1, int(np.floor(cy + half)))
        box = votes[y0 : y1 + 1, x0 : x1 + 1]
        total = box.sum()
        if total <= 0:
            return PupilEstimate(sx, sy, 0.0)
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        nx = float((xs * box).sum() / total)
        ny = float((ys * box).sum() / total)
        shift = np.hypot(nx - cx, ny - cy)
        cx, cy = nx, ny
        if shift < 0.1:
            break
    x0 = max(0, int(np.ceil(cx - half)))
    x1 = min(cmap.width - 1, int(np.floor(cx + half)))
    y0 = max(0, int(np.ceil(cy - half)))
    y1 = min(cmap.height - 1, int(np.floor(cy + half)))
    box = votes[y0 : y1 + 1, x0 : x1 + 1]
    density = float(box.sum() / box.size)
    return PupilEstimate(cx, cy, density)


def locate_eye_center(
    img: GrayImage,
    roi: tuple[int, int, int, int],
    sigma: float = DEFAULT_SIGMA,
    sigma_acc: float = DEFAULT_SIGMA_ACC,
    window: int = DEFAULT_WINDOW,
) -> PupilEstimate:
    """Full isophote pipeline: derivatives, voting, ROI max, mean shift.

    ``roi`` is (x, y, w, h) in image coordinates, at least 16x16 and fully
    inside the image. The returned coordinates are image coordinates.
    """
    rx, ry, rw, rh = (int(v) for v in roi)
    if rw < 16 or rh < 16:
        raise InvalidInputError(f"roi {roi} smaller than 16x16")
    if rx < 0 or ry < 0 or rx + rw > img.width or ry + rh > img.height:
        raise InvalidInputError(f"roi {roi} outside image {(img.width, img.height)}")

    stack = derivative_stack(img, sigma)
    cmap = accumulate_centermap(stack, sigma_acc)
    sub = cmap.votes.pixels[ry : ry + rh, rx : rx + rw]
    if sub.max() <= 0:
        seed = (rx + (rw - 1) / 2.0, ry + (rh - 1) / 2.0)
    else:
        iy, ix = np.unravel_index(sub.argmax(), sub.shape)
        seed = (rx + float(ix), ry + float(iy))
    return mean_shift_refine(cmap, seed, window)
