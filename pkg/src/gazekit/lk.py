"""Iterative translational image registration for facial-feature tracking.

The 1D form recovers the horizontal disparity h between two curves with a
weighted Newton-Raphson iteration; the 2D form solves the 2x2 normal
equations of the linearized L2 objective over a square patch each iteration.
Both sample at fractional positions by linear interpolation and are
single-scale: motions must be small (a few pixels) per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, RegistrationLostError, UndefinedDisparityError
from .imgproc import GrayImage

__all__ = [
    "TrackedFeature",
    "Disparity",
    "TrackPoint",
    "register_1d",
    "register_2d",
    "track_sequence",
    "extract_patch",
]

CONVERGENCE_TOL = 1e-4
CONDITION_LIMIT = 1e8
DEFAULT_MAX_ITERS = 30
DEFAULT_PATCH_SIDE = 15
_WEIGHT_FLOOR = 1e-6
_STEP_HALVINGS = 4


@dataclass(frozen=True)
class TrackedFeature:
    """A feature to track: subpixel position plus its reference patch."""

    x: float
    y: float
    patch: GrayImage

    def __post_init__(self):
        side = self.patch.width
        if side != self.patch.height or side % 2 == 0 or side < 5:
            raise InvalidInputError(
                f"patch must be odd square with side >= 5, got "
                f"{self.patch.width}x{self.patch.height}"
            )

    @classmethod
    def from_frame(cls, frame: GrayImage, x: float, y: float, side: int = DEFAULT_PATCH_SIDE):
        return cls(x=float(x), y=float(y), patch=extract_patch(frame, x, y, side))


@dataclass(frozen=True)
class Disparity:
    """Registration result: recovered shift, final L2 error, iteration count."""

    h: tuple[float, float]
    residual: float
    iterations: int
    residuals: tuple[float, ...] = ()


@dataclass(frozen=True)
class TrackPoint:
    x: float
    y: float
    lost: bool

    @property
    def status(self) -> str:
        return "lost" if self.lost else "tracking"


def _sample_linear(values: np.ndarray, xs: np.ndarray) -> np.ndarray:
    x0 = np.floor(xs).astype(np.int64)
    frac = xs - x0
    return values[x0] * (1.0 - frac) + values[x0 + 1] * frac


def register_1d(f, g, max_iters: int = DEFAULT_MAX_ITERS) -> float:
    """Recover the disparity h with G(x) = F(x + h) for 1D samples.

    Iterates h += sum(w F'(x+h) [G - F(x+h)]) / sum(w F'(x+h)^2) with weights
    w(x) = 1 / |G'(x) - F'(x)| (difference floored at 1e-6), stopping when
    the update drops below 1e-4 or after ``max_iters`` iterations. Raises
    UndefinedDisparityError when the derivative is zero everywhere.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.ndim != 1 or g.ndim != 1 or f.shape != g.shape:
        raise InvalidInputError("sequences must be 1D and equal length")
    n = len(f)
    if n < 5:
        raise InvalidInputError("sequences must have at least 5 samples")

    df = np.gradient(f)
    dg = np.gradient(g)
    w_all = 1.0 / np.maximum(np.abs(dg - df), _WEIGHT_FLOOR)

    xs = np.arange(n, dtype=np.float64)
    h = 0.0
    for _ in range(max_iters):
        pos = xs + h
        valid = (pos >= 0.0) & (pos <= n - 1.0 - 1e-9)
        if not valid.any():
            raise UndefinedDisparityError("shifted window left the sequence")
        pos = pos[valid]
        fp = _sample_linear(df, pos)
        fv = _sample_linear(f, pos)
        w = w_all[valid]
        denom = (w * fp**2).sum()
        if denom == 0.0:
            raise UndefinedDisparityError("derivative is zero everywhere")
        step = float((w * fp * (g[valid] - fv)).sum() / denom)
        h += step
        if abs(step) < CONVERGENCE_TOL:
            break
    return h


def _sample_bilinear(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    return (
        arr[y0, x0] * (1 - fx) * (1 - fy)
        + arr[y0, x0 + 1] * fx * (1 - fy)
        + arr[y0 + 1, x0] * (1 - fx) * fy
        + arr[y0 + 1, x0 + 1] * fx * fy
    )


def extract_patch(frame: GrayImage, x: float, y: float, side: int) -> GrayImage:
    """Bilinearly sample an odd square window centered at (x, y)."""
    if side % 2 == 0 or side < 5:
        raise InvalidInputError("patch side must be odd and >= 5")
    half = side // 2
    us = np.arange(-half, half + 1, dtype=np.float64)
    uy, ux = np.meshgrid(us, us, indexing="ij")
    px = x + ux
    py = y + uy
    if px.min() < 0 or py.min() < 0 or px.max() > frame.width - 1 or py.max() > frame.height - 1:
        raise RegistrationLostError(f"patch window at ({x:.2f}, {y:.2f}) leaves the frame")
    return GrayImage(_sample_bilinear(frame.pixels, px, py))


def register_2d(
    ref_patch: GrayImage,
    frame: GrayImage,
    init: tuple[float, float],
    max_iters: int = DEFAULT_MAX_ITERS,
) -> Disparity:
    """Find h so the frame window at init + h matches the reference patch.

    Each iteration solves sum(grad grad^T) h = sum(grad (G - F)) over the
    patch with bilinearly sampled frame values and central-difference frame
    gradients. Steps that increase the L2 residual are halved up to 4 times.
    Raises RegistrationLostError for aperture-ambiguous patches (2x2 system
    condition number above 1e8) or when the window leaves the frame.
    """
    side = ref_patch.width
    if side != ref_patch.height or side % 2 == 0 or side < 5:
        raise InvalidInputError("reference patch must be an odd square, side >= 5")
    t = ref_patch.pixels
    img = frame.pixels
    gy, gx = np.gradient(img)

    half = side // 2
    us = np.arange(-half, half + 1, dtype=np.float64)
    uy, ux = np.meshgrid(us, us, indexing="ij")

    def window(hx: float, hy: float):
        px = init[0] + hx + ux
        py = init[1] + hy + uy
        # 1 px margin: bilinear lookups of the central-difference gradients.
        if (
            px.min() < 1.0
            or py.min() < 1.0
            or px.max() > frame.width - 2.0
            or py.max() > frame.height - 2.0
        ):
            raise RegistrationLostError(
                f"window at ({init[0] + hx:.2f}, {init[1] + hy:.2f}) leaves the frame"
            )
        return (
            _sample_bilinear(img, px, py),
            _sample_bilinear(gx, px, py),
            _sample_bilinear(gy, px, py),
        )

    hx = hy = 0.0
    vals, wgx, wgy = window(hx, hy)
    residual = float(np.sqrt(((t - vals) ** 2).sum()))
    history = [residual]
    iters = 0
    for _ in range(max_iters):
        err = t - vals
        a11 = (wgx * wgx).sum()
        a12 = (wgx * wgy).sum()
        a22 = (wgy * wgy).sum()
        a = np.array([[a11, a12], [a12, a22]])
        if np.linalg.cond(a) > CONDITION_LIMIT:
            raise RegistrationLostError("flat or aperture-ambiguous patch")
        b = np.array([(wgx * err).sum(), (wgy * err).sum()])
        dx, dy = np.linalg.solve(a, b)

        accepted = False
        for _ in range(_STEP_HALVINGS + 1):
            cand_vals, cand_gx, cand_gy = window(hx + dx, hy + dy)
            cand_res = float(np.sqrt(((t - cand_vals) ** 2).sum()))
            if cand_res <= residual:
                accepted = True
                break
            dx *= 0.5
            dy *= 0.5
        if not accepted:
            break
        hx += dx
        hy += dy
        vals, wgx, wgy = cand_vals, cand_gx, cand_gy
        residual = cand_res
        history.append(residual)
        iters += 1
        if np.hypot(dx, dy) < CONVERGENCE_TOL:
            break
    return Disparity(
        h=(hx, hy), residual=residual, iterations=iters, residuals=tuple(history)
    )


def track_sequence(feature: TrackedFeature, frames) -> list[TrackPoint]:
    """Chain 2D registrations across frames, re-sampling the patch each step.

    frames[0] is the reference frame the feature position refers to. Once a
    registration is lost the remaining frames repeat the last good position
    flagged as lost.
    """
    frames = list(frames)
    if not frames:
        raise InvalidInputError("frame sequence is empty")
    side = feature.patch.width
    x, y = feature.x, feature.y
    out = [TrackPoint(x, y, lost=False)]
    patch = feature.patch
    lost = False
    for frame in frames[1:]:
        if not lost:
            try:
                disp = register_2d(patch, frame, (x, y))
                x += disp.h[0]
                y += disp.h[1]
                patch = extract_patch(frame, x, y, side)
            except RegistrationLostError:
                lost = True
        out.append(TrackPoint(x, y, lost=lost))
    return out
