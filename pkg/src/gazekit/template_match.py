"""Sliding-window template matching with the six classic match scores.

Scores are computed exactly (direct window sums, no FFT approximation) so
the surfaces can be pinned against brute-force oracles. Methods come in a
plain, a mean-centered, and normalized variants; the normalized ones divide
by the geometric mean of the template and window energies, which removes
global gain differences between template and search image.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .imgproc import GrayImage

__all__ = ["MatchMethod", "MatchSurface", "match_template", "best_match"]


class MatchMethod(Enum):
    SQ_DIFF = "sq_diff"
    CCORR = "ccorr"
    CCOEFF = "ccoeff"
    SQ_DIFF_NORMED = "sq_diff_normed"
    CCORR_NORMED = "ccorr_normed"
    CCOEFF_NORMED = "ccoeff_normed"

    @classmethod
    def from_name(cls, name: str) -> "MatchMethod":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise InvalidInputError(f"unknown match method '{name}' (one of: {valid})")

    @property
    def is_sq_diff(self) -> bool:
        return self in (MatchMethod.SQ_DIFF, MatchMethod.SQ_DIFF_NORMED)


@dataclass(frozen=True)
class MatchSurface:
    """Score raster of size (H-h+1) x (W-w+1) for a given method."""

    scores: GrayImage
    method: MatchMethod


def match_template(search: GrayImage, tmpl: GrayImage, method: MatchMethod) -> MatchSurface:
    """Score every placement of ``tmpl`` inside ``search``.

    Squared difference is 0 at a perfect match; the correlation family is
    maximal there. The mean-centered coefficient subtracts the template mean
    and each window's mean, and its normalized form is a true correlation
    coefficient in [-1, 1] (1 at an exact copy, -1 at a negated copy).
    Placements whose normalizer is exactly zero score 0.
    """
    if tmpl.height > search.height or tmpl.width > search.width:
        raise InvalidInputError(
            f"template {(tmpl.height, tmpl.width)} larger than search "
            f"image {(search.height, search.width)}"
        )
    t = tmpl.pixels
    windows = np.lib.stride_tricks.sliding_window_view(search.pixels, t.shape)

    if method is MatchMethod.SQ_DIFF or method is MatchMethod.SQ_DIFF_NORMED:
        raw = ((windows - t) ** 2).sum(axis=(2, 3))
    elif method is MatchMethod.CCORR or method is MatchMethod.CCORR_NORMED:
        raw = (windows * t).sum(axis=(2, 3))
    else:
        tc = t - t.mean()
        wc = windows - windows.mean(axis=(2, 3), keepdims=True)
        raw = (wc * tc).sum(axis=(2, 3))

    if method in (MatchMethod.SQ_DIFF, MatchMethod.CCORR, MatchMethod.CCOEFF):
        return MatchSurface(GrayImage(raw), method)

    if method is MatchMethod.CCOEFF_NORMED:
        # Centered energies, so the score is a Pearson coefficient and the
        # perfect match/mismatch polarity (+1 / -1) actually holds.
        t_energy = ((t - t.mean()) ** 2).sum()
        w_energy = ((windows - windows.mean(axis=(2, 3), keepdims=True)) ** 2).sum(
            axis=(2, 3)
        )
    else:
        t_energy = (t**2).sum()
        w_energy = (windows**2).sum(axis=(2, 3))
    z = np.sqrt(t_energy * w_energy)
    out = np.zeros_like(raw)
    np.divide(raw, z, out=out, where=z > 0)
    return MatchSurface(GrayImage(out), method)


def best_match(surface: MatchSurface) -> tuple[int, int, float]:
    """Best placement as (x, y, score).

    Arg-minimum for the squared-difference family, arg-maximum otherwise;
    ties resolve to the first occurrence in row-major order.
    """
    scores = surface.scores.pixels
    flat = scores.argmin() if surface.method.is_sq_diff else scores.argmax()
    y, x = np.unravel_index(flat, scores.shape)
    return int(x), int(y), float(scores[y, x])
