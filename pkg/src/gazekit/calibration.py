"""Calibration sets and the screen-mapping models.

A calibration pairs gaze vectors (anchor-to-pupil offsets in camera
coordinates) with screen points on a 25-position template laid out as a
uniform 5x5 grid, indexed 1..25 row-major from the top-left. Three model
families map a vector to a screen point: two-point interpolation, an
axis-separable line fit on 5 points, and a 6-term quadratic fit on 9 or 25
points. All fits go through the normal equations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DegenerateDesignError, InvalidInputError

__all__ = [
    "Eye",
    "GazeVector",
    "ScreenPoint",
    "CalibrationSample",
    "CalibrationSet",
    "ModelForm",
    "MappingModel",
    "MODEL_KINDS",
    "polyfit_least_squares",
    "fit_interp2",
    "fit_linear5",
    "fit_quadratic",
    "fit_model",
    "predict",
    "fit_error",
    "template_targets",
    "load_calibration_csv",
    "save_calibration_csv",
    "save_model",
    "load_model",
]

CONDITION_LIMIT = 1e12

LINEAR5_INDICES = frozenset({1, 5, 13, 21, 25})
QUAD9_INDICES = frozenset({1, 3, 5, 11, 13, 15, 21, 23, 25})
INTERP2_PAIRS = ((21, 5), (1, 25))


class Eye(Enum):
    LEFT = "left"
    RIGHT = "right"

    @classmethod
    def from_name(cls, name: str) -> "Eye":
        try:
            return cls(name.lower())
        except ValueError:
            raise InvalidInputError(f"unknown eye '{name}' (left or right)")


@dataclass(frozen=True)
class GazeVector:
    """Offset from the anchor point to the pupil center, camera coordinates."""

    x: float
    y: float
    eye: Eye = Eye.LEFT

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidInputError("gaze vector components must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))


@dataclass(frozen=True)
class ScreenPoint:
    """Screen pixel coordinates; estimates may legitimately fall off-screen."""

    sx: float
    sy: float

    def __post_init__(self):
        if not (np.isfinite(self.sx) and np.isfinite(self.sy)):
            raise InvalidInputError("screen point must be finite")
        object.__setattr__(self, "sx", float(self.sx))
        object.__setattr__(self, "sy", float(self.sy))


@dataclass(frozen=True)
class CalibrationSample:
    index: int
    vector: GazeVector
    target: ScreenPoint

    def __post_init__(self):
        if not 1 <= self.index <= 25:
            raise InvalidInputError(f"template index {self.index} outside 1..25")


@dataclass(frozen=True)
class CalibrationSet:
    """Single-eye training set with distinct template indices."""

    samples: tuple[CalibrationSample, ...]
    screen: "object" = None  # ScreenGeometry; typed loosely to avoid a cycle

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        indices = [s.index for s in self.samples]
        if len(set(indices)) != len(indices):
            raise InvalidInputError("calibration indices must be distinct")
        eyes = {s.vector.eye for s in self.samples}
        if len(eyes) > 1:
            raise InvalidInputError("a calibration set holds one eye; split per eye")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def eye(self) -> Eye | None:
        return self.samples[0].vector.eye if self.samples else None

    def by_index(self) -> dict[int, CalibrationSample]:
        return {s.index: s for s in self.samples}

    def subset(self, indices) -> "CalibrationSet":
        table = self.by_index()
        missing = sorted(set(indices) - set(table))
        if missing:
            raise InvalidInputError(f"calibration indices missing: {missing}")
        picked = tuple(table[i] for i in sorted(indices))
        return CalibrationSet(samples=picked, screen=self.screen)

    def with_targets(self, targets: dict[int, ScreenPoint]) -> "CalibrationSet":
        """Same vectors, re-assigned screen targets (keyed by index)."""
        new = tuple(
            CalibrationSample(s.index, s.vector, targets[s.index]) for s in self.samples
        )
        return CalibrationSet(samples=new, screen=self.screen)


class ModelForm(Enum):
    INTERP2 = "interp2"
    LINEAR5 = "linear5"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class MappingModel:
    """Fitted coefficients of one screen-mapping model.

    ``ax``/``ay`` hold a0..a5 and b0..b5 (unused tail zero for the lower
    order forms). Interp2 keeps its two endpoint samples instead.
    """

    kind: ModelForm
    ax: tuple[float, ...] = (0.0,) * 6
    ay: tuple[float, ...] = (0.0,) * 6
    endpoints: tuple[CalibrationSample, CalibrationSample] | None = None

    def __post_init__(self):
        if len(self.ax) != 6 or len(self.ay) != 6:
            raise InvalidInputError("coefficient vectors must have 6 entries")
        if not all(np.isfinite(v) for v in (*self.ax, *self.ay)):
            raise InvalidInputError("model coefficients must be finite")
        if (self.kind is ModelForm.INTERP2) != (self.endpoints is not None):
            raise InvalidInputError("endpoints are for interp2 models only")


def template_targets(screen, margin: float = 0.10) -> dict[int, ScreenPoint]:
    """Uniform 5x5 grid of screen targets, row-major indices 1..25.

    ``margin`` is the fraction of each screen dimension left free on every
    side; index 1 is the top-left point.
    """
    xs = np.linspace(margin * screen.width_px, (1 - margin) * screen.width_px, 5)
    ys = np.linspace(margin * screen.height_px, (1 - margin) * screen.height_px, 5)
    out = {}
    for row in range(5):
        for col in range(5):
            out[row * 5 + col + 1] = ScreenPoint(float(xs[col]), float(ys[row]))
    return out


def _solve_normal_equations(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve X^T X a = X^T y, rejecting ill-conditioned normal matrices."""
    xtx = design.T @ design
    xty = design.T @ rhs
    if not np.all(np.isfinite(xtx)):
        raise DegenerateDesignError("non-finite design")
    if np.linalg.cond(xtx) > CONDITION_LIMIT:
        raise DegenerateDesignError(
            f"normal matrix condition exceeds {CONDITION_LIMIT:g}"
        )
    return np.linalg.solve(xtx, xty)


def polyfit_least_squares(xs, ys, degree: int) -> list[float]:
    """Least-squares polynomial coefficients a_0..a_k via normal equations."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise InvalidInputError("xs and ys must be equal-length 1D sequences")
    if degree < 0:
        raise InvalidInputError("degree must be non-negative")
    if len(np.unique(xs)) < degree + 1:
        raise DegenerateDesignError(
            f"need at least {degree + 1} distinct x values for degree {degree}"
        )
    design = np.vander(xs, degree + 1, increasing=True)
    return [float(v) for v in _solve_normal_equations(design, ys)]


def fit_interp2(cal: CalibrationSet, pair: tuple[int, int] = (21, 5)) -> MappingModel:
    """Two-point interpolation model from one diagonal of the template."""
    if tuple(pair) not in INTERP2_PAIRS:
        raise InvalidInputError(f"interp2 pair must be one of {INTERP2_PAIRS}")
    table = cal.by_index()
    missing = [i for i in pair if i not in table]
    if missing:
        raise InvalidInputError(f"calibration indices missing: {missing}")
    p1, p2 = table[pair[0]], table[pair[1]]
    if p1.vector.x == p2.vector.x or p1.vector.y == p2.vector.y:
        raise DegenerateDesignError("interp2 endpoints coincide on an axis")
    return MappingModel(kind=ModelForm.INTERP2, endpoints=(p1, p2))


def fit_linear5(cal: CalibrationSet) -> MappingModel:
    """Axis-separable linear model on the corner + center template points."""
    sub = cal.subset(LINEAR5_INDICES)
    vx = [s.vector.x for s in sub.samples]
    vy = [s.vector.y for s in sub.samples]
    sx = [s.target.sx for s in sub.samples]
    sy = [s.target.sy for s in sub.samples]
    a0, a1 = polyfit_least_squares(vx, sx, 1)
    b0, b1 = polyfit_least_squares(vy, sy, 1)
    return MappingModel(
        kind=ModelForm.LINEAR5,
        ax=(a0, a1, 0.0, 0.0, 0.0, 0.0),
        ay=(b0, b1, 0.0, 0.0, 0.0, 0.0),
    )


def _quad_design(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(x), x, y, x * y, x**2, y**2])


def _quad_rescale(p: np.ndarray, cx: float, sx: float, cy: float, sy: float) -> np.ndarray:
    """Map coefficients fitted on (x-cx)/sx, (y-cy)/sy back to raw x, y."""
    p0, p1, p2, p3, p4, p5 = p
    a = np.zeros(6)
    a[0] = (
        p0
        - p1 * cx / sx
        - p2 * cy / sy
        + p3 * cx * cy / (sx * sy)
        + p4 * cx**2 / sx**2
        + p5 * cy**2 / sy**2
    )
    a[1] = p1 / sx - p3 * cy / (sx * sy) - 2.0 * p4 * cx / sx**2
    a[2] = p2 / sy - p3 * cx / (sx * sy) - 2.0 * p5 * cy / sy**2
    a[3] = p3 / (sx * sy)
    a[4] = p4 / sx**2
    a[5] = p5 / sy**2
    return a


def fit_quadratic(cal: CalibrationSet, subset: int = 25) -> MappingModel:
    """Per-axis least squares over the basis [1, x, y, xy, x^2, y^2].

    ``subset`` selects the 9-point or the 25-point template positions. The
    inputs are centered and scaled to unit RMS before solving to keep the
    normal matrix conditioned; coefficients are mapped back to raw inputs.
    """
    if subset == 9:
        sub = cal.subset(QUAD9_INDICES)
    elif subset == 25:
        sub = cal.subset(range(1, 26))
    else:
        raise InvalidInputError("quadratic subset must be 9 or 25")
    x = np.array([s.vector.x for s in sub.samples])
    y = np.array([s.vector.y for s in sub.samples])
    cx, cy = x.mean(), y.mean()
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        raise DegenerateDesignError("gaze vectors do not vary on one axis")
    design = _quad_design((x - cx) / sx, (y - cy) / sy)
    ax = _quad_rescale(
        _solve_normal_equations(design, np.array([s.target.sx for s in sub.samples])),
        cx, sx, cy, sy,
    )
    ay = _quad_rescale(
        _solve_normal_equations(design, np.array([s.target.sy for s in sub.samples])),
        cx, sx, cy, sy,
    )
    return MappingModel(kind=ModelForm.QUADRATIC, ax=tuple(ax), ay=tuple(ay))


# Named fit selectors, shared by the tracker sessions and the CLI.
MODEL_KINDS = ("interp2:21-5", "interp2:1-25", "linear5", "quadratic9", "quadratic25")


def fit_model(cal: CalibrationSet, kind: str) -> MappingModel:
    if kind == "interp2:21-5":
        return fit_interp2(cal, (21, 5))
    if kind == "interp2:1-25":
        return fit_interp2(cal, (1, 25))
    if kind == "linear5":
        return fit_linear5(cal)
    if kind == "quadratic9":
        return fit_quadratic(cal, 9)
    if kind == "quadratic25":
        return fit_quadratic(cal, 25)
    raise InvalidInputError(f"unknown model kind '{kind}' (one of: {MODEL_KINDS})")


def predict(model: MappingModel, v: GazeVector) -> ScreenPoint:
    """Evaluate the fitted model at a gaze vector."""
    x, y = v.x, v.y
    if model.kind is ModelForm.INTERP2:
        p1, p2 = model.endpoints
        sx = p1.target.sx + (x - p1.vector.x) / (p2.vector.x - p1.vector.x) * (
            p2.target.sx - p1.target.sx
        )
        sy = p1.target.sy + (y - p1.vector.y) / (p2.vector.y - p1.vector.y) * (
            p2.target.sy - p1.target.sy
        )
        return ScreenPoint(float(sx), float(sy))
    if model.kind is ModelForm.LINEAR5:
        return ScreenPoint(
            model.ax[0] + model.ax[1] * x,
            model.ay[0] + model.ay[1] * y,
        )
    a, b = model.ax, model.ay
    basis = (1.0, x, y, x * y, x * x, y * y)
    return ScreenPoint(
        float(sum(c * t for c, t in zip(a, basis))),
        float(sum(c * t for c, t in zip(b, basis))),
    )


def fit_error(model: MappingModel, cal: CalibrationSet) -> float:
    """Half the sum of squared prediction errors over the set."""
    if not cal.samples:
        raise InvalidInputError("calibration set is empty")
    total = 0.0
    for s in cal.samples:
        p = predict(model, s.vector)
        total += (p.sx - s.target.sx) ** 2 + (p.sy - s.target.sy) ** 2
    return 0.5 * total


# ---------------------------------------------------------------------------
# Persistence

def load_calibration_csv(path, screen=None) -> dict[Eye, CalibrationSet]:
    """Read `index,eye,vx,vy,sx,sy` rows into per-eye calibration sets."""
    path = Path(path)
    per_eye: dict[Eye, list[CalibrationSample]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "index", "eye", "vx", "vy", "sx", "sy",
        ]:
            raise InvalidInputError(
                f"{path}: expected header 'index,eye,vx,vy,sx,sy'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise InvalidInputError(f"{path}:{lineno}: expected 6 fields")
            try:
                idx = int(row[0])
                eye = Eye.from_name(row[1])
                vec = GazeVector(float(row[2]), float(row[3]), eye)
                tgt = ScreenPoint(float(row[4]), float(row[5]))
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
            per_eye.setdefault(eye, []).append(CalibrationSample(idx, vec, tgt))
    return {
        eye: CalibrationSet(samples=tuple(samples), screen=screen)
        for eye, samples in per_eye.items()
    }


def save_calibration_csv(sets, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eye", "vx", "vy", "sx", "sy"])
        for cal in sets:
            for s in cal.samples:
                writer.writerow(
                    [
                        s.index,
                        s.vector.eye.value,
                        repr(s.vector.x),
                        repr(s.vector.y),
                        repr(s.target.sx),
                        repr(s.target.sy),
                    ]
                )


def _sample_to_json(s: CalibrationSample) -> dict:
    return {
        "index": s.index,
        "eye": s.vector.eye.value,
        "vx": s.vector.x,
        "vy": s.vector.y,
        "sx": s.target.sx,
        "sy": s.target.sy,
    }


def _sample_from_json(d: dict) -> CalibrationSample:
    eye = Eye.from_name(d["eye"])
    return CalibrationSample(
        int(d["index"]),
        GazeVector(float(d["vx"]), float(d["vy"]), eye),
        ScreenPoint(float(d["sx"]), float(d["sy"])),
    )


def save_model(model: MappingModel, path) -> None:
    """Persist a model as JSON; float serialization round-trips exactly."""
    doc = {"kind": model.kind.value, "ax": list(model.ax), "ay": list(model.ay)}
    if model.endpoints is not None:
        doc["endpoints"] = [_sample_to_json(s) for s in model.endpoints]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path) -> MappingModel:
    doc = json.loads(Path(path).read_text())
    kind = ModelForm(doc["kind"])
    endpoints = None
    if "endpoints" in doc:
        a, b = (_sample_from_json(d) for d in doc["endpoints"])
        endpoints = (a, b)
    return MappingModel(
        kind=kind,
        ax=tuple(float(v) for v in doc["ax"]),
        ay=tuple(float(v) for v in doc["ay"]),
        endpoints=endpoints,
    )
