"""Synthetic scene simulator, dataset ingestion, and error reporting.

The simulator stands in for live capture: a configurable "true" mapping
takes pose-normalized gaze vectors to screen points at the reference pose,
and head movement re-locates the calibration targets through the same
user-plane geometry the re-calibrating tracker uses. For each scripted
(target, pose) frame it emits the gaze vector a user fixating that target
would produce, both pose-normalized and as a raw camera-frame vector whose
anchor drifts with the head, plus the noiseless ground truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import (
    CalibrationSample,
    CalibrationSet,
    Eye,
    GazeVector,
    ScreenPoint,
    fit_quadratic,
    template_targets,
)
from .errors import IngestError, InvalidInputError
from .geometry import (
    DEFAULT_PLANE_OFFSET_MM,
    HeadPose,
    ScreenGeometry,
    build_user_plane,
    load_pose_csv,
    project_calibration_to_user_points,
    reproject_user_points,
)
from .imgproc import GrayImage, read_image
from .pipeline import FrameInput

__all__ = [
    "SceneConfig",
    "SimStream",
    "ErrorReport",
    "simulate_stream",
    "compute_report",
    "foveal_window_px",
    "ingest_dataset",
    "Dataset",
    "default_mapping",
    "serpentine_targets",
    "constant_poses",
    "yaw_sweep_poses",
    "natural_following_poses",
    "translation_sweep_poses",
    "format_report_table",
]


def default_mapping(kind: str, screen: ScreenGeometry) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Mild, invertible true-mapping coefficients for the 6-term basis.

    Gaze vectors around +-20 px map across roughly 80% of the screen; the
    quadratic variant adds small cross and square terms that keep the
    Jacobian positive on the working domain.
    """
    gx = 0.8 * screen.width_px / 2.0 / 20.0
    gy = 0.8 * screen.height_px / 2.0 / 20.0
    ax = [screen.width_px / 2.0, gx, 0.0, 0.0, 0.0, 0.0]
    ay = [screen.height_px / 2.0, 0.0, gy, 0.0, 0.0, 0.0]
    if kind == "quadratic":
        ax[3], ax[4], ax[5] = 0.05, 0.08, 0.03
        ay[3], ay[4], ay[5] = -0.04, 0.02, 0.06
    elif kind != "affine":
        raise InvalidInputError("mapping kind must be 'affine' or 'quadratic'")
    return tuple(ax), tuple(ay)


@dataclass(frozen=True)
class SceneConfig:
    """Scene constants, noise levels, and the true mapping."""

    screen: ScreenGeometry = ScreenGeometry()
    depth_mm: float = 750.0
    mapping: str = "quadratic"
    coeffs: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    vector_noise_px: float = 0.0
    pose_noise_deg: float = 0.0
    pose_noise_mm: float = 0.0
    seed: int = 0
    plane_offset_mm: float = DEFAULT_PLANE_OFFSET_MM
    raw_anchor_gain: float = 0.75
    margin: float = 0.10

    def __post_init__(self):
        if not self.depth_mm > 0:
            raise InvalidInputError("depth must be positive")
        if min(self.vector_noise_px, self.pose_noise_deg, self.pose_noise_mm) < 0:
            raise InvalidInputError("noise levels must be non-negative")

    @property
    def reference_pose(self) -> HeadPose:
        return HeadPose(tz=self.depth_mm)

    def mapping_coeffs(self):
        if self.coeffs is not None:
            return self.coeffs
        return default_mapping(self.mapping, self.screen)


def _eval_map(ax, ay, v: np.ndarray) -> np.ndarray:
    x, y = v
    basis = np.array([1.0, x, y, x * y, x * x, y * y])
    return np.array([np.dot(ax, basis), np.dot(ay, basis)])


def _map_jacobian(ax, ay, v: np.ndarray) -> np.ndarray:
    x, y = v
    dbx = np.array([0.0, 1.0, 0.0, y, 2 * x, 0.0])
    dby = np.array([0.0, 0.0, 1.0, x, 0.0, 2 * y])
    return np.array(
        [[np.dot(ax, dbx), np.dot(ax, dby)], [np.dot(ay, dbx), np.dot(ay, dby)]]
    )


def _invert_map(ax, ay, target: np.ndarray, guess: np.ndarray | None = None) -> np.ndarray:
    """Newton inversion of the 6-term mapping; exact on affine mappings."""
    ax = np.asarray(ax, dtype=np.float64)
    ay = np.asarray(ay, dtype=np.float64)
    if guess is None:
        lin = np.array([[ax[1], ax[2]], [ay[1], ay[2]]])
        v = np.linalg.solve(lin, target - np.array([ax[0], ay[0]]))
    else:
        v = np.asarray(guess, dtype=np.float64).copy()
    for _ in range(50):
        err = _eval_map(ax, ay, v) - target
        if np.abs(err).max() < 1e-10:
            return v
        v = v - np.linalg.solve(_map_jacobian(ax, ay, v), err)
    raise InvalidInputError("true mapping is not invertible at this target")


@dataclass(frozen=True)
class SimStream:
    """Simulated frames plus the noiseless ground truth they encode."""

    frames: tuple[FrameInput, ...]  # pose-normalized gaze vectors
    frames_raw: tuple[FrameInput, ...]  # camera-frame vectors with anchor drift
    truth: tuple[ScreenPoint, ...]
    calibration: CalibrationSet
    poses: tuple[HeadPose, ...]
    config: SceneConfig


def simulate_stream(cfg: SceneConfig, pose_script, targets) -> SimStream:
    """Generate tracker input for scripted poses and gaze targets.

    At the reference pose the calibration vectors come from inverting the
    true mapping at the 25 template targets. For a frame at pose p, the
    per-pose mapping is the same model family refit on the re-projected
    targets; the frame's pose-normalized vector is its inverse at the gaze
    target, so re-calibration is exact in this world while fixed-calibration
    trackers degrade with head movement. The raw (camera-frame) vector adds
    an anchor-drift term of ``raw_anchor_gain`` times the pose-induced vector
    displacement, dragging a fixed-calibration estimate further from the
    target the more the head moves.
    """
    pose_script = list(pose_script)
    targets = list(targets)
    if len(pose_script) != len(targets):
        raise InvalidInputError("pose script and target sequences differ in length")
    rng = np.random.default_rng(cfg.seed)
    ax, ay = cfg.mapping_coeffs()
    p0 = cfg.reference_pose

    cal_targets = template_targets(cfg.screen, cfg.margin)
    samples = []
    for idx in sorted(cal_targets):
        t = cal_targets[idx]
        v = _invert_map(ax, ay, np.array([t.sx, t.sy]))
        v = v + rng.normal(0.0, cfg.vector_noise_px, size=2) if cfg.vector_noise_px else v
        samples.append(
            CalibrationSample(idx, GazeVector(float(v[0]), float(v[1]), Eye.LEFT), t)
        )
    calibration = CalibrationSet(samples=tuple(samples), screen=cfg.screen)

    # Noiseless vectors drive the world geometry even when measurement noise
    # is added to the emitted stream.
    clean_vectors = {
        idx: _invert_map(ax, ay, np.array([t.sx, t.sy])) for idx, t in cal_targets.items()
    }
    clean_cal = CalibrationSet(
        samples=tuple(
            CalibrationSample(
                idx,
                GazeVector(float(v[0]), float(v[1]), Eye.LEFT),
                cal_targets[idx],
            )
            for idx, v in sorted(clean_vectors.items())
        ),
        screen=cfg.screen,
    )
    plane = build_user_plane(p0, cfg.plane_offset_mm)
    ups = project_calibration_to_user_points(p0, plane, cfg.screen, clean_cal)

    frames = []
    frames_raw = []
    truths = []
    cached_pose = None
    cached_coeffs = (np.asarray(ax), np.asarray(ay))
    for i, (pose, target) in enumerate(zip(pose_script, targets)):
        if pose != cached_pose:
            if pose == p0:
                pose_ax, pose_ay = np.asarray(ax), np.asarray(ay)
            else:
                moved = reproject_user_points(pose, ups, cfg.screen)
                model = fit_quadratic(clean_cal.with_targets(moved), 25)
                pose_ax, pose_ay = np.asarray(model.ax), np.asarray(model.ay)
            cached_pose = pose
            cached_coeffs = (pose_ax, pose_ay)
        pose_ax, pose_ay = cached_coeffs

        s = np.array([target.sx, target.sy])
        v_norm = _invert_map(pose_ax, pose_ay, s)
        # Anchor drift: without pose normalization the measured vector keeps
        # the pose-induced displacement (v_norm - v_static) and adds a drift
        # proportional to it, pushing a stale calibration further off target.
        v_static = _invert_map(np.asarray(ax), np.asarray(ay), s)
        v_raw = v_norm + cfg.raw_anchor_gain * (v_norm - v_static)

        emitted_pose = pose
        if cfg.pose_noise_deg or cfg.pose_noise_mm:
            rot_sigma = math.radians(cfg.pose_noise_deg)
            emitted_pose = HeadPose(
                wx=pose.wx + rng.normal(0.0, rot_sigma),
                wy=pose.wy + rng.normal(0.0, rot_sigma),
                wz=pose.wz + rng.normal(0.0, rot_sigma),
                tx=pose.tx + rng.normal(0.0, cfg.pose_noise_mm),
                ty=pose.ty + rng.normal(0.0, cfg.pose_noise_mm),
                tz=pose.tz + rng.normal(0.0, cfg.pose_noise_mm),
            )
        if cfg.vector_noise_px:
            v_norm = v_norm + rng.normal(0.0, cfg.vector_noise_px, size=2)
            v_raw = v_raw + rng.normal(0.0, cfg.vector_noise_px, size=2)

        frames.append(
            FrameInput(
                frame=i,
                vectors=(GazeVector(float(v_norm[0]), float(v_norm[1]), Eye.LEFT),),
                pose=emitted_pose,
            )
        )
        frames_raw.append(
            FrameInput(
                frame=i,
                vectors=(GazeVector(float(v_raw[0]), float(v_raw[1]), Eye.LEFT),),
                pose=emitted_pose,
            )
        )
        truths.append(target)
    return SimStream(
        frames=tuple(frames),
        frames_raw=tuple(frames_raw),
        truth=tuple(truths),
        calibration=calibration,
        poses=tuple(pose_script),
        config=cfg,
    )


# ---------------------------------------------------------------------------
# Scripts

def serpentine_targets(screen: ScreenGeometry, frames_per_point: int = 1, margin: float = 0.10):
    """The 5x5 template grid swept row by row, alternating direction."""
    grid = template_targets(screen, margin)
    out = []
    for row in range(5):
        cols = range(5) if row % 2 == 0 else range(4, -1, -1)
        for col in cols:
            out.extend([grid[row * 5 + col + 1]] * frames_per_point)
    return out


def constant_poses(n: int, pose: HeadPose | None = None, depth_mm: float = 750.0):
    pose = pose or HeadPose(tz=depth_mm)
    return [pose] * n


def yaw_sweep_poses(n: int, max_deg: float = 16.5, depth_mm: float = 750.0):
    """Triangle yaw sweep 0 -> +max -> -max -> 0 over n frames."""
    phases = np.linspace(0.0, 1.0, n)
    out = []
    for ph in phases:
        if ph < 0.25:
            frac = ph / 0.25
        elif ph < 0.75:
            frac = 1.0 - 2.0 * (ph - 0.25) / 0.5
        else:
            frac = -1.0 + (ph - 0.75) / 0.25
        out.append(HeadPose(wy=math.radians(max_deg) * frac, tz=depth_mm))
    return out


def natural_following_poses(
    targets,
    screen: ScreenGeometry,
    depth_mm: float = 750.0,
    yaw_max_deg: float = 16.5,
    pitch_max_deg: float = 8.0,
):
    """Poses that turn the head toward each gaze target.

    Yaw and pitch scale linearly with the target's offset from the screen
    center, reaching the given maxima at the extreme template columns/rows.
    This mirrors natural use: the head follows the gaze, so re-calibrated
    targets stay near the gazed point.
    """
    grid = template_targets(screen)
    x_extent = max(abs(screen.px_to_mm(grid[i])[0]) for i in (1, 5))
    y_extent = max(abs(screen.px_to_mm(grid[i])[1]) for i in (1, 21))
    out = []
    for t in targets:
        mm = screen.px_to_mm(t)
        # Positive yaw turns the face toward -x, positive pitch toward +y.
        wy = -math.radians(yaw_max_deg) * mm[0] / x_extent
        wx = math.radians(pitch_max_deg) * mm[1] / y_extent
        out.append(HeadPose(wx=wx, wy=wy, tz=depth_mm))
    return out


def translation_sweep_poses(n: int, axis: str = "x", max_mm: float = 50.0, depth_mm: float = 750.0):
    """Linear translation ramp from 0 to max_mm along one axis."""
    out = []
    for frac in np.linspace(0.0, 1.0, n):
        d = {"tx": 0.0, "ty": 0.0, "tz": depth_mm}
        if axis == "z":
            d["tz"] = depth_mm + max_mm * frac
        else:
            d["t" + axis] = max_mm * frac
        out.append(HeadPose(**d))
    return out


# ---------------------------------------------------------------------------
# Metrics

@dataclass(frozen=True)
class ErrorReport:
    """Per-axis mean/std of absolute error in px, plus degrees at depth."""

    mean_x: float
    mean_y: float
    std_x: float
    std_y: float
    degrees_x: float
    degrees_y: float
    mean_euclidean: float
    frames: int


def compute_report(estimates, truths, depth_mm: float, screen: ScreenGeometry) -> ErrorReport:
    """Mean and population std of per-axis absolute error, px and degrees."""
    if len(estimates) != len(truths):
        raise InvalidInputError("estimate and truth sequences differ in length")
    if not estimates:
        raise InvalidInputError("nothing to report")
    ex = np.array([abs(e.sx - t.sx) for e, t in zip(estimates, truths)])
    ey = np.array([abs(e.sy - t.sy) for e, t in zip(estimates, truths)])
    mean_x, mean_y = float(ex.mean()), float(ey.mean())
    deg_x = math.degrees(math.atan(mean_x * screen.mm_per_px_x / depth_mm))
    deg_y = math.degrees(math.atan(mean_y * screen.mm_per_px_y / depth_mm))
    return ErrorReport(
        mean_x=mean_x,
        mean_y=mean_y,
        std_x=float(ex.std()),
        std_y=float(ey.std()),
        degrees_x=deg_x,
        degrees_y=deg_y,
        mean_euclidean=float(np.hypot(ex, ey).mean()),
        frames=len(estimates),
    )


def foveal_window_px(depth_mm: float, screen: ScreenGeometry, degrees: float = 2.0) -> tuple[float, float]:
    """Pixel extent of a visual cone of the given angle at the screen."""
    if depth_mm <= 0 or degrees < 0:
        raise InvalidInputError("depth must be positive and degrees non-negative")
    w_mm = 2.0 * depth_mm * math.tan(math.radians(degrees) / 2.0)
    return w_mm / screen.mm_per_px_x, w_mm / screen.mm_per_px_y


def format_report_table(rows) -> str:
    """Comparison table with one row per run and Mean/Std (x, y) pairs."""
    header = f"| {'Run':<12} | {'Mean (x, y) px':>22} | {'Std (x, y) px':>22} | {'Deg (x, y)':>14} |"
    rule = "-" * len(header)
    lines = [rule, header, rule]
    for label, rep in rows:
        lines.append(
            f"| {label:<12} | {rep.mean_x:>10.2f}, {rep.mean_y:<9.2f}"
            f" | {rep.std_x:>10.2f}, {rep.std_y:<9.2f}"
            f" | {rep.degrees_x:>5.2f}, {rep.degrees_y:<5.2f}  |"
        )
    lines.append(rule)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Dataset ingestion

@dataclass(frozen=True)
class Dataset:
    """Ordered recording: frames, ground-truth targets, optional poses."""

    frames: tuple[GrayImage, ...]
    truth: tuple[ScreenPoint, ...]
    poses: tuple[HeadPose, ...] | None = None


def _read_truth_csv(path: Path) -> list[tuple[int, ScreenPoint]]:
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "sx", "sy"]:
            raise IngestError(f"{path}: expected header 'frame,sx,sy'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestError(f"{path}:{lineno}: expected 3 fields")
            try:
                rows.append((int(row[0]), ScreenPoint(float(row[1]), float(row[2]))))
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return rows


def ingest_dataset(directory) -> Dataset:
    """Load `frames/NNNN.pgm|png`, `truth.csv`, and optional `poses.csv`.

    Frame numbering must be consecutive from its first index and every truth
    row must have its image; a poses file, when present, must cover every
    frame.
    """
    directory = Path(directory)
    truth_path = directory / "truth.csv"
    if not truth_path.exists():
        raise IngestError(f"{truth_path}: missing")
    truth_rows = _read_truth_csv(truth_path)
    if not truth_rows:
        raise IngestError(f"{truth_path}: no frames listed")
    indices = [i for i, _ in truth_rows]
    for prev, cur in zip(indices, indices[1:]):
        if cur != prev + 1:
            raise IngestError(
                f"{truth_path}: gap in frame numbering between {prev} and {cur}"
            )

    frames_dir = directory / "frames"
    images = []
    for idx, _ in truth_rows:
        stem = frames_dir / f"{idx:04d}"
        for suffix in (".pgm", ".png"):
            candidate = stem.with_suffix(suffix)
            if candidate.exists():
                images.append(read_image(candidate))
                break
        else:
            raise IngestError(f"{stem}.pgm|png: missing frame image")

    poses = None
    poses_path = directory / "poses.csv"
    if poses_path.exists():
        try:
            pose_rows = load_pose_csv(poses_path)
        except InvalidInputError as exc:
            raise IngestError(str(exc)) from exc
        pose_map = dict(pose_rows)
        missing = [i for i in indices if i not in pose_map]
        if missing:
            raise IngestError(f"{poses_path}: missing poses for frames {missing}")
        poses = tuple(pose_map[i] for i in indices)

    return Dataset(
        frames=tuple(images),
        truth=tuple(t for _, t in truth_rows),
        poses=poses,
    )
