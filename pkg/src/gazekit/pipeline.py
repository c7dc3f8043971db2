"""The three gaze trackers: static 2D, pose-normalized 2.5D, re-calibrating 3D.

A session owns the fitted per-eye mapping models and processes frames in
order. The static and pose-normalized trackers keep their calibration fixed;
the re-calibrating tracker re-projects its user points at the current head
pose and refits the models whenever the pose moves beyond a small threshold,
keeping the original gaze vectors and replacing only the screen targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .calibration import (
    CalibrationSet,
    Eye,
    GazeVector,
    MappingModel,
    ScreenPoint,
    fit_model,
    predict,
)
from .errors import (
    DegenerateDesignError,
    DegenerateGeometryError,
    InvalidInputError,
    NoIntersectionError,
)
from .geometry import (
    DEFAULT_PLANE_OFFSET_MM,
    HeadPose,
    ScreenGeometry,
    UserPointSet,
    build_user_plane,
    project_calibration_to_user_points,
    reproject_user_points,
)

__all__ = [
    "TrackerKind",
    "PoseThresholds",
    "should_recalibrate",
    "FrameInput",
    "GazeEstimate",
    "TrackerSession",
]


class TrackerKind(Enum):
    STATIC_2D = "2d"
    POSE_NORMALIZED_25D = "2.5d"
    RECALIBRATING_3D = "3d"

    @classmethod
    def from_name(cls, name: str) -> "TrackerKind":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise InvalidInputError(f"unknown tracker kind '{name}' (one of: {valid})")


@dataclass(frozen=True)
class PoseThresholds:
    """Minimum pose change that triggers a re-calibration."""

    rotation_deg: float = 0.25
    translation_mm: float = 1.0


def should_recalibrate(pose_now: HeadPose, pose_ref: HeadPose, thr: PoseThresholds) -> bool:
    """True when any rotation or translation axis moved beyond its threshold."""
    rot_limit = math.radians(thr.rotation_deg)
    if (
        abs(pose_now.wx - pose_ref.wx) > rot_limit
        or abs(pose_now.wy - pose_ref.wy) > rot_limit
        or abs(pose_now.wz - pose_ref.wz) > rot_limit
    ):
        return True
    return (
        abs(pose_now.tx - pose_ref.tx) > thr.translation_mm
        or abs(pose_now.ty - pose_ref.ty) > thr.translation_mm
        or abs(pose_now.tz - pose_ref.tz) > thr.translation_mm
    )


@dataclass(frozen=True)
class FrameInput:
    """One frame of tracker input: per-eye gaze vectors, optional pose."""

    frame: int
    vectors: tuple[GazeVector, ...]
    pose: HeadPose | None = None

    def __post_init__(self):
        if not self.vectors:
            raise InvalidInputError("frame input needs at least one gaze vector")
        eyes = [v.eye for v in self.vectors]
        if len(set(eyes)) != len(eyes):
            raise InvalidInputError("one gaze vector per eye")

    def vector_for(self, eye: Eye) -> GazeVector | None:
        for v in self.vectors:
            if v.eye is eye:
                return v
        return None


@dataclass(frozen=True)
class GazeEstimate:
    """Estimated point of visual gaze for one frame."""

    frame: int
    point: ScreenPoint
    model_kind: str
    recalibrated: bool = False
    fallback: bool = False


@dataclass
class _EyeState:
    calibration: CalibrationSet
    model: MappingModel


class TrackerSession:
    """Sequential per-stream tracker; frames must arrive in order.

    ``fusion`` is "average" (mean of the per-eye predictions present in the
    frame) or a single :class:`Eye` to use exclusively.
    """

    def __init__(
        self,
        kind: TrackerKind,
        calibrations: dict[Eye, CalibrationSet] | CalibrationSet,
        model_kind: str = "quadratic25",
        screen: ScreenGeometry | None = None,
        pose0: HeadPose | None = None,
        plane_offset_mm: float = DEFAULT_PLANE_OFFSET_MM,
        thresholds: PoseThresholds = PoseThresholds(),
        fusion="average",
    ):
        if isinstance(calibrations, CalibrationSet):
            calibrations = {calibrations.eye: calibrations}
        if not calibrations:
            raise InvalidInputError("no calibration data")
        self.kind = kind
        self.model_kind = model_kind
        self.screen = screen or ScreenGeometry()
        self.thresholds = thresholds
        self.fusion = fusion
        self._eyes = {
            eye: _EyeState(calibration=cal, model=fit_model(cal, model_kind))
            for eye, cal in calibrations.items()
        }

        self._ups: UserPointSet | None = None
        self._model_pose: HeadPose | None = None
        if kind is TrackerKind.RECALIBRATING_3D:
            if pose0 is None:
                raise InvalidInputError("the 3D tracker needs the calibration pose")
            self._check_consistent_targets(calibrations)
            plane = build_user_plane(pose0, plane_offset_mm)
            any_cal = next(iter(calibrations.values()))
            self._ups = project_calibration_to_user_points(
                pose0, plane, self.screen, any_cal
            )
            self._model_pose = pose0

    @staticmethod
    def _check_consistent_targets(calibrations) -> None:
        targets: dict[int, ScreenPoint] = {}
        for cal in calibrations.values():
            for s in cal.samples:
                prev = targets.setdefault(s.index, s.target)
                if prev != s.target:
                    raise InvalidInputError(
                        f"calibration index {s.index} has conflicting targets across eyes"
                    )

    def run_frame(self, frame: FrameInput) -> GazeEstimate:
        recalibrated = False
        fallback = False
        if self.kind is not TrackerKind.STATIC_2D and frame.pose is None:
            raise InvalidInputError(f"{self.kind.value} tracker needs a head pose")

        if self.kind is TrackerKind.RECALIBRATING_3D and should_recalibrate(
            frame.pose, self._model_pose, self.thresholds
        ):
            try:
                self._refit(frame.pose)
                recalibrated = True
            except (DegenerateGeometryError, NoIntersectionError, DegenerateDesignError):
                fallback = True  # keep the previous model

        point = self._predict(frame)
        return GazeEstimate(
            frame=frame.frame,
            point=point,
            model_kind=self.model_kind,
            recalibrated=recalibrated,
            fallback=fallback,
        )

    def run(self, frames) -> list[GazeEstimate]:
        return [self.run_frame(f) for f in frames]

    def _refit(self, pose: HeadPose) -> None:
        new_targets = reproject_user_points(pose, self._ups, self.screen)
        refitted = {
            eye: _EyeState(
                calibration=st.calibration,
                model=fit_model(st.calibration.with_targets(new_targets), self.model_kind),
            )
            for eye, st in self._eyes.items()
        }
        self._eyes = refitted
        self._model_pose = pose

    def _predict(self, frame: FrameInput) -> ScreenPoint:
        if isinstance(self.fusion, Eye):
            wanted = [self.fusion]
        else:
            wanted = list(self._eyes)
        points = []
        for eye in wanted:
            vec = frame.vector_for(eye)
            if vec is None or eye not in self._eyes:
                continue
            points.append(predict(self._eyes[eye].model, vec))
        if not points:
            raise InvalidInputError(
                f"frame {frame.frame} has no gaze vector for a calibrated eye"
            )
        sx = sum(p.sx for p in points) / len(points)
        sy = sum(p.sy for p in points) / len(points)
        return ScreenPoint(sx, sy)
