"""Appearance-based eye/gaze tracking toolkit.

Two-component pipeline: eye and feature localization on one side (template
matching, isophote-curvature center voting, translational registration),
screen mapping on the other (calibration sets, least-squares mapping models,
head-motion re-calibration in 3D), plus a synthetic scene simulator and an
evaluation harness.
"""

from .calibration import (
    CalibrationSample,
    CalibrationSet,
    Eye,
    GazeVector,
    MappingModel,
    ScreenPoint,
    fit_error,
    fit_interp2,
    fit_linear5,
    fit_model,
    fit_quadratic,
    polyfit_least_squares,
    predict,
    template_targets,
)
from .errors import (
    DegenerateDesignError,
    DegenerateGeometryError,
    GazekitError,
    IngestError,
    InvalidInputError,
    NoIntersectionError,
    RegistrationLostError,
    UndefinedDisparityError,
)
from .evalsim import (
    Dataset,
    ErrorReport,
    SceneConfig,
    SimStream,
    compute_report,
    foveal_window_px,
    ingest_dataset,
    simulate_stream,
)
from .geometry import (
    HeadPose,
    Plane3,
    Ray3,
    RigidTransform,
    ScreenGeometry,
    UserPointSet,
    build_user_plane,
    head_local_frame,
    intersect_line_plane,
    natural_rotation_bounds,
    project_calibration_to_user_points,
    reproject_user_points,
)
from .imgproc import DerivativeStack, GrayImage, convolve, derivative_stack, read_image
from .isocenter import (
    CenterMap,
    PupilEstimate,
    accumulate_centermap,
    curvedness,
    displacement_field,
    isophote_curvature,
    locate_eye_center,
    mean_shift_refine,
)
from .lk import Disparity, TrackedFeature, register_1d, register_2d, track_sequence
from .pipeline import (
    FrameInput,
    GazeEstimate,
    PoseThresholds,
    TrackerKind,
    TrackerSession,
    should_recalibrate,
)
from .template_match import MatchMethod, MatchSurface, best_match, match_template

__version__ = "0.1.0"
