"""Command-line interface.

Subcommands:
  detect-eyes     locate eye centers in images (isophote voting or templates)
  track-features  track anchor points across a frame directory
  track           run a gaze tracker over vector/pose streams
  simulate        generate a synthetic scene (calibration, vectors, poses, truth)
  evaluate        score an estimate stream against ground truth
  report          side-by-side comparison table for several runs
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import evalsim
from .calibration import Eye, GazeVector, ScreenPoint, load_calibration_csv, save_calibration_csv
from .errors import GazekitError
from .geometry import HeadPose, ScreenGeometry, load_pose_csv, save_pose_csv
from .imgproc import GrayImage, read_image
from .isocenter import DEFAULT_SIGMA, DEFAULT_SIGMA_ACC, DEFAULT_WINDOW, locate_eye_center
from .lk import DEFAULT_PATCH_SIDE, TrackedFeature, track_sequence
from .pipeline import FrameInput, TrackerKind, TrackerSession
from .template_match import MatchMethod, best_match, match_template


def _parse_screen(res: str, size_mm: str) -> ScreenGeometry:
    w, h = (int(v) for v in res.lower().split("x"))
    wmm, hmm = (float(v) for v in size_mm.lower().split("x"))
    return ScreenGeometry(width_px=w, height_px=h, width_mm=wmm, height_mm=hmm)


def _parse_pose(text: str) -> HeadPose:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 6:
        raise GazekitError("pose must be 'wx,wy,wz,tx,ty,tz'")
    return HeadPose(*vals)


def _add_screen_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--screen", default="1280x1024", help="resolution WxH in px")
    p.add_argument("--screen-mm", default="430x320", help="physical size WxH in mm")


def _frame_images(args) -> list[tuple[int, Path]]:
    if args.frames_dir:
        paths = sorted(
            p for p in Path(args.frames_dir).iterdir() if p.suffix.lower() in (".pgm", ".png")
        )
    else:
        paths = [Path(p) for p in args.image]
    if not paths:
        raise GazekitError("no input images")
    return list(enumerate(paths))


def _write_rows(path, header, rows) -> None:
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------

def cmd_detect_eyes(args) -> int:
    rois = []
    if args.roi:
        rois.append(("left", args.roi))
    if args.roi_left:
        rois.append(("left", args.roi_left))
    if args.roi_right:
        rois.append(("right", args.roi_right))
    if not rois:
        raise GazekitError("give --roi, --roi-left, or --roi-right")

    template = read_image(args.template) if args.template else None
    if args.locator == "template" and template is None:
        raise GazekitError("--locator=template needs --template")
    method = MatchMethod.from_name(args.method)

    rows = []
    for frame, path in _frame_images(args):
        img = read_image(path)
        for eye, roi_text in rois:
            roi = tuple(int(v) for v in roi_text.split(","))
            if len(roi) != 4:
                raise GazekitError("roi must be 'x,y,w,h'")
            if args.locator == "isophote":
                est = locate_eye_center(
                    img, roi, sigma=args.sigma, sigma_acc=args.sigma_acc, window=args.window
                )
                rows.append([frame, eye, _fmt(est.x), _fmt(est.y), _fmt(est.confidence)])
            else:
                rx, ry, rw, rh = roi
                crop = GrayImage(img.pixels[ry : ry + rh, rx : rx + rw])
                surface = match_template(crop, template, method)
                x, y, score = best_match(surface)
                cx = rx + x + (template.width - 1) / 2.0
                cy = ry + y + (template.height - 1) / 2.0
                rows.append([frame, eye, _fmt(cx), _fmt(cy), _fmt(score)])
    _write_rows(args.out, ["frame", "eye", "x", "y", "confidence"], rows)
    return 0


def cmd_track_features(args) -> int:
    frames = [read_image(p) for _, p in _frame_images(args)]
    coords = [float(v) for v in args.init.split(",")]
    if len(coords) < 2 or len(coords) % 2:
        raise GazekitError("--init must be x,y pairs")
    rows = []
    for feat_id in range(len(coords) // 2):
        x, y = coords[2 * feat_id], coords[2 * feat_id + 1]
        feature = TrackedFeature.from_frame(frames[0], x, y, args.patch)
        for frame_idx, pt in enumerate(track_sequence(feature, frames)):
            rows.append([frame_idx, feat_id, _fmt(pt.x), _fmt(pt.y), pt.status])
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_rows(args.out, ["frame", "feature", "x", "y", "status"], rows)
    return 0


def _load_vectors(path) -> dict[int, list[GazeVector]]:
    out: dict[int, list[GazeVector]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "eye", "vx", "vy"]:
            raise GazekitError(f"{path}: expected header 'frame,eye,vx,vy'")
        for row in reader:
            if not row:
                continue
            frame = int(row[0])
            out.setdefault(frame, []).append(
                GazeVector(float(row[2]), float(row[3]), Eye.from_name(row[1]))
            )
    return out


def cmd_track(args) -> int:
    screen = _parse_screen(args.screen, args.screen_mm)
    kind = TrackerKind.from_name(args.kind)
    calibrations = load_calibration_csv(args.calib, screen)
    vectors = _load_vectors(args.vectors)

    poses = {}
    if args.poses:
        poses = dict(load_pose_csv(args.poses))
    elif kind is not TrackerKind.STATIC_2D:
        raise GazekitError(f"{kind.value} tracking needs --poses")

    fusion = "average" if args.eye == "both" else Eye.from_name(args.eye)
    session = TrackerSession(
        kind,
        calibrations,
        model_kind=args.model,
        screen=screen,
        pose0=_parse_pose(args.calib_pose) if kind is TrackerKind.RECALIBRATING_3D else None,
        plane_offset_mm=args.plane_offset,
        fusion=fusion,
    )
    rows = []
    for frame in sorted(vectors):
        inp = FrameInput(frame=frame, vectors=tuple(vectors[frame]), pose=poses.get(frame))
        est = session.run_frame(inp)
        rows.append(
            [frame, _fmt(est.point.sx), _fmt(est.point.sy), args.kind, int(est.recalibrated)]
        )
    _write_rows(args.out, ["frame", "sx", "sy", "kind", "recalibrated"], rows)
    return 0


def cmd_simulate(args) -> int:
    screen = _parse_screen(args.screen, args.screen_mm)
    cfg = evalsim.SceneConfig(
        screen=screen,
        depth_mm=args.depth,
        mapping=args.mapping,
        vector_noise_px=args.noise_vec,
        pose_noise_deg=args.noise_pose_deg,
        pose_noise_mm=args.noise_pose_mm,
        seed=args.seed,
        plane_offset_mm=args.plane_offset,
        raw_anchor_gain=args.raw_gain,
    )
    n = args.frames
    if args.pose_script == "constant":
        poses = evalsim.constant_poses(n, depth_mm=args.depth)
    elif args.pose_script == "yaw-sweep":
        poses = evalsim.yaw_sweep_poses(n, args.yaw_max, depth_mm=args.depth)
    elif args.pose_script == "translate-x":
        poses = evalsim.translation_sweep_poses(n, "x", args.shift_mm, depth_mm=args.depth)
    else:
        raise GazekitError(f"unknown pose script '{args.pose_script}'")
    reps = max(1, (n + 24) // 25)
    targets = (evalsim.serpentine_targets(screen) * reps)[:n]

    sim = evalsim.simulate_stream(cfg, poses, targets)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_calibration_csv([sim.calibration], out / "calibration.csv")
    save_pose_csv(
        [(f.frame, f.pose) for f in sim.frames], out / "poses.csv"
    )
    for name, stream in (("vectors.csv", sim.frames), ("vectors_raw.csv", sim.frames_raw)):
        rows = [
            [f.frame, v.eye.value, _fmt(v.x), _fmt(v.y)]
            for f in stream
            for v in f.vectors
        ]
        _write_rows(out / name, ["frame", "eye", "vx", "vy"], rows)
    _write_rows(
        out / "truth.csv",
        ["frame", "sx", "sy"],
        [[i, _fmt(t.sx), _fmt(t.sy)] for i, t in enumerate(sim.truth)],
    )
    print(f"wrote {len(sim.frames)} frames to {out}")
    return 0


def _load_points_csv(path, cols) -> dict[int, ScreenPoint]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise GazekitError(f"{path}: empty file")
        name_to_i = {h.strip(): i for i, h in enumerate(header)}
        for need in ("frame", *cols):
            if need not in name_to_i:
                raise GazekitError(f"{path}: missing column '{need}'")
        for row in reader:
            if not row:
                continue
            out[int(row[name_to_i["frame"]])] = ScreenPoint(
                float(row[name_to_i[cols[0]]]), float(row[name_to_i[cols[1]]])
            )
    return out


def _report_for(est_path, truth_path, depth, screen) -> evalsim.ErrorReport:
    est = _load_points_csv(est_path, ("sx", "sy"))
    truth = _load_points_csv(truth_path, ("sx", "sy"))
    frames = sorted(set(est) & set(truth))
    if not frames:
        raise GazekitError("no overlapping frames between estimates and truth")
    return evalsim.compute_report(
        [est[f] for f in frames], [truth[f] for f in frames], depth, screen
    )


def cmd_evaluate(args) -> int:
    screen = _parse_screen(args.screen, args.screen_mm)
    rep = _report_for(args.estimates, args.truth, args.depth, screen)
    print(f"frames: {rep.frames}")
    print(f"mean abs error px: ({rep.mean_x:.4f}, {rep.mean_y:.4f})")
    print(f"std  abs error px: ({rep.std_x:.4f}, {rep.std_y:.4f})")
    print(f"mean error deg:    ({rep.degrees_x:.4f}, {rep.degrees_y:.4f})")
    print(f"mean euclidean px: {rep.mean_euclidean:.4f}")
    if args.out:
        _write_rows(
            args.out,
            ["mean_x", "mean_y", "std_x", "std_y", "deg_x", "deg_y", "euclid", "frames"],
            [
                [
                    _fmt(rep.mean_x), _fmt(rep.mean_y), _fmt(rep.std_x), _fmt(rep.std_y),
                    _fmt(rep.degrees_x), _fmt(rep.degrees_y), _fmt(rep.mean_euclidean),
                    rep.frames,
                ]
            ],
        )
    return 0


def cmd_report(args) -> int:
    screen = _parse_screen(args.screen, args.screen_mm)
    rows = []
    for spec in args.run:
        parts = spec.split(":")
        if len(parts) != 3:
            raise GazekitError("--run must be 'label:estimates.csv:truth.csv'")
        label, est_path, truth_path = parts
        rows.append((label, _report_for(est_path, truth_path, args.depth, screen)))
    print(evalsim.format_report_table(rows))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect-eyes", help="locate eye centers in images")
    p.add_argument("--image", action="append", default=[], help="input image (repeatable)")
    p.add_argument("--frames-dir", help="directory of .pgm/.png frames")
    p.add_argument("--locator", choices=("isophote", "template"), default="isophote")
    p.add_argument("--roi", help="x,y,w,h search region (labelled 'left')")
    p.add_argument("--roi-left", help="x,y,w,h for the left eye")
    p.add_argument("--roi-right", help="x,y,w,h for the right eye")
    p.add_argument("--template", help="template image for --locator=template")
    p.add_argument("--method", default="ccoeff_normed", help="template match score")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--sigma-acc", type=float, default=DEFAULT_SIGMA_ACC)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_detect_eyes)

    p = sub.add_parser("track-features", help="track anchor points across frames")
    p.add_argument("--image", action="append", default=[], help="input image (repeatable)")
    p.add_argument("--frames-dir", help="directory of .pgm/.png frames")
    p.add_argument("--init", required=True, help="x,y[,x,y...] feature positions")
    p.add_argument("--patch", type=int, default=DEFAULT_PATCH_SIDE)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_track_features)

    p = sub.add_parser("track", help="run a gaze tracker over streams")
    p.add_argument("--kind", required=True, choices=("2d", "2.5d", "3d"))
    p.add_argument("--calib", required=True, help="calibration CSV")
    p.add_argument("--vectors", required=True, help="gaze vector CSV")
    p.add_argument("--poses", help="head pose CSV (needed for 2.5d/3d)")
    p.add_argument("--out", help="estimates CSV (default stdout)")
    p.add_argument("--model", default="quadratic25", help="mapping model kind")
    p.add_argument("--eye", default="both", help="left, right, or both (average)")
    p.add_argument("--calib-pose", default="0,0,0,0,0,750", help="pose at calibration")
    p.add_argument("--plane-offset", type=float, default=100.0)
    _add_screen_args(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--frames", type=int, default=75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pose-script", default="constant", choices=("constant", "yaw-sweep", "translate-x"))
    p.add_argument("--yaw-max", type=float, default=16.5, help="sweep amplitude, degrees")
    p.add_argument("--shift-mm", type=float, default=50.0)
    p.add_argument("--depth", type=float, default=750.0)
    p.add_argument("--mapping", default="quadratic", choices=("affine", "quadratic"))
    p.add_argument("--noise-vec", type=float, default=0.0)
    p.add_argument("--noise-pose-deg", type=float, default=0.0)
    p.add_argument("--noise-pose-mm", type=float, default=0.0)
    p.add_argument("--plane-offset", type=float, default=100.0)
    p.add_argument("--raw-gain", type=float, default=0.75)
    _add_screen_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    p.add_argument("--estimates", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--depth", type=float, default=750.0)
    p.add_argument("--out", help="optional CSV summary")
    _add_screen_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="comparison table for several runs")
    p.add_argument("--run", action="append", required=True, help="label:est.csv:truth.csv")
    p.add_argument("--depth", type=float, default=750.0)
    _add_screen_args(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GazekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
