"""Command-line entry point.

Subcommands: synth (oracle scene files), thread (helix measurement), match
(two-scan docking pose), full (generate a scene in memory, measure it, and
report deltas against the generator's truth).

Exit codes: 0 success, 1 processing failure, 2 I/O error, 3 config error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import EPS_MODES, SOR_MODES, PipelineConfig
from .errors import CloudFormatError, ConfigError, FitError
from .io import read_cloud, write_cloud
from .matching import PoseSolution
from .pca import PLANE_PAIRS
from .pipeline import run_match, run_thread
from .report import RunReport, json_dumps
from .synth import (
    Scene,
    SceneSpec,
    build_scene,
    parse_scene_items,
)

_DEFAULTS = PipelineConfig()


class DockposeParser(argparse.ArgumentParser):
    """argparse exits on bad flags; we want a config error instead so the
    process-level exit code contract holds."""

    def error(self, message):
        raise ConfigError(message)


def _triple(text: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _int_list(text: str) -> tuple[int, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return tuple(int(p) for p in parts)


def _add_common(p: DockposeParser) -> None:
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed, help="rng seed")
    p.add_argument(
        "--out",
        dest="output_dir",
        default=_DEFAULTS.output_dir,
        metavar="DIR",
        help="directory for reports and generated files",
    )


def _add_pipeline_flags(p: DockposeParser) -> None:
    """One flag per config field; defaults come from PipelineConfig so every
    constant has a single home."""
    g = p.add_argument_group("pipeline")
    g.add_argument("--turbine-offset", type=_triple, default=_DEFAULTS.turbine_offset, metavar="X,Y,Z")
    g.add_argument("--format", choices=("ply", "xyz"), default=None, help="force input format (default: by extension)")
    g.add_argument("--sor-k", type=int, default=_DEFAULTS.sor_k)
    g.add_argument("--sor-nsigma", type=float, default=_DEFAULTS.sor_n_sigma)
    g.add_argument("--sor-mode", choices=SOR_MODES, default=_DEFAULTS.sor_mode)
    g.add_argument("--pca-view", choices=sorted(PLANE_PAIRS), default=_DEFAULTS.pca_view)
    g.add_argument("--axis-override", type=_triple, default=None, metavar="X,Y,Z")
    g.add_argument("--dbscan-eps", type=float, default=_DEFAULTS.dbscan_eps, help="neighborhood radius (default: auto)")
    g.add_argument("--dbscan-min-pts", type=int, default=_DEFAULTS.dbscan_min_pts)
    g.add_argument("--hough-resolution", type=float, default=_DEFAULTS.hough_resolution)
    g.add_argument("--hough-r-min", type=float, default=_DEFAULTS.hough_r_min)
    g.add_argument("--hough-r-max", type=float, default=_DEFAULTS.hough_r_max)
    g.add_argument("--hough-d-min", type=float, default=_DEFAULTS.hough_d_min)
    g.add_argument("--hough-d-max", type=float, default=_DEFAULTS.hough_d_max)
    g.add_argument("--hough-min-votes", type=int, default=_DEFAULTS.hough_min_votes)
    g.add_argument("--hough-refine-iterations", type=int, default=_DEFAULTS.hough_refine_iterations)
    g.add_argument("--plane-count", type=int, default=_DEFAULTS.plane_count)
    g.add_argument("--plane-iterations", type=_int_list, default=_DEFAULTS.plane_iterations, metavar="K1,K2")
    g.add_argument("--plane-tau", type=float, default=_DEFAULTS.plane_tau)
    g.add_argument("--expected-holes", type=int, default=_DEFAULTS.expected_holes)
    g.add_argument("--hole-iterations", type=int, default=_DEFAULTS.hole_iterations)
    g.add_argument("--hole-tau", type=float, default=_DEFAULTS.hole_tau)
    g.add_argument("--shaft-radius-min", type=float, default=_DEFAULTS.shaft_radius_min)
    g.add_argument("--h0", type=float, default=_DEFAULTS.h0)
    g.add_argument("--d0", type=float, default=_DEFAULTS.d0)
    g.add_argument("--gap", dest="nominal_gap", type=float, default=_DEFAULTS.nominal_gap, help="commanded face clearance (mm)")
    g.add_argument("--eps-mode", choices=EPS_MODES, default=_DEFAULTS.eps_mode)
    g.add_argument("--period", dest="period_deg", type=float, default=_DEFAULTS.period_deg, help="hole pattern period (deg); default 360/expected-holes")
    g.add_argument("--theta-grid", dest="theta_grid_deg", type=float, default=_DEFAULTS.theta_grid_deg)


def _config_from_args(args) -> PipelineConfig:
    return PipelineConfig(
        seed=args.seed,
        output_dir=args.output_dir,
        keep_intermediate=getattr(args, "keep_intermediate", False),
        turbine_offset=args.turbine_offset,
        sor_k=args.sor_k,
        sor_n_sigma=args.sor_nsigma,
        sor_mode=args.sor_mode,
        pca_view=args.pca_view,
        axis_override=args.axis_override,
        dbscan_eps=args.dbscan_eps,
        dbscan_min_pts=args.dbscan_min_pts,
        hough_resolution=args.hough_resolution,
        hough_r_min=args.hough_r_min,
        hough_r_max=args.hough_r_max,
        hough_d_min=args.hough_d_min,
        hough_d_max=args.hough_d_max,
        hough_min_votes=args.hough_min_votes,
        hough_refine_iterations=args.hough_refine_iterations,
        plane_count=args.plane_count,
        plane_iterations=args.plane_iterations,
        plane_tau=args.plane_tau,
        expected_holes=args.expected_holes,
        hole_iterations=args.hole_iterations,
        hole_tau=args.hole_tau,
        shaft_radius_min=args.shaft_radius_min,
        h0=args.h0,
        d0=args.d0,
        nominal_gap=args.nominal_gap,
        eps_mode=args.eps_mode,
        period_deg=args.period_deg,
        theta_grid_deg=args.theta_grid_deg,
    )


def _spec_from_args(args) -> SceneSpec:
    items: dict = {}
    if args.spec is not None:
        with open(args.spec, "r", encoding="utf-8") as fh:
            items.update(parse_scene_items(fh.read()))
    if args.set:
        # overrides win over the file, so parse them as their own document
        items.update(parse_scene_items("\n".join(args.set)))
    if "seed" not in items and args.seed != _DEFAULTS.seed:
        items["seed"] = args.seed
    return SceneSpec(**items)


def _write_report(report: RunReport, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.dumps())
    return path


def _fail_stage(report: RunReport, exc: FitError, out_dir: str, name: str) -> int:
    stage = report.current_stage or "setup"
    report.add_stage("failure", {"stage": stage, "message": str(exc)})
    path = _write_report(report, out_dir, name)
    print(f"error in stage {stage}: {exc}", file=sys.stderr)
    print(f"partial report: {path}", file=sys.stderr)
    return 1


def _scene_paths(out_dir: str, scene: Scene) -> list[str]:
    names = []
    if len(scene.clouds) == 1:
        names.append(("scene_cloud.ply", scene.clouds[0][1]))
    else:
        for cid, lc in scene.clouds:
            names.append((f"scene_{cid}.ply", lc))
    written = []
    for fname, lc in names:
        path = os.path.join(out_dir, fname)
        write_cloud(lc.cloud, path)
        written.append(path)
    labels_path = os.path.join(out_dir, "scene_labels.txt")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for cid, lc in scene.clouds:
            for label in lc.labels:
                fh.write(f"{cid} {label}\n")
    written.append(labels_path)
    truth_path = os.path.join(out_dir, "scene_truth.json")
    with open(truth_path, "w", encoding="utf-8") as fh:
        fh.write(json_dumps(scene.truth))
    written.append(truth_path)
    return written


def cmd_synth(args) -> int:
    spec = _spec_from_args(args)
    scene = build_scene(spec)
    os.makedirs(args.output_dir, exist_ok=True)
    for path in _scene_paths(args.output_dir, scene):
        print(f"wrote {path}")
    return 0


def cmd_thread(args) -> int:
    cfg = _config_from_args(args)
    cloud = read_cloud(args.input, fmt=args.format)
    report = RunReport(command="thread", config=cfg.to_dict())
    try:
        result = run_thread(cfg, cloud, report)
    except FitError as exc:
        return _fail_stage(report, exc, cfg.output_dir, "thread_report.json")
    path = _write_report(result.report, cfg.output_dir, "thread_report.json")
    m = result.model
    print(f"radius {m.radius:.4f} mm  pitch {m.pitch:.4f} mm  phase {m.phase:.4f} rad")
    print(f"report: {path}")
    return 0


def cmd_match(args) -> int:
    cfg = _config_from_args(args)
    cloud_a = read_cloud(args.scan_a, fmt=args.format)
    cloud_b = read_cloud(args.scan_b, fmt=args.format)
    report = RunReport(command="match", config=cfg.to_dict())
    try:
        result = run_match(cfg, cloud_a, cloud_b, report)
    except FitError as exc:
        return _fail_stage(report, exc, cfg.output_dir, "match_report.json")
    path = _write_report(result.report, cfg.output_dir, "match_report.json")
    pose = result.pose
    print(
        f"theta {pose.theta_deg:.4f} deg  eps_pla {pose.eps_pla:.6f}  "
        f"eps_cyc {pose.eps_cyc:.6f}"
    )
    print(f"report: {path}")
    return 0


def _rotation_angle_deg(r: np.ndarray) -> float:
    c = (float(np.trace(r)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def _circular_delta_deg(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


def _verify_pair(cfg: PipelineConfig, spec: SceneSpec, truth: dict, pose: PoseSolution) -> dict:
    r_scene = np.array(truth["scene_rotation"], dtype=np.float64).reshape(3, 3)
    t_scene = np.array(truth["scene_translation"], dtype=np.float64)
    phi = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    ring = np.column_stack(
        (
            spec.bolt_circle_radius * np.cos(phi),
            spec.bolt_circle_radius * np.sin(phi),
            np.zeros_like(phi),
        )
    )
    scan_pts = ring @ r_scene.T + t_scene
    mapped = pose.xf.apply(scan_pts)
    n_true = np.array(truth["plane_b_normal"], dtype=np.float64)
    p_true = np.array(truth["plane_b_point"], dtype=np.float64)
    height = mapped @ n_true - (p_true @ n_true + cfg.nominal_gap)
    r_corr = np.array(truth["corrective_rotation"], dtype=np.float64).reshape(3, 3)
    return {
        "plane_distance_error_mm": float(np.abs(height).max()),
        "theta_error_deg": _circular_delta_deg(
            pose.theta_deg, float(truth["theta_star_deg"]), cfg.hole_period_deg()
        ),
        "rotation_error_deg": _rotation_angle_deg(pose.xf.rotation @ r_corr.T),
    }


def cmd_full(args) -> int:
    spec = _spec_from_args(args)
    scene = build_scene(spec)
    args.turbine_offset = tuple(spec.camera_offset)
    cfg = _config_from_args(args)
    report = RunReport(command="full", config=cfg.to_dict())
    report.add_stage("scene", {"spec": scene.truth["spec"]})
    try:
        if spec.kind == "pair":
            (_, la), (_, lb) = scene.clouds
            result = run_match(cfg, la.cloud, lb.cloud, report)
            verification = _verify_pair(cfg, spec, scene.truth, result.pose)
        else:
            (_, lc) = scene.clouds[0]
            result = run_thread(cfg, lc.cloud, report)
            verification = {
                "radius_error_mm": abs(result.model.radius - scene.truth["radius"]),
                "pitch_error_mm": abs(result.model.pitch - scene.truth["pitch"]),
            }
    except FitError as exc:
        return _fail_stage(report, exc, cfg.output_dir, "full_report.json")
    report.add_stage("verification", verification)
    path = _write_report(report, cfg.output_dir, "full_report.json")
    for key in sorted(verification):
        print(f"{key} {verification[key]:.6f}")
    print(f"report: {path}")
    return 0


def build_parser() -> DockposeParser:
    parser = DockposeParser(
        prog="dockpose",
        description="Point-cloud metrology for shaft-hole docking: thread "
        "helix measurement and two-scan pose recovery.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=DockposeParser)

    p_synth = sub.add_parser("synth", help="generate an oracle scene")
    _add_common(p_synth)
    p_synth.add_argument("--spec", default=None, metavar="FILE", help="scene spec file (key = value)")
    p_synth.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one scene key")
    p_synth.set_defaults(func=cmd_synth)

    p_thread = sub.add_parser("thread", help="measure a bolt thread helix")
    _add_common(p_thread)
    p_thread.add_argument("input", help="scan file (.ply or .xyz)")
    p_thread.add_argument("--keep-intermediate", action="store_true", help="persist per-stage clouds")
    _add_pipeline_flags(p_thread)
    p_thread.set_defaults(func=cmd_thread)

    p_match = sub.add_parser("match", help="recover the docking pose from two scans")
    _add_common(p_match)
    p_match.add_argument("scan_a", help="moving-side scan file")
    p_match.add_argument("scan_b", help="fixed-side scan file")
    _add_pipeline_flags(p_match)
    p_match.set_defaults(func=cmd_match)

    p_full = sub.add_parser("full", help="synthesize, measure, and verify in one run")
    _add_common(p_full)
    p_full.add_argument("--spec", default=None, metavar="FILE")
    p_full.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p_full.add_argument("--keep-intermediate", action="store_true")
    _add_pipeline_flags(p_full)
    p_full.set_defaults(func=cmd_full)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except CloudFormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = getattr(exc, "filename", None)
        detail = f"{exc.strerror}: {name}" if name else str(exc)
        print(f"i/o error: {detail}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
