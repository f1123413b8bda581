"""End-to-end pipelines: thread extraction and two-scan pose matching.

Each stage is timed into the run report, so a failure can be pinned to the
stage that raised. Randomized stages draw from seeds derived deterministically
from the config seed; per-hole seeds are keyed by azimuth rank so the same
physical hole gets the same seed in both scans.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, transform_to_turbine_frame
from .cluster import dbscan, default_eps, extract_thread_cluster, pick_seed
from .config import PipelineConfig
from .errors import FitError
from .helix import HelixModel, hough_fit
from .holes import HoleAxis, HoleSet, crop_hole_region, fit_hole_axis, presearch_holes
from .io import write_cloud
from .matching import (
    FaceMatchInput,
    FaceMatchResult,
    HoleMatchInput,
    PoseSolution,
    assemble_pose,
    optimize_face_pose,
    optimize_hole_rotation,
    repaired_by_nearest,
)
from .pca import basis_from_axis, pca_basis, project
from .report import (
    RunReport,
    helix_to_dict,
    hole_to_dict,
    plane_to_dict,
    pose_to_dict,
)
from .segment import PlaneModel, segment_planes
from .sor import sor_filter

# rng-stream keys: planes use cfg.seed, the shaft cylinder cfg.seed + 1,
# and hole k on either scan cfg.seed + _HOLE_SEED_BASE + k
_HOLE_SEED_BASE = 100
_SHAFT_SEED_OFFSET = 1

INTERMEDIATE_NAMES = (
    "01_turbine.ply",
    "02_denoised.ply",
    "03_projection.xyz",
    "04_cluster.xyz",
    "05_thread3d.ply",
)


@dataclass(frozen=True)
class ThreadResult:
    model: HelixModel
    report: RunReport
    intermediates: tuple[str, ...] = ()


@dataclass(frozen=True)
class MatchResult:
    pose: PoseSolution
    face: FaceMatchResult
    plane_a: PlaneModel
    plane_b: PlaneModel
    holes_a: HoleSet
    holes_b: HoleSet
    shaft: HoleAxis
    report: RunReport


def _as_2d_cloud(coords: np.ndarray, frame_label: str) -> PointCloud:
    flat = np.column_stack((coords, np.zeros(coords.shape[0])))
    return PointCloud(flat, frame_label)


def run_thread(
    cfg: PipelineConfig, cloud: PointCloud, report: RunReport | None = None
) -> ThreadResult:
    """Measure the thread helix of a single bolt scan.

    Camera-to-part transform, outlier removal, principal-axis projection,
    density clustering around the densest 2D point, then a voting fit of
    (radius, pitch) refined by least squares.
    """
    if report is None:
        report = RunReport(command="thread", config=cfg.to_dict())
    saved: list[str] = []

    def keep(stage_index: int, c: PointCloud) -> None:
        if not cfg.keep_intermediate:
            return
        os.makedirs(cfg.output_dir, exist_ok=True)
        path = os.path.join(cfg.output_dir, INTERMEDIATE_NAMES[stage_index])
        write_cloud(c, path)
        saved.append(path)

    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        try:
            with report.timer("transform"):
                turbine = transform_to_turbine_frame(cloud, cfg.turbine_offset)
                keep(0, turbine)
                report.add_stage(
                    "transform",
                    {"points": len(turbine), "offset": list(cfg.turbine_offset)},
                )

            with report.timer("denoise"):
                denoised, stats = sor_filter(turbine, cfg.sor_params())
                keep(1, denoised)
                report.add_stage(
                    "denoise",
                    {
                        "kept": len(denoised),
                        "removed": stats.removed_count,
                        "mu": stats.mu,
                        "sigma": stats.sigma,
                    },
                )

            with report.timer("axis"):
                if cfg.axis_override is not None:
                    basis = basis_from_axis(denoised, cfg.axis_override)
                    source = "override"
                else:
                    basis = pca_basis(denoised)
                    source = "pca"
                report.add_stage(
                    "axis",
                    {
                        "source": source,
                        "axis": basis.axes[2],
                        "eigenvalues": basis.eigenvalues,
                    },
                )

            with report.timer("project"):
                view = project(denoised, basis, plane=cfg.pca_view)
                keep(2, _as_2d_cloud(view.points, denoised.frame_label))
                report.add_stage(
                    "project", {"plane": cfg.pca_view, "points": len(view)}
                )

            with report.timer("cluster"):
                eps = cfg.dbscan_eps if cfg.dbscan_eps is not None else default_eps(view)
                seed_idx = pick_seed(view)
                labeling = dbscan(view, cfg.dbscan_params(eps), seed_index=seed_idx)
                thread_cloud = extract_thread_cluster(denoised, labeling, seed_idx)
                in_cluster = labeling.labels == labeling.labels[seed_idx]
                keep(3, _as_2d_cloud(view.points[in_cluster], denoised.frame_label))
                keep(4, thread_cloud)
                report.add_stage(
                    "cluster",
                    {
                        "eps": eps,
                        "seed_index": seed_idx,
                        "n_clusters": labeling.n_clusters,
                        "thread_points": len(thread_cloud),
                    },
                )

            with report.timer("curve"):
                model = hough_fit(thread_cloud, basis, cfg.hough_accumulator())
                report.add_stage("curve", helix_to_dict(model))
        finally:
            report.add_warnings(str(w.message) for w in wlist)

    return ThreadResult(model=model, report=report, intermediates=tuple(saved))


def _split_face(
    planes: list[tuple[PlaneModel, np.ndarray]], n_a: int, side: str
) -> tuple[int, PlaneModel, np.ndarray]:
    """Pick the plane holding the most points of one scan; return its index,
    model, and that scan's inlier indices (local to the scan)."""
    if side == "a":
        counts = [int(np.count_nonzero(idx < n_a)) for _, idx in planes]
    else:
        counts = [int(np.count_nonzero(idx >= n_a)) for _, idx in planes]
    best = int(np.argmax(counts))
    model, idx = planes[best]
    if side == "a":
        local = idx[idx < n_a]
    else:
        local = idx[idx >= n_a] - n_a
    if local.size < 3:
        raise FitError(
            f"scan {side.upper()} contributed only {local.size} points to its "
            "mating plane; need at least 3"
        )
    return best, model, local


def _fit_hole_sets(
    cfg: PipelineConfig,
    denoised: PointCloud,
    face: PointCloud,
    plane: PlaneModel,
) -> HoleSet:
    """Locate and fit every expected bore on one face.

    Seeds are keyed by azimuth rank, not by scan, so two scans of the same
    part run identical RANSAC draws per hole.
    """
    candidates = presearch_holes(face, plane, cfg.expected_holes)
    axes = []
    for rank, cand in enumerate(candidates):
        region = crop_hole_region(denoised, plane, cand)
        axes.append(
            fit_hole_axis(
                region,
                plane,
                cfg.hole_ransac(),
                rng_seed=cfg.seed + _HOLE_SEED_BASE + rank,
            )
        )
    return HoleSet(holes=tuple(axes), source_plane=plane)


def run_match(
    cfg: PipelineConfig,
    cloud_a: PointCloud,
    cloud_b: PointCloud,
    report: RunReport | None = None,
) -> MatchResult:
    """Recover the docking pose between two flange scans.

    Plane segmentation runs once over the pooled clouds so the two-round
    iteration schedule maps onto the two mating faces. The face stage
    minimizes the planar deviation index; the hole stage then spins scan A's
    bore axes about the shaft axis to minimize the cyclic deviation index.
    """
    if report is None:
        report = RunReport(command="match", config=cfg.to_dict())

    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        try:
            with report.timer("transform"):
                ta = transform_to_turbine_frame(cloud_a, cfg.turbine_offset)
                tb = transform_to_turbine_frame(cloud_b, cfg.turbine_offset)
                report.add_stage(
                    "transform",
                    {
                        "points_a": len(ta),
                        "points_b": len(tb),
                        "offset": list(cfg.turbine_offset),
                    },
                )

            with report.timer("denoise"):
                da, stats_a = sor_filter(ta, cfg.sor_params())
                db, stats_b = sor_filter(tb, cfg.sor_params())
                report.add_stage(
                    "denoise",
                    {
                        "a": {"kept": len(da), "removed": stats_a.removed_count},
                        "b": {"kept": len(db), "removed": stats_b.removed_count},
                    },
                )

            with report.timer("planes"):
                combined = PointCloud(
                    np.vstack((da.points, db.points)), da.frame_label
                )
                n_a = len(da)
                planes = segment_planes(combined, cfg.plane_ransac(), rng_seed=cfg.seed)
                if not planes:
                    raise FitError("plane segmentation found no planes")
                ia, plane_a, face_a_idx = _split_face(planes, n_a, "a")
                ib, plane_b, face_b_idx = _split_face(planes, n_a, "b")
                face_a = da.select(face_a_idx)
                face_b = db.select(face_b_idx)
                report.add_stage(
                    "planes",
                    {
                        "models": [
                            plane_to_dict(m, int(idx.size)) for m, idx in planes
                        ],
                        "face_a_model": ia,
                        "face_b_model": ib,
                        "face_a_points": int(face_a_idx.size),
                        "face_b_points": int(face_b_idx.size),
                    },
                )

            with report.timer("face_match"):
                fin = FaceMatchInput.from_faces(
                    face_a, face_b, plane_a, plane_b, h0=cfg.h0
                )
                face_res = optimize_face_pose(
                    fin, nominal_gap=cfg.nominal_gap, mode=cfg.eps_mode
                )
                report.add_stage(
                    "face_match",
                    {
                        "eps_pla": face_res.eps_pla,
                        "h_max": face_res.h_max,
                        "h_mean": face_res.h_mean,
                        "h0": face_res.h0,
                        "converged": face_res.converged,
                        "n_evals": face_res.n_evals,
                    },
                )

            with report.timer("holes"):
                holes_a = _fit_hole_sets(cfg, da, face_a, plane_a)
                holes_b = _fit_hole_sets(cfg, db, face_b, plane_b)
                report.add_stage(
                    "holes",
                    {
                        "a": [hole_to_dict(h) for h in holes_a.holes],
                        "b": [hole_to_dict(h) for h in holes_b.holes],
                    },
                )

            with report.timer("shaft_axis"):
                rest_idx = np.setdiff1d(np.arange(len(da)), face_a_idx)
                if rest_idx.size < 3:
                    raise FitError(
                        "scan A has no off-face points left for the shaft fit"
                    )
                shaft = fit_hole_axis(
                    da.select(rest_idx),
                    plane_a,
                    cfg.hole_ransac(),
                    rng_seed=cfg.seed + _SHAFT_SEED_OFFSET,
                    radius_bounds=(cfg.shaft_radius_min, 1e9),
                )
                report.add_stage("shaft_axis", hole_to_dict(shaft))

            with report.timer("hole_match"):
                n_ref = fin.n_b

                def into_b(axis: HoleAxis) -> HoleAxis:
                    d = face_res.xf.rotation @ axis.direction
                    if float(d @ n_ref) < 0.0:
                        d = -d
                    return HoleAxis(
                        point=face_res.xf.apply(axis.point),
                        direction=d,
                        radius=axis.radius,
                        inlier_count=axis.inlier_count,
                    )

                studs = [into_b(h) for h in holes_a.holes]
                shaft_m = into_b(shaft)
                bores = [
                    h
                    if float(h.direction @ n_ref) >= 0.0
                    else HoleAxis(h.point, -h.direction, h.radius, h.inlier_count)
                    for h in holes_b.holes
                ]
                hmi = HoleMatchInput.paired_by_azimuth(
                    studs,
                    bores,
                    axis=shaft_m.direction,
                    center=shaft_m.point,
                    d0=cfg.d0,
                    period_deg=cfg.hole_period_deg(),
                )
                hole_res = optimize_hole_rotation(
                    hmi, grid_step_deg=cfg.theta_grid_deg
                )
                # near a period boundary the rank pairing can be a slot off;
                # the solved angle disambiguates, so re-pair and solve again
                repaired = repaired_by_nearest(hmi, hole_res.theta_deg)
                if repaired is not hmi:
                    hole_res = optimize_hole_rotation(
                        repaired, grid_step_deg=cfg.theta_grid_deg
                    )
                pose = assemble_pose(face_res, hole_res)
                report.add_stage("pose", pose_to_dict(pose))
        finally:
            report.add_warnings(str(w.message) for w in wlist)

    report.add_warnings(pose.warnings)
    return MatchResult(
        pose=pose,
        face=face_res,
        plane_a=plane_a,
        plane_b=plane_b,
        holes_a=holes_a,
        holes_b=holes_b,
        shaft=shaft,
        report=report,
    )
