"""Point-cloud metrology for shaft-hole docking.

Measures bolt thread helices from single scans and recovers the docking
pose (face alignment plus shaft rotation) from scan pairs. A synthetic
scene generator with exact ground truth serves as the verification oracle.
"""

from .cloud import (
    PointCloud,
    RigidTransform,
    apply_transform,
    transform_to_turbine_frame,
)
from .cluster import DbscanParams, dbscan, default_eps, extract_thread_cluster, pick_seed
from .config import PipelineConfig
from .errors import CloudFormatError, ConfigError, DockposeError, FitError
from .helix import HelixModel, HoughAccumulator, hough_fit
from .holes import HoleAxis, HoleSet, crop_hole_region, fit_hole_axis, presearch_holes
from .io import read_cloud, write_cloud
from .matching import (
    FaceMatchInput,
    FaceMatchResult,
    HoleMatchInput,
    HoleMatchResult,
    PoseSolution,
    assemble_pose,
    eps_pla,
    hole_deviation,
    optimize_face_pose,
    optimize_hole_rotation,
    repaired_by_nearest,
    rotate_about_axis,
)
from .pca import PcaBasis, Projection2D, basis_from_axis, fit_circle_2d, pca_basis, project
from .pipeline import MatchResult, ThreadResult, run_match, run_thread
from .report import REPORT_SCHEMA, REPORT_VERSION, RunReport
from .segment import PlaneModel, RansacConfig, ransac_plane, segment_planes
from .sor import SorParams, SorStats, sor_filter
from .synth import (
    LabeledCloud,
    Scene,
    SceneSpec,
    build_scene,
    gen_bolt_scene,
    gen_flange_pair,
    gen_helix,
    inject_outliers,
    parse_scene_spec,
)

__version__ = "0.1.0"

__all__ = [
    "CloudFormatError",
    "ConfigError",
    "DbscanParams",
    "DockposeError",
    "FaceMatchInput",
    "FaceMatchResult",
    "FitError",
    "HelixModel",
    "HoleAxis",
    "HoleMatchInput",
    "HoleMatchResult",
    "HoleSet",
    "HoughAccumulator",
    "LabeledCloud",
    "MatchResult",
    "PcaBasis",
    "PipelineConfig",
    "PlaneModel",
    "PointCloud",
    "PoseSolution",
    "Projection2D",
    "RansacConfig",
    "REPORT_SCHEMA",
    "REPORT_VERSION",
    "RigidTransform",
    "RunReport",
    "Scene",
    "SceneSpec",
    "SorParams",
    "SorStats",
    "ThreadResult",
    "apply_transform",
    "assemble_pose",
    "basis_from_axis",
    "build_scene",
    "crop_hole_region",
    "dbscan",
    "default_eps",
    "eps_pla",
    "extract_thread_cluster",
    "fit_circle_2d",
    "fit_hole_axis",
    "gen_bolt_scene",
    "gen_flange_pair",
    "gen_helix",
    "hole_deviation",
    "hough_fit",
    "inject_outliers",
    "optimize_face_pose",
    "optimize_hole_rotation",
    "repaired_by_nearest",
    "parse_scene_spec",
    "pca_basis",
    "pick_seed",
    "presearch_holes",
    "project",
    "ransac_plane",
    "read_cloud",
    "rotate_about_axis",
    "run_match",
    "run_thread",
    "segment_planes",
    "sor_filter",
    "transform_to_turbine_frame",
    "write_cloud",
]
