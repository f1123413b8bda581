"""Pipeline configuration: one validated record holding every stage's knobs.

Defaults are the pipeline's published operating point; tests pin them, so
changing a default here is a behavior change, not a refactor.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .cluster import DbscanParams
from .errors import ConfigError
from .helix import HoughAccumulator
from .matching import EPS_MODES
from .pca import PLANE_PAIRS
from .segment import RansacConfig
from .sor import SorParams

SOR_MODES = ("mean", "sum")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    output_dir: str = "."
    keep_intermediate: bool = False
    # camera to turbine frame
    turbine_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # denoising
    sor_k: int = 20
    sor_n_sigma: float = 3.0
    sor_mode: str = "mean"
    # axis estimate and 2D view
    pca_view: str = "12"
    axis_override: tuple[float, float, float] | None = None
    # thread clustering
    dbscan_eps: float | None = None
    dbscan_min_pts: int = 4
    # thread curve voting
    hough_resolution: float = 0.01
    hough_r_min: float = 1.0
    hough_r_max: float = 50.0
    hough_d_min: float = 0.25
    hough_d_max: float = 5.0
    hough_min_votes: int = 10
    hough_refine_iterations: int = 5
    # face plane extraction
    plane_count: int = 2
    plane_iterations: tuple[int, ...] = (1000, 1500)
    plane_tau: float = 0.05
    # mounting holes
    expected_holes: int = 6
    hole_iterations: int = 1000
    hole_tau: float = 0.05
    shaft_radius_min: float = 10.0
    # docking indices
    h0: float = 1.0
    d0: float = 0.5
    nominal_gap: float = 1.0
    eps_mode: str = "symmetric"
    period_deg: float | None = None
    theta_grid_deg: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "turbine_offset", tuple(self.turbine_offset))
        object.__setattr__(self, "plane_iterations", tuple(self.plane_iterations))
        if self.axis_override is not None:
            object.__setattr__(self, "axis_override", tuple(self.axis_override))
        self.validate()

    def validate(self) -> None:
        if len(self.turbine_offset) != 3:
            raise ConfigError("turbine_offset needs exactly three components")
        if self.sor_k < 1:
            raise ConfigError("sor_k must be at least 1")
        if self.sor_n_sigma <= 0:
            raise ConfigError("sor_n_sigma must be positive")
        if self.sor_mode not in SOR_MODES:
            raise ConfigError(f"sor_mode must be one of {'|'.join(SOR_MODES)}")
        if self.pca_view not in PLANE_PAIRS:
            raise ConfigError(
                f"pca_view must be one of {'|'.join(sorted(PLANE_PAIRS))}"
            )
        if self.axis_override is not None and len(self.axis_override) != 3:
            raise ConfigError("axis_override needs exactly three components")
        if self.dbscan_eps is not None and self.dbscan_eps <= 0:
            raise ConfigError("dbscan_eps must be positive when given")
        if self.dbscan_min_pts < 1:
            raise ConfigError("dbscan_min_pts must be at least 1")
        if self.hough_resolution <= 0:
            raise ConfigError("hough_resolution must be positive")
        if not 0 < self.hough_r_min < self.hough_r_max:
            raise ConfigError("need 0 < hough_r_min < hough_r_max")
        if not 0 < self.hough_d_min < self.hough_d_max:
            raise ConfigError("need 0 < hough_d_min < hough_d_max")
        if self.hough_min_votes < 1:
            raise ConfigError("hough_min_votes must be at least 1")
        if self.hough_refine_iterations < 0:
            raise ConfigError("hough_refine_iterations must not be negative")
        if self.plane_count < 1:
            raise ConfigError("plane_count must be at least 1")
        if len(self.plane_iterations) not in (1, self.plane_count):
            raise ConfigError(
                "plane_iterations needs one entry, or one per requested plane"
            )
        if any(int(k) < 1 for k in self.plane_iterations):
            raise ConfigError("plane_iterations entries must be at least 1")
        if self.plane_tau <= 0:
            raise ConfigError("plane_tau must be positive")
        if self.expected_holes < 1:
            raise ConfigError("expected_holes must be at least 1")
        if self.hole_iterations < 1:
            raise ConfigError("hole_iterations must be at least 1")
        if self.hole_tau <= 0:
            raise ConfigError("hole_tau must be positive")
        if self.shaft_radius_min <= 0:
            raise ConfigError("shaft_radius_min must be positive")
        if self.h0 <= 0:
            raise ConfigError("h0 must be positive")
        if self.d0 <= 0:
            raise ConfigError("d0 must be positive")
        if self.nominal_gap < 0:
            raise ConfigError("nominal_gap must not be negative")
        if self.eps_mode not in EPS_MODES:
            raise ConfigError(f"eps_mode must be one of {'|'.join(EPS_MODES)}")
        if self.period_deg is not None and not 0 < self.period_deg <= 360:
            raise ConfigError("period_deg must lie in (0, 360] when given")
        if self.theta_grid_deg <= 0:
            raise ConfigError("theta_grid_deg must be positive")

    # stage parameter blocks, derived on demand

    def sor_params(self) -> SorParams:
        return SorParams(k=self.sor_k, n_sigma=self.sor_n_sigma, mode=self.sor_mode)

    def dbscan_params(self, eps: float) -> DbscanParams:
        return DbscanParams(eps=eps, min_pts=self.dbscan_min_pts)

    def hough_accumulator(self) -> HoughAccumulator:
        return HoughAccumulator(
            r_min=self.hough_r_min,
            r_max=self.hough_r_max,
            d_min=self.hough_d_min,
            d_max=self.hough_d_max,
            resolution=self.hough_resolution,
            min_votes=self.hough_min_votes,
            refine_iterations=self.hough_refine_iterations,
        )

    def plane_ransac(self) -> RansacConfig:
        per_model = (
            self.plane_iterations
            if len(self.plane_iterations) == self.plane_count
            else None
        )
        return RansacConfig(
            iterations=int(self.plane_iterations[0]),
            tau=self.plane_tau,
            models=self.plane_count,
            per_model_iterations=per_model,
        )

    def hole_ransac(self) -> RansacConfig:
        return RansacConfig(iterations=self.hole_iterations, tau=self.hole_tau)

    def hole_period_deg(self) -> float:
        if self.period_deg is not None:
            return float(self.period_deg)
        return 360.0 / self.expected_holes

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["turbine_offset"] = list(self.turbine_offset)
        d["plane_iterations"] = list(self.plane_iterations)
        if self.axis_override is not None:
            d["axis_override"] = list(self.axis_override)
        return d
