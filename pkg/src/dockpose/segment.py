"""RANSAC extraction of the mating planes from assembly-position scans."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .errors import FitError

_RESAMPLE_ROUNDS = 3


class PartialSegmentationWarning(UserWarning):
    """Fewer models were extracted than requested."""


@dataclass(frozen=True)
class PlaneModel:
    """Plane through p0 with unit normal n; Ax + By + Cz + D = 0 view."""

    normal: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(n))
        if norm < 1e-12:
            raise ValueError("plane normal must be non-zero")
        n = n / norm
        p = np.asarray(self.p0, dtype=np.float64).reshape(3).copy()
        n.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "p0", p)

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        """(A, B, C, D) with A,B,C the unit normal and D = -n . p0."""
        a, b, c = (float(v) for v in self.normal)
        return a, b, c, -float(self.normal @ self.p0)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.p0) @ self.normal

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(self.signed_distance(points))

    def flipped(self) -> "PlaneModel":
        return PlaneModel(normal=-self.normal, p0=self.p0)

    def oriented_toward(self, target) -> "PlaneModel":
        """Same plane with the normal pointing at a reference point."""
        t = np.asarray(target, dtype=np.float64).reshape(3)
        if float((t - self.p0) @ self.normal) < 0:
            return self.flipped()
        return self


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 1000
    tau: float = 0.05
    models: int = 1
    per_model_iterations: tuple[int, ...] | None = None

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValueError("iterations must be >= 1")
        if not (float(self.tau) > 0):
            raise ValueError("tau must be > 0")
        if int(self.models) < 1:
            raise ValueError("models must be >= 1")
        object.__setattr__(self, "iterations", int(self.iterations))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "models", int(self.models))
        if self.per_model_iterations is not None:
            sched = tuple(int(k) for k in self.per_model_iterations)
            if len(sched) != self.models:
                raise ValueError(
                    f"per-model iteration list has {len(sched)} entries "
                    f"for {self.models} models"
                )
            if any(k < 1 for k in sched):
                raise ValueError("per-model iterations must all be >= 1")
            object.__setattr__(self, "per_model_iterations", sched)

    @property
    def schedule(self) -> tuple[int, ...]:
        if self.per_model_iterations is not None:
            return self.per_model_iterations
        return (self.iterations,) * self.models


def _rng(seed) -> np.random.Generator:
    # counter-based generator: same stream on every platform
    return np.random.Generator(np.random.Philox(seed))


def _sample_planes(pts: np.ndarray, k: int, rng: np.random.Generator):
    """Normals/offsets for k random 3-point plane hypotheses.

    Degenerate draws (repeated or collinear points) are redrawn a bounded
    number of times, then dropped by marking them invalid.
    """
    n = pts.shape[0]
    idx = rng.integers(0, n, size=(k, 3))
    normals = np.zeros((k, 3))
    offsets = np.zeros(k)
    valid = np.zeros(k, dtype=bool)
    pending = np.arange(k)
    for _ in range(_RESAMPLE_ROUNDS + 1):
        if pending.size == 0:
            break
        tri = pts[idx[pending]]  # (m, 3, 3)
        cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norms = np.linalg.norm(cr, axis=1)
        ok = norms > 1e-12
        good = pending[ok]
        normals[good] = cr[ok] / norms[ok, None]
        offsets[good] = np.einsum("ij,ij->i", normals[good], tri[ok, 0])
        valid[good] = True
        pending = pending[~ok]
        idx[pending] = rng.integers(0, n, size=(pending.size, 3))
    return normals, offsets, valid


def _refit_plane(pts: np.ndarray) -> PlaneModel | None:
    """Least-squares plane: smallest-scatter direction of the inlier set."""
    if pts.shape[0] < 3:
        return None
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    w, v = np.linalg.eigh(cov)
    normal = v[:, 0]
    if w[1] < 1e-15 * max(float(w[2]), 1.0):
        return None  # inliers collinear: plane direction undefined
    j = int(np.argmax(np.abs(normal)))
    if normal[j] < 0:
        normal = -normal
    return PlaneModel(normal=normal, p0=centroid)


def ransac_plane(
    cloud: PointCloud, cfg: RansacConfig, rng_seed
) -> tuple[PlaneModel, np.ndarray]:
    """Best-consensus plane and its inlier indices.

    A point is an inlier when its absolute plane distance is strictly below
    tau. The winning sample model is refit to its inliers by least squares
    and the inlier set is recomputed against the refit plane, so reported
    inliers always satisfy the bound for the reported model.
    """
    pts = cloud.points
    if pts.shape[0] < 3:
        raise FitError(f"plane RANSAC needs at least 3 points, got {pts.shape[0]}")
    rng = _rng(rng_seed)
    normals, offsets, valid = _sample_planes(pts, cfg.iterations, rng)
    if not valid.any():
        raise FitError("every sampled point triple was collinear")
    counts = _kernels.plane_inlier_counts(pts, normals, offsets, cfg.tau)
    counts[~valid] = -1
    best = int(np.argmax(counts))  # ties: lowest iteration index
    if counts[best] < 3:
        raise FitError(
            f"best plane consensus is {max(int(counts[best]), 0)} points; need >= 3"
        )
    dist0 = np.abs(pts @ normals[best] - offsets[best])
    inliers0 = dist0 < cfg.tau
    refit = _refit_plane(pts[inliers0])
    if refit is None:
        model = PlaneModel(normal=normals[best], p0=pts[inliers0][0])
        return model, np.flatnonzero(inliers0)
    inliers1 = refit.distance(pts) < cfg.tau
    if int(inliers1.sum()) < 3:
        model = PlaneModel(normal=normals[best], p0=pts[inliers0][0])
        return model, np.flatnonzero(inliers0)
    return refit, np.flatnonzero(inliers1)


def segment_planes(
    cloud: PointCloud, cfg: RansacConfig, rng_seed
) -> list[tuple[PlaneModel, np.ndarray]]:
    """Iteratively extract cfg.models planes, removing inliers between rounds.

    Returned inlier index arrays refer to the input cloud and are pairwise
    disjoint. When the residual cloud becomes too small the partial result is
    returned with a warning instead of failing.
    """
    seeds = np.random.SeedSequence(rng_seed).spawn(cfg.models)
    remaining = np.arange(len(cloud))
    out: list[tuple[PlaneModel, np.ndarray]] = []
    for round_i, iters in enumerate(cfg.schedule):
        if remaining.size < 3:
            warnings.warn(
                f"only {len(out)} of {cfg.models} planes extracted: "
                f"{remaining.size} points left",
                PartialSegmentationWarning,
                stacklevel=2,
            )
            break
        sub = cloud.select(remaining)
        stage_cfg = RansacConfig(iterations=iters, tau=cfg.tau, models=1)
        try:
            model, sub_inliers = ransac_plane(sub, stage_cfg, seeds[round_i])
        except FitError:
            warnings.warn(
                f"plane {round_i} fit failed; returning {len(out)} of "
                f"{cfg.models} planes",
                PartialSegmentationWarning,
                stacklevel=2,
            )
            break
        orig = remaining[sub_inliers]
        out.append((model, orig))
        keep = np.ones(remaining.size, dtype=bool)
        keep[sub_inliers] = False
        remaining = remaining[keep]
    return out
