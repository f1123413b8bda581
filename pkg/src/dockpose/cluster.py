"""Seed-anchored DBSCAN over a 2D projection to isolate the thread ring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .cloud import PointCloud
from .errors import FitError
from .pca import Projection2D


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 4

    def __post_init__(self):
        if not (float(self.eps) > 0):
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if int(self.min_pts) < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "min_pts", int(self.min_pts))


@dataclass(frozen=True)
class ClusterLabeling:
    """Per-point labels (-1 = noise) plus the label of the seed's cluster."""

    labels: np.ndarray
    seed_cluster_id: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "seed_cluster_id", int(self.seed_cluster_id))

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max(initial=-1) + 1)


def pick_seed(points: Projection2D) -> int:
    """Index of the point with maximum 2D norm; ties go to the lowest index.

    The thread ring is the outermost structure in the projection, so the
    farthest point from the centroid is guaranteed to sit on it.
    """
    if len(points) == 0:
        raise FitError("cannot pick a seed from an empty projection")
    norms = np.einsum("ij,ij->i", points.points, points.points)
    return int(np.argmax(norms))  # argmax returns the first maximum


def default_eps(points: Projection2D) -> float:
    """Scale-adaptive eps: 2x the median 4th-nearest-neighbor distance."""
    n = len(points)
    if n < 5:
        raise FitError(f"eps heuristic needs at least 5 points, got {n}")
    tree = cKDTree(points.points)
    dists, _ = tree.query(points.points, k=5, workers=-1)
    eps = 2.0 * float(np.median(dists[:, 4]))
    if eps <= 0:
        raise FitError("eps heuristic degenerated to 0 (duplicate points?)")
    return eps


def _neighbor_csr(pts: np.ndarray, eps: float):
    """CSR adjacency over eps-balls, self included, neighbors ascending."""
    tree = cKDTree(pts)
    neighbors = tree.query_ball_point(pts, eps, workers=-1)
    counts = np.fromiter((len(lst) for lst in neighbors), dtype=np.int64, count=len(neighbors))
    indptr = np.zeros(len(neighbors) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(int(indptr[-1]), dtype=np.int64)
    for i, lst in enumerate(neighbors):
        row = np.sort(np.asarray(lst, dtype=np.int64))
        indices[indptr[i] : indptr[i + 1]] = row
    return indptr, indices


def dbscan(
    points: Projection2D, params: DbscanParams, seed_index: int | None = None
) -> ClusterLabeling:
    """Density clustering with deterministic FIFO expansion.

    Core points have >= min_pts neighbors within eps, counting themselves.
    Clusters are numbered by the ascending index of their first core point,
    so the labeling is reproducible for a fixed point order.
    """
    pts = points.points
    n = pts.shape[0]
    if n == 0:
        return ClusterLabeling(labels=np.empty(0, dtype=np.int64), seed_cluster_id=-1)
    indptr, indices = _neighbor_csr(pts, params.eps)
    core = (indptr[1:] - indptr[:-1]) >= params.min_pts
    labels = _kernels.dbscan_expand(indptr, indices, core)
    if seed_index is None:
        seed_index = pick_seed(points)
    if not (0 <= seed_index < n):
        raise FitError(f"seed index {seed_index} out of range for {n} points")
    return ClusterLabeling(labels=labels, seed_cluster_id=int(labels[seed_index]))


def extract_thread_cluster(
    cloud: PointCloud, labeling: ClusterLabeling, seed: int
) -> PointCloud:
    """3D points whose projected counterparts share the seed's cluster."""
    labels = labeling.labels
    if labels.shape[0] != len(cloud):
        raise FitError(
            f"labeling covers {labels.shape[0]} points but cloud has {len(cloud)}"
        )
    if not (0 <= seed < len(cloud)):
        raise FitError(f"seed index {seed} out of range for {len(cloud)} points")
    seed_label = int(labels[seed])
    if seed_label == -1:
        raise FitError(
            "seed point was labeled noise; increase eps or lower min_pts"
        )
    return cloud.select(np.flatnonzero(labels == seed_label))
