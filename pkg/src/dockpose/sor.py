"""Statistical outlier removal over k-nearest-neighbor distances.

The mean and standard deviation are estimated once over all m*k neighbor
distances of the input cloud (never iteratively), and a point is dropped
when its own k-neighbor distance statistic leaves the two-sided
mu +/- n_sigma * sigma band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import FitError


@dataclass(frozen=True)
class SorParams:
    """k: neighbors per point; n_sigma: confidence band half-width.

    mode picks the per-point statistic compared against the band: "mean"
    scales the point's summed neighbor distance by 1/k so it is commensurate
    with the band (default); "sum" compares the raw sum, which only makes
    sense if the band is rescaled by the caller.
    """

    k: int = 20
    n_sigma: float = 3.0
    mode: str = "mean"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_sigma <= 0:
            raise ValueError("n_sigma must be > 0")
        if self.mode not in ("mean", "sum"):
            raise ValueError("mode must be 'mean' or 'sum'")


@dataclass(frozen=True)
class SorStats:
    mu: float
    sigma: float
    removed_count: int


def sor_filter(cloud: PointCloud, params: SorParams) -> tuple[PointCloud, SorStats]:
    """Drop points whose neighbor-distance statistic leaves the band.

    Returns the retained subset (coordinates untouched, order preserved) and
    the population statistics computed on the input cloud.
    """
    n = len(cloud)
    if n <= params.k:
        raise FitError(f"SOR needs more than k={params.k} points, cloud has {n}")
    pts = cloud.points
    tree = cKDTree(pts)
    dists, _ = tree.query(pts, k=params.k + 1, workers=-1)
    neigh = dists[:, 1:]  # drop self-distance
    mu = float(neigh.mean())
    sigma = float(neigh.std())
    lo = mu - params.n_sigma * sigma
    hi = mu + params.n_sigma * sigma
    if params.mode == "mean":
        stat = neigh.mean(axis=1)
    else:
        # sum statistic needs the band scaled by k to stay commensurate
        stat = neigh.sum(axis=1)
        lo, hi = lo * params.k, hi * params.k
    keep = (stat >= lo) & (stat <= hi)
    removed = int(n - keep.sum())
    return cloud.select(keep), SorStats(mu=mu, sigma=sigma, removed_count=removed)
