"""Principal-axis estimation and 2D projections onto principal planes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import FitError

PLANE_PAIRS = {"23": (1, 2), "13": (0, 2), "12": (0, 1)}


class DegenerateBasisWarning(UserWarning):
    """Two or more eigenvalues are numerically equal; axis identity is weak."""


@dataclass(frozen=True)
class PcaBasis:
    """Orthonormal principal frame of a cloud.

    axes holds u1, u2, u3 as rows, ordered by descending eigenvalue;
    eigenvalues are the per-axis variances (mm^2) of the mean-centered cloud.
    """

    mean: np.ndarray
    axes: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)
        ev = np.asarray(self.eigenvalues, dtype=np.float64).reshape(3)
        if np.abs(axes @ axes.T - np.eye(3)).max() > 1e-9:
            raise ValueError("axes must be orthonormal")
        if not (ev[0] >= ev[1] >= ev[2] >= -1e-12):
            raise ValueError("eigenvalues must be non-negative and descending")
        for arr in (mean, axes, ev):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "eigenvalues", np.maximum(ev, 0.0))

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.mean) @ self.axes.T

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return np.asarray(local, dtype=np.float64) @ self.axes + self.mean


@dataclass(frozen=True)
class Projection2D:
    """2D coordinates of a cloud in one principal plane."""

    points: np.ndarray  # (n, 2)
    basis_pair: str  # "23" | "13" | "12"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected (n, 2) points, got {pts.shape}")
        if self.basis_pair not in PLANE_PAIRS:
            raise ValueError(f"basis_pair must be one of {sorted(PLANE_PAIRS)}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def _fix_signs(axes: np.ndarray) -> np.ndarray:
    """Flip each axis so its largest-magnitude component is positive."""
    out = axes.copy()
    for i in range(3):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def pca_basis(cloud: PointCloud) -> PcaBasis:
    """Principal frame of the mean-centered scatter of the cloud.

    Eigenvalues descend; the sign of each axis follows the
    largest-component-positive convention so results are deterministic.
    """
    pts = cloud.points
    m = pts.shape[0]
    if m < 2:
        raise FitError("PCA needs at least 2 points")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / m
    if float(np.trace(cov)) < 1e-18:
        raise FitError("degenerate cloud: all points identical")
    w, v = np.linalg.eigh(cov)  # ascending by contract
    eigenvalues = np.maximum(w[::-1], 0.0)
    axes = _fix_signs(v[:, ::-1].T)
    span = max(float(eigenvalues[0]), 1e-300)
    if (eigenvalues[0] - eigenvalues[1]) <= 1e-6 * span or (
        eigenvalues[1] - eigenvalues[2]
    ) <= 1e-6 * span:
        warnings.warn(
            "near-equal eigenvalues: principal-axis identity is ambiguous; "
            "consider the axis override",
            DegenerateBasisWarning,
            stacklevel=2,
        )
    return PcaBasis(mean=mean, axes=axes, eigenvalues=eigenvalues)


def project(cloud: PointCloud, basis: PcaBasis, plane: str = "12") -> Projection2D:
    """Mean-centered coordinates of the cloud in the (u_a, u_b) plane."""
    try:
        a, b = PLANE_PAIRS[str(plane)]
    except KeyError:
        raise ValueError(f"plane must be one of {sorted(PLANE_PAIRS)}, got {plane!r}") from None
    centered = cloud.points - basis.mean
    coords = np.column_stack((centered @ basis.axes[a], centered @ basis.axes[b]))
    return Projection2D(points=coords, basis_pair=str(plane))


def fit_circle_2d(points_2d: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Linear least-squares circle through 2D points (Kasa form).

    Returns (center (2,), radius) or None when the points do not determine
    a circle (collinear, or fewer than 3).
    """
    w = np.asarray(points_2d, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != 2 or w.shape[0] < 3:
        return None
    x, y = w[:, 0], w[:, 1]
    design = np.column_stack((x, y, np.ones_like(x)))
    rhs = x * x + y * y
    sol, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < 3:
        return None
    cx, cy = sol[0] / 2.0, sol[1] / 2.0
    r2 = sol[2] + cx * cx + cy * cy
    if not (r2 > 0) or not np.isfinite(r2):
        return None
    return np.array([cx, cy]), float(np.sqrt(r2))


def basis_from_axis(cloud: PointCloud, axis) -> PcaBasis:
    """Basis with u3 forced to a caller-supplied bolt axis.

    Supports the config override for scans where the bolt axis is not the
    least-variance direction. u1/u2 span the perpendicular plane, ordered by
    descending in-plane variance. Eigenvalues are the per-axis variances
    sorted descending; for an overridden frame they no longer pair with axes.
    """
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("axis override must be non-zero")
    u3 = axis / norm
    helper = np.array([1.0, 0.0, 0.0]) if abs(u3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u1 = np.cross(u3, helper)
    u1 /= np.linalg.norm(u1)
    u2 = np.cross(u3, u1)
    mean = cloud.centroid
    centered = cloud.points - mean
    axes = np.vstack((u1, u2, u3))
    var = ((centered @ axes.T) ** 2).mean(axis=0)
    if var[1] > var[0]:
        axes = np.vstack((u2, u1, u3))
    ev = np.sort(var)[::-1]
    return PcaBasis(mean=mean, axes=_fix_signs(axes), eigenvalues=ev)
