"""Point cloud data model and rigid-motion primitives.

Units are millimetres throughout the package; angles are radians except in
functions whose names say degrees. Clouds are immutable after construction
and all operations here are pure, so instances are safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError

CAMERA_FRAME = "camera"
TURBINE_FRAME = "turbine-axis"

ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points plus the coordinate frame they live in."""

    points: np.ndarray
    frame_label: str = CAMERA_FRAME

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected points of shape (n, 3), got {pts.shape}")
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def select(self, index) -> "PointCloud":
        """New cloud holding the points at `index` (mask or index array)."""
        return PointCloud(self.points[index], self.frame_label)

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, self.frame_label)


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ROTATION_TOL:
            raise ValueError(f"rotation must be proper (det = {det!r})")
        rot.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self.compose(other))(p) == self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


def axis_angle_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("rotation axis must be non-zero")
    ux, uy, uz = axis / norm
    k = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def orthonormal_tangents(normal) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (e1, e2) spanning the plane orthogonal to `normal`.

    The construction seeds e1 from the coordinate axis with the smallest
    normal component, so the in-plane frame is stable under small normal
    perturbations and identical across runs. (e1, e2, n) is right-handed.
    """
    n = np.asarray(normal, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise ValueError("normal must be non-zero")
    n = n / norm
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=np.float64) / np.linalg.norm(a)
    b = np.asarray(b, dtype=np.float64) / np.linalg.norm(b)
    c = float(np.dot(a, b))
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        if c > 0.0:
            return np.eye(3)
        # Antiparallel: rotate pi about any axis orthogonal to a.
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        ortho = np.cross(a, helper)
        ortho /= np.linalg.norm(ortho)
        return axis_angle_rotation(ortho, np.pi)
    return axis_angle_rotation(axis / s, np.arctan2(s, c))


def transform_to_turbine_frame(cloud: PointCloud, offset) -> PointCloud:
    """Shift a camera-frame cloud into the turbine-axis frame.

    The frame change is a pure translation: every output point is the input
    point minus `offset`.
    """
    if len(cloud) == 0:
        raise FitError("cannot transform an empty cloud")
    if cloud.frame_label != CAMERA_FRAME:
        raise FitError(
            f"expected a cloud in the '{CAMERA_FRAME}' frame, got '{cloud.frame_label}'"
        )
    offset = np.asarray(offset, dtype=np.float64).reshape(3)
    return PointCloud(cloud.points - offset, TURBINE_FRAME)


def apply_transform(cloud: PointCloud, xf: RigidTransform) -> PointCloud:
    """Apply a rigid motion to every point of the cloud."""
    if not isinstance(xf, RigidTransform):
        raise TypeError("xf must be a RigidTransform")
    return cloud.with_points(xf.apply(cloud.points))
