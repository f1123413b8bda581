"""Mounting-hole location and axis estimation on a fitted face.

Holes show up as point-free disks in the face scan. A 2D occupancy grid over
the plane finds those empty regions, the convex hull of the surrounding
annulus becomes a crop polygon, and a RANSAC circle plus constrained
cylinder refinement recovers each bore's axis and radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, cKDTree

from .cloud import PointCloud, orthonormal_tangents
from .errors import FitError
from .pca import fit_circle_2d
from .segment import PlaneModel, RansacConfig, _rng

MIN_CONSENSUS = 30
AXIS_CONE_DEG = 15.0
_MIN_PRESEARCH_POINTS = 500
_MIN_HOLE_CELLS = 5
_ANNULUS_GROW_CELLS = 2


@dataclass(frozen=True)
class HoleAxis:
    """Bore axis line (point + unit direction) and fitted radius."""

    point: np.ndarray
    direction: np.ndarray
    radius: float
    inlier_count: int = 0

    def __post_init__(self):
        p = np.asarray(self.point, dtype=np.float64).reshape(3).copy()
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(d))
        if norm < 1e-12:
            raise ValueError("axis direction must be non-zero")
        d = d / norm
        if not (self.radius > 0):
            raise ValueError(f"radius must be > 0, got {self.radius}")
        p.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class HoleSet:
    holes: tuple[HoleAxis, ...]
    source_plane: PlaneModel

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        cone = np.cos(np.deg2rad(AXIS_CONE_DEG))
        for i, h in enumerate(self.holes):
            if abs(float(h.direction @ self.source_plane.normal)) < cone - 1e-12:
                raise ValueError(
                    f"hole {i} direction exceeds the {AXIS_CONE_DEG} degree cone "
                    "around the source plane normal"
                )


@dataclass(frozen=True)
class HoleCandidate:
    """Pre-search output: where a hole seems to be and what to crop."""

    center_2d: np.ndarray  # (2,) plane-frame coords
    center_3d: np.ndarray  # (3,) world point on the plane
    polygon: np.ndarray  # (m, 2) convex crop polygon, counter-clockwise
    cell_count: int

    def __post_init__(self):
        for name in ("center_2d", "center_3d", "polygon"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def to_plane_2d(points: np.ndarray, plane: PlaneModel) -> np.ndarray:
    """In-plane (e1, e2) coordinates of 3D points relative to plane.p0."""
    e1, e2 = orthonormal_tangents(plane.normal)
    d = np.asarray(points, dtype=np.float64) - plane.p0
    return np.column_stack((d @ e1, d @ e2))


def from_plane_2d(uv: np.ndarray, plane: PlaneModel) -> np.ndarray:
    e1, e2 = orthonormal_tangents(plane.normal)
    uv = np.asarray(uv, dtype=np.float64)
    return plane.p0 + np.outer(uv[:, 0], e1) + np.outer(uv[:, 1], e2)


def points_in_polygon(uv: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Membership mask for a convex counter-clockwise polygon."""
    uv = np.asarray(uv, dtype=np.float64)
    poly = np.asarray(polygon, dtype=np.float64)
    inside = np.ones(uv.shape[0], dtype=bool)
    m = poly.shape[0]
    for i in range(m):
        a = poly[i]
        edge = poly[(i + 1) % m] - a
        # cross(edge, p - a) >= 0 keeps the left half-plane
        inside &= (edge[0] * (uv[:, 1] - a[1]) - edge[1] * (uv[:, 0] - a[0])) >= -1e-12
    return inside


def presearch_holes(
    plane_inliers: PointCloud, plane: PlaneModel, expected_holes: int
) -> list[HoleCandidate]:
    """Locate point-free disks in the face and build per-hole crop polygons.

    The face is rasterized at a cell size of twice the median nearest-neighbor
    spacing; interior connected empty regions of at least 5 cells are hole
    candidates. Candidates come back sorted by azimuth about the face center
    so hole indices are stable across runs.
    """
    if expected_holes < 0:
        raise ValueError("expected_holes must be >= 0")
    n = len(plane_inliers)
    if n < _MIN_PRESEARCH_POINTS:
        raise FitError(
            f"hole pre-search needs >= {_MIN_PRESEARCH_POINTS} face points, got {n}"
        )
    uv = to_plane_2d(plane_inliers.points, plane)
    tree = cKDTree(uv)
    nn, _ = tree.query(uv, k=2, workers=-1)
    cell = 2.0 * float(np.median(nn[:, 1]))
    if cell <= 0:
        raise FitError("face points are degenerate: nearest-neighbor spacing is 0")

    lo = uv.min(axis=0) - cell
    hi = uv.max(axis=0) + cell
    shape = np.maximum(np.ceil((hi - lo) / cell).astype(int), 1)
    ij = np.minimum(((uv - lo) / cell).astype(int), shape - 1)
    occ = np.zeros(shape, dtype=bool)
    occ[ij[:, 0], ij[:, 1]] = True

    labels, n_comp = ndimage.label(~occ)  # 4-connected empty regions
    found = []
    for comp in range(1, n_comp + 1):
        mask = labels == comp
        cells = np.argwhere(mask)
        if (
            cells[:, 0].min() == 0
            or cells[:, 1].min() == 0
            or cells[:, 0].max() == shape[0] - 1
            or cells[:, 1].max() == shape[1] - 1
        ):
            continue  # reaches the padded border: outside the face, not a hole
        if cells.shape[0] < _MIN_HOLE_CELLS:
            continue
        center_2d = lo + (cells.mean(axis=0) + 0.5) * cell
        ring = ndimage.binary_dilation(mask, iterations=_ANNULUS_GROW_CELLS) & occ
        ring_pts = uv[ring[ij[:, 0], ij[:, 1]]]
        if ring_pts.shape[0] < 3:
            continue
        hull = ConvexHull(ring_pts)
        polygon = ring_pts[hull.vertices]  # counter-clockwise per qhull 2D
        found.append(
            HoleCandidate(
                center_2d=center_2d,
                center_3d=from_plane_2d(center_2d[None, :], plane)[0],
                polygon=polygon,
                cell_count=int(cells.shape[0]),
            )
        )

    face_center = uv.mean(axis=0)

    def azimuth(c: HoleCandidate) -> float:
        d = c.center_2d - face_center
        return float(np.mod(np.arctan2(d[1], d[0]), 2.0 * np.pi))

    if len(found) < expected_holes:
        raise FitError(
            f"hole pre-search found {len(found)} candidates, expected {expected_holes}"
        )
    if len(found) > expected_holes and expected_holes > 0:
        # Mounting holes come in one size; spurious voids (a central bore,
        # sampling gaps) sit far from the median cell count, so keep the
        # expected_holes candidates nearest it.
        med = float(np.median([c.cell_count for c in found]))
        found.sort(key=lambda c: (abs(c.cell_count - med), azimuth(c)))
        found = found[:expected_holes]
    found.sort(key=azimuth)
    return found


def crop_hole_region(
    cloud: PointCloud, plane: PlaneModel, candidate: HoleCandidate
) -> PointCloud:
    """All cloud points whose in-plane projection falls inside the crop
    polygon, bore walls below the face included."""
    uv = to_plane_2d(cloud.points, plane)
    return cloud.select(points_in_polygon(uv, candidate.polygon))


def _circumcircles(uv: np.ndarray, triples: np.ndarray):
    """Circle through each 2D point triple: centers, radii, validity."""
    a = uv[triples[:, 0]]
    b = uv[triples[:, 1]]
    c = uv[triples[:, 2]]
    d = 2.0 * (
        a[:, 0] * (b[:, 1] - c[:, 1])
        + b[:, 0] * (c[:, 1] - a[:, 1])
        + c[:, 0] * (a[:, 1] - b[:, 1])
    )
    valid = np.abs(d) > 1e-12
    d_safe = np.where(valid, d, 1.0)
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    c2 = np.einsum("ij,ij->i", c, c)
    ux = (a2 * (b[:, 1] - c[:, 1]) + b2 * (c[:, 1] - a[:, 1]) + c2 * (a[:, 1] - b[:, 1])) / d_safe
    uy = (a2 * (c[:, 0] - b[:, 0]) + b2 * (a[:, 0] - c[:, 0]) + c2 * (b[:, 0] - a[:, 0])) / d_safe
    centers = np.column_stack((ux, uy))
    radii = np.linalg.norm(centers - a, axis=1)
    return centers, radii, valid


def fit_hole_axis(
    hole_region: PointCloud,
    plane: PlaneModel,
    cfg: RansacConfig,
    rng_seed,
    radius_bounds: tuple[float, float] | None = None,
    min_consensus: int = MIN_CONSENSUS,
) -> HoleAxis:
    """RANSAC circle in the plane frame, refined to a tilted cylinder.

    The axis direction is constrained to a 15 degree cone around the plane
    normal. A point is an inlier when |distance-to-axis - r| < tau; fewer
    than `min_consensus` final inliers is a failure for this hole.
    """
    pts = hole_region.points
    n = pts.shape[0]
    if n < 3:
        raise FitError(f"hole region has {n} points; need >= 3 for a circle")
    uv = to_plane_2d(pts, plane)
    rng = _rng(rng_seed)

    triples = rng.integers(0, n, size=(cfg.iterations, 3))
    centers, radii, valid = _circumcircles(uv, triples)
    if radius_bounds is not None:
        r_lo, r_hi = radius_bounds
        valid &= (radii >= r_lo) & (radii <= r_hi)
    if not valid.any():
        raise FitError("no valid circle hypothesis (degenerate or out-of-bounds samples)")

    counts = np.zeros(cfg.iterations, dtype=np.int64)
    chunk = 256
    for s in range(0, cfg.iterations, chunk):
        e = min(s + chunk, cfg.iterations)
        dist = np.linalg.norm(uv[None, :, :] - centers[s:e, None, :], axis=2)
        hit = np.abs(dist - radii[s:e, None]) < cfg.tau
        counts[s:e] = hit.sum(axis=1)
    counts[~valid] = -1
    best = int(np.argmax(counts))
    if counts[best] < min_consensus:
        raise FitError(
            f"circle consensus is {max(int(counts[best]), 0)} points; "
            f"need >= {min_consensus}"
        )
    sel = np.abs(np.linalg.norm(uv - centers[best], axis=1) - radii[best]) < cfg.tau
    inlier_pts = pts[sel]

    e1, e2 = orthonormal_tangents(plane.normal)
    nrm = plane.normal
    cone_cos = np.cos(np.deg2rad(AXIS_CONE_DEG))

    def eval_direction(x):
        direction = nrm + x[0] * e1 + x[1] * e2
        direction = direction / np.linalg.norm(direction)
        if float(direction @ nrm) < cone_cos:
            return None, None, None, 1e9 * (1.0 + float(np.hypot(x[0], x[1])))
        f1 = e1 - (e1 @ direction) * direction
        f1 = f1 / np.linalg.norm(f1)
        f2 = np.cross(direction, f1)
        w = np.column_stack((inlier_pts @ f1, inlier_pts @ f2))
        fit = fit_circle_2d(w)
        if fit is None:
            return None, None, None, 1e9
        center_w, radius = fit
        resid = np.linalg.norm(w - center_w, axis=1) - radius
        return direction, (f1, f2, center_w), radius, float(np.mean(resid * resid))

    def objective(x):
        return eval_direction(x)[3]

    x0 = np.zeros(2)
    step = np.tan(np.deg2rad(1.0))
    simplex = np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"maxfev": 200, "xatol": 1e-7, "fatol": 1e-14, "initial_simplex": simplex},
    )
    x_best = res.x if objective(res.x) <= objective(x0) else x0
    direction, frame, radius, _ = eval_direction(x_best)
    if direction is None:
        direction, frame, radius, _ = eval_direction(x0)
    if direction is None or radius is None or not (radius > 0):
        raise FitError("cylinder refinement degenerated")
    f1, f2, center_w = frame

    # Axis point: intersect the fitted axis with the source plane.
    base = center_w[0] * f1 + center_w[1] * f2
    kappa = float(nrm @ (plane.p0 - base)) / float(nrm @ direction)
    axis_point = base + kappa * direction

    rel = pts - axis_point
    along = rel @ direction
    radial = np.linalg.norm(rel - np.outer(along, direction), axis=1)
    final = np.abs(radial - radius) < cfg.tau
    count = int(final.sum())
    if count < min_consensus:
        raise FitError(
            f"cylinder consensus is {count} points; need >= {min_consensus}"
        )
    if float(direction @ nrm) < 0:
        direction = -direction
    return HoleAxis(
        point=axis_point, direction=direction, radius=float(radius), inlier_count=count
    )
