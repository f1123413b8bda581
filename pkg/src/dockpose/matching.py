"""Docking pose estimation: face-to-face match, then hole-pattern rotation.

Stage one finds the rigid correction (R, t) that mates the moving face A
against the fixed face B by minimizing the spread of directional
point-to-plane distances. Stage two spins the shaft about its own axis to
line the stud pattern up with the hole pattern, minimizing the spread of
stud-to-hole-axis distances over one pattern period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .cloud import (
    PointCloud,
    RigidTransform,
    axis_angle_rotation,
    orthonormal_tangents,
    rotation_between,
)
from .errors import FitError
from .holes import HoleAxis

EPS_MODES = ("A-only", "B-only", "symmetric")

TWO_PI = 2.0 * math.pi

_OPT_SUBSAMPLE = 4000
_GAP_STEP = 0.02  # mm, initial simplex scale along the gap coordinate
_TILT_STEP = 0.002  # rad, initial simplex scale for the two tilts


@dataclass(frozen=True)
class FaceMatchInput:
    """Everything the face stage needs: the two inlier clouds, outward
    normals oriented at each other, their centroids, and the index
    normalizer h0 (mm)."""

    cloud_a: PointCloud
    cloud_b: PointCloud
    n_a: np.ndarray
    n_b: np.ndarray
    p_ac: np.ndarray
    p_bc: np.ndarray
    h0: float = 1.0

    def __post_init__(self):
        if len(self.cloud_a) == 0 or len(self.cloud_b) == 0:
            raise ValueError("face clouds must be non-empty")
        if not (self.h0 > 0):
            raise ValueError(f"h0 must be > 0, got {self.h0}")
        for name in ("n_a", "n_b", "p_ac", "p_bc"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(3).copy()
            if name.startswith("n"):
                norm = float(np.linalg.norm(v))
                if abs(norm - 1.0) > 1e-9:
                    raise ValueError(f"{name} must be unit length, |{name}| = {norm}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_faces(cls, cloud_a, cloud_b, plane_a, plane_b, h0: float = 1.0):
        """Orient each face normal at the opposite cloud and take cloud
        centroids as the reference points."""
        p_ac = cloud_a.centroid
        p_bc = cloud_b.centroid
        n_b = plane_b.oriented_toward(p_ac).normal
        # Coplanar faces (scans already in contact, or two scans of the same
        # surface) leave oriented_toward nothing to break the tie with: both
        # normals would point at the same side. Force the mated convention
        # n_a = -n_b in that case.
        coplanar = (
            abs(float(np.dot(plane_a.normal, plane_b.normal))) > 1.0 - 1e-9
            and abs(float(np.dot(plane_b.p0 - plane_a.p0, plane_a.normal))) < 1e-6
        )
        if coplanar:
            n_a = -n_b
        else:
            n_a = plane_a.oriented_toward(p_bc).normal
        return cls(
            cloud_a=cloud_a,
            cloud_b=cloud_b,
            n_a=n_a,
            n_b=n_b,
            p_ac=p_ac,
            p_bc=p_bc,
            h0=h0,
        )


@dataclass(frozen=True)
class FaceMatchResult:
    xf: RigidTransform
    eps_pla: float
    h_max: float
    h_mean: float
    h0: float
    converged: bool = True
    n_evals: int = 0

    def __post_init__(self):
        expect = (self.h_max - self.h_mean) / self.h0
        if abs(self.eps_pla - expect) > 1e-12 * max(1.0, abs(expect)):
            raise ValueError("eps_pla must equal (h_max - h_mean)/h0")


def directional_distances(
    xf: RigidTransform, inp: FaceMatchInput
) -> tuple[np.ndarray, np.ndarray]:
    """Signed gap heights of A's points over B and vice versa.

    h_i measures each transformed A point along B's normal relative to B's
    centroid; h_j measures each B point along A's transformed normal
    relative to A's transformed centroid.
    """
    moved_a = xf.apply(inp.cloud_a.points)
    h_i = (moved_a - inp.p_bc) @ inp.n_b
    n_a_moved = xf.rotation @ inp.n_a
    p_ac_moved = xf.rotation @ inp.p_ac + xf.translation
    h_j = (inp.cloud_b.points - p_ac_moved) @ n_a_moved
    return h_i, h_j


def _eps_population(h_i: np.ndarray, h_j: np.ndarray, mode: str) -> np.ndarray:
    if mode == "A-only":
        return np.abs(h_i)
    if mode == "B-only":
        return np.abs(h_j)
    if mode == "symmetric":
        return np.concatenate((np.abs(h_i), np.abs(h_j)))
    raise ValueError(f"mode must be one of {EPS_MODES}, got {mode!r}")


def eps_pla(
    xf: RigidTransform, inp: FaceMatchInput, mode: str = "symmetric"
) -> FaceMatchResult:
    """Face-match index at a fixed pose: (h_max - h_mean)/h0 over the
    absolute directional distances."""
    h_i, h_j = directional_distances(xf, inp)
    pop = _eps_population(h_i, h_j, mode)
    h_max = float(pop.max())
    h_mean = float(pop.mean())
    return FaceMatchResult(
        xf=xf,
        eps_pla=(h_max - h_mean) / inp.h0,
        h_max=h_max,
        h_mean=h_mean,
        h0=inp.h0,
    )


def _strided(cloud: PointCloud, cap: int) -> PointCloud:
    n = len(cloud)
    if n <= cap:
        return cloud
    return cloud.select(np.arange(0, n, int(math.ceil(n / cap)))[:cap])


def optimize_face_pose(
    inp: FaceMatchInput,
    nominal_gap: float = 1.0,
    mode: str = "symmetric",
    max_evals: int = 500,
) -> FaceMatchResult:
    """Minimize eps_pla over the pose coordinates that move mass along n_B.

    Initialization turns A to face B (n_A onto -n_B) and places A's centroid
    at the commanded clearance over B's. A simplex then searches gap and the
    two tilts; in-plane coordinates stay at their initial values because the
    index cannot see them. After convergence the gap coordinate, to which
    the index is also insensitive, is pinned back to the commanded
    clearance. The result never has a larger eps_pla than the
    initialization.
    """
    r0 = rotation_between(inp.n_a, -inp.n_b)
    e1, e2 = orthonormal_tangents(inp.n_b)
    target = inp.p_bc + nominal_gap * inp.n_b

    def pose(x) -> RigidTransform:
        gamma, a, b = (float(v) for v in x)
        rot = axis_angle_rotation(e1, a) @ axis_angle_rotation(e2, b) @ r0
        return RigidTransform(rot, target + gamma * inp.n_b - rot @ inp.p_ac)

    sub = replace(
        inp,
        cloud_a=_strided(inp.cloud_a, _OPT_SUBSAMPLE),
        cloud_b=_strided(inp.cloud_b, _OPT_SUBSAMPLE),
    )

    evals = 0

    def objective(x) -> float:
        nonlocal evals
        evals += 1
        h_i, h_j = directional_distances(pose(x), sub)
        pop = _eps_population(h_i, h_j, mode)
        return (float(pop.max()) - float(pop.mean())) / inp.h0

    x0 = np.zeros(3)
    simplex = np.vstack(
        (
            x0,
            x0 + [_GAP_STEP, 0.0, 0.0],
            x0 + [0.0, _TILT_STEP, 0.0],
            x0 + [0.0, 0.0, _TILT_STEP],
        )
    )
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": max_evals,
            "xatol": 1e-7,
            "fatol": 1e-12,
            "initial_simplex": simplex,
        },
    )

    def finalized(x) -> FaceMatchResult:
        xf = pose(x)
        # Pin the index-blind gap coordinate to the commanded clearance.
        h_i, _ = directional_distances(xf, inp)
        slide = nominal_gap - float(h_i.mean())
        xf_pinned = RigidTransform(xf.rotation, xf.translation + slide * inp.n_b)
        out, out_pinned = eps_pla(xf, inp, mode), eps_pla(xf_pinned, inp, mode)
        return out_pinned if out_pinned.eps_pla <= out.eps_pla + 1e-12 else out

    best = finalized(res.x)
    init = finalized(x0)
    if init.eps_pla < best.eps_pla:
        best = init
    return replace(best, converged=bool(res.success), n_evals=evals)


def rotate_about_axis(points, axis, center, theta_rad: float) -> np.ndarray:
    """Rodrigues rotation of point(s) about the line (center, axis).

    theta_rad is in radians; axis need not be unit length but must be
    non-zero.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    ax = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(ax))
    if norm < 1e-12:
        raise ValueError("rotation axis must be non-zero")
    ax = ax / norm
    c = np.asarray(center, dtype=np.float64).reshape(3)
    rel = pts - c
    cos_t = math.cos(theta_rad)
    sin_t = math.sin(theta_rad)
    rotated = (
        rel * cos_t
        + np.cross(np.broadcast_to(ax, rel.shape), rel) * sin_t
        + np.outer(rel @ ax, ax) * (1.0 - cos_t)
    )
    out = rotated + c
    return out[0] if single else out


def point_line_distance(points, line_point, line_dir) -> np.ndarray:
    """Perpendicular distance from point(s) to a line: ||n x (p - p0)|| / ||n||."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = np.asarray(line_dir, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(n))
    if norm < 1e-12:
        raise ValueError("line direction must be non-zero")
    rel = pts - np.asarray(line_point, dtype=np.float64).reshape(3)
    return np.linalg.norm(np.cross(np.broadcast_to(n, rel.shape), rel), axis=1) / norm


@dataclass(frozen=True)
class HoleMatchInput:
    """Stud and hole axes paired by angular rank, plus the shaft rotation
    axis (n, p_O), the normalizer d0 (mm), and the pattern period (deg)."""

    stud_axes: tuple[HoleAxis, ...]
    hole_axes: tuple[HoleAxis, ...]
    axis: np.ndarray
    center: np.ndarray
    d0: float = 0.5
    period_deg: float = 360.0

    def __post_init__(self):
        studs = tuple(self.stud_axes)
        holes = tuple(self.hole_axes)
        if len(studs) == 0:
            raise ValueError("need at least one stud/hole pair")
        if len(studs) != len(holes):
            raise ValueError(
                f"{len(studs)} studs cannot pair with {len(holes)} holes"
            )
        if not (self.d0 > 0):
            raise ValueError(f"d0 must be > 0, got {self.d0}")
        if not (0.0 < self.period_deg <= 360.0):
            raise ValueError(f"period_deg must be in (0, 360], got {self.period_deg}")
        ax = np.asarray(self.axis, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(ax))
        if norm < 1e-12:
            raise ValueError("rotation axis must be non-zero")
        ax = (ax / norm).copy()
        ce = np.asarray(self.center, dtype=np.float64).reshape(3).copy()
        ax.setflags(write=False)
        ce.setflags(write=False)
        object.__setattr__(self, "stud_axes", studs)
        object.__setattr__(self, "hole_axes", holes)
        object.__setattr__(self, "axis", ax)
        object.__setattr__(self, "center", ce)

    @classmethod
    def paired_by_azimuth(cls, studs, holes, axis, center, d0=0.5, period_deg=360.0):
        """Sort both sets by azimuth about the rotation axis and pair by rank.

        Rank pairing alone is ambiguous up to a cyclic shift: when the stud
        pattern is rotated past the (arbitrary) zero-azimuth cut, one stud
        wraps around and every rank moves by one. The shift is chosen so the
        implied alignment rotation, the circular mean of per-pair azimuth
        gaps, falls inside [0, period); that is the window the rotation
        search scans, so the true alignment is always reachable.
        """
        ax = np.asarray(axis, dtype=np.float64).reshape(3)
        ax = ax / np.linalg.norm(ax)
        e1, e2 = orthonormal_tangents(ax)
        ce = np.asarray(center, dtype=np.float64).reshape(3)

        def ordered(axes):
            pts = np.array([h.point for h in axes]) - ce
            az = np.mod(np.arctan2(pts @ e2, pts @ e1), TWO_PI)
            order = np.argsort(az, kind="stable")
            return [axes[i] for i in order], az[order]

        stud_sorted, stud_az = ordered(list(studs))
        hole_sorted, hole_az = ordered(list(holes))
        n = len(stud_sorted)
        if n == len(hole_sorted) and n > 0 and abs(n * period_deg - 360.0) < 1e-6:
            gaps = hole_az - stud_az
            mean_gap = math.atan2(
                float(np.sin(gaps).sum()), float(np.cos(gaps).sum())
            )
            q = math.degrees(mean_gap) % 360.0
            shift = (n - int(q // period_deg)) % n
            hole_sorted = hole_sorted[shift:] + hole_sorted[:shift]

        return cls(
            stud_axes=tuple(stud_sorted),
            hole_axes=tuple(hole_sorted),
            axis=ax,
            center=ce,
            d0=d0,
            period_deg=period_deg,
        )

    @property
    def stud_points(self) -> np.ndarray:
        return np.array([s.point for s in self.stud_axes])


@dataclass(frozen=True)
class HoleMatchResult:
    theta_deg: float
    eps_cyc: float
    deviations: tuple[float, ...]
    d0: float

    def __post_init__(self):
        object.__setattr__(self, "deviations", tuple(self.deviations))
        d = np.asarray(self.deviations)
        expect = (float(d.max()) - float(d.mean())) / self.d0
        if abs(self.eps_cyc - expect) > 1e-12 * max(1.0, abs(expect)):
            raise ValueError("eps_cyc must equal (d_max - d_mean)/d0")

    @property
    def d_max(self) -> float:
        return max(self.deviations)

    @property
    def d_mean(self) -> float:
        return float(np.mean(self.deviations))


def hole_deviation(theta_deg: float, inp: HoleMatchInput) -> np.ndarray:
    """Per-pair stud-to-hole-axis distances after rotating the studs by
    theta_deg about the shaft axis."""
    rotated = rotate_about_axis(
        inp.stud_points, inp.axis, inp.center, math.radians(theta_deg)
    )
    out = np.empty(len(inp.hole_axes))
    for k, hole in enumerate(inp.hole_axes):
        out[k] = point_line_distance(rotated[k], hole.point, hole.direction)[0]
    return out


def repaired_by_nearest(inp: HoleMatchInput, theta_deg: float) -> HoleMatchInput:
    """Re-pair studs to their nearest hole axes under a solved rotation.

    Azimuth-rank pairing happens before any rotation is known, and when the
    alignment sits within noise of a period boundary the rank shift can come
    out one slot off. Such a pairing still scores well (a periodic pattern
    rotated by one period lands on itself) but its reported stud-to-hole
    distances are a full chord length. Once a rotation has been solved the
    assignment is unambiguous: each rotated stud sits a pattern-imperfection
    length from its hole, far less than the hole spacing, so nearest-axis
    wins. Returns the input unchanged when the pairing is already nearest or
    when nearest assignments collide.
    """
    rotated = rotate_about_axis(
        inp.stud_points, inp.axis, inp.center, math.radians(theta_deg)
    )
    k = len(inp.hole_axes)
    nearest = np.empty(k, dtype=np.int64)
    for i in range(k):
        dists = [
            point_line_distance(rotated[i], h.point, h.direction)[0]
            for h in inp.hole_axes
        ]
        nearest[i] = int(np.argmin(dists))
    if np.array_equal(nearest, np.arange(k)) or len(set(nearest.tolist())) != k:
        return inp
    return HoleMatchInput(
        stud_axes=inp.stud_axes,
        hole_axes=tuple(inp.hole_axes[j] for j in nearest),
        axis=inp.axis,
        center=inp.center,
        d0=inp.d0,
        period_deg=inp.period_deg,
    )


def _eps_cyc_grid(inp: HoleMatchInput, thetas_deg: np.ndarray) -> np.ndarray:
    """Vectorized eps_cyc over a batch of angles."""
    rel = inp.stud_points - inp.center  # (K, 3)
    ax = inp.axis
    t = np.deg2rad(thetas_deg)[:, None, None]  # (G, 1, 1)
    cross = np.cross(np.broadcast_to(ax, rel.shape), rel)
    axial = np.outer(rel @ ax, ax)
    rotated = rel * np.cos(t) + cross * np.sin(t) + axial * (1.0 - np.cos(t))
    pts = rotated + inp.center  # (G, K, 3)
    hole_pts = np.array([h.point for h in inp.hole_axes])
    hole_dirs = np.array([h.direction for h in inp.hole_axes])
    diff = pts - hole_pts  # (G, K, 3)
    d = np.linalg.norm(np.cross(np.broadcast_to(hole_dirs, diff.shape), diff), axis=2)
    d /= np.linalg.norm(hole_dirs, axis=1)
    return (d.max(axis=1) - d.mean(axis=1)) / inp.d0


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_hole_rotation(
    inp: HoleMatchInput, grid_step_deg: float = 0.01, tol_deg: float = 1e-4
) -> HoleMatchResult:
    """Coarse grid over one pattern period, then golden-section refinement.

    The returned angle always scores at least as well as every coarse grid
    sample; ties resolve to the smallest angle.
    """
    if not (grid_step_deg > 0):
        raise ValueError("grid_step_deg must be > 0")
    thetas = np.arange(0.0, inp.period_deg, grid_step_deg)
    eps = _eps_cyc_grid(inp, thetas)
    gi = int(np.argmin(eps))  # first minimum = smallest angle among ties
    best_theta = float(thetas[gi])
    best_eps = float(eps[gi])

    lo = best_theta - grid_step_deg
    hi = best_theta + grid_step_deg
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = float(_eps_cyc_grid(inp, np.array([x1]))[0])
    f2 = float(_eps_cyc_grid(inp, np.array([x2]))[0])
    while (b - a) > tol_deg:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = float(_eps_cyc_grid(inp, np.array([x1]))[0])
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = float(_eps_cyc_grid(inp, np.array([x2]))[0])
        cand_theta, cand_eps = (x1, f1) if f1 < f2 else (x2, f2)
        if cand_eps < best_eps:
            best_theta, best_eps = float(cand_theta), float(cand_eps)

    # The refinement bracket may overhang the period edges by one grid step;
    # re-wrapping would change eps for real (not exactly periodic) patterns
    # and could break grid dominance, so the angle is reported as found.
    devs = hole_deviation(best_theta, inp)
    return HoleMatchResult(
        theta_deg=best_theta,
        eps_cyc=(float(devs.max()) - float(devs.mean())) / inp.d0,
        deviations=tuple(float(v) for v in devs),
        d0=inp.d0,
    )


@dataclass(frozen=True)
class PoseSolution:
    """The docking command: rigid face correction plus shaft rotation."""

    xf: RigidTransform
    theta_deg: float
    eps_pla: float
    eps_cyc: float
    per_hole_dev: tuple[float, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "per_hole_dev", tuple(self.per_hole_dev))
        object.__setattr__(self, "warnings", tuple(self.warnings))


def assemble_pose(face: FaceMatchResult, hole: HoleMatchResult) -> PoseSolution:
    """Package the two stage outputs, verbatim, into one record."""
    warns = []
    if not face.converged:
        warns.append("face optimization stopped before convergence")
    return PoseSolution(
        xf=face.xf,
        theta_deg=hole.theta_deg,
        eps_pla=face.eps_pla,
        eps_cyc=hole.eps_cyc,
        per_hole_dev=hole.deviations,
        warnings=tuple(warns),
    )
