"""Helix extraction from a thread cloud by Hough voting plus LSQ refinement.

The thread curve is modeled as x = R cos u, y = R sin u, z = (d / 2pi)(u - phi)
in a frame whose z-axis is the bolt axis. Each point votes for (R, d) cells
over a bounded set of integer-turn hypotheses; the phase is recovered from a
1D histogram once (R, d) is known, and all three parameters are polished by
alternating turn assignment with a linear least-squares fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from scipy.optimize import minimize

from . import _kernels
from .cloud import PointCloud, orthonormal_tangents
from .errors import FitError
from .pca import PcaBasis, fit_circle_2d

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HoughAccumulator:
    """Bounds and grid resolution of the (R, d, phi) voting space.

    resolution applies to all three parameters (radius and pitch in mm,
    phase in radians). Cells with fewer than min_votes supporters are never
    accepted as a fit.
    """

    r_min: float = 1.0
    r_max: float = 50.0
    d_min: float = 0.25
    d_max: float = 5.0
    resolution: float = 0.01
    min_votes: int = 10
    refine_iterations: int = 5

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("radius bounds must satisfy 0 < r_min < r_max")
        if not (0 < self.d_min < self.d_max):
            raise ValueError("pitch bounds must satisfy 0 < d_min < d_max")
        if not (self.resolution > 0):
            raise ValueError("resolution must be > 0")
        if self.min_votes < 1:
            raise ValueError("min_votes must be >= 1")
        if self.refine_iterations < 0:
            raise ValueError("refine_iterations must be >= 0")

    @property
    def n_d_bins(self) -> int:
        # centered bins: one extra so values rounding up at d_max still fit
        return int(math.ceil((self.d_max - self.d_min) / self.resolution)) + 1

    def decode_cell(self, key: int) -> tuple[float, float]:
        """Bin-center (R, d) of an encoded accumulator cell.

        Centers sit on min + k*resolution, so round parameter values (the
        common case for machined threads) are centers rather than edges and
        their votes do not split between neighboring cells."""
        ir, idb = divmod(int(key), self.n_d_bins)
        r = self.r_min + ir * self.resolution
        d = self.d_min + idb * self.resolution
        return r, d


@dataclass(frozen=True)
class HelixModel:
    """Fitted thread curve. radius/pitch in mm, phase in radians [0, 2pi).

    frame maps helix-local coordinates to the world; its z-axis is the bolt
    axis and its origin lies on that axis at the curve's phase reference.
    rms and support_count describe the fit and are not part of the geometry.
    """

    radius: float
    pitch: float
    phase: float
    frame: PcaBasis
    rms: float = float("nan")
    support_count: int = 0
    # Winning accumulator cell before least-squares refinement, kept for
    # diagnostics; radius/pitch above may differ once refinement is applied.
    cell_radius: float = float("nan")
    cell_pitch: float = float("nan")
    cell_votes: int = 0

    def __post_init__(self):
        if not (self.radius > 0):
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if not (self.pitch > 0):
            raise ValueError(f"pitch must be > 0, got {self.pitch}")
        if not (0.0 <= self.phase < TWO_PI):
            raise ValueError(f"phase must be in [0, 2pi), got {self.phase}")

    def local_curve(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        a = self.pitch / TWO_PI
        return np.column_stack(
            (self.radius * np.cos(u), self.radius * np.sin(u), a * (u - self.phase))
        )

    def curve(self, u) -> np.ndarray:
        """World-frame samples of the fitted curve at parameter values u."""
        return self.frame.to_world(self.local_curve(u))

    def residuals(self, cloud: PointCloud) -> np.ndarray:
        """Orthogonal point-to-curve distances, one per cloud point."""
        local = self.frame.to_local(cloud.points)
        u0 = self.phase + TWO_PI * local[:, 2] / self.pitch
        return _kernels.helix_residuals(
            np.ascontiguousarray(local), u0, self.radius, self.pitch, self.phase
        )

    def rms_residual(self, cloud: PointCloud) -> float:
        r = self.residuals(cloud)
        return float(np.sqrt(np.mean(r * r)))


def point_to_params(p, turn_hint: int) -> tuple[float, float, float]:
    """Invert the helix parametrization for one local-frame point.

    Returns (R, d, theta_total) where theta_total = atan2(y, x) plus
    turn_hint full turns. The pitch follows from d = 2pi z / theta_total,
    which is only meaningful off the axis and for a nonzero total angle.
    """
    x, y, z = (float(v) for v in np.asarray(p, dtype=np.float64).reshape(3))
    r = math.hypot(x, y)
    if r <= 1e-9:
        raise FitError("on-axis point has no defined thread angle")
    theta_total = math.atan2(y, x) + TWO_PI * int(turn_hint)
    if theta_total == 0.0:
        raise FitError("zero total angle: pitch undefined for this point")
    return r, TWO_PI * z / theta_total, theta_total


def select_winning_cell(keys: np.ndarray) -> tuple[int, int]:
    """(cell key, vote count) of the most-voted cell; ties go to the
    smallest key so the result is order-independent."""
    if keys.size == 0:
        return -1, 0
    uniq, counts = np.unique(keys, return_counts=True)
    best = int(np.argmax(counts))  # first max = smallest key among ties
    return int(uniq[best]), int(counts[best])


def _radial_spread(points: np.ndarray, z_dir: np.ndarray) -> float:
    """RMS deviation of the cloud from its best circle seen along z_dir."""
    e1, e2 = orthonormal_tangents(z_dir)
    uv = np.column_stack((points @ e1, points @ e2))
    fit = fit_circle_2d(uv)
    if fit is None:
        return float("inf")
    (cx, cy), r = fit
    d = np.hypot(uv[:, 0] - cx, uv[:, 1] - cy)
    return float(np.sqrt(np.mean((d - r) ** 2)))


def _refine_axis(points: np.ndarray, frame: PcaBasis) -> PcaBasis:
    """Tilt the frame z-axis until the cloud is a cylinder of revolution.

    Scatter eigenvectors alone cannot deliver the bolt axis: a helix couples
    its axial and transverse coordinates with covariance of order R*d/2pi,
    which tilts the principal directions by degrees and smears the votes.
    The thread points all lie at one radius from the true axis, so the
    radial spread is minimized over two tilt parameters instead.
    """
    u1, u2, u3 = frame.axes

    def z_of(x) -> np.ndarray:
        z = u3 + float(x[0]) * u1 + float(x[1]) * u2
        return z / np.linalg.norm(z)

    res = minimize(
        lambda x: _radial_spread(points, z_of(x)),
        np.zeros(2),
        method="Nelder-Mead",
        options={
            "maxfev": 400,
            "xatol": 1e-10,
            "fatol": 1e-18,
            "initial_simplex": [[0.0, 0.0], [0.05, 0.0], [0.0, 0.05]],
        },
    )
    z = z_of(res.x)
    e1, e2 = orthonormal_tangents(z)
    return PcaBasis(
        mean=frame.mean,
        axes=np.vstack((e1, e2, z)),
        eigenvalues=frame.eigenvalues,
    )


def _canonical_frame(
    points: np.ndarray, frame: PcaBasis, d_min: float
) -> PcaBasis:
    """Re-anchor the frame on the cloud point nearest the median height.

    The voting step assumes the curve passes through angle 0 at z = 0; pinning
    the frame to an actual cloud point makes that hold for noise-free data no
    matter the thread's phase, so all correct-turn votes agree exactly.

    Before picking the anchor, the origin is slid in-plane onto the circle
    fitted to the projected cloud. The raw centroid of an unevenly sampled
    helix sits off the true axis, which would bias every radius estimate.

    The anchor is then smoothed onto the local curve tangent fitted through
    its same-turn neighbors (heights within half the smallest searchable
    pitch, `d_min`). Measurement noise on a raw anchor would shift every
    implied pitch coherently by -dz/turn, smearing the true votes across
    neighboring accumulator cells; for noise-free data the symmetric
    neighborhood mean reproduces the anchor's angle and height exactly.
    """
    local = frame.to_local(points)
    fit = fit_circle_2d(local[:, :2])
    if fit is not None:
        (cx, cy), _ = fit
        frame = PcaBasis(
            mean=frame.mean + cx * frame.axes[0] + cy * frame.axes[1],
            axes=frame.axes,
            eigenvalues=frame.eigenvalues,
        )
        local = frame.to_local(points)
    z = local[:, 2]
    order = np.argsort(np.abs(z - np.median(z)), kind="stable")
    anchor = -1
    for idx in order:
        if math.hypot(local[idx, 0], local[idx, 1]) > 1e-9:
            anchor = int(idx)
            break
    if anchor < 0:
        raise FitError("every anchor candidate sits on the frame axis")
    a_pt = local[anchor]
    same_turn = np.flatnonzero(np.abs(z - a_pt[2]) < 0.5 * d_min)
    if same_turn.size >= 4:
        d3 = np.linalg.norm(local[same_turn] - a_pt, axis=1)
        nb = local[same_turn[np.argsort(d3, kind="stable")[:9]]]
        mu = nb.mean(axis=0)
        centered = nb - mu
        _, vecs = np.linalg.eigh(centered.T @ centered)
        tangent = vecs[:, -1]
        a_pt = mu + float((a_pt - mu) @ tangent) * tangent
    ax, ay, az = a_pt
    alpha = math.atan2(ay, ax)
    c, s = math.cos(alpha), math.sin(alpha)
    u1, u2, u3 = frame.axes
    new_axes = np.vstack((c * u1 + s * u2, -s * u1 + c * u2, u3))
    new_mean = frame.mean + az * u3
    return PcaBasis(mean=new_mean, axes=new_axes, eigenvalues=frame.eigenvalues)


def _flip_frame(frame: PcaBasis) -> PcaBasis:
    """Reverse the axis direction: a left-handed thread viewed from the other
    end winds right-handed, which is the orientation the voter expects."""
    axes = frame.axes.copy()
    axes[2] = -axes[2]
    return PcaBasis(mean=frame.mean, axes=axes, eigenvalues=frame.eigenvalues)


def _vote(local: np.ndarray, acc: HoughAccumulator):
    psi = np.arctan2(local[:, 1], local[:, 0])
    rad = np.hypot(local[:, 0], local[:, 1])
    keys, pids = _kernels.hough_vote_keys(
        psi, rad, local[:, 2], acc.r_min, acc.r_max, acc.d_min, acc.d_max, acc.resolution
    )
    return psi, rad, keys, pids


def hough_fit(
    thread_cloud: PointCloud, frame: PcaBasis, acc: HoughAccumulator | None = None
) -> HelixModel:
    """Fit a helix to the thread cloud by parameter-space voting.

    The frame's z-axis must approximate the bolt axis; if no cell reaches
    min_votes the opposite axis direction is tried once before giving up,
    which covers left-handed threads. The winning cell's bin-center model is
    refined by least squares over its supporting points, and the refinement
    is kept only when it does not worsen the RMS residual.
    """
    if acc is None:
        acc = HoughAccumulator()
    pts = thread_cloud.points
    if pts.shape[0] < 50:
        raise FitError(f"helix fit needs at least 50 points, got {pts.shape[0]}")

    frame = _refine_axis(pts, frame)
    chosen = None
    for cand in (frame, _flip_frame(frame)):
        canon = _canonical_frame(pts, cand, acc.d_min)
        local = np.ascontiguousarray(canon.to_local(pts))
        psi, rad, keys, pids = _vote(local, acc)
        key, votes = select_winning_cell(keys)
        if votes >= acc.min_votes:
            chosen = (canon, local, psi, rad, keys, pids, key, votes)
            break
    if chosen is None:
        raise FitError(
            f"no (R, d) cell reached {acc.min_votes} votes: "
            "the cloud does not support a helix within the configured bounds"
        )
    canon, local, psi, rad, keys, pids, key, votes = chosen

    support = np.unique(pids[keys == key])
    r_bin, d_bin = acc.decode_cell(key)
    psi_s = psi[support]
    rad_s = rad[support]
    z_s = local[support, 2]

    # Phase from a 1D histogram at the same resolution as the (R, d) grid.
    ph = np.mod(psi_s - TWO_PI * z_s / d_bin, TWO_PI)
    n_ph = int(math.ceil(TWO_PI / acc.resolution))
    bins = np.minimum((ph / acc.resolution).astype(np.int64), n_ph - 1)
    hist = np.bincount(bins, minlength=n_ph)
    phi_hist = (int(np.argmax(hist)) + 0.5) * acc.resolution
    phi_hist = math.fmod(phi_hist, TWO_PI)

    base = HelixModel(
        radius=r_bin, pitch=d_bin, phase=phi_hist, frame=canon,
        support_count=int(support.size),
        cell_radius=r_bin, cell_pitch=d_bin, cell_votes=int(votes),
    )
    base = replace(base, rms=base.rms_residual(thread_cloud))

    refined = _refine(psi_s, rad_s, z_s, base, acc)
    if refined is not None:
        refined = replace(refined, rms=refined.rms_residual(thread_cloud))
        if refined.rms <= base.rms:
            return refined
    return base


def _refine(
    psi_s: np.ndarray,
    rad_s: np.ndarray,
    z_s: np.ndarray,
    base: HelixModel,
    acc: HoughAccumulator,
) -> HelixModel | None:
    """Alternate integer-turn assignment with linear LSQ on z = a*theta + c.

    Returns None when the data degenerates (negative or zero slope), in which
    case the caller keeps the bin-center model.
    """
    d_cur, phi_cur = base.pitch, base.phase
    radius = float(np.mean(rad_s))
    ones = np.ones_like(psi_s)
    prev_n = None
    for _ in range(acc.refine_iterations):
        n = np.round((phi_cur + TWO_PI * z_s / d_cur - psi_s) / TWO_PI)
        if prev_n is not None and np.array_equal(n, prev_n):
            break
        prev_n = n
        theta = psi_s + TWO_PI * n
        design = np.column_stack((theta, ones))
        sol, *_ = np.linalg.lstsq(design, z_s, rcond=None)
        a, cc = float(sol[0]), float(sol[1])
        if not (a > 1e-12) or not math.isfinite(a) or not math.isfinite(cc):
            return None
        d_cur = TWO_PI * a
        phi_cur = float(np.mod(-cc / a, TWO_PI))
    if not (radius > 0 and d_cur > 0):
        return None
    if phi_cur >= TWO_PI:  # fmod edge after rounding
        phi_cur -= TWO_PI
    return replace(base, radius=radius, pitch=d_cur, phase=phi_cur)
