"""Hot numeric kernels, compiled with numba when available.

Every kernel has two interchangeable implementations: a numba ``@njit``
version and a numpy/python fallback. The active backend is chosen at import
time from the ``DOCKPOSE_NUMBA`` environment variable:

    DOCKPOSE_NUMBA=1      require numba (warn + fall back if not importable)
    DOCKPOSE_NUMBA=0      force the numpy fallback path
    DOCKPOSE_NUMBA=auto   use numba if importable (default)

Both paths produce the same results; ``benchmarks/bench_kernels.py`` times
them against each other. The `*_numpy` / `*_numba` pairs stay importable so
tests and benchmarks can pin a path explicitly.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

TWO_PI = 2.0 * np.pi

# Turn hypotheses are dropped once consecutive implied pitches fall closer
# than this many accumulator bins; see hough_vote_keys_numpy. The value
# trades low-pitch sensitivity (pitch d resolvable only while points reach
# no higher than z = d^2 / (ALIAS_SPACING_BINS * resolution)) against the
# uninformative-vote background that otherwise swamps the low-pitch rows.
ALIAS_SPACING_BINS = 8.0


def _numba_preference() -> bool | None:
    val = os.environ.get("DOCKPOSE_NUMBA", "auto").strip().lower()
    if val in ("0", "false", "no", "off"):
        return False
    if val in ("1", "true", "yes", "on"):
        return True
    return None


_pref = _numba_preference()
if _pref is False:
    numba = None
else:
    try:
        import numba
    except ImportError:  # pragma: no cover - environment dependent
        numba = None
        if _pref is True:
            warnings.warn(
                "DOCKPOSE_NUMBA=1 but numba is not importable; "
                "using the numpy fallback kernels",
                RuntimeWarning,
            )

NUMBA_ENABLED = numba is not None


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# RANSAC plane scoring: count inliers for a batch of candidate planes.
# ---------------------------------------------------------------------------

def plane_inlier_counts_numpy(points, normals, offsets, tau):
    """Inlier counts per candidate plane.

    points: (n, 3); normals: (k, 3) unit rows; offsets: (k,) with the plane
    defined by normal . p = offset; inlier iff |normal . p - offset| < tau.
    Candidates are chunked to bound the (n, chunk) intermediate.
    """
    n_cand = normals.shape[0]
    counts = np.empty(n_cand, dtype=np.int64)
    chunk = 128
    for start in range(0, n_cand, chunk):
        stop = min(start + chunk, n_cand)
        d = points @ normals[start:stop].T
        d -= offsets[start:stop]
        np.abs(d, out=d)
        counts[start:stop] = (d < tau).sum(axis=0)
    return counts


def _plane_inlier_counts_loops(points, normals, offsets, tau):
    n_cand = normals.shape[0]
    n_pts = points.shape[0]
    counts = np.zeros(n_cand, dtype=np.int64)
    for c in numba.prange(n_cand):
        nx = normals[c, 0]
        ny = normals[c, 1]
        nz = normals[c, 2]
        off = offsets[c]
        acc = 0
        for i in range(n_pts):
            d = nx * points[i, 0] + ny * points[i, 1] + nz * points[i, 2] - off
            if d < 0.0:
                d = -d
            if d < tau:
                acc += 1
        counts[c] = acc
    return counts


# ---------------------------------------------------------------------------
# Hough voting for the thread curve: each point votes one (radius, pitch)
# cell per feasible whole-turn hypothesis.
# ---------------------------------------------------------------------------

def hough_vote_keys_numpy(psi, rad, z, r_min, r_max, d_min, d_max, res):
    """Encoded (radius-bin, pitch-bin) vote keys plus the voting point ids.

    psi: wrapped angle of each point about the axis, relative to the angular
    origin; z: height relative to the height origin. A point contributes one
    vote per integer turn count whose implied pitch lands in [d_min, d_max);
    radius outside [r_min, r_max) suppresses the point entirely. Key encoding
    is radius_bin * n_pitch_bins + pitch_bin with round-to-center binning.

    Turn counts are additionally capped once consecutive turn hypotheses give
    pitches closer than ALIAS_SPACING_BINS accumulator bins: past that point
    a vote no longer resolves the pitch (neighboring hypotheses land in the
    same or adjacent cells) and only feeds a spurious pileup at the low-pitch
    end of the row, so those hypotheses are skipped. The cap also keeps the
    emitted pitches of one point pairwise apart, so no point votes twice for
    one cell.
    """
    n_d_bins = int(np.ceil((d_max - d_min) / res)) + 1
    gap = ALIAS_SPACING_BINS * res
    in_r = (rad >= r_min) & (rad < r_max)
    # Feasible unwrapped-angle interval per point from the pitch bounds.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_a = TWO_PI * z / d_max
        t_b = TWO_PI * z / d_min
    t_lo = np.minimum(t_a, t_b)
    t_hi = np.maximum(t_a, t_b)
    n_lo = np.ceil((t_lo - psi) / TWO_PI).astype(np.int64)
    n_hi = np.floor((t_hi - psi) / TWO_PI).astype(np.int64)
    # spacing(theta) = (2pi)^2|z| / (|theta|(|theta|+2pi)) >= gap up to t_cap
    t_cap = -np.pi + np.sqrt(np.pi * np.pi + TWO_PI * TWO_PI * np.abs(z) / gap)
    n_hi = np.minimum(n_hi, np.floor((t_cap - psi) / TWO_PI).astype(np.int64))
    n_lo = np.maximum(n_lo, np.ceil((-t_cap - psi) / TWO_PI).astype(np.int64))
    counts = np.where(in_r, np.maximum(n_hi - n_lo + 1, 0), 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    pid = np.repeat(np.arange(psi.shape[0], dtype=np.int64), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    turn = n_lo[pid] + (np.arange(total, dtype=np.int64) - np.repeat(starts, counts))
    theta = psi[pid] + TWO_PI * turn.astype(np.float64)
    ok = np.abs(theta) > 1e-12
    pid, theta = pid[ok], theta[ok]
    d = TWO_PI * z[pid] / theta
    ok = (d >= d_min) & (d < d_max)
    pid, d = pid[ok], d[ok]
    ir = np.floor((rad[pid] - r_min) / res + 0.5).astype(np.int64)
    idb = np.floor((d - d_min) / res + 0.5).astype(np.int64)
    idb = np.minimum(idb, n_d_bins - 1)
    return ir * n_d_bins + idb, pid


def _hough_vote_keys_loops(psi, rad, z, r_min, r_max, d_min, d_max, res):
    n_d_bins = int(np.ceil((d_max - d_min) / res)) + 1
    gap = ALIAS_SPACING_BINS * res
    n = psi.shape[0]
    # Pass 1: count feasible votes.
    total = 0
    for i in range(n):
        if rad[i] < r_min or rad[i] >= r_max:
            continue
        t_a = TWO_PI * z[i] / d_max
        t_b = TWO_PI * z[i] / d_min
        t_lo = min(t_a, t_b)
        t_hi = max(t_a, t_b)
        t_cap = -np.pi + np.sqrt(np.pi * np.pi + TWO_PI * TWO_PI * abs(z[i]) / gap)
        n_lo = int(np.ceil((t_lo - psi[i]) / TWO_PI))
        n_hi = int(np.floor((t_hi - psi[i]) / TWO_PI))
        n_hi = min(n_hi, int(np.floor((t_cap - psi[i]) / TWO_PI)))
        n_lo = max(n_lo, int(np.ceil((-t_cap - psi[i]) / TWO_PI)))
        if n_hi >= n_lo:
            total += n_hi - n_lo + 1
    keys = np.empty(total, dtype=np.int64)
    pids = np.empty(total, dtype=np.int64)
    # Pass 2: fill, in the same (point, ascending turn) order as the
    # vectorized path so the outputs are comparable element-wise.
    pos = 0
    for i in range(n):
        if rad[i] < r_min or rad[i] >= r_max:
            continue
        t_a = TWO_PI * z[i] / d_max
        t_b = TWO_PI * z[i] / d_min
        t_lo = min(t_a, t_b)
        t_hi = max(t_a, t_b)
        t_cap = -np.pi + np.sqrt(np.pi * np.pi + TWO_PI * TWO_PI * abs(z[i]) / gap)
        n_lo = int(np.ceil((t_lo - psi[i]) / TWO_PI))
        n_hi = int(np.floor((t_hi - psi[i]) / TWO_PI))
        n_hi = min(n_hi, int(np.floor((t_cap - psi[i]) / TWO_PI)))
        n_lo = max(n_lo, int(np.ceil((-t_cap - psi[i]) / TWO_PI)))
        for turn in range(n_lo, n_hi + 1):
            theta = psi[i] + TWO_PI * turn
            if theta < 1e-12 and theta > -1e-12:
                continue
            d = TWO_PI * z[i] / theta
            if d < d_min or d >= d_max:
                continue
            ir = int(np.floor((rad[i] - r_min) / res + 0.5))
            idb = int(np.floor((d - d_min) / res + 0.5))
            if idb > n_d_bins - 1:
                idb = n_d_bins - 1
            keys[pos] = ir * n_d_bins + idb
            pids[pos] = i
            pos += 1
    return keys[:pos], pids[:pos]


# ---------------------------------------------------------------------------
# Orthogonal point-to-helix distances via damped Newton in the curve
# parameter. Same fixed iteration schedule on both paths, so results are
# bit-identical between backends.
# ---------------------------------------------------------------------------

_NEWTON_ITERS = 16
_NEWTON_STEP_CAP = 0.5


def helix_residuals_numpy(local_pts, theta0, radius, pitch, phase):
    """Orthogonal distance from each point to the helix curve.

    local_pts: (n, 3) in the helix frame; theta0: (n,) initial curve
    parameters (typically the unwrap assignment). Helix: (R cos u, R sin u,
    (d / 2pi) * (u - phase)).
    """
    x = local_pts[:, 0]
    y = local_pts[:, 1]
    z = local_pts[:, 2]
    a = pitch / TWO_PI
    u = theta0.astype(np.float64).copy()
    for _ in range(_NEWTON_ITERS):
        sin_u = np.sin(u)
        cos_u = np.cos(u)
        g = radius * (x * sin_u - y * cos_u) - a * z + a * a * (u - phase)
        h = radius * (x * cos_u + y * sin_u) + a * a
        usable = np.abs(h) > 1e-12
        h_safe = np.where(usable, h, 1.0)
        step = np.where(usable, g / h_safe, np.sign(g) * _NEWTON_STEP_CAP)
        step = np.clip(step, -_NEWTON_STEP_CAP, _NEWTON_STEP_CAP)
        u = u - step
    dx = x - radius * np.cos(u)
    dy = y - radius * np.sin(u)
    dz = z - a * (u - phase)
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _helix_residuals_loops(local_pts, theta0, radius, pitch, phase):
    n = local_pts.shape[0]
    a = pitch / TWO_PI
    out = np.empty(n, dtype=np.float64)
    for i in numba.prange(n):
        x = local_pts[i, 0]
        y = local_pts[i, 1]
        z = local_pts[i, 2]
        u = theta0[i]
        for _ in range(_NEWTON_ITERS):
            sin_u = np.sin(u)
            cos_u = np.cos(u)
            g = radius * (x * sin_u - y * cos_u) - a * z + a * a * (u - phase)
            h = radius * (x * cos_u + y * sin_u) + a * a
            if h > 1e-12 or h < -1e-12:
                step = g / h
            elif g > 0.0:
                step = _NEWTON_STEP_CAP
            elif g < 0.0:
                step = -_NEWTON_STEP_CAP
            else:
                step = 0.0
            if step > _NEWTON_STEP_CAP:
                step = _NEWTON_STEP_CAP
            elif step < -_NEWTON_STEP_CAP:
                step = -_NEWTON_STEP_CAP
            u = u - step
        dx = x - radius * np.cos(u)
        dy = y - radius * np.sin(u)
        dz = z - a * (u - phase)
        out[i] = np.sqrt(dx * dx + dy * dy + dz * dz)
    return out


# ---------------------------------------------------------------------------
# DBSCAN cluster expansion over a precomputed CSR neighborhood graph.
# FIFO queue, ascending point index: fully deterministic.
# ---------------------------------------------------------------------------

UNVISITED = -2
NOISE = -1


def dbscan_expand_numpy(indptr, indices, core):
    n = indptr.shape[0] - 1
    labels = np.full(n, UNVISITED, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    next_id = 0
    for i in range(n):
        if labels[i] != UNVISITED:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        cid = next_id
        next_id += 1
        labels[i] = cid
        queue[0] = i
        head, tail = 0, 1
        while head < tail:
            j = queue[head]
            head += 1
            if not core[j]:
                continue
            for p in range(indptr[j], indptr[j + 1]):
                nb = indices[p]
                if labels[nb] == UNVISITED:
                    labels[nb] = cid
                    queue[tail] = nb
                    tail += 1
                elif labels[nb] == NOISE:
                    labels[nb] = cid
    return labels


_dbscan_expand_loops = dbscan_expand_numpy  # same algorithm; numba just compiles it


# ---------------------------------------------------------------------------
# Backend binding
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    plane_inlier_counts_numba = numba.njit(cache=True, parallel=True)(_plane_inlier_counts_loops)
    hough_vote_keys_numba = numba.njit(cache=True)(_hough_vote_keys_loops)
    helix_residuals_numba = numba.njit(cache=True, parallel=True)(_helix_residuals_loops)
    dbscan_expand_numba = numba.njit(cache=True)(_dbscan_expand_loops)

    plane_inlier_counts = plane_inlier_counts_numba
    hough_vote_keys = hough_vote_keys_numba
    helix_residuals = helix_residuals_numba
    dbscan_expand = dbscan_expand_numba
else:
    plane_inlier_counts = plane_inlier_counts_numpy
    hough_vote_keys = hough_vote_keys_numpy
    helix_residuals = helix_residuals_numpy
    dbscan_expand = dbscan_expand_numpy
