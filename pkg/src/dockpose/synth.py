"""Synthetic scene generation with exact ground truth.

Everything here is deterministic for a fixed seed (counter-based RNG), and
noiseless output satisfies its defining curve to 1e-12, so these generators
double as the verification oracle for the measurement pipeline: a test can
compare a recovered helix, plane, hole axis, or docking pose against the
parameters the scene was built from.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .cloud import CAMERA_FRAME, PointCloud, RigidTransform, axis_angle_rotation
from .errors import ConfigError
from .matching import PoseSolution
from .segment import _rng

TWO_PI = 2.0 * math.pi

# Grid jitter amplitude, as a fraction of one grid step. Jittered grids keep
# surface density uniform without the exact azimuth stacking of a regular
# grid, which would collapse nearest-neighbor distances to zero in 2D
# projections and starve the clustering heuristics.
_JITTER = 0.4

SCENE_KINDS = ("helix", "bolt", "pair")


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of one synthetic scene.

    `kind` picks the generator: a bare thread curve ("helix"), a bolt with
    thread plus shaft surface under a random rigid pose ("bolt"), or a full
    docking pair of flange faces with mounting holes ("pair").
    """

    kind: str = "pair"
    # thread curve
    helix_radius: float = 5.0
    helix_pitch: float = 1.0
    helix_phase: float = 0.0
    helix_turns: int = 4
    points_per_turn: int = 125
    # bolt body; density is kept comparable to the thread ring so the
    # projection's median-kNN eps heuristic serves both structures
    shaft_radius: float = 3.5
    shaft_points: int = 500
    # flange pair
    outer_radius: float = 30.0
    inner_radius: float = 10.0
    hole_count: int = 6
    hole_radius: float = 4.0
    bolt_circle_radius: float = 22.0
    # 1-sigma in-plane displacement of each hole from its nominal spot,
    # independent per hole and per part. Real flanges are not perfectly
    # periodic, and that imperfection is what gives the rotation index a
    # minimum of nonzero width; an exactly periodic pattern scores every
    # rotation that maps the pattern onto itself identically.
    hole_jitter: float = 0.02
    face_points: int = 20000
    bore_depth: float = 3.0
    wall_height: float = 5.0
    wall_points: int = 3500
    # true pose of part A relative to mated
    tilt_deg: float = 0.0
    gap_mm: float = 2.0
    theta_star_deg: float = 0.0
    # corruption
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    # bookkeeping
    seed: int = 0
    camera_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in SCENE_KINDS:
            raise ConfigError(
                f"kind must be one of {'|'.join(SCENE_KINDS)}, got {self.kind!r}"
            )
        positive = (
            "helix_radius",
            "helix_pitch",
            "shaft_radius",
            "outer_radius",
            "inner_radius",
            "hole_radius",
            "bolt_circle_radius",
            "bore_depth",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        at_least_one = ("helix_turns", "points_per_turn", "hole_count", "face_points")
        for name in at_least_one:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        nonneg = (
            "shaft_points",
            "wall_height",
            "wall_points",
            "hole_jitter",
            "tilt_deg",
            "gap_mm",
            "noise_sigma",
        )
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must not be negative")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ConfigError("outlier_fraction must lie in [0, 1)")
        if self.kind == "bolt" and self.shaft_radius >= self.helix_radius:
            raise ConfigError(
                "shaft_radius must stay below helix_radius or the thread "
                "crest would sit inside the shaft surface"
            )
        if self.inner_radius >= self.outer_radius:
            raise ConfigError("inner_radius must stay below outer_radius")
        if self.kind != "pair":
            return
        # hole layout constraints, each named so a config error is actionable
        n, c, rh = self.hole_count, self.bolt_circle_radius, self.hole_radius
        if n >= 2 and 2.0 * c * math.sin(math.pi / n) <= 2.0 * rh:
            raise ConfigError(
                "adjacent holes overlap: 2*bolt_circle_radius*sin(pi/hole_count)"
                f" = {2.0 * c * math.sin(math.pi / n):.3f} must exceed the hole"
                f" diameter 2*hole_radius = {2.0 * rh:.3f}"
            )
        if c + rh >= self.outer_radius:
            raise ConfigError(
                "holes cross the outer rim: bolt_circle_radius + hole_radius"
                f" = {c + rh:.3f} must stay below outer_radius = {self.outer_radius:.3f}"
            )
        if c - rh <= self.inner_radius:
            raise ConfigError(
                "holes cross the inner rim: bolt_circle_radius - hole_radius"
                f" = {c - rh:.3f} must stay above inner_radius = {self.inner_radius:.3f}"
            )

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["camera_offset"] = list(self.camera_offset)
        return d


@dataclass(frozen=True)
class LabeledCloud:
    """A point cloud plus one ground-truth tag per point."""

    cloud: PointCloud
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != len(self.cloud):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.cloud)} points"
            )

    def __len__(self) -> int:
        return len(self.cloud)

    def mask(self, label: str) -> np.ndarray:
        """Boolean selector for one label."""
        return np.array([lb == label for lb in self.labels], dtype=bool)


def _with_noise(points: np.ndarray, sigma: float, rng) -> np.ndarray:
    if sigma <= 0.0:
        return points
    return points + sigma * rng.standard_normal(points.shape)


def gen_helix(spec: SceneSpec) -> LabeledCloud:
    """Sample the ideal thread curve, exactly, then optionally add noise.

    Parameters follow x = R cos(t + phi), y = R sin(t + phi), z = d t / 2 pi
    with t spaced uniformly over the full turn span. The noiseless output
    satisfies that curve to floating-point exactness, which is what makes
    this the reference the curve-recovery tests measure against.
    """
    n = int(spec.helix_turns) * int(spec.points_per_turn)
    t = np.arange(n, dtype=np.float64) * (TWO_PI * spec.helix_turns / n)
    pts = _helix_points(t, spec.helix_radius, spec.helix_pitch, spec.helix_phase)
    pts = _with_noise(pts, spec.noise_sigma, _rng(spec.seed))
    return LabeledCloud(PointCloud(pts, CAMERA_FRAME), ("thread",) * n)


def _helix_points(t: np.ndarray, radius: float, pitch: float, phase: float) -> np.ndarray:
    ang = t + phase
    return np.column_stack(
        (radius * np.cos(ang), radius * np.sin(ang), pitch * t / TWO_PI)
    )


def _surface_grid(rng, n_target: int, width: float, height: float):
    """Jittered 2D grid of about n_target samples over width x height.

    Returns (u, v) in [0, width) x [0, height). Used for developable
    surfaces (cylinders unrolled to a rectangle).
    """
    n_u = max(8, int(round(math.sqrt(n_target * width / max(height, 1e-9)))))
    n_v = max(2, int(round(n_target / n_u)))
    iu, iv = np.meshgrid(np.arange(n_u), np.arange(n_v), indexing="ij")
    iu = iu.ravel().astype(np.float64)
    iv = iv.ravel().astype(np.float64)
    du, dv = width / n_u, height / n_v
    u = (iu + 0.5 + rng.uniform(-_JITTER, _JITTER, iu.size)) * du
    v = (iv + 0.5 + rng.uniform(-_JITTER, _JITTER, iv.size)) * dv
    return u, v


def _cylinder_band(rng, n_target: int, radius: float, z_lo: float, z_hi: float):
    """Jittered sampling of a vertical cylinder surface band."""
    u, v = _surface_grid(rng, n_target, TWO_PI * radius, z_hi - z_lo)
    az = u / radius
    return np.column_stack(
        (radius * np.cos(az), radius * np.sin(az), z_lo + v)
    )


def gen_bolt_scene(spec: SceneSpec) -> tuple[LabeledCloud, dict]:
    """Bolt scan stand-in: jittered thread samples plus the shaft surface,
    placed at a seeded random rigid pose.

    Unlike `gen_helix`, thread samples are jittered along the curve so the
    projected cloud has realistic nearest-neighbor spacing. Truth carries
    the curve parameters and the posed axis line.
    """
    rng = _rng(spec.seed)
    n = int(spec.helix_turns) * int(spec.points_per_turn)
    dt = TWO_PI * spec.helix_turns / n
    t = (np.arange(n, dtype=np.float64) + rng.uniform(-_JITTER, _JITTER, n)) * dt
    thread = _helix_points(t, spec.helix_radius, spec.helix_pitch, spec.helix_phase)
    height = spec.helix_pitch * spec.helix_turns
    if spec.shaft_points > 0:
        shaft = _cylinder_band(rng, spec.shaft_points, spec.shaft_radius, 0.0, height)
    else:
        shaft = np.empty((0, 3))

    pts = np.vstack((thread, shaft))
    labels = ("thread",) * len(thread) + ("shaft",) * len(shaft)
    pts = _with_noise(pts, spec.noise_sigma, rng)

    quat = rng.standard_normal(4)
    rot = Rotation.from_quat(quat / np.linalg.norm(quat)).as_matrix()
    trans = rng.uniform(-20.0, 20.0, 3)
    pts = pts @ rot.T + trans

    truth = {
        "kind": "bolt",
        "radius": spec.helix_radius,
        "pitch": spec.helix_pitch,
        "phase": spec.helix_phase,
        "turns": spec.helix_turns,
        "axis_point": trans.tolist(),
        "axis_dir": rot[:, 2].tolist(),
        "scene_rotation": rot.ravel().tolist(),
        "scene_translation": trans.tolist(),
    }
    return LabeledCloud(PointCloud(pts, CAMERA_FRAME), labels), truth


def _hole_azimuths(count: int, mirrored: bool) -> np.ndarray:
    sign = -1.0 if mirrored else 1.0
    return sign * TWO_PI * np.arange(count, dtype=np.float64) / count


def hole_centers_2d(spec: SceneSpec, mirrored: bool = False) -> np.ndarray:
    """In-plane mounting hole centers, (N, 2). `mirrored` gives the A side."""
    az = _hole_azimuths(spec.hole_count, mirrored)
    return spec.bolt_circle_radius * np.column_stack((np.cos(az), np.sin(az)))


def _flange_cloud(
    spec: SceneSpec, rng, side: str
) -> tuple[np.ndarray, list[str], np.ndarray]:
    """One flange in its local frame: face at z = 0, material at z < 0.

    Point groups, in order: annular face, then each bore wall, then (side A
    only) the outer shaft wall band. The A side mirrors the hole pattern so
    that flipping the part face-down brings hole k over hole k. Also returns
    the jittered in-plane hole centers actually used, (N, 2).
    """
    r_o, r_i, r_h = spec.outer_radius, spec.inner_radius, spec.hole_radius
    centers = hole_centers_2d(spec, mirrored=(side == "A"))
    if spec.hole_jitter > 0:
        centers = centers + spec.hole_jitter * rng.standard_normal(centers.shape)

    usable = math.pi * (r_o**2 - r_i**2) - spec.hole_count * math.pi * r_h**2
    step = math.sqrt(usable / spec.face_points)
    m = int(math.ceil(2.0 * r_o / step))
    gx, gy = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    gx = gx.ravel().astype(np.float64)
    gy = gy.ravel().astype(np.float64)
    x = -r_o + (gx + 0.5 + rng.uniform(-_JITTER, _JITTER, gx.size)) * step
    y = -r_o + (gy + 0.5 + rng.uniform(-_JITTER, _JITTER, gy.size)) * step
    rr = np.hypot(x, y)
    keep = (rr <= r_o) & (rr >= r_i)
    d2 = (x[:, None] - centers[:, 0]) ** 2 + (y[:, None] - centers[:, 1]) ** 2
    keep &= np.all(d2 > r_h**2, axis=1)
    face = np.column_stack((x[keep], y[keep], np.zeros(int(keep.sum()))))

    parts = [face]
    labels = [f"face-{side}"] * len(face)
    per_hole = max(1, int(round(TWO_PI * r_h * spec.bore_depth / step**2)))
    for k in range(spec.hole_count):
        ring = _cylinder_band(rng, per_hole, r_h, -spec.bore_depth, 0.0)
        ring[:, :2] += centers[k]
        parts.append(ring)
        labels.extend([f"hole-wall-{k}"] * len(ring))
    if side == "A" and spec.wall_points > 0 and spec.wall_height > 0:
        wall = _cylinder_band(rng, spec.wall_points, r_o, -spec.wall_height, 0.0)
        parts.append(wall)
        labels.extend(["shaft-wall"] * len(wall))
    return np.vstack(parts), labels, centers


def true_scene_placement(spec: SceneSpec, truth: PoseSolution) -> RigidTransform:
    """Reconstruct where the generator put part A from the corrective pose.

    The corrective transform undoes gap and tilt only; composing it back
    with the mirror flip and the residual hole rotation yields the local to
    world placement of the A geometry.
    """
    flip = axis_angle_rotation(np.array([1.0, 0.0, 0.0]), math.pi)
    spin = axis_angle_rotation(
        np.array([0.0, 0.0, 1.0]), -math.radians(spec.theta_star_deg)
    )
    r_tilt = truth.xf.rotation.T
    rot = r_tilt @ spin @ flip
    trans = -r_tilt @ truth.xf.translation
    return RigidTransform(rotation=rot, translation=trans)


def gen_flange_pair(spec: SceneSpec) -> tuple[LabeledCloud, LabeledCloud, PoseSolution]:
    """Docking pair: fixed face B plus face A hovering at gap/tilt/theta*.

    World frame is B's frame: face plane z = 0, material below, mounting
    holes on the bolt circle. A is the mirror part (material ends up above,
    face looking down), lifted by `gap_mm` along +z, tilted by `tilt_deg`
    about a seeded horizontal axis through its own face center, and turned
    by `theta_star_deg` about its axis so every stud sits that far from its
    hole. The returned pose is the correction a matcher should find: it
    undoes gap and tilt exactly, while theta* is reported separately as the
    residual shaft rotation.
    """
    rng = _rng(spec.seed)
    tilt_az = rng.uniform(0.0, TWO_PI)

    pts_a, labels_a, centers_a = _flange_cloud(spec, rng, "A")
    pts_b, labels_b, centers_b = _flange_cloud(spec, rng, "B")
    pts_a = _with_noise(pts_a, spec.noise_sigma, rng)
    pts_b = _with_noise(pts_b, spec.noise_sigma, rng)

    flip = axis_angle_rotation(np.array([1.0, 0.0, 0.0]), math.pi)
    spin = axis_angle_rotation(
        np.array([0.0, 0.0, 1.0]), -math.radians(spec.theta_star_deg)
    )
    tilt_axis = np.array([math.cos(tilt_az), math.sin(tilt_az), 0.0])
    r_tilt = axis_angle_rotation(tilt_axis, math.radians(spec.tilt_deg))
    rot = r_tilt @ spin @ flip
    trans = np.array([0.0, 0.0, spec.gap_mm])
    pts_a = pts_a @ rot.T + trans

    corrective = RigidTransform(rotation=r_tilt.T, translation=-(r_tilt.T @ trans))
    truth = PoseSolution(
        xf=corrective,
        theta_deg=spec.theta_star_deg,
        eps_pla=0.0,
        eps_cyc=0.0,
        per_hole_dev=(0.0,) * spec.hole_count,
    )
    n = spec.hole_count
    pad = lambda c: np.column_stack((c, np.zeros(n)))  # noqa: E731
    extras = {
        "hole_centers_a": (pad(centers_a) @ rot.T + trans).tolist(),
        "hole_centers_b": pad(centers_b).tolist(),
        "tilt_azimuth": tilt_az,
    }
    part_a = LabeledCloud(PointCloud(pts_a, CAMERA_FRAME), labels_a)
    part_b = LabeledCloud(PointCloud(pts_b, CAMERA_FRAME), labels_b)
    return part_a, part_b, truth, extras


def inject_outliers(
    lc: LabeledCloud, fraction: float, bbox_scale: float = 1.5, seed: int = 0
) -> LabeledCloud:
    """Append uniform junk points so they make up `fraction` of the result.

    The count convention is fraction-of-output: 0.2 on 1000 points appends
    250, leaving 1250 total of which 20% are outliers. Junk is uniform in
    the cloud's bounding box grown by `bbox_scale` about its center, and
    original points keep their labels.
    """
    if not 0.0 <= fraction < 1.0:
        raise ConfigError("outlier fraction must lie in [0, 1)")
    n = len(lc)
    n_out = int(round(fraction * n / (1.0 - fraction)))
    if n_out == 0:
        return lc
    pts = lc.cloud.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center, half = (lo + hi) / 2.0, (hi - lo) * (bbox_scale / 2.0)
    junk = _rng(seed).uniform(center - half, center + half, (n_out, 3))
    merged = np.vstack((pts, junk))
    return LabeledCloud(
        lc.cloud.with_points(merged), lc.labels + ("outlier",) * n_out
    )


@dataclass(frozen=True)
class Scene:
    """Renderable scene: (cloud id, labeled cloud) pairs plus a truth record."""

    clouds: tuple[tuple[str, LabeledCloud], ...]
    truth: dict


def _shift_to_camera(lc: LabeledCloud, offset) -> LabeledCloud:
    off = np.asarray(offset, dtype=np.float64).reshape(3)
    return LabeledCloud(lc.cloud.with_points(lc.cloud.points + off), lc.labels)


def build_scene(spec: SceneSpec) -> Scene:
    """Generate, corrupt, and shift one scene into the camera frame.

    Truth stays in the turbine frame; emitted clouds are what the camera
    would hand the pipeline (turbine coordinates plus the camera offset).
    """
    if spec.kind == "helix":
        lc = gen_helix(spec)
        truth = {
            "kind": "helix",
            "radius": spec.helix_radius,
            "pitch": spec.helix_pitch,
            "phase": spec.helix_phase,
            "turns": spec.helix_turns,
            "axis_point": [0.0, 0.0, 0.0],
            "axis_dir": [0.0, 0.0, 1.0],
        }
        named = [("C", lc)]
    elif spec.kind == "bolt":
        lc, truth = gen_bolt_scene(spec)
        named = [("C", lc)]
    else:
        part_a, part_b, pose, extras = gen_flange_pair(spec)
        placement = true_scene_placement(spec, pose)
        truth = {
            "kind": "pair",
            "corrective_rotation": pose.xf.rotation.ravel().tolist(),
            "corrective_translation": pose.xf.translation.tolist(),
            "theta_star_deg": spec.theta_star_deg,
            "gap_mm": spec.gap_mm,
            "tilt_deg": spec.tilt_deg,
            "scene_rotation": placement.rotation.ravel().tolist(),
            "scene_translation": placement.translation.tolist(),
            "plane_b_normal": [0.0, 0.0, 1.0],
            "plane_b_point": [0.0, 0.0, 0.0],
            # nominal spots; actual holes are displaced by hole_jitter
            "hole_centers_b_nominal": np.column_stack(
                (hole_centers_2d(spec), np.zeros(spec.hole_count))
            ).tolist(),
            **extras,
        }
        named = [("A", part_a), ("B", part_b)]

    out = []
    for i, (cid, lc) in enumerate(named):
        if spec.outlier_fraction > 0.0:
            lc = inject_outliers(
                lc, spec.outlier_fraction, seed=spec.seed + 7919 * (i + 1)
            )
        out.append((cid, _shift_to_camera(lc, spec.camera_offset)))
    truth["spec"] = spec.as_dict()
    return Scene(clouds=tuple(out), truth=truth)


_OFFSET_KEY = "camera_offset"


def parse_scene_items(text: str) -> dict:
    """Parse key = value lines into typed SceneSpec constructor arguments.

    Blank lines and '#' comments are ignored; hyphens in keys are treated
    as underscores. Unknown keys, duplicates, and badly typed values are
    config errors, not warnings, so a typo cannot silently fall back to a
    default.
    """
    fields = {f.name: f for f in dataclasses.fields(SceneSpec)}
    data: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown scene key {key!r}")
        if key in data:
            raise ConfigError(f"line {lineno}: duplicate scene key {key!r}")
        data[key] = _coerce(key, value, fields[key].type, lineno)
    return data


def parse_scene_spec(text: str) -> SceneSpec:
    """Read a key = value scene description into a validated SceneSpec."""
    return SceneSpec(**parse_scene_items(text))


def _coerce(key: str, value: str, type_name: str, lineno: int):
    try:
        if key == _OFFSET_KEY:
            parts = [p for p in value.replace(",", " ").split() if p]
            if len(parts) != 3:
                raise ValueError("need exactly three numbers")
            return tuple(float(p) for p in parts)
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
