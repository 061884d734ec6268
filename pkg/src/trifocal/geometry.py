"""Projective camera model, synthetic trifocal scenes, and pose metrics.

Conventions
-----------
The world frame coincides with camera 1; the pose (R_v, t_v) of view v maps
camera-1 coordinates into view v via ``x_cam = R_v X + t_v``.  Observed image
points are unit homogeneous 3-vectors with positive third coordinate, so the
projective depth ``alpha`` in ``alpha * x = R X + t`` is positive exactly when
the point lies in front of the camera.  Tangent directions and line
coefficients are unit vectors with the first nonzero coordinate positive
(their sign carries no depth meaning).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, SceneSamplingError

CHICAGO = "chicago"
CLEVELAND = "cleveland"
KINDS = (CHICAGO, CLEVELAND)

_EPS = 1e-14


# ---------------------------------------------------------------------------
# quaternions and poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quaternion:
    """Quaternion (w, x, y, z); real and unit-norm for actual poses."""

    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @staticmethod
    def from_array(q: np.ndarray) -> "Quaternion":
        return Quaternion(q[0], q[1], q[2], q[3])

    def normalized(self) -> "Quaternion":
        q = self.as_array()
        n = np.linalg.norm(q)
        if n < _EPS:
            raise InvalidInputError("cannot normalize a zero quaternion")
        q = q / n
        # canonical sign: first nonzero coordinate positive
        for c in q:
            if abs(c) > 1e-12:
                if c.real < 0:
                    q = -q
                break
        return Quaternion.from_array(q)


def quaternion_quadratic_form(q: np.ndarray) -> np.ndarray:
    """Homogeneous quadratic form P(q) with R = P(q) / (q . q).

    Polynomial in the entries of q, hence valid for complex q as well.
    """
    a, b, c, d = q[0], q[1], q[2], q[3]
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )


def rotation_from_quaternion(q: Quaternion | np.ndarray) -> np.ndarray:
    """Rotation matrix P(q)/(q . q); orthonormal with det +1 for real q."""
    arr = q.as_array() if isinstance(q, Quaternion) else np.asarray(q)
    qq = np.dot(arr, arr)
    if abs(qq) < _EPS:
        raise InvalidInputError("rotation undefined for (near-)zero quaternion")
    return quaternion_quadratic_form(arr) / qq


def quaternion_from_rotation(R: np.ndarray) -> Quaternion:
    """Unit quaternion of a rotation matrix (Shepperd's method)."""
    t = np.trace(R)
    candidates = [t, R[0, 0], R[1, 1], R[2, 2]]
    case = int(np.argmax(candidates))
    if case == 0:
        r = math.sqrt(1.0 + t)
        s = 0.5 / r
        q = np.array([0.5 * r, (R[2, 1] - R[1, 2]) * s, (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s])
    elif case == 1:
        r = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        s = 0.5 / r
        q = np.array([(R[2, 1] - R[1, 2]) * s, 0.5 * r, (R[0, 1] + R[1, 0]) * s, (R[0, 2] + R[2, 0]) * s])
    elif case == 2:
        r = math.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        s = 0.5 / r
        q = np.array([(R[0, 2] - R[2, 0]) * s, (R[0, 1] + R[1, 0]) * s, 0.5 * r, (R[1, 2] + R[2, 1]) * s])
    else:
        r = math.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        s = 0.5 / r
        q = np.array([(R[1, 0] - R[0, 1]) * s, (R[0, 2] + R[2, 0]) * s, (R[1, 2] + R[2, 1]) * s, 0.5 * r])
    return Quaternion.from_array(q / np.linalg.norm(q)).normalized()


@dataclass(frozen=True)
class CameraPose:
    """Rigid pose mapping camera-1 coordinates to this camera's frame."""

    q: Quaternion
    t: np.ndarray

    def rotation(self) -> np.ndarray:
        return rotation_from_quaternion(self.q)

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(Quaternion(1.0, 0.0, 0.0, 0.0), np.zeros(3))

    @staticmethod
    def from_matrix(R: np.ndarray, t: np.ndarray) -> "CameraPose":
        return CameraPose(quaternion_from_rotation(R), np.asarray(t, dtype=float).copy())


# ---------------------------------------------------------------------------
# homogeneous normalization
# ---------------------------------------------------------------------------

def normalize_point(v: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit-normalize a homogeneous image point keeping z positive.

    Returns (x, scale) with ``scale * x == v`` and sign(scale) == sign(v_z).
    """
    n = np.linalg.norm(v)
    if n < _EPS:
        raise InvalidInputError("cannot normalize a zero vector")
    if abs(v[2]) < 1e-12 * n:
        raise DegenerateGeometryError("point at infinity: principal-plane projection")
    s = n if v[2] > 0 else -n
    return v / s, s


def normalize_direction(v: np.ndarray) -> np.ndarray:
    """Unit-normalize with the first nonzero coordinate positive."""
    n = np.linalg.norm(v)
    if n < _EPS:
        raise InvalidInputError("cannot normalize a zero vector")
    u = v / n
    for c in u:
        if abs(c) > 1e-12:
            if c.real < 0:
                u = -u
            break
    return u


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def project(pose: CameraPose, X: np.ndarray) -> tuple[np.ndarray, float]:
    """Project a 3D point; returns the unit image point and its depth.

    ``alpha * x == R X + t`` holds exactly, with alpha > 0 iff the point is
    in front of the camera.
    """
    v = pose.rotation() @ np.asarray(X, dtype=float) + pose.t
    return normalize_point(v)


def project_tangent(pose: CameraPose, X: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Image direction of a 3D tangent D at X.

    Equals the derivative of the unit-normalized projection along D, i.e. the
    component of R D orthogonal to the viewing ray, unit-normalized with
    first-nonzero-positive sign.
    """
    R = pose.rotation()
    v = R @ np.asarray(X, dtype=float) + pose.t
    x, _ = normalize_point(v)
    rd = R @ np.asarray(D, dtype=float)
    d = rd - x * np.dot(x, rd)
    if np.linalg.norm(d) < 1e-8 * max(np.linalg.norm(rd), _EPS):
        raise DegenerateGeometryError("degenerate tangent: direction along the viewing ray")
    return normalize_direction(d)


def line_through(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Homogeneous line through two image points (unit, sign-normalized)."""
    ell = np.cross(x, y)
    n = np.linalg.norm(ell)
    if n < 1e-10 * max(np.linalg.norm(x) * np.linalg.norm(y), _EPS):
        raise DegenerateGeometryError("line through (nearly) identical points")
    return normalize_direction(ell)


def tangent_line(x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Homogeneous line through point x with direction d."""
    ell = np.cross(x, d)
    n = np.linalg.norm(ell)
    if n < 1e-10 * max(np.linalg.norm(x) * np.linalg.norm(d), _EPS):
        raise DegenerateGeometryError("tangent line undefined: direction parallel to point")
    return normalize_direction(ell)


def triangulate_midpoint(x1: np.ndarray, x2: np.ndarray, pose2: CameraPose) -> np.ndarray:
    """Midpoint triangulation of a point from views 1 and 2.

    Rays are (origin, x1) in camera 1 and (center2, R2^T x2) in camera-1
    coordinates; returns the midpoint of their common perpendicular.
    """
    R2 = pose2.rotation()
    d1 = np.asarray(x1, dtype=float)
    d1 = d1 / np.linalg.norm(d1)
    d2 = R2.T @ np.asarray(x2, dtype=float)
    d2 = d2 / np.linalg.norm(d2)
    c2 = -R2.T @ pose2.t
    cross = np.cross(d1, d2)
    denom = np.dot(cross, cross)
    if denom < 1e-16:
        raise DegenerateGeometryError("triangulation degenerate: parallel rays")
    # O + s1 d1 and C2 + s2 d2 closest points
    rhs = c2  # c2 - origin
    s1 = np.dot(np.cross(rhs, d2), cross) / denom
    s2 = np.dot(np.cross(rhs, d1), cross) / denom
    p1 = s1 * d1
    p2 = c2 + s2 * d2
    return 0.5 * (p1 + p2)


# ---------------------------------------------------------------------------
# scene containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FreeLine3D:
    """3D line as point P plus unit direction V (camera-1 coordinates)."""

    P: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class WorldScene:
    """World features in camera-1 coordinates."""

    points: np.ndarray                    # (n, 3)
    tangents: Optional[np.ndarray] = None  # (n, 3) unit directions
    line: Optional[FreeLine3D] = None


@dataclass(frozen=True)
class ProblemInstance:
    """Normalized image observations of one minimal-problem instance.

    points[v, j] is the unit image point of world point j in view v.
    Chicago carries tangents[v, j] for j in {0, 1} plus an optional third
    verification tangent per view; Cleveland carries one line per view.
    """

    kind: str
    points: np.ndarray                                # (3, 3, 3)
    tangents: Optional[np.ndarray] = None             # (3, 2, 3)
    verification_tangents: Optional[np.ndarray] = None  # (3, 3)
    lines: Optional[np.ndarray] = None                # (3, 3)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown problem kind {self.kind!r}")
        if self.points.shape != (3, 3, 3):
            raise InvalidInputError("instance needs a 3x3 grid of image points")
        if self.kind == CHICAGO and (self.tangents is None or self.tangents.shape != (3, 2, 3)):
            raise InvalidInputError("chicago instance needs tangents of shape (3, 2, 3)")
        if self.kind == CLEVELAND and (self.lines is None or self.lines.shape != (3, 3)):
            raise InvalidInputError("cleveland instance needs one line per view")


@dataclass(frozen=True)
class GroundTruth:
    """Generating poses and depths of a synthetic instance."""

    poses: tuple[CameraPose, CameraPose]  # cameras 2 and 3 relative to camera 1
    depths: np.ndarray                    # (3 views, 3 points)
    scene: WorldScene


@dataclass(frozen=True)
class SceneConfig:
    """Sampling parameters for the synthetic desk-scale protocol."""

    radius_mean: float = 1.0          # m
    radius_sigma: float = 0.010       # m (10 mm)
    lookat_sigma: float = 0.01        # rad
    min_separation_deg: float = 15.0
    volume_side: float = 0.04         # m (4 cm cube)
    seed: int = 0
    pixels_per_unit: float = 1000.0   # normalized-image-unit -> pixel factor
    viewport_half_angle: float = 0.5  # rad
    max_attempts: int = 2000


# ---------------------------------------------------------------------------
# synthetic scene generation
# ---------------------------------------------------------------------------

def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _camera_axes(center: np.ndarray, rng: np.random.Generator, lookat_sigma: float) -> np.ndarray:
    """World->camera rotation for a camera at `center` looking at the origin."""
    look = -center / np.linalg.norm(center)
    # small Gaussian perturbation of the look-at direction
    perturb = rng.standard_normal(3) * lookat_sigma
    look = look + perturb - look * np.dot(look, perturb)
    look = look / np.linalg.norm(look)
    # roll uniform in [0, 2 pi)
    helper = _random_unit(rng)
    while abs(np.dot(helper, look)) > 0.99:
        helper = _random_unit(rng)
    x_axis = np.cross(helper, look)
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(look, x_axis)
    roll = rng.uniform(0.0, 2.0 * math.pi)
    xr = math.cos(roll) * x_axis + math.sin(roll) * y_axis
    yr = -math.sin(roll) * x_axis + math.cos(roll) * y_axis
    return np.stack([xr, yr, look])


def _in_viewport(pose: CameraPose, X: np.ndarray, half_angle: float) -> bool:
    v = pose.rotation() @ X + pose.t
    if v[2] <= 0:
        return False
    return math.atan2(math.hypot(v[0], v[1]), v[2]) < half_angle


def _sample_cameras(config: SceneConfig, rng: np.random.Generator) -> list[CameraPose]:
    min_sep = math.radians(config.min_separation_deg)
    for _ in range(config.max_attempts):
        dirs = [_random_unit(rng) for _ in range(3)]
        ok = all(
            math.acos(np.clip(np.dot(dirs[i], dirs[j]), -1.0, 1.0)) >= min_sep
            for i in range(3)
            for j in range(i + 1, 3)
        )
        if not ok:
            continue
        poses = []
        for d in dirs:
            radius = rng.normal(config.radius_mean, config.radius_sigma)
            center = d * radius
            R = _camera_axes(center, rng, config.lookat_sigma)
            poses.append(CameraPose.from_matrix(R, -R @ center))
        if all(_in_viewport(p, np.zeros(3), config.viewport_half_angle) for p in poses):
            return poses
    raise SceneSamplingError("camera sampling exhausted its attempt budget")


def _sample_feature(
    config: SceneConfig,
    rng: np.random.Generator,
    poses: list[CameraPose],
    with_tangent: bool,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    half = config.volume_side / 2.0
    for _ in range(config.max_attempts):
        X = rng.uniform(-half, half, size=3)
        if not all(_in_viewport(p, X, config.viewport_half_angle) for p in poses):
            continue
        if not with_tangent:
            return X, None
        D = _random_unit(rng)
        ok = True
        for p in poses:
            ray = p.rotation() @ X + p.t
            rd = p.rotation() @ D
            sin_angle = np.linalg.norm(np.cross(ray / np.linalg.norm(ray), rd))
            if sin_angle < 1e-3:
                ok = False
                break
        if ok:
            return X, D
    raise SceneSamplingError("feature sampling exhausted its attempt budget")


def _sample_free_line(
    config: SceneConfig, rng: np.random.Generator, poses: list[CameraPose]
) -> FreeLine3D:
    half = config.volume_side / 2.0
    probe = max(config.volume_side / 4.0, 1e-4)
    for _ in range(config.max_attempts):
        P = rng.uniform(-half, half, size=3)
        V = _random_unit(rng)
        samples = [P, P + probe * V, P - probe * V]
        if all(
            _in_viewport(p, s, config.viewport_half_angle) for p in poses for s in samples
        ):
            return FreeLine3D(P=P, V=V)
    raise SceneSamplingError("free-line sampling exhausted its attempt budget")


def _relativize(poses: list[CameraPose]) -> tuple[np.ndarray, np.ndarray, list[CameraPose]]:
    """Re-express absolute poses relative to camera 1; returns (R1, t1, rel)."""
    R1 = poses[0].rotation()
    t1 = poses[0].t
    rel = [CameraPose.identity()]
    for p in poses[1:]:
        R = p.rotation() @ R1.T
        t = p.t - R @ t1
        rel.append(CameraPose.from_matrix(R, t))
    return R1, t1, rel


def generate_scene(
    kind: str, config: SceneConfig
) -> tuple[WorldScene, list[CameraPose], ProblemInstance, GroundTruth]:
    """Sample a synthetic instance of the requested problem.

    Returns the world scene (camera-1 coordinates), the three camera poses
    (camera 1 is the identity), the normalized instance, and the ground
    truth record carrying relative poses, depths, and for Chicago the unused
    third tangent inside the instance.
    """
    if kind not in KINDS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    rng = np.random.default_rng(config.seed)
    abs_poses = _sample_cameras(config, rng)

    pts, tans = [], []
    for _ in range(3):
        X, D = _sample_feature(config, rng, abs_poses, with_tangent=(kind == CHICAGO))
        pts.append(X)
        if D is not None:
            tans.append(D)
    line = _sample_free_line(config, rng, abs_poses) if kind == CLEVELAND else None

    R1, t1, rel_poses = _relativize(abs_poses)
    # move everything into camera-1 coordinates
    pts_c1 = np.array([R1 @ X + t1 for X in pts])
    tans_c1 = np.array([R1 @ D for D in tans]) if tans else None
    line_c1 = FreeLine3D(P=R1 @ line.P + t1, V=R1 @ line.V) if line is not None else None
    scene = WorldScene(points=pts_c1, tangents=tans_c1, line=line_c1)

    points = np.zeros((3, 3, 3))
    depths = np.zeros((3, 3))
    for v, pose in enumerate(rel_poses):
        for j in range(3):
            x, a = project(pose, pts_c1[j])
            points[v, j] = x
            depths[v, j] = a

    tangents = None
    verification = None
    lines = None
    if kind == CHICAGO:
        all_tangents = np.zeros((3, 3, 3))
        for v, pose in enumerate(rel_poses):
            for j in range(3):
                all_tangents[v, j] = project_tangent(pose, pts_c1[j], tans_c1[j])
        tangents = all_tangents[:, :2, :].copy()
        verification = all_tangents[:, 2, :].copy()
    else:
        lines = np.zeros((3, 3))
        for v, pose in enumerate(rel_poses):
            xa, _ = project(pose, line_c1.P)
            xb, _ = project(pose, line_c1.P + max(config.volume_side / 4.0, 1e-4) * line_c1.V)
            lines[v] = line_through(xa, xb)

    instance = ProblemInstance(
        kind=kind,
        points=points,
        tangents=tangents,
        verification_tangents=verification,
        lines=lines,
    )
    gt = GroundTruth(poses=(rel_poses[1], rel_poses[2]), depths=depths, scene=scene)
    return scene, rel_poses, instance, gt


# ---------------------------------------------------------------------------
# tracks for the RANSAC studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackTriplet:
    """One feature matched across the three views.

    uv[v] holds normalized inhomogeneous image coordinates; orientations, if
    present, are in-image tangent angles in radians.
    """

    uv: np.ndarray                        # (3, 2)
    orientations: Optional[np.ndarray] = None  # (3,)

    @property
    def oriented(self) -> bool:
        return self.orientations is not None

    def point(self, v: int) -> np.ndarray:
        u, w = self.uv[v]
        x, _ = normalize_point(np.array([u, w, 1.0]))
        return x

    def tangent(self, v: int) -> np.ndarray:
        if self.orientations is None:
            raise InvalidInputError("track carries no orientations")
        x = self.point(v)
        d0 = np.array([math.cos(self.orientations[v]), math.sin(self.orientations[v]), 0.0])
        d = d0 - x * np.dot(x, d0)
        return normalize_direction(d)


def image_coordinates(x: np.ndarray) -> np.ndarray:
    """Inhomogeneous (u, v) of a homogeneous image point."""
    if abs(x[2]) < _EPS:
        raise DegenerateGeometryError("point at infinity has no image coordinates")
    return np.array([x[0] / x[2], x[1] / x[2]])


def image_angle(x: np.ndarray, d: np.ndarray) -> float:
    """In-image angle of tangent direction d at point x."""
    du = d[0] * x[2] - x[0] * d[2]
    dv = d[1] * x[2] - x[1] * d[2]
    return math.atan2(dv, du)


def generate_track_set(
    config: SceneConfig, n_tracks: int
) -> tuple[list[TrackTriplet], list[CameraPose], GroundTruth]:
    """Sample one scene with ``n_tracks`` oriented point features.

    All tracks carry orientations; RANSAC experiments draw their minimal
    samples from these.
    """
    rng = np.random.default_rng(config.seed)
    abs_poses = _sample_cameras(config, rng)
    feats = [_sample_feature(config, rng, abs_poses, with_tangent=True) for _ in range(n_tracks)]
    R1, t1, rel_poses = _relativize(abs_poses)
    pts_c1 = np.array([R1 @ X + t1 for X, _ in feats])
    tans_c1 = np.array([R1 @ D for _, D in feats])

    tracks = []
    depths = np.zeros((3, min(n_tracks, 3)))
    for i in range(n_tracks):
        uv = np.zeros((3, 2))
        ang = np.zeros(3)
        for v, pose in enumerate(rel_poses):
            x, a = project(pose, pts_c1[i])
            d = project_tangent(pose, pts_c1[i], tans_c1[i])
            uv[v] = image_coordinates(x)
            ang[v] = image_angle(x, d)
            if i < 3:
                depths[v, i] = a
        tracks.append(TrackTriplet(uv=uv, orientations=ang))

    scene = WorldScene(points=pts_c1, tangents=tans_c1, line=None)
    gt = GroundTruth(poses=(rel_poses[1], rel_poses[2]), depths=depths, scene=scene)
    return tracks, rel_poses, gt


def instance_from_tracks(
    tracks: list[TrackTriplet], oriented_pair: tuple[int, int], plain: int
) -> ProblemInstance:
    """Assemble a Chicago instance from two oriented tracks and one more."""
    i0, i1 = oriented_pair
    chosen = [tracks[i0], tracks[i1], tracks[plain]]
    points = np.zeros((3, 3, 3))
    tangents = np.zeros((3, 2, 3))
    for v in range(3):
        for j, tr in enumerate(chosen):
            points[v, j] = tr.point(v)
        tangents[v, 0] = chosen[0].tangent(v)
        tangents[v, 1] = chosen[1].tangent(v)
    verification = None
    if chosen[2].oriented:
        verification = np.array([chosen[2].tangent(v) for v in range(3)])
    return ProblemInstance(
        kind=CHICAGO,
        points=points,
        tangents=tangents,
        verification_tangents=verification,
    )


# ---------------------------------------------------------------------------
# error metrics
# ---------------------------------------------------------------------------

def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle of a rotation matrix, in [0, pi]."""
    c = (np.trace(R) - 1.0) / 2.0
    return math.acos(np.clip(c, -1.0, 1.0))


def pose_error(
    est: tuple[CameraPose, CameraPose], gt: tuple[CameraPose, CameraPose]
) -> tuple[float, float]:
    """Max angular rotation / translation error over cameras 2 and 3.

    Rotation error is the rotation angle of R_est R_gt^T (twice the angle
    between the unit quaternions), computed stably as
    4 atan2(|q_e - q_g|, |q_e + q_g|) with the quaternion signs aligned;
    translation error is the angle between unit translation vectors,
    invariant to positive scaling.
    """
    rot_err = 0.0
    transl_err = 0.0
    for e, g in zip(est, gt):
        ne, ng = np.linalg.norm(e.t), np.linalg.norm(g.t)
        if ne < _EPS or ng < _EPS:
            raise InvalidInputError("pose_error undefined for zero translation")
        qe = e.q.as_array()
        qe = qe / np.linalg.norm(qe)
        qg = g.q.as_array()
        qg = qg / np.linalg.norm(qg)
        if np.dot(qe, qg) < 0:
            qg = -qg
        rot = 4.0 * math.atan2(np.linalg.norm(qe - qg), np.linalg.norm(qe + qg))
        rot_err = max(rot_err, rot)
        ue, ug = e.t / ne, g.t / ng
        transl = 2.0 * math.atan2(np.linalg.norm(ue - ug), np.linalg.norm(ue + ug))
        transl_err = max(transl_err, transl)
    return rot_err, transl_err


def reprojection_error(
    pose2: CameraPose,
    pose3: CameraPose,
    track: TrackTriplet,
    pixels_per_unit: float = 1000.0,
) -> float:
    """Predict the third-view feature from views 1-2, in pixels.

    Triangulates the point from the first two views (midpoint of the common
    perpendicular), projects into view 3, and returns the pixel distance to
    the observed third feature.
    """
    x1 = track.point(0)
    x2 = track.point(1)
    X = triangulate_midpoint(x1, x2, pose2)
    x3_pred, _ = project(pose3, X)
    delta = image_coordinates(x3_pred) - track.uv[2]
    return float(np.linalg.norm(delta) * pixels_per_unit)


# ---------------------------------------------------------------------------
# instance file format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_instance(
    instance: ProblemInstance, gt: Optional[GroundTruth] = None
) -> str:
    """Serialize an instance (17 significant digits, one entity per line)."""
    out = [instance.kind]
    for v in range(3):
        for j in range(3):
            x = instance.points[v, j]
            out.append(f"p {v + 1} {j + 1} {_fmt(x[0])} {_fmt(x[1])} {_fmt(x[2])}")
    if instance.kind == CHICAGO:
        for v in range(3):
            for j in range(2):
                d = instance.tangents[v, j]
                out.append(f"d {v + 1} {j + 1} {_fmt(d[0])} {_fmt(d[1])} {_fmt(d[2])}")
        if instance.verification_tangents is not None:
            for v in range(3):
                d = instance.verification_tangents[v]
                out.append(f"d {v + 1} 3 {_fmt(d[0])} {_fmt(d[1])} {_fmt(d[2])}")
    else:
        for v in range(3):
            n = instance.lines[v]
            out.append(f"l {v + 1} {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")
    if gt is not None:
        for i, pose in enumerate(gt.poses, start=2):
            q = pose.q
            out.append(f"q {i} {_fmt(q.w)} {_fmt(q.x)} {_fmt(q.y)} {_fmt(q.z)}")
        for i, pose in enumerate(gt.poses, start=2):
            t = pose.t
            out.append(f"t {i} {_fmt(t[0])} {_fmt(t[1])} {_fmt(t[2])}")
    return "\n".join(out) + "\n"


def write_instance(path, instance: ProblemInstance, gt: Optional[GroundTruth] = None) -> None:
    with open(path, "w") as fh:
        fh.write(format_instance(instance, gt))


def parse_instance(text: str) -> tuple[ProblemInstance, Optional[tuple[CameraPose, CameraPose]]]:
    """Parse the instance text format; returns (instance, gt poses or None)."""
    kind = None
    points = np.full((3, 3, 3), np.nan)
    tangents = np.full((3, 3, 3), np.nan)
    lines = np.full((3, 3), np.nan)
    quats: dict[int, np.ndarray] = {}
    transls: dict[int, np.ndarray] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if kind is None:
            if line not in KINDS:
                raise InvalidInputError(f"unknown problem kind {line!r}")
            kind = line
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "p":
                v, j = int(parts[1]) - 1, int(parts[2]) - 1
                points[v, j] = [float(s) for s in parts[3:6]]
            elif tag == "d":
                v, j = int(parts[1]) - 1, int(parts[2]) - 1
                tangents[v, j] = [float(s) for s in parts[3:6]]
            elif tag == "l":
                v = int(parts[1]) - 1
                lines[v] = [float(s) for s in parts[2:5]]
            elif tag == "q":
                quats[int(parts[1])] = np.array([float(s) for s in parts[2:6]])
            elif tag == "t":
                transls[int(parts[1])] = np.array([float(s) for s in parts[2:5]])
            else:
                raise InvalidInputError(f"unknown record tag {tag!r}")
        except (IndexError, ValueError) as exc:
            raise InvalidInputError(f"malformed instance line: {raw!r}") from exc
    if kind is None:
        raise InvalidInputError("instance file is empty")
    if np.isnan(points).any():
        raise InvalidInputError("instance is missing image points")
    if kind == CHICAGO:
        if np.isnan(tangents[:, :2]).any():
            raise InvalidInputError("chicago instance is missing tangents")
        verification = None if np.isnan(tangents[:, 2]).any() else tangents[:, 2].copy()
        instance = ProblemInstance(
            kind=kind,
            points=points,
            tangents=tangents[:, :2].copy(),
            verification_tangents=verification,
        )
    else:
        if np.isnan(lines).any():
            raise InvalidInputError("cleveland instance is missing lines")
        instance = ProblemInstance(kind=kind, points=points, lines=lines)
    gt_poses = None
    if quats.keys() == {2, 3} and transls.keys() == {2, 3}:
        gt_poses = tuple(
            CameraPose(Quaternion.from_array(quats[i]), transls[i]) for i in (2, 3)
        )
    return instance, gt_poses


def read_instance(path) -> tuple[ProblemInstance, Optional[tuple[CameraPose, CameraPose]]]:
    with open(path) as fh:
        return parse_instance(fh.read())


# ---------------------------------------------------------------------------
# tracks file format
# ---------------------------------------------------------------------------

def format_tracks(tracks: list[TrackTriplet]) -> str:
    out = []
    for i, tr in enumerate(tracks):
        fields = [f"t {i + 1}"]
        for v in range(3):
            fields.append(f"{_fmt(tr.uv[v, 0])} {_fmt(tr.uv[v, 1])}")
            if tr.oriented:
                fields.append(_fmt(tr.orientations[v]))
        out.append("  ".join(fields))
    return "\n".join(out) + "\n"


def write_tracks(path, tracks: list[TrackTriplet]) -> None:
    with open(path, "w") as fh:
        fh.write(format_tracks(tracks))


def parse_tracks(text: str) -> list[TrackTriplet]:
    tracks = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "t":
            raise InvalidInputError(f"unknown record tag {parts[0]!r} in tracks file")
        values = [float(s) for s in parts[2:]]
        if len(values) == 6:
            uv = np.array(values).reshape(3, 2)
            tracks.append(TrackTriplet(uv=uv))
        elif len(values) == 9:
            arr = np.array(values).reshape(3, 3)
            tracks.append(TrackTriplet(uv=arr[:, :2].copy(), orientations=arr[:, 2].copy()))
        else:
            raise InvalidInputError(f"malformed track line: {raw!r}")
    return tracks


def read_tracks(path) -> list[TrackTriplet]:
    with open(path) as fh:
        return parse_tracks(fh.read())
