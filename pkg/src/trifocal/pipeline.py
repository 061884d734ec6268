"""End-to-end solving and the synthetic experiment battery.

Solution post-processing follows the staged filter real -> chiral ->
tangent-verified; each stage only sees survivors of the previous one, so the
three sets are nested by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, SolverFailureError
from .geometry import (
    CHICAGO,
    CameraPose,
    ProblemInstance,
    TrackTriplet,
    image_angle,
    image_coordinates,
    instance_from_tracks,
    normalize_direction,
    normalize_point,
    project_tangent,
    rotation_from_quaternion,
    triangulate_midpoint,
)
from .monodromy import StartSet
from .systems import ALPHA_POS, normalize_blocks, pack_parameters
from .tracker import TrackerSettings, track_all

REALNESS_TOL = 1e-4
TANGENT_TOL = 1e-2  # rad


@dataclass(frozen=True)
class SolutionRecord:
    """One classified endpoint of a parameter homotopy solve."""

    path_index: int
    real: bool
    chiral: bool
    tangent_verified: bool
    poses: Optional[tuple[CameraPose, CameraPose]]  # ||t2|| = 1; t3 same scale
    depths: Optional[np.ndarray]                    # (3, 3), alpha_11 gauge
    residual: float
    condition: float
    translation_consistency: float = np.nan

    @property
    def pose_pair(self) -> tuple[CameraPose, CameraPose]:
        if self.poses is None:
            raise InvalidInputError("record carries no real pose")
        return self.poses


def census(records: Sequence[SolutionRecord]) -> tuple[int, int, int]:
    """Counts of (real, chiral, tangent-verified) records."""
    n_real = sum(r.real for r in records)
    n_chiral = sum(r.chiral for r in records)
    n_verified = sum(r.tangent_verified for r in records)
    return n_real, n_chiral, n_verified


def _depth_grid(u: np.ndarray) -> np.ndarray:
    depths = np.empty((3, 3))
    for v in range(3):
        for j in range(3):
            pos = ALPHA_POS[v][j]
            depths[v, j] = 1.0 if pos < 0 else u[pos].real
    return depths


def _recover_pose(qn: np.ndarray, x: np.ndarray, depths: np.ndarray, v: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Rotation, translation, and the j=1 vs j=3 recovery discrepancy."""
    qr = qn.real
    R = rotation_from_quaternion(qr)
    t3 = depths[v, 2] * x[v, 2] - R @ (depths[0, 2] * x[0, 2])
    t1 = depths[v, 0] * x[v, 0] - R @ (depths[0, 0] * x[0, 0])
    return R, t3, float(np.max(np.abs(t3 - t1)))


def verify_third_tangent(
    poses: tuple[CameraPose, CameraPose],
    instance: ProblemInstance,
    tol: float = TANGENT_TOL,
) -> bool:
    """Predict the third point's tangent in view 3 from views 1-2.

    Triangulates the third point, intersects the two back-projected tangent
    planes to get the 3D direction, projects into view 3, and compares
    angularly with the unused observed tangent.
    """
    if instance.verification_tangents is None:
        return False
    x = instance.points
    dv = instance.verification_tangents
    pose2, pose3 = poses
    try:
        X = triangulate_midpoint(x[0, 2], x[1, 2], pose2)
        m1 = np.cross(x[0, 2], dv[0])
        m2 = pose2.rotation().T @ np.cross(x[1, 2], dv[1])
        D = np.cross(m1, m2)
        nD = np.linalg.norm(D)
        if nD < 1e-12:
            return False
        d_pred = project_tangent(pose3, X, D / nD)
    except DegenerateGeometryError:
        return False
    cosang = abs(float(np.dot(d_pred, dv[2])))
    return math.acos(np.clip(cosang, -1.0, 1.0)) <= tol


def classify_endpoint(
    path_index: int,
    endpoint: np.ndarray,
    instance: ProblemInstance,
    residual: float,
    condition: float,
    realness_tol: float = REALNESS_TOL,
    tangent_tol: float = TANGENT_TOL,
) -> SolutionRecord:
    """Classify one successful endpoint into a solution record."""
    un = normalize_blocks(instance.kind, endpoint)
    max_im = float(np.max(np.abs(un.imag)))
    max_re = float(np.max(np.abs(un.real)))
    real = max_im < realness_tol * (1.0 + max_re)
    if not real:
        return SolutionRecord(
            path_index=path_index, real=False, chiral=False, tangent_verified=False,
            poses=None, depths=None, residual=residual, condition=condition,
        )

    depths = _depth_grid(un)
    x = instance.points
    try:
        R2, t2, c2 = _recover_pose(un[0:4], x, depths, 1)
        R3, t3, c3 = _recover_pose(un[4:8], x, depths, 2)
    except InvalidInputError:
        # isotropic quaternion (q.q ~ 0): no pose to recover
        return SolutionRecord(
            path_index=path_index, real=True, chiral=False, tangent_verified=False,
            poses=None, depths=depths, residual=residual, condition=condition,
        )
    consistency = max(c2, c3)
    norm_t2 = np.linalg.norm(t2)
    if norm_t2 < 1e-12:
        return SolutionRecord(
            path_index=path_index, real=True, chiral=False, tangent_verified=False,
            poses=None, depths=depths, residual=residual, condition=condition,
            translation_consistency=consistency,
        )
    kappa = 1.0 / norm_t2
    poses = (
        CameraPose.from_matrix(R2, kappa * t2),
        CameraPose.from_matrix(R3, kappa * t3),
    )
    chiral = bool(np.all(depths > 0.0))
    verified = False
    if chiral and instance.kind == CHICAGO:
        verified = verify_third_tangent(poses, instance, tol=tangent_tol)
    return SolutionRecord(
        path_index=path_index, real=True, chiral=chiral, tangent_verified=verified,
        poses=poses, depths=depths, residual=residual, condition=condition,
        translation_consistency=consistency,
    )


def solve_instance(
    instance: ProblemInstance,
    start_set: StartSet,
    settings: Optional[TrackerSettings] = None,
    realness_tol: float = REALNESS_TOL,
    tangent_tol: float = TANGENT_TOL,
    threads: Optional[int] = None,
) -> list[SolutionRecord]:
    """Track all start solutions to the instance and classify the endpoints.

    Raises SolverFailureError when every path fails; failed paths otherwise
    simply produce no record.
    """
    if instance.kind != start_set.kind:
        raise InvalidInputError(
            f"start set is for {start_set.kind!r}, instance is {instance.kind!r}"
        )
    system = start_set.system()
    A_target = pack_parameters(instance)
    results = track_all(
        system, start_set.params, A_target, start_set.solutions, settings, threads=threads
    )
    records = []
    for i, res in enumerate(results):
        if not res.success:
            continue
        records.append(
            classify_endpoint(
                i, res.endpoint, instance, res.residual, res.condition,
                realness_tol=realness_tol, tangent_tol=tangent_tol,
            )
        )
    if not records:
        raise SolverFailureError("all homotopy paths failed")
    return records


def best_verified_record(records: Sequence[SolutionRecord]) -> Optional[SolutionRecord]:
    """Verified record with the smallest residual (chiral fallback)."""
    verified = [r for r in records if r.tangent_verified]
    pool = verified or [r for r in records if r.chiral]
    if not pool:
        return None
    return min(pool, key=lambda r: r.residual)


# ---------------------------------------------------------------------------
# noise and outlier injection
# ---------------------------------------------------------------------------

def _perturb_point(x: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    uv = image_coordinates(x) + rng.normal(0.0, sigma, size=2)
    xn, _ = normalize_point(np.array([uv[0], uv[1], 1.0]))
    return xn


def _rebuild_tangent(x: np.ndarray, angle: float) -> np.ndarray:
    d0 = np.array([math.cos(angle), math.sin(angle), 0.0])
    d = d0 - x * np.dot(x, d0)
    return normalize_direction(d)


def _perturb_line(n: np.ndarray, rng: np.random.Generator, sigma_px_units: float, sigma_rad: float) -> np.ndarray:
    # rotate about the foot point, then offset along the new normal
    a, b, c = n
    planar = math.hypot(a, b)
    if planar < 1e-12:
        return n.copy()
    u0, v0 = -a * c / planar**2, -b * c / planar**2
    theta = rng.normal(0.0, sigma_rad)
    ca, sa = math.cos(theta), math.sin(theta)
    a2, b2 = ca * a - sa * b, sa * a + ca * b
    c2 = -(a2 * u0 + b2 * v0)
    c2 -= rng.normal(0.0, sigma_px_units) * math.hypot(a2, b2)
    return normalize_direction(np.array([a2, b2, c2]))


def inject_noise(
    data,
    sigma_px: float,
    sigma_rad: float,
    seed: int = 0,
    pixels_per_unit: float = 1000.0,
):
    """Gaussian observation noise for an instance or a track list.

    Point locations get isotropic noise of sigma_px pixels (converted to
    normalized units); tangents and orientations are rotated in-image by a
    Gaussian angle of sigma_rad.  Zero sigmas return the input unchanged.
    """
    if sigma_px < 0 or sigma_rad < 0:
        raise InvalidInputError("noise sigmas must be nonnegative")
    if sigma_px == 0.0 and sigma_rad == 0.0:
        return data
    rng = np.random.default_rng(seed)
    sigma_units = sigma_px / pixels_per_unit

    if isinstance(data, ProblemInstance):
        points = np.empty_like(data.points)
        for v in range(3):
            for j in range(3):
                points[v, j] = _perturb_point(data.points[v, j], rng, sigma_units)
        tangents = None
        verification = None
        lines = None
        if data.kind == CHICAGO:
            tangents = np.empty_like(data.tangents)
            for v in range(3):
                for j in range(2):
                    angle = image_angle(data.points[v, j], data.tangents[v, j])
                    tangents[v, j] = _rebuild_tangent(
                        points[v, j], angle + rng.normal(0.0, sigma_rad)
                    )
            if data.verification_tangents is not None:
                verification = np.empty_like(data.verification_tangents)
                for v in range(3):
                    angle = image_angle(data.points[v, 2], data.verification_tangents[v])
                    verification[v] = _rebuild_tangent(
                        points[v, 2], angle + rng.normal(0.0, sigma_rad)
                    )
        else:
            lines = np.empty_like(data.lines)
            for v in range(3):
                lines[v] = _perturb_line(data.lines[v], rng, sigma_units, sigma_rad)
        return ProblemInstance(
            kind=data.kind, points=points, tangents=tangents,
            verification_tangents=verification, lines=lines,
        )

    out = []
    for tr in data:
        uv = tr.uv + rng.normal(0.0, sigma_units, size=tr.uv.shape)
        orientations = None
        if tr.oriented:
            orientations = tr.orientations + rng.normal(0.0, sigma_rad, size=3)
        out.append(TrackTriplet(uv=uv, orientations=orientations))
    return out


def inject_outliers(
    tracks: Sequence[TrackTriplet],
    ratio: float,
    seed: int = 0,
    viewport_half_angle: float = 0.5,
) -> tuple[list[TrackTriplet], np.ndarray]:
    """Replace floor(ratio * N) tracks by uniform in-viewport junk.

    Returns the corrupted list and the ground-truth inlier mask.
    """
    if not (0.0 <= ratio < 1.0):
        raise InvalidInputError("outlier ratio must lie in [0, 1)")
    n = len(tracks)
    n_replace = int(ratio * n)
    rng = np.random.default_rng(seed)
    mask = np.ones(n, dtype=bool)
    out = list(tracks)
    if n_replace == 0:
        return out, mask
    radius = math.tan(viewport_half_angle)
    chosen = rng.choice(n, size=n_replace, replace=False)
    for idx in chosen:
        uv = np.empty((3, 2))
        for v in range(3):
            r = radius * math.sqrt(rng.uniform())
            phi = rng.uniform(0.0, 2.0 * math.pi)
            uv[v] = (r * math.cos(phi), r * math.sin(phi))
        orientations = None
        if tracks[idx].oriented:
            orientations = rng.uniform(0.0, 2.0 * math.pi, size=3)
        out[idx] = TrackTriplet(uv=uv, orientations=orientations)
        mask[idx] = False
    return out, mask


# ---------------------------------------------------------------------------
# cycle-consistent triplet building
# ---------------------------------------------------------------------------

def build_cycle_consistent_tracks(
    matches_12: dict[int, int], matches_23: dict[int, int], matches_13: dict[int, int]
) -> list[tuple[int, int, int]]:
    """Group pairwise matches into triplets closed by a 1->3 match."""
    triplets = []
    for i, j in sorted(matches_12.items()):
        k = matches_23.get(j)
        if k is not None and matches_13.get(i) == k:
            triplets.append((i, j, k))
    return triplets


# ---------------------------------------------------------------------------
# reprojection scoring (vectorized over tracks)
# ---------------------------------------------------------------------------

def reprojection_errors(
    pose2: CameraPose,
    pose3: CameraPose,
    tracks: Sequence[TrackTriplet],
    pixels_per_unit: float = 1000.0,
) -> np.ndarray:
    """Third-view reprojection error in pixels for every track.

    Vectorized midpoint triangulation from views 1-2 plus projection into
    view 3; degenerate tracks get +inf.
    """
    n = len(tracks)
    uv = np.stack([t.uv for t in tracks])  # (n, 3, 2)
    ones = np.ones((n, 1))
    x1 = np.concatenate([uv[:, 0, :], ones], axis=1)
    x2 = np.concatenate([uv[:, 1, :], ones], axis=1)
    d1 = x1 / np.linalg.norm(x1, axis=1, keepdims=True)
    R2, t2 = pose2.rotation(), pose2.t
    R3, t3 = pose3.rotation(), pose3.t
    d2 = x2 @ R2  # rows: R2^T x2
    d2 = d2 / np.linalg.norm(d2, axis=1, keepdims=True)
    c2 = -R2.T @ t2
    cross = np.cross(d1, d2)
    denom = np.einsum("ij,ij->i", cross, cross)
    good = denom > 1e-16
    denom_safe = np.where(good, denom, 1.0)
    s1 = np.einsum("ij,ij->i", np.cross(np.broadcast_to(c2, d1.shape), d2), cross) / denom_safe
    s2 = np.einsum("ij,ij->i", np.cross(np.broadcast_to(c2, d1.shape), d1), cross) / denom_safe
    X = 0.5 * (s1[:, None] * d1 + c2[None, :] + s2[:, None] * d2)
    x3 = X @ R3.T + t3[None, :]
    z_ok = np.abs(x3[:, 2]) > 1e-14
    z_safe = np.where(z_ok, x3[:, 2], 1.0)
    pred = x3[:, :2] / z_safe[:, None]
    err = np.linalg.norm(pred - uv[:, 2, :], axis=1) * pixels_per_unit
    err = np.where(good & z_ok, err, np.inf)
    return err


# ---------------------------------------------------------------------------
# RANSAC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RansacConfig:
    """Trifocal RANSAC parameters (Chicago sampling: 2 oriented + 1 more)."""

    iterations: int = 500
    threshold_px: float = 2.0
    seed: int = 0
    pixels_per_unit: float = 1000.0
    early_exit_inlier_ratio: Optional[float] = None  # stop once reached

    def __post_init__(self):
        if self.threshold_px <= 0:
            raise InvalidInputError("inlier threshold must be positive")
        if self.iterations < 1:
            raise InvalidInputError("need at least one iteration")


@dataclass(frozen=True)
class RansacResult:
    record: SolutionRecord
    inlier_mask: np.ndarray
    iteration: int
    n_real: int
    n_chiral: int
    n_verified: int
    mean_inlier_error: float


def ransac_trifocal(
    tracks: Sequence[TrackTriplet],
    start_set: StartSet,
    config: RansacConfig,
    settings: Optional[TrackerSettings] = None,
    tangent_tol: float = TANGENT_TOL,
    threads: Optional[int] = None,
) -> RansacResult:
    """Highest-inlier-count pose over random minimal samples.

    Ties break by lower mean inlier error, then by earlier iteration, so the
    result is a deterministic function of the seed.
    """
    if start_set.kind != CHICAGO:
        raise InvalidInputError("RANSAC sampling is defined for chicago tracks")
    oriented = [i for i, t in enumerate(tracks) if t.oriented]
    if len(tracks) < 3 or len(oriented) < 2:
        raise InvalidInputError("need at least 3 tracks of which 2 oriented")
    rng = np.random.default_rng(config.seed)
    n = len(tracks)

    best: Optional[RansacResult] = None
    best_key = None
    for it in range(config.iterations):
        pair = rng.choice(len(oriented), size=2, replace=False)
        o1, o2 = oriented[pair[0]], oriented[pair[1]]
        remaining = [i for i in range(n) if i not in (o1, o2)]
        third = remaining[int(rng.integers(0, len(remaining)))]
        try:
            instance = instance_from_tracks(list(tracks), (o1, o2), third)
            records = solve_instance(
                instance, start_set, settings=settings,
                tangent_tol=tangent_tol, threads=threads,
            )
        except (SolverFailureError, DegenerateGeometryError, InvalidInputError):
            continue
        n_real, n_chiral, n_verified = census(records)
        for rec in records:
            if not rec.chiral:
                continue
            errs = reprojection_errors(
                rec.poses[0], rec.poses[1], tracks, config.pixels_per_unit
            )
            inliers = errs < config.threshold_px
            count = int(np.count_nonzero(inliers))
            mean_err = float(np.mean(errs[inliers])) if count else np.inf
            key = (-count, mean_err, it)
            if best_key is None or key < best_key:
                best_key = key
                best = RansacResult(
                    record=rec, inlier_mask=inliers, iteration=it,
                    n_real=n_real, n_chiral=n_chiral, n_verified=n_verified,
                    mean_inlier_error=mean_err,
                )
        if (
            best is not None
            and config.early_exit_inlier_ratio is not None
            and np.count_nonzero(best.inlier_mask) >= config.early_exit_inlier_ratio * n
        ):
            break
    if best is None:
        raise SolverFailureError("no RANSAC iteration produced a usable pose")
    return best
