"""Minimality checks: feature-count balance and the numerical rank test.

The balance compares image-measurement dimensions against world + pose
dimensions (points contribute 3 / 2 per view, tangents 2 / 1, free lines
4 / 2, poses 6N-7).  The rank test differentiates the full viewing map
(world features and projectivized poses to image measurements) at a real
configuration by central finite differences and reports the singular-value
ratio of the square Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError, SceneSamplingError
from .geometry import (
    CHICAGO,
    KINDS,
    CameraPose,
    SceneConfig,
    WorldScene,
    generate_scene,
    rotation_from_quaternion,
)


@dataclass(frozen=True)
class FeatureCountProblem:
    """Per-feature camera-visibility counts of a candidate pose problem."""

    n_cameras: int
    point_visibilities: tuple[int, ...] = ()
    tangent_visibilities: tuple[int, ...] = ()
    line_visibilities: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_cameras < 2:
            raise InvalidInputError("need at least two cameras")
        for group in (self.point_visibilities, self.tangent_visibilities,
                      self.line_visibilities):
            for c in group:
                if not (0 <= c <= self.n_cameras):
                    raise InvalidInputError("visibility counts must lie in [0, N]")


CHICAGO_COUNTS = FeatureCountProblem(3, (3, 3, 3), (3, 3), ())
CLEVELAND_COUNTS = FeatureCountProblem(3, (3, 3, 3), (), (3,))
THREE_VIEWS_FOUR_POINTS = FeatureCountProblem(3, (3, 3, 3, 3), (), ())


def minimality_balance(problem: FeatureCountProblem) -> int:
    """Measurement-minus-unknown dimension balance.

    Zero means the necessary minimality condition holds; positive means
    overconstrained, negative underconstrained.
    """
    relu = lambda x: max(0, x)
    total = sum(relu(2 * c - 3) for c in problem.point_visibilities)
    total += sum(relu(c - 2) for c in problem.tangent_visibilities)
    total += sum(relu(2 * c - 4) for c in problem.line_visibilities)
    return total - (6 * problem.n_cameras - 7)


# ---------------------------------------------------------------------------
# viewing-map Jacobian
# ---------------------------------------------------------------------------

def _orthonormal_complement(v: np.ndarray) -> np.ndarray:
    """Columns spanning the orthogonal complement of v (v nonzero)."""
    n = v.shape[0]
    u = v / np.linalg.norm(v)
    M = np.eye(n) - np.outer(u, u)
    # QR of the projector yields n-1 independent directions
    q, r = np.linalg.qr(M)
    cols = [q[:, i] for i in range(n) if abs(r[i, i]) > 1e-8]
    return np.stack(cols[: n - 1], axis=1)


@dataclass
class _Chart:
    """Local parametrization of one configuration around its base point."""

    kind: str
    points: np.ndarray            # (3, 3)
    tangents: Optional[np.ndarray]
    line_point: Optional[np.ndarray]
    line_dir: Optional[np.ndarray]
    q2: np.ndarray
    q3: np.ndarray
    t_stack: np.ndarray           # (6,) concatenated t2, t3
    tangent_bases: list = field(default_factory=list)
    q2_basis: np.ndarray = None
    q3_basis: np.ndarray = None
    t_basis: np.ndarray = None
    line_point_basis: np.ndarray = None
    line_dir_basis: np.ndarray = None

    def __post_init__(self):
        if self.tangents is not None:
            self.tangent_bases = [_orthonormal_complement(d) for d in self.tangents]
        if self.line_dir is not None:
            self.line_dir_basis = _orthonormal_complement(self.line_dir)
            self.line_point_basis = _orthonormal_complement(self.line_dir)
        self.q2_basis = _orthonormal_complement(self.q2)
        self.q3_basis = _orthonormal_complement(self.q3)
        self.t_basis = _orthonormal_complement(self.t_stack)

    @property
    def dim(self) -> int:
        return 24

    def apply(self, w: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray],
                                            Optional[tuple[np.ndarray, np.ndarray]],
                                            list[np.ndarray], list[np.ndarray]]:
        """Configuration displaced by chart coordinates w."""
        i = 0
        pts = self.points + w[i:i + 9].reshape(3, 3)
        i += 9
        tangents = None
        line = None
        if self.kind == CHICAGO:
            tangents = []
            for j in range(2):
                d = self.tangents[j] + self.tangent_bases[j] @ w[i:i + 2]
                tangents.append(d / np.linalg.norm(d))
                i += 2
            tangents = np.stack(tangents)
        else:
            P = self.line_point + self.line_point_basis @ w[i:i + 2]
            i += 2
            V = self.line_dir + self.line_dir_basis @ w[i:i + 2]
            V = V / np.linalg.norm(V)
            i += 2
            line = (P, V)
        q2 = self.q2 + self.q2_basis @ w[i:i + 3]
        q2 = q2 / np.linalg.norm(q2)
        i += 3
        q3 = self.q3 + self.q3_basis @ w[i:i + 3]
        q3 = q3 / np.linalg.norm(q3)
        i += 3
        t = self.t_stack + self.t_basis @ w[i:i + 5]
        t = t * (np.linalg.norm(self.t_stack) / np.linalg.norm(t))
        i += 5
        rotations = [np.eye(3), rotation_from_quaternion(q2), rotation_from_quaternion(q3)]
        translations = [np.zeros(3), t[:3], t[3:]]
        return pts, tangents, line, rotations, translations


def _measure(chart: _Chart, w: np.ndarray, base: Optional[np.ndarray] = None) -> np.ndarray:
    """Image measurements of the displaced configuration.

    Points contribute inhomogeneous coordinates, tangents their in-image
    angle, lines a 2-parameter projective chart; with ``base`` given, angle
    and line charts are taken relative to the base measurement, keeping the
    map smooth around the configuration.
    """
    pts, tangents, line, rotations, translations = chart.apply(w)
    out = []
    rays = {}
    for j in range(3):
        for v in range(3):
            ray = rotations[v] @ pts[j] + translations[v]
            if abs(ray[2]) < 1e-12:
                raise DegenerateGeometryError("feature crosses the principal plane")
            rays[(v, j)] = ray
            out.extend([ray[0] / ray[2], ray[1] / ray[2]])
    if chart.kind == CHICAGO:
        for j in range(2):
            for v in range(3):
                ray = rays[(v, j)]
                rd = rotations[v] @ tangents[j]
                du = rd[0] * ray[2] - ray[0] * rd[2]
                dv = rd[1] * ray[2] - ray[1] * rd[2]
                norm = math.hypot(du, dv)
                if norm < 1e-14:
                    raise DegenerateGeometryError("tangent projects to a point")
                out.extend([du / norm, dv / norm])
    else:
        P, V = line
        for v in range(3):
            a = rotations[v] @ P + translations[v]
            b = rotations[v] @ (P + V) + translations[v]
            ell = np.cross(a, b)
            norm = np.linalg.norm(ell)
            if norm < 1e-14:
                raise DegenerateGeometryError("line projects degenerately")
            out.extend(ell / norm)
    y = np.array(out)
    if base is None:
        return y
    return _reduce_measurement(chart, y, base)


def _reduce_measurement(chart: _Chart, y: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Collapse direction-valued measurements onto charts around the base."""
    out = list(y[:18])
    if chart.kind == CHICAGO:
        for j in range(6):
            du, dv = y[18 + 2 * j], y[18 + 2 * j + 1]
            bu, bv = base[18 + 2 * j], base[18 + 2 * j + 1]
            out.append(math.atan2(du * bv - dv * bu, du * bu + dv * bv))
    else:
        for v in range(3):
            ell = y[18 + 3 * v:21 + 3 * v]
            ell0 = base[18 + 3 * v:21 + 3 * v]
            B = _orthonormal_complement(ell0)
            denom = float(ell @ ell0)
            if abs(denom) < 1e-12:
                raise DegenerateGeometryError("line chart degenerate")
            out.extend((B.T @ ell) / denom)
    return np.array(out)


def build_chart(kind: str, scene: WorldScene, poses: Sequence[CameraPose]) -> _Chart:
    if kind not in KINDS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    if kind == CHICAGO:
        if scene.tangents is None or len(scene.tangents) < 2:
            raise InvalidInputError("chicago rank test needs two tangents")
        tangents = np.asarray(scene.tangents[:2], dtype=float)
        line_point = line_dir = None
    else:
        if scene.line is None:
            raise InvalidInputError("cleveland rank test needs a free line")
        tangents = None
        line_point, line_dir = scene.line.P, scene.line.V
    return _Chart(
        kind=kind,
        points=np.asarray(scene.points[:3], dtype=float),
        tangents=tangents,
        line_point=line_point,
        line_dir=line_dir,
        q2=poses[1].q.as_array(),
        q3=poses[2].q.as_array(),
        t_stack=np.concatenate([poses[1].t, poses[2].t]),
    )


def viewing_map_jacobian(
    kind: str,
    scene: WorldScene,
    poses: Sequence[CameraPose],
    fd_step: float = 1e-6,
) -> np.ndarray:
    """24x24 central-difference Jacobian of the viewing map.

    Column order: world points (9), tangent or line coordinates (4), then
    rotation charts (3+3) and the projectivized translation chart (5).
    """
    chart = build_chart(kind, scene, poses)
    base = _measure(chart, np.zeros(chart.dim))
    n = chart.dim
    J = np.zeros((n, n))
    for m in range(n):
        e = np.zeros(n)
        e[m] = fd_step
        yp = _measure(chart, e, base)
        ym = _measure(chart, -e, base)
        J[:, m] = (yp - ym) / (2.0 * fd_step)
    return J


def rank_ratio(J: np.ndarray) -> float:
    s = np.linalg.svd(J, compute_uv=False)
    return float(s[-1] / s[0])


def jacobian_rank_test(
    kind: str,
    seed: int = 0,
    fd_step: float = 1e-6,
    max_draws: int = 10,
) -> float:
    """Singular-value ratio of the viewing map at a random configuration.

    Ratios above 1e-8 demonstrate (numerically) that the problem is minimal;
    degenerate random draws are rejected and resampled.
    """
    for attempt in range(max_draws):
        try:
            scene, poses, _, _ = generate_scene(kind, SceneConfig(seed=seed + attempt))
            J = viewing_map_jacobian(kind, scene, poses, fd_step=fd_step)
            return rank_ratio(J)
        except (DegenerateGeometryError, SceneSamplingError):
            continue
    raise SceneSamplingError("no nondegenerate configuration found for the rank test")
