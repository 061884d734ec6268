"""Square polynomial systems for the Chicago and Cleveland problems.

Unknown layout (complex):

* Chicago, 26 unknowns: ``q2[0:4]``, ``q3[4:8]``, depths ``alpha[8:16]``
  ordered (point-major, view-minor) skipping the fixed ``alpha_11 = 1``,
  tangent scalars ``eps[16:22]`` for views 1..3 and tangents 1..2, then
  ``mu[22:26]`` for views 2..3 (``mu_1j = 1`` fixed).
* Cleveland, 20 unknowns: ``q2``, ``q3``, ``alpha`` as above, then the line
  point scale ``alpha_p[16]`` and the line direction ``V[17:20]``.

Parameter packing (spec'd external order, complex):

* Chicago, 45 entries: the nine image points in (point-major, view-minor)
  order, three coordinates each, then the six tangent directions in the same
  order.
* Cleveland, 36 entries: the nine points, then the three view lines.

Quaternion scales are pinned by fixed random complex chart equations
``c . q = 1`` (and ``c_V . V = 1``); depth scale by ``alpha_11 = 1`` and
per-tangent line scale by ``mu_1j = 1``.  Rotations enter through the
homogeneous quadratic form P(q), so every residual is polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .errors import DegenerateGeometryError, InvalidInputError
from .geometry import (
    CHICAGO,
    CLEVELAND,
    KINDS,
    CameraPose,
    GroundTruth,
    ProblemInstance,
    line_through,
    quaternion_quadratic_form,
    tangent_line,
)

CHICAGO_DIM = 26
CLEVELAND_DIM = 20
CHICAGO_NPARAMS = 45
CLEVELAND_NPARAMS = 36

# alpha_vj position in the unknown vector; -1 marks the fixed alpha_11 = 1
ALPHA_POS = ((-1, 10, 13), (8, 11, 14), (9, 12, 15))
EPS_POS = ((16, 19), (17, 20), (18, 21))
MU_POS = ((None, None), (22, 24), (23, 25))


def point_offset(v: int, j: int) -> int:
    """Offset of image point (view v, point j) in the parameter vector."""
    return 3 * (3 * j + v)


def tangent_offset(v: int, j: int) -> int:
    return 27 + 3 * (3 * j + v)


def line_offset(v: int) -> int:
    return 27 + 3 * v


def foot_point(n: np.ndarray) -> np.ndarray:
    """Designated point on the image line n: foot of the perpendicular from
    the origin, in the polynomial (unnormalized) form (-ac, -bc, a^2+b^2).

    Kept polynomial in n so parameter derivatives stay exact and the
    dependence is holomorphic along complex parameter paths; the scale is
    absorbed by the line point scale unknown.
    """
    a, b, c = n[0], n[1], n[2]
    return np.array([-a * c, -b * c, a * a + b * b])


def pack_parameters(instance: ProblemInstance) -> np.ndarray:
    """Pack a normalized instance into its parameter vector (complex)."""
    if instance.kind == CHICAGO:
        A = np.empty(CHICAGO_NPARAMS, dtype=np.complex128)
        for j in range(3):
            for v in range(3):
                A[point_offset(v, j):point_offset(v, j) + 3] = instance.points[v, j]
        for j in range(2):
            for v in range(3):
                A[tangent_offset(v, j):tangent_offset(v, j) + 3] = instance.tangents[v, j]
        return A
    A = np.empty(CLEVELAND_NPARAMS, dtype=np.complex128)
    for j in range(3):
        for v in range(3):
            A[point_offset(v, j):point_offset(v, j) + 3] = instance.points[v, j]
    for v in range(3):
        A[line_offset(v):line_offset(v) + 3] = instance.lines[v]
    return A


def unpack_parameters(kind: str, A: np.ndarray) -> ProblemInstance:
    """Inverse of :func:`pack_parameters` for real parameter vectors."""
    if kind not in KINDS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    expected = CHICAGO_NPARAMS if kind == CHICAGO else CLEVELAND_NPARAMS
    if A.shape != (expected,):
        raise InvalidInputError(f"{kind} parameter vector must have length {expected}")
    if np.iscomplexobj(A) and np.any(A.imag != 0.0):
        raise InvalidInputError("cannot unpack complex parameters into an instance")
    A = A.real.astype(float)
    points = np.empty((3, 3, 3))
    for j in range(3):
        for v in range(3):
            points[v, j] = A[point_offset(v, j):point_offset(v, j) + 3]
    if kind == CHICAGO:
        tangents = np.empty((3, 2, 3))
        for j in range(2):
            for v in range(3):
                tangents[v, j] = A[tangent_offset(v, j):tangent_offset(v, j) + 3]
        return ProblemInstance(kind=kind, points=points, tangents=tangents)
    lines = np.empty((3, 3))
    for v in range(3):
        lines[v] = A[line_offset(v):line_offset(v) + 3]
    return ProblemInstance(kind=kind, points=points, lines=lines)


# ---------------------------------------------------------------------------
# the square systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SquareSystem:
    """One problem's square system together with its chart vectors."""

    kind: str
    charts: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown problem kind {self.kind!r}")
        want = 2 if self.kind == CHICAGO else 3
        if len(self.charts) != want:
            raise InvalidInputError(f"{self.kind} system needs {want} chart vectors")
        sizes = (4, 4) if self.kind == CHICAGO else (4, 4, 3)
        for c, m in zip(self.charts, sizes):
            if c.shape != (m,):
                raise InvalidInputError("chart vector has the wrong shape")

    @property
    def dim(self) -> int:
        return CHICAGO_DIM if self.kind == CHICAGO else CLEVELAND_DIM

    @property
    def n_params(self) -> int:
        return CHICAGO_NPARAMS if self.kind == CHICAGO else CLEVELAND_NPARAMS

    @property
    def sys_id(self) -> int:
        return 0 if self.kind == CHICAGO else 1

    def extended_params(self, A: np.ndarray) -> np.ndarray:
        """Internal parameter layout: packed instance data then charts."""
        if A.shape != (self.n_params,):
            raise InvalidInputError(
                f"{self.kind} parameter vector must have length {self.n_params}"
            )
        return np.concatenate([np.asarray(A, dtype=np.complex128)] + [
            c.astype(np.complex128) for c in self.charts
        ])

    def residual(self, u: np.ndarray, A: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim, dtype=np.complex128)
        _kernels.eval_F(self.sys_id, np.asarray(u, dtype=np.complex128),
                        self.extended_params(A), out)
        return out

    def jacobian(self, u: np.ndarray, A: np.ndarray) -> np.ndarray:
        J = np.empty((self.dim, self.dim), dtype=np.complex128)
        _kernels.eval_J(self.sys_id, np.asarray(u, dtype=np.complex128),
                        self.extended_params(A), J)
        return J

    def parameter_derivative(self, u: np.ndarray, A: np.ndarray, dA: np.ndarray) -> np.ndarray:
        """Directional derivative dF/dA . dA at (u, A)."""
        if dA.shape != (self.n_params,):
            raise InvalidInputError("dA must match the parameter dimension")
        dE = np.zeros(self.extended_dim, dtype=np.complex128)
        dE[: self.n_params] = dA
        out = np.empty(self.dim, dtype=np.complex128)
        _kernels.eval_G(self.sys_id, np.asarray(u, dtype=np.complex128),
                        self.extended_params(A), dE, out)
        return out

    @property
    def extended_dim(self) -> int:
        return self.n_params + sum(c.shape[0] for c in self.charts)


def make_system(kind: str, seed: int = 0) -> SquareSystem:
    """System with random complex Gaussian chart vectors."""
    if kind not in KINDS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    rng = np.random.default_rng(seed)
    sizes = (4, 4) if kind == CHICAGO else (4, 4, 3)
    charts = tuple(
        (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2.0)
        for m in sizes
    )
    return SquareSystem(kind=kind, charts=charts)


def chicago_residual(system: SquareSystem, u: np.ndarray, A: np.ndarray) -> np.ndarray:
    if system.kind != CHICAGO:
        raise InvalidInputError("chicago_residual needs a chicago system")
    return system.residual(u, A)


def cleveland_residual(system: SquareSystem, u: np.ndarray, A: np.ndarray) -> np.ndarray:
    if system.kind != CLEVELAND:
        raise InvalidInputError("cleveland_residual needs a cleveland system")
    return system.residual(u, A)


# ---------------------------------------------------------------------------
# straightforward reference evaluation (independent of the fast kernels)
# ---------------------------------------------------------------------------

def _alpha(u: np.ndarray, v: int, j: int):
    pos = ALPHA_POS[v][j]
    return 1.0 + 0.0j if pos < 0 else u[pos]


def residual_reference(system: SquareSystem, u: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Matrix-form re-evaluation of the residual, used as a cross-check.

    Deliberately computes through numpy matrix products rather than the fused
    scalar loops of the fast kernels.
    """
    u = np.asarray(u, dtype=np.complex128)
    A = np.asarray(A, dtype=np.complex128)
    x = np.empty((3, 3, 3), dtype=np.complex128)
    for j in range(3):
        for v in range(3):
            x[v, j] = A[point_offset(v, j):point_offset(v, j) + 3]
    q = {1: u[0:4], 2: u[4:8]}
    P = {v: quaternion_quadratic_form(q[v]) for v in q}
    qq = {v: q[v] @ q[v] for v in q}

    rows = []
    for j in range(2):
        for v in (1, 2):
            lhs = qq[v] * (_alpha(u, v, j) * x[v, j] - _alpha(u, v, 2) * x[v, 2])
            rhs = P[v] @ (_alpha(u, 0, j) * x[0, j] - _alpha(u, 0, 2) * x[0, 2])
            rows.append(lhs - rhs)

    if system.kind == CHICAGO:
        d = np.empty((3, 2, 3), dtype=np.complex128)
        for j in range(2):
            for v in range(3):
                d[v, j] = A[tangent_offset(v, j):tangent_offset(v, j) + 3]
        for j in range(2):
            for v in (1, 2):
                lhs = qq[v] * (u[EPS_POS[v][j]] * x[v, j] + u[MU_POS[v][j]] * d[v, j])
                rhs = P[v] @ (u[EPS_POS[0][j]] * x[0, j] + d[0, j])
                rows.append(lhs - rhs)
        tail = np.array([
            system.charts[0] @ u[0:4] - 1.0,
            system.charts[1] @ u[4:8] - 1.0,
        ])
        return np.concatenate(rows + [tail])

    n = {v: A[line_offset(v):line_offset(v) + 3] for v in range(3)}
    p1 = foot_point(n[0])
    ap = u[16]
    V = u[17:20]
    z = _alpha(u, 0, 2) * x[0, 2] - ap * p1
    plane = np.array([
        _alpha(u, v, 2) * (n[v] @ x[v, 2]) * qq[v] - n[v] @ (P[v] @ z)
        for v in (1, 2)
    ])
    direction = np.array([
        n[0] @ V,
        n[1] @ (P[1] @ V),
        n[2] @ (P[2] @ V),
    ])
    tail = np.array([
        system.charts[0] @ u[0:4] - 1.0,
        system.charts[1] @ u[4:8] - 1.0,
        system.charts[2] @ V - 1.0,
    ])
    return np.concatenate(rows + [plane, direction, tail])


# ---------------------------------------------------------------------------
# per-block normalization (dedup / realness metric support)
# ---------------------------------------------------------------------------

def scale_blocks(kind: str) -> tuple[tuple[int, int], ...]:
    """Index ranges of the projectively-scaled unknown blocks."""
    if kind == CHICAGO:
        return ((0, 4), (4, 8))
    return ((0, 4), (4, 8), (17, 20))


def normalize_blocks(kind: str, u: np.ndarray) -> np.ndarray:
    """Copy of u with each scaled block divided by its largest-modulus entry."""
    out = np.array(u, dtype=np.complex128, copy=True)
    for lo, hi in scale_blocks(kind):
        block = out[lo:hi]
        k = int(np.argmax(np.abs(block)))
        if abs(block[k]) > 0:
            out[lo:hi] = block / block[k]
    return out


# ---------------------------------------------------------------------------
# ground-truth unknowns (substitution oracle support and monodromy seeding)
# ---------------------------------------------------------------------------

def _expand_on_tangent_basis(x: np.ndarray, d: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """Coefficients (lam, nu) with lam*x + nu*d == target (exact in theory)."""
    B = np.stack([x, d], axis=1)
    coef, *_ = np.linalg.lstsq(B, target, rcond=None)
    return coef[0], coef[1]


def ground_truth_unknowns(
    system: SquareSystem, instance: ProblemInstance, gt: GroundTruth
) -> np.ndarray:
    """Exact unknown vector of the generating configuration.

    Depths are rescaled to the alpha_11 = 1 gauge, quaternions onto the chart
    planes, tangent scalars to the mu_1j = 1 gauge.
    """
    if instance.kind != system.kind:
        raise InvalidInputError("instance kind does not match the system")
    u = np.zeros(system.dim, dtype=np.complex128)
    rho = gt.depths[0, 0]
    for v, pose in enumerate(gt.poses):
        qarr = pose.q.as_array().astype(np.complex128)
        scale = system.charts[v] @ qarr
        if abs(scale) < 1e-12:
            raise DegenerateGeometryError("chart nearly orthogonal to the true quaternion")
        u[4 * v:4 * v + 4] = qarr / scale
    for v in range(3):
        for j in range(3):
            pos = ALPHA_POS[v][j]
            if pos >= 0:
                u[pos] = gt.depths[v, j] / rho

    rotations = [np.eye(3), gt.poses[0].rotation(), gt.poses[1].rotation()]
    if system.kind == CHICAGO:
        for j in range(2):
            D = gt.scene.tangents[j]
            lam = np.empty(3, dtype=np.complex128)
            nu = np.empty(3, dtype=np.complex128)
            for v in range(3):
                lam[v], nu[v] = _expand_on_tangent_basis(
                    instance.points[v, j], instance.tangents[v, j], rotations[v] @ D
                )
            if abs(nu[0]) < 1e-12:
                raise DegenerateGeometryError("tangent has no image component in view 1")
            kappa = 1.0 / nu[0]
            for v in range(3):
                u[EPS_POS[v][j]] = kappa * lam[v]
                if v > 0:
                    u[MU_POS[v][j]] = kappa * nu[v]
        return u

    line = gt.scene.line
    p1 = foot_point(instance.lines[0])
    # point on the 3D line projecting to p1: sigma * p1 = P0 + lam * V0
    B = np.stack([p1, -line.V], axis=1)
    coef, *_ = np.linalg.lstsq(B, line.P, rcond=None)
    u[16] = coef[0] / rho
    cv = system.charts[2]
    scale = cv @ line.V.astype(np.complex128)
    if abs(scale) < 1e-12:
        raise DegenerateGeometryError("chart nearly orthogonal to the true line direction")
    u[17:20] = line.V / scale
    return u


# ---------------------------------------------------------------------------
# minors-based verification oracle
# ---------------------------------------------------------------------------

def visible_lines(instance: ProblemInstance) -> np.ndarray:
    """Per-view visible lines.

    Lines 1-3 pass through the point pairs (1,2), (1,3), (2,3); Chicago adds
    the tangent lines at points 1 and 2, Cleveland the given free line.  This
    ordering makes lines {1,2,4} concurrent at point 1 and lines {1,3,5}
    concurrent at point 2, matching the common-point minor constraints.
    """
    n_lines = 5 if instance.kind == CHICAGO else 4
    lines = np.zeros((3, n_lines, 3))
    for v in range(3):
        pts = instance.points[v]
        lines[v, 0] = line_through(pts[0], pts[1])
        lines[v, 1] = line_through(pts[0], pts[2])
        lines[v, 2] = line_through(pts[1], pts[2])
        if instance.kind == CHICAGO:
            lines[v, 3] = tangent_line(pts[0], instance.tangents[v, 0])
            lines[v, 4] = tangent_line(pts[1], instance.tangents[v, 1])
        else:
            lines[v, 3] = instance.lines[v]
    return lines


_COMMON_POINT_SETS = {
    CHICAGO: ((0, 1, 3), (0, 2, 4), (0, 1)),
    CLEVELAND: ((0, 1), (0, 2), (1, 2)),
}


def _normalized_minor_max(M: np.ndarray, k: int) -> float:
    """Max |k x k minor| of M, each normalized by its column norms."""
    rows = range(M.shape[0])
    cols = range(M.shape[1])
    worst = 0.0
    for ri in combinations(rows, k):
        for ci in combinations(cols, k):
            sub = M[np.ix_(ri, ci)]
            denom = 1.0
            for c in range(k):
                denom *= np.linalg.norm(sub[:, c])
            if denom < 1e-30:
                continue
            worst = max(worst, abs(np.linalg.det(sub)) / denom)
    return worst


def minors_oracle(
    poses: tuple[CameraPose, CameraPose], instance: ProblemInstance
) -> float:
    """Max normalized residual of the vanishing-minor formulation.

    Builds the 4x3 stacked back-projected-plane matrices of each visible
    line, then evaluates all 3x3 line-correspondence minors and the 4x4
    common-point minors of the designated concatenations.
    """
    lines = visible_lines(instance)
    n_lines = lines.shape[1]
    mats = []
    cams = [
        (np.eye(3), np.zeros(3)),
        (poses[0].rotation(), poses[0].t),
        (poses[1].rotation(), poses[1].t),
    ]
    for j in range(n_lines):
        cols = []
        for (R, t), ell in zip(cams, lines[:, j]):
            cols.append(np.concatenate([R.T @ ell, [t @ ell]]))
        mats.append(np.stack(cols, axis=1))

    worst = 0.0
    for L in mats:
        worst = max(worst, _normalized_minor_max(L, 3))
    for group in _COMMON_POINT_SETS[instance.kind]:
        stacked = np.concatenate([mats[g] for g in group], axis=1)
        worst = max(worst, _normalized_minor_max(stacked, 4))
    return worst
