"""Coefficient-parameter homotopy continuation.

Tracks solutions of F(u; A) = 0 along the straight parameter segment
A(s) = (1-s) A_start + s A_target, with an RK4 predictor on the Davidenko
ODE du/ds = -(dF/du)^{-1} (dF/dA)(A_target - A_start) and a Newton corrector
at each accepted step.  Square systems of this package run through jitted
kernels; any other object exposing ``dim``, ``residual``, ``jacobian`` and
``parameter_derivative`` is tracked by the plain numpy implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .systems import SquareSystem


class PathStatus(IntEnum):
    SUCCESS = _kernels.SUCCESS
    CORRECTOR_FAILURE = _kernels.CORRECTOR_FAILURE
    MIN_STEP_REACHED = _kernels.MIN_STEP_REACHED
    MAX_STEPS_EXCEEDED = _kernels.MAX_STEPS_EXCEEDED
    SINGULAR_ENDPOINT = _kernels.SINGULAR_ENDPOINT


@dataclass(frozen=True)
class TrackerSettings:
    """Step-control parameters of the predictor-corrector tracker."""

    initial_step: float = 0.05
    min_step: float = 1e-7
    max_step: float = 0.25
    max_corrector_iterations: int = 3
    corrector_tolerance: float = 1e-8
    step_growth: float = 2.0
    growth_threshold: int = 5          # consecutive accepted steps before growth
    step_shrink: float = 0.5
    max_steps: int = 10_000
    polish_iterations: int = 10
    final_residual_tolerance: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.min_step <= self.initial_step <= self.max_step < 1.0):
            raise InvalidInputError("need 0 < min_step <= initial_step <= max_step < 1")
        if self.max_corrector_iterations < 1:
            raise InvalidInputError("need at least one corrector iteration")
        if self.step_shrink <= 0.0 or self.step_shrink >= 1.0:
            raise InvalidInputError("step_shrink must lie in (0, 1)")
        if self.step_growth < 1.0:
            raise InvalidInputError("step_growth must be >= 1")

    def to_opts(self) -> np.ndarray:
        return np.array(
            [
                self.initial_step,
                self.min_step,
                self.max_step,
                float(self.max_corrector_iterations),
                self.corrector_tolerance,
                float(self.growth_threshold),
                self.step_growth,
                self.step_shrink,
                float(self.max_steps),
                float(self.polish_iterations),
                self.final_residual_tolerance,
            ]
        )


@dataclass(frozen=True)
class PathResult:
    """Outcome of tracking one solution path.

    ``s_reached`` is 1.0 on completed paths; on failure it marks how far
    along the segment the endpoint (still a valid solution there, residual
    permitting) was left.
    """

    status: PathStatus
    endpoint: np.ndarray
    steps: int
    condition: float
    residual: float
    s_reached: float = 1.0

    @property
    def success(self) -> bool:
        return self.status == PathStatus.SUCCESS


def set_thread_count(threads: int) -> None:
    """Bound the parallelism of batch tracking (results are unaffected)."""
    import numba

    numba.set_num_threads(max(1, int(threads)))


# ---------------------------------------------------------------------------
# fast path for the package's square systems
# ---------------------------------------------------------------------------

def _track_square(
    system: SquareSystem,
    A_start: np.ndarray,
    A_target: np.ndarray,
    start: np.ndarray,
    settings: TrackerSettings,
) -> PathResult:
    E0 = system.extended_params(np.asarray(A_start, dtype=np.complex128))
    E1 = system.extended_params(np.asarray(A_target, dtype=np.complex128))
    u_out = np.empty(system.dim, dtype=np.complex128)
    st, steps, cond, res, s_reached = _kernels.track_one(
        system.sys_id, E0, E1, np.asarray(start, dtype=np.complex128),
        settings.to_opts(), u_out,
    )
    return PathResult(PathStatus(st), u_out, int(steps), float(cond), float(res),
                      float(s_reached))


# ---------------------------------------------------------------------------
# generic implementation (reference semantics, used for toy systems)
# ---------------------------------------------------------------------------

def rk4_predict(system, u: np.ndarray, A0: np.ndarray, dA: np.ndarray, s: float, h: float) -> np.ndarray:
    """One RK4 predictor step of length h from (s, u); raises on singular J."""

    def vel(sv, uv):
        Av = A0 + sv * dA
        J = system.jacobian(uv, Av)
        g = system.parameter_derivative(uv, Av, dA)
        return np.linalg.solve(J, -g)

    k1 = vel(s, u)
    k2 = vel(s + 0.5 * h, u + 0.5 * h * k1)
    k3 = vel(s + 0.5 * h, u + 0.5 * h * k2)
    k4 = vel(s + h, u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _newton_generic(system, u, A, iters, tol, guard=np.inf):
    converged = False
    cond = 0.0
    moved = 0.0
    for _ in range(iters):
        r = system.residual(u, A)
        J = system.jacobian(u, A)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return u, False, np.inf
        cond = float(np.linalg.cond(J))
        u = u + delta
        un = float(np.max(np.abs(u)))
        moved += float(np.max(np.abs(delta)))
        if moved > guard:
            return u, False, cond
        if float(np.max(np.abs(delta))) <= tol * (1.0 + un):
            rn = float(np.max(np.abs(system.residual(u, A))))
            if rn <= tol * (1.0 + un):
                converged = True
                break
    return u, converged, cond


def _track_generic(system, A_start, A_target, start, settings: TrackerSettings) -> PathResult:
    A0 = np.asarray(A_start, dtype=np.complex128)
    A1 = np.asarray(A_target, dtype=np.complex128)
    dA = A1 - A0
    u = np.asarray(start, dtype=np.complex128).copy()
    s = 0.0
    dt = settings.initial_step
    steps = 0
    consecutive = 0
    cond = 0.0
    status = None

    while s < 1.0:
        if steps >= settings.max_steps:
            status = PathStatus.MAX_STEPS_EXCEEDED
            break
        steps += 1
        last = (1.0 - s) <= dt
        h = (1.0 - s) if last else dt
        try:
            upred = rk4_predict(system, u, A0, dA, s, h)
            s_next = 1.0 if last else s + h
            A_next = A1 if last else A0 + s_next * dA
            pred_disp = float(np.max(np.abs(upred - u)))
            guard = 0.5 * pred_disp + 10.0 * settings.corrector_tolerance * (
                1.0 + float(np.max(np.abs(u)))
            )
            upred, ok, cnd = _newton_generic(
                system, upred, A_next, settings.max_corrector_iterations,
                settings.corrector_tolerance, guard,
            )
            if np.isfinite(cnd):
                cond = cnd
        except np.linalg.LinAlgError:
            ok = False
        if ok:
            u = upred
            s = s_next
            consecutive += 1
            if consecutive >= settings.growth_threshold:
                dt = min(dt * settings.step_growth, settings.max_step)
                consecutive = 0
        else:
            consecutive = 0
            dt *= settings.step_shrink
            if dt < settings.min_step:
                status = PathStatus.MIN_STEP_REACHED
                break

    if status is None:
        s = 1.0
        u, _, cnd = _newton_generic(
            system, u, A1, settings.polish_iterations, settings.corrector_tolerance
        )
        if np.isfinite(cnd):
            cond = cnd
        res = float(np.max(np.abs(system.residual(u, A1)))) / (1.0 + float(np.max(np.abs(u))))
        if res < settings.final_residual_tolerance:
            status = PathStatus.SUCCESS
        elif cond > 1e14:
            status = PathStatus.SINGULAR_ENDPOINT
        else:
            status = PathStatus.CORRECTOR_FAILURE
    else:
        A_here = A0 + s * dA
        res = float(np.max(np.abs(system.residual(u, A_here)))) / (1.0 + float(np.max(np.abs(u))))
    return PathResult(status, u, steps, cond, res, s)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def track_path(system, A_start, A_target, start, settings: TrackerSettings | None = None) -> PathResult:
    """Track one start solution from A_start to A_target."""
    settings = settings or TrackerSettings()
    if isinstance(system, SquareSystem):
        return _track_square(system, A_start, A_target, start, settings)
    return _track_generic(system, A_start, A_target, start, settings)


def track_all(
    system,
    A_start,
    A_target,
    starts,
    settings: TrackerSettings | None = None,
    threads: int | None = None,
) -> list[PathResult]:
    """Track every start solution; results are returned in start order and do
    not depend on the execution interleaving."""
    settings = settings or TrackerSettings()
    starts = [np.asarray(s, dtype=np.complex128) for s in starts]
    if not starts:
        return []
    if isinstance(system, SquareSystem):
        if threads is not None:
            set_thread_count(threads)
        U0 = np.stack(starts)
        E0 = system.extended_params(np.asarray(A_start, dtype=np.complex128))
        E1 = system.extended_params(np.asarray(A_target, dtype=np.complex128))
        m, n = U0.shape
        U_out = np.empty((m, n), dtype=np.complex128)
        status = np.empty(m, dtype=np.int64)
        steps = np.empty(m, dtype=np.int64)
        conds = np.empty(m, dtype=np.float64)
        res = np.empty(m, dtype=np.float64)
        s_reached = np.empty(m, dtype=np.float64)
        _kernels.track_many(system.sys_id, E0, E1, U0, settings.to_opts(),
                            U_out, status, steps, conds, res, s_reached)
        return [
            PathResult(PathStatus(int(status[i])), U_out[i].copy(), int(steps[i]),
                       float(conds[i]), float(res[i]), float(s_reached[i]))
            for i in range(m)
        ]
    return [_track_generic(system, A_start, A_target, s, settings) for s in starts]
