"""Ab-initio start sets via monodromy loops, and their certification.

A single seed solution at a random complex base point is transported around
triangle loops in parameter space; endpoints of each loop are merged into the
solution set until it reaches the problem's algebraic degree (312 for
Chicago, 216 for Cleveland) or stops growing.  Reaching the target together
with loop closure (a random loop permutes the set) is the numerical
certification of the degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CertificationIncompleteError, InvalidInputError, SolverFailureError
from .geometry import CHICAGO, CLEVELAND, KINDS, SceneConfig, generate_scene
from .systems import (
    SquareSystem,
    ground_truth_unknowns,
    make_system,
    normalize_blocks,
    pack_parameters,
    scale_blocks,
)
from .tracker import TrackerSettings, track_all, track_path

TARGET_DEGREE = {CHICAGO: 312, CLEVELAND: 216}

DEDUP_TOL = 1e-6
SEED_RESIDUAL_TOL = 1e-10


@dataclass
class StartSet:
    """Certified solution list at a generic complex base parameter point."""

    kind: str
    params: np.ndarray                 # base parameters (complex)
    charts: tuple[np.ndarray, ...]
    solutions: np.ndarray              # (n_solutions, dim) complex
    seed: int = 0
    loops: int = 0
    stagnation: int = 0

    @property
    def complete(self) -> bool:
        return len(self.solutions) == TARGET_DEGREE[self.kind]

    def system(self) -> SquareSystem:
        return SquareSystem(kind=self.kind, charts=self.charts)


def _random_params(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def generate_seed_pair(
    kind: str,
    seed: int = 0,
    settings: Optional[TrackerSettings] = None,
    max_attempts: int = 10,
) -> tuple[SquareSystem, np.ndarray, np.ndarray]:
    """Build one (system, base parameters, solution) triple.

    Derives the exact unknowns of a random synthetic scene, then carries them
    to a fully complex random parameter point by one homotopy; retries with a
    fresh scene on tracking failure.
    """
    if kind not in KINDS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    settings = settings or TrackerSettings()
    rng = np.random.default_rng(seed)
    for attempt in range(max_attempts):
        scene_seed = int(rng.integers(0, 2**62))
        system = make_system(kind, seed=int(rng.integers(0, 2**62)))
        try:
            _, _, instance, gt = generate_scene(kind, SceneConfig(seed=scene_seed))
            u_real = ground_truth_unknowns(system, instance, gt)
        except Exception:
            continue
        A_real = pack_parameters(instance)
        r0 = system.residual(u_real, A_real)
        if np.max(np.abs(r0)) > SEED_RESIDUAL_TOL:
            continue
        A_star = _random_params(rng, system.n_params)
        result = track_path(system, A_real, A_star, u_real, settings)
        if not result.success:
            continue
        if np.max(np.abs(system.residual(result.endpoint, A_star))) <= SEED_RESIDUAL_TOL:
            return system, A_star, result.endpoint
    raise SolverFailureError(
        f"could not build a {kind} seed pair in {max_attempts} attempts"
    )


# ---------------------------------------------------------------------------
# dedup merging
# ---------------------------------------------------------------------------

class _SolutionPool:
    """Growing solution set with the per-block-normalized dedup metric."""

    def __init__(self, kind: str, dim: int, tol: float = DEDUP_TOL):
        self.kind = kind
        self.tol = tol
        self.raw = np.empty((0, dim), dtype=np.complex128)
        self.normalized = np.empty((0, dim), dtype=np.complex128)

    def __len__(self) -> int:
        return self.raw.shape[0]

    def contains(self, candidate_normalized: np.ndarray) -> bool:
        if len(self) == 0:
            return False
        d = np.max(np.abs(self.normalized - candidate_normalized[None, :]), axis=1)
        return bool(np.min(d) < self.tol)

    def add(self, candidate: np.ndarray) -> bool:
        cn = normalize_blocks(self.kind, candidate)
        if self.contains(cn):
            return False
        self.raw = np.vstack([self.raw, candidate[None, :]])
        self.normalized = np.vstack([self.normalized, cn[None, :]])
        return True

    def min_separation(self) -> float:
        if len(self) < 2:
            return np.inf
        best = np.inf
        for i in range(len(self)):
            d = np.max(np.abs(self.normalized[i + 1:] - self.normalized[i][None, :]), axis=1)
            if d.size:
                best = min(best, float(np.min(d)))
        return best


def monodromy_solve(
    kind: str,
    seed_pair: tuple[SquareSystem, np.ndarray, np.ndarray],
    settings: Optional[TrackerSettings] = None,
    target_degree: Optional[int] = None,
    seed: int = 0,
    stagnation_limit: int = 10,
    max_loops: int = 400,
    threads: Optional[int] = None,
) -> StartSet:
    """Populate the solution set at the base point by triangle monodromy loops.

    Stops when the set reaches ``target_degree`` or ``stagnation_limit``
    consecutive loops add nothing; the returned set is flagged complete only
    in the former case.
    """
    system, A_star, u_star = seed_pair
    if system.kind != kind:
        raise InvalidInputError("seed pair kind does not match")
    settings = settings or TrackerSettings()
    target = TARGET_DEGREE[kind] if target_degree is None else target_degree
    rng = np.random.default_rng(seed)

    pool = _SolutionPool(kind, system.dim)
    pool.add(np.asarray(u_star, dtype=np.complex128))

    loops = 0
    stagnant = 0
    while len(pool) < target and stagnant < stagnation_limit and loops < max_loops:
        loops += 1
        A1 = _random_params(rng, system.n_params)
        A2 = _random_params(rng, system.n_params)
        current = pool.raw.copy()
        transported = current
        for A_from, A_to in ((A_star, A1), (A1, A2), (A2, A_star)):
            results = track_all(system, A_from, A_to, transported, settings, threads=threads)
            transported = np.array(
                [r.endpoint for r in results if r.success], dtype=np.complex128
            ).reshape(-1, system.dim)
            if transported.shape[0] == 0:
                break
        added = 0
        for endpoint in transported:
            if np.max(np.abs(system.residual(endpoint, A_star))) > SEED_RESIDUAL_TOL:
                continue
            if pool.add(endpoint):
                added += 1
                if len(pool) >= target:
                    break
        stagnant = 0 if added else stagnant + 1

    return StartSet(
        kind=kind,
        params=np.asarray(A_star, dtype=np.complex128),
        charts=system.charts,
        solutions=pool.raw,
        seed=seed,
        loops=loops,
        stagnation=stagnant,
    )


def _careful_settings(settings: TrackerSettings) -> TrackerSettings:
    """Slower step control for paths that fail under the regular settings."""
    return TrackerSettings(
        initial_step=min(settings.initial_step, 0.01),
        min_step=1e-10,
        max_step=settings.max_step,
        max_corrector_iterations=max(settings.max_corrector_iterations, 5),
        corrector_tolerance=settings.corrector_tolerance,
        max_steps=max(settings.max_steps, 50_000),
        polish_iterations=settings.polish_iterations,
        final_residual_tolerance=settings.final_residual_tolerance,
    )


def _random_charts(kind: str, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    sizes = (4, 4) if kind == CHICAGO else (4, 4, 3)
    return tuple(
        (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2.0)
        for m in sizes
    )


def _rescale_to_charts(kind: str, u: np.ndarray, charts) -> np.ndarray:
    """Move the projectively-scaled blocks of u onto new chart planes."""
    out = np.array(u, dtype=np.complex128, copy=True)
    for (lo, hi), c in zip(scale_blocks(kind), charts):
        denom = c @ out[lo:hi]
        if abs(denom) < 1e-12 * (1.0 + float(np.max(np.abs(out[lo:hi])))):
            raise InvalidInputError("chart nearly orthogonal to the block")
        out[lo:hi] = out[lo:hi] / denom
    return out


def _chart_hop_rescue(system, A_from, A_to, start, fail_result, settings, seed):
    """Re-chart a stuck path and continue it along the same segment.

    A path whose coordinates blow up mid-segment is an artifact of the fixed
    affine charts; the underlying projective path is fine.  Resume from the
    stall point under fresh random charts, then map the endpoint back.
    """
    rng = np.random.default_rng(seed)
    careful = _careful_settings(settings)
    resumable = fail_result.residual < 1e-9 and fail_result.s_reached > 0.0
    plans = [(fail_result.s_reached, fail_result.endpoint), (0.0, start)] if resumable \
        else [(0.0, start)]
    for _ in range(3):
        charts = _random_charts(system.kind, rng)
        alt = SquareSystem(kind=system.kind, charts=charts)
        for s0, u0 in plans:
            A_mid = A_from + s0 * (A_to - A_from)
            try:
                u0_alt = _rescale_to_charts(system.kind, u0, charts)
            except InvalidInputError:
                continue
            hop = track_path(alt, A_mid, A_to, u0_alt, careful)
            if not hop.success:
                continue
            try:
                back = _rescale_to_charts(system.kind, hop.endpoint, system.charts)
            except InvalidInputError:
                continue
            polished = track_path(system, A_to, A_to, back, settings)
            if polished.success:
                return polished.endpoint
    return None


def _track_edge_with_retry(system, A_from, A_to, starts, settings, threads,
                           rescue_seed: int = 0):
    """Track a batch; failed paths get careful settings, then a chart hop.

    Returns (endpoints, all_ok); endpoints keep the start order.
    """
    results = track_all(system, A_from, A_to, starts, settings, threads=threads)
    endpoints = np.array([r.endpoint for r in results]).reshape(-1, system.dim)
    failed = [i for i, r in enumerate(results) if not r.success]
    if failed:
        retry = track_all(system, A_from, A_to, [starts[i] for i in failed],
                          _careful_settings(settings), threads=threads)
        remaining = []
        for i, r in zip(failed, retry):
            if r.success:
                endpoints[i] = r.endpoint
            else:
                rescued = _chart_hop_rescue(
                    system, A_from, A_to, starts[i], r, settings,
                    seed=rescue_seed * 1009 + i,
                )
                if rescued is not None:
                    endpoints[i] = rescued
                else:
                    remaining.append(i)
        failed = remaining
    return endpoints, not failed


def verify_closure(
    start_set: StartSet,
    settings: Optional[TrackerSettings] = None,
    seed: int = 1,
    attempts: int = 6,
    threads: Optional[int] = None,
) -> bool:
    """Check the defining monodromy property: a random loop permutes the set.

    Tracks every solution around a fresh triangle (re-tracking stragglers
    with smaller steps); passes when every path of some attempted loop
    succeeds and the endpoints match the set one-to-one.
    """
    settings = settings or TrackerSettings()
    system = start_set.system()
    rng = np.random.default_rng(seed)
    m = len(start_set.solutions)
    normalized = np.array([
        normalize_blocks(start_set.kind, s) for s in start_set.solutions
    ])
    for attempt in range(attempts):
        A1 = _random_params(rng, system.n_params)
        A2 = _random_params(rng, system.n_params)
        transported = start_set.solutions
        ok = True
        for leg, (A_from, A_to) in enumerate(
            ((start_set.params, A1), (A1, A2), (A2, start_set.params))
        ):
            transported, edge_ok = _track_edge_with_retry(
                system, A_from, A_to, transported, settings, threads,
                rescue_seed=seed * 100 + attempt * 10 + leg,
            )
            if not edge_ok:
                ok = False
                break
        if not ok:
            continue
        matched = set()
        for endpoint in transported:
            en = normalize_blocks(start_set.kind, endpoint)
            d = np.max(np.abs(normalized - en[None, :]), axis=1)
            idx = int(np.argmin(d))
            if d[idx] >= DEDUP_TOL or idx in matched:
                return False
            matched.add(idx)
        return len(matched) == m
    return False


def certify(
    kind: str,
    seed: int = 0,
    settings: Optional[TrackerSettings] = None,
    threads: Optional[int] = None,
    check_closure: bool = True,
) -> StartSet:
    """Full ab-initio run: seed pair, monodromy to the target degree, closure.

    Raises CertificationIncompleteError when the degree target is not reached
    or the closure check fails.
    """
    settings = settings or TrackerSettings()
    pair = generate_seed_pair(kind, seed=seed, settings=settings)
    start_set = monodromy_solve(
        kind, pair, settings=settings, seed=seed + 1, threads=threads
    )
    if not start_set.complete:
        raise CertificationIncompleteError(
            f"{kind}: reached {len(start_set.solutions)} of "
            f"{TARGET_DEGREE[kind]} solutions after {start_set.loops} loops"
        )
    if check_closure and not verify_closure(
        start_set, settings=settings, seed=seed + 2, threads=threads
    ):
        raise CertificationIncompleteError(f"{kind}: loop-closure check failed")
    return start_set


# ---------------------------------------------------------------------------
# start-set file format
# ---------------------------------------------------------------------------

def _fmt_complex_pairs(values: np.ndarray) -> str:
    parts = []
    for z in values:
        parts.append(format(float(z.real), ".17g"))
        parts.append(format(float(z.imag), ".17g"))
    return " ".join(parts)


_CHART_NAMES = {CHICAGO: ("c2", "c3"), CLEVELAND: ("c2", "c3", "cV")}


def format_start_set(start_set: StartSet) -> str:
    dim = start_set.solutions.shape[1] if start_set.solutions.size else (
        26 if start_set.kind == CHICAGO else 20
    )
    out = [
        f"# meta seed={start_set.seed} loops={start_set.loops} "
        f"stagnation={start_set.stagnation}",
        f"startset {start_set.kind} {len(start_set.solutions)} {dim}",
        f"params {len(start_set.params)}",
        _fmt_complex_pairs(start_set.params),
    ]
    for name, chart in zip(_CHART_NAMES[start_set.kind], start_set.charts):
        out.append(f"chart {name} {_fmt_complex_pairs(chart)}")
    for sol in start_set.solutions:
        out.append(_fmt_complex_pairs(sol))
    return "\n".join(out) + "\n"


def write_start_set(path, start_set: StartSet) -> None:
    with open(path, "w") as fh:
        fh.write(format_start_set(start_set))


def _parse_complex_pairs(tokens: list[str], n: int) -> np.ndarray:
    if len(tokens) != 2 * n:
        raise InvalidInputError("wrong number of complex components")
    vals = np.array([float(t) for t in tokens])
    return vals[0::2] + 1j * vals[1::2]


def parse_start_set(text: str) -> StartSet:
    lines = [
        ln.strip() for ln in text.splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines or not lines[0].startswith("startset"):
        raise InvalidInputError("not a start-set file")
    _, kind, n_str, dim_str = lines[0].split()
    if kind not in KINDS:
        raise InvalidInputError(f"unknown problem kind {kind!r}")
    n_solutions, dim = int(n_str), int(dim_str)
    header = lines[1].split()
    if header[0] != "params":
        raise InvalidInputError("missing params record")
    n_params = int(header[1])
    params = _parse_complex_pairs(lines[2].split(), n_params)
    idx = 3
    charts = []
    for name, size in zip(_CHART_NAMES[kind], (4, 4, 3)):
        parts = lines[idx].split()
        if parts[0] != "chart" or parts[1] != name:
            raise InvalidInputError(f"missing chart record {name}")
        charts.append(_parse_complex_pairs(parts[2:], size))
        idx += 1
    solutions = np.empty((n_solutions, dim), dtype=np.complex128)
    if len(lines) - idx != n_solutions:
        raise InvalidInputError("solution count does not match the header")
    for i in range(n_solutions):
        solutions[i] = _parse_complex_pairs(lines[idx + i].split(), dim)
    return StartSet(kind=kind, params=params, charts=tuple(charts), solutions=solutions)


def read_start_set(path) -> StartSet:
    with open(path) as fh:
        return parse_start_set(fh.read())
