"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 solver failure or incomplete
certification, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .analysis import (
    CHICAGO_COUNTS,
    CLEVELAND_COUNTS,
    FeatureCountProblem,
    jacobian_rank_test,
    minimality_balance,
)
from .errors import (
    CertificationIncompleteError,
    InvalidInputError,
    SceneSamplingError,
    SolverFailureError,
)
from .geometry import (
    CHICAGO,
    KINDS,
    SceneConfig,
    generate_scene,
    generate_track_set,
    pose_error,
    read_instance,
    read_tracks,
    write_instance,
    write_tracks,
)
from .monodromy import (
    certify,
    read_start_set,
    write_start_set,
)
from .pipeline import (
    RansacConfig,
    census,
    inject_noise,
    inject_outliers,
    ransac_trifocal,
    reprojection_errors,
    solve_instance,
)
from .tracker import TrackerSettings

_STUDY_CSV_HEADER = (
    "seed,sigma_px,sigma_rad,outlier_ratio,rot_err,transl_err,"
    "mean_reproj,n_real,n_chiral,n_verified"
)
# rot_err is the rotation angle of R_est R_gt^T in radians (not the
# quaternion angle); transl_err the angle between unit translations.


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt0", type=float, default=0.05, help="initial step size")
    p.add_argument("--max-corr-steps", type=int, default=3,
                   help="max Newton corrector iterations per step")
    p.add_argument("--corr-tol", type=float, default=1e-8,
                   help="relative Newton update tolerance")
    p.add_argument("--max-steps", type=int, default=10_000,
                   help="max tracking steps per path")


def _settings_from(args) -> TrackerSettings:
    return TrackerSettings(
        initial_step=args.dt0,
        max_corrector_iterations=args.max_corr_steps,
        corrector_tolerance=args.corr_tol,
        max_steps=args.max_steps,
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for path tracking")


def _counts_for(problem: str) -> FeatureCountProblem:
    return CHICAGO_COUNTS if problem == CHICAGO else CLEVELAND_COUNTS


def _cmd_generate(args) -> int:
    config = SceneConfig(seed=args.seed)
    if args.tracks > 0:
        tracks, _, _ = generate_track_set(config, args.tracks)
        if args.noise_px > 0 or args.noise_rad > 0:
            tracks = inject_noise(tracks, args.noise_px, args.noise_rad,
                                  seed=args.seed + 1,
                                  pixels_per_unit=config.pixels_per_unit)
        if args.outliers > 0:
            tracks, _ = inject_outliers(tracks, args.outliers, seed=args.seed + 2)
        write_tracks(args.out, tracks)
        print(f"wrote {len(tracks)} tracks to {args.out}")
        return 0
    _, _, instance, gt = generate_scene(args.problem, config)
    if args.noise_px > 0 or args.noise_rad > 0:
        instance = inject_noise(instance, args.noise_px, args.noise_rad,
                                seed=args.seed + 1,
                                pixels_per_unit=config.pixels_per_unit)
    write_instance(args.out, instance, gt)
    print(f"wrote {args.problem} instance to {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    balance = minimality_balance(_counts_for(args.problem))
    ratio = jacobian_rank_test(args.problem, seed=args.seed)
    verdict = "numerically minimal" if ratio > 1e-8 else "rank-deficient"
    print(f"balance: {balance}")
    print(f"rank-ratio: {ratio:.3e} ({verdict})")
    return 0


def _cmd_certify(args) -> int:
    settings = _settings_from(args)
    t0 = time.perf_counter()
    try:
        start_set = certify(args.problem, seed=args.seed, settings=settings,
                            threads=args.threads)
    except CertificationIncompleteError as exc:
        print(f"certification incomplete: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - t0
    if args.out:
        write_start_set(args.out, start_set)
    print(f"degree: {len(start_set.solutions)} (complete)")
    print(f"loops: {start_set.loops}  time: {elapsed:.1f}s")
    if args.out:
        print(f"start set written to {args.out}")
    return 0


def _print_pose(prefix: str, pose) -> None:
    q = pose.q
    t = pose.t
    print(f"  {prefix} q=({q.w:+.9f} {q.x:+.9f} {q.y:+.9f} {q.z:+.9f}) "
          f"t=({t[0]:+.9f} {t[1]:+.9f} {t[2]:+.9f})")


def _cmd_solve(args) -> int:
    instance, gt_poses = read_instance(args.instance)
    start_set = read_start_set(args.start_set)
    if args.problem is not None and args.problem != instance.kind:
        raise InvalidInputError(
            f"--problem {args.problem} but the instance file is {instance.kind}"
        )
    if start_set.kind != instance.kind:
        raise InvalidInputError(
            f"start set is {start_set.kind}, instance is {instance.kind}"
        )
    records = solve_instance(instance, start_set, settings=_settings_from(args),
                             threads=args.threads)
    n_real, n_chiral, n_verified = census(records)
    print(f"paths: {len(start_set.solutions)}  classified: {len(records)}  "
          f"real: {n_real}  chiral: {n_chiral}  verified: {n_verified}")
    shown = 0
    for rec in records:
        if not rec.chiral:
            continue
        shown += 1
        flag = "verified" if rec.tangent_verified else "chiral"
        print(f"solution {rec.path_index} [{flag}] residual={rec.residual:.2e}")
        _print_pose("camera 2:", rec.poses[0])
        _print_pose("camera 3:", rec.poses[1])
        if gt_poses is not None:
            re_, te_ = pose_error(rec.poses, gt_poses)
            print(f"  vs ground truth: rot {re_:.3e} rad, transl {te_:.3e} rad")
    if shown == 0:
        print("no chiral solutions found")
    return 0


def _cmd_ransac(args) -> int:
    tracks = read_tracks(args.tracks)
    start_set = read_start_set(args.start_set)
    config = RansacConfig(
        iterations=args.iters,
        threshold_px=args.threshold,
        seed=args.seed,
        early_exit_inlier_ratio=args.early_exit if args.early_exit > 0 else None,
    )
    result = ransac_trifocal(tracks, start_set, config,
                             settings=_settings_from(args), threads=args.threads)
    n = len(tracks)
    print(f"best model: iteration {result.iteration}, "
          f"inliers {int(result.inlier_mask.sum())}/{n}, "
          f"mean inlier error {result.mean_inlier_error:.3f}px")
    _print_pose("camera 2:", result.record.poses[0])
    _print_pose("camera 3:", result.record.poses[1])
    return 0


def _run_study_trials(args, grid, outlier_ratio_for=lambda cell: 0.0):
    settings = _settings_from(args)
    start_set = read_start_set(args.start_set)
    if start_set.kind != CHICAGO:
        raise InvalidInputError("studies run on chicago track data")
    rows = []
    for cell in grid:
        sigma_px, sigma_rad = cell
        ratio = outlier_ratio_for(cell)
        for trial in range(args.trials):
            seed = args.seed + 1000 * trial
            tracks, _, gt = generate_track_set(SceneConfig(seed=seed), args.tracks)
            noisy = inject_noise(tracks, sigma_px, sigma_rad, seed=seed + 1)
            mask = np.ones(len(noisy), dtype=bool)
            if ratio > 0:
                noisy, mask = inject_outliers(noisy, ratio, seed=seed + 2)
            config = RansacConfig(
                iterations=args.iters, threshold_px=args.threshold,
                seed=seed + 3,
                early_exit_inlier_ratio=args.early_exit if args.early_exit > 0 else None,
            )
            try:
                result = ransac_trifocal(noisy, start_set, config,
                                         settings=settings, threads=args.threads)
            except SolverFailureError:
                rows.append((seed, sigma_px, sigma_rad, ratio,
                             float("nan"), float("nan"), float("nan"), 0, 0, 0))
                continue
            rec = result.record
            rot_err, transl_err = pose_error(rec.poses, gt.poses)
            errs = reprojection_errors(rec.poses[0], rec.poses[1], noisy)
            mean_reproj = float(np.mean(errs[mask][np.isfinite(errs[mask])]))
            rows.append((seed, sigma_px, sigma_rad, ratio, rot_err, transl_err,
                         mean_reproj, result.n_real, result.n_chiral,
                         result.n_verified))
    return rows


def _write_csv(path, rows) -> None:
    lines = [_STUDY_CSV_HEADER]
    for row in rows:
        seed, spx, srad, ratio, rot, tr, reproj, n_real, n_chiral, n_verified = row
        lines.append(
            f"{seed},{spx:.9g},{srad:.9g},{ratio:.9g},{rot:.9g},{tr:.9g},"
            f"{reproj:.9g},{n_real},{n_chiral},{n_verified}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_study_noise(args) -> int:
    px_grid = [(s, args.sigma_rad) for s in args.sigmas_px]
    rad_grid = [(args.sigma_px, s) for s in args.sigmas_rad]
    rows = _run_study_trials(args, px_grid + rad_grid)
    _write_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_study_outliers(args) -> int:
    cell = (args.sigma_px, args.sigma_rad)
    rows = []
    for ratio in args.ratios:
        rows.extend(_run_study_trials(args, [cell], lambda _c, r=ratio: r))
    _write_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    start_set = read_start_set(args.start_set)
    settings = _settings_from(args)
    times = []
    successes = []
    for rep in range(args.repeat):
        _, _, instance, _ = generate_scene(
            start_set.kind, SceneConfig(seed=args.seed + rep)
        )
        t0 = time.perf_counter()
        try:
            records = solve_instance(instance, start_set, settings=settings,
                                     threads=args.threads)
            successes.append(len(records))
        except SolverFailureError:
            successes.append(0)
        times.append(time.perf_counter() - t0)
    times_ms = np.array(times) * 1e3
    print(f"solves: {args.repeat}  paths per solve: {len(start_set.solutions)}")
    print(f"wall time ms: mean {times_ms.mean():.0f}  p50 {np.percentile(times_ms, 50):.0f}  "
          f"p90 {np.percentile(times_ms, 90):.0f}  max {times_ms.max():.0f}")
    print(f"successful paths: mean {np.mean(successes):.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trifocal",
        description="Chicago/Cleveland trifocal minimal-problem solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance or tracks file")
    p.add_argument("--problem", choices=KINDS, default=CHICAGO)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-px", type=float, default=0.0,
                   help="point location noise sigma in pixels")
    p.add_argument("--noise-rad", type=float, default=0.0,
                   help="tangent orientation noise sigma in radians")
    p.add_argument("--outliers", type=float, default=0.0,
                   help="outlier track ratio (tracks mode only)")
    p.add_argument("--tracks", type=int, default=0,
                   help="emit this many tracks instead of a minimal instance")
    _add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("analyze", help="minimality balance and Jacobian rank test")
    p.add_argument("--problem", choices=KINDS, default=CHICAGO)
    _add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("certify", help="monodromy degree certification")
    p.add_argument("--problem", choices=KINDS, default=CHICAGO)
    p.add_argument("--out", default="",
                   help="write the certified start set to this file")
    _add_common(p)
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("solve", help="solve an instance file with a start set")
    p.add_argument("--problem", choices=KINDS, default=None,
                   help="optional; checked against the instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--start-set", required=True)
    _add_common(p)
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("ransac", help="robust pose from a tracks file")
    p.add_argument("--tracks", required=True)
    p.add_argument("--start-set", required=True)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--threshold", type=float, default=2.0,
                   help="inlier threshold in pixels")
    p.add_argument("--early-exit", type=float, default=0.0,
                   help="stop once this inlier ratio is reached (0 disables)")
    _add_common(p)
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_ransac)

    p = sub.add_parser("study-noise", help="noise study CSV (paper protocol)")
    p.add_argument("--start-set", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tracks", type=int, default=200)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--early-exit", type=float, default=0.6)
    p.add_argument("--sigmas-px", type=float, nargs="+",
                   default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--sigma-rad", type=float, default=0.1,
                   help="orientation sigma used during the position sweep")
    p.add_argument("--sigmas-rad", type=float, nargs="+",
                   default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--sigma-px", type=float, default=0.5,
                   help="position sigma used during the orientation sweep")
    _add_common(p)
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_study_noise)

    p = sub.add_parser("study-outliers", help="outlier study CSV (paper protocol)")
    p.add_argument("--start-set", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tracks", type=int, default=200)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--early-exit", type=float, default=0.5)
    p.add_argument("--sigma-px", type=float, default=0.25)
    p.add_argument("--sigma-rad", type=float, default=0.1)
    p.add_argument("--ratios", type=float, nargs="+", default=[0.10, 0.25, 0.40])
    _add_common(p)
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_study_outliers)

    p = sub.add_parser("bench", help="per-solve wall-time statistics")
    p.add_argument("--start-set", required=True)
    p.add_argument("--repeat", type=int, default=10)
    _add_common(p)
    _add_tracker_flags(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except (SolverFailureError, CertificationIncompleteError, SceneSamplingError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
