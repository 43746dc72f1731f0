"""Command-line interface: ``anneal-lab <command> [flags]``.

Commands write CSV tables (header row, ``\\n`` line endings), JSON records and
SVG plots into ``--out``. Flags are validated before any computation; contract
violations exit with status 2 and a diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from anneal_lab import __version__
from anneal_lab.bounds import ProblemScales, coefficient_curve, tuned_stepsize_lipschitz
from anneal_lab.config import ConfigError, load_config
from anneal_lab.harness import aggregated_csv, build_grid, default_variants, degradation_curve, evaluate_grid, raw_csv
from anneal_lab.problems import AbsProblem, QuadProblem, fixed_step_adversary, invsqrt_adversary, make_logreg
from anneal_lab.schedules import DivergentTailError, ScheduleKind, TailFunctions, TailMode, parse_schedule
from anneal_lab.sgd import StepsizePlan, random_lemma3_case, run_sgd
from anneal_lab.svg import line_plot

THREADS_ENV = "ANNEAL_LAB_THREADS"


class UsageError(Exception):
    pass


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _stamp(args) -> str | None:
    return time.strftime("%Y-%m-%dT%H:%M:%S") if args.stamp else None


def parse_rho(text: str, points: int) -> list[float]:
    """``lo:hi`` gives ``points`` geometrically spaced values; ``a,b,c`` is taken literally."""
    try:
        if ":" in text:
            lo_s, hi_s = text.split(":", 1)
            lo, hi = float(lo_s), float(hi_s)
            if lo < 1.0:
                raise UsageError(f"--rho lower end must be >= 1, got {lo}")
            if hi < lo:
                raise UsageError(f"--rho range {lo}:{hi} is empty")
            if points < 1:
                raise UsageError("--points must be >= 1")
            if points == 1 or lo == hi:
                return [lo]
            return [float(r) for r in np.geomspace(lo, hi, points)]
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse --rho {text!r}; use lo:hi or a comma list") from None
    if any(not (math.isfinite(v) and v >= 1.0) for v in values):
        raise UsageError(f"--rho values must be >= 1, got {text}")
    return values


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        if flag < 1:
            raise UsageError("--threads must be >= 1")
        return flag
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def _schedules(text: str):
    try:
        return [parse_schedule(s) for s in text.split(",") if s.strip()]
    except ValueError as err:
        raise UsageError(str(err)) from None


# --------------------------------------------------------------------------
# commands


def cmd_bound_curve(args) -> int:
    schedules = _schedules(args.schedules)
    rhos = parse_rho(args.rho, args.points)
    threads = resolve_threads(args.threads)
    for s in schedules:
        if not s.annealed:
            raise UsageError(f"schedule {s.name} is not annealed; its bound is not defined")
    if args.mode == "smooth":
        if args.beta is None:
            raise UsageError("--mode smooth needs --beta")
        scales = ProblemScales(D=args.D, G=args.G, T=args.T, beta=args.beta, sigma=args.sigma)
    else:
        scales = ProblemScales(D=args.D, G=args.G, T=args.T)
    mode = TailMode(args.tails)

    rows, series = [], {}
    for s in schedules:
        reports = coefficient_curve(TailFunctions(s, mode), rhos, args.mode, scales, threads)
        series[s.name] = ([r.rho for r in reports], [r.coefficient for r in reports])
        rows.extend((s.name, r.rho, r.coefficient, r.tau_star) for r in reports)

    out = Path(args.out)
    _write(out / "bound_curve.csv", _csv_text(("schedule", "rho", "coefficient", "tau_star"), rows))
    ylabel = "coefficient of DG/sqrt(T)" if args.mode == "lipschitz" else "coefficient of beta D^2/T + D sigma/sqrt(T)"
    _write(
        out / "bound_curve.svg",
        line_plot(series, title="Misspecified-stepsize bound", xlabel="rho", ylabel=ylabel, log_x=True, stamp=_stamp(args)),
    )
    for name, rho, coef, tau in rows:
        print(f"{name}\trho={rho:g}\tcoefficient={coef:.6f}\ttau={tau:.6f}")
    return 0


def _sgd_problem(args):
    if args.problem == "abs":
        p = AbsProblem(args.G, args.D, "rademacher" if args.noisy else None)
        return p, [args.D / 2], ProblemScales(D=args.D, G=p.oracle_constant, T=args.T)
    if args.problem == "quad":
        p = QuadProblem(args.beta or 1.0, args.dim, args.sigma, radius=args.D / 2)
        x1 = np.zeros(args.dim)
        x1[0] = args.D / 2
        return p, x1, None
    p = make_logreg(args.n, args.dim, args.flip, args.data_seed, args.batch_size)
    return p, p.initial_point(), None


def cmd_sgd_run(args) -> int:
    schedule = parse_schedule(args.schedules) if "," not in args.schedules else None
    if schedule is None:
        raise UsageError("sgd-run takes a single schedule")
    if args.T < 1:
        raise UsageError("--T must be >= 1")
    if (args.eta is None) == (args.rho is None):
        raise UsageError("give exactly one of --eta or --rho")
    problem, x1, scales = _sgd_problem(args)
    if args.problem == "logreg":
        args.T = problem.steps_per_epoch
    if args.eta is not None:
        if not args.eta > 0:
            raise UsageError("--eta must be positive")
        eta = args.eta
    else:
        rho = parse_rho(args.rho, 1)
        if len(rho) != 1:
            raise UsageError("--rho must be a single value for sgd-run")
        if scales is None:
            raise UsageError("--rho (relative to the tuned stepsize) is only defined for --problem abs")
        if not schedule.annealed:
            raise UsageError(f"no tuned stepsize for {schedule.name}; pass --eta")
        scales = ProblemScales(D=scales.D, G=scales.G, T=args.T)
        eta = rho[0] * tuned_stepsize_lipschitz(scales, TailFunctions(schedule))
    plan = StepsizePlan(eta, schedule, args.T)
    run = run_sgd(problem, plan, x1, args.seed, record_trajectory=True)

    out = Path(args.out)
    etas = plan.stepsizes()
    traj_rows = ((t, float(etas[t - 1]), problem.value(run.trajectory[t - 1])) for t in range(1, plan.T + 1))
    _write(out / "trajectory.csv", _csv_text(("t", "eta_t", "f_x_t"), traj_rows))
    summary = run.summary(problem)
    _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_lemma3_audit(args) -> int:
    if args.cases < 1:
        raise UsageError("--cases must be >= 1")
    rng = np.random.default_rng(args.seed)
    cosine_tails = TailFunctions(parse_schedule("cosine"))
    rows, failures = [], 0
    for i in range(args.cases):
        case = random_lemma3_case(rng)
        tails = cosine_tails if case.plan.schedule.kind is ScheduleKind.COSINE else None
        lhs, rhs = case.evaluate(tails)
        ok = lhs <= rhs
        failures += not ok
        rows.append((i, case.plan.schedule.name, case.plan.T, case.k, case.tau, case.plan.eta, case.c1, case.c2, lhs, rhs, ok))
    if args.out:
        header = ("case", "schedule", "T", "k", "tau", "eta", "c1", "c2", "lhs", "rhs", "ok")
        _write(Path(args.out) / "lemma3_audit.csv", _csv_text(header, rows))
    print(f"lemma3-audit: {args.cases - failures}/{args.cases} cases satisfy lhs <= rhs")
    return 1 if failures else 0


def cmd_adversary(args) -> int:
    try:
        if args.kind == "fixed":
            report = fixed_step_adversary(args.D, args.G, args.T, args.rho)
        else:
            report = invsqrt_adversary(args.D, args.G, args.T, args.rho)
    except ValueError as err:
        raise UsageError(str(err)) from None
    out = Path(args.out)
    xs, etas = report.iterates, report.stepsizes
    rows = ((t, float(etas[t - 1]), float(xs[t - 1]), args.G * abs(float(xs[t - 1]))) for t in range(1, args.T + 1))
    _write(out / f"adversary_{args.kind}.csv", _csv_text(("t", "eta_t", "x_t", "f_x_t"), rows))
    verdict = report.verdict()
    _write(out / f"adversary_{args.kind}.json", json.dumps(verdict, indent=2, sort_keys=True) + "\n")
    print(
        f"bound_satisfied={str(report.bound_satisfied).lower()} "
        f"average_suboptimality={report.average_suboptimality!r} lower_bound={report.lower_bound!r}"
    )
    return 0 if report.bound_satisfied else 1


def cmd_grid_robustness(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except ConfigError as err:
        raise UsageError(str(err)) from None
    threads = resolve_threads(args.threads)
    try:
        grid = build_grid(cfg.grid.spec())
        problem, T, x1 = cfg.problem.build()
    except ValueError as err:
        raise UsageError(f"invalid config: {err}") from None
    if max(cfg.levels) > len(grid):
        raise UsageError(f"invalid config: levels: {max(cfg.levels)} exceeds the grid length {len(grid)}")
    variants = default_variants(cfg.schedules)
    outcome = evaluate_grid(problem, variants, grid, cfg.seeds, T, x1=x1, gamma=cfg.gamma, threads=threads)
    rows = degradation_curve(outcome, cfg.levels, cfg.grid.spec().ratio)

    out = Path(args.out)
    _write(out / "grid_raw.csv", raw_csv(outcome))
    _write(out / "grid_aggregated.csv", aggregated_csv(rows))
    manifest = {
        "version": __version__,
        "config": cfg.model_dump(mode="json"),
        "grid": grid,
        "seeds": list(cfg.seeds),
        "steps": T,
        "variants": outcome.variants,
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    series = {}
    for v in outcome.variants:
        mine = [r for r in rows if r.variant == v]
        series[v] = ([r.grid_factor for r in mine], [r.mean_best for r in mine])
    _write(
        out / "degradation.svg",
        line_plot(series, title="Best loss vs grid coarseness", xlabel="grid factor", ylabel="mean best loss", log_x=True, stamp=_stamp(args)),
    )
    for r in rows:
        print(f"{r.variant}\tlevel={r.level}\tfactor={r.grid_factor:.3f}\tmean_best={r.mean_best:.6f}")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anneal-lab", description="Stepsize-schedule robustness toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads (fallback: ${THREADS_ENV})")
        p.add_argument("--stamp", action="store_true", help="embed a timestamp in SVG output")

    p = sub.add_parser("bound-curve", help="bound coefficient as a function of rho")
    p.add_argument("--schedules", default="cosine,poly:1,poly:2,poly:3")
    p.add_argument("--rho", default="1:50", help="lo:hi (geometric) or a comma list")
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--mode", choices=("lipschitz", "smooth"), default="lipschitz")
    p.add_argument("--tails", choices=("analytic", "quadrature"), default="analytic")
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--sigma", type=float, default=0.0)
    common(p)
    p.set_defaults(func=cmd_bound_curve)

    p = sub.add_parser("sgd-run", help="one projected SGD run")
    p.add_argument("--problem", choices=("abs", "quad", "logreg"), default="abs")
    p.add_argument("--schedules", default="cosine", help="a single schedule")
    p.add_argument("--eta", type=float, default=None, help="base stepsize")
    p.add_argument("--rho", default=None, help="multiple of the tuned stepsize (abs only)")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--noisy", action="store_true", help="additive Rademacher noise (abs)")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--flip", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--data-seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_sgd_run)

    p = sub.add_parser("lemma3-audit", help="randomised check of the sum-to-integral inequality")
    p.add_argument("--cases", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    common(p, out_required=False)
    p.set_defaults(func=cmd_lemma3_audit)

    p = sub.add_parser("adversary", help="lower-bound constructions on G|x|")
    p.add_argument("--kind", choices=("fixed", "invsqrt"), required=True)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    common(p)
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("grid-robustness", help="grid-search resolution experiment")
    p.add_argument("--config", required=True, help="JSON experiment config")
    common(p)
    p.set_defaults(func=cmd_grid_robustness)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        parser.exit(2, f"anneal-lab {args.command}: error: {err}\n")
    except (ValueError, DivergentTailError) as err:
        parser.exit(2, f"anneal-lab {args.command}: error: {err}\n")


if __name__ == "__main__":
    sys.exit(main())
