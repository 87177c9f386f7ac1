"""Command line entry point.

Exit status: 0 on success, 2 when inputs fail validation (configuration,
benchmark id, grid, infeasible abstraction), 1 on any other error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from .. import engine
from ..gridding import AVOID, GridError, label_states
from ..models import DimensionError, make_benchmark
from ..models.wdn import consumption_from_csv, synth_consumption, write_consumption_csv
from ..transitions import InfeasibleRowError, save_imdp, validate_imdp
from . import export, report
from .config import ConfigError, RunSpec, load_config, resolve
from .montecarlo import monte_carlo
from .runner import RunArtifacts, abstract, policy_table, run_benchmark, set_workers, value_table

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class UsageError(ValueError):
    pass


def _common(p: argparse.ArgumentParser):
    p.add_argument("benchmark", nargs="?", help="registry id (alternative to --config)")
    p.add_argument("--variant", default=None)
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--format", choices=["json", "csv"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imdpkit", description="IMDP abstraction, synthesis and validation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("abstract", "build, validate and save the IMDP"),
        ("synthesize", "compute certified bounds and a controller"),
        ("verify", "certified bounds at the initial points, no simulation"),
        ("simulate", "Monte Carlo under a saved controller"),
        ("bench", "full pipeline with record, tables and figures"),
    ]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name in ("simulate", "bench"):
            p.add_argument("--runs", type=int, default=None)
        if name == "simulate":
            p.add_argument("--solution", type=Path, help="solution .npz written by synthesize")
        if name in ("synthesize", "bench"):
            p.add_argument("--free-upper", action="store_true", help="also compute the optimistic optimum")
        if name == "bench":
            p.add_argument("--no-figures", action="store_true")
    p = sub.add_parser("wdn-profile", help="ingest or synthesize a consumption profile")
    p.add_argument("--input", type=Path, help="consumption CSV (timestamp, flow)")
    p.add_argument("--peak", type=float, default=0.3)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    return parser


def _runspec(args) -> RunSpec:
    if args.config is not None:
        run = load_config(args.config)
    elif args.benchmark:
        run = RunSpec(benchmark=args.benchmark, variant=args.variant)
    else:
        raise UsageError("give a benchmark id or --config")
    if args.benchmark and args.config is not None and args.benchmark != run.benchmark:
        raise UsageError(f"benchmark {args.benchmark!r} conflicts with config {run.benchmark!r}")
    if args.variant is not None:
        run.variant = args.variant
    if args.epsilon is not None:
        run.engine["epsilon"] = args.epsilon
    if args.horizon is not None:
        run.engine["horizon"] = args.horizon
    if args.seed is not None:
        run.montecarlo["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        run.montecarlo["runs"] = args.runs
    if args.workers is not None:
        run.workers = args.workers
    if args.format is not None:
        run.output["format"] = args.format
    if run.benchmark is not None:
        make_benchmark(run.benchmark, run.variant)
    return run


def _stem(bench) -> str:
    return f"{bench.name}-{bench.variant}"


def _save_solution(path, sol: engine.Solution):
    np.savez(path, lower=sol.bounds.lower, upper=sol.bounds.upper, actions=sol.policy.actions,
             stationary=np.array(sol.policy.stationary))


def _load_solution(path) -> engine.Solution:
    with np.load(path) as z:
        return engine.Solution(engine.ValueBounds(z["lower"], z["upper"]),
                               engine.Policy(z["actions"], bool(z["stationary"])))


def _write_tables(art: RunArtifacts, out: Path, stem: str):
    export.write_csv(*value_table(art), out / f"{stem}-values.csv")
    export.write_csv(*policy_table(art), out / f"{stem}-policy.csv")
    _save_solution(out / f"{stem}-solution.npz", art.solution)


def cmd_abstract(args) -> int:
    run = _runspec(args)
    set_workers(run.workers)
    bench = resolve(run)
    grid, labels, inputs, imdps = abstract(bench)
    args.out.mkdir(parents=True, exist_ok=True)
    counts = {"states": grid.n_states, "actions": len(inputs), "target": labels.n_target, "avoid": labels.n_avoid}
    reports = []
    for k, m in enumerate(imdps):
        rep = validate_imdp(m)
        suffix = "" if len(imdps) == 1 else f"-{k:03d}"
        save_imdp(m, args.out / f"{_stem(bench)}{suffix}.imdp.npz")
        reports.append({"rows": rep.n_rows, "nnz": rep.nnz, "min_slack": rep.min_slack, "max_slack": rep.max_slack})
    doc = {"benchmark": bench.name, "variant": bench.variant, "counts": counts, "grid": grid.to_dict(),
           "spec": bench.spec.to_dict(), "imdps": reports}
    export.write_json(doc, args.out / f"{_stem(bench)}-abstraction.json")
    print(f"{bench.name}: {counts['states']} states, {counts['actions']} actions, "
          f"{counts['target']} target, {counts['avoid']} avoid")
    return EXIT_OK


def _solve(run: RunSpec, bench, simulate: bool, free_upper: bool = False):
    return run_benchmark(bench, seed=run.seed, runs=run.runs, epsilon=run.engine.get("epsilon"),
                         horizon=None, cap=run.engine.get("cap", engine.DEFAULT_CAP),
                         free_upper=free_upper or run.engine.get("free_upper", False), simulate=simulate,
                         max_steps=run.montecarlo.get("max_steps", 2000))


def _emit(rec, out: Path, stem: str, fmt: str):
    path = out / f"{stem}-record.{fmt}"
    export.export_results(rec, path, fmt)
    return path


def cmd_synthesize(args) -> int:
    run = _runspec(args)
    set_workers(run.workers)
    bench = resolve(run)
    rec, art = _solve(run, bench, simulate=False, free_upper=args.free_upper)
    if art.solution is None:
        raise UsageError(f"{bench.name} has no dynamics to synthesize for")
    args.out.mkdir(parents=True, exist_ok=True)
    _write_tables(art, args.out, _stem(bench))
    path = _emit(rec, args.out, _stem(bench), run.output.get("format", "json"))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    run = _runspec(args)
    set_workers(run.workers)
    bench = resolve(run)
    rec, art = _solve(run, bench, simulate=False)
    if art.imdps:
        for m in art.imdps:
            validate_imdp(m)
    args.out.mkdir(parents=True, exist_ok=True)
    path = _emit(rec, args.out, _stem(bench), run.output.get("format", "json"))
    for c in rec.initial:
        print(f"x0={c.point}: [{c.lower:.6f}, {c.upper:.6f}]")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    run = _runspec(args)
    set_workers(run.workers)
    bench = resolve(run)
    stem = _stem(bench)
    sol_path = args.solution or args.out / f"{stem}-solution.npz"
    if not Path(sol_path).is_file():
        raise UsageError(f"{sol_path}: no saved solution (run synthesize first)")
    sol = _load_solution(sol_path)
    grid, inputs = bench.grid(), bench.inputs()
    tags = np.append(label_states(grid, bench.spec).tags, np.int8(AVOID))
    systems = list(bench.step_systems or (bench.system,))
    rows = []
    for p in np.asarray(bench.initial_points, float).reshape(-1, grid.dim):
        s = int(grid.index_of(p)[0])
        if s < 0:
            continue
        mc = monte_carlo(systems, grid, sol.policy, tags, inputs, bench.spec, p, runs=run.runs, seed=run.seed,
                         disturbances=bench.disturbances(), max_steps=run.montecarlo.get("max_steps", 2000))
        lo, hi = float(sol.bounds.lower[s]), float(sol.bounds.upper[s])
        rows.append({"point": p.tolist(), "state": s, "lower": lo, "upper": hi, "mc": mc.to_dict(),
                     "contained": mc.contained(lo, hi)})
        print(f"x0={p.tolist()}: freq {mc.frequency:.4f} +- {mc.delta:.4f}, bounds [{lo:.4f}, {hi:.4f}]")
    args.out.mkdir(parents=True, exist_ok=True)
    if run.output.get("format", "json") == "csv":
        export.write_csv(["point", "state", "lower", "upper", "frequency", "delta", "contained"],
                         [[" ".join(map(str, r["point"])), r["state"], r["lower"], r["upper"], r["mc"]["frequency"],
                           r["mc"]["delta"], r["contained"]] for r in rows], args.out / f"{stem}-mc.csv")
    else:
        export.write_json({"seed": run.seed, "runs": run.runs, "checks": rows}, args.out / f"{stem}-mc.json")
    return EXIT_OK


def cmd_bench(args) -> int:
    run = _runspec(args)
    set_workers(run.workers)
    bench = resolve(run)
    rec, art = _solve(run, bench, simulate=True, free_upper=args.free_upper)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = _stem(bench)
    fmt = run.output.get("format", "json")
    path = _emit(rec, args.out, stem, fmt)
    if art.solution is not None:
        _write_tables(art, args.out, stem)
        if not args.no_figures and run.output.get("figures", True):
            report.render(rec, art, args.out)
    c = rec.counts
    print(f"{bench.name} [{bench.variant}]: {c['states']} states, {c['actions']} actions, "
          f"{c['target']} target, {c['avoid']} avoid; verdict {rec.verdict}")
    for chk in rec.initial:
        if chk.mc is not None:
            print(f"  x0={chk.point}: [{chk.lower:.6f}, {chk.upper:.6f}] mc {chk.mc['frequency']:.4f}"
                  f" +- {chk.mc['delta']:.4f} {'ok' if chk.contained else 'OUTSIDE'}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_wdn_profile(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    if args.input is not None:
        if not args.input.is_file():
            raise UsageError(f"{args.input}: no such file")
        profile = consumption_from_csv(args.input)
        stem = args.input.stem
    else:
        profile = synth_consumption(daily_peak=args.peak, sigma=args.sigma, seed=args.seed, days=args.days)
        stem = f"synthetic-seed{args.seed}"
        write_consumption_csv(args.out / f"{stem}-consumption.csv", profile)
    rows = [[t, p, s] for t, p, s in profile.to_rows()]
    if args.format == "csv":
        export.write_csv(["slot", "prediction", "sigma"], rows, args.out / f"{stem}-profile.csv")
    else:
        export.write_json({"slots": [{"slot": t, "prediction": p, "sigma": s} for t, p, s in rows]},
                          args.out / f"{stem}-profile.json")
    report.plot_profile(profile, args.out / f"{stem}-profile.png")
    print(f"profile: peak {profile.prediction.max():.4f} m3/h, mean sigma {profile.sigma.mean():.4f}")
    return EXIT_OK


COMMANDS = {
    "abstract": cmd_abstract,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "wdn-profile": cmd_wdn_profile,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, KeyError, GridError, DimensionError, InfeasibleRowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
