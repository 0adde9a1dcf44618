"""Command-line entry points.

Subcommands: simulate (one scenario), sweep (n x seed x lambda grid),
fluid (equilibrium / ramp-up curves), mg1-bound (Monte-Carlo cycle bound),
independence (joint-vs-product deviation), validate (full acceptance
suite). Exit codes: 0 success, 2 configuration problem, 3 runtime failure,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, fluid
from .config import ConfigError, ScenarioConfig, parse_config
from .dist import DistributionError, QuadratureError, make_distribution
from .engine import EventBudgetError, SimulationError
from .runner import (
    CURVE_COLUMNS,
    INDEPENDENCE_COLUMNS,
    SUMMARY_COLUMNS,
    run_independence,
    run_scenario,
    run_sweep,
    write_rows,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ACCEPTANCE = 4


def _parse_kv_spec(text: str) -> tuple[str, dict]:
    """Parse 'kind' or 'kind:key=val,key=val' CLI specs; values may be
    floats, ints, or |-separated float lists."""
    kind, _, rest = text.partition(":")
    params: dict = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ConfigError([f"{text!r}: expected key=value, got {item!r}"])
            if "|" in val:
                params[key] = [float(x) for x in val.split("|")]
            else:
                try:
                    params[key] = int(val)
                except ValueError:
                    try:
                        params[key] = float(val)
                    except ValueError:
                        params[key] = val
    return kind, params


def _dist_spec(text: str) -> dict:
    kind, params = _parse_kv_spec(text)
    return {"kind": kind, "params": params, "normalize": True}


def _policy_spec(text: str) -> dict:
    kind, params = _parse_kv_spec(text)
    spec = {"kind": kind}
    if "d" in params:
        spec["d"] = int(params["d"])
    if "idle" in params:
        spec["idle_selection"] = params["idle"]
    if "lambda_bar" in params:
        spec["lambda_bar"] = float(params["lambda_bar"])
    return spec


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",")]


def _out_dir(args) -> str:
    out = os.environ.get("JIQLAB_OUT") or args.out
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> ScenarioConfig:
    cfg = parse_config(args.config)
    overrides = {}
    if getattr(args, "n", None) is not None:
        overrides["n"] = args.n
    if getattr(args, "lam", None) is not None:
        overrides["lam"] = args.lam
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "dist", None) is not None:
        overrides["dist"] = _dist_spec(args.dist)
    if getattr(args, "policy", None) is not None:
        overrides["policy"] = _policy_spec(args.policy)
    return cfg.replaced(**overrides) if overrides else cfg


def _grid_from_args(args, lam, dist) -> np.ndarray:
    if args.w_max is not None:
        return fluid.default_grid(
            min(lam, 0.99) if lam > 0 else 0.5, dist, points=args.points, w_max=args.w_max
        )
    return fluid.default_grid(min(lam, 0.99) if lam > 0 else 0.5, dist, points=args.points)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    res = run_scenario(cfg)
    write_rows(os.path.join(out, "summary.csv"), SUMMARY_COLUMNS, [res.summary_row()])
    write_rows(os.path.join(out, "curves.csv"), CURVE_COLUMNS, res.curve_rows())
    row = res.summary_row()
    print(
        f"{cfg.scenario_id}: busy={row['busy_frac_mean']:.4f} "
        f"wait={row['wait_prob'] if row['wait_prob'] != '' else 'n/a'} "
        f"sup_dist={row['sup_dist_to_star'] if row['sup_dist_to_star'] != '' else 'n/a'} "
        f"events={row['events_processed']} -> {out}"
    )
    if not res.conservation.ok:
        print("accounting violations detected:", file=sys.stderr)
        for v in res.conservation.violations[:10]:
            print(f"  {v}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = parse_config(args.config)
    out = _out_dir(args)
    sweep = run_sweep(
        base,
        ns=args.n or [base.n],
        seeds=args.seeds or [base.seed],
        lams=args.lambdas,
        out_dir=out,
        workers=args.workers,
    )
    print(
        f"sweep: {len(sweep.summary_rows)} runs ok, {len(sweep.failures)} failed -> {out}"
    )
    for sid, err in sweep.failures:
        print(f"  {sid}: {err}", file=sys.stderr)
    return EXIT_RUNTIME if sweep.failures else EXIT_OK


def cmd_fluid(args) -> int:
    dist = make_distribution(args.dist_kind, normalize=True, **args.dist_params)
    grid = _grid_from_args(args, args.lam, dist)
    rows = []
    if args.lam < 1:
        eq = fluid.equilibrium_point(args.lam, dist, grid)
        rows.extend(
            {"scenario_id": "fluid", "kind": "equilibrium", "w": float(w),
             "value": float(v), "stderr": ""}
            for w, v in zip(eq.grid, eq.values)
        )
    if args.t is not None:
        tr = fluid.fluid_transient(args.lam, dist, args.t, grid)
        rows.extend(
            {"scenario_id": "fluid", "kind": "transient", "w": float(w),
             "value": float(v), "stderr": ""}
            for w, v in zip(tr.grid, tr.values)
        )
        print(f"ramp-up value at w=0, t={args.t:g}: {tr.values[0]:.6f}")
    if not rows:
        raise ConfigError(["fluid: lambda >= 1 needs --t (no equilibrium curve exists)"])
    out = _out_dir(args)
    path = os.path.join(out, "curves.csv")
    write_rows(path, CURVE_COLUMNS, rows)
    print(f"fluid curves ({len(rows)} rows) -> {path}")
    return EXIT_OK


def cmd_mg1_bound(args) -> int:
    dist = make_distribution(args.dist_kind, normalize=True, **args.dist_params)
    grid = _grid_from_args(args, args.lam, dist)
    rng = np.random.default_rng(args.seed)
    curve = fluid.mg1_bound(args.lam, dist, grid, args.cycles, rng)
    rows = [
        {"scenario_id": "mg1", "kind": "mg1_bound", "w": float(w),
         "value": float(v), "stderr": float(se)}
        for w, v, se in zip(curve.grid, curve.values, curve.stderr)
    ]
    out = _out_dir(args)
    path = os.path.join(out, "curves.csv")
    write_rows(path, CURVE_COLUMNS, rows)
    print(
        f"cycle bound at w=0: {curve.values[0]:.4f} +- {curve.stderr[0]:.4f} "
        f"(expected busy period {1.0 / (1.0 - args.lam):.4f}) -> {path}"
    )
    return EXIT_OK


def cmd_independence(args) -> int:
    cfg = _load_config(args)
    pair_grid = args.pair_grid
    rows, report = run_independence(cfg, pair_grid)
    out = _out_dir(args)
    path = os.path.join(out, "independence.csv")
    write_rows(path, INDEPENDENCE_COLUMNS, rows)
    print(
        f"{cfg.scenario_id}: D={report.distance:.5f} over {len(rows)} level pairs "
        f"({report.n_samples} joint samples) -> {path}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    from .acceptance import run_all

    results = run_all(out_dir=_out_dir(args), names=args.only)
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jiqlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"jiqlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add_out(sp):
        sp.add_argument("--out", default="out", help="output directory (env JIQLAB_OUT overrides)")

    sim = sub.add_parser("simulate", help="run one scenario from a config file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--n", type=int)
    sim.add_argument("--lambda", dest="lam", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--dist", help="e.g. exponential or pareto:alpha=1.5")
    sim.add_argument("--policy", help="e.g. jiq, jiq:idle=lifo, jsq_d:d=2")
    add_out(sim)
    sim.set_defaults(fn=cmd_simulate)

    sw = sub.add_parser("sweep", help="run a scenario grid over n/seed/lambda axes")
    sw.add_argument("--config", required=True)
    sw.add_argument("--n", type=_int_list, help="comma-separated system sizes")
    sw.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    sw.add_argument("--lambdas", type=_float_list, help="comma-separated arrival rates")
    sw.add_argument("--workers", type=int, default=1)
    add_out(sw)
    sw.set_defaults(fn=cmd_sweep)

    fl = sub.add_parser("fluid", help="emit equilibrium and ramp-up curves")
    fl.add_argument("--lambda", dest="lam", type=float, required=True)
    fl.add_argument("--dist", default="exponential", help="service law spec")
    fl.add_argument("--t", type=float, help="ramp-up time (adds a transient curve)")
    fl.add_argument("--w-max", type=float, default=None)
    fl.add_argument("--points", type=int, default=201)
    add_out(fl)
    fl.set_defaults(fn=cmd_fluid)

    mg = sub.add_parser("mg1-bound", help="Monte-Carlo per-cycle workload bound")
    mg.add_argument("--lambda", dest="lam", type=float, required=True)
    mg.add_argument("--dist", default="exponential")
    mg.add_argument("--cycles", type=int, default=100_000)
    mg.add_argument("--seed", type=int, default=1)
    mg.add_argument("--w-max", type=float, default=None)
    mg.add_argument("--points", type=int, default=201)
    add_out(mg)
    mg.set_defaults(fn=cmd_mg1_bound)

    ind = sub.add_parser("independence", help="joint-vs-product workload deviation")
    ind.add_argument("--config", required=True)
    ind.add_argument("--n", type=int)
    ind.add_argument("--lambda", dest="lam", type=float)
    ind.add_argument("--seed", type=int)
    ind.add_argument(
        "--pair-grid", type=_float_list, default=[0.0, 0.5, 1.0, 2.0],
        help="comma-separated workload levels",
    )
    add_out(ind)
    ind.set_defaults(fn=cmd_independence)

    va = sub.add_parser("validate", help="run the acceptance suite")
    va.add_argument("--only", type=lambda s: s.split(","), default=None,
                    help="comma-separated criterion names")
    add_out(va)
    va.set_defaults(fn=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "dist", None) is not None and args.command in ("fluid", "mg1-bound"):
        args.dist_kind, args.dist_params = _parse_kv_spec(args.dist)
    try:
        return args.fn(args)
    except (ConfigError, DistributionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, EventBudgetError, QuadratureError, OSError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
