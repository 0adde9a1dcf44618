"""Scenario execution and persistence.

One scenario = one engine run + stationary estimation + curve extraction.
Sweeps fan a base config out over (n, seed, lambda) axes, run each point
(optionally in parallel workers), and merge the outputs deterministically,
sorted by scenario_id. All CSV files round-trip exactly: floats are written
with repr so re-parsing them recovers identical values.
"""

from __future__ import annotations

import csv
import datetime
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import __version__
from .config import (
    ScenarioConfig,
    build_arrivals,
    build_distribution,
    build_policy,
    initial_state,
    resolve_grid,
    subset_tags,
)
from .engine import Engine, SamplePlan
from .fluid import TailCurve, equilibrium_point, sup_distance
from .measure import (
    ConservationReport,
    StationaryEstimate,
    Trace,
    check_conservation,
    estimate_stationary,
    independence_distance,
)

SUMMARY_COLUMNS = (
    "scenario_id", "n", "lambda", "policy", "dist", "busy_frac_mean",
    "busy_frac_stderr", "wait_prob", "blocked_frac", "sup_dist_to_star",
    "events_processed", "wall_seconds", "caveats",
)
CURVE_COLUMNS = ("scenario_id", "kind", "w", "value", "stderr")
CONVERGENCE_COLUMNS = ("scenario_id", "n", "sup_dist", "wait_prob", "ci")
INDEPENDENCE_COLUMNS = ("scenario_id", "w1", "w2", "joint", "product", "diff")

HEAVY_TAIL_CAVEAT = "heavy_tail_no_total_workload"


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace: Trace
    estimate: StationaryEstimate
    equilibrium: TailCurve | None
    sup_dist: float | None
    conservation: ConservationReport
    caveats: list[str]
    wall_seconds: float

    def summary_row(self) -> dict:
        est = self.estimate
        tr = self.trace
        blocked_frac = tr.blocked_total / tr.total_arrivals if tr.total_arrivals else 0.0
        return {
            "scenario_id": self.config.scenario_id,
            "n": self.config.n,
            "lambda": self.config.lam,
            "policy": tr.meta["policy"],
            "dist": tr.meta["dist"],
            "busy_frac_mean": est.busy_frac,
            "busy_frac_stderr": float(est.tail.stderr[0]),
            "wait_prob": "" if est.wait_prob is None else est.wait_prob,
            "blocked_frac": blocked_frac,
            "sup_dist_to_star": "" if self.sup_dist is None else self.sup_dist,
            "events_processed": tr.events_processed,
            "wall_seconds": self.wall_seconds,
            "caveats": ";".join(self.caveats),
        }

    def curve_rows(self) -> list[dict]:
        sid = self.config.scenario_id
        rows = []
        tail = self.estimate.tail
        for w, v, se in zip(tail.grid, tail.values, tail.stderr):
            rows.append(
                {"scenario_id": sid, "kind": "empirical", "w": float(w),
                 "value": float(v), "stderr": float(se)}
            )
        if self.equilibrium is not None:
            for w, v in zip(self.equilibrium.grid, self.equilibrium.values):
                rows.append(
                    {"scenario_id": sid, "kind": "equilibrium", "w": float(w),
                     "value": float(v), "stderr": ""}
                )
        return rows

    def convergence_row(self) -> dict | None:
        if self.sup_dist is None:
            return None
        est = self.estimate
        return {
            "scenario_id": self.config.scenario_id,
            "n": self.config.n,
            "sup_dist": self.sup_dist,
            "wait_prob": "" if est.wait_prob is None else est.wait_prob,
            "ci": "" if est.wait_prob_halfwidth is None else est.wait_prob_halfwidth,
        }


def build_engine(cfg: ScenarioConfig, *, record_grid=None) -> Engine:
    dist = build_distribution(cfg)
    return Engine(
        cfg.n,
        dist,
        build_arrivals(cfg),
        build_policy(cfg),
        grid=record_grid if record_grid is not None else resolve_grid(cfg, dist),
        buffer=cfg.buffer,
        seed=cfg.seed,
        subset_tags=subset_tags(cfg),
        initial=initial_state(cfg),
        tracked=cfg.tracked_servers,
        scenario_id=cfg.scenario_id,
    )


def run_scenario(cfg: ScenarioConfig, plan: SamplePlan | None = None) -> ScenarioResult:
    t0 = time.perf_counter()
    dist = build_distribution(cfg)
    grid = resolve_grid(cfg, dist)
    engine = build_engine(cfg, record_grid=grid)
    if plan is None:
        plan = SamplePlan(interval=cfg.sample_interval)
    trace = engine.run(cfg.horizon, plan)
    estimate = estimate_stationary(trace, cfg.warmup)
    conservation = check_conservation(trace)
    equilibrium = None
    sup = None
    if cfg.lam < 1:
        equilibrium = equilibrium_point(cfg.lam, dist, grid)
        sup = sup_distance(estimate.tail, equilibrium)
    caveats = []
    if not dist.variance_finite:
        caveats.append(HEAVY_TAIL_CAVEAT)
    if cfg.exploratory:
        caveats.append("exploratory")
    if not conservation.ok:
        caveats.append("conservation_violation")
    wall = time.perf_counter() - t0
    return ScenarioResult(
        config=cfg,
        trace=trace,
        estimate=estimate,
        equilibrium=equilibrium,
        sup_dist=sup,
        conservation=conservation,
        caveats=caveats,
        wall_seconds=wall,
    )


# -- CSV io -------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])


_SUMMARY_TYPES = {
    "n": int, "lambda": float, "busy_frac_mean": float, "busy_frac_stderr": float,
    "wait_prob": float, "blocked_frac": float, "sup_dist_to_star": float,
    "events_processed": int, "wall_seconds": float,
}
_CURVE_TYPES = {"w": float, "value": float, "stderr": float}
_CONVERGENCE_TYPES = {"n": int, "sup_dist": float, "wait_prob": float, "ci": float}
_INDEPENDENCE_TYPES = {
    "w1": float, "w2": float, "joint": float, "product": float, "diff": float,
}


def _read_rows(path, types) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for k, v in raw.items():
                conv = types.get(k)
                row[k] = conv(v) if (conv and v != "") else v
            rows.append(row)
    return rows


def read_summary(path):
    return _read_rows(path, _SUMMARY_TYPES)


def read_curves(path):
    return _read_rows(path, _CURVE_TYPES)


def read_convergence(path):
    return _read_rows(path, _CONVERGENCE_TYPES)


def read_independence(path):
    return _read_rows(path, _INDEPENDENCE_TYPES)


# -- sweeps -------------------------------------------------------------------


@dataclass
class SweepResult:
    out_dir: str
    summary_rows: list[dict]
    curve_rows: list[dict]
    convergence_rows: list[dict]
    failures: list[tuple[str, str]] = field(default_factory=list)
    results: list[ScenarioResult] = field(default_factory=list)

    @property
    def paths(self) -> dict:
        return {
            "summary": os.path.join(self.out_dir, "summary.csv"),
            "curves": os.path.join(self.out_dir, "curves.csv"),
            "convergence": os.path.join(self.out_dir, "convergence.csv"),
            "manifest": os.path.join(self.out_dir, "manifest.json"),
        }


def _sweep_point(cfg_dict: dict) -> tuple[str, dict, list[dict], dict | None]:
    from .config import from_dict

    cfg = from_dict(cfg_dict)
    res = run_scenario(cfg)
    return cfg.scenario_id, res.summary_row(), res.curve_rows(), res.convergence_row()


def run_sweep(
    base: ScenarioConfig,
    ns,
    seeds,
    lams=None,
    out_dir: str = "out",
    workers: int = 1,
    keep_results: bool = False,
) -> SweepResult:
    """One run per (lambda, n, seed) grid point; emits summary.csv,
    curves.csv, convergence.csv and a manifest.json echoing every config."""
    ns = list(ns)
    seeds = list(seeds)
    lams = [base.lam] if lams is None else list(lams)
    if not ns or not seeds or not lams:
        raise ValueError("sweep axes must be nonempty")

    os.makedirs(out_dir, exist_ok=True)
    outcome: dict[str, tuple] = {}
    failures: list[tuple[str, str]] = []
    results: list[ScenarioResult] = []

    configs = []
    for lam in lams:
        for n in ns:
            for seed in seeds:
                sid = f"{base.scenario_id}-n{n}-lam{lam:g}-s{seed}"
                try:
                    configs.append(base.replaced(n=n, seed=seed, lam=lam, scenario_id=sid))
                except Exception as exc:  # a bad grid point fails alone
                    failures.append((sid, f"{type(exc).__name__}: {exc}"))

    if workers > 1 and not keep_results:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {
                pool.submit(_sweep_point, cfg.to_dict()): cfg.scenario_id
                for cfg in configs
            }
            for fut, sid in futs.items():
                try:
                    _, srow, crows, convrow = fut.result()
                    outcome[sid] = (srow, crows, convrow)
                except Exception as exc:  # propagate per-run failures in the report
                    failures.append((sid, f"{type(exc).__name__}: {exc}"))
    else:
        for cfg in configs:
            try:
                res = run_scenario(cfg)
                outcome[cfg.scenario_id] = (
                    res.summary_row(), res.curve_rows(), res.convergence_row()
                )
                if keep_results:
                    results.append(res)
            except Exception as exc:
                failures.append((cfg.scenario_id, f"{type(exc).__name__}: {exc}"))

    summary_rows, curve_rows, conv_rows = [], [], []
    for sid in sorted(outcome):
        srow, crows, convrow = outcome[sid]
        summary_rows.append(srow)
        curve_rows.extend(crows)
        if convrow is not None:
            conv_rows.append(convrow)

    sweep = SweepResult(out_dir, summary_rows, curve_rows, conv_rows, failures, results)
    write_rows(sweep.paths["summary"], SUMMARY_COLUMNS, summary_rows)
    write_rows(sweep.paths["curves"], CURVE_COLUMNS, curve_rows)
    write_rows(sweep.paths["convergence"], CONVERGENCE_COLUMNS, conv_rows)
    manifest = {
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": __version__,
        "base_config": base.to_dict(),
        "scenarios": [
            {"scenario_id": c.scenario_id, "seed": c.seed, "config": c.to_dict()}
            for c in configs
        ],
        "failures": [{"scenario_id": s, "error": e} for s, e in failures],
    }
    with open(sweep.paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2)
    return sweep


def run_independence(cfg: ScenarioConfig, pair_grid) -> tuple[list[dict], object]:
    """Run a scenario and compute the joint-vs-product deviation rows of the
    first two tracked servers."""
    res = run_scenario(cfg)
    report = independence_distance(res.trace, m=2, pair_grid=pair_grid, warmup=cfg.warmup)
    rows = [
        {
            "scenario_id": cfg.scenario_id,
            "w1": w1, "w2": w2, "joint": joint, "product": prod, "diff": diff,
        }
        for (w1, w2, joint, prod, diff) in report.rows
    ]
    return rows, report
