"""Figure rendering from sweep CSV outputs.

Every figure reads only the documented CSV contract; rows are sorted
before plotting so re-rendering identical inputs produces identical files.
"""

from __future__ import annotations

import csv
import html
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURES = ("convergence", "tails", "bound", "independence")


class InputError(ValueError):
    """Missing, empty, or malformed input CSVs."""


def _read_csv(path: str, required: tuple[str, ...]) -> list[dict]:
    if not os.path.exists(path):
        raise InputError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _f(value: str) -> float:
    return float(value) if value != "" else float("nan")


def _savefig(fig, out_dir: str, name: str, fmt: str) -> str:
    path = os.path.join(out_dir, f"{name}.{fmt}")
    fig.savefig(path, metadata={"Date": None} if fmt == "svg" else None)
    plt.close(fig)
    return path


def _n_by_scenario(in_dir: str) -> dict[str, int]:
    rows = _read_csv(os.path.join(in_dir, "summary.csv"), ("scenario_id", "n"))
    return {r["scenario_id"]: int(r["n"]) for r in rows}


def render_convergence(in_dir: str, out_dir: str, fmt: str) -> dict:
    rows = _read_csv(
        os.path.join(in_dir, "convergence.csv"),
        ("scenario_id", "n", "sup_dist", "wait_prob"),
    )
    by_n: dict[int, list] = defaultdict(list)
    for r in rows:
        by_n[int(r["n"])].append((_f(r["sup_dist"]), _f(r["wait_prob"])))
    ns = sorted(by_n)
    sup = [float(np.nanmean([v[0] for v in by_n[n]])) for n in ns]
    wait = [float(np.nanmean([v[1] for v in by_n[n]])) for n in ns]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, sup, "o-", label="sup distance to equilibrium")
    ax.plot(ns, wait, "s--", label="waiting probability")
    ax.set_xscale("log")
    ax.set_xlabel("servers n")
    ax.set_ylabel("value")
    ax.set_title("Convergence with system size")
    ax.grid(True, alpha=0.3)
    ax.legend()
    path = _savefig(fig, out_dir, "convergence", fmt)
    return {"path": path, "points": len(ns), "series": 2}


def render_tails(in_dir: str, out_dir: str, fmt: str) -> dict:
    rows = _read_csv(
        os.path.join(in_dir, "curves.csv"), ("scenario_id", "kind", "w", "value")
    )
    n_of = _n_by_scenario(in_dir)
    empirical: dict[str, list] = defaultdict(list)
    equilibria: dict[tuple, list] = {}
    for r in rows:
        point = (_f(r["w"]), _f(r["value"]))
        if r["kind"] == "empirical":
            empirical[r["scenario_id"]].append(point)
        elif r["kind"] == "equilibrium":
            equilibria.setdefault(r["scenario_id"], []).append(point)
    if not empirical:
        raise InputError("curves.csv: no empirical curves to plot")

    fig, ax = plt.subplots(figsize=(6, 4))
    for sid in sorted(empirical):
        pts = sorted(empirical[sid])
        label = f"n={n_of[sid]}" if sid in n_of else sid
        ax.plot([p[0] for p in pts], [p[1] for p in pts], alpha=0.8, label=label)
    # equilibrium curves repeat per scenario; draw each distinct shape once
    seen = set()
    for sid in sorted(equilibria):
        pts = sorted(equilibria[sid])
        key = tuple(round(v, 12) for _, v in pts)
        if key in seen:
            continue
        seen.add(key)
        ax.plot(
            [p[0] for p in pts], [p[1] for p in pts],
            "k--", linewidth=2, label="equilibrium",
        )
    ax.set_xlabel("workload level w")
    ax.set_ylabel("fraction of servers above w")
    ax.set_title("Stationary workload tails vs equilibrium")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    path = _savefig(fig, out_dir, "tails", fmt)
    return {"path": path, "points": len(empirical), "series": len(empirical) + len(seen)}


def render_bound(in_dir: str, out_dir: str, fmt: str) -> dict:
    rows = _read_csv(
        os.path.join(in_dir, "curves.csv"),
        ("scenario_id", "kind", "w", "value", "stderr"),
    )
    bound = sorted(
        (_f(r["w"]), _f(r["value"]), _f(r["stderr"]))
        for r in rows
        if r["kind"] == "mg1_bound"
    )
    empirical: dict[str, list] = defaultdict(list)
    for r in rows:
        if r["kind"] == "empirical":
            empirical[r["scenario_id"]].append((_f(r["w"]), _f(r["value"])))
    if not bound:
        raise InputError("curves.csv: no mg1_bound rows for the bound figure")

    fig, ax = plt.subplots(figsize=(6, 4))
    w = np.array([p[0] for p in bound])
    v = np.array([p[1] for p in bound])
    se = np.nan_to_num(np.array([p[2] for p in bound]))
    ax.plot(w, v, "k-", label="per-cycle bound")
    ax.fill_between(w, v - 3 * se, v + 3 * se, color="k", alpha=0.15, label="+- 3 se")
    for sid in sorted(empirical):
        pts = sorted(empirical[sid])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], alpha=0.8, label=sid)
    ax.set_xlabel("workload level w")
    ax.set_ylabel("mean tail / expected time above w")
    ax.set_title("Stationary tails under the cycle bound")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    path = _savefig(fig, out_dir, "bound", fmt)
    return {"path": path, "points": len(w), "series": 1 + len(empirical)}


def render_independence(in_dir: str, out_dir: str, fmt: str) -> dict:
    rows = _read_csv(
        os.path.join(in_dir, "independence.csv"),
        ("scenario_id", "w1", "w2", "joint", "product", "diff"),
    )
    n_of = _n_by_scenario(in_dir)
    d_of: dict[str, float] = defaultdict(float)
    for r in rows:
        d_of[r["scenario_id"]] = max(d_of[r["scenario_id"]], abs(_f(r["diff"])))
    pts = sorted((n_of.get(sid, 0), d) for sid, d in d_of.items())

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-")
    ax.set_xscale("log")
    ax.set_xlabel("servers n")
    ax.set_ylabel("max |joint - product|")
    ax.set_title("Joint-law deviation from product form")
    ax.grid(True, alpha=0.3)
    path = _savefig(fig, out_dir, "independence", fmt)
    return {"path": path, "points": len(pts), "series": 1}


_RENDERERS = {
    "convergence": render_convergence,
    "tails": render_tails,
    "bound": render_bound,
    "independence": render_independence,
}


def write_index(out_dir: str, meta: dict) -> str:
    parts = [
        "<!doctype html><html><head><meta charset='utf-8'>",
        "<title>jiqlab report</title></head><body>",
        "<h1>jiqlab report</h1>",
    ]
    for name in sorted(meta):
        info = meta[name]
        fname = html.escape(os.path.basename(info["path"]))
        parts.append(
            f"<h2>{html.escape(name)}</h2>"
            f"<p>{info['points']} points, {info['series']} series</p>"
            f"<img src='{fname}' alt='{html.escape(name)}' style='max-width:48em'>"
        )
    parts.append("</body></html>")
    path = os.path.join(out_dir, "index.html")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
    return path


def render(in_dir: str, out_dir: str, figures=FIGURES, fmt: str = "png") -> dict:
    """Render the requested figures plus index.html; returns per-figure
    metadata (path, point and series counts)."""
    if not os.path.isdir(in_dir):
        raise InputError(f"{in_dir}: input directory not found")
    if fmt not in ("png", "svg"):
        raise InputError(f"unsupported format {fmt!r}; use png or svg")
    unknown = [f for f in figures if f not in _RENDERERS]
    if unknown:
        raise InputError(f"unknown figures {unknown}; known: {list(FIGURES)}")
    os.makedirs(out_dir, exist_ok=True)
    meta = {}
    for name in figures:
        meta[name] = _RENDERERS[name](in_dir, out_dir, fmt)
    meta["index"] = {"path": write_index(out_dir, meta), "points": len(meta), "series": 0}
    return meta
