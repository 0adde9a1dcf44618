"""Scenario configuration: JSON schema, validation, domain-object builders.

A scenario file is a single JSON object; unknown keys are rejected so typos
surface as validation errors. Validation collects every violation (each
naming the offending key) instead of stopping at the first.
"""

from __future__ import annotations

import copy
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fluid
from .dist import SERVICE_KINDS, ArrivalSpec, make_distribution
from .policy import IDLE_SELECTIONS, POLICY_KINDS, PolicySpec


class ConfigError(ValueError):
    """Scenario file failed to parse or validate."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ExploratoryWarning(UserWarning):
    """Scenario is outside the regime the concentration guarantees cover."""


_TOP_KEYS = {
    "scenario_id", "n", "lambda", "dist", "arrivals", "policy", "buffer",
    "horizon", "warmup", "grid", "sample_interval", "tracked_servers",
    "seed", "subsets", "initial",
}


@dataclass
class ScenarioConfig:
    scenario_id: str = "scenario"
    n: int = 100
    lam: float = 0.4
    dist: dict = field(default_factory=lambda: {"kind": "exponential"})
    arrivals: dict = field(default_factory=lambda: {"kind": "poisson"})
    policy: dict = field(default_factory=lambda: {"kind": "jiq"})
    buffer: int | None = None
    horizon: float = 1000.0
    warmup: float | None = None
    grid: dict = field(default_factory=lambda: {"kind": "auto"})
    sample_interval: float | None = None
    tracked_servers: int = 2
    seed: int = 1
    subsets: list | None = None
    initial: dict | None = None

    def __post_init__(self):
        if self.warmup is None:
            self.warmup = 0.25 * self.horizon
        if self.sample_interval is None:
            self.sample_interval = max(self.horizon / 1000.0, 1e-6)

    @property
    def exploratory(self) -> bool:
        return self.lam >= 0.5

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "n": self.n,
            "lambda": self.lam,
            "dist": copy.deepcopy(self.dist),
            "arrivals": copy.deepcopy(self.arrivals),
            "policy": copy.deepcopy(self.policy),
            "buffer": self.buffer,
            "horizon": self.horizon,
            "warmup": self.warmup,
            "grid": copy.deepcopy(self.grid),
            "sample_interval": self.sample_interval,
            "tracked_servers": self.tracked_servers,
            "seed": self.seed,
            "subsets": copy.deepcopy(self.subsets),
            "initial": copy.deepcopy(self.initial),
        }

    def replaced(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        for k, v in changes.items():
            d["lambda" if k == "lam" else k] = v
        return from_dict(d)


def from_dict(raw: dict) -> ScenarioConfig:
    """Validate a raw mapping and build a config; raises ConfigError listing
    every violation. Emits an ExploratoryWarning for lambda >= 0.5."""
    violations: list[str] = []
    for key in raw:
        if key not in _TOP_KEYS:
            violations.append(f"{key}: unknown key")

    def take(key, default, types, pred=None, desc=""):
        v = raw.get(key, default)
        if v is None and default is None:
            return None
        if not isinstance(v, types) or isinstance(v, bool):
            violations.append(f"{key}: expected {desc or types}, got {v!r}")
            return default
        if pred is not None and not pred(v):
            violations.append(f"{key}: invalid value {v!r} ({desc})")
            return default
        return v

    scenario_id = take("scenario_id", "scenario", str)
    n = take("n", 100, int, lambda v: v >= 1, "positive integer")
    lam = take("lambda", 0.4, (int, float), lambda v: v >= 0 and math.isfinite(v), ">= 0")
    horizon = take("horizon", 1000.0, (int, float), lambda v: v > 0, "> 0")
    warmup = take("warmup", None, (int, float), lambda v: v >= 0, ">= 0")
    sample_interval = take("sample_interval", None, (int, float), lambda v: v > 0, "> 0")
    tracked = take("tracked_servers", 2, int, lambda v: v >= 0, ">= 0")
    seed = take("seed", 1, int, lambda v: 0 <= v < 2**64, "64-bit integer")
    buffer = take("buffer", None, int, lambda v: v >= 1, ">= 1")

    if warmup is not None and horizon is not None and warmup >= horizon:
        violations.append("warmup: must be smaller than horizon")

    dist_spec = take("dist", {"kind": "exponential"}, dict)
    if isinstance(dist_spec, dict):
        kind = dist_spec.get("kind")
        if kind not in SERVICE_KINDS:
            violations.append(f"dist.kind: expected one of {SERVICE_KINDS}, got {kind!r}")
        if not isinstance(dist_spec.get("params", {}), dict):
            violations.append("dist.params: expected an object")
        extra = set(dist_spec) - {"kind", "params", "normalize"}
        if extra:
            violations.append(f"dist: unknown keys {sorted(extra)}")

    arr_spec = take("arrivals", {"kind": "poisson"}, dict)
    if isinstance(arr_spec, dict):
        akind = arr_spec.get("kind", "poisson")
        if akind not in ("poisson", "renewal"):
            violations.append(f"arrivals.kind: expected poisson or renewal, got {akind!r}")
        if akind == "renewal" and not isinstance(arr_spec.get("base"), dict):
            violations.append("arrivals.base: renewal arrivals need a base law object")

    pol_spec = take("policy", {"kind": "jiq"}, dict)
    if isinstance(pol_spec, dict):
        pkind = pol_spec.get("kind", "jiq")
        if pkind not in POLICY_KINDS:
            violations.append(f"policy.kind: expected one of {POLICY_KINDS}, got {pkind!r}")
        sel = pol_spec.get("idle_selection", "uniform")
        if sel not in IDLE_SELECTIONS:
            violations.append(f"policy.idle_selection: expected one of {IDLE_SELECTIONS}")
        if pkind == "jsq_d":
            d = pol_spec.get("d", 1)
            if not isinstance(d, int) or d < 1 or (isinstance(n, int) and d > n):
                violations.append("policy.d: jsq_d needs an integer 1 <= d <= n")

    grid_spec = take("grid", {"kind": "auto"}, dict)
    if isinstance(grid_spec, dict):
        gkind = grid_spec.get("kind", "auto")
        if gkind not in ("auto", "geometric", "linear"):
            violations.append(f"grid.kind: expected auto, geometric or linear, got {gkind!r}")
        elif gkind != "auto":
            if not isinstance(grid_spec.get("w_max"), (int, float)) or grid_spec["w_max"] <= 0:
                violations.append("grid.w_max: geometric/linear grids need w_max > 0")

    subsets = raw.get("subsets")
    if subsets is not None:
        if not isinstance(subsets, list) or not all(
            isinstance(s, dict) and isinstance(s.get("tag"), int)
            and isinstance(s.get("size"), int) and s["size"] >= 0
            for s in subsets
        ):
            violations.append("subsets: expected a list of {tag: int, size: int >= 0}")
        elif isinstance(n, int) and sum(s["size"] for s in subsets) != n:
            violations.append(f"subsets: sizes must sum to n={n}")

    initial = raw.get("initial")
    if initial is not None:
        if not isinstance(initial, dict) or initial.get("kind") not in ("all_idle", "custom"):
            violations.append("initial.kind: expected all_idle or custom")
        elif initial["kind"] == "custom":
            wl = initial.get("workloads")
            if not isinstance(wl, list) or (isinstance(n, int) and len(wl) != n):
                violations.append("initial.workloads: custom start needs a length-n list")
            elif any(not isinstance(x, (int, float)) or x < 0 for x in wl):
                violations.append("initial.workloads: entries must be >= 0")

    if violations:
        raise ConfigError(violations)

    cfg = ScenarioConfig(
        scenario_id=scenario_id,
        n=n,
        lam=float(lam),
        dist=copy.deepcopy(dist_spec),
        arrivals=copy.deepcopy(arr_spec),
        policy=copy.deepcopy(pol_spec),
        buffer=buffer,
        horizon=float(horizon),
        warmup=None if warmup is None else float(warmup),
        grid=copy.deepcopy(grid_spec),
        sample_interval=None if sample_interval is None else float(sample_interval),
        tracked_servers=tracked,
        seed=seed,
        subsets=copy.deepcopy(subsets),
        initial=copy.deepcopy(initial),
    )
    if cfg.lam >= 0.5:
        warnings.warn(
            f"lambda={cfg.lam:g} is at or above 1/2; concentration is only "
            "guaranteed below 1/2, treating this run as exploratory",
            ExploratoryWarning,
            stacklevel=2,
        )
    return cfg


def parse_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"file: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"file: not valid JSON ({exc})"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["file: top level must be a JSON object"])
    return from_dict(raw)


# -- domain builders ---------------------------------------------------------


def build_distribution(cfg: ScenarioConfig):
    spec = cfg.dist
    return make_distribution(
        spec["kind"], normalize=spec.get("normalize", True), **spec.get("params", {})
    )


def build_arrivals(cfg: ScenarioConfig) -> ArrivalSpec:
    spec = cfg.arrivals
    if spec.get("kind", "poisson") == "poisson":
        return ArrivalSpec("poisson", cfg.lam)
    base_spec = spec["base"]
    base = make_distribution(
        base_spec["kind"], normalize=True, **base_spec.get("params", {})
    )
    return ArrivalSpec("renewal", cfg.lam, base=base)


def build_policy(cfg: ScenarioConfig) -> PolicySpec:
    spec = cfg.policy
    return PolicySpec(
        kind=spec.get("kind", "jiq"),
        d=spec.get("d", 1),
        idle_selection=spec.get("idle_selection", "uniform"),
        lambda_bar=spec.get("lambda_bar"),
        prefer_tag=spec.get("prefer_tag"),
    )


def resolve_grid(cfg: ScenarioConfig, dist) -> np.ndarray:
    spec = cfg.grid
    kind = spec.get("kind", "auto")
    if kind == "auto":
        lam = min(cfg.lam, 0.99)
        return fluid.default_grid(lam, dist, points=spec.get("points", 201))
    if kind == "linear":
        return fluid.linear_grid(spec["w_max"], spec.get("points", 201))
    return fluid.default_grid(
        min(cfg.lam, 0.99),
        dist,
        points=spec.get("points", 201),
        w_max=spec["w_max"],
        first=spec.get("first", 0.05),
    )


def subset_tags(cfg: ScenarioConfig) -> list[int] | None:
    if cfg.subsets is None:
        return None
    tags: list[int] = []
    for s in cfg.subsets:
        tags.extend([s["tag"]] * s["size"])
    return tags


def initial_state(cfg: ScenarioConfig):
    if cfg.initial is None or cfg.initial.get("kind") == "all_idle":
        return None
    return cfg.initial["workloads"]
