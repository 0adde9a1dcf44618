"""Estimation and verification on simulation traces.

Traces carry periodic state snapshots (tail counts per subset tag, tracked
per-server workloads, accounting checkpoints) plus per-arrival routing
records. Stationary quantities are time averages after a warmup, with
batch-means confidence intervals; waiting probability is an arrival
average, which is unbiased under Poisson input.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .fluid import GridMismatchError, TailCurve, sup_distance

N_BATCHES = 20
_T_CRIT = float(stats.t.ppf(0.975, N_BATCHES - 1))
_Z95 = 1.959963984540054


class InsufficientDataError(ValueError):
    """Not enough post-warmup snapshots or arrivals to estimate."""


class SymmetryWarning(UserWarning):
    """Independence statistic computed under a non-symmetric idle selection."""


@dataclass
class LedgerSeries:
    """Per-subset accounting checkpoints, one row per snapshot.

    work_in / work_done are cumulative admitted and processed work;
    arrivals_to_idle / departures_to_idle count the +1/-1 jumps of the busy
    count; rho_integral is the time integral of the counter-derived busy
    count; state_work / state_busy are read directly off the queue states at
    the snapshot instant; marks counts arrivals (by destination subset) whose
    sampled service exceeds each grid level.
    """

    work_in: np.ndarray
    work_done: np.ndarray
    arrivals_to_idle: np.ndarray
    departures_to_idle: np.ndarray
    rho_integral: np.ndarray
    state_work: np.ndarray
    state_busy: np.ndarray
    marks: np.ndarray
    blocked: np.ndarray


@dataclass
class Trace:
    grid: np.ndarray
    snap_times: np.ndarray
    tail_counts: np.ndarray            # (S, K) servers with W > w, whole system
    tag_tail_counts: dict[int, np.ndarray]
    busy_counts: np.ndarray            # (S,)
    tag_busy: dict[int, np.ndarray]
    tracked: np.ndarray                # (S, m) workloads of servers 0..m-1
    ledgers: dict[int, LedgerSeries]
    events_at: np.ndarray              # (S,) events processed by snapshot time
    arrivals_t: np.ndarray
    arrivals_dest: np.ndarray
    arrivals_was_idle: np.ndarray
    arrivals_blocked: np.ndarray
    events_processed: int
    total_arrivals: int
    blocked_total: int
    n: int
    horizon: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.snap_times) > 1 and np.any(np.diff(self.snap_times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if len(self.arrivals_t) > 1 and np.any(np.diff(self.arrivals_t) < 0):
            raise ValueError("arrival records must be time-ordered")

    def post_warmup(self, warmup: float) -> np.ndarray:
        return self.snap_times > warmup


@dataclass
class StationaryEstimate:
    tail: TailCurve                    # stderr holds per-point standard errors
    busy_frac: float
    busy_frac_halfwidth: float
    wait_prob: float | None
    wait_prob_halfwidth: float | None
    n: int
    scenario_id: str
    subset_tails: dict[int, TailCurve] = field(default_factory=dict)


def _batch_se(rows: np.ndarray) -> np.ndarray:
    """Standard error of the column means via batch means."""
    batches = np.array_split(rows, N_BATCHES, axis=0)
    bm = np.stack([b.mean(axis=0) for b in batches])
    return bm.std(axis=0, ddof=1) / np.sqrt(N_BATCHES)


def estimate_stationary(trace: Trace, warmup: float, grid=None) -> StationaryEstimate:
    """Time-average the post-warmup snapshots into a stationary tail curve.

    The busy fraction is the curve value at w = 0 (same estimator). Needs at
    least 100 post-warmup snapshots.
    """
    mask = trace.post_warmup(warmup)
    if int(mask.sum()) < 100:
        raise InsufficientDataError(
            f"{int(mask.sum())} post-warmup snapshots; need at least 100"
        )
    if grid is not None and (
        len(grid) != len(trace.grid) or not np.allclose(grid, trace.grid, atol=1e-12)
    ):
        raise GridMismatchError("requested grid differs from the trace grid")
    rows = trace.tail_counts[mask] / trace.n
    mean = rows.mean(axis=0)
    se = _batch_se(rows)
    tail = TailCurve(trace.grid, mean, kind="empirical", stderr=se)

    try:
        wp, wp_hw = waiting_probability(trace, warmup)
    except InsufficientDataError:
        wp, wp_hw = None, None

    subset_tails = {}
    if len(trace.tag_tail_counts) > 1:
        for tag, counts in trace.tag_tail_counts.items():
            subset_tails[tag] = TailCurve(
                trace.grid, counts[mask].mean(axis=0) / trace.n, kind="empirical"
            )

    return StationaryEstimate(
        tail=tail,
        busy_frac=float(mean[0]),
        busy_frac_halfwidth=float(_T_CRIT * se[0]),
        wait_prob=wp,
        wait_prob_halfwidth=wp_hw,
        n=trace.n,
        scenario_id=trace.meta.get("scenario_id", ""),
        subset_tails=subset_tails,
    )


def waiting_probability(trace: Trace, warmup: float) -> tuple[float, float]:
    """Fraction of post-warmup arrivals that found their destination busy
    (or were blocked), with a binomial 95% half-width."""
    mask = trace.arrivals_t > warmup
    count = int(mask.sum())
    if count == 0 and trace.meta.get("lam", None) == 0:
        return 0.0, 0.0
    if count < 100:
        raise InsufficientDataError(f"{count} post-warmup arrivals; need at least 100")
    waited = ~trace.arrivals_was_idle[mask] | trace.arrivals_blocked[mask]
    p = float(waited.mean())
    hw = _Z95 * np.sqrt(max(p * (1.0 - p), 0.0) / count)
    return p, float(hw)


@dataclass
class IndependenceReport:
    distance: float                    # max |joint - product| over the level grid
    rows: list[tuple]                  # (w1, w2, joint, product, diff) when m == 2
    marginal: TailCurve                # empirical tail of tracked server 0
    n_samples: int
    symmetric: bool


def independence_distance(
    trace: Trace, m: int, pair_grid, warmup: float = 0.0
) -> IndependenceReport:
    """Deviation of the joint workload-tail law of m tracked servers from
    the product of its marginals, maximized over the level grid."""
    if m < 2:
        raise ValueError("independence distance needs m >= 2")
    if trace.tracked.shape[1] < m:
        raise InsufficientDataError(
            f"trace tracked {trace.tracked.shape[1]} servers; need {m}"
        )
    mask = trace.post_warmup(warmup)
    samples = trace.tracked[mask][:, :m]
    if samples.shape[0] < 100:
        raise InsufficientDataError("need at least 100 post-warmup joint samples")

    symmetric = trace.meta.get("idle_selection", "uniform") == "uniform"
    if not symmetric:
        warnings.warn(
            "idle selection is not uniform; asymptotic independence is not "
            "guaranteed under this policy",
            SymmetryWarning,
        )

    pair_grid = np.asarray(pair_grid, dtype=float)
    # indicator matrices per tracked server: (samples, levels)
    ind = [samples[:, j][:, None] > pair_grid[None, :] for j in range(m)]
    marg = [x.mean(axis=0) for x in ind]

    best = 0.0
    rows: list[tuple] = []
    for combo in itertools.product(range(len(pair_grid)), repeat=m):
        joint = np.logical_and.reduce([ind[j][:, combo[j]] for j in range(m)]).mean()
        prod = float(np.prod([marg[j][combo[j]] for j in range(m)]))
        diff = float(joint - prod)
        best = max(best, abs(diff))
        if m == 2:
            w1, w2 = pair_grid[combo[0]], pair_grid[combo[1]]
            rows.append((float(w1), float(w2), float(joint), prod, diff))

    marginal_vals = (samples[:, 0][:, None] > trace.grid[None, :]).mean(axis=0)
    marginal = TailCurve(trace.grid, marginal_vals, kind="empirical")
    return IndependenceReport(
        distance=float(best),
        rows=rows,
        marginal=marginal,
        n_samples=samples.shape[0],
        symmetric=symmetric,
    )


@dataclass
class BoundCheckReport:
    passed: bool
    violations: list[tuple]            # (w, empirical, bound, slack)
    checked_points: int


def verify_mg1_bound(estimate: StationaryEstimate, bound: TailCurve) -> BoundCheckReport:
    """Flag grid points where the empirical mean tail exceeds the cycle
    bound by more than 3 combined standard errors."""
    emp = estimate.tail
    if len(emp.grid) != len(bound.grid) or not np.allclose(emp.grid, bound.grid, atol=1e-12):
        raise GridMismatchError("estimate and bound use different grids")
    se_emp = emp.stderr if emp.stderr is not None else np.zeros_like(emp.values)
    se_b = bound.stderr if bound.stderr is not None else np.zeros_like(bound.values)
    slack = 3.0 * np.sqrt(se_emp**2 + se_b**2)
    over = emp.values > bound.values + slack
    violations = [
        (float(emp.grid[i]), float(emp.values[i]), float(bound.values[i]), float(slack[i]))
        for i in np.nonzero(over)[0]
    ]
    return BoundCheckReport(
        passed=not violations, violations=violations, checked_points=len(emp.grid)
    )


@dataclass
class ConvergenceReport:
    rows: list[tuple]                  # (scenario_id, n, sup_dist, wait_prob, ci)
    by_n: list[tuple]                  # (n, mean sup_dist, mean wait_prob)
    sup_dist_decreasing: bool
    wait_prob_decreasing: bool


def convergence_report(estimates: list[StationaryEstimate], target: TailCurve) -> ConvergenceReport:
    """Distance-to-target and waiting probability per system size."""
    if len(estimates) < 2:
        raise ValueError("convergence report needs at least 2 estimates")
    rows = []
    for est in estimates:
        d = sup_distance(est.tail, target)
        rows.append(
            (est.scenario_id, est.n, d, est.wait_prob, est.wait_prob_halfwidth)
        )
    by_n_map: dict[int, list] = {}
    for _, n, d, wp, _ in rows:
        by_n_map.setdefault(n, []).append((d, wp))
    by_n = []
    for n in sorted(by_n_map):
        ds = [d for d, _ in by_n_map[n]]
        wps = [wp for _, wp in by_n_map[n] if wp is not None]
        by_n.append((n, float(np.mean(ds)), float(np.mean(wps)) if wps else None))
    sup_dec = all(b[1] < a[1] for a, b in zip(by_n, by_n[1:]))
    wait_vals = [w for _, _, w in by_n if w is not None]
    wait_dec = len(wait_vals) == len(by_n) and all(
        b < a for a, b in zip(wait_vals, wait_vals[1:])
    )
    return ConvergenceReport(rows, by_n, sup_dec, wait_dec)


@dataclass
class ConservationReport:
    ok: bool
    violations: list[str]
    checked: int


def check_conservation(trace: Trace, tol_per_event: float = 1e-9) -> ConservationReport:
    """Verify the accounting identities at every checkpoint and subset.

    Work: state workload == admitted - processed, within an event-count
    scaled float tolerance. Busy count: state count == idle-join minus
    idle-leave counters, exactly. Depletion: processed work == time integral
    of the counter-derived busy count, same tolerance.
    """
    violations = []
    checked = 0
    tol = tol_per_event * np.maximum(trace.events_at, 1) + 1e-9
    for tag, led in trace.ledgers.items():
        checked += len(led.work_in)
        work_gap = np.abs(led.state_work - (led.work_in - led.work_done))
        for i in np.nonzero(work_gap > tol)[0]:
            violations.append(
                f"tag {tag} t={trace.snap_times[i]:g}: workload {led.state_work[i]:.9g} "
                f"!= in-out {led.work_in[i] - led.work_done[i]:.9g}"
            )
        busy_gap = led.state_busy - (led.arrivals_to_idle - led.departures_to_idle)
        for i in np.nonzero(busy_gap != 0)[0]:
            violations.append(
                f"tag {tag} t={trace.snap_times[i]:g}: busy count off by {busy_gap[i]}"
            )
        rho_gap = np.abs(led.work_done - led.rho_integral)
        for i in np.nonzero(rho_gap > tol)[0]:
            violations.append(
                f"tag {tag} t={trace.snap_times[i]:g}: processed work "
                f"{led.work_done[i]:.9g} != busy-time integral {led.rho_integral[i]:.9g}"
            )
    return ConservationReport(ok=not violations, violations=violations, checked=checked)


def check_no_arrival_depletion(
    trace: Trace, tag: int, i1: int, i2: int, tol_per_event: float = 1e-9
) -> dict:
    """Over snapshots [i1, i2], confirm the tagged subset received no
    arrivals and that its workload drop equals its busy-time integral."""
    led = trace.ledgers[tag]
    marks_in = int(led.marks[i2][0] - led.marks[i1][0])
    work_in = float(led.work_in[i2] - led.work_in[i1])
    d_work = float(led.state_work[i2] - led.state_work[i1])
    d_done = float(led.work_done[i2] - led.work_done[i1])
    d_rho = float(led.rho_integral[i2] - led.rho_integral[i1])
    tol = tol_per_event * max(trace.events_at[i2], 1) + 1e-9
    return {
        "no_arrivals": marks_in == 0 and work_in == 0.0,
        "depletion_gap": abs(d_work + d_done),
        "integral_gap": abs(d_done - d_rho),
        "tol": tol,
        "ok": marks_in == 0 and work_in == 0.0
        and abs(d_work + d_done) <= tol and abs(d_done - d_rho) <= tol,
    }


def check_arrival_marks(trace: Trace, dist, lam: float, snap_index: int = -1) -> tuple[float, float]:
    """Compare cumulative arrival marks against lam * t * F^c(w).

    Returns (max deviation over the grid, 3-sigma bound sqrt(lam t / n)*3).
    """
    t = float(trace.snap_times[snap_index])
    total = sum(led.marks[snap_index] for led in trace.ledgers.values())
    scaled = total / trace.n
    target = np.array([lam * t * dist.tail(w) for w in trace.grid])
    dev = float(np.max(np.abs(scaled - target)))
    bound = 3.0 * np.sqrt(lam * t / trace.n)
    return dev, bound
