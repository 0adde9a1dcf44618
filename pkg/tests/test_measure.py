"""Stationary estimation, waiting probability, independence, bound checks."""

import numpy as np
import pytest

from jiqlab.dist import ArrivalSpec, make_distribution
from jiqlab.engine import Engine, SamplePlan
from jiqlab.fluid import TailCurve, default_grid, equilibrium_point, mg1_bound, sup_distance
from jiqlab.measure import (
    InsufficientDataError,
    SymmetryWarning,
    Trace,
    check_conservation,
    convergence_report,
    estimate_stationary,
    independence_distance,
    verify_mg1_bound,
    waiting_probability,
)
from jiqlab.policy import PolicySpec

EXP = make_distribution("exponential")
GRID = default_grid(0.4, EXP)


def run_jiq(n, lam, horizon, seed, interval=1.0, tracked=2, policy=None, grid=GRID):
    eng = Engine(
        n, EXP, ArrivalSpec("poisson", lam), policy or PolicySpec(kind="jiq"),
        grid=grid, seed=seed, tracked=tracked,
    )
    return eng.run(horizon, SamplePlan(interval=interval))


@pytest.fixture(scope="module")
def base_trace():
    return run_jiq(n=200, lam=0.4, horizon=600.0, seed=14, interval=0.5)


def test_zero_load_estimates_zero():
    tr = run_jiq(n=20, lam=0.0, horizon=200.0, seed=1)
    est = estimate_stationary(tr, warmup=50.0)
    assert est.busy_frac == 0.0
    assert np.all(est.tail.values == 0.0)
    assert est.wait_prob == 0.0 and est.wait_prob_halfwidth == 0.0


def test_busy_frac_is_the_curve_at_zero(base_trace):
    est = estimate_stationary(base_trace, warmup=150.0)
    assert est.busy_frac == est.tail.values[0]
    assert 0.35 < est.busy_frac < 0.45


def test_insufficient_snapshots_raises(base_trace):
    with pytest.raises(InsufficientDataError):
        estimate_stationary(base_trace, warmup=599.0)


def test_waiting_probability_single_server_pasta():
    # n=1 under jiq degenerates to a single M/GI/1 queue: arrivals see the
    # stationary busy probability, which is the load
    tr = run_jiq(n=1, lam=0.4, horizon=20_000.0, seed=3, interval=20.0)
    p, hw = waiting_probability(tr, warmup=2000.0)
    assert p == pytest.approx(0.4, abs=0.03)
    assert hw < 0.02


def test_waiting_probability_needs_arrivals():
    tr = run_jiq(n=20, lam=0.4, horizon=30.0, seed=5, interval=0.2)
    with pytest.raises(InsufficientDataError):
        waiting_probability(tr, warmup=29.9)


def _synthetic_trace(tracked, grid=None, idle_selection="uniform"):
    s = tracked.shape[0]
    grid = np.array([0.0, 1.0]) if grid is None else grid
    k = len(grid)
    times = np.arange(1.0, s + 1.0)
    zeros_sk = np.zeros((s, k), dtype=np.int64)
    return Trace(
        grid=grid,
        snap_times=times,
        tail_counts=zeros_sk,
        tag_tail_counts={0: zeros_sk},
        busy_counts=np.zeros(s, dtype=np.int64),
        tag_busy={0: np.zeros(s, dtype=np.int64)},
        tracked=tracked,
        ledgers={},
        events_at=np.zeros(s, dtype=np.int64),
        arrivals_t=np.zeros(0),
        arrivals_dest=np.zeros(0, dtype=int),
        arrivals_was_idle=np.zeros(0, dtype=bool),
        arrivals_blocked=np.zeros(0, dtype=bool),
        events_processed=0,
        total_arrivals=0,
        blocked_total=0,
        n=2,
        horizon=float(s),
        meta={"idle_selection": idle_selection, "lam": 0.4},
    )


def test_independence_self_test_on_independent_streams():
    # two genuinely independent workload streams: D stays within the
    # binomial noise of the estimator
    rng = np.random.default_rng(100)
    s = 20_000
    tracked = rng.exponential(1.0, (s, 2)) * (rng.random((s, 2)) < 0.4)
    tr = _synthetic_trace(tracked)
    rep = independence_distance(tr, m=2, pair_grid=[0.0, 0.5, 1.0, 2.0], warmup=0.0)
    assert rep.distance <= 3.0 * np.sqrt(0.25 / s) * 2
    assert rep.n_samples == s


def test_independence_warns_without_symmetry():
    rng = np.random.default_rng(4)
    tracked = rng.exponential(1.0, (500, 2))
    tr = _synthetic_trace(tracked, idle_selection="lifo")
    with pytest.warns(SymmetryWarning):
        rep = independence_distance(tr, m=2, pair_grid=[0.0, 1.0], warmup=0.0)
    assert not rep.symmetric


def test_independence_three_way_product_form():
    rng = np.random.default_rng(9)
    tracked = rng.exponential(1.0, (30_000, 3)) * (rng.random((30_000, 3)) < 0.5)
    tr = _synthetic_trace(tracked)
    rep = independence_distance(tr, m=3, pair_grid=[0.0, 1.0], warmup=0.0)
    assert rep.distance < 0.02
    assert rep.rows == []  # pair rows only exist for m == 2


def test_independence_requires_tracked_servers(base_trace):
    with pytest.raises(InsufficientDataError):
        independence_distance(base_trace, m=5, pair_grid=[0.0], warmup=0.0)


def test_verify_bound_flags_violations():
    grid = np.array([0.0, 1.0, 2.0])
    est_tail = TailCurve(grid, np.array([0.5, 0.3, 0.1]), stderr=np.zeros(3))
    from jiqlab.measure import StationaryEstimate

    est = StationaryEstimate(est_tail, 0.5, 0.0, None, None, n=10, scenario_id="t")
    above = TailCurve(grid, np.array([1.0, 0.6, 0.2]), kind="mg1_bound",
                      stderr=np.zeros(3))
    assert verify_mg1_bound(est, above).passed
    below = TailCurve(grid, np.array([0.4, 0.25, 0.05]), kind="mg1_bound",
                      stderr=np.zeros(3))
    rep = verify_mg1_bound(est, below)
    assert not rep.passed and len(rep.violations) == 3


def test_single_server_busy_matches_cycle_bound_oracle():
    # two independent estimators of the same M/GI/1 object: the stationary
    # busy probability equals lam*(1-lam) times the expected per-cycle busy
    # time (cycle length averages 1/(lam*(1-lam)))
    lam = 0.4
    tr = run_jiq(n=1, lam=lam, horizon=20_000.0, seed=8, interval=10.0)
    est = estimate_stationary(tr, warmup=2000.0)
    bound = mg1_bound(lam, EXP, GRID, 20_000, np.random.default_rng(12))
    predicted = lam * (1 - lam) * bound.values[0]
    tol = 3 * (est.busy_frac_halfwidth + lam * (1 - lam) * bound.stderr[0])
    assert abs(est.busy_frac - predicted) <= max(tol, 0.02)


def test_convergence_report_trends():
    from jiqlab.measure import StationaryEstimate

    grid = np.array([0.0, 1.0])
    target = TailCurve(grid, np.array([0.4, 0.2]))

    def est(n, dist_offset, wp):
        tail = TailCurve(grid, np.array([0.4 + dist_offset, 0.2]),
                         stderr=np.zeros(2))
        return StationaryEstimate(tail, 0.4, 0.0, wp, 0.01, n=n, scenario_id=f"n{n}")

    rep = convergence_report([est(10, 0.1, 0.05), est(100, 0.05, 0.02),
                              est(1000, 0.01, 0.001)], target)
    assert rep.sup_dist_decreasing and rep.wait_prob_decreasing
    assert rep.rows[0][2] == pytest.approx(0.1)
    rep2 = convergence_report([est(10, 0.01, 0.0), est(100, 0.05, 0.0)], target)
    assert not rep2.sup_dist_decreasing

    ident = convergence_report([est(10, 0.0, 0.0), est(100, 0.0, 0.0)], target)
    assert ident.rows[0][2] == 0.0


def test_subset_tails_add_up():
    tags = [0] * 120 + [1] * 80
    eng = Engine(
        200, EXP, ArrivalSpec("poisson", 0.4), PolicySpec(kind="jiq"),
        grid=GRID, seed=19, subset_tags=tags,
    )
    tr = eng.run(400.0, SamplePlan(interval=0.5))
    est = estimate_stationary(tr, warmup=100.0)
    total = est.subset_tails[0].values + est.subset_tails[1].values
    assert np.allclose(total, est.tail.values, atol=1e-12)


def test_estimate_curves_are_monotone(base_trace):
    est = estimate_stationary(base_trace, warmup=150.0)
    assert np.all(np.diff(est.tail.values) <= 1e-12)
    assert np.all(np.diff(base_trace.tail_counts, axis=1) <= 0)


def test_conservation_checker_catches_corruption(base_trace):
    rep = check_conservation(base_trace)
    assert rep.ok
    broken = base_trace.ledgers[0].work_in.copy()
    broken[-1] += 1.0
    base_trace.ledgers[0].work_in = broken
    rep2 = check_conservation(base_trace)
    assert not rep2.ok and any("workload" in v for v in rep2.violations)
    broken[-1] -= 1.0  # restore for other tests


def test_estimator_consistency_across_horizons():
    # doubling the averaging window (fresh seed) moves the busy fraction by
    # less than the sum of the two half-widths in at least 19 of 20 pairs
    hits = 0
    for rep in range(20):
        t1 = run_jiq(n=50, lam=0.4, horizon=600.0, seed=1000 + rep, interval=0.5)
        t2 = run_jiq(n=50, lam=0.4, horizon=1200.0, seed=2000 + rep, interval=0.5)
        e1 = estimate_stationary(t1, warmup=150.0)
        e2 = estimate_stationary(t2, warmup=300.0)
        if abs(e1.busy_frac - e2.busy_frac) < e1.busy_frac_halfwidth + e2.busy_frac_halfwidth:
            hits += 1
    assert hits >= 19
