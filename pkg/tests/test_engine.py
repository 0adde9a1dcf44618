"""Event loop, workload dynamics, accounting, determinism."""

import math

import numpy as np
import pytest

from jiqlab.dist import ArrivalSpec, make_distribution
from jiqlab.engine import Engine, EventBudgetError, SamplePlan, SimulationError
from jiqlab.fluid import default_grid
from jiqlab.measure import check_arrival_marks, check_conservation
from jiqlab.policy import PolicySpec, PoolDesyncError

EXP = make_distribution("exponential")
DET = make_distribution("deterministic", value=1.0)
GRID = default_grid(0.4, EXP)


def mk_engine(n=10, lam=0.4, dist=EXP, policy=None, arrivals=None, **kw):
    return Engine(
        n,
        dist,
        arrivals or ArrivalSpec("poisson", lam),
        policy or PolicySpec(kind="jiq"),
        grid=kw.pop("grid", GRID),
        **kw,
    )


def test_init_all_idle():
    eng = mk_engine(n=10)
    full, _ = eng.snapshot()
    assert full.values[0] == 0.0
    assert len(eng._pool) == 10


def test_init_custom_workloads():
    eng = mk_engine(n=3, initial=[1.0, 0.0, 0.0])
    full, _ = eng.snapshot()
    assert full.values[0] == pytest.approx(1 / 3)
    # the preloaded job departs at exactly its residual
    ev = eng.step()
    while ev[0] != "departure":
        ev = eng.step()
    assert ev[1] == 1.0


def test_init_rejects_negative_workload():
    with pytest.raises(ValueError):
        mk_engine(n=3, initial=[1.0, -0.5, 0.0])
    with pytest.raises(ValueError):
        mk_engine(n=3, initial=[1.0, 0.0])


def test_deterministic_service_departs_exactly_one_later():
    eng = mk_engine(n=1, dist=DET, seed=5)
    ev = eng.step()
    assert ev[0] == "arrival" and ev[3] is True
    t_arr = ev[1]
    ev = eng.step()
    assert ev[0] == "departure"
    assert ev[1] == t_arr + 1.0


def test_zero_rate_means_no_arrivals():
    eng = mk_engine(n=5, lam=0.0)
    tr = eng.run(100.0, SamplePlan(interval=10.0))
    assert tr.total_arrivals == 0
    assert np.all(tr.tail_counts == 0)
    with pytest.raises(SimulationError):
        eng.step()


def test_arrival_count_matches_rate():
    # horizon 100 at system rate lam*n = 40: 4000 expected +- 3*sqrt(4000)
    eng = mk_engine(n=100, lam=0.4, seed=31)
    tr = eng.run(100.0)
    assert abs(tr.total_arrivals - 4000) <= 3 * math.sqrt(4000)


def test_renewal_deterministic_arrival_count_is_exact():
    base = make_distribution("deterministic", value=1.0)
    arr = ArrivalSpec("renewal", lam=0.4, base=base)
    eng = mk_engine(n=50, arrivals=arr, seed=2)
    tr = eng.run(100.0)
    expected = math.floor(100.0 * 0.4 * 50)
    assert abs(tr.total_arrivals - expected) <= 1


def test_zero_horizon_gives_empty_trace():
    eng = mk_engine(n=5)
    tr = eng.run(0.0)
    assert len(tr.snap_times) == 0 and tr.total_arrivals == 0


def test_snapshot_counts_direct():
    eng = mk_engine(n=2, initial=[0.5, 2.0])
    full, _ = eng.snapshot(grid=np.array([0.0, 1.0]))
    assert full.values.tolist() == [1.0, 0.5]


def test_subset_curves_partition_the_full_curve():
    tags = [0] * 30 + [1] * 20
    eng = mk_engine(n=50, subset_tags=tags, seed=17)
    tr = eng.run(200.0, SamplePlan(interval=1.0))
    total = sum(tr.tag_tail_counts.values())
    assert np.array_equal(total, tr.tail_counts)
    assert np.array_equal(tr.tag_busy[0] + tr.tag_busy[1], tr.busy_counts)


def test_conservation_under_queueing():
    # jsq with load high enough to build real queues
    eng = mk_engine(
        n=20, lam=0.85, policy=PolicySpec(kind="jsq_d", d=2),
        subset_tags=[0] * 10 + [1] * 10, seed=23,
    )
    tr = eng.run(400.0, SamplePlan(interval=0.5))
    rep = check_conservation(tr)
    assert rep.ok, rep.violations[:5]
    assert tr.events_processed > 10_000


def test_conservation_with_initial_workloads():
    eng = mk_engine(n=10, lam=0.3, initial=[2.0] * 5 + [0.0] * 5, seed=3)
    tr = eng.run(50.0, SamplePlan(interval=0.5))
    rep = check_conservation(tr)
    assert rep.ok, rep.violations[:5]


def test_blocked_arrival_changes_nothing_but_the_counter():
    # single server, buffer 1, long deterministic job: the second arrival
    # must be blocked and leave the workload untouched
    det10 = make_distribution("deterministic", value=10.0, normalize=False)
    eng = mk_engine(n=1, lam=2.0, dist=det10, policy=PolicySpec(kind="random"),
                    buffer=1, seed=11)
    ev = eng.step()
    assert ev[0] == "arrival" and not ev[4]
    t_start = ev[1]
    ev = eng.step()
    assert ev == ("arrival", ev[1], 0, False, True)
    # still exactly the first job draining at unit rate, nothing enqueued
    assert eng.workloads()[0] == pytest.approx(10.0 - (ev[1] - t_start), abs=1e-12)
    assert eng._qlen[0] == 1
    assert eng._blocked_total == 1
    tr = eng.run(eng.clock + 3.0, SamplePlan(at=(eng.clock + 1.0, eng.clock + 2.0)))
    assert check_conservation(tr).ok


def test_arrival_marks_track_rate_times_tail():
    eng = mk_engine(n=200, lam=0.4, seed=41)
    tr = eng.run(50.0, SamplePlan(interval=5.0))
    dev, bound = check_arrival_marks(tr, EXP, 0.4)
    assert dev <= bound, (dev, bound)


def test_trace_is_deterministic_in_the_seed():
    a = mk_engine(n=50, seed=99).run(150.0, SamplePlan(interval=1.0))
    b = mk_engine(n=50, seed=99).run(150.0, SamplePlan(interval=1.0))
    c = mk_engine(n=50, seed=100).run(150.0, SamplePlan(interval=1.0))
    assert np.array_equal(a.arrivals_t, b.arrivals_t)
    assert np.array_equal(a.arrivals_dest, b.arrivals_dest)
    assert np.array_equal(a.tail_counts, b.tail_counts)
    assert a.events_processed == b.events_processed
    assert not np.array_equal(a.arrivals_t, c.arrivals_t)


def test_fast_jiq_path_matches_router():
    # the inlined uniform-idle jiq branch must consume draws and route
    # exactly like Router.route
    a = mk_engine(n=30, lam=0.45, seed=57)
    b = mk_engine(n=30, lam=0.45, seed=57)
    assert a._fast_jiq
    b._fast_jiq = False
    ta = a.run(300.0, SamplePlan(interval=1.0))
    tb = b.run(300.0, SamplePlan(interval=1.0))
    assert np.array_equal(ta.arrivals_dest, tb.arrivals_dest)
    assert np.array_equal(ta.tail_counts, tb.tail_counts)


def test_event_budget_guard():
    eng = mk_engine(n=10, max_events=100)
    with pytest.raises(EventBudgetError):
        eng.run(10_000.0)


def test_infinite_policy_fails_when_pool_exhausts():
    eng = mk_engine(n=2, lam=5.0, policy=PolicySpec(kind="infinite"), seed=1)
    with pytest.raises(PoolDesyncError):
        eng.run(50.0)


def test_snapshot_at_arrival_epochs():
    eng = mk_engine(n=5, lam=0.5, seed=8)
    tr = eng.run(20.0, SamplePlan(snapshot_at_arrivals=True))
    assert len(tr.snap_times) == tr.total_arrivals
    assert np.all(np.isin(tr.snap_times, tr.arrivals_t))


def test_explicit_snapshot_times():
    eng = mk_engine(n=5, seed=8)
    tr = eng.run(10.0, SamplePlan(at=(1.0, 2.5, 7.0)))
    assert tr.snap_times.tolist() == [1.0, 2.5, 7.0]


def test_run_without_arrival_records():
    eng = mk_engine(n=5, seed=8)
    tr = eng.run(50.0, SamplePlan(interval=1.0, record_arrivals=False))
    assert len(tr.arrivals_t) == 0
    assert tr.total_arrivals > 0


def test_lifo_idle_selection_runs():
    eng = mk_engine(n=20, policy=PolicySpec(kind="jiq", idle_selection="lifo"), seed=4)
    tr = eng.run(100.0, SamplePlan(interval=1.0))
    assert check_conservation(tr).ok
    assert tr.meta["idle_selection"] == "lifo"


def test_jiq_waits_only_when_no_idle():
    # with lam < 1/2 and n large, recorded arrivals should essentially
    # always find an idle destination
    eng = mk_engine(n=100, seed=6)
    tr = eng.run(100.0, SamplePlan())
    waited = (~tr.arrivals_was_idle).sum()
    assert waited == 0
