"""Discrete-event core: n FIFO servers, idle pool, event loop, accounting.

Each server serves one customer at a time (work-conserving, non-idling);
waiting customers keep their full requirement until they reach the head of
the line, so only head-of-line departures are ever scheduled and no event
invalidation is needed. The next arrival is held outside the departure
heap; ordering across the two is by (time, global sequence number), which
makes simultaneous events (possible under deterministic laws) reproducible.

Randomness comes from three named streams (arrivals, service sizes,
routing) spawned from one master seed; draws are buffered in blocks so the
per-event cost stays low. The busy-time integrals are advanced lazily: the
integrands only change when a busy count changes, so integration happens at
those events and at measurement instants.
"""

from __future__ import annotations

import heapq
import math
from array import array
from dataclasses import dataclass

import numpy as np

from .dist import ArrivalSpec, ServiceDistribution
from .fluid import TailCurve
from .measure import LedgerSeries, Trace
from .policy import IdlePool, PolicySpec, Router

_RNG_BLOCK = 8192
_heappush = heapq.heappush
_heappop = heapq.heappop


class SimulationError(RuntimeError):
    """Internal inconsistency (idle-pool desync or exhausted event set)."""


class EventBudgetError(RuntimeError):
    """Runaway-configuration guard tripped."""


@dataclass
class SamplePlan:
    """When to take measurement snapshots during a run.

    interval: fixed spacing (None disables periodic snapshots);
    at: explicit snapshot times; snapshot_at_arrivals additionally snapshots
    at every arrival epoch; record_arrivals keeps per-arrival routing rows.
    """

    interval: float | None = None
    at: tuple[float, ...] = ()
    snapshot_at_arrivals: bool = False
    record_arrivals: bool = True


class Engine:
    """One simulation run. Owns all mutable state; not shareable."""

    def __init__(
        self,
        n: int,
        dist: ServiceDistribution,
        arrivals: ArrivalSpec,
        policy: PolicySpec,
        *,
        grid,
        buffer: int | None = None,
        seed: int = 0,
        subset_tags=None,
        initial=None,
        tracked: int = 2,
        max_events: int | None = None,
        scenario_id: str = "",
    ):
        if n < 1:
            raise ValueError(f"invalid config: n must be >= 1, got {n}")
        if buffer is not None and buffer < 1:
            raise ValueError(f"invalid config: buffer must be >= 1, got {buffer}")
        self.n = n
        self.dist = dist
        self.arrivals = arrivals
        self.policy = policy
        self.grid = np.asarray(grid, dtype=float)
        self.clock = 0.0
        self._buffer = buffer
        self._max_events = max_events
        self._tracked = min(tracked, n)
        self.scenario_id = scenario_id

        # subset tags are static; ledger arrays are indexed by tag position
        if subset_tags is None:
            tags = [0] * n
        else:
            tags = [int(t) for t in subset_tags]
            if len(tags) != n or any(t < 0 for t in tags):
                raise ValueError("invalid config: subset tags must be n non-negative ints")
        self._tag = tags
        self.tags = sorted(set(tags))
        tag_pos = {t: j for j, t in enumerate(self.tags)}
        self._tagidx = [tag_pos[t] for t in tags]
        self._tag_members = {
            t: np.array([i for i in range(n) if tags[i] == t]) for t in self.tags
        }
        self._L = len(self.tags)

        self._router = Router(policy, n, lam=arrivals.lam)
        self._jiq_family = policy.kind in ("jiq", "jiq_biased", "infinite")
        # plain uniform-idle jiq gets an inlined routing path in _arrive;
        # it must consume routing draws exactly like Router.route
        self._fast_jiq = (
            policy.kind == "jiq"
            and policy.idle_selection == "uniform"
            and policy.prefer_tag is None
        )
        self._pool = IdlePool(n)
        self._prefer_tag = policy.prefer_tag
        self._prefer_pool = IdlePool(n) if self._prefer_tag is not None else None
        if self._prefer_tag is not None and self._prefer_tag not in tag_pos:
            raise ValueError(f"invalid config: prefer_tag {self._prefer_tag} not in subset tags")

        ss = np.random.SeedSequence(seed)
        arr_ss, svc_ss, rt_ss = ss.spawn(3)
        self._arr_rng = np.random.default_rng(arr_ss)
        self._svc_rng = np.random.default_rng(svc_ss)
        self._rt_rng = np.random.default_rng(rt_ss)
        self._arr_buf = self.arrivals.interarrival_n(self._arr_rng, n, _RNG_BLOCK).tolist()
        self._svc_buf = dist.sample_n(self._svc_rng, _RNG_BLOCK).tolist()
        self._rt_buf = self._rt_rng.random(_RNG_BLOCK).tolist()
        self._arr_i = self._svc_i = self._rt_i = 0

        # per-server state: requirement and start time of the job in service
        # (0.0 when idle), total requirement waiting behind it, queue length
        self._head_service = [0.0] * n
        self._head_start = [0.0] * n
        self._wait_sum = [0.0] * n
        self._waiting: list[list[float]] = [[] for _ in range(n)]
        self._qlen = [0] * n

        # ledger, one slot per subset tag
        L = self._L
        self._work_in = [0.0] * L
        self._work_done = [0.0] * L
        self._rho_a = [0] * L
        self._rho_d = [0] * L
        self._rho_integral = [0.0] * L
        self._busy = [0] * L
        self._blocked = [0] * L
        self._marks = [np.zeros(len(self.grid), dtype=np.int64) for _ in range(L)]
        self._marks_pending: list[list[float]] = [[] for _ in range(L)]
        self._last_t = 0.0

        self._heap: list[tuple[float, int, int]] = []
        self._seq = 0
        self._events = 0
        self._total_arrivals = 0
        self._blocked_total = 0

        init_w = self._resolve_initial(initial)
        for i in range(n):
            w = init_w[i]
            if w > 0.0:
                self._head_service[i] = w
                self._qlen[i] = 1
                j = self._tagidx[i]
                # initial jobs count as work admitted at time 0
                self._work_in[j] += w
                self._rho_a[j] += 1
                self._busy[j] += 1
                self._heap.append((w, self._seq, i))
                self._seq += 1
            else:
                self._pool.insert(i)
                if self._prefer_pool is not None and self._tag[i] == self._prefer_tag:
                    self._prefer_pool.insert(i)
        heapq.heapify(self._heap)

        self._na_time = self._next_gap()
        self._na_seq = self._seq
        self._seq += 1

        self._reset_trace_buffers(record_arrivals=True)

        self.meta = {
            "scenario_id": scenario_id,
            "n": n,
            "lam": arrivals.lam,
            "dist": dist.label(),
            "arrivals": arrivals.label(),
            "policy": policy.label(),
            "idle_selection": policy.idle_selection,
            "buffer": buffer,
            "seed": seed,
        }

    def _resolve_initial(self, initial) -> list[float]:
        if initial is None or (isinstance(initial, str) and initial == "all_idle"):
            return [0.0] * self.n
        vec = [float(x) for x in initial]
        if len(vec) != self.n:
            raise ValueError(
                f"invalid config: initial workload vector has length {len(vec)}, need n={self.n}"
            )
        if any(not math.isfinite(x) or x < 0 for x in vec):
            raise ValueError("invalid config: initial workloads must be finite and >= 0")
        return vec

    def _reset_trace_buffers(self, record_arrivals: bool) -> None:
        self._rec = record_arrivals
        self._rec_t = array("d")
        self._rec_d = array("l")
        self._rec_f = array("b")
        self._snap_times: list[float] = []
        self._snap_counts: list[np.ndarray] = []
        self._snap_tag_counts: dict[int, list[np.ndarray]] = {t: [] for t in self.tags}
        self._snap_busy: list[int] = []
        self._snap_tag_busy: dict[int, list[int]] = {t: [] for t in self.tags}
        self._snap_tracked: list[np.ndarray] = []
        self._snap_events: list[int] = []
        self._led_rows: dict[int, list[tuple]] = {t: [] for t in self.tags}

    # -- draws ------------------------------------------------------------

    def _next_gap(self) -> float:
        i = self._arr_i
        if i >= _RNG_BLOCK:
            self._arr_buf = self.arrivals.interarrival_n(
                self._arr_rng, self.n, _RNG_BLOCK
            ).tolist()
            i = 0
        self._arr_i = i + 1
        return self._arr_buf[i]

    def _draw_u(self) -> float:
        i = self._rt_i
        if i >= _RNG_BLOCK:
            self._rt_buf = self._rt_rng.random(_RNG_BLOCK).tolist()
            i = 0
        self._rt_i = i + 1
        return self._rt_buf[i]

    # -- accounting --------------------------------------------------------

    def _advance(self, t: float) -> None:
        """Extend the busy-time integrals to time t (integrands constant
        since the last change)."""
        last = self._last_t
        if t > last:
            dt = t - last
            busy = self._busy
            rho_a = self._rho_a
            rho_d = self._rho_d
            wd = self._work_done
            ri = self._rho_integral
            if self._L == 1:
                wd[0] += busy[0] * dt
                ri[0] += (rho_a[0] - rho_d[0]) * dt
            else:
                for j in range(self._L):
                    wd[j] += busy[j] * dt
                    ri[j] += (rho_a[j] - rho_d[j]) * dt
            self._last_t = t

    def _flush_marks(self) -> None:
        grid = self.grid
        for j, pend in enumerate(self._marks_pending):
            if pend:
                a = np.sort(np.asarray(pend))
                self._marks[j] += len(a) - np.searchsorted(a, grid, side="right")
                pend.clear()

    # -- events ------------------------------------------------------------

    def step(self) -> tuple:
        """Process the earliest pending event; returns an event record
        ('arrival', t, dest, was_idle, blocked) or ('departure', t, server)."""
        heap = self._heap
        na_t = self._na_time
        if heap:
            h = heap[0]
            if h[0] < na_t or (h[0] == na_t and h[1] < self._na_seq):
                return self._depart(_heappop(heap))
        if na_t == math.inf:
            raise SimulationError("no pending events")
        return self._arrive()

    def _depart(self, ev: tuple[float, int, int]) -> tuple:
        t = ev[0]
        i = ev[2]
        self.clock = t
        self._events += 1
        waiting = self._waiting[i]
        if waiting:
            svc = waiting.pop(0)
            self._wait_sum[i] -= svc
            self._head_service[i] = svc
            self._head_start[i] = t
            self._qlen[i] -= 1
            _heappush(self._heap, (t + svc, self._seq, i))
            self._seq += 1
        else:
            self._advance(t)  # busy count drops below
            self._head_service[i] = 0.0
            self._head_start[i] = 0.0
            self._qlen[i] = 0
            self._pool.insert(i)
            if self._prefer_pool is not None and self._tag[i] == self._prefer_tag:
                self._prefer_pool.insert(i)
            j = self._tagidx[i]
            self._rho_d[j] += 1
            self._busy[j] -= 1
        return ("departure", t, i)

    def _arrive(self) -> tuple:
        t = self._na_time
        self.clock = t
        self._events += 1

        si = self._svc_i
        if si >= _RNG_BLOCK:
            self._svc_buf = self.dist.sample_n(self._svc_rng, _RNG_BLOCK).tolist()
            si = 0
        svc = self._svc_buf[si]
        self._svc_i = si + 1

        qlen = self._qlen
        pool = self._pool
        if self._fast_jiq:
            # inline Router.route for plain uniform-idle jiq: one uniform
            # draw, idle pool first, else lottery over all n
            ui = self._rt_i
            if ui >= _RNG_BLOCK:
                self._rt_buf = self._rt_rng.random(_RNG_BLOCK).tolist()
                ui = 0
            u = self._rt_buf[ui]
            self._rt_i = ui + 1
            members = pool.members
            lm = len(members)
            if lm:
                dest = members[min(int(u * lm), lm - 1)]
            else:
                nn = self.n
                dest = min(int(u * nn), nn - 1)
        else:
            dest = self._router.route(pool, self._prefer_pool, qlen, self._draw_u)
        was_idle = qlen[dest] == 0
        j = self._tagidx[dest]
        self._marks_pending[j].append(svc)
        blocked = False

        if was_idle:
            self._advance(t)  # busy count rises below
            pool.remove(dest)
            if self._prefer_pool is not None and dest in self._prefer_pool:
                self._prefer_pool.remove(dest)
            self._head_service[dest] = svc
            self._head_start[dest] = t
            qlen[dest] = 1
            _heappush(self._heap, (t + svc, self._seq, dest))
            self._seq += 1
            self._rho_a[j] += 1
            self._busy[j] += 1
            self._work_in[j] += svc
        else:
            if self._jiq_family and pool.members:
                raise SimulationError(
                    "routing desync: busy destination while idle servers exist"
                )
            if self._buffer is not None and qlen[dest] >= self._buffer:
                blocked = True
                self._blocked[j] += 1
                self._blocked_total += 1
            else:
                self._waiting[dest].append(svc)
                self._wait_sum[dest] += svc
                qlen[dest] += 1
                self._work_in[j] += svc

        self._total_arrivals += 1
        if self._rec:
            self._rec_t.append(t)
            self._rec_d.append(dest)
            self._rec_f.append((2 if blocked else 0) | (1 if was_idle else 0))

        ai = self._arr_i
        if ai >= _RNG_BLOCK:
            self._arr_buf = self.arrivals.interarrival_n(
                self._arr_rng, self.n, _RNG_BLOCK
            ).tolist()
            ai = 0
        self._na_time = t + self._arr_buf[ai]
        self._arr_i = ai + 1
        self._na_seq = self._seq
        self._seq += 1
        return ("arrival", t, dest, was_idle, blocked)

    # -- measurement ---------------------------------------------------------

    def workloads(self, t: float | None = None) -> np.ndarray:
        """Current unfinished work per server (head job drained to time t)."""
        if t is None:
            t = self.clock
        hs = np.asarray(self._head_service)
        start = np.asarray(self._head_start)
        ws = np.asarray(self._wait_sum)
        busy = hs > 0.0
        return np.where(busy, hs - (t - start) + ws, 0.0)

    def snapshot(self, grid=None) -> tuple[TailCurve, dict[int, TailCurve]]:
        """Empirical tail curve of current workloads scaled by 1/n, plus the
        per-subset curves (each also scaled by the total n)."""
        grid = self.grid if grid is None else np.asarray(grid, dtype=float)
        w = self.workloads()
        srt = np.sort(w)
        vals = (self.n - np.searchsorted(srt, grid, side="right")) / self.n
        full = TailCurve(grid, vals, kind="empirical")
        per_tag = {}
        for tag, members in self._tag_members.items():
            st = np.sort(w[members])
            ct = (len(st) - np.searchsorted(st, grid, side="right")) / self.n
            per_tag[tag] = TailCurve(grid, ct, kind="empirical")
        return full, per_tag

    def _take_snapshot(self, t: float) -> None:
        if self._snap_times and t <= self._snap_times[-1]:
            return
        self._advance(t)
        self._flush_marks()
        grid = self.grid
        n = self.n
        hs = np.asarray(self._head_service)
        start = np.asarray(self._head_start)
        ws = np.asarray(self._wait_sum)
        busy = hs > 0.0
        w = np.where(busy, hs - (t - start) + ws, 0.0)
        srt = np.sort(w)
        self._snap_times.append(t)
        self._snap_counts.append(n - np.searchsorted(srt, grid, side="right"))
        self._snap_busy.append(int(busy.sum()))
        self._snap_tracked.append(w[: self._tracked].copy())
        self._snap_events.append(self._events)
        for pos, tag in enumerate(self.tags):
            members = self._tag_members[tag]
            wt = w[members]
            st = np.sort(wt)
            self._snap_tag_counts[tag].append(
                len(st) - np.searchsorted(st, grid, side="right")
            )
            tag_busy = int(busy[members].sum())
            self._snap_tag_busy[tag].append(tag_busy)
            self._led_rows[tag].append(
                (
                    self._work_in[pos],
                    self._work_done[pos],
                    self._rho_a[pos],
                    self._rho_d[pos],
                    self._rho_integral[pos],
                    float(wt.sum()),
                    tag_busy,
                    self._marks[pos].copy(),
                    self._blocked[pos],
                )
            )

    # -- run -----------------------------------------------------------------

    def run(self, horizon: float, plan: SamplePlan | None = None) -> Trace:
        """Process events until the clock reaches the horizon, taking
        snapshots per the plan. Events and snapshots at the same instant are
        ordered events-first, so snapshots see the post-jump state."""
        if horizon < self.clock:
            raise ValueError("horizon precedes current clock")
        plan = plan if plan is not None else SamplePlan()
        self._reset_trace_buffers(plan.record_arrivals)

        snaps: list[float] = []
        if plan.interval is not None and plan.interval > 0:
            k = int(math.floor(horizon / plan.interval + 1e-9))
            snaps.extend(round(i * plan.interval, 12) for i in range(1, k + 1))
        snaps.extend(t for t in plan.at if self.clock <= t <= horizon)
        snaps = sorted(set(snaps))

        budget = self._max_events
        if budget is None:
            budget = 1_000_000 + int(50 * self.arrivals.lam * self.n * max(horizon, 1.0))

        si = 0
        n_snaps = len(snaps)
        snap_arrivals = plan.snapshot_at_arrivals
        heap = self._heap
        while True:
            na_t = self._na_time
            if heap:
                h = heap[0]
                if h[0] < na_t or (h[0] == na_t and h[1] < self._na_seq):
                    te = h[0]
                    is_dep = True
                else:
                    te = na_t
                    is_dep = False
            else:
                te = na_t
                is_dep = False
            if si < n_snaps:
                while si < n_snaps and snaps[si] < te:
                    self._take_snapshot(snaps[si])
                    si += 1
            if te > horizon:
                break
            if self._events >= budget:
                raise EventBudgetError(
                    f"event budget {budget} exhausted at clock {self.clock:g}"
                )
            if is_dep:
                self._depart(_heappop(heap))
            else:
                self._arrive()
                if snap_arrivals:
                    self._take_snapshot(te)
        self._advance(horizon)
        self.clock = horizon
        return self._build_trace(horizon)

    def _build_trace(self, horizon: float) -> Trace:
        grid = self.grid
        k = len(grid)
        s = len(self._snap_times)
        ledgers = {}
        for tag in self.tags:
            rows = self._led_rows[tag]
            ledgers[tag] = LedgerSeries(
                work_in=np.array([r[0] for r in rows]),
                work_done=np.array([r[1] for r in rows]),
                arrivals_to_idle=np.array([r[2] for r in rows], dtype=np.int64),
                departures_to_idle=np.array([r[3] for r in rows], dtype=np.int64),
                rho_integral=np.array([r[4] for r in rows]),
                state_work=np.array([r[5] for r in rows]),
                state_busy=np.array([r[6] for r in rows], dtype=np.int64),
                marks=(
                    np.stack([r[7] for r in rows])
                    if rows
                    else np.zeros((0, k), dtype=np.int64)
                ),
                blocked=np.array([r[8] for r in rows], dtype=np.int64),
            )
        return Trace(
            grid=grid,
            snap_times=np.array(self._snap_times),
            tail_counts=(
                np.stack(self._snap_counts)
                if s
                else np.zeros((0, k), dtype=np.int64)
            ),
            tag_tail_counts={
                t: (
                    np.stack(c)
                    if c
                    else np.zeros((0, k), dtype=np.int64)
                )
                for t, c in self._snap_tag_counts.items()
            },
            busy_counts=np.array(self._snap_busy, dtype=np.int64),
            tag_busy={t: np.array(b, dtype=np.int64) for t, b in self._snap_tag_busy.items()},
            tracked=(
                np.stack(self._snap_tracked)
                if s
                else np.zeros((0, self._tracked))
            ),
            ledgers=ledgers,
            events_at=np.array(self._snap_events, dtype=np.int64),
            arrivals_t=np.frombuffer(self._rec_t, dtype=np.float64).copy()
            if len(self._rec_t)
            else np.zeros(0),
            arrivals_dest=np.frombuffer(self._rec_d, dtype=np.dtype("l")).copy()
            if len(self._rec_d)
            else np.zeros(0, dtype=np.dtype("l")),
            arrivals_was_idle=(
                (np.frombuffer(self._rec_f, dtype=np.int8) & 1).astype(bool)
                if len(self._rec_f)
                else np.zeros(0, dtype=bool)
            ),
            arrivals_blocked=(
                (np.frombuffer(self._rec_f, dtype=np.int8) & 2).astype(bool)
                if len(self._rec_f)
                else np.zeros(0, dtype=bool)
            ),
            events_processed=self._events,
            total_arrivals=self._total_arrivals,
            blocked_total=self._blocked_total,
            n=self.n,
            horizon=horizon,
            meta=dict(self.meta),
        )
