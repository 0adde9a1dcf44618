"""Analytic and Monte-Carlo tail curves.

A TailCurve is a non-increasing function of the workload level w sampled on
a finite grid with w_0 = 0. The same container carries empirical snapshots,
the equilibrium curve lam * R(w), the transient ramp-up curve of the
infinite-server system, and the per-cycle M/GI/1 upper-bound curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dist import QUAD_ABS_TOL, QuadratureError, ServiceDistribution

CURVE_KINDS = ("empirical", "equilibrium", "transient", "mg1_bound")

# slack for float noise when validating monotonicity of analytic curves
_MONOTONE_TOL = 1e-7


class GridMismatchError(ValueError):
    """Curve operands live on different grids."""


@dataclass
class TailCurve:
    grid: np.ndarray
    values: np.ndarray
    kind: str = "empirical"
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be equal-length vectors")
        if len(self.grid) < 2 or self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing and start at 0")
        if np.any(np.diff(self.values) > _MONOTONE_TOL):
            raise ValueError("tail curve values must be non-increasing in w")
        if np.any(self.values < -_MONOTONE_TOL):
            raise ValueError("tail curve values must be non-negative")
        # fractions of servers stay in [0,1]; the other kinds may exceed 1
        # (ramp-up curves with lam >= 1, cycle bounds with value 1/(1-lam) at 0)
        if self.kind in ("empirical", "equilibrium") and np.any(
            self.values > 1.0 + _MONOTONE_TOL
        ):
            raise ValueError(f"{self.kind} tail curve values must lie in [0, 1]")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values in length")

    def __len__(self) -> int:
        return len(self.grid)

    def value_at_zero(self) -> float:
        return float(self.values[0])


def _same_grid(a: TailCurve, b: TailCurve) -> None:
    if len(a.grid) != len(b.grid) or not np.allclose(a.grid, b.grid, rtol=0, atol=1e-12):
        raise GridMismatchError("curves are sampled on different grids")


def sup_distance(a: TailCurve, b: TailCurve) -> float:
    """Grid-restricted sup-norm distance max_w |a(w) - b(w)|."""
    _same_grid(a, b)
    return float(np.max(np.abs(a.values - b.values)))


def default_grid(
    lam: float,
    dist: ServiceDistribution,
    points: int = 201,
    tail_eps: float = 1e-3,
    w_max: float | None = None,
    first: float = 0.05,
) -> np.ndarray:
    """Measurement grid {0} + geometric spacing out to where the equilibrium
    curve drops below tail_eps (or to w_max if given)."""
    if points < 2:
        raise ValueError("grid needs at least 2 points")
    if w_max is None:
        scale = max(lam, 1.0) if lam > 0 else 1.0
        hi = 1.0
        while scale * dist.residual_tail(hi) >= tail_eps:
            hi *= 2.0
            if hi > 1e15:
                raise ValueError("tail too heavy for an automatic grid; pass w_max")
        w_max = hi
    if w_max <= first:
        raise ValueError(f"w_max must exceed the first grid point {first}")
    return np.concatenate(([0.0], np.geomspace(first, w_max, points - 1)))


def linear_grid(w_max: float, points: int = 201) -> np.ndarray:
    if w_max <= 0 or points < 2:
        raise ValueError("linear grid needs w_max > 0 and at least 2 points")
    return np.linspace(0.0, w_max, points)


def equilibrium_point(lam: float, dist: ServiceDistribution, grid) -> TailCurve:
    """Curve lam * R(w): the limiting stationary tail of per-server workload."""
    if not 0 <= lam < 1:
        raise ValueError(f"equilibrium point needs 0 <= lam < 1, got {lam}")
    grid = np.asarray(grid, dtype=float)
    vals = np.array([lam * dist.residual_tail(w) for w in grid])
    return TailCurve(grid, vals, kind="equilibrium")


def fluid_transient(lam: float, dist: ServiceDistribution, t: float, grid) -> TailCurve:
    """Ramp-up curve lam * int_w^{w+t} F^c of the infinite-server system
    started empty. Computed by direct quadrature on the finite window, so it
    stays independent of the closed-form integrated tails. lam >= 1 is
    allowed here."""
    if lam < 0 or t < 0:
        raise ValueError("fluid transient needs lam >= 0 and t >= 0")
    grid = np.asarray(grid, dtype=float)
    if t == 0 or lam == 0:
        return TailCurve(grid, np.zeros_like(grid), kind="transient")
    brk = dist._breakpoints()
    vals = np.empty_like(grid)
    for k, w in enumerate(grid):
        pts = [p for p in brk if w < p < w + t] or None
        v, err = quad(dist.tail, w, w + t, epsabs=QUAD_ABS_TOL, limit=400, points=pts)
        if err > 100 * QUAD_ABS_TOL:
            raise QuadratureError(f"transient quadrature at w={w}: error {err:.2e}")
        vals[k] = lam * max(v, 0.0)
    return TailCurve(grid, vals, kind="transient")


def mg1_bound(
    lam: float,
    dist: ServiceDistribution,
    grid,
    n_cycles: int,
    rng: np.random.Generator,
) -> TailCurve:
    """Monte-Carlo estimate of the per-cycle time-above-w curve of an
    M/GI/1 queue with arrival rate lam.

    The workload process regenerates at arrivals into an empty system; one
    cycle runs from such an arrival to the next. For each grid level w the
    per-cycle statistic is the Lebesgue time the workload spends above w
    (the trailing idle stretch contributes nothing). Cycle averages estimate
    the curve whose value at 0 is the expected busy-period length
    1/(1 - lam); the returned stderr is the per-point standard error.
    """
    if not 0 < lam < 1:
        raise ValueError(f"cycle bound needs 0 < lam < 1, got {lam}")
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    grid = np.asarray(grid, dtype=float)
    k = len(grid)
    total = np.zeros(k)
    total_sq = np.zeros(k)

    block = 8192
    gaps = rng.exponential(1.0 / lam, block)
    svcs = dist.sample_n(rng, block)
    gi = si = 0

    for _ in range(n_cycles):
        cyc = np.zeros(k)
        if si == block:
            svcs = dist.sample_n(rng, block)
            si = 0
        v = svcs[si]
        si += 1
        while True:
            if gi == block:
                gaps = rng.exponential(1.0 / lam, block)
                gi = 0
            gap = gaps[gi]
            gi += 1
            seg = v if v <= gap else gap
            # time above w while the workload drains from v for seg units
            cyc += np.clip(v - grid, 0.0, seg)
            if v <= gap:
                break
            if si == block:
                svcs = dist.sample_n(rng, block)
                si = 0
            v = v - gap + svcs[si]
            si += 1
        if np.any(np.diff(cyc) > 0):
            raise AssertionError("per-cycle time-above-w must be non-increasing in w")
        total += cyc
        total_sq += cyc * cyc

    mean = total / n_cycles
    if n_cycles > 1:
        var = np.maximum(total_sq / n_cycles - mean * mean, 0.0) * n_cycles / (n_cycles - 1)
        stderr = np.sqrt(var / n_cycles)
    else:
        stderr = np.zeros(k)
    return TailCurve(grid, mean, kind="mg1_bound", stderr=stderr)
