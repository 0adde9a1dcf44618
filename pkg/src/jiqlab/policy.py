"""Routing policies and the idle-server pool.

The pool is a swap-remove array with an inverse index map: insert, remove
and uniform sampling are all O(1). Routers turn a PolicySpec into a
per-arrival destination choice driven by a caller-owned uniform stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POLICY_KINDS = ("jiq", "jsq_d", "random", "jiq_biased", "infinite")
IDLE_SELECTIONS = ("uniform", "lifo")


class PoolDesyncError(RuntimeError):
    """Idle-pool set semantics were violated; indicates engine desync."""


class IdlePool:
    """Set of idle server indices with O(1) insert/remove/uniform-sample."""

    __slots__ = ("members", "_slot")

    def __init__(self, n: int):
        self.members: list[int] = []
        self._slot = [-1] * n

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, i: int) -> bool:
        return self._slot[i] >= 0

    def insert(self, i: int) -> None:
        if self._slot[i] >= 0:
            raise PoolDesyncError(f"server {i} inserted twice into idle pool")
        self._slot[i] = len(self.members)
        self.members.append(i)

    def remove(self, i: int) -> None:
        s = self._slot[i]
        if s < 0:
            raise PoolDesyncError(f"server {i} removed from idle pool but absent")
        last = self.members.pop()
        self._slot[i] = -1
        if s < len(self.members):
            self.members[s] = last
            self._slot[last] = s

    def sample(self, u: float) -> int:
        """Member picked uniformly from a uniform draw u in [0, 1)."""
        m = self.members
        if not m:
            raise PoolDesyncError("sample from empty idle pool")
        return m[min(int(u * len(m)), len(m) - 1)]

    def top(self) -> int:
        """Most recently inserted member (idle stack discipline)."""
        if not self.members:
            raise PoolDesyncError("top of empty idle pool")
        return self.members[-1]


@dataclass(frozen=True)
class PolicySpec:
    """Routing policy description.

    jiq routes to an idle server when one exists (uniform among idle or the
    most recently idled), otherwise uniformly over all servers. jiq_biased
    replaces the all-busy lottery with a weight table capped so no single
    server sees more than (1/n)(lambda_bar/lambda) of the arrivals while
    busy. jsq_d samples d servers with replacement and picks the shortest
    queue (ties to the lowest index). infinite insists on an idle server and
    fails hard when none exists. prefer_tag restricts the idle choice to a
    tagged subset while that subset has idle members.
    """

    kind: str = "jiq"
    d: int = 1
    idle_selection: str = "uniform"
    lambda_bar: float | None = None
    bias_weights: tuple[float, ...] | None = None
    prefer_tag: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.idle_selection not in IDLE_SELECTIONS:
            raise ValueError(f"unknown idle selection {self.idle_selection!r}")
        if self.kind == "jsq_d" and self.d < 1:
            raise ValueError(f"jsq_d needs d >= 1, got {self.d}")
        if self.kind == "jiq_biased" and self.lambda_bar is None:
            raise ValueError("jiq_biased needs lambda_bar")
        if self.prefer_tag is not None and self.idle_selection != "uniform":
            raise ValueError("prefer_tag requires uniform idle selection")

    def label(self) -> str:
        if self.kind == "jsq_d":
            return f"jsq_d(d={self.d})"
        if self.kind == "jiq" and self.idle_selection == "lifo":
            return "jiq(lifo)"
        if self.kind == "jiq_biased":
            return f"jiq_biased(lambda_bar={self.lambda_bar:g})"
        return self.kind


def validate_bias_weights(weights: np.ndarray, n: int, lam: float, lambda_bar: float) -> None:
    """Check the busy-lottery weight table against the per-server cap."""
    if lam <= 0:
        raise ValueError("biased routing needs lam > 0")
    if not 0 < lambda_bar < 1:
        raise ValueError(f"lambda_bar must be in (0, 1), got {lambda_bar}")
    if weights.shape != (n,):
        raise ValueError(f"bias weights must have length n={n}")
    if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ValueError("bias weights must be a probability vector")
    cap = (lambda_bar / lam) / n
    if float(weights.max()) > cap + 1e-12:
        raise ValueError(
            f"bias weight {weights.max():.3e} exceeds cap (1/n)(lambda_bar/lam) = {cap:.3e}"
        )


def geometric_bias_weights(n: int, lam: float, lambda_bar: float, decay: float = 0.995) -> np.ndarray:
    """Example busy-lottery bias: geometric preference for low indices,
    water-filled against the per-server cap."""
    if not 0 < decay < 1:
        raise ValueError("decay must be in (0, 1)")
    cap = (lambda_bar / lam) / n
    if cap * n < 1.0:
        raise ValueError("cap below 1/n; lambda_bar must be >= lam")
    w = decay ** np.arange(n)
    w /= w.sum()
    for _ in range(200):
        over = w > cap
        if not over.any():
            break
        free = 1.0 - cap * over.sum()
        w = np.where(over, cap, w)
        under = ~over
        w[under] *= free / w[under].sum()
    validate_bias_weights(w, n, lam, lambda_bar)
    return w


class Router:
    """Per-arrival destination chooser bound to a system size n."""

    def __init__(self, spec: PolicySpec, n: int, lam: float | None = None):
        if spec.kind == "jsq_d" and spec.d > n:
            raise ValueError(f"jsq_d with d={spec.d} needs d <= n={n}")
        self.spec = spec
        self.n = n
        self._cum_bias = None
        if spec.kind == "jiq_biased":
            if spec.bias_weights is not None:
                w = np.asarray(spec.bias_weights, dtype=float)
            else:
                w = geometric_bias_weights(n, lam, spec.lambda_bar)
            validate_bias_weights(w, n, lam, spec.lambda_bar)
            self._cum_bias = np.cumsum(w)
            self._cum_bias[-1] = 1.0

    def route(self, pool: IdlePool, prefer_pool: IdlePool | None, qlen, draw) -> int:
        """Pick a destination server index.

        pool holds all idle servers; prefer_pool, when present, the idle
        servers of the preferred subset. qlen maps server -> queue length;
        draw() yields the next uniform in [0, 1) from the routing stream.
        """
        kind = self.spec.kind
        n = self.n
        if kind == "random":
            return min(int(draw() * n), n - 1)
        if kind == "jsq_d":
            best = min(int(draw() * n), n - 1)
            for _ in range(self.spec.d - 1):
                j = min(int(draw() * n), n - 1)
                if qlen[j] < qlen[best] or (qlen[j] == qlen[best] and j < best):
                    best = j
            return best
        # idle-first family: jiq, jiq_biased, infinite
        if prefer_pool is not None and len(prefer_pool):
            return prefer_pool.sample(draw())
        if len(pool):
            if self.spec.idle_selection == "lifo":
                return pool.top()
            return pool.sample(draw())
        if kind == "infinite":
            raise PoolDesyncError(
                "infinite-server mode ran out of idle servers; increase n"
            )
        if self._cum_bias is not None:
            return int(np.searchsorted(self._cum_bias, draw(), side="right"))
        return min(int(draw() * n), n - 1)
