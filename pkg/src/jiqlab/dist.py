"""Service-time and interarrival-time laws.

Every service law exposes exact tail evaluation F^c(w) = P{S > w}, the
integrated tail R(w) = int_w^inf F^c (the stationary residual-service tail
when the mean is 1), and vectorized sampling. Laws are normalized to mean 1
at construction unless the caller opts out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

QUAD_ABS_TOL = 1e-8
# truncation point for the integrated-tail fallback: F^c below this is cut off
# (exact analytic remainder is added for laws that provide one)
_TAIL_CUTOFF = 1e-12
_REMAINDER_CUTOFF = 1e-6

SERVICE_KINDS = (
    "exponential",
    "deterministic",
    "pareto",
    "uniform",
    "hyperexponential",
    "lognormal",
)


class DistributionError(ValueError):
    """Parameters describe an unusable law (e.g. Pareto shape <= 1)."""


class QuadratureError(RuntimeError):
    """Integrated-tail quadrature did not reach the requested tolerance."""


class ServiceDistribution:
    """Base class for positive service laws. Immutable after construction."""

    kind: str = "?"

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance_finite(self) -> bool:
        return True

    def tail(self, w: float) -> float:
        """F^c(w) = P{S > w}; non-increasing, tail(0) == 1 for positive laws."""
        raise NotImplementedError

    def residual_tail(self, w: float) -> float:
        """int_w^inf F^c(xi) dxi. Equals the stationary residual-service
        tail when mean == 1; closed form where the law admits one, adaptive
        quadrature otherwise."""
        return residual_tail_quad(self, w)

    def sample_n(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.sample_n(rng, 1)[0])

    def scaled(self, c: float) -> "ServiceDistribution":
        """Law of c*S."""
        raise NotImplementedError

    # hooks for the quadrature fallback
    def _support_end(self) -> float | None:
        """Finite right end of the support, if any."""
        return None

    def _breakpoints(self) -> tuple[float, ...]:
        """Points where F^c is non-smooth (passed to the integrator)."""
        return ()

    def _tail_remainder(self, u: float) -> float | None:
        """Exact int_u^inf F^c if known in closed form, else None."""
        return None

    def label(self) -> str:
        return self.kind

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.label()} mean={self.mean:.6g}>"


@dataclass(frozen=True, repr=False)
class Exponential(ServiceDistribution):
    rate: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if self.rate <= 0:
            raise DistributionError(f"exponential rate must be > 0, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def tail(self, w):
        return math.exp(-self.rate * w) if w > 0 else 1.0

    def residual_tail(self, w):
        return math.exp(-self.rate * max(w, 0.0)) / self.rate

    def sample_n(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def scaled(self, c):
        return Exponential(self.rate / c)

    def label(self):
        return f"exponential(rate={self.rate:g})"


@dataclass(frozen=True, repr=False)
class Deterministic(ServiceDistribution):
    value: float = 1.0
    kind = "deterministic"

    def __post_init__(self):
        if self.value <= 0:
            raise DistributionError(f"deterministic value must be > 0, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value

    def tail(self, w):
        return 1.0 if w < self.value else 0.0

    def residual_tail(self, w):
        return max(self.value - max(w, 0.0), 0.0)

    def sample_n(self, rng, size):
        return np.full(size, self.value)

    def scaled(self, c):
        return Deterministic(self.value * c)

    def _support_end(self):
        return self.value

    def _breakpoints(self):
        return (self.value,)

    def label(self):
        return f"deterministic(value={self.value:g})"


@dataclass(frozen=True, repr=False)
class Pareto(ServiceDistribution):
    """Classical Pareto on [scale, inf): F^c(w) = (scale/w)^alpha past the scale.

    alpha in (1, 2] gives a finite mean with infinite variance.
    """

    alpha: float
    scale: float = 1.0
    kind = "pareto"

    def __post_init__(self):
        if self.alpha <= 1:
            raise DistributionError(
                f"pareto shape must be > 1 for a finite mean, got {self.alpha}"
            )
        if self.scale <= 0:
            raise DistributionError(f"pareto scale must be > 0, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.alpha * self.scale / (self.alpha - 1.0)

    @property
    def variance_finite(self) -> bool:
        return self.alpha > 2.0

    def tail(self, w):
        if w < self.scale:
            return 1.0
        return (self.scale / w) ** self.alpha

    def residual_tail(self, w):
        a, xm = self.alpha, self.scale
        w = max(w, 0.0)
        if w <= xm:
            # flat part plus the power tail integrated from xm
            return (xm - w) + xm / (a - 1.0)
        return xm**a * w ** (1.0 - a) / (a - 1.0)

    def sample_n(self, rng, size):
        # inverse CDF; 1-U keeps the argument in (0, 1] so no inf samples
        return self.scale * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)

    def scaled(self, c):
        return Pareto(self.alpha, self.scale * c)

    def _breakpoints(self):
        return (self.scale,)

    def _tail_remainder(self, u):
        if u < self.scale:
            return None
        return self.scale**self.alpha * u ** (1.0 - self.alpha) / (self.alpha - 1.0)

    def label(self):
        return f"pareto(alpha={self.alpha:g},scale={self.scale:g})"


@dataclass(frozen=True, repr=False)
class Uniform(ServiceDistribution):
    low: float = 0.0
    high: float = 2.0
    kind = "uniform"

    def __post_init__(self):
        if not (0 <= self.low < self.high):
            raise DistributionError(
                f"uniform requires 0 <= low < high, got [{self.low}, {self.high}]"
            )

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def tail(self, w):
        if w < self.low:
            return 1.0
        if w >= self.high:
            return 0.0
        return (self.high - w) / (self.high - self.low)

    def residual_tail(self, w):
        a, b = self.low, self.high
        w = max(w, 0.0)
        if w <= a:
            return (a - w) + 0.5 * (b - a)
        if w >= b:
            return 0.0
        return (b - w) ** 2 / (2.0 * (b - a))

    def sample_n(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def scaled(self, c):
        return Uniform(self.low * c, self.high * c)

    def _support_end(self):
        return self.high

    def _breakpoints(self):
        return (self.low, self.high)

    def label(self):
        return f"uniform(low={self.low:g},high={self.high:g})"


class HyperExponential(ServiceDistribution):
    """Probabilistic mixture of exponentials: F^c(w) = sum_i p_i exp(-r_i w)."""

    kind = "hyperexponential"

    def __init__(self, probs, rates):
        probs = np.asarray(probs, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if probs.shape != rates.shape or probs.ndim != 1 or len(probs) == 0:
            raise DistributionError("hyperexponential probs/rates must be equal-length vectors")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise DistributionError("hyperexponential probs must be non-negative and sum to 1")
        if np.any(rates <= 0):
            raise DistributionError("hyperexponential rates must be > 0")
        self.probs = probs
        self.rates = rates

    @property
    def mean(self) -> float:
        return float(np.sum(self.probs / self.rates))

    def tail(self, w):
        if w <= 0:
            return 1.0
        return float(np.sum(self.probs * np.exp(-self.rates * w)))

    def residual_tail(self, w):
        w = max(w, 0.0)
        return float(np.sum(self.probs / self.rates * np.exp(-self.rates * w)))

    def sample_n(self, rng, size):
        idx = rng.choice(len(self.probs), size=size, p=self.probs)
        return rng.exponential(1.0, size) / self.rates[idx]

    def scaled(self, c):
        return HyperExponential(self.probs, self.rates / c)

    def label(self):
        p = ",".join(f"{x:g}" for x in self.probs)
        r = ",".join(f"{x:g}" for x in self.rates)
        return f"hyperexponential(probs=[{p}],rates=[{r}])"


@dataclass(frozen=True, repr=False)
class Lognormal(ServiceDistribution):
    """Lognormal law; the integrated tail has no closed form here and always
    goes through the quadrature fallback."""

    mu: float = 0.0
    sigma: float = 1.0
    kind = "lognormal"

    def __post_init__(self):
        if self.sigma <= 0:
            raise DistributionError(f"lognormal sigma must be > 0, got {self.sigma}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def tail(self, w):
        if w <= 0:
            return 1.0
        z = (math.log(w) - self.mu) / self.sigma
        return 0.5 * math.erfc(z / math.sqrt(2.0))

    def sample_n(self, rng, size):
        return rng.lognormal(self.mu, self.sigma, size)

    def scaled(self, c):
        return Lognormal(self.mu + math.log(c), self.sigma)

    def label(self):
        return f"lognormal(mu={self.mu:g},sigma={self.sigma:g})"


_CLASSES = {
    "exponential": Exponential,
    "deterministic": Deterministic,
    "pareto": Pareto,
    "uniform": Uniform,
    "hyperexponential": HyperExponential,
    "lognormal": Lognormal,
}


def make_distribution(kind: str, normalize: bool = True, **params) -> ServiceDistribution:
    """Build a service law and, by default, rescale it to mean 1."""
    try:
        cls = _CLASSES[kind]
    except KeyError:
        raise DistributionError(
            f"unknown distribution kind {kind!r}; expected one of {SERVICE_KINDS}"
        ) from None
    try:
        raw = cls(**params)
    except TypeError as exc:
        raise DistributionError(f"bad parameters for {kind}: {exc}") from None
    m = raw.mean
    if not math.isfinite(m) or m <= 0:
        raise DistributionError(f"{kind} has non-positive or infinite mean {m}")
    if normalize and abs(m - 1.0) > 1e-12:
        return raw.scaled(1.0 / m)
    return raw


def residual_tail_quad(
    dist: ServiceDistribution, w: float, epsabs: float = QUAD_ABS_TOL
) -> float:
    """Integrated tail by adaptive quadrature, independent of any closed form.

    Integrates F^c on [w, u] where u is either the support end or a point
    with F^c(u) below cutoff; for power-law tails the exact remainder past u
    is added, so u can stay moderate.
    """
    w = max(w, 0.0)
    upper = dist._support_end()
    remainder = 0.0
    if upper is None:
        has_remainder = dist._tail_remainder(max(w, 1.0)) is not None
        stop = _REMAINDER_CUTOFF if has_remainder else _TAIL_CUTOFF
        upper = 2.0 * max(w, 1.0)
        while dist.tail(upper) >= stop:
            upper *= 2.0
            if upper > 1e18:
                raise QuadratureError(f"tail of {dist!r} decays too slowly to truncate")
        if has_remainder:
            remainder = dist._tail_remainder(upper)
    elif upper <= w:
        return 0.0
    pts = [p for p in dist._breakpoints() if w < p < upper] or None
    val, err = quad(dist.tail, w, upper, epsabs=epsabs, limit=400, points=pts)
    if err > 100 * epsabs:
        raise QuadratureError(
            f"integrated tail of {dist!r} at w={w}: estimated error {err:.2e}"
        )
    return max(val + remainder, 0.0)


@dataclass(frozen=True)
class ArrivalSpec:
    """Arrival process description for the n-server system.

    Poisson: system interarrivals are exponential with rate lam*n.
    Renewal: system interarrivals are A/n where A = base/lam and base is a
    mean-1 positive law, so E[A] = 1/lam.
    """

    kind: str
    lam: float
    base: ServiceDistribution | None = None

    def __post_init__(self):
        if self.kind not in ("poisson", "renewal"):
            raise DistributionError(f"unknown arrival kind {self.kind!r}")
        if self.lam < 0:
            raise DistributionError(f"arrival rate must be >= 0, got {self.lam}")
        if self.kind == "renewal":
            if self.base is None:
                raise DistributionError("renewal arrivals need a base law")
            if abs(self.base.mean - 1.0) > 1e-9:
                raise DistributionError("renewal base law must have mean 1")
            if self.lam == 0:
                raise DistributionError("renewal arrivals need lam > 0")

    def interarrival_n(self, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
        """Draw interarrival times for the system with n servers."""
        if self.lam == 0:
            return np.full(size, math.inf)
        if self.kind == "poisson":
            return rng.exponential(1.0 / (self.lam * n), size)
        return self.base.sample_n(rng, size) / (self.lam * n)

    def label(self) -> str:
        if self.kind == "poisson":
            return "poisson"
        return f"renewal[{self.base.label()}]"
