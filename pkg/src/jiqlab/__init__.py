"""jiqlab: a discrete-event laboratory for join-idle-queue load balancing.

Simulates n parallel FIFO servers under idle-first routing policies with
general service laws, and pairs the simulator with analytic curves (the
equilibrium workload tail, the infinite-server ramp-up trajectory, and a
Monte-Carlo M/GI/1 per-cycle upper bound) plus the estimators needed to
check concentration, vanishing waiting, and asymptotic independence at
finite n.
"""

__version__ = "0.1.0"

from .dist import ArrivalSpec, ServiceDistribution, make_distribution, residual_tail_quad
from .engine import Engine, SamplePlan
from .fluid import (
    TailCurve,
    default_grid,
    equilibrium_point,
    fluid_transient,
    linear_grid,
    mg1_bound,
    sup_distance,
)
from .measure import (
    StationaryEstimate,
    Trace,
    check_conservation,
    convergence_report,
    estimate_stationary,
    independence_distance,
    verify_mg1_bound,
    waiting_probability,
)
from .policy import IdlePool, PolicySpec, Router, geometric_bias_weights

__all__ = [
    "ArrivalSpec",
    "Engine",
    "IdlePool",
    "PolicySpec",
    "Router",
    "SamplePlan",
    "ServiceDistribution",
    "StationaryEstimate",
    "TailCurve",
    "Trace",
    "check_conservation",
    "convergence_report",
    "default_grid",
    "equilibrium_point",
    "estimate_stationary",
    "fluid_transient",
    "geometric_bias_weights",
    "independence_distance",
    "linear_grid",
    "make_distribution",
    "mg1_bound",
    "residual_tail_quad",
    "sup_distance",
    "verify_mg1_bound",
    "waiting_probability",
]
