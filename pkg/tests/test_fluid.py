"""Tail curves: equilibrium, ramp-up trajectory, cycle bound, distances."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from jiqlab.dist import make_distribution
from jiqlab.fluid import (
    GridMismatchError,
    TailCurve,
    default_grid,
    equilibrium_point,
    fluid_transient,
    linear_grid,
    mg1_bound,
    sup_distance,
)


@pytest.fixture(scope="module")
def expo():
    return make_distribution("exponential")


def test_curve_validation():
    with pytest.raises(ValueError):
        TailCurve(np.array([0.0, 1.0]), np.array([0.1, 0.5]))  # increasing values
    with pytest.raises(ValueError):
        TailCurve(np.array([0.5, 1.0]), np.array([1.0, 0.5]))  # grid not from 0
    with pytest.raises(ValueError):
        TailCurve(np.array([0.0, 1.0, 1.0]), np.array([1.0, 0.5, 0.2]))
    with pytest.raises(ValueError):
        TailCurve(np.array([0.0, 1.0]), np.array([1.0, 0.5]), kind="nope")


def test_default_grid_shape(expo):
    g = default_grid(0.4, expo)
    assert len(g) == 201 and g[0] == 0.0
    assert np.all(np.diff(g) > 0)
    assert 0.4 * expo.residual_tail(g[-1]) < 1e-3


def test_default_grid_respects_w_max(expo):
    g = default_grid(0.45, make_distribution("pareto", alpha=1.5), w_max=10.0)
    assert g[-1] == pytest.approx(10.0)


def test_equilibrium_examples(expo):
    g = default_grid(0.4, expo)
    eq = equilibrium_point(0.4, expo, g)
    assert eq.values[0] == pytest.approx(0.4, abs=1e-9)
    zero = equilibrium_point(0.0, expo, g)
    assert np.all(zero.values == 0.0)
    # lam * integrated tail at w=1, against a direct quadrature oracle
    oracle = 0.4 * quad(lambda x: math.exp(-x), 1.0, np.inf)[0]
    eq1 = equilibrium_point(0.4, expo, np.array([0.0, 1.0]))
    assert eq1.values[1] == pytest.approx(oracle, abs=1e-9)


def test_equilibrium_needs_subcritical_lam(expo):
    with pytest.raises(ValueError):
        equilibrium_point(1.0, expo, np.array([0.0, 1.0]))


def test_transient_examples(expo):
    g = np.array([0.0, 0.5, 1.0])
    t0 = fluid_transient(0.4, expo, 0.0, g)
    assert np.all(t0.values == 0.0)
    tr = fluid_transient(0.4, expo, 1.0, g)
    oracle = 0.4 * quad(lambda x: math.exp(-x), 0.0, 1.0)[0]
    assert tr.values[0] == pytest.approx(oracle, abs=1e-8)
    assert tr.values[0] == pytest.approx(0.252848, abs=1e-6)


def test_transient_converges_to_equilibrium(expo):
    g = np.concatenate(([0.0], np.geomspace(0.1, 6.0, 40)))
    far = fluid_transient(0.4, expo, 1e4, g)
    eq = equilibrium_point(0.4, expo, g)
    assert sup_distance(far, eq) < 1e-3


def test_transient_monotone_in_t():
    par = make_distribution("pareto", alpha=1.5)
    g = np.concatenate(([0.0], np.geomspace(0.1, 8.0, 25)))
    prev = fluid_transient(0.45, par, 0.5, g)
    for t in (1.0, 2.0, 4.0):
        cur = fluid_transient(0.45, par, t, g)
        assert np.all(cur.values >= prev.values - 1e-12)
        prev = cur


def test_transient_allows_supercritical_lam(expo):
    g = np.array([0.0, 1.0])
    tr = fluid_transient(1.5, expo, 2.0, g)
    assert tr.values[0] > 1.0  # occupancy of the ramp can exceed 1 per server


@pytest.mark.parametrize("kind,params", [
    ("exponential", {}),
    ("pareto", {"alpha": 1.5}),
    ("uniform", {"low": 0.0, "high": 2.0}),
])
def test_transient_equals_residual_difference(kind, params):
    # lam * int_w^{w+t} F^c == lam * (R(w) - R(w+t)); the left side is
    # computed by direct quadrature, the right from the closed forms
    law = make_distribution(kind, **params)
    g = np.concatenate(([0.0], np.geomspace(0.2, 5.0, 20)))
    for t in (0.7, 3.0):
        tr = fluid_transient(0.4, law, t, g)
        expected = 0.4 * np.array(
            [law.residual_tail(w) - law.residual_tail(w + t) for w in g]
        )
        assert np.max(np.abs(tr.values - expected)) < 1e-6


def test_mg1_bound_busy_period(expo):
    g = default_grid(0.5, expo)
    rng = np.random.default_rng(42)
    curve = mg1_bound(0.5, expo, g, 20_000, rng)
    assert curve.values[0] == pytest.approx(2.0, abs=3 * curve.stderr[0])
    rng = np.random.default_rng(43)
    curve4 = mg1_bound(0.4, expo, g, 20_000, rng)
    assert curve4.values[0] == pytest.approx(1.0 / 0.6, abs=3 * curve4.stderr[0])


def test_mg1_bound_monotone_and_decaying(expo):
    g = np.concatenate(([0.0], np.geomspace(0.1, 30.0, 50)))
    curve = mg1_bound(0.4, expo, g, 5_000, np.random.default_rng(1))
    assert np.all(np.diff(curve.values) <= 1e-12)
    assert curve.values[-1] < 0.02
    assert np.all(curve.stderr >= 0)


def test_mg1_bound_rejects_bad_load(expo):
    g = np.array([0.0, 1.0])
    with pytest.raises(ValueError):
        mg1_bound(0.0, expo, g, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mg1_bound(1.0, expo, g, 10, np.random.default_rng(0))


def test_mg1_batches_merge(expo):
    # cycle batches with split seeds estimate the same curve
    g = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
    a = mg1_bound(0.4, expo, g, 30_000, np.random.default_rng(5))
    b = mg1_bound(0.4, expo, g, 30_000, np.random.default_rng(6))
    comb = np.sqrt(a.stderr**2 + b.stderr**2)
    assert np.all(np.abs(a.values - b.values) <= 4 * comb + 1e-9)


def test_sup_distance_examples(expo):
    g = default_grid(0.4, expo)
    eq = equilibrium_point(0.4, expo, g)
    assert sup_distance(eq, eq) == 0.0
    zero = TailCurve(g, np.zeros_like(g))
    assert sup_distance(eq, zero) == pytest.approx(0.4, abs=1e-9)
    a = TailCurve(g, np.full_like(g, 0.3))
    b = TailCurve(g, np.full_like(g, 0.1))
    assert sup_distance(a, b) == pytest.approx(0.2)


def test_sup_distance_grid_mismatch(expo):
    a = TailCurve(np.array([0.0, 1.0]), np.array([1.0, 0.5]))
    b = TailCurve(np.array([0.0, 2.0]), np.array([1.0, 0.5]))
    with pytest.raises(GridMismatchError):
        sup_distance(a, b)


def test_linear_grid():
    g = linear_grid(10.0, 11)
    assert g[0] == 0.0 and g[-1] == 10.0 and len(g) == 11
