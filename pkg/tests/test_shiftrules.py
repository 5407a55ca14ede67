import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionforge.circuit import Circuit, circuit_unitary, grape_gradient
from ionforge.gatekit import CXY, MS, Z
from ionforge.shiftrules import (
    FAMILIES,
    cxy_theta_frequency,
    equidistant_rule,
    equidistant_rule_for,
    finite_difference,
    hst_cost,
    ms_theta_frequency,
    parameter_cost,
    parameter_family,
    phi_frequency,
    shift_grad_phi,
    shift_grad_theta_cxy,
    shift_grad_theta_ms,
    shift_grad_z,
    shift_grad_z_printed,
    shift_gradient,
    validate_rules,
)


class Counting:
    def __init__(self, f):
        self.f, self.calls = f, 0

    def __call__(self, x):
        self.calls += 1
        return self.f(x)


def setup(n, seed=0):
    rng = np.random.default_rng(seed)
    c = Circuit(n, [CXY, Z(1), MS, CXY, Z(n), MS])
    target = circuit_unitary(c, rng.standard_normal(c.n_params))
    a = rng.standard_normal(c.n_params)
    return c, a, target, grape_gradient(c, a, target).gradient


def test_hst_cost_is_one_minus_fidelity():
    c, a, target, _ = setup(2)
    assert hst_cost(c, a, target) == grape_gradient(c, a, target).cost


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_evaluation_counts(n):
    f = Counting(math.cos)
    shift_grad_z(f, 0.1)
    assert f.calls == 2
    f = Counting(math.cos)
    shift_grad_theta_cxy(f, 0.1, n)
    assert f.calls == 2 * n
    f = Counting(math.cos)
    shift_grad_phi(f, 0.1)
    assert f.calls == 4
    if n >= 2:
        f = Counting(math.cos)
        shift_grad_theta_ms(f, 0.1, n)
        assert f.calls == 2 * math.ceil(n / 2)


@given(st.floats(-6, 6), st.floats(-2, 2), st.floats(-2, 2))
def test_z_rule_is_exact_on_single_frequency(x, a, b):
    f = lambda t: a * math.cos(t) + b * math.sin(t) + 0.3
    assert shift_grad_z(f, x) == pytest.approx(-a * math.sin(x) + b * math.cos(x), abs=1e-12)
    # the doubled form overshoots by exactly a factor two
    assert shift_grad_z_printed(f, x) == pytest.approx(2 * shift_grad_z(f, x), abs=1e-12)


@given(st.integers(1, 6), st.floats(-6, 6), st.integers(0, 2**32 - 1))
def test_equidistant_rule_is_exact_for_trig_polynomials(r, x, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(r + 1), rng.standard_normal(r + 1)
    k = np.arange(r + 1)
    f = lambda t: float(a @ np.cos(k * t) + b @ np.sin(k * t))
    want = float(-(a * k) @ np.sin(k * x) + (b * k) @ np.cos(k * x))
    assert equidistant_rule(r).apply(f, x) == pytest.approx(want, abs=1e-10)


def test_frequency_bounds():
    assert [cxy_theta_frequency(n) for n in (1, 3)] == [1, 3]
    assert [ms_theta_frequency(n) for n in (1, 2, 3, 4, 5)] == [1, 1, 2, 4, 6]
    assert phi_frequency(3) == 6


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_z_rule_matches_grape_in_circuits(n):
    c, a, target, grad = setup(n)
    for i in range(c.n_params):
        if parameter_family(c, i) == "Z-theta":
            cost_at = parameter_cost(c, a, target, i)
            assert shift_grad_z(cost_at, a[i]) == pytest.approx(grad[i], abs=1e-8)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_equidistant_rules_match_grape_in_circuits(n):
    c, a, target, grad = setup(n)
    for i in range(c.n_params):
        fam = parameter_family(c, i)
        cost_at = parameter_cost(c, a, target, i)
        assert equidistant_rule_for(fam, n).apply(cost_at, a[i]) == pytest.approx(grad[i], abs=1e-9)


def test_parameter_families():
    c = Circuit(2, [MS, CXY, Z(2)])
    assert [parameter_family(c, i) for i in range(5)] == [
        "MS-theta", "phi", "Cxy-theta", "phi", "Z-theta",
    ]


@pytest.mark.parametrize("fallback", ["finite-difference", "equidistant"])
def test_shift_gradient_with_fallbacks(fallback):
    c, a, target, grad = setup(3)
    est, methods = shift_gradient(c, a, target, {"Z-theta": True}, fallback)
    np.testing.assert_allclose(est, grad, atol=1e-6)
    assert len(methods) == c.n_params
    assert any(m == "Z-theta" for m in methods)


def test_finite_difference():
    assert finite_difference(math.sin, 0.4) == pytest.approx(math.cos(0.4), abs=1e-9)


def test_validation_report_is_deterministic_and_lists_all_families():
    a, b = validate_rules(3, seed=7), validate_rules(3, seed=7)
    assert a.lines() == b.lines()
    assert set(a.rules) == set(FAMILIES)
    assert a.ok
    assert a.rules["Z-theta"].passed
    for fam in FAMILIES:
        r = a.rules[fam]
        if not r.passed:
            assert r.fallback == "finite-difference" and r.fallback_error <= 1e-6
