import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qqm import autodiff as A, circuits as C, statevector as sv
from qqm.errors import ConfigurationError, DomainError
from conftest import random_program


def _single_qubit():
    fm = C.FeatureMapSpec("PRODUCT", "X", "z")
    prog = C.CircuitProgram(1, [C.Slot("RX", 0, None, C.Variable("z", fm, 1)),
                                C.Slot("RZ", 0, None, C.Parameter(0))])
    return A.Evaluator(prog, sv.CostOperator.single_z(0)), np.zeros(1)


def test_single_qubit_closed_forms():
    ev, th = _single_qubit()
    assert ev(th, {"z": 0.5}) == pytest.approx(math.sqrt(0.75), abs=1e-12)
    assert A.d_dvariable(ev, th, {"z": 0.0}, "z") == pytest.approx(0.0, abs=1e-12)
    assert A.d_dvariable(ev, th, {"z": 0.5}, "z") == pytest.approx(-0.5 / math.sqrt(0.75), abs=1e-9)
    assert A.d2_dvariable2(ev, th, {"z": 0.0}, "z") == pytest.approx(-1.0, abs=1e-8)
    assert A.d2_dvariable2(ev, th, {"z": 0.5}, "z") == pytest.approx(-(0.75 ** -1.5), abs=1e-8)


def test_ry_gradient_at_half_pi():
    prog = C.CircuitProgram(1, [C.Slot("RY", 0, None, C.Parameter(0))])
    ev = A.Evaluator(prog, sv.CostOperator.single_z(0))
    assert A.grad_theta(ev, np.array([math.pi / 2]), {})[0] == pytest.approx(-1.0, abs=1e-12)


def test_even_slot_has_zero_gradient_at_zero():
    prog = C.CircuitProgram(1, [C.Slot("RX", 0, None, C.Parameter(0)), C.Slot("RY", 0, None, C.Parameter(1))])
    ev = A.Evaluator(prog, sv.CostOperator.single_z(0))
    g = A.grad_theta(ev, np.zeros(2), {})
    np.testing.assert_allclose(g, 0.0, atol=1e-12)


def _fd(f, x, h):
    """Five-point central first difference."""
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def _fd2(f, x, h):
    """Five-point central second difference."""
    return (-f(x - 2 * h) + 16 * f(x - h) - 30 * f(x) + 16 * f(x + h) - f(x + 2 * h)) / (12 * h * h)


def check_program(seed):
    rng = np.random.default_rng(seed)
    prog = random_program(rng)
    cost = sv.CostOperator(tuple((q, "XYZ"[q % 3], 1.0) for q in range(prog.n_qubits)))
    theta = rng.uniform(-math.pi, math.pi, prog.n_params)
    x = float(rng.uniform(-0.8, 0.8))
    ev = A.Evaluator(prog, cost, cache=False)
    f = lambda v: ev(theta, {"x": v})
    d1 = A.d_dvariable(ev, theta, {"x": x}, "x")
    d2 = A.d2_dvariable2(ev, theta, {"x": x}, "x")
    assert abs(d1 - _fd(f, x, 1e-4)) < 1e-6
    assert abs(d2 - _fd2(f, x, 1e-4)) < 1e-6
    g = A.grad_theta(ev, theta, {"x": x})
    for k in range(prog.n_params):
        e = np.zeros_like(theta)
        e[k] = 1.0
        assert abs(g[k] - _fd(lambda s: ev(theta + s * e, {"x": x}), 0.0, 1e-5)) < 1e-6
    return prog


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_derivatives_match_finite_differences(seed):
    check_program(seed)


def count_evaluations(prog, theta, values, variable):
    """(first, naive second, cached additional second) evaluation counts."""
    cost = sv.CostOperator.single_z(0)
    cold = A.Evaluator(prog, cost, cache=True)
    A.d_dvariable(cold, theta, values, variable)
    first = cold.evaluations
    naive = A.Evaluator(prog, cost, cache=False)
    A.d2_dvariable2(naive, theta, values, variable)
    warm = A.Evaluator(prog, cost, cache=True)
    warm(theta, values)
    A.d_dvariable(warm, theta, values, variable)
    before = warm.evaluations
    A.d2_dvariable2(warm, theta, values, variable)
    return first, naive.evaluations, warm.evaluations - before


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_evaluation_counts(seed):
    rng = np.random.default_rng(seed)
    prog = random_program(rng)
    n = len(prog.variable_slots("x"))
    theta = rng.uniform(-3, 3, prog.n_params)
    assert count_evaluations(prog, theta, {"x": 0.3}, "x") == (2 * n, 2 * n + 4 * n * n, 2 * n * n)


def test_second_derivative_stencil_is_symmetric():
    prog = C.build_feature_map(C.FeatureMapSpec("TOWER", "Y", "x"), 3)
    st_ = A.second_derivative_stencil(prog, {"x": 0.2}, "x")
    pairs = {tuple(s): c for s, c in st_ if len(s) == 2}
    for (a, b), c in pairs.items():
        assert pairs[(b, a)] == pytest.approx(c, abs=1e-12)


def test_cache_on_and_off_agree():
    rng = np.random.default_rng(7)
    prog = random_program(rng, n_qubits=3, n_slots=12)
    theta = rng.uniform(-3, 3, prog.n_params)
    cost = sv.CostOperator.total_z(3)
    a = A.Evaluator(prog, cost, cache=True)
    b = A.Evaluator(prog, cost, cache=False)
    for ev in (a, b):
        ev.result = (A.d_dvariable(ev, theta, {"x": 0.1}, "x"), A.d2_dvariable2(ev, theta, {"x": 0.1}, "x"))
    assert abs(a.result[0] - b.result[0]) <= 1e-14
    assert abs(a.result[1] - b.result[1]) <= 1e-13
    assert a.hits > 0


def test_canonical_shifts():
    assert A.canonical_shifts([(3, 1), (3, -1)]) == ()
    assert A.canonical_shifts([(5, 1), (2, -1), (5, 1)]) == ((2, -1), (5, 2))


def test_domain_and_binding_errors():
    ev, th = _single_qubit()
    with pytest.raises(DomainError):
        A.d_dvariable(ev, th, {"z": 1.0}, "z")
    with pytest.raises(DomainError):
        A.d2_dvariable2(ev, th, {"z": -1.0 + 1e-12}, "z")
    with pytest.raises(ConfigurationError):
        A.d_dvariable(ev, th, {"z": 0.1, "t": 0.0}, "t")
    assert A.is_encoded(ev.program, "z") and not A.is_encoded(ev.program, "t")
