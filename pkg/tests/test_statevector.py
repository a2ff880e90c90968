import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qqm import statevector as sv
from qqm.errors import ConfigurationError


def _dense_program(n, gates):
    u = np.eye(1 << n, dtype=complex)
    for g in gates:
        u = sv.gate_unitary(n, g) @ u
    return u


gate_strategy = st.tuples(
    st.sampled_from(["RX", "RY", "RZ", "CNOT"]),
    st.integers(0, 3),
    st.integers(0, 3),
    st.floats(-7, 7, allow_nan=False),
)


def _gates(n, raw):
    out = []
    for kind, a, b, angle in raw:
        a, b = a % n, b % n
        if kind == "CNOT":
            if n == 1 or a == b:
                continue
            out.append(sv.Gate("CNOT", a, b))
        else:
            out.append(sv.Gate(kind, a, None, angle))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.lists(gate_strategy, min_size=1, max_size=12))
def test_simulation_matches_dense_kronecker(n, raw):
    gates = _gates(n, raw)
    state = sv.apply_gates(sv.zero_state(n), gates)
    dense = _dense_program(n, gates)[:, 0]
    np.testing.assert_allclose(state.amplitudes, dense, atol=1e-12)
    assert state.norm2() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.lists(gate_strategy, min_size=1, max_size=10), st.data())
def test_expectation_matches_dense(n, raw, data):
    gates = _gates(n, raw)
    terms = tuple((q, data.draw(st.sampled_from("XYZ")), data.draw(st.floats(-2, 2))) for q in range(n))
    cost = sv.CostOperator(terms, 0.7)
    state = sv.apply_gates(sv.zero_state(n), gates)
    psi = state.amplitudes
    expected = np.vdot(psi, cost.matrix(n) @ psi)
    value, imag = sv.expectation(state, cost, return_imag=True)
    assert value == pytest.approx(expected.real, abs=1e-12)
    assert abs(imag) < 1e-12


def test_qubit_zero_is_least_significant_bit():
    state = sv.apply_gate(sv.zero_state(3), sv.Gate("RX", 0, None, np.pi))
    assert np.argmax(np.abs(state.amplitudes)) == 1
    assert sv.expectation(state, sv.CostOperator.single_z(0)) == pytest.approx(-1.0)
    assert sv.expectation(state, sv.CostOperator.single_z(1)) == pytest.approx(1.0)


def test_cnot_control_and_target():
    s = sv.apply_gates(sv.zero_state(2), [sv.Gate("RX", 0, None, np.pi), sv.Gate("CNOT", 1, 0)])
    assert abs(s.amplitudes[3]) == pytest.approx(1.0)


def test_rotation_convention():
    # RY(a)|0> gives <Z> = cos a and <X> = sin a
    a = 0.3
    s = sv.apply_gate(sv.zero_state(1), sv.Gate("RY", 0, None, a))
    assert sv.expectation(s, sv.CostOperator.single_z(0)) == pytest.approx(np.cos(a))
    assert sv.expectation(s, sv.CostOperator(((0, "X", 1.0),))) == pytest.approx(np.sin(a))


def test_diagonal_cost_helpers():
    c = sv.CostOperator.total_z(3, 2.0)
    np.testing.assert_allclose(np.diag(c.matrix(3)).real, c.diagonal(3))
    assert c.norm_bound() == 6.0
    assert c.term_diagonals(3).shape == (3, 8)


@pytest.mark.parametrize("bad", [
    lambda: sv.Gate("RW", 0),
    lambda: sv.Gate("CNOT", 0),
    lambda: sv.Gate("CNOT", 0, 0),
    lambda: sv.Gate("RX", 0, 1),
    lambda: sv.zero_state(0),
    lambda: sv.zero_state(25),
    lambda: sv.CostOperator(()),
    lambda: sv.CostOperator(((0, "Q", 1.0),)),
    lambda: sv.CostOperator(((0, "Z", float("nan")),)),
    lambda: sv.apply_gate(sv.zero_state(2), sv.Gate("RX", 2, None, 0.1)),
    lambda: sv.expectation(sv.zero_state(1), sv.CostOperator.single_z(1)),
])
def test_invalid_inputs_raise(bad):
    with pytest.raises(ConfigurationError):
        bad()
