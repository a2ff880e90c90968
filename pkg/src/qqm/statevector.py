"""Dense statevector simulation with exact expectation values.

Qubit 0 is the least-significant bit of the amplitude index, so the basis
state ``|q_{n-1} ... q_1 q_0>`` has index ``sum(q_j << j)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError

MAX_QUBITS = 24
PAULIS = ("X", "Y", "Z")
GATE_KINDS = ("RX", "RY", "RZ", "CNOT")

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


@dataclass
class QuantumState:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ConfigurationError(
                f"expected {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "QuantumState":
        return QuantumState(self.n_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None or self.control == self.target:
                raise ConfigurationError("CNOT needs a control distinct from its target")
        elif self.control is not None:
            raise ConfigurationError(f"{self.kind} takes no control qubit")

    def check(self, n_qubits: int) -> None:
        for q in (self.target, self.control):
            if q is not None and not 0 <= q < n_qubits:
                raise ConfigurationError(
                    f"{self.kind} acts on qubit {q}, register has {n_qubits}"
                )

    def matrix(self) -> np.ndarray:
        """2x2 unitary of a rotation gate."""
        return kernels.rotation_matrix(self.kind[1], self.angle)


@dataclass(frozen=True)
class CostOperator:
    """Weighted sum of single-qubit Pauli terms, ``global_weight * sum(w P_q)``."""

    terms: tuple = ()
    global_weight: float = 1.0

    def __post_init__(self):
        terms = tuple((int(q), str(p), float(w)) for q, p, w in self.terms)
        for q, p, _ in terms:
            if p not in PAULIS:
                raise ConfigurationError(f"unknown Pauli {p!r}")
            if q < 0:
                raise ConfigurationError(f"negative qubit index {q}")
        if not terms:
            raise ConfigurationError("cost operator has no terms")
        if not np.isfinite(self.global_weight) or not all(np.isfinite(w) for *_, w in terms):
            raise ConfigurationError("cost weights must be finite")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def total_z(cls, n_qubits: int, weight: float = 1.0) -> "CostOperator":
        return cls(tuple((q, "Z", 1.0) for q in range(n_qubits)), weight)

    @classmethod
    def single_z(cls, qubit: int = 0, weight: float = 1.0) -> "CostOperator":
        return cls(((qubit, "Z", 1.0),), weight)

    @property
    def is_diagonal(self) -> bool:
        return all(p == "Z" for _, p, _ in self.terms)

    def check(self, n_qubits: int) -> None:
        for q, _, _ in self.terms:
            if q >= n_qubits:
                raise ConfigurationError(f"cost term on qubit {q}, register has {n_qubits}")

    def norm_bound(self) -> float:
        """Upper bound on the operator norm."""
        return abs(self.global_weight) * sum(abs(w) for *_, w in self.terms)

    def diagonal(self, n_qubits: int) -> np.ndarray:
        if not self.is_diagonal:
            raise ConfigurationError("cost operator is not diagonal")
        idx = np.arange(1 << n_qubits)
        out = np.zeros(idx.size)
        for q, _, w in self.terms:
            out += w * (1 - 2 * ((idx >> q) & 1))
        return self.global_weight * out

    def term_diagonals(self, n_qubits: int) -> np.ndarray:
        """Per-term Z diagonals (without weights), shape ``(n_terms, 2**n)``."""
        if not self.is_diagonal:
            raise ConfigurationError("cost operator is not diagonal")
        idx = np.arange(1 << n_qubits)
        return np.array([1.0 - 2.0 * ((idx >> q) & 1) for q, _, _ in self.terms])

    def matrix(self, n_qubits: int) -> np.ndarray:
        self.check(n_qubits)
        if self.is_diagonal:
            return np.diag(self.diagonal(n_qubits).astype(np.complex128))
        dim = 1 << n_qubits
        out = np.zeros((dim, dim), dtype=np.complex128)
        for q, p, w in self.terms:
            out += w * pauli_string_matrix(n_qubits, {q: p})
        return self.global_weight * out

    def with_weights(self, weights) -> "CostOperator":
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(self.terms),):
            raise ConfigurationError("one weight per cost term required")
        return CostOperator(
            tuple((q, p, float(w)) for (q, p, _), w in zip(self.terms, weights)),
            self.global_weight,
        )


def pauli_string_matrix(n_qubits: int, paulis: dict) -> np.ndarray:
    """Dense Kronecker product; qubit 0 is the rightmost factor."""
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n_qubits)):
        out = np.kron(out, _PAULI_MATRICES[paulis.get(q, "I")])
    return out


def zero_state(n_qubits: int) -> QuantumState:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return QuantumState(int(n_qubits), amps)


def apply_gate_inplace(state: QuantumState, gate: Gate) -> QuantumState:
    """Apply ``gate`` by mutating ``state``; returns ``state``."""
    gate.check(state.n_qubits)
    view = state.amplitudes.reshape(1, -1)
    if gate.kind == "CNOT":
        kernels.apply_cnot(view, gate.control, gate.target)
    else:
        kernels.apply_1q(view, gate.matrix(), gate.target)
    return state


def apply_gate(state: QuantumState, gate: Gate) -> QuantumState:
    return apply_gate_inplace(state.copy(), gate)


def apply_gates(state: QuantumState, gates) -> QuantumState:
    out = state.copy()
    for g in gates:
        apply_gate_inplace(out, g)
    return out


def expectation(state: QuantumState, cost: CostOperator, return_imag: bool = False):
    """``<psi|C|psi>``.  With ``return_imag`` the discarded imaginary part is also returned."""
    cost.check(state.n_qubits)
    amps = state.amplitudes
    if cost.is_diagonal:
        value = float(np.dot(np.abs(amps) ** 2, cost.diagonal(state.n_qubits)))
        return (value, 0.0) if return_imag else value
    total = 0.0 + 0.0j
    for q, p, w in cost.terms:
        phi = amps.copy().reshape(1, -1)
        kernels.apply_1q(phi, _PAULI_MATRICES[p], q)
        total += w * np.vdot(amps, phi[0])
    total *= cost.global_weight
    return (float(total.real), float(total.imag)) if return_imag else float(total.real)


def gate_unitary(n_qubits: int, gate: Gate) -> np.ndarray:
    """Explicit ``2**n x 2**n`` matrix of a gate, built from Kronecker products."""
    gate.check(n_qubits)
    if gate.kind != "CNOT":
        mats = {gate.target: gate.matrix()}
        out = np.array([[1.0 + 0j]])
        for q in reversed(range(n_qubits)):
            out = np.kron(out, mats.get(q, _PAULI_MATRICES["I"]))
        return out
    proj0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
    proj1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)
    a = np.array([[1.0 + 0j]])
    b = np.array([[1.0 + 0j]])
    for q in reversed(range(n_qubits)):
        if q == gate.control:
            a, b = np.kron(a, proj0), np.kron(b, proj1)
        elif q == gate.target:
            a, b = np.kron(a, _PAULI_MATRICES["I"]), np.kron(b, _PAULI_MATRICES["X"])
        else:
            a, b = np.kron(a, _PAULI_MATRICES["I"]), np.kron(b, _PAULI_MATRICES["I"])
    return a + b
