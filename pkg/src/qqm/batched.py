"""Batched parameter-shift evaluation for training loops.

A program is split into three contiguous segments: a prefix with no encoded
variables, the encoding block (every slot bound to a variable) and a suffix.
For a batch of encoding configurations ``k`` (variable values, possibly with
quarter-turn shifts already folded into the angles) this module evaluates

    E_k(theta) = <psi_k(theta)| U_suf(theta)^dag C U_suf(theta) |psi_k(theta)>

and the weighted parameter-shift gradient ``sum_k w_k dE_k/dtheta``.  The
shifted expectations ``E(theta +- pi/2 e_p)`` are exact values of the shifted
circuits; they are obtained by contracting a forward sweep of the weighted
density ``W = sum_k w_k |psi_k><psi_k|`` with a backward sweep of the
Heisenberg observable, so all ``2P`` shifts share one pass over the gates.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .circuits import CircuitProgram, Parameter, Variable
from .errors import ConfigurationError

HALF_PI = math.pi / 2


class EncodingBatch:
    """Encoding angles for ``K`` configurations, shape ``(K, n_encoding_slots)``."""

    def __init__(self, angles):
        self.angles = np.ascontiguousarray(angles, dtype=np.float64)
        if self.angles.ndim != 2:
            raise ConfigurationError("encoding angles must be a 2-D array")
        self._states = None

    def __len__(self):
        return self.angles.shape[0]


class CompiledProgram:
    """A program plus observable prepared for batched evaluation."""

    def __init__(self, program: CircuitProgram, costs):
        self.program = program
        self.n = program.n_qubits
        self.dim = 1 << self.n
        costs = list(costs)
        self.cost_units = [c.__class__(c.terms, 1.0) for c in costs]
        self.alpha = np.array([c.global_weight for c in costs], dtype=float)
        for c in costs:
            c.check(self.n)
        var_idx = [i for i, s in enumerate(program.slots) if isinstance(s.binding, Variable)]
        if var_idx:
            lo, hi = var_idx[0], var_idx[-1] + 1
            if var_idx != list(range(lo, hi)):
                raise ConfigurationError("encoding slots must be contiguous for batched evaluation")
        else:
            lo = hi = 0
        self.pre = list(range(0, lo))
        self.enc = list(range(lo, hi))
        self.post = list(range(hi, len(program.slots)))
        self.pre_has_params = any(isinstance(program.slots[i].binding, Parameter) for i in self.pre)
        self._unit_mats = [c.matrix(self.n) for c in self.cost_units]

    # -- angle helpers -----------------------------------------------------

    def encoding_angles(self, values, shifts=()):
        """Encoding-slot angles for one configuration; shifts use absolute slot indices."""
        row = np.empty(len(self.enc))
        pos = {s: i for i, s in enumerate(self.enc)}
        for i, slot in enumerate(self.enc):
            b = self.program.slots[slot].binding
            row[i] = b.fmap.angle(b.j, values[b.variable])
        for slot, k in shifts:
            if slot not in pos:
                raise ConfigurationError(f"slot {slot} is not an encoding slot")
            row[pos[slot]] += k * HALF_PI
        return row

    def _slot_angle(self, slot, theta):
        b = self.program.slots[slot].binding
        if isinstance(b, Parameter):
            return b.scale * theta[b.index]
        return b.angle

    def cost_matrix(self, alpha=None):
        alpha = self.alpha if alpha is None else np.asarray(alpha, dtype=float)
        return sum(a * m for a, m in zip(alpha, self._unit_mats))

    # -- state preparation -------------------------------------------------

    def _run_states(self, states, slots, theta):
        for slot in slots:
            s = self.program.slots[slot]
            if s.kind == "CNOT":
                kernels.apply_cnot(states, s.control, s.target)
            else:
                g = kernels.rotation_matrix(s.axis, self._slot_angle(slot, theta))
                kernels.apply_1q(states, g, s.target)
        return states

    def _pre_state(self, theta):
        psi = np.zeros((1, self.dim), dtype=np.complex128)
        psi[0, 0] = 1.0
        return self._run_states(psi, self.pre, theta)

    def _encode(self, pre_state, angles):
        states = np.repeat(pre_state, angles.shape[0], axis=0)
        for i, slot in enumerate(self.enc):
            s = self.program.slots[slot]
            gs = kernels.rotation_matrices(s.axis, angles[:, i])
            kernels.apply_1q_rows(states, gs, s.target)
        return states

    def encoded_states(self, theta, batch: EncodingBatch):
        if not self.pre_has_params:
            if batch._states is None:
                batch._states = self._encode(self._pre_state(theta), batch.angles)
            return batch._states
        return self._encode(self._pre_state(theta), batch.angles)

    def suffix_unitary_rows(self, theta):
        """``V`` with ``V[j] = U_suf |j>``, i.e. ``U_suf = V.T``."""
        v = np.eye(self.dim, dtype=np.complex128)
        return self._run_states(v, self.post, theta)

    def observable(self, theta, alpha=None):
        v = self.suffix_unitary_rows(theta)
        return v.conj() @ self.cost_matrix(alpha) @ v.T

    # -- evaluation --------------------------------------------------------

    @staticmethod
    def _expect(states, obs):
        return np.einsum("ki,ki->k", states.conj(), states @ obs.T).real

    def values(self, theta, batch: EncodingBatch, alpha=None):
        theta = np.asarray(theta, dtype=float)
        return self._expect(self.encoded_states(theta, batch), self.observable(theta, alpha))

    def cost_values(self, theta, batch: EncodingBatch):
        """Unweighted expectation of every cost operator, shape ``(K, L)``."""
        states = self.encoded_states(theta, batch)
        v = self.suffix_unitary_rows(theta)
        out = states @ v
        return np.column_stack([self._expect(out, m) for m in self._unit_mats])

    def grad(self, theta, batch: EncodingBatch, weights, alpha=None):
        """``sum_k weights[k] * dE_k/dtheta`` from exact +-pi/2 shifted expectations."""
        theta = np.asarray(theta, dtype=float)
        weights = np.asarray(weights, dtype=float)
        grad = np.zeros(self.program.n_params)
        states = self.encoded_states(theta, batch)
        obs_cost = self.cost_matrix(alpha)
        w_in = (states.T * weights) @ states.conj()
        self._sweep(self.post, theta, w_in, obs_cost, grad)
        if self.pre_has_params:
            obs = self.observable(theta, alpha)
            for slot in self.pre:
                b = self.program.slots[slot].binding
                if not isinstance(b, Parameter):
                    continue
                vals = []
                for sign in (1, -1):
                    shifted = theta.copy()
                    shifted[b.index] += sign * HALF_PI / b.scale
                    st = self._encode(self._pre_state(shifted), batch.angles)
                    vals.append(float(weights @ self._expect(st, obs)))
                grad[b.index] = 0.5 * b.scale * (vals[0] - vals[1])
        return grad

    def _sweep(self, slots, theta, w_in, obs, grad):
        """Shifted traces ``Tr[R(a +- pi/2) W_k R^dag H_k]`` for every parameter slot."""
        heis = [None] * (len(slots) + 1)
        h = np.ascontiguousarray(obs)
        heis[len(slots)] = h
        gates = []
        for s_i, slot in enumerate(slots):
            s = self.program.slots[slot]
            gates.append(None if s.kind == "CNOT" else
                         kernels.rotation_matrix(s.axis, self._slot_angle(slot, theta)))
        for s_i in range(len(slots) - 1, -1, -1):
            s = self.program.slots[slots[s_i]]
            h = h.copy()
            if s.kind == "CNOT":
                kernels.conjugate_cnot(h, s.control, s.target)
            else:
                kernels.conjugate_1q(h, np.ascontiguousarray(gates[s_i].conj().T), s.target)
            heis[s_i] = h
        w = np.ascontiguousarray(w_in)
        for s_i, slot in enumerate(slots):
            s = self.program.slots[slot]
            b = s.binding
            if isinstance(b, Parameter):
                a = self._slot_angle(slot, theta)
                vals = []
                for sign in (1, -1):
                    x = w.copy()
                    kernels.conjugate_1q(x, kernels.rotation_matrix(s.axis, a + sign * HALF_PI), s.target)
                    vals.append(kernels.trace_product(x, heis[s_i + 1]))
                grad[b.index] = 0.5 * b.scale * (vals[0] - vals[1])
            w = w.copy()
            if s.kind == "CNOT":
                kernels.conjugate_cnot(w, s.control, s.target)
            else:
                kernels.conjugate_1q(w, gates[s_i], s.target)
        return grad
