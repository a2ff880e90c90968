"""Gate programs with symbolic angle slots: feature maps, HEA, sandwich layout.

A :class:`CircuitProgram` is an immutable list of :class:`Slot` objects.  Each
rotation slot carries a binding that decides its angle at evaluation time:

* :class:`Constant` - a fixed angle,
* :class:`Variable` - ``phi_j(x)`` of an encoded input variable,
* :class:`Parameter` - ``scale * theta[index]``.

Every parameter index is owned by exactly one slot, so a parameter shift of
``theta[k]`` is a shift of one gate angle.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .statevector import Gate

EDGE = 1e-9
FEATURE_MAP_KINDS = ("PRODUCT", "TOWER", "CHEBYSHEV_TOWER")
AXES = ("X", "Y", "Z")


class ConditioningWarning(UserWarning):
    """Least-squares basis is rank deficient; a minimum-norm solution is used."""


def clamp(x):
    return np.clip(x, -1.0 + EDGE, 1.0 - EDGE)


def check_domain(x, strict=False):
    """Raise :class:`DomainError` outside [-1, 1] (``strict``: outside the open interval)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("encoded variable is not finite")
    limit = 1.0 - EDGE if strict else 1.0
    bad = np.abs(x) >= limit if strict else np.abs(x) > limit
    if np.any(bad):
        where = "open interval (-1, 1) minus the clamp margin" if strict else "[-1, 1]"
        raise DomainError(f"encoded variable {x[bad].ravel()[0]!r} outside {where}")


@dataclass(frozen=True)
class FeatureMapSpec:
    kind: str = "PRODUCT"
    axis: str = "Y"
    variable: str = "z"

    def __post_init__(self):
        if self.kind not in FEATURE_MAP_KINDS:
            raise ConfigurationError(f"unknown feature map kind {self.kind!r}")
        if self.axis not in AXES:
            raise ConfigurationError(f"unknown feature map axis {self.axis!r}")

    def _mult(self, j):
        return {"PRODUCT": 1.0, "TOWER": float(j), "CHEBYSHEV_TOWER": 2.0 * j}[self.kind]

    def angle(self, j, x):
        """Encoding angle ``phi_j(x)`` for qubit number ``j`` (1-based)."""
        x = np.clip(x, -1.0, 1.0)
        base = np.arccos(x) if self.kind == "CHEBYSHEV_TOWER" else np.arcsin(x)
        return self._mult(j) * base

    def dangle(self, j, x):
        x = clamp(x)
        d = 1.0 / np.sqrt(1.0 - x * x)
        if self.kind == "CHEBYSHEV_TOWER":
            d = -d
        return self._mult(j) * d

    def d2angle(self, j, x):
        x = clamp(x)
        d = x / (1.0 - x * x) ** 1.5
        if self.kind == "CHEBYSHEV_TOWER":
            d = -d
        return self._mult(j) * d


@dataclass(frozen=True)
class AnsatzSpec:
    depth: int
    n_qubits: int

    def __post_init__(self):
        if self.depth < 1 or self.n_qubits < 1:
            raise ConfigurationError("ansatz depth and width must be positive")

    @property
    def parameter_count(self) -> int:
        return 3 * self.n_qubits * self.depth


@dataclass(frozen=True)
class Constant:
    angle: float


@dataclass(frozen=True)
class Variable:
    variable: str
    fmap: FeatureMapSpec
    j: int


@dataclass(frozen=True)
class Parameter:
    index: int
    scale: float = 1.0


@dataclass(frozen=True)
class Slot:
    kind: str
    target: int
    control: int | None = None
    binding: Constant | Variable | Parameter | None = None

    @property
    def axis(self):
        return self.kind[1]


@dataclass(frozen=True)
class CircuitProgram:
    n_qubits: int
    slots: tuple

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        owners = {}
        for i, s in enumerate(self.slots):
            if s.kind == "CNOT":
                if s.binding is not None:
                    raise ConfigurationError("CNOT slots take no binding")
            elif s.binding is None:
                raise ConfigurationError(f"rotation slot {i} has no binding")
            Gate(s.kind, s.target, s.control).check(self.n_qubits)
            if isinstance(s.binding, Parameter):
                if s.binding.index in owners:
                    raise ConfigurationError(
                        f"parameter {s.binding.index} bound by slots {owners[s.binding.index]} and {i}"
                    )
                owners[s.binding.index] = i
        if owners and sorted(owners) != list(range(len(owners))):
            raise ConfigurationError("parameter indices must be contiguous from 0")
        object.__setattr__(self, "_param_slots", tuple(owners[k] for k in range(len(owners))))

    def __add__(self, other: "CircuitProgram") -> "CircuitProgram":
        if other.n_qubits != self.n_qubits:
            raise ConfigurationError("cannot concatenate programs of different widths")
        return CircuitProgram(self.n_qubits, self.slots + other.slots)

    def __len__(self):
        return len(self.slots)

    @property
    def n_params(self) -> int:
        return len(self._param_slots)

    @property
    def parameter_slots(self) -> tuple:
        """Slot index owning each parameter index."""
        return self._param_slots

    @property
    def variables(self) -> tuple:
        seen = []
        for s in self.slots:
            if isinstance(s.binding, Variable) and s.binding.variable not in seen:
                seen.append(s.binding.variable)
        return tuple(seen)

    def variable_slots(self, variable: str) -> list:
        return [
            i
            for i, s in enumerate(self.slots)
            if isinstance(s.binding, Variable) and s.binding.variable == variable
        ]

    def angles(self, theta, values, shifts=()):
        """Gate angles for every slot (NaN for CNOTs); ``shifts`` holds ``(slot, k)`` with k quarter turns."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ConfigurationError(f"expected {self.n_params} parameters, got {theta.shape}")
        out = np.full(len(self.slots), np.nan)
        for i, s in enumerate(self.slots):
            b = s.binding
            if isinstance(b, Constant):
                out[i] = b.angle
            elif isinstance(b, Parameter):
                out[i] = b.scale * theta[b.index]
            elif isinstance(b, Variable):
                if b.variable not in values:
                    raise ConfigurationError(f"no value given for variable {b.variable!r}")
                out[i] = b.fmap.angle(b.j, values[b.variable])
        for i, k in shifts:
            out[i] += k * (math.pi / 2)
        return out

    def bind(self, theta, values, shifts=()) -> list:
        angles = self.angles(theta, values, shifts)
        return [
            Gate(s.kind, s.target, s.control) if s.kind == "CNOT"
            else Gate(s.kind, s.target, None, float(a))
            for s, a in zip(self.slots, angles)
        ]


def build_feature_map(spec: FeatureMapSpec, n_qubits: int) -> CircuitProgram:
    slots = [
        Slot("R" + spec.axis, q, None, Variable(spec.variable, spec, q + 1))
        for q in range(n_qubits)
    ]
    return CircuitProgram(n_qubits, slots)


def _hea_slots(spec: AnsatzSpec, offset=0):
    n = spec.n_qubits
    slots = []
    k = offset
    for _ in range(spec.depth):
        for q in range(n):
            for kind in ("RZ", "RY", "RZ"):
                slots.append(Slot(kind, q, None, Parameter(k)))
                k += 1
        for q in range(n - 1):
            slots.append(Slot("CNOT", q + 1, q))
    return slots


def _hea_adjoint_slots(spec: AnsatzSpec, offset=0):
    """Reversed HEA with negated angles; equal parameters cancel the forward block."""
    forward = _hea_slots(spec, offset)
    out = []
    for s in reversed(forward):
        if isinstance(s.binding, Parameter):
            s = Slot(s.kind, s.target, None, Parameter(s.binding.index, -s.binding.scale))
        out.append(s)
    return out


def build_hea(spec: AnsatzSpec) -> CircuitProgram:
    """Depth layers of per-qubit RZ RY RZ followed by a CNOT line (0,1), ..., (N-2,N-1)."""
    return CircuitProgram(spec.n_qubits, _hea_slots(spec))


def init_layers(init_angles, n_qubits: int) -> list:
    """Two constant single-qubit layers: RY(beta_q) then RZ(gamma_q)."""
    init_angles = np.asarray(init_angles, dtype=float)
    if init_angles.shape != (2 * n_qubits,):
        raise ConfigurationError(
            f"init_angles needs {2 * n_qubits} entries, got {init_angles.shape[0] if init_angles.ndim else 0}"
        )
    beta, gamma = init_angles[:n_qubits], init_angles[n_qubits:]
    slots = [Slot("RY", q, None, Constant(float(beta[q]))) for q in range(n_qubits)]
    slots += [Slot("RZ", q, None, Constant(float(gamma[q]))) for q in range(n_qubits)]
    return slots


def build_initialized_sandwich(spec: AnsatzSpec, fm: FeatureMapSpec, init_angles, rng=None):
    """Init layers, then U_a(theta1) U_a^dag(theta2), feature map, U_b(theta3) U_b^dag(theta4).

    Returns ``(program, theta0)`` with ``theta1 == theta2`` and ``theta3 == theta4`` so
    both variational blocks start as the identity.  ``rng`` draws the shared
    block angles uniformly in (-pi, pi); ``None`` starts them at zero.
    """
    n = spec.n_qubits
    p = spec.parameter_count
    slots = init_layers(init_angles, n)
    slots += _hea_slots(spec, 0)
    slots += _hea_adjoint_slots(spec, p)
    slots += build_feature_map(fm, n).slots
    slots += _hea_slots(spec, 2 * p)
    slots += _hea_adjoint_slots(spec, 3 * p)
    program = CircuitProgram(n, slots)
    if rng is None:
        a = np.zeros(p)
        b = np.zeros(p)
    else:
        a = rng.uniform(-math.pi, math.pi, p)
        b = rng.uniform(-math.pi, math.pi, p)
    theta0 = np.concatenate([a, a, b, b])
    return program, theta0


# --------------------------------------------------------------------------
# classical initialization


def _init_basis(fm: FeatureMapSpec, n_qubits: int, x):
    """Columns reachable by one qubit of the identity-initialized circuit."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(1, n_qubits + 1):
        if fm.axis == "Z":
            cols.append(np.ones_like(x))
        else:
            phi = fm.angle(j, x)
            cols.append(np.cos(phi))
            cols.append(np.sin(phi))
    return np.column_stack(cols)


def _qubit_angles(axis, u, v):
    """Init angles (beta, gamma) with trial function ``u cos(phi) + v sin(phi)`` (u^2+v^2=1)."""
    beta = math.acos(max(-1.0, min(1.0, u)))
    if axis == "Y":
        # f = cos(beta) cos(phi) - sin(beta) cos(gamma) sin(phi)
        gamma = math.pi if v > 0 else 0.0
    else:
        # f = cos(beta) cos(phi) + sin(beta) sin(gamma) sin(phi)
        gamma = math.pi / 2 if v >= 0 else -math.pi / 2
    return beta, gamma


def initialized_trial_function(init_angles, weights, fm: FeatureMapSpec, x):
    """Closed form of the identity-initialized circuit with a weighted Z readout."""
    n = len(weights)
    beta = np.asarray(init_angles[:n])
    gamma = np.asarray(init_angles[n:])
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for q in range(n):
        phi = fm.angle(q + 1, x)
        if fm.axis == "Y":
            f = np.cos(beta[q]) * np.cos(phi) - np.sin(beta[q]) * np.cos(gamma[q]) * np.sin(phi)
        elif fm.axis == "X":
            f = np.cos(beta[q]) * np.cos(phi) + np.sin(beta[q]) * np.sin(gamma[q]) * np.sin(phi)
        else:
            f = np.cos(beta[q]) * np.ones_like(x)
        out = out + weights[q] * f
    return out


def classical_init_fit(target_points, fm: FeatureMapSpec, n_qubits: int):
    """Least-squares fit of the identity-initialized circuit to ``(x, value)`` pairs.

    Returns ``(init_angles, weights, residual)`` where ``weights`` are the
    per-qubit Z readout coefficients.  The fitted function is reproduced
    exactly by :func:`initialized_trial_function`.
    """
    pts = np.asarray(target_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigurationError("target_points must be (x, value) pairs")
    if pts.shape[0] < 2 * n_qubits:
        raise ConfigurationError(f"need at least {2 * n_qubits} target points, got {pts.shape[0]}")
    x, y = pts[:, 0], pts[:, 1]
    check_domain(x)
    basis = _init_basis(fm, n_qubits, x)
    coef, _, rank, sv = np.linalg.lstsq(basis, y, rcond=None)
    if rank < basis.shape[1]:
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        warnings.warn(
            f"init basis rank {rank} < {basis.shape[1]} (condition {cond:.3g}); using minimum-norm fit",
            ConditioningWarning,
            stacklevel=2,
        )
    residual = float(np.sqrt(np.mean((basis @ coef - y) ** 2)))
    beta = np.zeros(n_qubits)
    gamma = np.zeros(n_qubits)
    weights = np.ones(n_qubits)
    for q in range(n_qubits):
        if fm.axis == "Z":
            c = coef[q]
            weights[q] = abs(c) if c != 0 else 1.0
            beta[q] = 0.0 if c > 0 else (math.pi if c < 0 else math.pi / 2)
            continue
        c1, c2 = coef[2 * q], coef[2 * q + 1]
        r = math.hypot(c1, c2)
        if r < 1e-300:
            # zero contribution at unit weight
            beta[q], gamma[q] = math.pi / 2, (math.pi / 2 if fm.axis == "Y" else 0.0)
            continue
        weights[q] = r
        beta[q], gamma[q] = _qubit_angles(fm.axis, c1 / r, c2 / r)
    return np.concatenate([beta, gamma]), weights, residual
