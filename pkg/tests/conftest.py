import numpy as np
import pytest

from qqm.circuits import CircuitProgram, Constant, FeatureMapSpec, Parameter, Slot, Variable
from qqm.sde_oracle import SdeParams

OU = SdeParams(nu=1.0, mu=0.0, sigma=0.7, x0=4.0, t0=-0.2)


def random_program(rng, n_qubits=None, n_slots=None, variables=("x",), kinds=None):
    """Random rotations and CNOTs; every variable is encoded at least once and there is one parameter."""
    n_qubits = n_qubits or int(rng.integers(1, 5))
    n_slots = n_slots or int(rng.integers(4, 21))
    kinds = kinds or ("PRODUCT", "TOWER", "CHEBYSHEV_TOWER")
    slots = []
    n_params = 0
    forced = [("var", v) for v in variables] + [("param", None)]
    for i in range(n_slots):
        q = int(rng.integers(n_qubits))
        if i < len(forced):
            role, var = forced[i]
        else:
            role = rng.choice(["var", "param", "const", "cnot"] if n_qubits > 1 else ["var", "param", "const"])
            var = variables[int(rng.integers(len(variables)))]
        axis = "XYZ"[int(rng.integers(3))]
        if role == "cnot":
            c = int(rng.integers(n_qubits - 1))
            c = c if c < q else c + 1
            slots.append(Slot("CNOT", q, c))
        elif role == "var":
            fm = FeatureMapSpec(kinds[int(rng.integers(len(kinds)))], axis, var)
            slots.append(Slot("R" + axis, q, None, Variable(var, fm, int(rng.integers(1, n_qubits + 1)))))
        elif role == "param":
            slots.append(Slot("R" + axis, q, None, Parameter(n_params, float(rng.choice([1.0, -1.0])))))
            n_params += 1
        else:
            slots.append(Slot("R" + axis, q, None, Constant(float(rng.uniform(-np.pi, np.pi)))))
    order = rng.permutation(len(slots))
    return CircuitProgram(n_qubits, [slots[i] for i in order])


@pytest.fixture
def ou():
    return OU
