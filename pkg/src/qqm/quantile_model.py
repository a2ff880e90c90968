"""Trainable circuit quantile function ``G(z, t)`` and its boundary handling.

The generator value is ``sum_l alpha_l <C_l>`` after the circuit.  Two layouts
are supported:

``MAIN_TEXT``
    t feature map, z feature map, then one HEA block.
``SANDWICH``
    constant init layers, ``U_a U_a^dag``, the feature maps, ``U_b U_b^dag``.

With a FLOATING boundary the model is ``f(t, z) = u0(z) - G(t_b, z) + G(t, z)``
so ``f(t_b, z) == u0(z)`` for every parameter vector.  PINNED keeps ``f = G``
and adds a penalty at ``pin_points`` during training.

Two evaluation paths exist.  :func:`evaluate` and
:func:`evaluate_with_derivatives` run the counted per-circuit parameter-shift
rules of :mod:`qqm.autodiff`.  :class:`ModelBatch` evaluates the same
quantities on many points at once through :mod:`qqm.batched`, which is what
training uses.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import sparse

from . import autodiff, batched, rng as rngmod, sde_oracle
from .circuits import (
    AnsatzSpec,
    CircuitProgram,
    FeatureMapSpec,
    _hea_adjoint_slots,
    _hea_slots,
    build_feature_map,
    check_domain,
    init_layers,
)
from .errors import ConfigurationError
from .statevector import CostOperator

LAYOUTS = ("MAIN_TEXT", "SANDWICH")
BOUNDARY_KINDS = ("PINNED", "FLOATING")
QUANTITIES = ("dz", "dzz", "dt")


# --------------------------------------------------------------------------
# initial profiles u0(z)


@dataclass(frozen=True)
class AnalyticProfile:
    """Closed-form OU quantile at a fixed time."""

    params: sde_oracle.SdeParams
    t: float

    def derivatives(self, z, want=("dz", "dzz")):
        q, qz, qzz, _ = sde_oracle.analytic_qf_derivatives(self.params, np.asarray(z, float), self.t)
        return np.asarray(q, float), np.asarray(qz, float), np.asarray(qzz, float)

    def to_dict(self):
        p = self.params
        return {"kind": "ANALYTIC", "t": self.t,
                "params": {"nu": p.nu, "mu": p.mu, "sigma": p.sigma, "x0": p.x0, "t0": p.t0}}


@dataclass(frozen=True, eq=False)
class CircuitProfile:
    """A trained fixed-time generator used as the initial profile.

    Its z-derivatives are parameter-shift derivatives of the circuit.
    """

    spec: "GeneratorSpec"
    theta: np.ndarray

    def derivatives(self, z, want=("dz", "dzz")):
        """``(value, dz, dzz)``; derivatives not in ``want`` come back as None."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = ModelBatch(self.spec, z, None, want=want).forward(self.theta)
        return out["value"], out.get("dz"), out.get("dzz")

    def to_dict(self):
        return {"kind": "CIRCUIT", "model": model_to_dict(self.spec, self.theta)}


@dataclass(frozen=True)
class BoundaryMode:
    kind: str = "FLOATING"
    u0: AnalyticProfile | CircuitProfile | None = None
    pin_points: tuple = ()
    pin_weight: float = 1.0
    t_boundary: float = 0.0

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ConfigurationError(f"unknown boundary kind {self.kind!r}")
        if self.u0 is None:
            raise ConfigurationError(f"{self.kind} boundary needs an initial profile u0")
        if self.kind == "PINNED" and not self.pin_points:
            raise ConfigurationError("PINNED boundary needs pin_points")
        object.__setattr__(self, "pin_points", tuple(float(p) for p in self.pin_points))


# --------------------------------------------------------------------------
# generator specification


@dataclass(frozen=True)
class GeneratorSpec:
    n_qubits: int
    z_map: FeatureMapSpec
    ansatz: AnsatzSpec
    t_map: FeatureMapSpec | None = None
    layout: str = "MAIN_TEXT"
    costs: tuple = ()
    boundary: BoundaryMode | None = None
    init_angles: tuple | None = None
    train_alpha: bool = False

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigurationError(f"unknown layout {self.layout!r}")
        if self.ansatz.n_qubits != self.n_qubits:
            raise ConfigurationError("ansatz width differs from n_qubits")
        costs = tuple(self.costs) or (CostOperator.total_z(self.n_qubits),)
        for c in costs:
            c.check(self.n_qubits)
            if not math.isfinite(c.global_weight):
                raise ConfigurationError("alpha weights must be finite")
        object.__setattr__(self, "costs", costs)
        if self.t_map is not None and self.t_map.variable == self.z_map.variable:
            raise ConfigurationError("z_map and t_map must bind distinct variables")
        if self.boundary is not None and self.t_map is None:
            raise ConfigurationError("a boundary mode needs a time feature map")
        if self.layout == "SANDWICH":
            if self.init_angles is None:
                object.__setattr__(self, "init_angles", (0.0,) * (2 * self.n_qubits))
            ang = tuple(float(a) for a in self.init_angles)
            if len(ang) != 2 * self.n_qubits:
                raise ConfigurationError(f"init_angles needs {2 * self.n_qubits} entries")
            object.__setattr__(self, "init_angles", ang)
        elif self.init_angles is not None:
            raise ConfigurationError("init_angles only apply to the SANDWICH layout")

    @property
    def z_variable(self):
        return self.z_map.variable

    @property
    def t_variable(self):
        return None if self.t_map is None else self.t_map.variable

    @property
    def alpha(self):
        return np.array([c.global_weight for c in self.costs])

    def with_alpha(self, alpha) -> "GeneratorSpec":
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (len(self.costs),):
            raise ConfigurationError("one alpha per cost operator")
        return replace(self, costs=tuple(CostOperator(c.terms, float(a)) for c, a in zip(self.costs, alpha)))

    def output_bound(self) -> float:
        return float(sum(c.norm_bound() for c in self.costs))


def build_program(spec: GeneratorSpec) -> CircuitProgram:
    n = spec.n_qubits
    enc = []
    if spec.t_map is not None:
        enc += build_feature_map(spec.t_map, n).slots
    enc += build_feature_map(spec.z_map, n).slots
    if spec.layout == "MAIN_TEXT":
        return CircuitProgram(n, tuple(enc) + tuple(_hea_slots(spec.ansatz)))
    p = spec.ansatz.parameter_count
    slots = init_layers(spec.init_angles, n)
    slots += _hea_slots(spec.ansatz, 0) + _hea_adjoint_slots(spec.ansatz, p)
    slots += list(enc)
    slots += _hea_slots(spec.ansatz, 2 * p) + _hea_adjoint_slots(spec.ansatz, 3 * p)
    return CircuitProgram(n, slots)


def parameter_count(spec: GeneratorSpec) -> int:
    per_block = spec.ansatz.parameter_count
    return per_block if spec.layout == "MAIN_TEXT" else 4 * per_block


def initial_theta(spec: GeneratorSpec, seed: int, identity_blocks: bool = False, scale: float = 1.0):
    """Seeded start: uniform(-scale*pi, scale*pi) per slot.

    With ``identity_blocks`` the sandwich halves are paired so both variational
    blocks start as the identity.
    """
    if not scale > 0:
        raise ConfigurationError("theta init scale must be positive")
    gen = rngmod.stream(seed, rngmod.THETA_INIT)
    if identity_blocks:
        if spec.layout != "SANDWICH":
            raise ConfigurationError("identity-initialized blocks need the SANDWICH layout")
        p = spec.ansatz.parameter_count
        a = gen.uniform(-scale * math.pi, scale * math.pi, p)
        b = gen.uniform(-scale * math.pi, scale * math.pi, p)
        return np.concatenate([a, a, b, b])
    return gen.uniform(-scale * math.pi, scale * math.pi, parameter_count(spec))


@lru_cache(maxsize=32)
def _compiled(spec: GeneratorSpec):
    program = build_program(spec)
    return program, batched.CompiledProgram(program, spec.costs)


def _check_theta(spec, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (parameter_count(spec),):
        raise ConfigurationError(f"expected {parameter_count(spec)} parameters, got {theta.shape}")
    return theta


# --------------------------------------------------------------------------
# per-point evaluation (counted parameter-shift path)


@dataclass
class ModelOutput:
    value: float
    dz: float | None = None
    dzz: float | None = None
    dt: float | None = None


def _values(spec, z, t):
    check_domain(z)
    vals = {spec.z_variable: float(z)}
    if spec.t_map is not None:
        if t is None:
            raise ConfigurationError("this generator needs a time value")
        check_domain(t)
        vals[spec.t_variable] = float(t)
    return vals


class _Readout:
    """Sum of weighted cost expectations through one evaluator per cost."""

    def __init__(self, spec, cache=True):
        program, _ = _compiled(spec)
        self.evaluators = [autodiff.Evaluator(program, c, cache=cache) for c in spec.costs]

    @property
    def evaluations(self):
        return sum(e.evaluations for e in self.evaluators)

    def value(self, theta, vals):
        return sum(e(theta, vals) for e in self.evaluators)

    def d1(self, theta, vals, var):
        return sum(autodiff.d_dvariable(e, theta, vals, var) for e in self.evaluators)

    def d2(self, theta, vals, var):
        return sum(autodiff.d2_dvariable2(e, theta, vals, var) for e in self.evaluators)


def _raw(spec, theta, z, t, want, readout):
    vals = _values(spec, z, t)
    out = ModelOutput(readout.value(theta, vals))
    if "dz" in want:
        out.dz = readout.d1(theta, vals, spec.z_variable)
    if "dzz" in want:
        out.dzz = readout.d2(theta, vals, spec.z_variable)
    if "dt" in want:
        if spec.t_map is None:
            raise ConfigurationError("dt requested but the generator has no time feature map")
        out.dt = readout.d1(theta, vals, spec.t_variable)
    return out


def evaluate_with_derivatives(spec: GeneratorSpec, theta, z, t=None, want=QUANTITIES,
                              cache: bool = True) -> ModelOutput:
    """Model value and requested derivatives at one point via parameter shifts."""
    theta = _check_theta(spec, theta)
    want = set(want)
    unknown = want - set(QUANTITIES)
    if unknown:
        raise ConfigurationError(f"unknown derivative request {sorted(unknown)}")
    if "dt" in want and spec.t_map is None:
        raise ConfigurationError("dt requested but the generator has no time feature map")
    readout = _Readout(spec, cache=cache)
    g = _raw(spec, theta, z, t, want, readout)
    b = spec.boundary
    if b is None or b.kind != "FLOATING":
        return g
    g0 = _raw(spec, theta, z, b.t_boundary, want - {"dt"}, readout)
    u, uz, uzz = (float(np.asarray(a).ravel()[0]) for a in b.u0.derivatives(np.array([z])))
    out = ModelOutput(u - g0.value + g.value, dt=g.dt)
    if "dz" in want:
        out.dz = uz - g0.dz + g.dz
    if "dzz" in want:
        out.dzz = uzz - g0.dzz + g.dzz
    return out


def evaluate(spec: GeneratorSpec, theta, z, t=None) -> ModelOutput:
    return evaluate_with_derivatives(spec, theta, z, t, want=())


# --------------------------------------------------------------------------
# batched evaluation


def _stencil(program, vals, var, kind):
    if kind == "G":
        return [((), 1.0)]
    if kind == "d2":
        return autodiff.second_derivative_stencil(program, vals, var)
    return autodiff.first_derivative_stencil(program, vals, var)


class ModelBatch:
    """Model outputs on a fixed set of points, with gradients for training.

    ``forward`` returns ``{"value", "dz", "dzz", "dt"}`` arrays (only the
    requested ones); ``backward`` maps output sensitivities to the gradient
    with respect to ``theta`` (and ``alpha`` when the spec trains it).
    """

    def __init__(self, spec: GeneratorSpec, z, t=None, want=()):
        self.spec = spec
        self.want = tuple(q for q in QUANTITIES if q in set(want))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if spec.t_map is None:
            if "dt" in self.want:
                raise ConfigurationError("dt requested but the generator has no time feature map")
            t = np.full(z.shape, np.nan)
        else:
            if t is None:
                raise ConfigurationError("this generator needs time values")
            t = np.broadcast_to(np.asarray(t, dtype=float), z.shape).copy()
            check_domain(t)
        check_domain(z, strict=bool({"dz", "dzz"} & set(self.want)))
        self.z, self.t = z, t
        self.program, self.engine = _compiled(spec)
        n = z.size
        outs = ("value",) + self.want
        self.outputs = outs
        b = spec.boundary
        floating = b is not None and b.kind == "FLOATING"
        kinds = {"value": "G", "dz": "d1", "dzz": "d2", "dt": "d1"}
        cols = {}
        rows, cidx, data = [], [], []
        angle_rows = []

        def add(row, zz, tt, out, sign):
            vals = {spec.z_variable: zz}
            if spec.t_map is not None:
                vals[spec.t_variable] = tt
            var = spec.t_variable if out == "dt" else spec.z_variable
            for shifts, c in _stencil(self.program, vals, var, kinds[out]):
                key = (zz, tt, autodiff.canonical_shifts(shifts))
                col = cols.get(key)
                if col is None:
                    col = cols[key] = len(cols)
                    angle_rows.append(self.engine.encoding_angles(vals, key[2]))
                rows.append(row)
                cidx.append(col)
                data.append(sign * c)

        for oi, out in enumerate(outs):
            for i in range(n):
                row = oi * n + i
                add(row, z[i], t[i], out, 1.0)
                if floating and out != "dt":
                    add(row, z[i], b.t_boundary, out, -1.0)
        self.n_points = n
        self.stencil = sparse.csr_matrix(
            (data, (rows, cidx)), shape=(len(outs) * n, len(cols))
        )
        self.stencil.sum_duplicates()
        self.batch = batched.EncodingBatch(np.array(angle_rows).reshape(len(cols), -1))
        self.offset = {o: np.zeros(n) for o in outs}
        if floating:
            u, uz, uzz = b.u0.derivatives(z, want=tuple(o for o in ("dz", "dzz") if o in outs))
            self.offset["value"] = np.asarray(u, float)
            if "dz" in outs:
                self.offset["dz"] = np.asarray(uz, float)
            if "dzz" in outs:
                self.offset["dzz"] = np.asarray(uzz, float)

    @property
    def n_configurations(self):
        return len(self.batch)

    def _split(self, flat):
        n = self.n_points
        return {o: flat[k * n:(k + 1) * n] + self.offset[o] for k, o in enumerate(self.outputs)}

    def forward(self, theta, alpha=None):
        theta = _check_theta(self.spec, theta)
        e = self.engine.values(theta, self.batch, alpha)
        return self._split(self.stencil @ e)

    def backward(self, theta, sensitivities, alpha=None):
        """``sum_outputs sum_i s[o][i] * d out_i / d theta``; also returns d/d alpha."""
        theta = _check_theta(self.spec, theta)
        n = self.n_points
        flat = np.zeros(len(self.outputs) * n)
        for k, o in enumerate(self.outputs):
            if o in sensitivities and sensitivities[o] is not None:
                flat[k * n:(k + 1) * n] = sensitivities[o]
        w = self.stencil.T @ flat
        g_theta = self.engine.grad(theta, self.batch, w, alpha)
        g_alpha = None
        if self.spec.train_alpha:
            g_alpha = w @ self.engine.cost_values(theta, self.batch)
        return g_theta, g_alpha


def sample(spec: GeneratorSpec, theta, t, n_samples: int, rng_seed: int,
           chunk: int = 20000) -> sde_oracle.SampleSet:
    """Evaluate the model at ``n_samples`` latent draws from uniform(-1, 1)."""
    theta = _check_theta(spec, theta)
    gen = rngmod.stream(rng_seed, rngmod.SAMPLING)
    z = rngmod.uniform_latent(gen, n_samples)
    values = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        zz = z[start:start + chunk]
        batch = ModelBatch(spec, zz, None if spec.t_map is None else t)
        values[start:start + chunk] = batch.forward(theta)["value"]
    return sde_oracle.SampleSet(values, float("nan") if t is None else float(t), "QQM", rng_seed)


# --------------------------------------------------------------------------
# serialization (floats as hex strings for bit-exact round trips)


def _hx(x):
    return float(x).hex()


def _fx(s):
    return float.fromhex(s) if isinstance(s, str) else float(s)


def _fmap_dict(f):
    return None if f is None else {"kind": f.kind, "axis": f.axis, "variable": f.variable}


def _profile_from_dict(d):
    if d["kind"] == "ANALYTIC":
        return AnalyticProfile(sde_oracle.SdeParams(**{k: _fx(v) for k, v in d["params"].items()}),
                               _fx(d["t"]))
    spec, theta, _ = model_from_dict(d["model"])
    return CircuitProfile(spec, theta)


def _profile_dict(p):
    d = p.to_dict()
    if d["kind"] == "ANALYTIC":
        d["t"] = _hx(d["t"])
        d["params"] = {k: _hx(v) for k, v in d["params"].items()}
    return d


def spec_to_dict(spec: GeneratorSpec) -> dict:
    b = spec.boundary
    return {
        "n_qubits": spec.n_qubits,
        "z_map": _fmap_dict(spec.z_map),
        "t_map": _fmap_dict(spec.t_map),
        "ansatz": {"depth": spec.ansatz.depth},
        "layout": spec.layout,
        "costs": [
            {"terms": [[q, p, _hx(w)] for q, p, w in c.terms], "alpha": _hx(c.global_weight)}
            for c in spec.costs
        ],
        "boundary": None if b is None else {
            "kind": b.kind,
            "u0": _profile_dict(b.u0),
            "pin_points": [_hx(p) for p in b.pin_points],
            "pin_weight": _hx(b.pin_weight),
            "t_boundary": _hx(b.t_boundary),
        },
        "init_angles": None if spec.init_angles is None else [_hx(a) for a in spec.init_angles],
        "train_alpha": spec.train_alpha,
    }


def spec_from_dict(d: dict) -> GeneratorSpec:
    n = int(d["n_qubits"])
    b = d.get("boundary")
    boundary = None
    if b is not None:
        boundary = BoundaryMode(
            b["kind"], _profile_from_dict(b["u0"]),
            tuple(_fx(p) for p in b.get("pin_points", ())),
            _fx(b.get("pin_weight", 1.0)), _fx(b.get("t_boundary", 0.0)),
        )
    return GeneratorSpec(
        n_qubits=n,
        z_map=FeatureMapSpec(**d["z_map"]),
        t_map=None if d.get("t_map") is None else FeatureMapSpec(**d["t_map"]),
        ansatz=AnsatzSpec(int(d["ansatz"]["depth"]), n),
        layout=d["layout"],
        costs=tuple(
            CostOperator(tuple((int(q), p, _fx(w)) for q, p, w in c["terms"]), _fx(c["alpha"]))
            for c in d["costs"]
        ),
        boundary=boundary,
        init_angles=None if d.get("init_angles") is None else tuple(_fx(a) for a in d["init_angles"]),
        train_alpha=bool(d.get("train_alpha", False)),
    )


def model_to_dict(spec: GeneratorSpec, theta, provenance: dict | None = None) -> dict:
    return {
        "format": "qqm-model",
        "version": 1,
        "spec": spec_to_dict(spec),
        "theta": [_hx(x) for x in np.asarray(theta, dtype=float)],
        "alpha": [_hx(a) for a in spec.alpha],
        "provenance": provenance or {},
    }


def model_from_dict(d: dict):
    if d.get("format") != "qqm-model":
        raise ConfigurationError("not a qqm model document")
    spec = spec_from_dict(d["spec"])
    spec = spec.with_alpha([_fx(a) for a in d["alpha"]])
    theta = np.array([_fx(x) for x in d["theta"]])
    _check_theta(spec, theta)
    return spec, theta, d.get("provenance", {})


def save_model(path, spec, theta, provenance=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(spec, theta, provenance), fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
