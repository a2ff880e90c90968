"""Experiment configuration: a versioned JSON schema with unknown keys rejected."""
from __future__ import annotations

import hashlib
import json
import os
import re
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

SCHEMA_VERSION = 1
EXPERIMENTS = (
    "TRAIN_INITIAL_QF",
    "PROPAGATE_ANALYTIC",
    "PROPAGATE_DATA",
    "SAMPLE",
    "EULER_MARUYAMA",
    "QGAN_TRAIN",
    "REORDER_ANALYSIS",
)


class ConfigError(Exception):
    """Validation failure with a 1-based line number into the config file (0 if unknown)."""

    def __init__(self, message, line=0, path=None):
        self.line = line
        self.path = path
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SdeSection(_Strict):
    nu: float = Field(gt=0)
    mu: float
    sigma: float = Field(ge=0)
    x0: float
    t0: float


class FeatureMapSection(_Strict):
    kind: Literal["PRODUCT", "TOWER", "CHEBYSHEV_TOWER"]
    axis: Literal["X", "Y", "Z"]


class CostSection(_Strict):
    terms: list[tuple[int, Literal["X", "Y", "Z"], float]]
    alpha: float = 1.0


class BoundarySection(_Strict):
    kind: Literal["PINNED", "FLOATING"] = "FLOATING"
    pin_points: list[float] = []
    pin_weight: float = Field(1.0, ge=0)
    t_boundary: float = 0.0


class GeneratorSection(_Strict):
    n_qubits: int = Field(6, ge=1, le=24)
    depth: int = Field(6, ge=1)
    layout: Literal["MAIN_TEXT", "SANDWICH"] = "MAIN_TEXT"
    z_map: FeatureMapSection
    t_map: Optional[FeatureMapSection] = None
    costs: Optional[list[CostSection]] = None
    boundary: Optional[BoundarySection] = None
    train_alpha: bool = False
    classical_init: bool = False
    theta_init_scale: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _init_needs_sandwich(self):
        if self.classical_init and self.layout != "SANDWICH":
            raise ValueError("classical_init needs layout SANDWICH")
        return self


class GridSection(_Strict):
    n_z: int = Field(21, ge=2)
    n_t: int = Field(20, ge=1)
    t_min: float = 0.0
    t_max: float = 0.5
    z_edge: float = Field(0.99, gt=0, lt=1)


class LossSection(_Strict):
    data_weight: float = Field(1.0, ge=0)
    sde_weight: float = Field(1.0, ge=0)
    eps_slope: float = Field(1e-3, gt=0)


class OptimizerSection(_Strict):
    lr: Optional[float] = Field(None, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class DataSection(_Strict):
    source: Literal["ANALYTIC", "EULER_MARUYAMA"] = "EULER_MARUYAMA"
    n_samples: int = Field(100000, ge=1)
    n_points: int = Field(43, ge=1)
    t: float = 0.0
    dt: float = Field(1e-3, gt=0)


class SamplingSection(_Strict):
    n_samples: int = Field(100000, ge=1)
    slices: list[float] = [0.0, 0.25, 0.5]
    n_bins: int = Field(40, ge=1)
    range: Optional[tuple[float, float]] = None
    surface_nz: int = Field(21, ge=2)
    surface_nt: int = Field(20, ge=1)


class EulerSection(_Strict):
    dt: float = Field(1e-3, gt=0)
    n_paths: int = Field(100000, ge=1)
    slices: list[float] = [0.0, 0.25, 0.5]
    n_bins: int = Field(40, ge=1)
    range: Optional[tuple[float, float]] = None


class QganSection(_Strict):
    n_qubits: int = Field(6, ge=1, le=24)
    depth: int = Field(6, ge=1)
    epochs: int = Field(2000, ge=1)
    epsilon: float = Field(0.1, ge=0)
    batch_size: int = Field(64, ge=1)
    ks_samples: int = Field(2000, ge=1)
    lr_generator: float = Field(0.01, gt=0)
    lr_discriminator: float = Field(0.01, gt=0)
    non_saturating: bool = True
    target_mu: float = 0.0
    target_sigma: float = Field(0.2, gt=0)
    n_data: int = Field(10000, ge=1)
    n_eval: int = Field(100000, ge=1)
    n_bins: int = Field(40, ge=1)
    grid_points: int = Field(201, ge=11)


class ReorderSection(_Strict):
    source: Literal["ANALYTIC_SINGLE_DIP", "MODEL"] = "ANALYTIC_SINGLE_DIP"
    model: Optional[str] = None
    n_points: int = Field(200, ge=11)
    mu: float = 0.0
    sigma: float = Field(0.2, gt=0)
    flag_factor: float = Field(0.25, gt=0)


class ExperimentConfig(_Strict):
    schema_version: int
    experiment: Literal[EXPERIMENTS]
    seed: int = Field(0, ge=0)
    epochs: int = Field(1000, ge=1)
    checkpoint_every: int = Field(0, ge=0)
    sde: Optional[SdeSection] = None
    generator: Optional[GeneratorSection] = None
    grid: GridSection = GridSection()
    loss: LossSection = LossSection()
    optimizer: OptimizerSection = OptimizerSection()
    data: DataSection = DataSection()
    initial_model: Optional[str] = None
    model: Optional[str] = None
    sampling: SamplingSection = SamplingSection()
    euler_maruyama: EulerSection = EulerSection()
    qgan: QganSection = QganSection()
    reorder: ReorderSection = ReorderSection()
    output_dir: Optional[str] = None

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v} (expected {SCHEMA_VERSION})")
        return v

    @model_validator(mode="after")
    def _sections(self):
        e = self.experiment
        needs_sde = e in ("TRAIN_INITIAL_QF", "PROPAGATE_ANALYTIC", "PROPAGATE_DATA", "EULER_MARUYAMA", "SAMPLE")
        if needs_sde and self.sde is None:
            raise ValueError(f"experiment {e} needs an 'sde' section")
        if e in ("TRAIN_INITIAL_QF", "PROPAGATE_ANALYTIC", "PROPAGATE_DATA") and self.generator is None:
            raise ValueError(f"experiment {e} needs a 'generator' section")
        if e in ("PROPAGATE_ANALYTIC", "PROPAGATE_DATA") and self.generator.t_map is None:
            raise ValueError("propagation needs generator.t_map")
        if e == "PROPAGATE_DATA" and self.initial_model is None:
            raise ValueError("PROPAGATE_DATA needs 'initial_model'")
        if e == "SAMPLE" and self.model is None:
            raise ValueError("SAMPLE needs 'model'")
        if e == "REORDER_ANALYSIS" and self.reorder.source == "MODEL" and self.reorder.model is None:
            raise ValueError("reorder.source MODEL needs reorder.model")
        return self


def _line_of(text: str, loc) -> int:
    """Best line for an error location: the last key of ``loc`` found after its parents."""
    pos = 0
    line = 0
    for part in loc:
        if isinstance(part, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(part))).search(text, pos)
        if m is None:
            break
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return line


def _referenced_files(cfg: ExperimentConfig):
    for key, value in (("initial_model", cfg.initial_model), ("model", cfg.model),
                       ("reorder.model", cfg.reorder.model)):
        if value is not None:
            yield key, value


def load_config(path) -> ExperimentConfig:
    """Parse and validate ``path``; raise :class:`ConfigError` naming the offending line."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", 0, str(path)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", 1, str(path))
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(err["loc"])
        key = ".".join(str(p) for p in loc) or "<root>"
        if err["type"] == "missing":
            parent = loc[:-1]
            line = _line_of(text, parent) if parent else 1
            msg = f"missing required key '{key}'"
        elif err["type"] == "extra_forbidden":
            line = _line_of(text, loc)
            msg = f"unknown key '{key}'"
        else:
            line = _line_of(text, loc) if loc else 1
            msg = f"invalid value for '{key}': {err['msg']}"
        raise ConfigError(msg, line or 1, str(path)) from None
    base = os.path.dirname(os.path.abspath(path))
    for key, ref in _referenced_files(cfg):
        full = ref if os.path.isabs(ref) else os.path.join(base, ref)
        if not os.path.exists(full):
            raise ConfigError(f"'{key}' refers to missing file {ref!r}",
                              _line_of(text, tuple(key.split("."))) or 1, str(path))
    return cfg


def resolve_path(config_path, ref):
    if ref is None or os.path.isabs(ref):
        return ref
    return os.path.join(os.path.dirname(os.path.abspath(config_path)), ref)


def canonical_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    """Git blob SHA-1 of the canonical config text."""
    data = canonical_json(cfg).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
