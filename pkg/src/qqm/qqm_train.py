"""Loss assembly and Adam training for circuit quantile functions.

The total loss is ``data_weight * L_data + sde_weight * L_sde`` where

* ``L_data`` is the mean squared error between the model at the data time and
  quantile targets,
* ``L_sde`` is the mean squared residual of the quantilized OU equation

      df/dt = nu (mu - f) + sigma**2 / 2 * f_zz / max(|f_z|, eps_slope)**2

  over the collocation grid, plus the pin penalty for PINNED boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sde_oracle
from .errors import ConfigurationError, NumericalError
from .optim import AdamSettings, OptimizerState
from .quantile_model import (
    GeneratorSpec,
    ModelBatch,
    ModelOutput,
    evaluate_with_derivatives,
    initial_theta,
)


@dataclass(frozen=True)
class TrainingGrid:
    z_points: tuple
    t_points: tuple

    def __post_init__(self):
        z = tuple(float(v) for v in self.z_points)
        t = tuple(float(v) for v in self.t_points)
        for name, pts in (("z_points", z), ("t_points", t)):
            if not pts:
                raise ConfigurationError(f"{name} is empty")
            if any(b <= a for a, b in zip(pts, pts[1:])):
                raise ConfigurationError(f"{name} must be strictly increasing")
        if z[0] < -1 or z[-1] > 1:
            raise ConfigurationError("z_points must lie in [-1, 1]")
        object.__setattr__(self, "z_points", z)
        object.__setattr__(self, "t_points", t)

    @classmethod
    def uniform(cls, n_z=21, n_t=20, t_max=0.5, t_min=0.0, z_edge=0.99):
        """Uniform grids; the two z end points are pulled in to ``+-z_edge``."""
        z = np.linspace(-1.0, 1.0, n_z)
        z[0], z[-1] = -z_edge, z_edge
        return cls(tuple(z), tuple(np.linspace(t_min, t_max, n_t)))

    @property
    def M(self):
        return len(self.z_points) * len(self.t_points)

    def mesh(self):
        zz, tt = np.meshgrid(self.z_points, self.t_points, indexing="ij")
        return zz.ravel(), tt.ravel()


@dataclass(frozen=True)
class DataTargets:
    z: tuple
    q: tuple
    t: float = 0.0

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        q = tuple(float(v) for v in self.q)
        if len(z) != len(q) or not z:
            raise ConfigurationError("targets need matching, non-empty z and q")
        if any(b <= a for a, b in zip(z, z[1:])):
            raise ConfigurationError("target z must be strictly increasing")
        if any(b < a for a, b in zip(q, q[1:])):
            raise ConfigurationError("target quantiles must be non-decreasing")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class LossConfig:
    data_weight: float = 1.0
    sde_weight: float = 1.0
    eps_slope: float = 1e-3

    def __post_init__(self):
        if self.data_weight < 0 or self.sde_weight < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.data_weight == 0 and self.sde_weight == 0:
            raise ConfigurationError("at least one loss weight must be positive")
        if not self.eps_slope > 0:
            raise ConfigurationError("eps_slope must be positive")


def chebyshev_nodes(n_points: int) -> np.ndarray:
    """``cos((2n - 1) pi / (2 n_points))`` for n = 1..n_points, ascending."""
    n = np.arange(1, n_points + 1)
    nodes = np.cos((2 * n - 1) * np.pi / (2 * n_points))[::-1].copy()
    if n_points % 2:
        nodes[n_points // 2] = 0.0
    return nodes


def prepare_quantile_targets(samples, n_points: int, t: float = 0.0) -> DataTargets:
    """Empirical quantile curve of ``samples`` read off at Chebyshev nodes.

    The i-th smallest of ``N`` samples sits at probability ``(i - 1/2) / N``,
    i.e. latent ``z = 2p - 1``; targets are linear interpolants of that curve.
    """
    values = samples.values if isinstance(samples, sde_oracle.SampleSet) else np.asarray(samples, float)
    if values.size == 0:
        raise ConfigurationError("no samples given")
    if n_points < 1 or values.size < n_points:
        raise ConfigurationError("need at least n_points samples")
    x = np.sort(values)
    zs = 2.0 * (np.arange(1, x.size + 1) - 0.5) / x.size - 1.0
    nodes = chebyshev_nodes(n_points)
    return DataTargets(tuple(nodes), tuple(np.interp(nodes, zs, x)), t)


# --------------------------------------------------------------------------
# losses on a spec (or any model with closed-form derivatives)


class AnalyticQuantileModel:
    """The closed-form OU quantile presented through the model interface."""

    def __init__(self, params: sde_oracle.SdeParams):
        self.params = params

    def evaluate_with_derivatives(self, z, t):
        q, qz, qzz, qt = sde_oracle.analytic_qf_derivatives(self.params, z, t)
        return ModelOutput(float(q), float(qz), float(qzz), float(qt))


def _point(model, theta, z, t):
    if isinstance(model, GeneratorSpec):
        return evaluate_with_derivatives(model, theta, z, t)
    return model.evaluate_with_derivatives(z, t)


def residual_terms(f, fz, fzz, ft, params: sde_oracle.SdeParams, eps_slope: float):
    """OU residual and its partial derivatives in ``(f, f_z, f_zz, f_t)``."""
    f, fz, fzz, ft = (np.asarray(a, dtype=float) for a in (f, fz, fzz, ft))
    half_s2 = 0.5 * params.sigma ** 2
    d = np.maximum(np.abs(fz), eps_slope)
    r = ft - (params.nu * (params.mu - f) + half_s2 * fzz / d ** 2)
    dr_dfz = np.where(np.abs(fz) > eps_slope, 2.0 * half_s2 * fzz * np.sign(fz) / d ** 3, 0.0)
    return r, {"value": np.full_like(r, params.nu), "dz": dr_dfz,
               "dzz": -half_s2 / d ** 2, "dt": np.ones_like(r)}


def ou_residual(model, theta, z, t, params, eps_slope: float = 1e-3) -> float:
    o = _point(model, theta, z, t)
    r, _ = residual_terms(o.value, o.dz, o.dzz, o.dt, params, eps_slope)
    return float(r)


def data_loss(spec, theta, targets: DataTargets) -> float:
    if isinstance(spec, GeneratorSpec):
        t = targets.t if spec.t_map is not None else None
        g = ModelBatch(spec, np.array(targets.z), t).forward(theta)["value"]
    else:
        g = np.array([spec.evaluate_with_derivatives(z, targets.t).value for z in targets.z])
    return math.fsum((g - np.array(targets.q)) ** 2) / len(targets.z)


def sde_loss(spec, theta, grid: TrainingGrid, params, cfg: LossConfig) -> float:
    if cfg.sde_weight == 0:
        return 0.0
    z, t = grid.mesh()
    if isinstance(spec, GeneratorSpec):
        out = ModelBatch(spec, z, t, want=("dz", "dzz", "dt")).forward(theta)
        r, _ = residual_terms(out["value"], out["dz"], out["dzz"], out["dt"], params, cfg.eps_slope)
    else:
        r = np.array([ou_residual(spec, theta, a, b, params, cfg.eps_slope) for a, b in zip(z, t)])
    return cfg.sde_weight * math.fsum(r ** 2) / r.size


# --------------------------------------------------------------------------
# training


@dataclass
class LossRecord:
    epoch: int
    total: float
    data: float
    sde: float


@dataclass
class TrainResult:
    theta: np.ndarray          # parameters at the lowest recorded total loss
    alpha: np.ndarray
    history: list
    final_theta: np.ndarray
    final_alpha: np.ndarray
    best_epoch: int

    @property
    def best_loss(self):
        return self.history[self.best_epoch - 1].total


class LossAssembly:
    """Precomputed batches for one (spec, grid, targets) problem."""

    def __init__(self, spec: GeneratorSpec, grid: TrainingGrid | None, targets: DataTargets | None,
                 params: sde_oracle.SdeParams | None, cfg: LossConfig):
        self.spec, self.params, self.cfg = spec, params, cfg
        self.data = self.sde = self.pin = None
        if cfg.data_weight > 0:
            if targets is None:
                raise ConfigurationError("data_weight > 0 needs data targets")
            t = targets.t if spec.t_map is not None else None
            self.data = ModelBatch(spec, np.array(targets.z), t)
            self.q = np.array(targets.q)
        if cfg.sde_weight > 0:
            if grid is None or params is None or spec.t_map is None:
                raise ConfigurationError("sde_weight > 0 needs a grid, SDE parameters and a time feature map")
            z, t = grid.mesh()
            self.grid_z, self.grid_t = z, t
            self.sde = ModelBatch(spec, z, t, want=("dz", "dzz", "dt"))
            b = spec.boundary
            if b is not None and b.kind == "PINNED":
                zp = np.array(b.pin_points)
                self.pin = ModelBatch(spec, zp, np.full(zp.shape, b.t_boundary))
                self.pin_target = np.asarray(b.u0.derivatives(zp, want=())[0], float)

    def __call__(self, theta, alpha=None, epoch=None, need_grad=True):
        """``(total, data, sde, grad_theta, grad_alpha)``."""
        cfg = self.cfg
        g_theta = np.zeros(theta.size)
        g_alpha = np.zeros(len(self.spec.costs)) if self.spec.train_alpha else None
        l_data = l_sde = 0.0

        def accumulate(batch, sens):
            gt, ga = batch.backward(theta, sens, alpha)
            g_theta[:] += gt
            if g_alpha is not None:
                g_alpha[:] += ga

        if self.data is not None:
            g = self.data.forward(theta, alpha)["value"]
            err = g - self.q
            if not np.all(np.isfinite(err)):
                raise NumericalError("non-finite data loss", epoch, f"data point {int(np.argmax(~np.isfinite(err)))}")
            l_data = math.fsum(err ** 2) / err.size
            if need_grad:
                accumulate(self.data, {"value": cfg.data_weight * 2.0 * err / err.size})
        if self.sde is not None:
            out = self.sde.forward(theta, alpha)
            r, partial = residual_terms(out["value"], out["dz"], out["dzz"], out["dt"], self.params, cfg.eps_slope)
            bad = ~np.isfinite(r)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise NumericalError("non-finite SDE residual", epoch,
                                     f"grid point z={self.grid_z[i]!r}, t={self.grid_t[i]!r}")
            l_sde = math.fsum(r ** 2) / r.size
            if need_grad:
                scale = cfg.sde_weight * 2.0 * r / r.size
                accumulate(self.sde, {k: scale * v for k, v in partial.items()})
            if self.pin is not None:
                w = self.spec.boundary.pin_weight
                dp = self.pin.forward(theta, alpha)["value"] - self.pin_target
                l_sde += w * math.fsum(dp ** 2)
                if need_grad:
                    accumulate(self.pin, {"value": cfg.sde_weight * w * 2.0 * dp})
        total = cfg.data_weight * l_data + cfg.sde_weight * l_sde
        if not math.isfinite(total):
            raise NumericalError("non-finite total loss", epoch, "total")
        return total, l_data, l_sde, g_theta, g_alpha


def train(spec: GeneratorSpec, grid, targets, params, cfg: LossConfig,
          optimizer: AdamSettings | None = None, epochs: int = 1000, seed: int = 0,
          theta0=None, callback=None, init_scale: float = 1.0) -> TrainResult:
    """Adam on the total loss; one history record per epoch.

    ``theta0`` defaults to uniform(-s pi, s pi) draws from ``seed`` with
    ``s = init_scale``.  The returned
    ``theta`` is the iterate with the lowest recorded loss; ``final_theta``
    is the last iterate.  ``callback(epoch, record, theta, alpha)`` runs after
    every epoch.
    """
    if epochs < 1:
        raise ConfigurationError("epochs must be >= 1")
    optimizer = optimizer or AdamSettings()
    theta = initial_theta(spec, seed, scale=init_scale) if theta0 is None else np.array(theta0, dtype=float)
    alpha = spec.alpha.copy()
    assembly = LossAssembly(spec, grid, targets, params, cfg)
    n_theta = theta.size
    x0 = np.concatenate([theta, alpha]) if spec.train_alpha else theta
    state = OptimizerState(x0, optimizer)
    history = []
    best = (math.inf, theta.copy(), alpha.copy(), 0)
    for epoch in range(1, epochs + 1):
        theta = state.theta[:n_theta]
        if spec.train_alpha:
            alpha = state.theta[n_theta:]
        total, l_data, l_sde, g_theta, g_alpha = assembly(theta, alpha, epoch)
        rec = LossRecord(epoch, total, l_data, l_sde)
        history.append(rec)
        if total < best[0]:
            best = (total, theta.copy(), alpha.copy(), epoch)
        state.step(np.concatenate([g_theta, g_alpha]) if spec.train_alpha else g_theta)
        if callback is not None:
            callback(epoch, rec, theta, alpha)
    final_theta = state.theta[:n_theta].copy()
    final_alpha = state.theta[n_theta:].copy() if spec.train_alpha else alpha.copy()
    return TrainResult(best[1], best[2], history, final_theta, final_alpha, best[3])


def loss_history_rows(history):
    return [(r.epoch, r.total, r.data, r.sde) for r in history]
