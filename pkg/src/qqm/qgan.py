"""Continuous quantum GAN and quantile-reordering analysis.

Loss conventions (all clamp D into [1e-12, 1 - 1e-12]):

* ``real_term = -mean log D(x)`` and ``fake_term = -mean log(1 - D(G(z)))``;
* reported discriminator loss ``L_D = (real_term + fake_term) / 2``;
* reported generator loss ``L_G = fake_term`` (the minimax form);
* non-saturating generator objective ``L_G_ns = -mean log D(G(z))``, used for
  the generator update by default.

At the Nash point ``D = 1/2`` every one of these equals ``ln 2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod, sde_oracle
from .circuits import AnsatzSpec, FeatureMapSpec
from .errors import ConfigurationError, NumericalError
from .optim import AdamSettings, OptimizerState
from .quantile_model import GeneratorSpec, ModelBatch, initial_theta
from .statevector import CostOperator

CLAMP = 1e-12
LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# losses


@dataclass
class GanLosses:
    L_D: float
    L_G: float
    L_G_ns: float
    real_term: float
    fake_term: float
    clamped: int = 0

    @property
    def gap(self):
        return abs(self.L_D - self.L_G)


def gan_losses(d_real, d_fake) -> GanLosses:
    """Losses from discriminator outputs on real samples and on generated samples."""
    d_real = np.asarray(d_real, dtype=float)
    d_fake = np.asarray(d_fake, dtype=float)
    if d_real.size == 0 or d_fake.size == 0:
        raise ConfigurationError("empty batch")
    clamped = int(np.sum((d_real <= CLAMP) | (d_real >= 1 - CLAMP))
                  + np.sum((d_fake <= CLAMP) | (d_fake >= 1 - CLAMP)))
    dr = np.clip(d_real, CLAMP, 1 - CLAMP)
    df = np.clip(d_fake, CLAMP, 1 - CLAMP)
    real_term = -float(np.mean(np.log(dr)))
    fake_term = -float(np.mean(np.log1p(-df)))
    ns = -float(np.mean(np.log(df)))
    return GanLosses(0.5 * (real_term + fake_term), fake_term, ns, real_term, fake_term, clamped)


# --------------------------------------------------------------------------
# models


def default_generator_spec(n_qubits=6, depth=6) -> GeneratorSpec:
    return GeneratorSpec(
        n_qubits, FeatureMapSpec("CHEBYSHEV_TOWER", "Y", "z"), AnsatzSpec(depth, n_qubits),
        costs=(CostOperator.single_z(0),),
    )


def default_discriminator_spec(n_qubits=6, depth=6) -> GeneratorSpec:
    return GeneratorSpec(
        n_qubits, FeatureMapSpec("CHEBYSHEV_TOWER", "Y", "x"), AnsatzSpec(depth, n_qubits),
        costs=(CostOperator.single_z(0),),
    )


@dataclass(frozen=True)
class InputScaling:
    """Affine map of sample values from ``[lo, hi]`` onto ``[-edge, edge]``."""

    lo: float
    hi: float
    edge: float = 0.99

    @property
    def slope(self):
        return 2.0 * self.edge / (self.hi - self.lo)

    def __call__(self, x):
        return self.slope * (np.asarray(x, float) - self.lo) - self.edge


@dataclass
class QganConfig:
    generator_spec: GeneratorSpec = field(default_factory=default_generator_spec)
    discriminator_spec: GeneratorSpec = field(default_factory=default_discriminator_spec)
    epochs: int = 2000
    epsilon: float = 0.1
    batch_size: int = 64
    ks_samples: int = 2000
    lr_generator: float = 0.01
    lr_discriminator: float = 0.01
    seed: int = 0
    non_saturating: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.ks_samples < 1:
            raise ConfigurationError("epochs, batch_size and ks_samples must be positive")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be non-negative")
        for s in (self.generator_spec, self.discriminator_spec):
            if s.t_map is not None or s.boundary is not None:
                raise ConfigurationError("qGAN circuits are fixed-time models")


@dataclass
class EpochRecord:
    epoch: int
    L_D: float
    L_G: float
    gap: float
    L_G_ns: float
    ks: float | None = None


@dataclass
class QganResult:
    theta_g: np.ndarray
    theta_d: np.ndarray
    history: list
    best_epoch: int | None
    best_ks: float | None
    scaling: InputScaling
    final_theta_g: np.ndarray = None
    final_theta_d: np.ndarray = None

    @property
    def ks_trace(self):
        return [(r.epoch, r.ks) for r in self.history if r.ks is not None]


class _Discriminator:
    def __init__(self, spec, scaling):
        self.spec, self.scaling = spec, scaling

    def batch(self, x, want=()):
        return ModelBatch(self.spec, self.scaling(x), want=want)


def _generator_values(spec, theta, z):
    return ModelBatch(spec, z).forward(theta)["value"]


def train_qgan(cfg: QganConfig, data, callback=None) -> QganResult:
    """Alternating Adam updates; keeps the generator snapshot with minimal KS.

    At each epoch one discriminator step and then one generator step are
    taken on fresh batches.  When ``|L_D - L_G| < epsilon`` the two-sample KS
    distance between ``ks_samples`` generated values and ``data`` is computed;
    it only selects the snapshot and never enters a gradient.
    ``callback(epoch, record, theta_g, theta_d)`` runs after every epoch.
    """
    data = np.asarray(data.values if isinstance(data, sde_oracle.SampleSet) else data, dtype=float)
    if data.size == 0:
        raise ConfigurationError("training data is empty")
    gspec, dspec = cfg.generator_spec, cfg.discriminator_spec
    bound = gspec.output_bound()
    scaling = InputScaling(min(-bound, float(data.min())), max(bound, float(data.max())))
    disc = _Discriminator(dspec, scaling)
    opt_g = OptimizerState(initial_theta(gspec, cfg.seed), AdamSettings(lr=cfg.lr_generator))
    opt_d = OptimizerState(initial_theta(dspec, cfg.seed + 1), AdamSettings(lr=cfg.lr_discriminator))
    batch_gen = rngmod.stream(cfg.seed, rngmod.GAN_BATCH)
    history = []
    best = (math.inf, None, None)
    n = cfg.batch_size
    for epoch in range(1, cfg.epochs + 1):
        theta_g, theta_d = opt_g.theta.copy(), opt_d.theta.copy()
        x_real = data[batch_gen.integers(0, data.size, n)]
        z = rngmod.uniform_latent(batch_gen, n)
        x_fake = _generator_values(gspec, theta_g, z)
        both = disc.batch(np.concatenate([x_real, x_fake]))
        d_out = 0.5 + 0.5 * both.forward(theta_d)["value"]
        d_real, d_fake = d_out[:n], d_out[n:]
        losses = gan_losses(d_real, d_fake)
        if not all(math.isfinite(v) for v in (losses.L_D, losses.L_G, losses.L_G_ns)):
            raise NumericalError("non-finite GAN loss", epoch, "losses")
        if losses.clamped > n // 2:
            warnings.warn(f"epoch {epoch}: {losses.clamped} discriminator outputs clamped", RuntimeWarning)
        rec = EpochRecord(epoch, losses.L_D, losses.L_G, losses.gap, losses.L_G_ns)
        if cfg.epsilon > 0 and losses.gap < cfg.epsilon:
            ks_gen = rngmod.stream(cfg.seed, rngmod.GAN_KS, epoch)
            zk = rngmod.uniform_latent(ks_gen, cfg.ks_samples)
            rec.ks = sde_oracle.ks_statistic(_generator_values(gspec, theta_g, zk), data)
            if rec.ks < best[0]:
                best = (rec.ks, theta_g.copy(), epoch)
        history.append(rec)

        # discriminator: descend L_D; dL/dD = -1/(2nD) real, +1/(2n(1-D)) fake; dD/dvalue = 1/2
        dr = np.clip(d_real, CLAMP, 1 - CLAMP)
        df = np.clip(d_fake, CLAMP, 1 - CLAMP)
        sens = np.concatenate([-1.0 / (2 * n * dr), 1.0 / (2 * n * (1 - df))]) * 0.5
        g_d, _ = both.backward(theta_d, {"value": sens})
        opt_d.step(g_d)

        # generator against the updated discriminator
        fake = disc.batch(x_fake, want=("dz",))
        fo = fake.forward(opt_d.theta)
        d_new = np.clip(0.5 + 0.5 * fo["value"], CLAMP, 1 - CLAMP)
        dd_dx = 0.5 * fo["dz"] * scaling.slope
        if cfg.non_saturating:
            dl_dx = -dd_dx / (n * d_new)
        else:
            dl_dx = dd_dx / (n * (1 - d_new))
        g_g, _ = ModelBatch(gspec, z).backward(theta_g, {"value": dl_dx})
        if not np.all(np.isfinite(g_g)) or not np.all(np.isfinite(g_d)):
            raise NumericalError("non-finite GAN gradient", epoch, "gradient")
        opt_g.step(g_g)
        if callback is not None:
            callback(epoch, rec, opt_g.theta, opt_d.theta)

    if best[1] is None:
        warnings.warn("loss-gap condition never met; returning final generator", RuntimeWarning)
        return QganResult(opt_g.theta.copy(), opt_d.theta.copy(), history, None, None, scaling,
                          opt_g.theta.copy(), opt_d.theta.copy())
    return QganResult(best[1], opt_d.theta.copy(), history, best[2], best[0], scaling,
                      opt_g.theta.copy(), opt_d.theta.copy())


def normal_training_data(mu, sigma, n, seed):
    """``n`` draws from normal(mu, sigma) on their own seeded stream."""
    return mu + sigma * rngmod.box_muller(rngmod.stream(seed, rngmod.GAN_DATA), n)


# --------------------------------------------------------------------------
# reordering


@dataclass
class ReorderMap:
    """Sorting permutation of generator values on a grid.

    ``h[k]`` is the grid point whose value lands at sorted position ``k``
    (ordered -> unordered) and ``inv[i]`` is the ordered latent assigned to
    grid point ``i`` (unordered -> ordered).
    """

    grid: np.ndarray
    order: np.ndarray
    rank: np.ndarray

    @property
    def h(self):
        return self.grid[self.order]

    @property
    def inv(self):
        return self.grid[self.rank]


def reorder_generator(values, grid):
    """``(ReorderMap, sorted values)``; the ordered latent grid is ``grid`` itself."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if values.shape != grid.shape or grid.size < 2:
        raise ConfigurationError("need matching value and grid arrays with at least 2 points")
    order = np.argsort(values, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return ReorderMap(grid, order, rank), values[order]


def normal_qf(z, mu, sigma):
    """Normal quantile on the latent convention ``p = (z + 1) / 2``."""
    return mu + sigma * math.sqrt(2.0) * np.asarray(sde_oracle.inverf(z))


def normal_qf_derivatives(z, mu, sigma):
    y, d1, d2 = sde_oracle.inverf_derivatives(z)
    s = sigma * math.sqrt(2.0)
    return mu + s * y, s * d1, s * d2


def quantile_ode_residual(q, dq, d2q, mu, sigma):
    """``Q'' - (Q - mu) / sigma**2 * Q'**2``; zero for a normal quantile."""
    q, dq, d2q = (np.asarray(a, dtype=float) for a in (q, dq, d2q))
    return d2q - (q - mu) / sigma ** 2 * dq ** 2


@dataclass
class ReorderedOdeAnalysis:
    grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    flagged: np.ndarray

    @property
    def difference(self):
        return self.lhs - self.rhs

    def max_unflagged_difference(self):
        d = np.abs(self.difference[~self.flagged])
        return float(d.max()) if d.size else 0.0


def reordered_ode_analysis(g_values, rmap: ReorderMap, mu, sigma, dg=None, d2g=None,
                           flag_factor: float = 0.25) -> ReorderedOdeAnalysis:
    """Both sides of the ODE obeyed by an unsorted generator ``G(z) = Q(inv(z))``.

    ``LHS = G'' - (G - mu)/sigma**2 G'**2`` and ``RHS = (inv''/inv') G'``, with
    ``inv`` differentiated by finite differences of the tabulated map.  ``dg``
    and ``d2g`` give exact generator derivatives when available; otherwise
    finite differences of ``g_values`` are used.  Grid points where the
    one-sided slopes of ``inv`` differ by more than ``flag_factor`` times the
    median absolute slope are flagged as non-differentiable.
    """
    grid = rmap.grid
    if grid.size < 11:
        raise ConfigurationError("grid too coarse for the reordered ODE analysis (< 11 points)")
    g = np.asarray(g_values, dtype=float)
    inv = rmap.inv
    dz = np.diff(grid)
    slopes = np.diff(inv) / dz
    flagged = np.zeros(grid.size, dtype=bool)
    jump = np.abs(slopes[1:] - slopes[:-1])
    thresh = flag_factor * np.median(np.abs(slopes))
    flagged[1:-1] = jump > thresh
    inv1 = np.gradient(inv, grid, edge_order=2)
    if dg is None:
        dg = np.gradient(g, grid, edge_order=2)
    if d2g is None:
        d2g = np.gradient(np.gradient(g, grid, edge_order=2), grid, edge_order=2)
    d2_inv = _second_difference(inv, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = np.where(inv1 != 0, d2_inv / inv1, np.inf) * np.asarray(dg)
    lhs = quantile_ode_residual(g, dg, d2g, mu, sigma)
    return ReorderedOdeAnalysis(grid, lhs, rhs, flagged)


def _second_difference(y, x):
    """Three-point second derivative on a (possibly non-uniform) grid; edge rows copy neighbours' stencils."""
    n = y.size
    out = np.empty(n)
    for i in range(n):
        j = min(max(i, 1), n - 2)
        h1, h2 = x[j] - x[j - 1], x[j + 1] - x[j]
        out[i] = 2.0 * (y[j + 1] * h1 - y[j] * (h1 + h2) + y[j - 1] * h2) / (h1 * h2 * (h1 + h2))
    return out


def single_dip_generator(z, mu=0.0, sigma=0.2):
    """``G_A(z) = Q(2|z| - 1)``: the normal quantile folded around ``z = 0``, with derivatives."""
    z = np.asarray(z, dtype=float)
    u = 2.0 * np.abs(z) - 1.0
    q, q1, q2 = normal_qf_derivatives(u, mu, sigma)
    return q, 2.0 * np.sign(z) * q1, 4.0 * q2


def symmetric_midpoint_grid(n_points: int) -> np.ndarray:
    """``n_points`` (even) cell midpoints of [-1, 1]; mirror symmetric, avoids z = 0."""
    if n_points % 2:
        raise ConfigurationError("symmetric midpoint grid needs an even number of points")
    m = n_points // 2
    pos = (np.arange(m) + 0.5) * (1.0 / m)
    return np.concatenate([-pos[::-1], pos])
