"""Classical ground truth for the Ornstein-Uhlenbeck process.

The latent variable ``z`` in (-1, 1) maps to probability ``p = (z + 1) / 2``,
so the quantile function is ``Q(z, t) = m(t) + s(t) * inverf(z)`` with
``m(t) = mu + (x0 - mu) exp(-nu tau)``, ``s(t)**2 = sigma**2 / nu * (1 - exp(-2 nu tau))``
and ``tau = t - t0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigurationError, DomainError

SQRT_PI = math.sqrt(math.pi)
PROVENANCES = ("EULER_MARUYAMA", "QQM", "QGAN", "ANALYTIC")


@dataclass(frozen=True)
class SdeParams:
    nu: float
    mu: float
    sigma: float
    x0: float
    t0: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError("nu must be positive")
        if not self.sigma >= 0:
            raise ConfigurationError("sigma must be non-negative")
        for name in ("nu", "mu", "sigma", "x0", "t0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")


@dataclass
class SampleSet:
    values: np.ndarray
    t: float
    provenance: str
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.provenance not in PROVENANCES:
            raise ConfigurationError(f"unknown provenance {self.provenance!r}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("sample set contains non-finite values")

    def __len__(self):
        return self.values.size


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray  # normalized by the total number of samples
    n_samples: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


# --------------------------------------------------------------------------
# error function


def _erf_series(x):
    # erf(x) = 2x/sqrt(pi) exp(-x^2) sum (2x^2)^n / (2n+1)!!, all terms positive
    x2 = x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for n in range(1, 90):
        term = term * (2.0 * x2) / (2 * n + 1)
        total = total + term
    return 2.0 * x / SQRT_PI * np.exp(-x2) * total


def _erfc_cf(x):
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0
    tiny = 1e-300
    f = x.copy()
    c = x.copy()
    d = np.zeros_like(x)
    for k in range(1, 80):
        a = 0.5 * k
        d = x + a * d
        d = np.where(d == 0, tiny, d)
        c = x + a / c
        c = np.where(c == 0, tiny, c)
        d = 1.0 / d
        f = f * c * d
    return np.exp(-x * x) / SQRT_PI / f


_SPLIT = 3.0


def erf(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < _SPLIT
    out = np.empty_like(ax)
    out[small] = _erf_series(ax[small])
    out[~small] = 1.0 - _erfc_cf(ax[~small])
    out = np.copysign(out, x)
    return out if out.ndim else float(out)


def erfc(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < _SPLIT
    pos = np.empty_like(ax)
    pos[small] = 1.0 - _erf_series(ax[small])
    pos[~small] = _erfc_cf(ax[~small])
    out = np.where(x >= 0, pos, 2.0 - pos)
    return out if out.ndim else float(out)


def _inverf_seed(z):
    # Giles' single-precision approximation
    w = -np.log((1.0 - z) * (1.0 + z))
    w1 = w - 2.5
    p = np.full_like(z, 2.81022636e-08)
    for c in (3.43273939e-07, -3.5233877e-06, -4.39150654e-06, 0.00021858087,
              -0.00125372503, -0.00417768164, 0.246640727, 1.50140941):
        p = c + p * w1
    w2 = np.sqrt(np.maximum(w, 5.0)) - 3.0
    q = np.full_like(z, -0.000200214257)
    for c in (0.000100950558, 0.00134934322, -0.00367342844, 0.00573950773,
              -0.0076224613, 0.00943887047, 1.00167406, 2.83297682):
        q = c + q * w2
    return np.where(w < 5.0, p, q) * z


def inverf(z):
    """Inverse error function on (-1, 1): rational seed refined by Newton steps."""
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(np.abs(z) >= 1.0):
        raise DomainError("inverf needs |z| < 1")
    az = np.abs(z)
    y = _inverf_seed(az)
    for _ in range(4):
        # residual via erfc for |y| >= 1 keeps relative accuracy near the tails
        r = np.where(y < 1.0, erf(y) - az, (1.0 - az) - erfc(y))
        y = y - r / (2.0 / SQRT_PI * np.exp(-y * y))
    y = np.copysign(y, z)
    return y if y.ndim else float(y)


def inverf_derivatives(z):
    """``(y, dy/dz, d2y/dz2)`` for ``y = inverf(z)``."""
    y = np.asarray(inverf(z))
    e = np.exp(y * y)
    d1 = 0.5 * SQRT_PI * e
    d2 = 0.5 * math.pi * y * e * e
    return y, d1, d2


# --------------------------------------------------------------------------
# analytic transition law


def _tau(params, t):
    tau = np.asarray(t, dtype=float) - params.t0
    if np.any(tau <= 0):
        raise DomainError("analytic law needs t > t0")
    return tau


def analytic_mean(params: SdeParams, t):
    tau = _tau(params, t)
    return params.mu + (params.x0 - params.mu) * np.exp(-params.nu * tau)


def analytic_variance(params: SdeParams, t):
    tau = _tau(params, t)
    return params.sigma ** 2 / (2 * params.nu) * (1.0 - np.exp(-2 * params.nu * tau))


def analytic_pdf(params: SdeParams, x, t):
    m = analytic_mean(params, t)
    v = analytic_variance(params, t)
    if np.any(v <= 0):
        raise DomainError("degenerate variance (sigma = 0)")
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - m) ** 2) / (2 * v)) / np.sqrt(2 * math.pi * v)


def analytic_cdf(params: SdeParams, x, t):
    m = analytic_mean(params, t)
    v = analytic_variance(params, t)
    return 0.5 * (1.0 + erf((np.asarray(x, dtype=float) - m) / np.sqrt(2 * v)))


def _spread(params, t):
    tau = _tau(params, t)
    return np.sqrt(params.sigma ** 2 / params.nu * (1.0 - np.exp(-2 * params.nu * tau)))


def analytic_qf(params: SdeParams, z, t):
    """Quantile at latent ``z`` in (-1, 1) and time ``t > t0``."""
    return analytic_mean(params, t) + _spread(params, t) * inverf(z)


def analytic_qf_derivatives(params: SdeParams, z, t):
    """Closed-form ``(Q, dQ/dz, d2Q/dz2, dQ/dt)``."""
    tau = _tau(params, t)
    nu, mu, sig = params.nu, params.mu, params.sigma
    y, d1, d2 = inverf_derivatives(z)
    m = mu + (params.x0 - mu) * np.exp(-nu * tau)
    s = _spread(params, t)
    dm = -nu * (params.x0 - mu) * np.exp(-nu * tau)
    ds = sig ** 2 * np.exp(-2 * nu * tau) / s
    return m + s * y, s * d1, s * d2, dm + ds * y


# --------------------------------------------------------------------------
# Euler-Maruyama


def em_step(x, params: SdeParams, dt, xi):
    return x + params.nu * (params.mu - x) * dt + params.sigma * math.sqrt(dt) * xi


def euler_maruyama(params: SdeParams, dt: float, t_end: float, n_paths: int, seed: int,
                   slices=None, chunk: int = 10000, antithetic: bool = False):
    """Integrate ``n_paths`` paths from ``x0`` at ``t0``; returns ``{t: SampleSet}``.

    Paths are split into fixed chunks, each with its own derived stream, so
    results depend only on ``(seed, chunk)`` and not on scheduling.  With
    ``antithetic`` the second half of every chunk reuses the negated noise.
    """
    if dt <= 0 or n_paths < 1:
        raise ConfigurationError("need dt > 0 and n_paths >= 1")
    slices = [t_end] if slices is None else sorted(set(float(s) for s in slices))
    steps = {s: int(round((s - params.t0) / dt)) for s in slices}
    if any(k < 0 for k in steps.values()):
        raise ConfigurationError("slice times must not precede t0")
    n_steps = max(steps.values())
    out = {s: np.empty(n_paths) for s in slices}
    for c, start in enumerate(range(0, n_paths, chunk)):
        size = min(chunk, n_paths - start)
        gen = rngmod.stream(seed, rngmod.EULER_MARUYAMA, c)
        x = np.full(size, float(params.x0))
        half = (size + 1) // 2
        for s, k in steps.items():
            if k == 0:
                out[s][start:start + size] = x
        for k in range(1, n_steps + 1):
            if antithetic:
                xi = rngmod.box_muller(gen, half)
                xi = np.concatenate([xi, -xi])[:size]
            else:
                xi = rngmod.box_muller(gen, size)
            x = em_step(x, params, dt, xi)
            for s, ks in steps.items():
                if ks == k:
                    out[s][start:start + size] = x
    return {s: SampleSet(v, s, "EULER_MARUYAMA", seed) for s, v in out.items()}


# --------------------------------------------------------------------------
# histograms and distances


def default_histogram_range(params: SdeParams):
    spread = params.sigma / math.sqrt(2 * params.nu)
    return params.mu - 5 * spread, params.x0 + 1.0


def histogram(samples, value_range, n_bins: int = 40) -> Histogram:
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    lo, hi = map(float, value_range)
    if n_bins < 1:
        raise ConfigurationError("n_bins must be >= 1")
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise ConfigurationError(f"degenerate histogram range ({lo}, {hi})")
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    n = max(values.size, 1)
    return Histogram(edges, counts / n, values.size)


def bin_probabilities(params: SdeParams, edges, t):
    """Exact probability mass of each bin under the analytic law."""
    cdf = analytic_cdf(params, np.asarray(edges), t)
    return np.diff(cdf)


def _values(s):
    return s.values if isinstance(s, SampleSet) else np.asarray(s, dtype=float)


def ks_statistic(samples, reference) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``reference``.

    ``reference`` is either a CDF callable (one-sample) or another sample set
    (two-sample).
    """
    x = np.sort(_values(samples))
    if x.size == 0:
        raise ConfigurationError("empty sample set")
    n = x.size
    if callable(reference):
        f = np.asarray(reference(x), dtype=float)
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    y = np.sort(_values(reference))
    if y.size == 0:
        raise ConfigurationError("empty reference sample set")
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / n
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))
