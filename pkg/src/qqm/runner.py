"""Experiment pipelines behind ``qqm run`` and ``qqm compare``.

Every run writes into one directory: CSVs (normative), SVG plots, model JSON
files and finally ``manifest.json``, which lists every other file and is
written atomically so its presence marks a completed run.
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import qgan, qqm_train, quantile_model as qm, rng as rngmod, sde_oracle
from .circuits import AnsatzSpec, FeatureMapSpec, classical_init_fit
from .errors import ConfigurationError, DomainError, NumericalError
from .io import fmt, read_csv, write_csv
from .optim import AdamSettings
from .statevector import CostOperator
from .svgplot import Figure

MANIFEST = "manifest.json"
CURVE_POINTS = 201


def hist_name(t):
    return f"hist_t{fmt(float(t))}.csv"


# --------------------------------------------------------------------------
# output bookkeeping


def _sha1(path):
    h = hashlib.sha1()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


class RunDir:
    """Output directory plus the timings, metrics and histogram index of one run."""

    def __init__(self, path):
        os.makedirs(path, exist_ok=True)
        self.path = path
        self.timings = {}
        self.metrics = {}
        self.histograms = []

    def file(self, name):
        return os.path.join(self.path, name)

    def csv(self, name, header, rows, comments=()):
        write_csv(self.file(name), header, rows, comments)

    def svg(self, name, fig: Figure):
        fig.save(self.file(name))

    def model(self, name, spec, theta, provenance=None):
        qm.save_model(self.file(name), spec, theta, provenance)

    @contextlib.contextmanager
    def timed(self, stage):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - start

    def histogram(self, t, hist, analytic=None, label=""):
        name = hist_name(t)
        ref = analytic if analytic is not None else [None] * len(hist.counts)
        rows = [(a, b, p, r) for a, b, p, r in zip(hist.edges[:-1], hist.edges[1:], hist.counts, ref)]
        self.csv(name, ("bin_lo", "bin_hi", "probability", "analytic_probability"), rows,
                 comments=(f"t={fmt(float(t))}", f"n_samples={hist.n_samples}", f"source={label}"))
        self.histograms.append({"t": float(t), "file": name})
        fig = Figure(f"{label} histogram, t = {fmt(float(t))}", "x", "probability")
        fig.bar(hist.edges, hist.counts, label=label)
        if analytic is not None:
            fig.line(0.5 * (hist.edges[:-1] + hist.edges[1:]), analytic, label="analytic", color="#000000")
        self.svg(name.replace(".csv", ".svg"), fig)

    def manifest(self, cfg, config_path, extra=None):
        names = sorted(n for n in os.listdir(self.path) if n != MANIFEST and not n.endswith(".tmp"))
        doc = {
            "format": "qqm-manifest",
            "version": 1,
            "config_path": os.path.abspath(config_path),
            "config": cfg.model_dump(mode="json"),
            "config_hash": cfgmod.config_hash(cfg),
            "experiment": cfg.experiment,
            "files": [{"path": n, "bytes": os.path.getsize(self.file(n)), "sha1": _sha1(self.file(n))}
                      for n in names],
            "histograms": self.histograms,
            "timings": self.timings,
            "metrics": self.metrics,
        }
        if extra:
            doc.update(extra)
        _atomic_json(self.file(MANIFEST), doc)
        return doc


class Checkpointer:
    """Overwrites ``checkpoint.json`` every ``every`` epochs."""

    def __init__(self, run: RunDir, every: int):
        self.run, self.every = run, every

    def __call__(self, epoch, payload):
        if self.every and epoch % self.every == 0:
            _atomic_json(self.run.file("checkpoint.json"), dict(payload(), epoch=epoch))


# --------------------------------------------------------------------------
# config -> model objects


def _params(cfg):
    s = cfg.sde
    return sde_oracle.SdeParams(s.nu, s.mu, s.sigma, s.x0, s.t0)


def _fmap(section, variable):
    return FeatureMapSpec(section.kind, section.axis, variable)


def _costs(gen):
    if not gen.costs:
        return ()
    return tuple(CostOperator(tuple(c.terms), c.alpha) for c in gen.costs)


def _boundary(cfg, config_path, params):
    b = cfg.generator.boundary or cfgmod.BoundarySection(t_boundary=cfg.grid.t_min)
    if cfg.experiment == "PROPAGATE_DATA":
        spec0, theta0, _ = qm.load_model(cfgmod.resolve_path(config_path, cfg.initial_model))
        if spec0.t_map is not None:
            raise ConfigurationError("initial_model must be a fixed-time model")
        u0 = qm.CircuitProfile(spec0, theta0)
    else:
        u0 = qm.AnalyticProfile(params, b.t_boundary)
    return qm.BoundaryMode(b.kind, u0, tuple(b.pin_points), b.pin_weight, b.t_boundary)


def _spec(gen, boundary=None, costs=None, init_angles=None, with_time=False):
    t_map = _fmap(gen.t_map, "t") if with_time else None
    return qm.GeneratorSpec(
        gen.n_qubits, _fmap(gen.z_map, "z"), AnsatzSpec(gen.depth, gen.n_qubits), t_map=t_map,
        layout=gen.layout, costs=costs if costs is not None else _costs(gen), boundary=boundary,
        init_angles=init_angles, train_alpha=gen.train_alpha,
    )


def _grid(cfg):
    g = cfg.grid
    return qqm_train.TrainingGrid.uniform(g.n_z, g.n_t, g.t_max, g.t_min, g.z_edge)


def _loss_rows(history):
    return qqm_train.loss_history_rows(history)


def _loss_plot(run, history, name="loss.svg"):
    e = [r.epoch for r in history]
    fig = Figure("training loss", "epoch", "loss", log_y=True)
    fig.line(e, [r.total for r in history], label="total")
    if any(r.data for r in history):
        fig.line(e, [r.data for r in history], label="data", dashed=True)
    if any(r.sde for r in history):
        fig.line(e, [r.sde for r in history], label="sde", dashed=True)
    run.svg(name, fig)


def _histogram_range(cfg_range, params):
    return tuple(cfg_range) if cfg_range is not None else sde_oracle.default_histogram_range(params)


def _train_progress(epochs):
    step = max(1, epochs // 10)

    def report(epoch, total):
        if epoch % step == 0 or epoch == epochs:
            print(f"epoch {epoch}/{epochs} loss {total:.6g}", file=sys.stderr, flush=True)

    return report


# --------------------------------------------------------------------------
# experiments


def _exp_train_initial(cfg, config_path, run):
    params = _params(cfg)
    gen, d = cfg.generator, cfg.data
    if gen.t_map is not None:
        raise ConfigurationError("TRAIN_INITIAL_QF learns a fixed-time model; drop generator.t_map")
    with run.timed("data"):
        if d.source == "EULER_MARUYAMA":
            samples = sde_oracle.euler_maruyama(params, d.dt, d.t, d.n_samples, cfg.seed, slices=(d.t,))[d.t]
        else:
            z = rngmod.uniform_latent(rngmod.stream(cfg.seed, rngmod.SAMPLING, 1), d.n_samples)
            samples = sde_oracle.analytic_qf(params, z, d.t)
        targets = qqm_train.prepare_quantile_targets(samples, d.n_points, d.t)
    run.csv("targets.csv", ("z", "target"), zip(targets.z, targets.q))
    costs, init_angles = None, None
    if gen.classical_init:
        fm = _fmap(gen.z_map, "z")
        init_angles, weights, rms = classical_init_fit(np.column_stack([targets.z, targets.q]), fm, gen.n_qubits)
        costs = (CostOperator(tuple((q, "Z", float(w)) for q, w in enumerate(weights))),)
        init_angles = tuple(init_angles)
        run.metrics["classical_init_rms"] = rms
    spec = _spec(gen, costs=costs, init_angles=init_angles)
    if spec.layout == "SANDWICH":
        theta0 = qm.initial_theta(spec, cfg.seed, identity_blocks=True, scale=gen.theta_init_scale)
    else:
        theta0 = qm.initial_theta(spec, cfg.seed, scale=gen.theta_init_scale)
    lr = cfg.optimizer.lr or 0.005
    loss_cfg = qqm_train.LossConfig(data_weight=cfg.loss.data_weight or 1.0, sde_weight=0.0,
                                    eps_slope=cfg.loss.eps_slope)
    result = _fit(cfg, run, spec, None, targets, params, loss_cfg, lr, theta0)
    run.model("model.json", spec, result.theta, {"best_epoch": result.best_epoch, "seed": cfg.seed})
    z = np.linspace(-cfg.grid.z_edge, cfg.grid.z_edge, CURVE_POINTS)
    g = qm.ModelBatch(spec, z).forward(result.theta)["value"]
    q = sde_oracle.analytic_qf(params, z, d.t)
    run.csv("curve.csv", ("z", "G", "Q_analytic"), zip(z, g, q))
    fig = Figure(f"quantile function, t = {fmt(d.t)}", "z", "x")
    fig.line(z, g, label="G").line(z, q, label="analytic", dashed=True)
    fig.line(targets.z, targets.q, label="targets", dashed=True)
    run.svg("quantile.svg", fig)
    with run.timed("sampling"):
        s = qm.sample(spec, result.theta, None, cfg.sampling.n_samples, cfg.seed)
        hist = sde_oracle.histogram(s, _histogram_range(cfg.sampling.range, params), cfg.sampling.n_bins)
        run.histogram(d.t, hist, sde_oracle.bin_probabilities(params, hist.edges, d.t), "QQM")
    run.metrics.update(
        best_data_loss=result.history[result.best_epoch - 1].data,
        best_epoch=result.best_epoch,
        ks_analytic=sde_oracle.ks_statistic(s, lambda x: sde_oracle.analytic_cdf(params, x, d.t)),
        max_abs_error=float(np.max(np.abs(g - q))),
    )


def _fit(cfg, run, spec, grid, targets, params, loss_cfg, lr, theta0):
    o = cfg.optimizer
    settings = AdamSettings(lr=lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
    progress = _train_progress(cfg.epochs)
    state = {}

    def payload():
        return {"model": qm.model_to_dict(spec.with_alpha(state["alpha"]), state["theta"])}

    ckpt = Checkpointer(run, cfg.checkpoint_every)

    def callback(epoch, rec, theta, alpha):
        state["theta"], state["alpha"] = theta, alpha
        ckpt(epoch, payload)
        progress(epoch, rec.total)

    with run.timed("training"):
        result = qqm_train.train(spec, grid, targets, params, loss_cfg, settings, cfg.epochs, cfg.seed,
                                 theta0=theta0, callback=callback)
    run.csv("loss.csv", ("epoch", "total", "data", "sde"), _loss_rows(result.history))
    _loss_plot(run, result.history)
    return result


def _slice_plot(run, spec, theta, alpha, params, slices, z_edge):
    z = np.linspace(-z_edge, z_edge, CURVE_POINTS)
    fig = Figure("quantile surface slices", "z", "x")
    for t in slices:
        g = qm.ModelBatch(spec, z, np.full_like(z, t)).forward(theta, alpha)["value"]
        fig.line(z, g, label=f"G, t={fmt(t)}")
        if params is not None:
            fig.line(z, sde_oracle.analytic_qf(params, z, t), label=f"Q, t={fmt(t)}", dashed=True)
    run.svg("slices.svg", fig)


def _exp_propagate(cfg, config_path, run):
    params = _params(cfg)
    gen = cfg.generator
    boundary = _boundary(cfg, config_path, params)
    spec = _spec(gen, boundary=boundary, with_time=True)
    grid = _grid(cfg)
    theta0 = qm.initial_theta(spec, cfg.seed, scale=gen.theta_init_scale)
    loss_cfg = qqm_train.LossConfig(data_weight=0.0, sde_weight=cfg.loss.sde_weight or 1.0,
                                    eps_slope=cfg.loss.eps_slope)
    result = _fit(cfg, run, spec, grid, None, params, loss_cfg, cfg.optimizer.lr or 0.01, theta0)
    trained = spec.with_alpha(result.alpha)
    run.model("model.json", trained, result.theta, {"best_epoch": result.best_epoch, "seed": cfg.seed})
    z, t = grid.mesh()
    g = qm.ModelBatch(trained, z, t).forward(result.theta)["value"]
    q = sde_oracle.analytic_qf(params, z, t)
    run.csv("surface.csv", ("z", "t", "G", "Q_analytic"), zip(z, t, g, q))
    _slice_plot(run, trained, result.theta, None, params, cfg.sampling.slices, cfg.grid.z_edge)
    inner = np.abs(z) <= 0.95
    run.metrics.update(
        best_loss=result.best_loss,
        best_epoch=result.best_epoch,
        max_abs_error_interior=float(np.max(np.abs(g - q)[inner])),
    )
    _sample_slices(cfg, run, trained, result.theta, params)


def _sample_slices(cfg, run, spec, theta, params, write_samples=False):
    sm = cfg.sampling
    rng_range = _histogram_range(sm.range, params) if params is not None else sm.range
    if rng_range is None:
        raise ConfigurationError("sampling.range is needed without an 'sde' section")
    ks, diff = {}, {}
    with run.timed("sampling"):
        for t in sm.slices:
            s = qm.sample(spec, theta, t if spec.t_map is not None else None, sm.n_samples, cfg.seed)
            if write_samples:
                run.csv(f"samples_t{fmt(float(t))}.csv", ("index", "value"), enumerate(s.values))
            hist = sde_oracle.histogram(s, rng_range, sm.n_bins)
            ref = sde_oracle.bin_probabilities(params, hist.edges, t) if params is not None else None
            run.histogram(t, hist, ref, "QQM")
            if params is not None:
                ks[fmt(float(t))] = sde_oracle.ks_statistic(s, lambda x: sde_oracle.analytic_cdf(params, x, t))
                diff[fmt(float(t))] = float(np.max(np.abs(hist.counts - ref)))
    if params is not None:
        run.metrics["ks_analytic"] = ks
        run.metrics["max_bin_difference_analytic"] = diff


def _exp_sample(cfg, config_path, run):
    spec, theta, _ = qm.load_model(cfgmod.resolve_path(config_path, cfg.model))
    _sample_slices(cfg, run, spec, theta, _params(cfg), write_samples=True)


def _exp_euler(cfg, config_path, run):
    params = _params(cfg)
    e = cfg.euler_maruyama
    with run.timed("integration"):
        sets = sde_oracle.euler_maruyama(params, e.dt, max(e.slices), e.n_paths, cfg.seed, slices=e.slices)
    rows = []
    rng_range = _histogram_range(e.range, params)
    for t in sorted(sets):
        x = sets[t].values
        n = x.size
        mean, var = float(np.mean(x)), float(np.var(x, ddof=1))
        m4 = float(np.mean((x - mean) ** 4))
        se_var = math.sqrt(max(m4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)
        rows.append((t, n, mean, var, sde_oracle.analytic_mean(params, t), sde_oracle.analytic_variance(params, t),
                     math.sqrt(var / n), se_var))
        hist = sde_oracle.histogram(x, rng_range, e.n_bins)
        run.histogram(t, hist, sde_oracle.bin_probabilities(params, hist.edges, t), "Euler-Maruyama")
    run.csv("moments.csv", ("t", "n", "mean", "variance", "analytic_mean", "analytic_variance",
                            "se_mean", "se_variance"), rows)
    run.metrics["max_mean_z"] = max(abs(r[2] - r[4]) / r[6] for r in rows)
    run.metrics["max_variance_z"] = max(abs(r[3] - r[5]) / r[7] for r in rows)


def _exp_qgan(cfg, config_path, run):
    g = cfg.qgan
    data = qgan.normal_training_data(g.target_mu, g.target_sigma, g.n_data, cfg.seed)
    qcfg = qgan.QganConfig(
        qgan.default_generator_spec(g.n_qubits, g.depth), qgan.default_discriminator_spec(g.n_qubits, g.depth),
        g.epochs, g.epsilon, g.batch_size, g.ks_samples, g.lr_generator, g.lr_discriminator, cfg.seed,
        g.non_saturating,
    )
    ckpt = Checkpointer(run, cfg.checkpoint_every)
    progress = _train_progress(g.epochs)

    def callback(epoch, rec, theta_g, theta_d):
        ckpt(epoch, lambda: {"generator": qm.model_to_dict(qcfg.generator_spec, theta_g),
                             "discriminator": qm.model_to_dict(qcfg.discriminator_spec, theta_d)})
        progress(epoch, rec.L_D)

    with run.timed("training"):
        res = qgan.train_qgan(qcfg, data, callback=callback)
    run.csv("qgan_loss.csv", ("epoch", "L_D", "L_G", "gap", "KS", "L_G_ns"),
            [(r.epoch, r.L_D, r.L_G, r.gap, r.ks, r.L_G_ns) for r in res.history])
    e = [r.epoch for r in res.history]
    fig = Figure("qGAN losses", "epoch", "loss")
    fig.line(e, [r.L_D for r in res.history], label="L_D").line(e, [r.L_G for r in res.history], label="L_G")
    fig.line(e, [qgan.LN2] * len(e), label="ln 2", dashed=True, color="#000000")
    run.svg("qgan_loss.svg", fig)
    scaling = {"lo": res.scaling.lo, "hi": res.scaling.hi, "edge": res.scaling.edge}
    run.model("generator.json", qcfg.generator_spec, res.theta_g, {"best_epoch": res.best_epoch})
    run.model("discriminator.json", qcfg.discriminator_spec, res.theta_d, {"input_scaling": scaling})
    z = np.linspace(-1.0, 1.0, CURVE_POINTS)
    gb = qm.ModelBatch(qcfg.generator_spec, z).forward(res.theta_g)["value"]
    gf = qm.ModelBatch(qcfg.generator_spec, z).forward(res.final_theta_g)["value"]
    run.csv("generator.csv", ("z", "G_best", "G_final"), zip(z, gb, gf))
    _reorder_outputs(run, z[1:-1], gb[1:-1], g.target_mu, g.target_sigma, cfg.reorder.flag_factor)
    gen = rngmod.stream(cfg.seed, rngmod.SAMPLING)
    fake = qm.ModelBatch(qcfg.generator_spec, rngmod.uniform_latent(gen, g.n_eval)).forward(res.theta_g)["value"]
    lo, hi = g.target_mu - 5 * g.target_sigma, g.target_mu + 5 * g.target_sigma
    hist = sde_oracle.histogram(fake, (lo, hi), g.n_bins)
    ref = np.diff(0.5 * (1 + sde_oracle.erf((hist.edges - g.target_mu) / (g.target_sigma * math.sqrt(2)))))
    run.histogram(0.0, hist, ref, "qGAN")
    snap = res.history[res.best_epoch - 1] if res.best_epoch else None
    run.metrics.update(
        gap_fired=any(r.ks is not None for r in res.history),
        best_epoch=res.best_epoch,
        best_ks=res.best_ks,
        snapshot_L_D=None if snap is None else snap.L_D,
        snapshot_L_G=None if snap is None else snap.L_G,
        ks_eval_vs_data=sde_oracle.ks_statistic(fake, data),
    )


def _reorder_outputs(run, grid, g, mu, sigma, flag_factor, dg=None, d2g=None):
    rmap, srt = qgan.reorder_generator(g, grid)
    an = qgan.reordered_ode_analysis(g, rmap, mu, sigma, dg, d2g, flag_factor)
    target = qgan.normal_qf(grid, mu, sigma)
    run.csv("reorder.csv", ("z", "G", "h", "inv", "sorted", "Q_target", "lhs", "rhs", "flagged"),
            zip(grid, g, rmap.h, rmap.inv, srt, target, an.lhs, an.rhs, an.flagged))
    fig = Figure("generator and reordered quantile", "z", "x")
    fig.line(grid, g, label="G").line(grid, srt, label="reordered").line(grid, target, label="target", dashed=True)
    run.svg("reorder.svg", fig)
    fig = Figure("reordered ODE sides", "z", "value")
    ok = ~an.flagged
    fig.line(grid[ok], an.lhs[ok], label="LHS").line(grid[ok], an.rhs[ok], label="RHS", dashed=True)
    run.svg("reorder_ode.svg", fig)
    run.metrics.update(
        max_unflagged_difference=an.max_unflagged_difference(),
        flagged_z=[float(x) for x in grid[an.flagged]],
        max_recovery_error=float(np.max(np.abs(srt - target))),
    )
    return an


def _exp_reorder(cfg, config_path, run):
    r = cfg.reorder
    grid = qgan.symmetric_midpoint_grid(r.n_points)
    if r.source == "ANALYTIC_SINGLE_DIP":
        g, dg, d2g = qgan.single_dip_generator(grid, r.mu, r.sigma)
    else:
        spec, theta, _ = qm.load_model(cfgmod.resolve_path(config_path, r.model))
        out = qm.ModelBatch(spec, grid, want=("dz", "dzz")).forward(theta)
        g, dg, d2g = out["value"], out["dz"], out["dzz"]
    _reorder_outputs(run, grid, g, r.mu, r.sigma, r.flag_factor, dg, d2g)


EXPERIMENTS = {
    "TRAIN_INITIAL_QF": _exp_train_initial,
    "PROPAGATE_ANALYTIC": _exp_propagate,
    "PROPAGATE_DATA": _exp_propagate,
    "SAMPLE": _exp_sample,
    "EULER_MARUYAMA": _exp_euler,
    "QGAN_TRAIN": _exp_qgan,
    "REORDER_ANALYSIS": _exp_reorder,
}


def output_dir(cfg, out=None):
    if out:
        return out
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get("QQM_OUT", "qqm_out")
    return os.path.join(root, f"{cfg.experiment.lower()}-{cfgmod.config_hash(cfg)[:10]}")


def run(config_path, out=None, seed=None, strict=False, threads=None) -> int:
    """Run one experiment; returns the process exit code."""
    try:
        cfg = cfgmod.load_config(config_path)
        if seed is not None:
            if seed < 0:
                raise cfgmod.ConfigError("--seed must be non-negative")
            cfg = cfg.model_copy(update={"seed": seed})
    except cfgmod.ConfigError as exc:
        print(f"qqm: config error: {exc}", file=sys.stderr)
        return 2
    rd = RunDir(output_dir(cfg, out))
    start = time.perf_counter()
    try:
        EXPERIMENTS[cfg.experiment](cfg, config_path, rd)
    except NumericalError as exc:
        print(f"qqm: numeric abort: {exc} (epoch {exc.epoch}, at {exc.where})", file=sys.stderr)
        return 3
    except (ConfigurationError, DomainError) as exc:
        print(f"qqm: config error: {config_path}: {exc}", file=sys.stderr)
        return 2
    rd.timings["total"] = time.perf_counter() - start
    rd.manifest(cfg, config_path, {"strict_deterministic": bool(strict), "threads": threads})
    print(rd.file(MANIFEST))
    return 0


# --------------------------------------------------------------------------
# compare


class CompareError(Exception):
    pass


def _load_manifest(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "qqm-manifest":
        raise CompareError(f"{path} is not a qqm manifest")
    return doc


def _read_hist(base, name):
    _, rows = read_csv(os.path.join(base, name))
    a = np.array([r[:3] for r in rows], dtype=float)
    return a[:, 0], a[:, 1], a[:, 2]


def compare_histograms(path_a, path_b):
    """Per-slice bin differences between two runs: ``{t: (lo, hi, pa, pb)}``."""
    ma, mb = _load_manifest(path_a), _load_manifest(path_b)
    da, db = os.path.dirname(os.path.abspath(path_a)), os.path.dirname(os.path.abspath(path_b))
    ha = {h["t"]: h["file"] for h in ma.get("histograms", [])}
    hb = {h["t"]: h["file"] for h in mb.get("histograms", [])}
    common = sorted(set(ha) & set(hb))
    if not common:
        raise CompareError(f"no common histogram slices between {ma['config_path']} and {mb['config_path']}")
    out = {}
    for t in common:
        lo_a, hi_a, pa = _read_hist(da, ha[t])
        lo_b, hi_b, pb = _read_hist(db, hb[t])
        if lo_a.size != lo_b.size or not (np.allclose(lo_a, lo_b) and np.allclose(hi_a, hi_b)):
            raise CompareError(
                f"incompatible binning at t={fmt(t)}: {ma['config_path']} has {lo_a.size} bins on "
                f"[{fmt(lo_a[0])}, {fmt(hi_a[-1])}], {mb['config_path']} has {lo_b.size} bins on "
                f"[{fmt(lo_b[0])}, {fmt(hi_b[-1])}]")
        out[t] = (lo_a, hi_a, pa, pb)
    return out


def compare(path_a, path_b, out=None) -> int:
    try:
        slices = compare_histograms(path_a, path_b)
    except (CompareError, OSError, json.JSONDecodeError) as exc:
        print(f"qqm: compare error: {exc}", file=sys.stderr)
        return 2
    out = out or os.path.join(os.path.dirname(os.path.abspath(path_a)), "compare")
    os.makedirs(out, exist_ok=True)
    rows, summary = [], {}
    for t, (lo, hi, pa, pb) in slices.items():
        diff = pa - pb
        rows += list(zip([t] * lo.size, lo, hi, pa, pb, diff))
        summary[fmt(t)] = {"max_abs_difference": float(np.max(np.abs(diff))),
                           "binned_ks": float(np.max(np.abs(np.cumsum(pa) - np.cumsum(pb))))}
        fig = Figure(f"bin difference, t = {fmt(t)}", "x", "probability difference")
        fig.bar(np.append(lo, hi[-1]), diff, label="A - B")
        fig.save(os.path.join(out, f"compare_t{fmt(t)}.svg"))
    write_csv(os.path.join(out, "compare.csv"),
              ("t", "bin_lo", "bin_hi", "probability_a", "probability_b", "difference"), rows)
    report = {"manifest_a": os.path.abspath(path_a), "manifest_b": os.path.abspath(path_b), "slices": summary,
              "max_abs_difference": max(s["max_abs_difference"] for s in summary.values())}
    _atomic_json(os.path.join(out, "compare.json"), report)
    for t, s in summary.items():
        print(f"t={t} max|diff|={s['max_abs_difference']:.6g} binned_KS={s['binned_ks']:.6g}")
    return 0
