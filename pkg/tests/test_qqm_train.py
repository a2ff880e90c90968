import math

import numpy as np
import pytest

from qqm import circuits as C, quantile_model as Q, qqm_train as T, rng, sde_oracle as S
from qqm.errors import ConfigurationError, NumericalError
from qqm.optim import AdamSettings, OptimizerState
from conftest import OU


def toy_spec(boundary=True):
    b = Q.BoundaryMode("FLOATING", Q.AnalyticProfile(OU, 0.0)) if boundary else None
    return Q.GeneratorSpec(2, C.FeatureMapSpec("PRODUCT", "X", "z"), C.AnsatzSpec(1, 2),
                           t_map=C.FeatureMapSpec("PRODUCT", "Y", "t"), boundary=b)


def test_chebyshev_nodes():
    z = T.chebyshev_nodes(43)
    assert z[21] == 0.0
    assert z[-1] == pytest.approx(math.cos(math.pi / 86), abs=1e-15)
    assert z[-1] == pytest.approx(0.999333, abs=1e-6)
    assert np.all(np.diff(z) > 0)


def test_targets_from_analytic_samples():
    x = S.analytic_qf(OU, rng.uniform_latent(rng.stream(0, rng.SAMPLING), 100000), 0.0)
    tg = T.prepare_quantile_targets(x, 43)
    assert np.max(np.abs(np.array(tg.q) - S.analytic_qf(OU, np.array(tg.z), 0.0))) <= 0.02
    assert np.all(np.diff(tg.q) >= 0)
    with pytest.raises(ConfigurationError):
        T.prepare_quantile_targets([], 43)


def test_grid_and_config_validation():
    g = T.TrainingGrid.uniform()
    assert g.M == 420 and len(set(zip(*g.mesh()))) == 420
    assert g.z_points[0] == -0.99 and g.z_points[-1] == 0.99
    with pytest.raises(ConfigurationError):
        T.TrainingGrid((0.1, 0.0), (0.0,))
    with pytest.raises(ConfigurationError):
        T.LossConfig(0.0, 0.0)
    with pytest.raises(ConfigurationError):
        T.DataTargets((0.0, 0.5), (1.0, 0.0))


class _Const:
    def __init__(self, c):
        self.c = c

    def evaluate_with_derivatives(self, z, t):
        return Q.ModelOutput(self.c, 0.0, 0.0, 0.0)


class _Interp:
    def __init__(self, tg):
        self.tg = tg

    def evaluate_with_derivatives(self, z, t):
        return Q.ModelOutput(float(np.interp(z, self.tg.z, self.tg.q)))


def test_data_loss_examples():
    z = np.linspace(-0.9, 0.9, 9)
    q = np.sqrt(2) * S.inverf(z)
    tg = T.DataTargets(tuple(z), tuple(q))
    assert T.data_loss(_Interp(tg), None, tg) == 0.0
    assert T.data_loss(_Const(0.0), None, tg) == pytest.approx(np.mean(q ** 2), abs=1e-14)
    spec = Q.GeneratorSpec(2, C.FeatureMapSpec("TOWER", "Y", "z"), C.AnsatzSpec(1, 2))
    theta = Q.initial_theta(spec, 0)
    g = np.array([Q.evaluate(spec, theta, v).value for v in z])
    assert T.data_loss(spec, theta, tg) == pytest.approx(sum((g - q) ** 2) / len(z), abs=1e-14)


def test_analytic_solution_has_zero_residual():
    grid = T.TrainingGrid.uniform()
    model = T.AnalyticQuantileModel(OU)
    r = [T.ou_residual(model, None, z, t, OU) for z, t in zip(*grid.mesh())]
    assert max(abs(v) for v in r) <= 1e-8
    assert T.sde_loss(model, None, grid, OU, T.LossConfig()) <= 1e-12


def test_residual_term_isolation_and_floor():
    p = S.SdeParams(1.5, 0.3, 0.0, 1.0, 0.0)
    r, _ = T.residual_terms(2.0, 1.0, 0.7, 0.0, p, 1e-3)
    assert float(r) == pytest.approx(-1.5 * (0.3 - 2.0))
    r, partial = T.residual_terms(1.0, 0.0, 2.0, 0.0, OU, 1e-3)
    assert np.isfinite(r) and partial["dz"] == 0.0
    assert float(r) == pytest.approx(-(1.0 * (0 - 1.0) + 0.245 * 2.0 / 1e-6))


def test_residual_partials_match_finite_differences():
    args = np.array([1.2, 0.8, -0.3, 0.4])
    _, partial = T.residual_terms(*args, OU, 1e-3)
    h = 1e-6
    for k, name in enumerate(("value", "dz", "dzz", "dt")):
        e = np.zeros(4)
        e[k] = h
        fd = (T.residual_terms(*(args + e), OU, 1e-3)[0] - T.residual_terms(*(args - e), OU, 1e-3)[0]) / (2 * h)
        assert float(partial[name]) == pytest.approx(float(fd), rel=1e-6)


def test_zero_weight_and_single_point():
    spec = toy_spec()
    theta = Q.initial_theta(spec, 0)
    grid = T.TrainingGrid((0.3,), (0.2,))
    assert T.sde_loss(spec, theta, grid, OU, T.LossConfig(1.0, 0.0)) == 0.0
    r = T.ou_residual(spec, theta, 0.3, 0.2, OU)
    assert T.sde_loss(spec, theta, grid, OU, T.LossConfig()) == pytest.approx(r * r, rel=1e-12)


def test_total_loss_gradient_matches_finite_differences():
    spec = toy_spec()
    grid = T.TrainingGrid.uniform(5, 3, 0.4)
    tg = T.DataTargets((-0.5, 0.0, 0.5), tuple(S.analytic_qf(OU, np.array([-0.5, 0.0, 0.5]), 0.2)), 0.2)
    asm = T.LossAssembly(spec, grid, tg, OU, T.LossConfig(1.0, 1.0, 0.1))
    theta = Q.initial_theta(spec, 5)
    _, _, _, g, _ = asm(theta)
    h = 1e-6
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        fd = (asm(theta + e, need_grad=False)[0] - asm(theta - e, need_grad=False)[0]) / (2 * h)
        assert g[k] == pytest.approx(fd, abs=1e-5 * max(1.0, abs(fd)))


def test_alpha_gradient():
    spec = Q.GeneratorSpec(2, C.FeatureMapSpec("TOWER", "Y", "z"), C.AnsatzSpec(1, 2), train_alpha=True)
    tg = T.DataTargets((-0.5, 0.5), (1.0, 2.0))
    asm = T.LossAssembly(spec, None, tg, None, T.LossConfig(1.0, 0.0))
    theta = Q.initial_theta(spec, 1)
    alpha = np.array([1.3])
    _, _, _, _, ga = asm(theta, alpha)
    h = 1e-6
    fd = (asm(theta, alpha + h, need_grad=False)[0] - asm(theta, alpha - h, need_grad=False)[0]) / (2 * h)
    assert ga[0] == pytest.approx(fd, rel=1e-6)


def test_grid_order_invariance():
    spec = toy_spec()
    theta = Q.initial_theta(spec, 2)
    grid = T.TrainingGrid.uniform(7, 4)
    z, t = grid.mesh()
    out = Q.ModelBatch(spec, z, t, want=("dz", "dzz", "dt")).forward(theta)
    r, _ = T.residual_terms(out["value"], out["dz"], out["dzz"], out["dt"], OU, 1e-3)
    perm = np.random.default_rng(0).permutation(r.size)
    assert abs(math.fsum(r ** 2) - math.fsum(r[perm] ** 2)) <= 1e-12


def test_adam_matches_reference_update():
    st = OptimizerState(np.array([1.0, -2.0]), AdamSettings(lr=0.1))
    g = np.array([0.5, -3.0])
    st.step(g)
    # first bias-corrected step moves by lr * sign(g)
    np.testing.assert_allclose(st.theta, [0.9, -1.9], atol=1e-8)
    with pytest.raises(ConfigurationError):
        OptimizerState(np.zeros(2), m=np.zeros(3))


def test_training_is_deterministic_and_improves():
    spec = toy_spec()
    grid = T.TrainingGrid.uniform(5, 3, 0.4)
    cfg = T.LossConfig(0.0, 1.0, 0.1)
    a = T.train(spec, grid, None, OU, cfg, AdamSettings(lr=0.05), epochs=40, seed=3)
    b = T.train(spec, grid, None, OU, cfg, AdamSettings(lr=0.05), epochs=40, seed=3)
    assert [r.total for r in a.history] == [r.total for r in b.history]
    assert a.best_loss < a.history[0].total
    running = np.minimum.accumulate([r.total for r in a.history])
    assert np.all(np.diff(running) <= 0)
    assert T.loss_history_rows(a.history)[0][0] == 1
    with pytest.raises(ConfigurationError):
        T.train(spec, grid, None, OU, cfg, epochs=0)


def test_non_finite_loss_reports_location():
    spec = toy_spec()
    grid = T.TrainingGrid.uniform(3, 2)
    asm = T.LossAssembly(spec, grid, None, S.SdeParams(1.0, 0.0, 0.7, 4.0, -0.2), T.LossConfig(0.0, 1.0))
    theta = np.full(Q.parameter_count(spec), np.nan)
    with pytest.raises(NumericalError) as info:
        asm(theta, epoch=7)
    assert info.value.epoch == 7 and "z=" in info.value.where
