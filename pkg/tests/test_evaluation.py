import numpy as np
import pytest

from minmax_measure.autodiff import Parameter
from minmax_measure.evaluation import (
    chebyshev, chebyshev_matrix, evaluate_mot, feasibility_report, marginal_error, martingale_error,
    objective_value, sample_generator, trace_summary,
)
from minmax_measure.nets import MLP, GeneratorEnsemble, MLPConfig, build_networks
from minmax_measure.problems import MOT_MU1, MOT_MU2, preset_mot


def test_chebyshev_examples():
    assert chebyshev(1, 6.0) == 1.0
    assert chebyshev(2, 0.0) == -1.0
    assert chebyshev(5, 3.0) == pytest.approx(0.5, abs=1e-15)
    assert chebyshev(0, 2.0) == 1.0
    # unclamped outside [-6, 6]: T_2(2) = 7
    assert chebyshev(2, 12.0) == 7.0


def test_trigonometric_identity():
    theta = np.random.default_rng(0).uniform(0, np.pi, 64)
    x = 6.0 * np.cos(theta)
    M = chebyshev_matrix(x, 50)
    for j in range(1, 51):
        assert np.max(np.abs(chebyshev(j, x) - np.cos(j * theta))) <= 1e-10
        assert np.max(np.abs(M[j - 1] - np.cos(j * theta))) <= 1e-10


def test_errors_vanish_on_identical_samples():
    rng = np.random.default_rng(0)
    t1 = MOT_MU1.sample(20_000, rng)[:, 0]
    t2 = MOT_MU2.sample(20_000, rng)[:, 0]
    gen = np.column_stack([t1, t2])
    assert marginal_error(gen, [t1, t2]) == 0.0
    assert marginal_error(gen, [t1, t2], clamp=False) == 0.0
    assert martingale_error(np.column_stack([t1, t1])) == 0.0


def test_independent_resampling_under_noise_floor():
    rng = np.random.default_rng(1)
    n = 100_000
    errs = [marginal_error(np.column_stack([MOT_MU1.sample(n, rng)[:, 0], MOT_MU2.sample(n, rng)[:, 0]]),
                           [MOT_MU1.sample(n, rng)[:, 0], MOT_MU2.sample(n, rng)[:, 0]])
            for _ in range(6)]
    ceiling = np.mean(errs[1:]) + 3 * np.std(errs[1:])
    assert errs[0] <= ceiling
    assert max(errs) < 0.01


def test_martingale_noise_with_independent_increment():
    rng = np.random.default_rng(2)
    n = 100_000
    x1 = MOT_MU1.sample(n, rng)[:, 0]
    vals = [martingale_error(np.column_stack([x1, x1 + rng.normal(0, 0.5, n)])) for _ in range(6)]
    # per-polynomial sd is 0.5 * sd(g_j(x1)) / sqrt(n) <= 0.5 / sqrt(n)
    assert max(vals) < 3 * 0.5 / np.sqrt(n)
    assert martingale_error(np.column_stack([x1, x1 + 0.3 * np.sign(x1)])) > 10 * max(vals)


def test_marginal_error_monotone_in_shift():
    rng = np.random.default_rng(3)
    n = 100_000
    x = MOT_MU1.sample(n, rng)[:, 0]
    tgt = MOT_MU1.sample(n, rng)[:, 0]
    deltas = [0.05, 0.1, 0.2, 0.4, 0.8]
    errs = [marginal_error((x + d)[:, None], [tgt]) for d in deltas]
    assert np.all(np.diff(errs) > 0)


def test_report_fields():
    rng = np.random.default_rng(4)
    s = rng.normal(size=(1000, 2))
    rep = feasibility_report(s, [s[:, 0], s[:, 1] + 0.1], martingale=True)
    assert rep.marginal_error >= 0 and rep.martingale_error >= 0
    assert rep.marginal_per_poly.shape == (2, 50) and rep.n == 1000
    d = rep.to_dict()
    assert len(d["martingale_per_poly"]) == 50
    with pytest.raises(ValueError):
        feasibility_report(s, [s[:, 0]])


def constant_generator(value, latent_dim=2):
    cfg = MLPConfig(latent_dim, 2, 2, 3, "tanh")
    m = MLP(cfg, [Parameter(np.zeros((3, latent_dim))), Parameter(np.zeros((2, 3)))],
            [Parameter(np.zeros(3)), Parameter(np.full(2, value))])
    return GeneratorEnsemble([m])


def test_objective_value_constants():
    gen = constant_generator(0.7)
    assert objective_value(gen, lambda x: 0.0 * x[:, 0], 1000) == 0.0
    assert objective_value(gen, lambda x: 0.0 * x[:, 0] + 3.0, 1000) == 3.0
    assert objective_value(gen, lambda x: x[:, 0] + x[:, 1], 1000) == pytest.approx(1.4)


def test_evaluation_is_reproducible():
    p = preset_mot()
    gen, _ = build_networks(p, np.random.default_rng(0), gen_hidden=8, mixture=2)
    a = sample_generator(gen, 500)
    b = sample_generator(gen, 500)
    assert np.array_equal(a, b)
    e1 = evaluate_mot(gen, p, 2000)
    e2 = evaluate_mot(gen, p, 2000)
    assert e1 == e2 and set(e1) == {"value", "marginal_error", "martingale_error", "n"}


def test_trace_summary():
    phi = np.arange(10.0)
    s = trace_summary(phi, 4, 20)
    assert s["value"] == 7.5 and s["final_running_return"] == 7.5
    assert s["stability"] == pytest.approx(np.std(phi))
