import numpy as np
import pytest
from scipy import integrate, stats

from minmax_measure.problems import (
    ANALYTIC_ZERO, DCOT_KAPPA, MOT_MU1, MOT_MU2, Normal, NormalMixture, StudentT,
    preset_dcot, preset_mot, preset_ot, preset_w2, problem_from_config, sample_mu_side,
)


def test_ot_preset_structure():
    p = preset_ot(Normal(0, 2), Normal(0, 2))
    assert p.J == 2 and [t.dim for t in p.terms] == [1, 1]
    assert all(t.weight.kind == "one" for t in p.terms)


def test_dcot_preset():
    p = preset_dcot()
    assert p.J == 3 and all(t.weight.kind == "one" for t in p.terms)
    assert p.terms[0].target.sampler == Normal(0, 2)
    assert p.terms[2].target.sampler == StudentT(8)
    assert p.latent.dim == 2 and p.latent.kind == "uniform"
    x = np.array([[1.0, -0.5], [-2.0, 3.0]])
    assert np.array_equal(p.cost(x), [0.5, 1.0])
    assert np.array_equal(p.terms[2].transform(x)[:, 0], [-1.5, 5.0])


def test_student_t_moments():
    rng = np.random.default_rng(0)
    n = 400_000
    x = sample_mu_side(preset_dcot().terms[2], n, rng)[:, 0]
    # standard errors: var(x^2) = E x^4 - (E x^2)^2 with E x^4 = 3 df^2 / ((df-2)(df-4))
    m4 = 3 * 64 / (6 * 4)
    var_se = np.sqrt((m4 - (8 / 6) ** 2) / n)
    assert abs(x.var() - 8 / 6) < 4 * var_se
    kurt = np.mean(x ** 4) / x.var() ** 2
    assert abs(kurt - 4.5) < 0.3
    assert DCOT_KAPPA.var == pytest.approx(8 / 6)


def test_normal_target_mean_clt():
    rng = np.random.default_rng(1)
    n = 50_000
    x = sample_mu_side(preset_dcot().terms[0], n, rng)
    assert abs(x.mean()) < 3 * 2 / np.sqrt(n)


def test_mot_preset():
    p = preset_mot()
    assert MOT_MU1.mean == pytest.approx(-0.25) and MOT_MU2.mean == pytest.approx(-0.25)
    assert sample_mu_side(p.terms[2], 10, np.random.default_rng(0)) is ANALYTIC_ZERO
    x = np.random.default_rng(0).normal(size=(20, 1)).repeat(2, axis=1)
    assert np.all(p.terms[2].weight(x) == 0.0)
    assert p.support_box is None
    assert preset_mot([[-6, 6], [-6, 6]]).support_box == ((-6, 6), (-6, 6))


def test_mixture_cdf_ppf_roundtrip():
    for law in (MOT_MU1, MOT_MU2):
        q = np.linspace(0.001, 0.999, 37)
        assert np.allclose(law.cdf(law.ppf(q)), q, atol=1e-10)
        m, _ = integrate.quad(lambda u: law.ppf(u)[0], 0, 1, limit=200)
        assert m == pytest.approx(law.mean, abs=1e-6)
        assert law.partial_expectation(-np.inf, np.inf) == pytest.approx(law.mean, abs=1e-12)


def test_student_t_partial_expectation():
    t = StudentT(8)
    val, _ = integrate.quad(lambda x: x * stats.t.pdf(x, 8), 0.3, 2.0)
    assert t.partial_expectation(0.3, 2.0) == pytest.approx(val, rel=1e-10)


def test_w2_preset():
    for d in (1, 2, 3):
        p = preset_w2(d)
        assert p.d == 2 * d and [t.dim for t in p.terms] == [d, d]
        assert p.meta["exact"] == pytest.approx(d)
        assert p.value_sign == -1.0
    assert preset_w2(2, 1.0, 1.0).meta["exact"] == 0.0
    x = np.array([[1.0, 2.0, 0.0, 0.0]])
    assert preset_w2(2).cost(x)[0] == -5.0
    with pytest.raises(ValueError):
        preset_w2(0)


def test_streams_reproducible():
    term = preset_dcot().terms[2]
    a = sample_mu_side(term, 100, np.random.default_rng(5))
    b = sample_mu_side(term, 100, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_config_roundtrip_and_errors():
    for p in (preset_dcot(), preset_mot(), preset_w2(2)):
        q = problem_from_config(p.to_config())
        assert q.to_config() == p.to_config()
    assert problem_from_config({"preset": "w2", "dim": 3}).d == 6
    with pytest.raises(ValueError):
        problem_from_config({"preset": "nope"})
    with pytest.raises(ValueError):
        problem_from_config({"preset": "mot", "extra": 1})
    bad = preset_dcot().to_config()
    bad["terms"][0]["target"] = {"kind": "normal"}
    with pytest.raises(ValueError, match="std"):
        problem_from_config(bad)


def test_expression_cost():
    cfg = {"d": 2, "cost": {"kind": "expr", "expr": "pos(x0 - 2*x1) + square(x[1])"},
           "terms": [{"transform": {"kind": "proj", "idx": [0]}, "target": {"kind": "normal", "std": 1}}]}
    p = problem_from_config(cfg)
    x = np.array([[3.0, 1.0], [0.0, 1.0]])
    assert np.array_equal(p.cost(x), [2.0, 1.0])
    cfg["cost"]["expr"] = "__import__('os')"
    with pytest.raises(ValueError):
        problem_from_config(cfg)


def test_sampled_targets_need_unit_weight():
    cfg = preset_dcot().to_config()
    cfg["terms"][0]["weight"] = {"kind": "diff", "a": 0, "b": 1}
    with pytest.raises(ValueError):
        problem_from_config(cfg)


def test_mixture_validation():
    with pytest.raises(ValueError):
        NormalMixture((0.5, 0.6), (0, 1), (1, 1))
