import math

import numpy as np
import pytest

from rankcal.calibrators import ParametricParams, check_monotone, transform
from rankcal.fitting import (
    FitResult,
    LossSpec,
    empirical_risk,
    fit,
    fit_log_csv,
    project_feasible,
    uerm_bias_closed_form,
)
from rankcal.metrics import ece

from conftest import (
    random_feasible_params,
    two_gaussian_posterior_coefs,
    two_gaussian_scores,
)

HALF = ParametricParams("platt", 0.0, 0.0, 0.0)  # transform == 0.5 everywhere


def test_naive_risk_log_half():
    risk = empirical_risk(HALF, [0.3], [1], LossSpec("naive"))
    assert risk == pytest.approx(math.log(2), abs=1e-12)


def test_uerm_risk_hand_value():
    # y=1, w=0.5, g=0.5: -2 log .5 - (1-2) log .5 = -log .5
    spec = LossSpec("uerm", propensities=np.array([0.5]))
    risk = empirical_risk(HALF, [0.3], [1], spec)
    assert risk == pytest.approx(math.log(2), abs=1e-12)


def test_uerm_with_unit_propensity_equals_naive():
    rng = np.random.default_rng(0)
    s = rng.normal(size=200)
    y = rng.integers(0, 2, size=200)
    params = ParametricParams("platt", 0.0, 1.2, -0.4)
    naive = empirical_risk(params, s, y, LossSpec("naive"))
    uerm = empirical_risk(params, s, y, LossSpec("uerm", propensities=np.ones(200)))
    assert uerm == naive


def test_ideal_risk_soft_labels():
    spec = LossSpec("ideal", true_preferences=np.array([0.25]))
    risk = empirical_risk(HALF, [0.0], None, spec)
    assert risk == pytest.approx(math.log(2), abs=1e-12)


def test_missing_propensities_rejected():
    with pytest.raises(ValueError):
        LossSpec("uerm")
    spec = LossSpec("uerm", propensities=np.ones(3))
    with pytest.raises(ValueError, match="missing propensity"):
        empirical_risk(HALF, [0.0, 1.0], [0, 1], spec)


def test_propensity_range_validated():
    with pytest.raises(ValueError):
        LossSpec("uerm", propensities=np.array([0.0, 0.5]))
    with pytest.raises(ValueError):
        LossSpec("uerm", propensities=np.array([1.5]))


def test_fit_separable_platt_drives_risk_down():
    rng = np.random.default_rng(1)
    s = np.concatenate([rng.uniform(-2, -0.1, 200), rng.uniform(0.1, 2, 200)])
    y = (s > 0).astype(int)
    res = fit("platt", s, y, LossSpec("naive"))
    assert res.final_risk < 0.01
    assert res.params.b > 1.0


def test_fit_gaussian_recovers_equal_variance():
    rng = np.random.default_rng(2)
    s, y = two_gaussian_scores(100_000, 0.0, 1.0, 1.5, 1.0, 0.3, rng)
    res = fit("gaussian", s, y, LossSpec("naive"))
    assert abs(res.params.a) < 0.05
    assert res.converged


def test_fit_degenerate_all_positive_labels():
    s = np.array([-1.0, 0.0, 1.0, 2.0])
    y = np.ones(4, dtype=int)
    with pytest.warns(RuntimeWarning, match="clamp"):
        res = fit("platt", s, y, LossSpec("naive"))
    assert transform(res.params, 0.5) > 0.99
    assert res.final_risk < 1e-5


def test_fit_requires_three_distinct_scores():
    with pytest.raises(ValueError, match="distinct"):
        fit("platt", [1.0, 1.0, 2.0], [0, 1, 1], LossSpec("naive"))


def test_fit_deterministic():
    rng = np.random.default_rng(3)
    s = rng.normal(size=500)
    y = (rng.random(500) < 1 / (1 + np.exp(-s))).astype(int)
    a = fit("gamma", s, y, LossSpec("naive"))
    b = fit("gamma", s, y, LossSpec("naive"))
    assert a.params == b.params
    assert a.final_risk == b.final_risk
    assert a.iterations == b.iterations


def test_fit_respects_monotonicity_constraints():
    rng = np.random.default_rng(4)
    for trial in range(12):
        family = ["platt", "gaussian", "gamma", "beta"][trial % 4]
        s = rng.normal(size=400)
        y = (rng.random(400) < 0.5).astype(int)  # pure noise tempts a flat fit
        res = fit(family, s, y, LossSpec("naive"))
        assert check_monotone(res.params, float(s.min()), float(s.max()))


def test_fit_infeasible_init_is_repaired():
    rng = np.random.default_rng(5)
    s = rng.normal(size=300)
    y = (s + rng.normal(0, 1, 300) > 0).astype(int)
    bad = ParametricParams("gaussian", -2.0, -3.0, 0.0)  # violates both endpoints
    res = fit("gaussian", s, y, LossSpec("naive"), init=bad)
    assert check_monotone(res.params, float(s.min()), float(s.max()))
    assert res.final_risk <= empirical_risk(
        ParametricParams("gaussian", 0.0, 1.0, 0.0), s, y, LossSpec("naive")
    )


def test_fit_score_range_extends_constraints():
    rng = np.random.default_rng(6)
    s, y = two_gaussian_scores(5000, 0.0, 2.0, 2.0, 1.0, 0.4, rng, upper=2.0)
    wide = fit("gaussian", s, y, LossSpec("naive"), score_range=(-10.0, 10.0))
    assert check_monotone(wide.params, -10.0, 10.0)


def test_fit_active_constraints_reported():
    rng = np.random.default_rng(7)
    # unequal variances with data past the turning point force the constraint
    s, y = two_gaussian_scores(20_000, 0.0, 2.0, 2.0, 1.0, 0.4, rng)
    res = fit("gaussian", s, y, LossSpec("naive"))
    assert "right_endpoint" in res.active_constraints


def test_fit_log_csv_shape():
    rng = np.random.default_rng(8)
    s = rng.normal(size=200)
    y = (s > 0).astype(int)
    res = fit("platt", s, y, LossSpec("naive"))
    text = fit_log_csv(res)
    lines = text.strip().splitlines()
    assert lines[0] == "iteration,risk,constraint_slack"
    assert len(lines) == len(res.history) + 1


def test_project_feasible_lands_in_region():
    rng = np.random.default_rng(9)
    for trial in range(30):
        family = ["gaussian", "gamma", "beta"][trial % 3]
        params = random_feasible_params(family, -2.0, 3.0, rng, scale=4.0)
        assert check_monotone(params, -2.0, 3.0)


def test_bias_zero_when_propensities_exact():
    params = ParametricParams("platt", 0.0, 1.0, -0.5)
    rng = np.random.default_rng(10)
    s = rng.normal(size=50)
    rho = rng.random(50)
    omega = rng.uniform(0.1, 1.0, 50)
    assert uerm_bias_closed_form(params, s, rho, omega, omega) == 0.0


def test_bias_zero_at_half_probability():
    # g = 0.5 makes log((1-g)/g) vanish regardless of the weight error
    bias = uerm_bias_closed_form(HALF, [0.0], [1.0], [0.5], [0.25])
    assert bias == pytest.approx(0.0, abs=1e-15)


def test_bias_rejects_zero_estimates():
    with pytest.raises(ValueError):
        uerm_bias_closed_form(HALF, [0.0], [1.0], [0.5], [0.0])


def test_bias_matches_risk_difference():
    # closed form equals (expected weighted risk) - (ideal risk), computed
    # from the exact per-pair expectation of the label
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = 40
        s = rng.normal(size=n)
        rho = rng.random(n)
        omega = rng.uniform(0.05, 1.0, n)
        omega_hat = np.clip(omega * rng.uniform(0.4, 1.8, n), 0.02, 1.0)
        params = random_feasible_params(
            ["platt", "gaussian", "beta"][rng.integers(3)], s.min(), s.max(), rng
        )
        g = np.clip(transform(params, s), 1e-7, 1 - 1e-7)
        t_uerm = omega * rho / omega_hat
        uerm = float(np.mean(-(t_uerm * np.log(g) + (1 - t_uerm) * np.log1p(-g))))
        ideal = float(np.mean(-(rho * np.log(g) + (1 - rho) * np.log1p(-g))))
        bias = uerm_bias_closed_form(params, s, rho, omega, omega_hat)
        assert uerm - ideal == pytest.approx(bias, abs=1e-10)


def test_uerm_expectation_unbiased_for_ideal():
    # with exact propensities the expected weighted risk IS the ideal risk
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = 60
        s = rng.normal(size=n)
        rho = rng.random(n)
        omega = rng.uniform(0.05, 1.0, n)
        params = random_feasible_params("gaussian", s.min(), s.max(), rng)
        g = np.clip(transform(params, s), 1e-7, 1 - 1e-7)
        t = omega * rho / omega
        uerm = float(np.mean(-(t * np.log(g) + (1 - t) * np.log1p(-g))))
        ideal = float(np.mean(-(rho * np.log(g) + (1 - rho) * np.log1p(-g))))
        assert abs(uerm - ideal) < 1e-10


def test_sampled_uerm_risk_converges_to_ideal():
    rng = np.random.default_rng(13)
    n = 100_000
    s = rng.normal(size=n)
    rho = rng.uniform(0.02, 0.5, n)
    omega = rng.uniform(0.1, 0.9, n)
    params = ParametricParams("platt", 0.0, 1.0, -1.0)
    y = (rng.random(n) < omega * rho).astype(int)
    spec = LossSpec("uerm", propensities=omega)
    sampled = empirical_risk(params, s, y, spec)
    ideal = empirical_risk(params, s, None, LossSpec("ideal", true_preferences=rho))
    g = np.clip(transform(params, s), 1e-7, 1 - 1e-7)
    l1 = -(1.0 / omega) * np.log(g) - (1 - 1.0 / omega) * np.log1p(-g)
    l0 = -np.log1p(-g)
    p = omega * rho
    se = math.sqrt(float(np.sum(p * (1 - p) * (l1 - l0) ** 2))) / n
    assert abs(sampled - ideal) < 3 * se


def test_uerm_beats_naive_on_biased_synthetic_data():
    # directional check at module scale: weighting by the true exposure
    # probability brings the fit closer to the true preference probability
    from rankcal.synthetic import (
        WorldConfig,
        generate_world,
        sample_world,
        scores_from_world,
    )

    wins = 0
    for seed in range(10):
        world = generate_world(WorldConfig(num_users=400, num_items=120), seed=seed)
        sample = sample_world(world)
        scores = scores_from_world(world).scores
        y = sample.interacted.ravel()
        omega_pair = world.observe_probs_per_pair()
        rho = world.prefer_probs.ravel()
        naive = fit("gaussian", scores, y, LossSpec("naive"))
        uerm = fit("gaussian", scores, y, LossSpec("uerm", propensities=omega_pair))
        ece_naive = ece(transform(naive.params, scores), rho)
        ece_uerm = ece(transform(uerm.params, scores), rho)
        wins += ece_uerm <= ece_naive
    assert wins >= 9


def test_fit_result_serialization(tmp_path):
    rng = np.random.default_rng(14)
    s = rng.normal(size=100)
    y = (s > 0).astype(int)
    res = fit("gaussian", s, y, LossSpec("naive"))
    path = tmp_path / "fit.json"
    res.save(path)
    import json

    payload = json.loads(path.read_text())
    assert payload["params"]["family"] == "gaussian"
    assert payload["converged"] == res.converged
    assert "history" not in payload
