"""Tests for the Monte Carlo study machinery."""

import numpy as np
import pytest

from sncross import (
    CrossoverLayout,
    RngStream,
    Scenario,
    default_true_theta,
    generate_dataset,
    selection_rate,
    simulate_subjects,
)
from sncross.simulate import (
    SimConfig,
    aggregate,
    default_layout,
    run_monte_carlo,
    run_replicate,
    run_replicates,
    summary_rows,
)
from sncross.skewnormal import delta_of_lambda


def test_default_layout_matches_study_design():
    layout = default_layout(30)
    assert layout.n_sequences == 3
    assert layout.n_periods == 3
    assert layout.n_treatments == 3
    assert layout.n_responses == 4
    assert layout.assignment == ((1, 2, 3), (2, 3, 1), (3, 1, 2))
    assert layout.covariates == ("w",)
    assert layout.pm == 12


def test_default_truths():
    t1 = default_true_theta(Scenario.ERROR_SN)
    np.testing.assert_array_equal(
        t1.beta, [2.1, 2.4, 1.1, 0.9, 2.1, 1.5, 2.0, 3.4, 1.8]
    )
    assert (t1.sigma_e2, t1.sigma_s2, t1.lam) == (2.0, 0.64, 3.0)
    t2 = default_true_theta(Scenario.EFFECT_SN)
    assert t2.beta[0] == 3.3
    assert (t2.sigma_e2, t2.sigma_s2, t2.lam) == (0.72, 3.0, 4.0)
    with pytest.raises(ValueError):
        default_true_theta(Scenario.NORMAL)


def test_generated_dimensions():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=30, replicates=1, seed=1)
    data = generate_dataset(config, 0)
    assert data.y.shape == (90, 12)
    assert data.n_obs == 1080
    assert data.X.shape == (90, 12, 9)


def test_generation_deterministic_in_seed_and_index():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=5, replicates=3, seed=77)
    a = generate_dataset(config, 2)
    b = generate_dataset(config, 2)
    c = generate_dataset(config, 1)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)
    other_seed = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=5, replicates=3, seed=78)
    assert not np.array_equal(generate_dataset(other_seed, 2).y, a.y)


def test_generated_covariate_blocks():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=30, replicates=1, seed=3)
    data = generate_dataset(config, 0)
    w = data.covariate_values[:, 0]
    for seq in (1, 2, 3):
        block = w[data.sequences == seq]
        np.testing.assert_array_equal(block, [0.0] * 10 + [1.0] * 10 + [2.0] * 10)


def test_error_sn_skewness_concentrated_on_first_coordinate():
    layout = default_layout(3334)
    truth = default_true_theta(Scenario.ERROR_SN)
    data = simulate_subjects(layout, truth, RngStream(15, 0))
    resid = data.y - data.X @ truth.beta
    skews = []
    for k in range(12):
        col = resid[:, k]
        c = col - col.mean()
        skews.append((c**3).mean() / (c**2).mean() ** 1.5)
    assert skews[0] > 0.15
    assert np.abs(skews[1:]).max() < 0.1


def test_generator_covariance_matches_theory_and_brute_force():
    layout = CrossoverLayout(
        n_per_seq=(20000,), assignment=((1, 2, 3),), n_treatments=3, n_responses=4,
        covariates=("w",),
    )
    truth = default_true_theta(Scenario.ERROR_SN)
    data = simulate_subjects(layout, truth, RngStream(16, 0))
    resid = data.y - data.X @ truth.beta
    emp = np.cov(resid.T)

    delta = delta_of_lambda(3.0)
    theory = 0.64 * np.ones((12, 12)) + 2.0 * np.eye(12)
    theory[0, 0] -= 2.0 * delta**2 * (2.0 / np.pi)
    assert np.abs(emp - theory).max() < 0.12

    # independent additive-construction reimplementation with plain numpy
    rng = np.random.default_rng(4)
    n = 20000
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal((n, 12))
    e = np.sqrt(2.0) * u1
    e[:, 0] = np.sqrt(2.0) * (delta * np.abs(u0) + np.sqrt(1 - delta**2) * u1[:, 0])
    b = np.sqrt(0.64) * rng.standard_normal(n)
    brute = np.cov((e + b[:, None]).T)
    assert np.abs(emp - brute).max() < 0.2


def test_single_replicate_summary_equals_fit():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=6, replicates=1, seed=21)
    rep = run_replicate(config, 0)
    summary = aggregate(config, [rep])
    est = list(rep.sn.theta.beta) + [
        rep.sn.theta.sigma_e2, rep.sn.theta.sigma_s2, rep.sn.theta.lam
    ]
    np.testing.assert_allclose(summary.sn.mean_estimate, est, rtol=1e-14)
    np.testing.assert_allclose(summary.sn.mean_se, rep.sn.se, rtol=1e-14)
    np.testing.assert_array_equal(summary.sn.sd_estimate, np.zeros(12))
    assert summary.replicates_converged == 1


def test_selection_rate():
    assert selection_rate([1.0, 2.0], [3.0, 4.0]) == 1.0
    assert selection_rate([3.0], [3.0]) == 0.0
    assert selection_rate([1.0, 5.0], [2.0, 4.0]) == 0.5
    with pytest.raises(ValueError):
        selection_rate([], [])


def test_worker_count_does_not_change_results():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=6, replicates=4, seed=5)
    seq = run_monte_carlo(config, workers=1)
    par = run_monte_carlo(config, workers=2)
    np.testing.assert_array_equal(seq.sn.mean_estimate, par.sn.mean_estimate)
    np.testing.assert_array_equal(seq.sn.mean_se, par.sn.mean_se)
    np.testing.assert_array_equal(seq.normal.mean_abs_bias, par.normal.mean_abs_bias)
    assert seq.sn_selected_rate == par.sn_selected_rate


def test_failed_replicates_reported_and_excluded():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=6, replicates=4, seed=5)
    results = run_replicates(config)
    before = aggregate(config, results)
    ok = [r.index for r in results if r.sn.converged and r.normal.converged]
    # force one organically-converged replicate to look non-converged
    forced = ok[0]
    results[forced].sn.converged = False
    after = aggregate(config, results)
    assert set(after.failed_replicates) == set(before.failed_replicates) | {forced}
    assert after.replicates_converged == before.replicates_converged - 1


def test_summary_rows_structure():
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=6, replicates=2, seed=9)
    summary = run_monte_carlo(config)
    rows = summary_rows(summary)
    assert rows[0][:2] == ["parameter", "true"]
    assert len(rows) == 1 + 12
    lam_row = [r for r in rows if r[0] == "lambda"][0]
    assert lam_row[1] == repr(3.0)
    assert lam_row[6] == ""  # the normal model has no lambda column


def test_mean_abs_bias_dominates_mean_deviation():
    # Jensen: mean |est - true| >= |mean est - true| per parameter
    config = SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=6, replicates=4, seed=5)
    summary = run_monte_carlo(config)
    truth = np.array(
        list(config.true_theta.beta) + [2.0, 0.64, 3.0]
    )
    np.testing.assert_array_compare(
        lambda a, b: a >= b - 1e-12,
        summary.sn.mean_abs_bias,
        np.abs(summary.sn.mean_estimate - truth),
    )


def test_bias_shrinks_with_more_subjects():
    reps = 30
    small = run_monte_carlo(
        SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=30, replicates=reps, seed=314)
    )
    large = run_monte_carlo(
        SimConfig(scenario=Scenario.ERROR_SN, n_per_seq=50, replicates=reps, seed=314)
    )
    improved = int(np.sum(large.sn.mean_abs_bias <= small.sn.mean_abs_bias))
    assert improved >= 8
