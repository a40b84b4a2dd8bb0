"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  The two Monte Carlo criteria run 50 replicates each at
30 subjects per sequence and dominate the runtime (about half a minute
together on a laptop-class machine).
"""

import time

import numpy as np
import pytest

from conftest import truncated_moments_quadrature
from sncross import (
    CrossoverLayout,
    RngStream,
    Scenario,
    ThetaState,
    conditional_t_moments,
    default_true_theta,
    e_step,
    fit,
    mills,
    normal_pdf_cdf,
    q_gradient,
    q_hessian,
    q_value,
    simulate_subjects,
    sn_moments,
    sn_sample,
    SnUnivariate,
)
from sncross.diagnostics import chi2_cdf, healy_points, ks_test, mahalanobis
from sncross.simulate import SimConfig, default_layout, run_monte_carlo

MC_SEED = 20260808


def _report(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def mc_error_sn():
    config = SimConfig(
        scenario=Scenario.ERROR_SN, n_per_seq=30, replicates=50, seed=MC_SEED
    )
    t0 = time.time()
    summary = run_monte_carlo(config)
    return summary, time.time() - t0


@pytest.fixture(scope="module")
def mc_effect_sn():
    config = SimConfig(
        scenario=Scenario.EFFECT_SN, n_per_seq=30, replicates=50, seed=MC_SEED
    )
    t0 = time.time()
    summary = run_monte_carlo(config)
    return summary, time.time() - t0


def test_criterion_1_e_step_matches_quadrature():
    """T01/T02 vs truncated-normal quadrature, 100 pairs, 1e-6, < 5 s."""
    t0 = time.time()
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(100):
        ratio = rng.uniform(-10.0, 10.0)
        zeta = rng.uniform(0.2, 3.0)
        eta = ratio * zeta
        T01, T02 = conditional_t_moments(eta, zeta)
        q1, q2 = truncated_moments_quadrature(eta, zeta)
        worst = max(
            worst,
            abs(T01 - q1) / max(1.0, abs(q1)),
            abs(T02 - q2) / max(1.0, abs(q2)),
        )
    elapsed = time.time() - t0
    ok = worst < 1e-6 and elapsed < 5.0
    _report(1, ok, f"worst scaled error {worst:.2e} over 100 (eta, zeta) pairs, {elapsed:.2f}s")


def test_criterion_2_derivatives_match_finite_differences():
    """Analytic gradient/Hessian vs central FD, 20 points per scenario, < 30 s."""
    t0 = time.time()
    layout = default_layout(4)
    data = simulate_subjects(layout, default_true_theta(Scenario.ERROR_SN), RngStream(7, 0))
    rs = np.random.default_rng(42)
    worst_g, worst_h = 0.0, 0.0
    for scenario in (Scenario.ERROR_SN, Scenario.EFFECT_SN):
        for _ in range(20):
            theta = ThetaState(
                beta=default_true_theta(Scenario.ERROR_SN).beta + rs.normal(size=9) * 0.3,
                sigma_e2=float(rs.uniform(0.4, 3.0)),
                sigma_s2=float(rs.uniform(0.4, 3.0)),
                lam=float(rs.uniform(-2.5, 3.5)),
                scenario=scenario,
            )
            cache = e_step(theta, data)
            g = q_gradient(theta, data, cache)
            H = q_hessian(theta, data, cache)
            xi0 = theta.xi
            for k in range(3):
                h = 1e-5 * max(1.0, abs(xi0[k]))
                e = np.zeros(3)
                e[k] = h
                g_fd = (
                    q_value(theta.with_xi(xi0 + e), data, cache)
                    - q_value(theta.with_xi(xi0 - e), data, cache)
                ) / (2.0 * h)
                worst_g = max(worst_g, abs(g[k] - g_fd) / max(1.0, abs(g[k])))
                H_fd = (
                    q_gradient(theta.with_xi(xi0 + e), data, cache)
                    - q_gradient(theta.with_xi(xi0 - e), data, cache)
                ) / (2.0 * h)
                for a in range(3):
                    worst_h = max(worst_h, abs(H[a, k] - H_fd[a]) / max(1.0, abs(H[a, k])))
    elapsed = time.time() - t0
    ok = worst_g < 1e-4 and worst_h < 1e-3 and elapsed < 30.0
    _report(2, ok, f"gradient err {worst_g:.2e} (<1e-4), hessian err {worst_h:.2e} (<1e-3), {elapsed:.1f}s")


def test_criterion_3_em_ascent():
    """Log-likelihood non-decreasing (slack 1e-8) on 20 datasets per scenario, < 2 min."""
    t0 = time.time()
    layout = default_layout(8)
    worst_drop = 0.0
    n_fits = 0
    for scenario in (Scenario.ERROR_SN, Scenario.EFFECT_SN):
        truth = default_true_theta(scenario)
        for k in range(20):
            data = simulate_subjects(layout, truth, RngStream(1000 + k, 0))
            for fit_scenario in (scenario, Scenario.NORMAL):
                res = fit(data, fit_scenario, compute_se=False)
                drops = np.diff(res.trajectory)
                worst_drop = min(worst_drop, float(drops.min()))
                n_fits += 1
    elapsed = time.time() - t0
    ok = worst_drop >= -1e-8 and elapsed < 120.0
    _report(3, ok, f"worst loglik decrement {worst_drop:.2e} over {n_fits} fits, {elapsed:.1f}s")


def test_criterion_4_lambda_zero_reduction():
    """Frozen-lambda SN fits reproduce the normal baseline within 1e-6 on 5 datasets."""
    layout = default_layout(5)
    truth = default_true_theta(Scenario.ERROR_SN)
    worst = 0.0
    for k in range(5):
        data = simulate_subjects(layout, truth, RngStream(2000 + k, 0))
        base = fit(data, Scenario.NORMAL, compute_se=False)
        for scenario in (Scenario.ERROR_SN, Scenario.EFFECT_SN):
            frozen = fit(data, scenario, freeze_lambda=True, compute_se=False)
            worst = max(
                worst,
                float(np.abs(frozen.theta.beta - base.theta.beta).max()),
                abs(frozen.theta.sigma_e2 - base.theta.sigma_e2),
                abs(frozen.theta.sigma_s2 - base.theta.sigma_s2),
                abs(frozen.loglik - base.loglik),
            )
    ok = worst < 1e-6
    _report(4, ok, f"max |frozen - baseline| deviation {worst:.2e} over 5 datasets x 2 scenarios")


def test_criterion_5_table2_reproduction_desk_scale(mc_error_sn):
    """Skew-error study at desk scale: beta within 3 MCSE, variance windows, AIC rate."""
    summary, elapsed = mc_error_sn
    names = list(summary.sn.names)
    truth = dict(
        zip(names, list(default_true_theta(Scenario.ERROR_SN).beta) + [2.0, 0.64, 3.0])
    )
    checks = []
    r = summary.replicates_converged
    for i, name in enumerate(names[:9]):
        mcse = summary.sn.sd_estimate[i] / np.sqrt(r)
        dev = abs(summary.sn.mean_estimate[i] - truth[name])
        checks.append((f"{name} |{dev:.4f}| <= 3*MCSE {3 * mcse:.4f}", dev <= 3 * mcse))
    se2 = summary.sn.mean_estimate[names.index("sigma_e2")]
    lam = summary.sn.mean_estimate[names.index("lambda")]
    checks.append((f"sigma_e2 {se2:.4f} in [1.85, 2.15]", 1.85 <= se2 <= 2.15))
    checks.append((f"lambda {lam:.4f} in [2.4, 4.4]", 2.4 <= lam <= 4.4))
    checks.append(
        (f"AIC selects SN in {100 * summary.sn_selected_rate:.0f}% >= 70%",
         summary.sn_selected_rate >= 0.70)
    )
    failed = [msg for msg, ok in checks if not ok]
    detail = (
        f"{r}/{summary.replicates_requested} replicates converged, "
        f"{len(checks) - len(failed)}/{len(checks)} checks, {elapsed:.0f}s"
        + (f"; failed: {failed}" if failed else "")
    )
    _report(5, not failed, detail)


def test_criterion_6_table3_contrast_desk_scale(mc_effect_sn):
    """Skew-effect study: SN recovers sigma_s2, the normal fit underestimates it."""
    summary, elapsed = mc_effect_sn
    sn_ss2 = summary.sn.mean_estimate[list(summary.sn.names).index("sigma_s2")]
    n_ss2 = summary.normal.mean_estimate[list(summary.normal.names).index("sigma_s2")]
    rate = summary.sn_selected_rate
    checks = [
        (f"SN sigma_s2 {sn_ss2:.4f} in [2.5, 3.5]", 2.5 <= sn_ss2 <= 3.5),
        (f"normal sigma_s2 {n_ss2:.4f} < 1.8", n_ss2 < 1.8),
        (f"AIC selects SN in {100 * rate:.0f}% >= 65%", rate >= 0.65),
    ]
    failed = [msg for msg, ok in checks if not ok]
    detail = (
        f"{summary.replicates_converged}/{summary.replicates_requested} converged, "
        f"SN {sn_ss2:.2f} vs normal {n_ss2:.2f}, rate {rate:.2f}, {elapsed:.0f}s"
        + (f"; failed: {failed}" if failed else "")
    )
    _report(6, not failed, detail)


def test_criterion_7_mahalanobis_chi_square_law():
    """Distances of 1e4 subjects from a fitted model: KS vs chi2_12, Healy < 0.05."""
    t0 = time.time()
    data = simulate_subjects(
        default_layout(30), default_true_theta(Scenario.ERROR_SN), RngStream(77, 0)
    )
    res = fit(data, Scenario.ERROR_SN, compute_se=False)
    big_layout = CrossoverLayout(
        n_per_seq=(3334, 3333, 3333),
        assignment=((1, 2, 3), (2, 3, 1), (3, 1, 2)),
        n_treatments=3,
        n_responses=4,
        covariates=("w",),
    )
    big = simulate_subjects(big_layout, res.theta, RngStream(123, 1))
    dist = mahalanobis(res.theta, big)
    stat, pvalue = ks_test(dist, 12)
    sup = max(abs(a - b) for a, b in healy_points(dist, 12))
    elapsed = time.time() - t0
    ok = pvalue > 0.01 and sup < 0.05 and elapsed < 60.0
    _report(
        7, ok,
        f"n={dist.size}, KS p={pvalue:.3f} (>0.01), Healy sup-dev {sup:.4f} (<0.05), {elapsed:.1f}s",
    )


def test_criterion_8_sampler_moments():
    """Sampler mean/variance/skewness within 3 batched MC SEs at lambda in {1,3,4}."""
    t0 = time.time()
    failures = []
    for lam in (1.0, 3.0, 4.0):
        params = SnUnivariate(0.0, 1.0, lam)
        target = dict(zip(("mean", "variance", "skewness"), sn_moments(params)))
        draws = sn_sample(params, RngStream(2468, int(lam)), size=1_000_000)
        batches = draws.reshape(20, -1)
        stats = {
            "mean": batches.mean(axis=1),
            "variance": batches.var(axis=1, ddof=1),
            "skewness": np.array(
                [((b - b.mean()) ** 3).mean() / b.var() ** 1.5 for b in batches]
            ),
        }
        for name, values in stats.items():
            est = values.mean()
            se = values.std(ddof=1) / np.sqrt(values.size)
            if abs(est - target[name]) > 3.0 * se:
                failures.append(f"lambda={lam} {name}: {est:.5f} vs {target[name]:.5f} (3se={3*se:.5f})")
    elapsed = time.time() - t0
    ok = not failures and elapsed < 30.0
    _report(8, ok, f"9 moment checks at 1e6 draws each, {elapsed:.1f}s"
            + (f"; failed: {failures}" if failures else ""))


def test_criterion_9_special_functions():
    """chi2_cdf, Mills asymptote, and Phi spot values at 1e-10."""
    checks = []
    checks.append(
        ("chi2_cdf(2,2) = 1 - exp(-1)", abs(chi2_cdf(2.0, 2) - (1.0 - np.exp(-1.0))) < 1e-10)
    )
    m30 = mills(-30.0)
    checks.append((f"mills(-30) = {m30:.4f} in [29.9, 30.1]", 29.9 <= m30 <= 30.1))
    # quadrature-frozen Phi values
    phi_table = {
        1.0: 0.841344746068543,
        2.0: 0.977249868051821,
        3.0: 0.998650101968370,
        -1.0: 0.158655253931457,
        -2.0: 0.022750131948179,
        -3.0: 0.001349898031630,
    }
    for x, expected in phi_table.items():
        _, Phi = normal_pdf_cdf(x)
        checks.append((f"Phi({x:+.0f})", abs(Phi - expected) < 1e-10))
    failed = [msg for msg, ok in checks if not ok]
    _report(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} spot checks"
            + (f"; failed: {failed}" if failed else ""))


def test_criterion_10_single_fit_performance():
    """One 90-subject, pm=12 fit (standard errors included) converges in < 5 s."""
    data = simulate_subjects(
        default_layout(30), default_true_theta(Scenario.ERROR_SN), RngStream(11, 0)
    )
    t0 = time.time()
    res = fit(data, Scenario.ERROR_SN)
    elapsed = time.time() - t0
    ok = res.converged and elapsed < 5.0
    _report(10, ok, f"converged={res.converged} in {res.iterations} iterations, {elapsed:.2f}s (<5s)")
