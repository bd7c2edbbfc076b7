import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from qfreg import DomainError, GaussianQuantile, InferenceUnavailableError, density, qlm
from qfreg.density import MeanResponseDensity, ResidualDensity

mpmath.mp.dps = 30


# ---------------------------------------------------------------------------
# oracles written straight from the closed forms
# ---------------------------------------------------------------------------


def residual_t_oracle(f, i, t):
    """Mixture t-factor from scipy gamma laws, parameters recomputed from the fit."""
    n, beta = f.n, f.beta_hat
    sx, sbar = f.sigma_x[i], np.mean(f.sigma_x)
    w = sx / (n * sbar)
    nu2 = beta * sx / (n * (n - 1) * sbar)
    nu1 = beta + nu2
    theta = 1.0 / (1.0 / nu2 - 1.0 / nu1)
    t = np.asarray(t, dtype=float)
    mix = np.exp(-t / nu1) / nu1 * (theta / nu2) ** (n - 2) * stats.gamma.cdf(t, n - 2, scale=theta)
    return w * stats.gamma.pdf(t, n - 1, scale=nu2) + (1 - w) * mix


def leverage_variance_factor(f, i):
    """1 - h_ii from the hat matrix of the design [1, mu_x]."""
    X = np.column_stack([np.ones(f.n), f.mu_x])
    H = X @ np.linalg.solve(X.T @ X, X.T)
    return 1.0 - H[i, i]


def residual_oracle(f, i, s, t):
    g = stats.norm.pdf(s, 0.0, math.sqrt(f.sigma2_hat * leverage_variance_factor(f, i)))
    return g * residual_t_oracle(f, i, t)


def mean_response_t_oracle(f, a, t):
    """mpmath evaluation of the mean-response t factor (integer shape, real for any sign)."""
    n = f.n
    S = mpmath.mpf(np.mean(f.sigma_x))
    a = mpmath.mpf(a)
    beta = mpmath.mpf(f.beta_hat)
    tau = mpmath.mpf(t) - mpmath.mpf(f.beta2_hat) * a
    if tau <= 0:
        return 0.0
    lam = n * S / (beta * a)
    one_minus = 1 - S / a
    arg = n * one_minus / (1 - a / (n * S)) * tau / beta
    m = n - 1
    # regularized lower gamma through the Kummer series, valid for negative arg
    P = arg**m / mpmath.gamma(m + 1) * mpmath.hyp1f1(m, m + 1, -arg)
    val = lam * mpmath.exp(-lam * tau) / (mpmath.mpf(n) / m * one_minus) ** m * P
    return float(val)


def oracle_t_mass(h, lo, hi, panels=400):
    """scipy quad over geometric panels, so the narrow spike near the origin is resolved."""
    edges = np.concatenate([[lo], lo + np.geomspace((hi - lo) * 1e-8, hi - lo, panels)])
    return sum(integrate.quad(h, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]))


def mean_response_s_sd(f, mu):
    """Standard error of the fitted line at ``mu`` by the textbook OLS formula."""
    X = np.column_stack([np.ones(f.n), f.mu_x])
    x0 = np.array([1.0, mu])
    return math.sqrt(f.sigma2_hat * x0 @ np.linalg.solve(X.T @ X, x0))


NEW_SIGMAS = [20.0, 60.0, 100.0, 120.0, 200.0, 400.0, 1000.0, 2500.0]


@pytest.fixture(scope="module")
def sbar(lung_fit):
    return float(np.mean(lung_fit.sigma_x))


# ---------------------------------------------------------------------------
# residual density
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("i", [0, 8, 10, 12, 30, 43])
def test_residual_density_matches_closed_form(lung_fit, i):
    rd = ResidualDensity.from_fit(lung_fit, i)
    t = np.linspace(rd.t_upper * 1e-4, rd.t_upper * 0.6, 97)
    s = np.linspace(-3, 3, 97) * rd.s_sd
    np.testing.assert_allclose(rd.pdf(s, t), residual_oracle(lung_fit, i, s, t), rtol=1e-9, atol=1e-300)


def test_residual_s_variance_is_one_minus_leverage(lung_fit):
    for i in range(lung_fit.n):
        rd = ResidualDensity.from_fit(lung_fit, i)
        assert rd.s_var == pytest.approx(lung_fit.sigma2_hat * leverage_variance_factor(lung_fit, i), rel=1e-12)


def test_all_residual_densities_normalize(lung_fit):
    for i in range(lung_fit.n):
        rd = ResidualDensity.from_fit(lung_fit, i)
        assert rd.t_cdf(rd.t_upper)[0] == pytest.approx(1.0, abs=1e-12)
        grid = density.density_grid(rd)
        assert grid.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_patient_ten_grid_marginal_and_mode(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 9)
    grid = density.density_grid(rd)
    assert grid.total_mass() == pytest.approx(1.0, abs=1e-5)
    i, j = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    # argmax of the oracle t factor on a fine line
    t = np.linspace(1e-6, rd.t_upper, 200001)
    t_star = t[np.argmax(residual_t_oracle(lung_fit, 9, t))]
    assert rd.mode[0] == 0.0
    assert rd.mode[1] == pytest.approx(t_star, abs=2 * rd.t_upper / 200000)
    assert abs(grid.s_axis[i]) <= 0.5 * rd.s_sd
    assert abs(grid.t_axis[j] - t_star) <= 0.05 * t_star


@pytest.mark.parametrize("i", [0, 8, 21])
def test_residual_t_cdf_matches_quadrature_of_oracle(lung_fit, i):
    rd = ResidualDensity.from_fit(lung_fit, i)
    for q in (0.1, 0.3, 0.6, 0.9):
        t = q * rd.t_upper
        ref, _ = integrate.quad(lambda u: float(residual_t_oracle(lung_fit, i, u)), 0, t,
                                limit=400, epsabs=1e-13, epsrel=1e-12)
        assert rd.t_cdf(t)[0] == pytest.approx(ref, abs=1e-10)


def test_residual_density_symmetric_in_s(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 5)
    s = np.linspace(0, 4 * rd.s_sd, 50)
    t = np.full_like(s, rd.mode[1])
    np.testing.assert_array_equal(rd.pdf(s, t), rd.pdf(-s, t))


def test_residual_s_marginal_is_gaussian(lung_fit):
    # integrating t out leaves g(s) times the t mass, which must be 1
    rd = ResidualDensity.from_fit(lung_fit, 3)
    s = np.linspace(-5, 5, 41) * rd.s_sd
    t_mass = oracle_t_mass(lambda u: float(residual_t_oracle(lung_fit, 3, u)), 0.0, rd.t_upper)
    np.testing.assert_allclose(rd.s_factor(s) * t_mass, stats.norm.pdf(s, 0, rd.s_sd), rtol=1e-9)


def test_residual_rejects_degenerate_parameters():
    with pytest.raises(InferenceUnavailableError):
        ResidualDensity(10, 0.0, 1.0, 0.5, 1.0, 1.0)
    with pytest.raises(InferenceUnavailableError):
        ResidualDensity(10, 1.0, 0.0, 0.5, 1.0, 1.0)
    with pytest.raises(InferenceUnavailableError):
        ResidualDensity(10, 1.0, 1.0, 0.0, 1.0, 1.0)


def test_residual_index_out_of_range(lung_fit):
    with pytest.raises(DomainError):
        ResidualDensity.from_fit(lung_fit, lung_fit.n)


# ---------------------------------------------------------------------------
# mean-response density
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("a", NEW_SIGMAS)
def test_mean_response_t_factor_matches_mpmath(lung_fit, a):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, a))
    ts = md.t_lower + np.linspace(1e-3, 0.7, 25) * md.tau_upper
    got = md.t_factor(ts)
    ref = np.array([mean_response_t_oracle(lung_fit, a, t) for t in ts])
    np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-300)


@pytest.mark.parametrize("mu", [-950.0, -750.0, -500.0])
def test_mean_response_s_law_is_ols_prediction(lung_fit, mu):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(mu, 120.0))
    assert md.s_center == pytest.approx(lung_fit.beta0_hat + lung_fit.beta1_hat * mu, rel=1e-13)
    assert md.s_sd == pytest.approx(mean_response_s_sd(lung_fit, mu), rel=1e-10)


@pytest.mark.parametrize("a", NEW_SIGMAS)
def test_mean_response_density_normalizes(lung_fit, a):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, a))
    assert density.density_grid(md).total_mass() == pytest.approx(1.0, abs=1e-8)
    ref, _ = integrate.quad(lambda t: mean_response_t_oracle(lung_fit, a, t), md.t_lower, md.t_upper,
                            points=[md.mode[1]], limit=400, epsabs=1e-12)
    assert ref == pytest.approx(1.0, abs=1e-8)


def test_mean_response_continuous_through_c_zero(lung_fit, sbar):
    # the closed form is 0/0 at a = mean(sigma_x); the kernel must pass through smoothly
    mid = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, sbar))
    assert mid.c == 0.0
    assert density.density_grid(mid).total_mass() == pytest.approx(1.0, abs=1e-8)
    for eps in (1e-7, -1e-7):
        near = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, sbar * (1 + eps)))
        tau = np.linspace(0.05, 0.8, 9) * mid.tau_upper
        np.testing.assert_allclose(near._h(tau), mid._h(tau), rtol=1e-5)


def test_mean_response_restriction(lung_fit, sbar):
    n = lung_fit.n
    for a in (0.0, -1.0, n * sbar, n * sbar * 1.01):
        with pytest.raises(DomainError):
            MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, a) if a > 0
                                         else _raw_quantile(-750.0, a))


def _raw_quantile(mu, sigma):
    q = object.__new__(GaussianQuantile)
    object.__setattr__(q, "mu", mu)
    object.__setattr__(q, "sigma", sigma)
    return q


def test_mean_response_support_starts_at_beta2_a(lung_fit):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, 120.0))
    assert md.t_lower == pytest.approx(lung_fit.beta2_hat * 120.0)
    assert md.pdf(md.s_center, md.t_lower - 1.0) == 0.0


# ---------------------------------------------------------------------------
# p-values and regions
# ---------------------------------------------------------------------------


def brute_force_pvalue(dens, box, point, ns=2001, nt=6001):
    """Mass of ``{f <= f(point)}`` by a midpoint grid over the box."""
    s0, s1, t0, t1 = box
    s = s0 + (np.arange(ns) + 0.5) * (s1 - s0) / ns
    t = t0 + (np.arange(nt) + 0.5) * (t1 - t0) / nt
    S, T = np.meshgrid(s, t, indexing="ij")
    F = dens(S, T)
    f0 = dens(np.array(point[0]), np.array(point[1]))
    cell = (s1 - s0) / ns * (t1 - t0) / nt
    return float(F[F <= f0].sum() * cell)


def test_patient_nine_pvalue_matches_brute_force(lung_fit):
    i = 8
    obs = qlm.residuals(lung_fit)[i]
    rd = ResidualDensity.from_fit(lung_fit, i)
    p = density.residual_pvalue(lung_fit, i, obs)
    ref = brute_force_pvalue(lambda s, t: residual_oracle(lung_fit, i, s, t), rd.box, (obs.mu_e, obs.sigma_e))
    assert p == pytest.approx(ref, abs=2e-4)


def test_mean_response_pvalue_matches_brute_force(lung_fit):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, 60.0))
    point = (md.s_center + 2.2 * md.s_sd, md.mode[1] * 1.02)

    def dens(s, t):
        g = stats.norm.pdf(s, md.s_center, mean_response_s_sd(lung_fit, -750.0))
        h = np.vectorize(lambda u: mean_response_t_oracle(lung_fit, 60.0, u))(t[0] if t.ndim == 2 else t)
        return g * (h[None, :] if t.ndim == 2 else h)

    ref = brute_force_pvalue(dens, md.box, point, ns=1501, nt=1501)
    assert density.density_pvalue(md, point) == pytest.approx(ref, abs=5e-4)


def test_pvalue_at_mode_is_one(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 0)
    assert density.density_pvalue(rd, rd.mode) == pytest.approx(1.0, abs=1e-9)


def test_pvalues_decrease_along_rays(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 2)
    s0, t0 = rd.mode
    for ds, dt in [(1, 0), (0, 1), (-1, 0.5), (1, 0.3)]:
        ps = [density.density_pvalue(rd, (s0 + k * ds * rd.s_sd, t0 + k * dt * rd.s_sd)) for k in
              (0.2, 0.6, 1.0, 1.5, 2.0)]
        assert all(a > b for a, b in zip(ps, ps[1:]))


def test_level_set_mass_matches_region_integral(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 10)
    c = 0.3 * rd.max_density
    via_1d = density.level_set_mass(rd, c)
    via_2d = density.integrate_region(rd, lambda s, t: rd.pdf(s, t) > c, tol=1e-6)
    assert via_1d == pytest.approx(via_2d, abs=1e-5)


def test_integrate_region_simple_regions(lung_fit):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, 120.0))
    assert density.integrate_region(md, lambda s, t: np.ones_like(s, dtype=bool)) == pytest.approx(1.0, abs=1e-8)
    assert density.integrate_region(md, lambda s, t: s > md.s_center) == pytest.approx(0.5, abs=1e-4)
    t_med = md.mode[1]
    upper = density.integrate_region(md, lambda s, t: t > t_med, tol=1e-7)
    ref, _ = integrate.quad(lambda t: mean_response_t_oracle(lung_fit, 120.0, t), t_med, md.t_upper,
                            limit=400, epsabs=1e-12)
    assert upper == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.3])
def test_hdr_threshold_has_requested_mass(lung_fit, alpha):
    md = MeanResponseDensity.from_fit(lung_fit, GaussianQuantile(-750.0, 120.0))
    L = density.hdr_threshold(md, alpha)
    mass = density.integrate_region(md, lambda s, t: md.pdf(s, t) >= L, tol=1e-6)
    assert mass == pytest.approx(1 - alpha, abs=2e-5)


def test_hdr_threshold_monotone_in_alpha(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 0)
    levels = [density.hdr_threshold(rd, a) for a in (0.01, 0.05, 0.1, 0.2, 0.5)]
    assert all(a < b for a, b in zip(levels, levels[1:]))
    assert levels[-1] < rd.max_density


def test_region_membership_consistent_with_pvalue(lung_fit):
    for i in (8, 10, 12):
        rd = ResidualDensity.from_fit(lung_fit, i)
        obs = qlm.residuals(lung_fit)[i]
        p = density.residual_pvalue(lung_fit, i, obs)
        L = density.hdr_threshold(rd, 0.05)
        assert density.region_membership(rd, L, (obs.mu_e, obs.sigma_e)) == (p > 0.05)


def test_region_membership_outside_box_is_false(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 0)
    L = density.hdr_threshold(rd, 0.05)
    assert not density.region_membership(rd, L, (0.0, -1.0))
    with pytest.raises(DomainError):
        density.region_membership(rd, 0.0, rd.mode)


def test_hdr_rejects_bad_alpha(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 0)
    for a in (0.0, 1.0, -0.5, math.nan):
        with pytest.raises(DomainError):
            density.hdr_threshold(rd, a)


def test_noiseless_fit_pvalue_convention():
    mu_x = np.array([0.0, 1.0, 2.0, 3.0, 5.0])
    sx = np.array([1.0, 2.0, 1.5, 3.0, 2.5])
    data = qlm.QuantilePairDataset.from_arrays(mu_x, sx, 2 + 3 * mu_x, 4 * sx)
    f = qlm.fit(data)
    r = qlm.residuals(f)
    assert density.residual_pvalue(f, 0, r[0]) == 1.0
    assert density.residual_pvalue(f, 0, qlm.ResidualPair(1.0, 0.0)) == 0.0
    with pytest.raises(InferenceUnavailableError):
        ResidualDensity.from_fit(f, 0)


def test_hdr_threshold_tends_to_max_density(lung_fit):
    rd = ResidualDensity.from_fit(lung_fit, 9)
    gaps = [rd.max_density - density.hdr_threshold(rd, a) for a in (0.9, 0.999, 0.999999)]
    assert all(g > 0 for g in gaps) and gaps[0] > gaps[1] > gaps[2]
    assert gaps[-1] / rd.max_density < 1e-4


def test_residual_t_marginal_matches_simulation_at_1e5(lung_fit):
    from qfreg import simulate

    # sigma_e from refits of simulated data against the exact law at the true parameters
    truth = simulate.TrueModel.from_fit(lung_fit)
    rep = simulate.mc_model_check(truth, 100_000, seed=5, index=9)
    parts = rep.check("residual_law").detail
    crit = 1.628 / math.sqrt(100_000)  # asymptotic 1% critical value
    assert parts["sigma_e"]["statistic"] < crit
    assert parts["mu_e"]["statistic"] < crit
