import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qfreg import DomainError, GaussianQuantile, HUHistogram, empirical_quantile, project_d1
from qfreg.encoding import projection_objective, psi_coefficients
from qfreg.special import gaussian_moment


def psi1_oracle(values, counts):
    """``int q(p) Phi^-1(p) dp`` via ``int_a^b Phi^-1 = phi(Phi^-1(a)) - phi(Phi^-1(b))``."""
    cum = np.cumsum(counts) / np.sum(counts)
    prev = np.concatenate([[0.0], cum[:-1]])
    dens = lambda p: 0.0 if p in (0.0, 1.0) else stats.norm.pdf(stats.norm.ppf(p))  # noqa: E731
    return math.fsum(v * (dens(a) - dens(b)) for v, a, b in zip(values, prev, cum))


def test_constant_sample():
    h = HUHistogram.from_pairs([5.0], [3])
    eq = empirical_quantile(h)
    assert eq.cum_props == (1.0,)
    assert eq(0.3) == 5.0 and eq(1.0) == 5.0
    psi = psi_coefficients(eq, 4)
    assert psi[0] == 5.0 and psi[1] == 0.0
    for j in range(2, 5):
        assert psi[j] == pytest.approx(5.0 * gaussian_moment(j), abs=1e-12)
    assert project_d1(eq) == GaussianQuantile(5.0, 0.0)


def test_two_point_sample():
    eq = empirical_quantile(HUHistogram.from_pairs([-1, 1], [1, 1]))
    assert eq(0.25) == -1 and eq(0.5) == -1 and eq(0.5000001) == 1
    psi0, psi1 = psi_coefficients(eq, 1)
    assert psi0 == pytest.approx(0.0, abs=1e-15)
    # 2 * int_{-inf}^0 |x| phi(x) dx
    assert psi1 == pytest.approx(2.0 / math.sqrt(2 * math.pi), abs=1e-14)


def test_inf_definition_at_step():
    eq = empirical_quantile(HUHistogram.from_pairs([1, 2, 3], [2, 1, 1]))
    assert eq.cum_props == (0.5, 0.75, 1.0)
    assert eq(0.6) == 2
    assert eq(0.5) == 1
    with pytest.raises(DomainError):
        eq(0.0)


def test_histogram_normalization():
    h = HUHistogram.from_pairs([3, 1, 3, 2, 7], [1, 2, 4, 0, 0])
    assert h.values == (1.0, 3.0) and h.counts == (2, 5)
    with pytest.raises(DomainError):
        HUHistogram.from_pairs([1, 2], [0, 0])
    with pytest.raises(DomainError):
        HUHistogram.from_pairs([1], [-1])
    with pytest.raises(DomainError):
        HUHistogram((2.0, 1.0), (1, 1))
    with pytest.raises(DomainError):
        HUHistogram.from_pairs([-1100], [1], validate_hu=True)
    HUHistogram.from_pairs([-1023, -200], [1, 1], validate_hu=True)


def test_gaussian_grid_recovers_parameters():
    N = 100_000
    p = (np.arange(N) + 0.5) / N
    vals = 10.0 + 2.0 * stats.norm.ppf(p)
    q = project_d1(empirical_quantile(HUHistogram.from_pairs(vals, np.ones(N, dtype=int))))
    assert q.mu == pytest.approx(10.0, abs=1e-2)
    assert q.sigma == pytest.approx(2.0, abs=1e-2)


hist = st.lists(st.tuples(st.integers(-1023, -200), st.integers(1, 50)), min_size=1, max_size=40)


def build(pairs):
    return HUHistogram.from_pairs([v for v, _ in pairs], [c for _, c in pairs])


@settings(max_examples=80, deadline=None)
@given(hist)
def test_psi0_is_mean_and_psi1_matches_oracle(pairs):
    h = build(pairs)
    psi0, psi1 = psi_coefficients(empirical_quantile(h), 1)
    assert psi0 == pytest.approx(h.mean(), abs=1e-9)
    assert psi1 == pytest.approx(psi1_oracle(h.values, h.counts), abs=1e-8)
    q = project_d1(empirical_quantile(h))
    assert q.sigma >= 0
    assert (q.sigma == 0) == (len(h.values) == 1)


@settings(max_examples=60, deadline=None)
@given(hist, st.floats(-300, 300), st.floats(0.1, 10))
def test_projection_equivariance(pairs, shift, k):
    h = build(pairs)
    base = project_d1(empirical_quantile(h))
    shifted = project_d1(empirical_quantile(HUHistogram.from_pairs([v + shift for v in h.values], h.counts)))
    scaled = project_d1(empirical_quantile(HUHistogram.from_pairs([v * k for v in h.values], h.counts)))
    assert shifted.mu == pytest.approx(base.mu + shift, abs=1e-9 * (1 + abs(base.mu)))
    assert shifted.sigma == pytest.approx(base.sigma, abs=1e-9 * (1 + abs(base.mu)))
    assert scaled.mu == pytest.approx(k * base.mu, abs=1e-9 * k * (1 + abs(base.mu)))
    assert scaled.sigma == pytest.approx(k * base.sigma, abs=1e-9 * k * (1 + abs(base.mu)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(1, 8)), min_size=1, max_size=15))
def test_grouped_equals_ungrouped(pairs):
    h = build(pairs)
    grouped = psi_coefficients(empirical_quantile(h), 3)
    # ungrouped: one atom per observation, each with mass 1/N
    atoms = [v for v, c in zip(h.values, h.counts) for _ in range(c)]
    N = len(atoms)
    from qfreg.special import truncated_gaussian_moment as phi
    for j in range(4):
        terms = [x * (phi(j, (l + 1) / N) - phi(j, l / N)) for l, x in enumerate(atoms)]
        assert grouped[j] == pytest.approx(math.fsum(terms), abs=1e-10 * (1 + max(abs(v) for v in atoms)))


def test_objective_zero_coefficients():
    assert projection_objective([0.0, 0.0], [1.0, 2.0], 1) == 0.0


def test_objective_minimized_at_closed_form():
    eq = empirical_quantile(HUHistogram.from_pairs([-800, -700, -650, -300], [5, 9, 3, 1]))
    psi = psi_coefficients(eq, 1)
    best = projection_objective(psi, psi, 1)
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = np.array(psi) + rng.normal(0, 5, 2)
        assert projection_objective(a, psi, 1) >= best


def test_objective_brute_force_degree_three():
    rng = np.random.default_rng(11)
    a = rng.normal(size=4)
    psi = rng.normal(size=4)
    # expand sum_{j,k} a_j a_k E[Z^{j+k}] - 2 sum_j a_j psi_j
    moments = [float(stats.norm.moment(m)) if m else 1.0 for m in range(7)]
    direct = sum(a[j] * a[k] * moments[j + k] for j in range(4) for k in range(4)) - 2 * np.dot(a, psi)
    assert projection_objective(a, psi, 3) == pytest.approx(direct, rel=1e-12)


def test_objective_dimension_checks():
    with pytest.raises(DomainError):
        projection_objective([1.0], [1.0, 2.0], 1)
    with pytest.raises(DomainError):
        projection_objective([1.0, 2.0], [1.0], 1)


def test_gaussian_quantile_evaluation():
    q = GaussianQuantile(-750.0, 120.0)
    assert q(0.5) == -750.0
    assert q(0.975) == pytest.approx(-750 + 120 * stats.norm.ppf(0.975), rel=1e-14)
    with pytest.raises(DomainError):
        GaussianQuantile(0.0, -1.0)
