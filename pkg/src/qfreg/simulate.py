"""Sampling from the model and Monte-Carlo checks of its sampling laws.

Random numbers come from numpy's Philox counter-based generator.  Every
replication ``r`` of a run with seed ``s`` draws from its own stream
``SeedSequence(s, spawn_key=(r,))``, so a replication's data do not depend
on how many others are run or in what order.  Each variate consumes exactly
one 53-bit uniform: normals by inverse CDF, exponentials by inversion.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core
from .density import ResidualDensity
from .encoding import GaussianQuantile
from .errors import DomainError, InsufficientDataError
from .qlm import (QlmFit, QuantilePairDataset, _estimate, _interval_bounds, _standard_errors,
                  pivot_gamma, pivot_pareto)
from .quadrature import panel_nodes
from .special import ChiSquare, GammaDist, ShiftedExp, StudentT

__all__ = [
    "RNG_ALGORITHM",
    "QneParams",
    "TrueModel",
    "CheckResult",
    "ValidationReport",
    "sample_qne",
    "sample_model",
    "sample_responses",
    "ks_statistic",
    "kolmogorov_sf",
    "mc_estimator_check",
    "mc_model_check",
    "chebyshev_check",
    "lemma_b1_density",
    "min_mean_transform_density",
    "lemma_b1_check",
    "MIN_REPS",
]

RNG_ALGORITHM = "numpy.Philox4x64-10; SeedSequence(seed, spawn_key=(rep,)); u=(k+0.5)/2^53"
MIN_REPS = 1000
LEVEL = 0.01  # significance level of every goodness-of-fit check


def _generator(seed: int, rep: int = 0) -> np.random.Generator:
    if int(seed) != seed or seed < 0:
        raise DomainError(f"seed must be a nonnegative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(rep),))))


def _uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Open-interval uniforms on the 2^-53 lattice midpoints."""
    k = gen.integers(0, 2**53, size=shape, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) * 2.0**-53


def _normal(u, sd):
    return sd * _core.norm_ppf(u)


def _exponential(u, scale):
    return -scale * np.log1p(-u)


@dataclass(frozen=True)
class QneParams:
    """Location normal, scale shifted exponential: ``N(mu, sigma2)`` and ``delta + Exp(beta)``."""

    mu: float
    sigma2: float
    beta: float
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.sigma2 > 0 and self.beta > 0 and self.delta >= 0):
            raise DomainError(f"invalid QNE parameters {self!r}")


@dataclass(frozen=True)
class TrueModel:
    beta0: float
    beta1: float
    beta2: float
    sigma2: float
    beta: float
    design: tuple[GaussianQuantile, ...]

    def __post_init__(self):
        object.__setattr__(self, "design", tuple(self.design))
        if not (self.beta2 > 0 and self.sigma2 > 0 and self.beta > 0):
            raise DomainError("beta2, sigma2 and beta must be positive")
        if len(self.design) < 3:
            raise InsufficientDataError("the design needs at least 3 observations")
        if any(not q.sigma > 0 for q in self.design):
            raise DomainError("design sigmas must be positive")

    @classmethod
    def from_fit(cls, f: QlmFit) -> "TrueModel":
        """Truth equal to the point estimates of ``f`` on its own design."""
        design = tuple(GaussianQuantile(m, s) for m, s in zip(f.mu_x, f.sigma_x))
        return cls(f.beta0_hat, f.beta1_hat, f.beta2_hat, f.sigma2_hat, f.beta_hat, design)

    @property
    def n(self) -> int:
        return len(self.design)

    def design_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([q.mu for q in self.design]), np.array([q.sigma for q in self.design]))

    def params(self) -> dict[str, float]:
        return {"beta0": self.beta0, "beta1": self.beta1, "beta2": self.beta2,
                "sigma2": self.sigma2, "beta": self.beta}


def sample_qne(params: QneParams, count: int, seed: int) -> np.ndarray:
    """``count`` iid pairs ``(mu_E, sigma_E)`` as a ``(count, 2)`` array."""
    if int(count) != count or count < 1:
        raise DomainError(f"count must be a positive integer, got {count!r}")
    u = _uniforms(_generator(seed), (int(count), 2))
    out = np.empty_like(u)
    out[:, 0] = params.mu + _normal(u[:, 0], math.sqrt(params.sigma2))
    out[:, 1] = params.delta + _exponential(u[:, 1], params.beta)
    return out


def sample_responses(truth: TrueModel, reps: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Response parameters ``(mu_y, sigma_y)`` of shape ``(reps, n)``.

    Row ``r`` is identical to ``sample_model(truth, seed, rep=r)``.
    """
    mu_x, sigma_x = truth.design_arrays()
    n = truth.n
    u = np.empty((reps, n, 2))
    for r in range(reps):
        u[r] = _uniforms(_generator(seed, r), (n, 2))
    mu_y = truth.beta0 + truth.beta1 * mu_x + _normal(u[..., 0], math.sqrt(truth.sigma2))
    sigma_y = truth.beta2 * sigma_x + _exponential(u[..., 1], truth.beta)
    return mu_y, sigma_y


def sample_model(truth: TrueModel, seed: int, rep: int = 0) -> QuantilePairDataset:
    mu_x, sigma_x = truth.design_arrays()
    n = truth.n
    u = _uniforms(_generator(seed, rep), (n, 2))
    mu_y = truth.beta0 + truth.beta1 * mu_x + _normal(u[:, 0], math.sqrt(truth.sigma2))
    sigma_y = truth.beta2 * sigma_x + _exponential(u[:, 1], truth.beta)
    return QuantilePairDataset.from_arrays(mu_x, sigma_x, mu_y, sigma_y)


# -- goodness of fit -------------------------------------------------------------


def ks_statistic(sample, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance; ``cdf`` maps a sorted array to probabilities."""
    x = np.sort(np.asarray(sample, dtype=float))
    m = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def kolmogorov_sf(x: float) -> float:
    """``P(K > x)`` for the limiting Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    if x < 0.3:
        # the alternating series converges slowly here; use the theta-dual form
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x)) for k in range(1, 8))
        return 1.0 - math.sqrt(2 * math.pi) / x * s
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1) ** (k - 1) * math.exp(-2.0 * k * k * x * x)
        total += term
        if abs(term) < 1e-17:
            break
    return min(max(total, 0.0), 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    statistic: float
    p_value: float | None = None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ValidationReport:
    algorithm: str
    seed: int
    reps: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "reps": self.reps,
            "passed": self.passed,
            "checks": [asdict(c) for c in sorted(self.checks, key=lambda c: c.name)],
        }


def _vector_cdf(dist):
    return lambda x: np.array([dist.cdf(float(v)) for v in x])


def _ks_check(name: str, sample, cdf, **detail) -> CheckResult:
    d = ks_statistic(sample, cdf)
    p = kolmogorov_sf(math.sqrt(np.size(sample)) * d)
    return CheckResult(name, p >= LEVEL, d, p, detail)


def _combine(name: str, parts: list[CheckResult]) -> CheckResult:
    """One check that passes when all of its parts do."""
    worst = min(parts, key=lambda c: c.p_value if c.p_value is not None else 1.0)
    return CheckResult(name, all(c.passed for c in parts), worst.statistic, worst.p_value,
                       {c.name: {"statistic": c.statistic, "p_value": c.p_value, "passed": c.passed,
                                 **c.detail} for c in parts})


def _check_reps(reps: int):
    if int(reps) != reps or reps < MIN_REPS:
        raise InsufficientDataError(f"need at least {MIN_REPS} replications, got {reps!r}")


def mc_estimator_check(truth: TrueModel, reps: int, seed: int, alpha: float = 0.05) -> ValidationReport:
    """Compare the simulated laws of the estimators with their exact forms.

    Checks ``a``-``f`` are KS tests at the 1% level, ``g`` is interval
    coverage within 3 binomial sd of ``1 - alpha`` and ``h`` is bias within
    4 Monte-Carlo standard errors.
    """
    _check_reps(reps)
    mu_x, sigma_x = truth.design_arrays()
    n = truth.n
    mu_y, sigma_y = sample_responses(truth, int(reps), seed)
    e = _estimate(mu_x, sigma_x, mu_y, sigma_y)
    se = _standard_errors(e)
    sx = float(e["sx"])
    p = truth.params()
    checks = []

    checks.append(_ks_check("a_sigma2_ml_chisq", n * e["sigma2_ml"] / p["sigma2"],
                            _vector_cdf(ChiSquare(n - 2.0)), law=f"ChiSquare({n - 2})"))
    checks.append(_ks_check("b_beta2_ml_shifted_exp", e["beta2_ml"],
                            _vector_cdf(ShiftedExp(p["beta"] / (n * sx), p["beta2"])),
                            law="ShiftedExp(beta/(n sigma_bar), beta2)"))
    checks.append(_ks_check("c_beta_ml_gamma", e["beta_ml"], _vector_cdf(GammaDist(n - 1.0, p["beta"] / n)),
                            law="Gamma(n-1, beta/n)"))
    checks.append(_ks_check("d_beta_pivot_gamma", e["beta"] / p["beta"], _vector_cdf(pivot_gamma(n)),
                            law="Gamma(n-1, 1/(n-1))"))
    pivot = (e["beta2"] - p["beta2"]) / e["beta"] + 1.0 / (n * sx)
    checks.append(_ks_check("e_beta2_pivot_pareto", pivot, _vector_cdf(pivot_pareto(n, sx)),
                            law="ParetoII(n-1, (1-1/n)/sigma_bar)"))
    t = _vector_cdf(StudentT(n - 2.0))
    checks.append(_combine("f_studentized_t", [
        _ks_check("beta0", (e["beta0"] - p["beta0"]) / se["beta0"], t),
        _ks_check("beta1", (e["beta1"] - p["beta1"]) / se["beta1"], t),
    ]))

    bounds = _interval_bounds(e, alpha)
    target = 1.0 - alpha
    band = 3.0 * math.sqrt(alpha * (1 - alpha) / reps)
    cover = {}
    for k, (lo, hi) in bounds.items():
        rate = float(np.mean((lo <= p[k]) & (p[k] <= hi)))
        cover[k] = {"coverage": rate, "passed": abs(rate - target) <= band}
    worst = max(abs(v["coverage"] - target) for v in cover.values())
    checks.append(CheckResult("g_interval_coverage", all(v["passed"] for v in cover.values()), worst, None,
                              {"target": target, "band": band, **cover}))

    bias = {}
    for k in ("beta0", "beta1", "beta2", "sigma2", "beta"):
        err = e[k] - p[k]
        b, mcse = float(err.mean()), float(err.std(ddof=1) / math.sqrt(reps))
        bias[k] = {"bias": b, "mc_se": mcse, "z": b / mcse, "passed": abs(b) <= 4.0 * mcse}
    worst = max(abs(v["z"]) for v in bias.values())
    checks.append(CheckResult("h_unbiasedness", all(v["passed"] for v in bias.values()), worst, None, bias))
    return ValidationReport(RNG_ALGORITHM, int(seed), int(reps), tuple(checks))


def mc_model_check(truth: TrueModel, reps: int, seed: int, index: int = 0) -> ValidationReport:
    """Marginal laws of one observation and of its residual pair.

    ``index`` is 0-based.  The residual law uses the true parameters.
    """
    _check_reps(reps)
    mu_x, sigma_x = truth.design_arrays()
    n = truth.n
    if not 0 <= index < n:
        raise DomainError(f"index {index} out of range for n = {n}")
    mu_y, sigma_y = sample_responses(truth, int(reps), seed)
    p = truth.params()
    checks = []
    loc = p["beta0"] + p["beta1"] * mu_x[index]
    sd = math.sqrt(p["sigma2"])
    checks.append(_ks_check("model_mu_y_normal", mu_y[:, index],
                            lambda x: _core.norm_cdf((x - loc) / sd), index=index))
    checks.append(_ks_check("model_sigma_y_shifted_exp", sigma_y[:, index],
                            _vector_cdf(ShiftedExp(p["beta"], p["beta2"] * sigma_x[index])), index=index))
    r = float(np.corrcoef(mu_y[:, index], sigma_y[:, index])[0, 1])
    bound = 4.0 / math.sqrt(reps)
    checks.append(CheckResult("model_independence", abs(r) <= bound, r, None, {"bound": bound, "index": index}))

    e = _estimate(mu_x, sigma_x, mu_y, sigma_y)
    mu_e = mu_y[:, index] - e["beta0"] - e["beta1"] * mu_x[index]
    sigma_e = sigma_y[:, index] - e["beta2"] * sigma_x[index]
    law = ResidualDensity.from_design(n, p["sigma2"], p["beta"], mu_x, sigma_x, index)
    res_sd = math.sqrt(law.s_var)
    checks.append(_combine("residual_law", [
        _ks_check("mu_e", mu_e, lambda x: _core.norm_cdf(x / res_sd)),
        _ks_check("sigma_e", sigma_e, law.t_cdf),
    ]))
    return ValidationReport(RNG_ALGORITHM, int(seed), int(reps), tuple(checks))


def chebyshev_check(truth: TrueModel, eps: float, reps: int, seed: int) -> CheckResult:
    """Empirical ``P(beta2_hat < beta2 - eps)`` against the variance bound."""
    _check_reps(reps)
    if not eps > 0:
        raise DomainError("eps must be positive")
    mu_x, sigma_x = truth.design_arrays()
    n = truth.n
    mu_y, sigma_y = sample_responses(truth, int(reps), seed)
    e = _estimate(mu_x, sigma_x, mu_y, sigma_y)
    freq = float(np.mean(e["beta2"] < truth.beta2 - eps))
    bound = truth.beta**2 / (n * (n - 1.0) * eps**2 * float(e["sx"]) ** 2)
    capped = min(bound, 1.0)
    slack = 3.0 * math.sqrt(capped * (1.0 - capped) / reps)
    return CheckResult("chebyshev_beta2", freq <= bound + slack, freq, None,
                       {"bound": bound, "slack": slack, "eps": eps})


# -- minimum and mean of weighted exponentials ------------------------------------------


def _thetas(thetas) -> np.ndarray:
    th = np.asarray(thetas, dtype=float)
    if th.ndim != 1 or th.size < 2:
        raise DomainError("need at least two thetas")
    if np.any(~(th > 0)) or not np.all(np.isfinite(th)):
        raise DomainError("thetas must be positive and finite")
    return th


def lemma_b1_density(thetas, x, y):
    """Joint density of ``(min theta_i X_i, mean X_i)`` for iid ``Exp(1)`` draws ``X_i``."""
    th = _thetas(thetas)
    n = th.size
    rate = float(np.sum(1.0 / th))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gap = n * y - rate * x
    ok = (x > 0) & (gap > 0)
    safe = np.where(ok, gap, 1.0)
    logf = math.log(n * rate) + (n - 2.0) * np.log(safe) - n * np.where(ok, y, 0.0) - math.lgamma(n - 1.0)
    out = np.where(ok, np.exp(logf), 0.0)
    return out if out.ndim else float(out)


def min_mean_transform_density(thetas, A, u, v):
    """Density of ``A @ (min theta_i X_i, mean X_i)`` for an invertible 2x2 ``A``."""
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2):
        raise DomainError("A must be 2x2")
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if det == 0 or not math.isfinite(det):
        raise DomainError("A must be invertible")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    x = (A[1, 1] * u - A[0, 1] * v) / det
    y = (-A[1, 0] * u + A[0, 0] * v) / det
    return lemma_b1_density(thetas, x, y) / abs(det)


def _sample_min_mean(th: np.ndarray, draws: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    u = _uniforms(_generator(seed), (draws, th.size))
    x = _exponential(u, 1.0)
    return np.min(th * x, axis=1), np.mean(x, axis=1)


def _chisq_gof(counts: np.ndarray, probs: np.ndarray, name: str, **detail) -> CheckResult:
    total = counts.sum()
    expected = total * probs
    stat = float(np.sum((counts - expected) ** 2 / expected))
    df = counts.size - 1
    p = ChiSquare(df).sf(stat)
    return CheckResult(name, p >= LEVEL, stat, p,
                       {"df": df, "mass_error": float(abs(probs.sum() - 1.0)), **detail})


def _cell_masses(density, u_edges, v_edges, order=24) -> np.ndarray:
    """Gauss-Legendre mass of ``density(u, v)`` on every rectangle of the grid."""
    un, uw = panel_nodes(u_edges, order)
    vn, vw = panel_nodes(v_edges, order)
    vals = density(un[:, None], vn[None, :]) * uw[:, None] * vw[None, :]
    nu, nv = len(u_edges) - 1, len(v_edges) - 1
    return vals.reshape(nu, order, nv, order).sum(axis=(1, 3))


def _decile_edges(dist, bins: int) -> np.ndarray:
    return np.array([0.0] + [dist.quantile(k / bins) for k in range(1, bins)]
                    + [dist.quantile(1.0 - 1e-14)])


def lemma_b1_check(thetas, draws: int = 100_000, seed: int = 0, bins: int = 10) -> list[CheckResult]:
    """Chi-square goodness of fit of simulated ``(min, mean)`` pairs.

    The first test bins the pairs in the coordinates ``r = rate * min / (n * mean)``
    and ``mean``, where the support becomes a strip; cell masses are Gauss-Legendre
    integrals of the joint density times the Jacobian.  The second pushes the pairs
    through ``A = [[-rate, n], [rate, 0]]`` and bins on a rectangle grid in the
    transformed plane using the transformed density.
    """
    th = _thetas(thetas)
    if draws < 100 * bins * bins:
        raise InsufficientDataError(f"need at least {100 * bins * bins} draws for {bins}x{bins} bins")
    n = th.size
    rate = float(np.sum(1.0 / th))
    m, y = _sample_min_mean(th, int(draws), seed)

    mean_law = GammaDist(float(n), 1.0 / n)
    y_edges = _decile_edges(mean_law, bins)
    r_edges = np.linspace(0.0, 1.0, bins + 1)

    def in_ry(r, yy):
        return lemma_b1_density(th, r * n * yy / rate, yy) * n * yy / rate

    probs = _cell_masses(in_ry, r_edges, y_edges)
    r = rate * m / (n * y)
    counts, _, _ = np.histogram2d(r, np.minimum(y, y_edges[-1]), bins=[r_edges, y_edges])
    first = _chisq_gof(counts.ravel(), probs.ravel(), "lemma_b1", thetas=th.tolist(), draws=int(draws))

    A = np.array([[-rate, float(n)], [rate, 0.0]])
    uu = A[0, 0] * m + A[0, 1] * y
    vv = A[1, 0] * m + A[1, 1] * y
    # the transform separates a Gamma(n-1) and an Exp(1) coordinate; their
    # deciles only place the bins, the cell masses come from the density
    u_edges = _decile_edges(GammaDist(n - 1.0), bins)
    v_edges = _decile_edges(GammaDist(1.0), bins)
    uu = np.minimum(uu, u_edges[-1])
    vv = np.minimum(vv, v_edges[-1])
    probs = _cell_masses(lambda a, b: min_mean_transform_density(th, A, a, b), u_edges, v_edges)
    counts, _, _ = np.histogram2d(uu, vv, bins=[u_edges, v_edges])
    second = _chisq_gof(counts.ravel(), probs.ravel(), "min_mean_transform", thetas=th.tolist(),
                        transform=A.tolist(), draws=int(draws))
    return [first, second]
