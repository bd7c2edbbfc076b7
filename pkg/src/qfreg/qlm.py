"""Linear regression of Gaussian quantile functions on Gaussian quantile functions.

Each observation is a pair of quantile functions ``q_x = mu_x + sigma_x Phi^-1``
(fixed design) and ``Q_Y = mu_y + sigma_y Phi^-1`` (random response), with

    mu_y    = beta0 + beta1 * mu_x + N(0, sigma2)
    sigma_y = beta2 * sigma_x + Exp(beta)

The location part is ordinary least squares.  The scale part is estimated
by a minimum ratio, which has shifted-exponential and gamma laws, so every
interval below is exact in finite samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import GaussianQuantile
from .errors import (
    ConsistencyError,
    DegenerateDesignError,
    DegeneratePredictionError,
    DomainError,
    InsufficientDataError,
)
from .special import ChiSquare, GammaDist, ParetoII, StudentT

__all__ = [
    "QuantilePairDataset",
    "QlmFit",
    "ResidualPair",
    "Interval",
    "TestResult",
    "fit",
    "confidence_intervals",
    "summary_tests",
    "residuals",
    "predict_mean_response",
    "PARAMETERS",
]

PARAMETERS = ("beta0", "beta1", "beta2", "sigma2", "beta")


@dataclass(frozen=True)
class QuantilePairDataset:
    x: tuple[GaussianQuantile, ...]
    y: tuple[GaussianQuantile, ...]
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "y", tuple(self.y))
        if len(self.x) != len(self.y):
            raise ConsistencyError("x and y have different lengths")
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
            if len(self.ids) != len(self.x):
                raise ConsistencyError("ids and observations differ in length")

    @classmethod
    def from_arrays(cls, mu_x, sigma_x, mu_y, sigma_y, ids=None) -> "QuantilePairDataset":
        x = tuple(GaussianQuantile(float(m), float(s)) for m, s in zip(mu_x, sigma_x, strict=True))
        y = tuple(GaussianQuantile(float(m), float(s)) for m, s in zip(mu_y, sigma_y, strict=True))
        return cls(x, y, ids)

    @property
    def n(self) -> int:
        return len(self.x)

    def arrays(self):
        """``(mu_x, sigma_x, mu_y, sigma_y)`` as float arrays."""
        return (
            np.array([q.mu for q in self.x]),
            np.array([q.sigma for q in self.x]),
            np.array([q.mu for q in self.y]),
            np.array([q.sigma for q in self.y]),
        )


@dataclass(frozen=True)
class ResidualPair:
    mu_e: float
    sigma_e: float


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __contains__(self, v: float) -> bool:
        return self.lower <= v <= self.upper


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    null: str


@dataclass(frozen=True)
class QlmFit:
    n: int
    mu_qx_bar: float
    sigma_qx_bar: float
    mu_qy_bar: float
    sigma_qy_bar: float
    w: float
    beta0_hat: float
    beta1_hat: float
    sigma2_ml: float
    sigma2_hat: float
    beta2_ml: float
    beta2_hat: float
    beta_ml: float
    beta_hat: float
    se_beta0: float
    se_beta1: float
    se_beta2: float
    se_sigma2: float
    se_beta: float
    argmin_ratio: int
    mu_x: tuple[float, ...] = field(repr=False)
    sigma_x: tuple[float, ...] = field(repr=False)
    mu_y: tuple[float, ...] = field(repr=False)
    sigma_y: tuple[float, ...] = field(repr=False)
    warnings: tuple[str, ...] = ()

    def estimates(self) -> dict[str, float]:
        return {
            "beta0": self.beta0_hat,
            "beta1": self.beta1_hat,
            "beta2": self.beta2_hat,
            "sigma2": self.sigma2_hat,
            "beta": self.beta_hat,
        }

    def standard_errors(self) -> dict[str, float]:
        return {
            "beta0": self.se_beta0,
            "beta1": self.se_beta1,
            "beta2": self.se_beta2,
            "sigma2": self.se_sigma2,
            "beta": self.se_beta,
        }


def _estimate(mu_x, sigma_x, mu_y, sigma_y) -> dict[str, np.ndarray]:
    """Point estimates along the last axis.

    ``mu_y`` and ``sigma_y`` may carry leading replication axes; the design
    arrays are 1-D.  Shared by :func:`fit` and the Monte-Carlo harness.
    """
    n = mu_x.shape[-1]
    mx = mu_x.mean()
    dx = mu_x - mx
    w = np.mean(dx * dx)
    sx = sigma_x.mean()
    my = mu_y.mean(axis=-1)
    sy = sigma_y.mean(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):  # w = 0 is rejected by the caller
        b1 = np.mean((mu_y - my[..., None]) * dx, axis=-1) / w
    b0 = my - b1 * mx
    resid = mu_y - b0[..., None] - b1[..., None] * mu_x
    s2_ml = np.mean(resid * resid, axis=-1)
    b2_ml = np.min(sigma_y / sigma_x, axis=-1)
    beta_ml = np.maximum(sy - b2_ml * sx, 0.0)
    return {
        "n": n, "mx": mx, "sx": sx, "w": w, "my": my, "sy": sy,
        "beta0": b0, "beta1": b1,
        "sigma2_ml": s2_ml, "sigma2": n / (n - 2.0) * s2_ml,
        "beta2_ml": b2_ml, "beta2": n / (n - 1.0) * b2_ml - sy / ((n - 1.0) * sx),
        "beta_ml": beta_ml, "beta": n / (n - 1.0) * beta_ml,
    }


def _validate_design(mu_x, sigma_x, sigma_y):
    n = mu_x.size
    if n < 3:
        raise InsufficientDataError(f"need at least 3 observations, got {n}")
    if np.any(sigma_x <= 0):
        raise DomainError(f"explanatory sigma must be positive (row {int(np.argmax(sigma_x <= 0)) + 1})")
    if np.any(sigma_y <= 0):
        raise DomainError(f"response sigma must be positive (row {int(np.argmax(sigma_y <= 0)) + 1})")
    if not np.all(np.isfinite(mu_x)):
        raise DomainError("explanatory means must be finite")


def fit(data: QuantilePairDataset) -> QlmFit:
    mu_x, sigma_x, mu_y, sigma_y = data.arrays()
    _validate_design(mu_x, sigma_x, sigma_y)
    e = _estimate(mu_x, sigma_x, mu_y, sigma_y)
    n, w = e["n"], float(e["w"])
    if not w > 0:
        raise DegenerateDesignError("explanatory means are all equal (w = 0)")
    # an exact linear fit leaves residuals at rounding level; call that zero
    rounding = 16.0 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(mu_y))))
    if float(e["sigma2_ml"]) <= rounding * rounding:
        e["sigma2_ml"] = e["sigma2"] = np.float64(0.0)
    s2 = float(e["sigma2"])
    beta = float(e["beta"])
    sx, mx = float(e["sx"]), float(e["mx"])
    warnings = []
    if n == 3:
        warnings.append("n = 3: t intervals have a single degree of freedom")
    if s2 == 0.0:
        warnings.append("zero residual variance: location noise is degenerate")
    if beta == 0.0:
        warnings.append("zero scale-noise estimate: scale noise is degenerate")
    if e["beta2"] < 0:
        warnings.append("unbiased beta2 estimate is negative")
    ratio = sigma_y / sigma_x
    se = _standard_errors(e)
    return QlmFit(
        n=n,
        mu_qx_bar=mx,
        sigma_qx_bar=sx,
        mu_qy_bar=float(e["my"]),
        sigma_qy_bar=float(e["sy"]),
        w=w,
        beta0_hat=float(e["beta0"]),
        beta1_hat=float(e["beta1"]),
        sigma2_ml=float(e["sigma2_ml"]),
        sigma2_hat=s2,
        beta2_ml=float(e["beta2_ml"]),
        beta2_hat=float(e["beta2"]),
        beta_ml=float(e["beta_ml"]),
        beta_hat=beta,
        se_beta0=float(se["beta0"]),
        se_beta1=float(se["beta1"]),
        se_beta2=float(se["beta2"]),
        se_sigma2=float(se["sigma2"]),
        se_beta=float(se["beta"]),
        argmin_ratio=int(np.argmin(ratio)),
        mu_x=tuple(mu_x.tolist()),
        sigma_x=tuple(sigma_x.tolist()),
        mu_y=tuple(mu_y.tolist()),
        sigma_y=tuple(sigma_y.tolist()),
        warnings=tuple(warnings),
    )


def pivot_pareto(n: int, sigma_bar: float) -> ParetoII:
    """Law of ``(beta2_hat - beta2)/beta_hat + 1/(n sigma_bar)``."""
    return ParetoII(n - 1.0, (1.0 - 1.0 / n) / sigma_bar)


def pivot_gamma(n: int) -> GammaDist:
    """Law of ``beta_hat / beta``."""
    return GammaDist(n - 1.0, 1.0 / (n - 1.0))


def _standard_errors(e) -> dict[str, np.ndarray]:
    """Plug-in standard errors from an :func:`_estimate` dict."""
    n, w, mx, sx = e["n"], e["w"], e["mx"], e["sx"]
    s2, beta = e["sigma2"], e["beta"]
    return {
        "beta0": np.sqrt(s2 / n * (1.0 + mx * mx / w)),
        "beta1": np.sqrt(s2 / (n * w)),
        "beta2": beta / math.sqrt(n * (n - 1.0)) / sx,
        "sigma2": s2 * math.sqrt(2.0 / (n - 2.0)),
        "beta": beta / math.sqrt(n - 1.0),
    }


def _interval_bounds(e, alpha: float) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Lower and upper limits for every parameter, broadcast like ``e``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    n, sx = e["n"], e["sx"]
    lo, hi = alpha / 2.0, 1.0 - alpha / 2.0
    se = _standard_errors(e)
    t = StudentT(n - 2.0).quantile(hi)
    chi = ChiSquare(n - 2.0)
    pareto = pivot_pareto(n, sx)
    gam = pivot_gamma(n)
    shift = 1.0 / (n * sx)
    ss = (n - 2.0) * e["sigma2"]
    b2, beta = e["beta2"], e["beta"]
    return {
        "beta0": (e["beta0"] - t * se["beta0"], e["beta0"] + t * se["beta0"]),
        "beta1": (e["beta1"] - t * se["beta1"], e["beta1"] + t * se["beta1"]),
        "beta2": (b2 - beta * (pareto.quantile(hi) - shift), b2 - beta * (pareto.quantile(lo) - shift)),
        "sigma2": (ss / chi.quantile(hi), ss / chi.quantile(lo)),
        "beta": (beta / gam.quantile(hi), beta / gam.quantile(lo)),
    }


def _as_estimate(f: QlmFit) -> dict:
    return {
        "n": f.n, "mx": f.mu_qx_bar, "sx": f.sigma_qx_bar, "w": f.w,
        "beta0": f.beta0_hat, "beta1": f.beta1_hat, "sigma2": f.sigma2_hat,
        "beta2": f.beta2_hat, "beta": f.beta_hat,
    }


def confidence_intervals(f: QlmFit, alpha: float = 0.05) -> dict[str, Interval]:
    bounds = _interval_bounds(_as_estimate(f), alpha)
    return {k: Interval(float(lo), float(hi)) for k, (lo, hi) in bounds.items()}


def summary_tests(f: QlmFit) -> dict[str, TestResult]:
    """Tests in the layout of the reference console summary.

    ``beta0``, ``beta1``: two-sided t tests of a zero coefficient.
    ``beta2``, ``sigma2``, ``beta``: one-sided tests of ``H0: par >= 1``.
    """
    n = f.n
    td = StudentT(n - 2.0)
    out = {}
    for name, est, se in (("beta0", f.beta0_hat, f.se_beta0), ("beta1", f.beta1_hat, f.se_beta1)):
        if se > 0:
            stat = est / se
            p = min(1.0, 2.0 * td.sf(abs(stat)))
        else:
            stat = math.copysign(math.inf, est) if est else math.nan
            p = 0.0 if est else math.nan
        out[name] = TestResult(stat, p, "par = 0")
    if f.beta_hat > 0:
        stat = (f.beta2_hat - 1.0) / f.beta_hat
        p = pivot_pareto(n, f.sigma_qx_bar).cdf(stat + 1.0 / (n * f.sigma_qx_bar))
        out["beta2"] = TestResult(stat, min(max(p, 0.0), 1.0), "par >= 1")
    else:
        out["beta2"] = TestResult(math.nan, math.nan, "par >= 1")
    stat = (n - 2.0) * f.sigma2_hat
    out["sigma2"] = TestResult(stat, ChiSquare(n - 2.0).cdf(stat), "par >= 1")
    out["beta"] = TestResult(f.beta_hat, pivot_gamma(n).cdf(f.beta_hat), "par >= 1")
    return out


def residuals(f: QlmFit, data: QuantilePairDataset | None = None) -> list[ResidualPair]:
    """``(mu_y - beta0 - beta1 mu_x, sigma_y - beta2 sigma_x)`` per observation.

    Without ``data`` the design stored in the fit is used.
    """
    if data is not None:
        mu_x, sigma_x, mu_y, sigma_y = data.arrays()
        if (data.n != f.n or tuple(mu_x.tolist()) != f.mu_x or tuple(sigma_x.tolist()) != f.sigma_x
                or tuple(mu_y.tolist()) != f.mu_y or tuple(sigma_y.tolist()) != f.sigma_y):
            raise ConsistencyError("dataset does not match the one the fit was computed from")
    return [
        ResidualPair(my - (f.beta0_hat + f.beta1_hat * mx), sy - f.beta2_hat * sx)
        for mx, sx, my, sy in zip(f.mu_x, f.sigma_x, f.mu_y, f.sigma_y)
    ]


def predict_mean_response(f: QlmFit, new_x: GaussianQuantile) -> GaussianQuantile:
    if not new_x.sigma > 0:
        raise DomainError("new explanatory sigma must be positive")
    sigma = f.beta2_hat * new_x.sigma + f.beta_hat
    if not sigma > 0:
        raise DegeneratePredictionError(
            f"predicted sigma {sigma:.6g} is not positive (beta2_hat = {f.beta2_hat:.6g})")
    return GaussianQuantile(f.beta0_hat + f.beta1_hat * new_x.mu, sigma)
