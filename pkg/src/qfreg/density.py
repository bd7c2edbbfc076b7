"""Plug-in densities of residual and mean-response pairs, and their regions.

Both densities factor as ``f(s, t) = g(s) h(t)`` with ``g`` Gaussian.  That
makes level-set masses one-dimensional: for a level ``c``,

    mass{f > c} = int h(t) erf(sqrt(max(0, log(g_max h(t) / c)))) dt,

because ``{s : g(s) > c/h(t)}`` is an interval around the Gaussian centre
whose probability is that erf.  P-values and HDR thresholds use this
reduction; :func:`integrate_region` handles arbitrary predicates on a
tensor-product grid and serves as the cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _core
from .encoding import GaussianQuantile
from .errors import AccuracyError, DomainError, InferenceUnavailableError
from .qlm import QlmFit, ResidualPair
from .quadrature import adaptive_quad, gauss_legendre, panel_nodes, refine_edges

__all__ = [
    "Density2D",
    "ResidualDensity",
    "MeanResponseDensity",
    "DensityGrid",
    "residual_density",
    "mean_response_density",
    "integrate_region",
    "level_set_mass",
    "density_pvalue",
    "residual_pvalue",
    "hdr_threshold",
    "region_membership",
    "density_grid",
]

_S_HALF_WIDTH = 10.0  # truncation box half-width in Gaussian sd
_TAIL_MASS = 1e-13  # t mass allowed beyond the truncation point
_SKETCH = 3000


def _erf_sqrt(x):
    """``erf(sqrt(x))`` for ``x >= 0`` via the normal CDF kernel."""
    return 2.0 * _core.norm_cdf(np.sqrt(2.0 * x)) - 1.0


class Density2D:
    """Separable density ``g(s) h(t)`` on ``R x (t_lower, inf)``.

    Subclasses set ``s_center``, ``s_var``, ``t_lower`` and implement
    ``_h(tau)`` on offsets ``tau = t - t_lower``, plus ``_tail_rate`` (an
    exponential decay rate valid beyond ``_tail_start``) and ``_features``.
    """

    s_center: float
    s_var: float
    t_lower: float

    # -- factors -----------------------------------------------------------
    @property
    def s_sd(self) -> float:
        return math.sqrt(self.s_var)

    @property
    def g_max(self) -> float:
        return 1.0 / math.sqrt(2.0 * math.pi * self.s_var)

    def s_factor(self, s):
        z = (np.asarray(s, dtype=float) - self.s_center) / self.s_sd
        return self.g_max * np.exp(-0.5 * z * z)

    def t_factor(self, t):
        tau = np.asarray(t, dtype=float) - self.t_lower
        return self._h(tau)

    def _h(self, tau):  # pragma: no cover - abstract
        raise NotImplementedError

    def pdf(self, s, t):
        """Density at ``(s, t)``; arrays broadcast."""
        out = self.s_factor(s) * self.t_factor(t)
        return float(out) if np.ndim(out) == 0 else out

    # -- geometry ----------------------------------------------------------
    @cached_property
    def tau_upper(self) -> float:
        """Offset beyond which the t-factor holds less than ``_TAIL_MASS``."""
        r = self._tail_rate
        tau = max(self._tail_start, 1e-12)
        for _ in range(2000):
            if 2.0 * float(self._h(np.array([tau]))[0]) / r < _TAIL_MASS:
                return tau
            tau *= 1.2
        raise AccuracyError("could not locate the t truncation point")  # pragma: no cover

    @property
    def t_upper(self) -> float:
        return self.t_lower + self.tau_upper

    @property
    def box(self) -> tuple[float, float, float, float]:
        """``(s_min, s_max, t_min, t_max)`` of the truncation box."""
        h = _S_HALF_WIDTH * self.s_sd
        return (self.s_center - h, self.s_center + h, self.t_lower, self.t_upper)

    @cached_property
    def _sketch(self) -> np.ndarray:
        """Offsets used to find modes and level crossings of ``h``."""
        top = self.tau_upper
        lin = np.linspace(0.0, top, _SKETCH)[1:]
        log = np.geomspace(top * 1e-9, top, _SKETCH)
        feats = [f for f in self._features if 0 < f < top]
        return np.unique(np.concatenate([lin, log, feats]))

    @cached_property
    def _sketch_h(self) -> np.ndarray:
        return self._h(self._sketch)

    @cached_property
    def _t_mode_offset(self) -> float:
        x, y = self._sketch, self._sketch_h
        k = int(np.argmax(y))
        lo = x[k - 1] if k > 0 else 0.0
        hi = x[k + 1] if k + 1 < x.size else x[k]
        return _golden_max(lambda v: float(self._h(np.array([v]))[0]), lo, hi)

    @property
    def mode(self) -> tuple[float, float]:
        return (float(self.s_center), float(self.t_lower + self._t_mode_offset))

    @property
    def max_density(self) -> float:
        return self.g_max * float(self._h(np.array([self._t_mode_offset]))[0])

    def t_breakpoints(self) -> np.ndarray:
        """Edges for integrating ``h``: support ends plus known features."""
        top = self.tau_upper
        pts = [0.0, top, self._t_mode_offset]
        pts += [f for f in self._features if 0 < f < top]
        return self.t_lower + np.unique(pts)

    def _crossings(self, level: float) -> list[float]:
        """Offsets where ``h`` crosses ``level``, located by bisection."""
        x = np.concatenate([[0.0], self._sketch])
        y = np.concatenate([[0.0], self._sketch_h]) - level
        idx = np.nonzero(np.sign(y[:-1]) != np.sign(y[1:]))[0]
        roots = []
        for k in idx:
            lo, hi = x[k], x[k + 1]
            flo = y[k]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = float(self._h(np.array([mid]))[0]) - level
                if (fm > 0) == (flo > 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
                if hi - lo <= 1e-14 * max(1.0, hi):
                    break
            roots.append(0.5 * (lo + hi))
        return roots

    def contains(self, s, t):
        """True where ``(s, t)`` lies in the truncation box."""
        s0, s1, t0, t1 = self.box
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return (s >= s0) & (s <= s1) & (t > t0) & (t <= t1)


def _golden_max(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * max(1.0, abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


class ResidualDensity(Density2D):
    """Law of one residual pair ``(mu_e, sigma_e)``.

    ``s`` is centred normal with variance ``sigma2 * xi``; ``t`` is a
    two-component mixture whose first part is ``Gamma(n-1, nu2)`` with
    weight ``sigma_x / (n sigma_bar)``.
    """

    def __init__(self, n: int, sigma2: float, beta: float, xi: float,
                 sigma_x: float, sigma_bar: float):
        if not (sigma2 > 0 and beta > 0):
            raise InferenceUnavailableError(
                f"residual density needs positive sigma2 and beta (got {sigma2!r}, {beta!r})")
        if not xi > 0:
            raise InferenceUnavailableError(f"residual variance factor is not positive ({xi!r})")
        self.n = int(n)
        self.sigma2 = float(sigma2)
        self.beta = float(beta)
        self.xi = float(xi)
        self.s_center = 0.0
        self.s_var = self.sigma2 * self.xi
        self.t_lower = 0.0
        self.weight = sigma_x / (n * sigma_bar)
        self.nu2 = beta * sigma_x / (n * (n - 1.0) * sigma_bar)
        self.nu1 = beta + self.nu2
        self.theta = self.nu1 * self.nu2 / beta

    @classmethod
    def from_fit(cls, f: QlmFit, i: int) -> "ResidualDensity":
        """Plug-in density for observation ``i`` (0-based)."""
        if not 0 <= i < f.n:
            raise DomainError(f"index {i} out of range for n = {f.n}")
        return cls.from_design(f.n, f.sigma2_hat, f.beta_hat, f.mu_x, f.sigma_x, i)

    @classmethod
    def from_design(cls, n, sigma2, beta, mu_x, sigma_x, i) -> "ResidualDensity":
        mu_x = np.asarray(mu_x, dtype=float)
        sigma_x = np.asarray(sigma_x, dtype=float)
        mbar = mu_x.mean()
        w = np.mean((mu_x - mbar) ** 2)
        xi = 1.0 - 1.0 / n - (mu_x[i] - mbar) ** 2 / (n * w)
        return cls(n, sigma2, beta, xi, float(sigma_x[i]), float(sigma_x.mean()))

    def _h(self, tau):
        return _core.residual_t_density(tau, self.n, self.weight, self.nu1, self.nu2, self.theta)

    def t_cdf(self, t):
        """Closed-form CDF of the t factor."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        pos = t > 0
        tp = t[pos]
        n, w = self.n, self.weight
        p1 = _core.reg_lower_gamma(n - 1.0, tp / self.nu2)
        p2 = _core.reg_lower_gamma(n - 2.0, tp / self.nu2)
        p3 = _core.reg_lower_gamma(n - 2.0, tp / self.theta)
        log_c = -tp / self.nu1 + (n - 2.0) * math.log(self.theta / self.nu2)
        out[pos] = w * p1 + (1.0 - w) * (p2 - np.exp(log_c) * p3)
        return out

    @property
    def _tail_rate(self) -> float:
        return 1.0 / self.nu1

    @property
    def _tail_start(self) -> float:
        return 4.0 * self.n * max(self.nu2, self.theta) + self.nu1

    @property
    def _features(self) -> list[float]:
        m = self.n - 1.0
        sd = math.sqrt(m) * self.nu2
        peak = (m - 1.0) * self.nu2
        return [max(peak - 6 * sd, 0.0), peak - 2 * sd, peak, peak + 2 * sd, peak + 6 * sd,
                self.nu1]


class MeanResponseDensity(Density2D):
    """Law of the fitted mean-response pair at a new design point ``(mu, a)``.

    Requires ``0 < a < n sigma_bar``.  Below ``a = sigma_bar`` both the
    incomplete gamma argument and the power in the denominator turn
    negative; the kernel tracks their signs in log space.
    """

    def __init__(self, n: int, beta0: float, beta1: float, sigma2: float, beta2: float,
                 beta: float, mu_bar: float, w: float, sigma_bar: float, new_x: GaussianQuantile):
        a = float(new_x.sigma)
        if not 0.0 < a < n * sigma_bar:
            raise DomainError(
                f"new sigma must satisfy 0 < sigma < n * mean(sigma_x) = {n * sigma_bar:.6g}; got {a!r}")
        if not (sigma2 > 0 and beta > 0):
            raise InferenceUnavailableError(
                f"mean-response density needs positive sigma2 and beta (got {sigma2!r}, {beta!r})")
        self.n = int(n)
        self.new_x = new_x
        self.s_center = beta0 + beta1 * new_x.mu
        self.s_var = sigma2 / n * (1.0 + (new_x.mu - mu_bar) ** 2 / w)
        self.t_lower = beta2 * a
        S = sigma_bar
        self.lam = n * S / (beta * a)
        self.c = 1.0 - S / a
        self.K = n / ((1.0 - a / (n * S)) * beta)

    @classmethod
    def from_fit(cls, f: QlmFit, new_x: GaussianQuantile) -> "MeanResponseDensity":
        return cls(f.n, f.beta0_hat, f.beta1_hat, f.sigma2_hat, f.beta2_hat, f.beta_hat,
                   f.mu_qx_bar, f.w, f.sigma_qx_bar, new_x)

    def _h(self, tau):
        return _core.mean_response_t_density(tau, self.n, self.lam, self.c, self.K)

    @property
    def _tail_rate(self) -> float:
        return self.lam - max(0.0, -self.c * self.K)

    @property
    def _tail_start(self) -> float:
        return 2.0 * self.n / self._tail_rate

    @property
    def _features(self) -> list[float]:
        r = self._tail_rate
        return [0.25 * self.n / r, 0.5 * self.n / r, self.n / r, 1.0 / self.lam]


def residual_density(f: QlmFit, i: int, s: float, t: float) -> float:
    return ResidualDensity.from_fit(f, i).pdf(s, t)


def mean_response_density(f: QlmFit, new_x: GaussianQuantile, s: float, t: float) -> float:
    return MeanResponseDensity.from_fit(f, new_x).pdf(s, t)


# ---------------------------------------------------------------------------
# Level sets through the 1-D reduction
# ---------------------------------------------------------------------------


def level_set_mass(d: Density2D, c: float, tol: float = 1e-10) -> float:
    """``P(f > c)`` under the density itself."""
    if c <= 0:
        return 1.0
    gm = d.g_max
    level = c / gm
    if level >= float(d._h(np.array([d._t_mode_offset]))[0]):
        return 0.0

    def integrand(t):
        h = d.t_factor(t)
        with np.errstate(divide="ignore"):
            x = np.log(np.where(h > 0, h, 1e-300) / level)
        return np.where(x > 0, h * _erf_sqrt(np.maximum(x, 0.0)), 0.0)

    pts = np.concatenate([d.t_breakpoints(), d.t_lower + np.array(d._crossings(level))])
    value, _ = adaptive_quad(integrand, pts, abs_tol=tol, rel_tol=0.0)
    return min(max(value, 0.0), 1.0)


def density_pvalue(d: Density2D, point: tuple[float, float], tol: float = 1e-10) -> float:
    """Mass of ``{f <= f(point)}``."""
    f_obs = d.pdf(point[0], point[1])
    return min(max(1.0 - level_set_mass(d, f_obs, tol), 0.0), 1.0)


def residual_pvalue(f: QlmFit, i: int, observed: ResidualPair, tol: float = 1e-10) -> float:
    """Outlier p-value of residual pair ``i`` (0-based).

    A fit with zero location and scale noise has a point-mass residual law
    at the origin; the p-value is then 1 at the origin and 0 elsewhere.
    """
    # rounding leaves ~eps-sized noise on an exact fit, so compare on the response scale
    scale = 1e-9 * (1.0 + abs(f.mu_qy_bar) + f.sigma_qy_bar)
    if math.sqrt(f.sigma2_hat) <= scale and f.beta_hat <= scale:
        at_origin = abs(observed.mu_e) <= scale and abs(observed.sigma_e) <= scale
        return 1.0 if at_origin else 0.0
    d = ResidualDensity.from_fit(f, i)
    return density_pvalue(d, (observed.mu_e, observed.sigma_e), tol)


def hdr_threshold(d: Density2D, alpha: float, tol: float = 1e-7) -> float:
    """Level ``L`` with ``P(f >= L) = 1 - alpha``, by bisection on ``log L``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    target = 1.0 - alpha
    hi = math.log(d.max_density)
    lo = hi - 1.0
    while level_set_mass(d, math.exp(lo)) < target:
        lo -= 2.0 * (hi - lo)
        if lo < hi - 800:  # pragma: no cover
            raise AccuracyError("HDR threshold bracket search failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        m = level_set_mass(d, math.exp(mid))
        if abs(m - target) < tol:
            return math.exp(mid)
        if m > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi))


def region_membership(d: Density2D, L: float, point: tuple[float, float]) -> bool:
    """Whether ``point`` lies in ``{f >= L}`` (and inside the truncation box)."""
    if not L > 0:
        raise DomainError("threshold must be positive")
    s, t = point
    if not bool(d.contains(s, t)):
        return False
    return d.pdf(s, t) >= L


# ---------------------------------------------------------------------------
# Generic region integration
# ---------------------------------------------------------------------------


def integrate_region(d: Density2D, predicate, tol: float = 1e-4, max_depth: int = 40,
                     order: int = 4) -> float:
    """Mass of ``{(s, t) : predicate(s, t)}`` inside the truncation box.

    ``predicate`` takes equal-shape arrays ``s`` and ``t`` and returns
    booleans.  The box starts as a tensor-product grid of cells, each
    carrying an ``order x order`` Gauss-Legendre rule.  Cells whose nodes
    agree on the predicate are settled; mixed cells are split into four.
    Refinement stops when the total mass of mixed cells drops below ``tol``
    or when two successive depth-to-depth changes of the estimate do.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    x, w = gauss_legendre(order)
    s0, s1, _, _ = d.box
    se = refine_edges([s0, d.s_center, s1], 5)
    te = refine_edges(d.t_breakpoints(), 4)
    slo, tlo = np.meshgrid(se[:-1], te[:-1], indexing="ij")
    shi, thi = np.meshgrid(se[1:], te[1:], indexing="ij")
    cells = [a.ravel() for a in (slo, shi, tlo, thi)]
    settled = 0.0
    pending = 0.0
    history = []
    for _ in range(max_depth):
        slo, shi, tlo, thi = cells
        sh, th = 0.5 * (shi - slo), 0.5 * (thi - tlo)
        sn = 0.5 * (shi + slo)[:, None] + sh[:, None] * x[None, :]  # (m, q)
        tn = 0.5 * (thi + tlo)[:, None] + th[:, None] * x[None, :]
        gw = d.s_factor(sn) * w[None, :] * sh[:, None]
        hw = d.t_factor(tn) * w[None, :] * th[:, None]
        # probe the nodes plus the cell edges, so a boundary lying between
        # an edge and the outermost node still marks the cell as mixed
        sp = np.concatenate([slo[:, None], sn, shi[:, None]], axis=1)
        tp = np.concatenate([tlo[:, None], tn, thi[:, None]], axis=1)
        q = sp.shape[1]
        S = np.broadcast_to(sp[:, :, None], (sp.shape[0], q, q))
        T = np.broadcast_to(tp[:, None, :], (tp.shape[0], q, q))
        probe = np.broadcast_to(np.asarray(predicate(S, T), dtype=bool), S.shape)
        mask = probe[:, 1:-1, 1:-1]
        cell_mass = np.einsum("ci,cj->c", gw, hw)
        hit_mass = np.einsum("ci,cij,cj->c", gw, mask, hw)
        count = probe.sum(axis=(1, 2))
        done = (count == 0) | (count == q * q)
        settled += float(hit_mass[done].sum())
        mixed = ~done
        pending = float(cell_mass[mixed].sum())
        history.append(settled + float(hit_mass[mixed].sum()))
        steps = np.abs(np.diff(history[-3:]))
        if pending < tol or (steps.size == 2 and steps.max() < tol):
            return min(max(history[-1], 0.0), 1.0)
        slo, shi, tlo, thi = slo[mixed], shi[mixed], tlo[mixed], thi[mixed]
        sm, tm = 0.5 * (slo + shi), 0.5 * (tlo + thi)
        cells = [np.concatenate(v) for v in (
            (slo, sm, slo, sm), (sm, shi, sm, shi), (tlo, tlo, tm, tm), (tm, tm, thi, thi))]
    raise AccuracyError(
        f"region integral did not settle within {tol:g} after {max_depth} subdivisions",
        best_estimate=min(max(settled + 0.5 * pending, 0.0), 1.0), error_estimate=pending)


@dataclass(frozen=True)
class DensityGrid:
    s_axis: np.ndarray
    t_axis: np.ndarray
    values: np.ndarray
    cell_mass: np.ndarray
    metadata: dict = field(default_factory=dict)

    def total_mass(self) -> float:
        return float(np.sum(self.cell_mass * self.values))


def density_grid(d: Density2D, s_panels: int = 16, t_level: int = 3, order: int = 8) -> DensityGrid:
    """Density on a Gauss-Legendre product grid over the truncation box.

    ``cell_mass`` holds the product quadrature weights, so
    ``sum(cell_mass * values)`` approximates the total mass.
    """
    s0, s1, t0, t1 = d.box
    s_nodes, s_w = panel_nodes(np.linspace(s0, s1, s_panels + 1), order)
    t_nodes, t_w = panel_nodes(refine_edges(d.t_breakpoints(), t_level), order)
    values = d.s_factor(s_nodes)[:, None] * d.t_factor(t_nodes)[None, :]
    weights = s_w[:, None] * t_w[None, :]
    total = float(np.sum(values * weights))
    meta = {
        "box": {"s_min": s0, "s_max": s1, "t_min": t0, "t_max": t1},
        "mode": {"s": d.mode[0], "t": d.mode[1], "density": d.max_density},
        "total_mass": total,
        "normalization_error": abs(total - 1.0),
        "quadrature": f"Gauss-Legendre {order}-point product rule",
    }
    return DensityGrid(s_nodes, t_nodes, values, weights, meta)
