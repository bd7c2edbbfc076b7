"""Histograms to empirical quantile functions to Gaussian quantile pairs."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError
from .special import gaussian_moment, std_normal_quantile, truncated_gaussian_moment

__all__ = [
    "HUHistogram",
    "EmpiricalQuantile",
    "GaussianQuantile",
    "empirical_quantile",
    "psi_coefficients",
    "project_d1",
    "projection_objective",
]

# Lung segmentation window used when ``validate_hu=True``.
HU_RANGE = (-1023, -200)


@dataclass(frozen=True)
class HUHistogram:
    """Distinct values with positive integer counts.

    Construct through :meth:`from_pairs` to get sorting, duplicate merging
    and zero-count removal; the raw constructor only validates.
    """

    values: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.counts):
            raise DomainError("values and counts differ in length")
        if not self.values:
            raise DomainError("histogram is empty")
        for v in self.values:
            if not math.isfinite(v):
                raise DomainError(f"non-finite value {v!r}")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise DomainError("values must be strictly increasing")
        for c in self.counts:
            if int(c) != c or c < 1:
                raise DomainError(f"counts must be positive integers, got {c!r}")

    @classmethod
    def from_pairs(cls, values, counts, validate_hu: bool = False) -> "HUHistogram":
        merged: dict[float, int] = {}
        for v, c in zip(values, counts, strict=True):
            c = int(c)
            if c < 0:
                raise DomainError(f"negative count {c} at value {v}")
            if c:
                merged[float(v)] = merged.get(float(v), 0) + c
        if not merged:
            raise DomainError("histogram has no positive counts")
        keys = sorted(merged)
        if validate_hu and (keys[0] < HU_RANGE[0] or keys[-1] > HU_RANGE[1]):
            raise DomainError(f"values outside {HU_RANGE}: [{keys[0]}, {keys[-1]}]")
        return cls(tuple(keys), tuple(merged[k] for k in keys))

    @property
    def total(self) -> int:
        return sum(self.counts)

    def mean(self) -> float:
        return math.fsum(v * c for v, c in zip(self.values, self.counts)) / self.total


@dataclass(frozen=True)
class EmpiricalQuantile:
    """Step quantile function: ``values[l]`` on ``(cum_props[l-1], cum_props[l]]``."""

    values: tuple[float, ...]
    cum_props: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.cum_props) or not self.values:
            raise DomainError("empirical quantile needs matching, nonempty arrays")
        if self.cum_props[-1] != 1.0:
            raise DomainError("last cumulative proportion must be 1")
        if any(b <= a for a, b in zip(self.cum_props, self.cum_props[1:])):
            raise DomainError("cumulative proportions must be strictly increasing")

    def __call__(self, p: float) -> float:
        if not (0.0 < p <= 1.0):
            raise DomainError(f"p must lie in (0, 1], got {p!r}")
        # inf{x : p <= F(x)}
        return self.values[bisect.bisect_left(self.cum_props, p)]


@dataclass(frozen=True)
class GaussianQuantile:
    """``q(p) = mu + sigma * Phi^-1(p)``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise DomainError("mu and sigma must be finite")
        if self.sigma < 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma!r}")

    def __call__(self, p: float) -> float:
        return self.mu + self.sigma * std_normal_quantile(p)


def empirical_quantile(h: HUHistogram) -> EmpiricalQuantile:
    total = h.total
    running = 0
    props = []
    for c in h.counts:
        running += c
        # exact rational, rounded once; the final entry is exactly 1.0
        props.append(float(Fraction(running, total)))
    return EmpiricalQuantile(h.values, tuple(props))


def psi_coefficients(eq: EmpiricalQuantile, j_max: int) -> list[float]:
    """``psi_j = sum_l x_l [Phi_j(F_l) - Phi_j(F_{l-1})]`` for ``j = 0..j_max``.

    Each value contributes once however many atoms share it, which is what
    makes the grouped form cheap.  ``Phi_j(0) = 0``.
    """
    if j_max < 0:
        raise DomainError("j_max must be nonnegative")
    out = []
    for j in range(j_max + 1):
        prev = 0.0
        terms = []
        for x, b in zip(eq.values, eq.cum_props):
            cur = truncated_gaussian_moment(j, b)
            terms.append(x * (cur - prev))
            prev = cur
        out.append(math.fsum(terms))
    return out


def project_d1(eq: EmpiricalQuantile) -> GaussianQuantile:
    """Closest ``mu + sigma Phi^-1`` in L2 to the empirical quantile function."""
    psi0, psi1 = psi_coefficients(eq, 1)
    # psi1 is a sum of nonnegative increments times increasing values; any
    # negative result is rounding noise on a constant sample
    if len(eq.values) == 1:
        psi1 = 0.0
    return GaussianQuantile(psi0, max(psi1, 0.0))


def projection_objective(a, psi, d: int) -> float:
    """``sum_j a_j (sum_{l=j}^{j+d} a_{l-j} Phi_l(1) - 2 psi_j)``.

    The L2 loss of the polynomial ``sum a_j (Phi^-1)^j`` against the
    empirical quantile, minus the constant ``int q_hat^2``.
    """
    a = [float(v) for v in a]
    if d < 0 or len(a) != d + 1:
        raise DomainError(f"need {d + 1} coefficients for degree {d}, got {len(a)}")
    if len(psi) < d + 1:
        raise DomainError(f"need at least {d + 1} psi values, got {len(psi)}")
    total = []
    for j in range(d + 1):
        inner = math.fsum(a[l - j] * gaussian_moment(l) for l in range(j, j + d + 1))
        total.append(a[j] * (inner - 2.0 * psi[j]))
    return math.fsum(total)
