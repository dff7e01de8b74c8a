"""Bivariate Matern cross-covariance model.

The model has marginal correlations M(h | nu_i, a_i), cross covariance
rho * sigma1 * sigma2 * M(h | nu12, a12), and is a valid covariance iff
rho^2 stays below a Gamma-function / infimum bound. Theorem evaluation
uses the standardized case (unit sigmas and scales, nu_1, nu_2 in (0,1),
nu12 > 1, rho in (0,1)), for which the local expansion inputs are

    alpha_i = 2 nu_i,
    c_i     = Gamma(1 - nu_i) / (2^(2 nu_i) Gamma(1 + nu_i)),
    r''(0)  = rho * M''(0 | nu12, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import MaternParams, matern, matern_d2_at_zero


class UnsupportedModelError(ValueError):
    """Model is outside the standardized theorem-evaluation mode."""


@dataclass(frozen=True)
class BivariateMaternModel:
    nu1: float
    nu2: float
    nu12: float
    rho: float
    a1: float = 1.0
    a2: float = 1.0
    a12: float = 1.0
    sigma1: float = 1.0
    sigma2: float = 1.0
    dim_N: int = 1

    def __post_init__(self):
        for name in ("nu1", "nu2", "nu12", "a1", "a2", "a12", "sigma1", "sigma2"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError(f"rho must be in (-1, 1), got {self.rho}")
        if not (isinstance(self.dim_N, int) and self.dim_N >= 1):
            raise ValueError(f"dim_N must be a positive integer, got {self.dim_N}")

    def standardized_violation(self) -> str | None:
        """Name the first violated standardized-mode invariant, if any."""
        if self.sigma1 != 1.0 or self.sigma2 != 1.0:
            return "sigma1 = sigma2 = 1 required"
        if not (self.a1 == self.a2 == self.a12 == 1.0):
            return "a1 = a2 = a12 = 1 required"
        if not (0.0 < self.nu1 < 1.0 and 0.0 < self.nu2 < 1.0):
            return "nu1, nu2 in (0, 1) required"
        if not (self.nu12 > 1.0):
            return "nu12 > 1 required"
        if not (0.0 < self.rho < 1.0):
            return "rho in (0, 1) required"
        return None


@dataclass(frozen=True)
class LocalExpansion:
    """Asymptotic inputs consumed by the theorem evaluators."""

    alpha1: float
    alpha2: float
    c1: float
    c2: float
    rho: float
    r2_zero: float
    dim_N: int

    def __post_init__(self):
        if not (0.0 < self.alpha1 < 2.0 and 0.0 < self.alpha2 < 2.0):
            raise ValueError("alpha_i must lie in (0, 2)")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c_i must be > 0")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0, 1)")
        if not (self.r2_zero < 0):
            raise ValueError("r''(0) must be < 0")
        if not (isinstance(self.dim_N, int) and self.dim_N >= 1):
            raise ValueError("dim_N must be a positive integer")


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    witness: float | None
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    items: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def lines(self) -> list[str]:
        out = []
        for item in self.items:
            status = "PASS" if item.passed else "FAIL"
            out.append(f"[{status}] {item.name}: {item.detail}")
        return out


def expansion_coefficient(nu: float) -> float:
    """c = Gamma(1 - nu) / (2^(2 nu) Gamma(1 + nu)) for nu in (0, 1)."""
    if not (0.0 < nu < 1.0):
        raise ValueError(f"expansion coefficient requires nu in (0, 1), got {nu}")
    return math.gamma(1.0 - nu) / (2.0 ** (2.0 * nu) * math.gamma(1.0 + nu))


def validity_bound_equal_scale(nu1: float, nu2: float, nu12: float, N: int) -> float:
    """Closed-form bound on rho^2 when a1 = a2 = a12."""
    for v in (nu1, nu2, nu12):
        if not (v > 0):
            raise ValueError("smoothness parameters must be > 0")
    halfN = N / 2.0
    return math.exp(
        math.lgamma(nu1 + halfN)
        + math.lgamma(nu2 + halfN)
        - math.lgamma(nu1)
        - math.lgamma(nu2)
        + 2.0 * math.lgamma(nu12)
        - 2.0 * math.lgamma(nu12 + halfN)
    )


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _log_infimand(t, nu1, nu2, nu12, a1, a2, a12, N):
    t2 = np.asarray(t, dtype=float) ** 2
    return (
        (2.0 * nu12 + N) * np.log(a12 * a12 + t2)
        - (nu1 + N / 2.0) * np.log(a1 * a1 + t2)
        - (nu2 + N / 2.0) * np.log(a2 * a2 + t2)
    )


def validity_bound(
    nu1: float, nu2: float, nu12: float,
    a1: float, a2: float, a12: float, N: int,
) -> float:
    """General bound on rho^2: Gamma factors times scale factors times
    inf_{t >= 0} (a12^2 + t^2)^(2 nu12 + N)
                 / ((a1^2 + t^2)^(nu1 + N/2) (a2^2 + t^2)^(nu2 + N/2)).

    The infimum is found on the compactified variable t = tan(pi theta / 2),
    theta in [0, 1): a 1024-point scan guards against local minima, then
    golden-section search refines the bracketed minimum.
    """
    for v in (nu1, nu2, nu12, a1, a2, a12):
        if not (v > 0):
            raise ValueError("validity_bound parameters must be > 0")

    tail_exponent = 2.0 * nu12 - nu1 - nu2
    if tail_exponent < 0.0:
        return 0.0  # infimand -> 0 as t -> infinity

    def g(theta):
        return _log_infimand(
            np.tan(0.5 * math.pi * np.asarray(theta)), nu1, nu2, nu12, a1, a2, a12, N
        )

    thetas = np.linspace(0.0, 1.0, 1025)[:-1]
    vals = g(thetas)
    i = int(np.argmin(vals))
    lo = thetas[max(i - 1, 0)]
    hi = thetas[min(i + 1, len(thetas) - 1)] if i + 1 < len(thetas) else 1.0 - 1e-9

    # golden-section refinement of the bracket
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    gc, gd = float(g(c)), float(g(d))
    while hi - lo > 1e-13:
        if gc < gd:
            hi, d, gd = d, c, gc
            c = hi - _GOLDEN * (hi - lo)
            gc = float(g(c))
        else:
            lo, c, gc = c, d, gd
            d = lo + _GOLDEN * (hi - lo)
            gd = float(g(d))
    log_min = min(float(vals[i]), gc, gd)
    if tail_exponent == 0.0:
        log_min = min(log_min, 0.0)  # limit value at t = infinity

    log_gamma = (
        math.lgamma(nu1 + N / 2.0)
        + math.lgamma(nu2 + N / 2.0)
        - math.lgamma(nu1)
        - math.lgamma(nu2)
        + 2.0 * math.lgamma(nu12)
        - 2.0 * math.lgamma(nu12 + N / 2.0)
    )
    log_scale = (
        2.0 * nu1 * math.log(a1) + 2.0 * nu2 * math.log(a2) - 4.0 * nu12 * math.log(a12)
    )
    return math.exp(log_gamma + log_scale + log_min)


def cross_corr(m: BivariateMaternModel, h):
    """Cross correlation r(h) = rho * M(h | nu12, a12); r(0) = rho."""
    return m.rho * matern(h, MaternParams(m.nu12, m.a12))


def local_expansion(m: BivariateMaternModel) -> LocalExpansion:
    """Extract (alpha_i, c_i, rho, r''(0), N) for the standardized model."""
    violation = m.standardized_violation()
    if violation is not None:
        raise UnsupportedModelError(
            f"local_expansion needs the standardized model: {violation}"
        )
    return LocalExpansion(
        alpha1=2.0 * m.nu1,
        alpha2=2.0 * m.nu2,
        c1=expansion_coefficient(m.nu1),
        c2=expansion_coefficient(m.nu2),
        rho=m.rho,
        r2_zero=m.rho * matern_d2_at_zero(MaternParams(m.nu12, 1.0)),
        dim_N=m.dim_N,
    )


_SAMPLING_GRID = np.geomspace(1e-4, 1e2, 400)


def check_assumptions(m: BivariateMaternModel) -> AssumptionReport:
    """Machine-checkable report on the four model assumptions plus the
    validity condition. Failures are report entries, never errors."""
    items = []

    ok = 0.0 < m.nu1 < 1.0 and 0.0 < m.nu2 < 1.0
    items.append(
        AssumptionCheck(
            "expansion",
            ok,
            max(2.0 * m.nu1, 2.0 * m.nu2),
            f"alpha_i = 2 nu_i = ({2 * m.nu1:g}, {2 * m.nu2:g}) "
            + ("in (0, 2)" if ok else "not in (0, 2): need nu_i in (0, 1)"),
        )
    )

    worst = max(
        float(np.max(matern(_SAMPLING_GRID, MaternParams(m.nu1, m.a1)))),
        float(np.max(matern(_SAMPLING_GRID, MaternParams(m.nu2, m.a2)))),
    )
    ok = worst < 1.0
    items.append(
        AssumptionCheck(
            "marginal_strict",
            ok,
            worst,
            f"max marginal correlation over sampled h > 0 is {worst:.6g} "
            + ("< 1" if ok else ">= 1"),
        )
    )

    items.append(
        AssumptionCheck(
            "isotropy",
            True,
            None,
            "cross correlation depends on |t - s| by construction",
        )
    )

    if m.nu12 > 1.0:
        d2 = matern_d2_at_zero(MaternParams(m.nu12, m.a12))
        r2 = m.rho * d2
        sampled = float(np.max(np.abs(cross_corr(m, _SAMPLING_GRID))))
        ok = r2 < 0.0 and sampled < abs(m.rho)
        detail = (
            f"r''(0) = {r2:.6g} < 0; sampled max |r(h)|, h > 0, "
            f"is {sampled:.12g} < |rho| = {abs(m.rho):g}"
            if ok
            else f"r''(0) = {r2:.6g}, sampled max |r(h)| = {sampled:.12g}"
        )
        items.append(AssumptionCheck("second_derivative", ok, r2, detail))
    else:
        items.append(
            AssumptionCheck(
                "second_derivative",
                False,
                None,
                f"nu12 <= 1 (got {m.nu12:g}): M''(0) does not exist",
            )
        )

    bound = validity_bound(m.nu1, m.nu2, m.nu12, m.a1, m.a2, m.a12, m.dim_N)
    # the condition is rho^2 <= bound; allow ulp-level slack so exactly
    # boundary-valid models (rho^2 == bound analytically) are not rejected
    # for the rounding of the Gamma-factor product
    ok = m.rho * m.rho <= bound * (1.0 + 1e-12)
    items.append(
        AssumptionCheck(
            "validity",
            ok,
            bound,
            f"rho^2 = {m.rho * m.rho:.6g} vs bound {bound:.6g}",
        )
    )

    return AssumptionReport(tuple(items))
