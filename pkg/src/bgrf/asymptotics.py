"""Closed-form tail asymptotics and the deterministic Riemann-sum check.

Every evaluator returns an AsymptoticResult decomposed as

    value = constant * u^u_power * exp(exp_rate * u^2),

where exp_rate = -1/(1 + rho) always (the exponential part is governed by
the maximum cross correlation) and u_power already includes the u^-2
carried by the bivariate normal tail factor

    Psi(u, rho) = (1+rho)^2 / (2 pi u^2 sqrt(1-rho^2)) exp(-u^2/(1+rho)).

log_value is returned alongside value because Psi underflows double
precision near u ~ 38 at rho = 0.5.

The Riemann-sum check rebuilds the double-sum kernel from scratch: cells
of side d_i(u) = T u^(-2/alpha_i) per coordinate, the near-diagonal band
D = {(s,t) in A1 x A2 : |t - s| <= delta(u)} with delta(u) = C sqrt(log u)/u,
and

    h(u) = sum over cell pairs meeting D of
           exp(-u^2 (1/(1 + r(|tau_kl|)) - 1/(1 + rho))),

whose growth must match the closed-form limit, overlapping-domain or
split-domain flavour. Cell-pair membership uses exact interval
arithmetic against the rectangle unions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .fields import DomainPair, Rect, union_covers
from .model import BivariateMaternModel, LocalExpansion, local_expansion

_CELL_BUDGET = 10**8


class CellBudgetError(RuntimeError):
    """Cell-pair enumeration would exceed the resource budget."""


# ---------------------------------------------------------------------------
# Psi and the theorem evaluators
# ---------------------------------------------------------------------------

def log_psi(u: float, rho: float) -> float:
    if not (u > 0):
        raise ValueError(f"u must be > 0, got {u}")
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    return (
        2.0 * math.log1p(rho)
        - math.log(2.0 * math.pi)
        - 2.0 * math.log(u)
        - 0.5 * (math.log1p(rho) + math.log1p(-rho))
        - u * u / (1.0 + rho)
    )


def psi(u: float, rho: float) -> float:
    """Bivariate normal joint tail factor Psi(u, rho)."""
    return math.exp(log_psi(u, rho))


# the u-free part of log Psi (everything except -2 log u - u^2/(1+rho))
def _log_psi_constant(rho: float) -> float:
    return (
        2.0 * math.log1p(rho)
        - math.log(2.0 * math.pi)
        - 0.5 * (math.log1p(rho) + math.log1p(-rho))
    )


@dataclass(frozen=True)
class AsymptoticResult:
    value: float
    log_value: float
    exp_rate: float
    u_power: float
    constant: float

    @classmethod
    def from_parts(cls, log_constant: float, u_power: float, rho: float, u: float):
        exp_rate = -1.0 / (1.0 + rho)
        log_value = log_constant + u_power * math.log(u) + exp_rate * u * u
        value = math.exp(log_value) if log_value > -745.0 else 0.0
        return cls(
            value=value,
            log_value=log_value,
            exp_rate=exp_rate,
            u_power=u_power,
            constant=math.exp(log_constant),
        )


def _check_theorem_inputs(mes: float, H1: float, H2: float, u: float):
    if not (mes > 0):
        raise ValueError(f"measure must be > 0, got {mes}")
    if not (H1 > 0 and H2 > 0):
        raise ValueError("Pickands constants must be > 0")
    if not (u > 0):
        raise ValueError(f"u must be > 0, got {u}")


def theorem1_value(
    e: LocalExpansion, mes_N: float, H1: float, H2: float, u: float
) -> AsymptoticResult:
    """Joint excursion asymptotics for overlapping domains
    (mes_N(A1 and A2) > 0):

        (2 pi)^(N/2) (-r''(0))^(-N/2) c1^(N/a1) c2^(N/a2) mes_N H1 H2
        * (1+rho)^(-N(2/a1 + 2/a2 - 1)) u^(N(2/a1 + 2/a2 - 1)) Psi(u, rho)
    """
    _check_theorem_inputs(mes_N, H1, H2, u)
    N = e.dim_N
    power = N * (2.0 / e.alpha1 + 2.0 / e.alpha2 - 1.0)
    log_pre = (
        0.5 * N * math.log(2.0 * math.pi)
        - 0.5 * N * math.log(-e.r2_zero)
        + (N / e.alpha1) * math.log(e.c1)
        + (N / e.alpha2) * math.log(e.c2)
        + math.log(mes_N)
        + math.log(H1)
        + math.log(H2)
        - power * math.log1p(e.rho)
    )
    return AsymptoticResult.from_parts(
        log_pre + _log_psi_constant(e.rho), power - 2.0, e.rho, u
    )


def theorem2_value(
    e: LocalExpansion, M: int, mes_M: float, H1: float, H2: float, u: float
) -> AsymptoticResult:
    """Joint excursion asymptotics for the split structure (shared first M
    coordinates, touching intervals after):

        (2 pi)^(M/2) (-r''(0))^(-(2N-M)/2) c1^(N/a1) c2^(N/a2) H1 H2 mes_M
        * (1+rho)^(2N - M - 2N/a1 - 2N/a2) u^(M + N(2/a1 + 2/a2 - 2))
        * Psi(u, rho)
    """
    N = e.dim_N
    if not (isinstance(M, int) and 0 <= M <= N - 1):
        raise ValueError(f"M must be an integer in [0, N-1], got {M}")
    if M == 0 and mes_M != 1.0:
        raise ValueError("mes_0 is identically 1 by convention")
    _check_theorem_inputs(mes_M, H1, H2, u)
    power = M + N * (2.0 / e.alpha1 + 2.0 / e.alpha2 - 2.0)
    log_pre = (
        0.5 * M * math.log(2.0 * math.pi)
        - 0.5 * (2 * N - M) * math.log(-e.r2_zero)
        + (N / e.alpha1) * math.log(e.c1)
        + (N / e.alpha2) * math.log(e.c2)
        + math.log(mes_M)
        + math.log(H1)
        + math.log(H2)
        + (2 * N - M - 2.0 * N / e.alpha1 - 2.0 * N / e.alpha2) * math.log1p(e.rho)
    )
    return AsymptoticResult.from_parts(
        log_pre + _log_psi_constant(e.rho), power - 2.0, e.rho, u
    )


def matern_theorem1(
    m: BivariateMaternModel, u: float, H1: float, H2: float
) -> AsymptoticResult:
    """Standardized bivariate Matern field over [0,1]^N for both
    components; the pre-Psi power of u is N(1/nu1 + 1/nu2 - 1)."""
    return theorem1_value(local_expansion(m), 1.0, H1, H2, u)


def matern_theorem2(
    m: BivariateMaternModel, u: float, H1: float, H2: float
) -> AsymptoticResult:
    """Standardized bivariate Matern field over [0,1]^N and
    [0,1]^(N-1) x [1,2] (regions sharing part of their boundary);
    the pre-Psi power of u is N(1/nu1 + 1/nu2 - 1) - 1."""
    e = local_expansion(m)
    return theorem2_value(e, e.dim_N - 1, 1.0, H1, H2, u)


# ---------------------------------------------------------------------------
# delta(u) constant
# ---------------------------------------------------------------------------

def delta_lower_bound(e: LocalExpansion) -> float:
    """Lower bound on the band constant C coming from the off-diagonal
    suppression argument (positive part; 0 means any C > 0 suffices)."""
    N = e.dim_N
    inner = N * (
        2.0 / min(e.alpha1, e.alpha2) + 1.0 - 2.0 / e.alpha1 - 2.0 / e.alpha2
    ) + 1.0
    return math.sqrt(3.0 * (1.0 + e.rho) ** 2 / (-e.r2_zero) * max(inner, 0.0))


def default_delta_constant(
    e: LocalExpansion, multiplier: float = 1.5, floor: float = 3.0
) -> float:
    """Default C: multiplier times the lower bound, floored.

    The floor matters because the lower bound degenerates to 0 for
    configurations like alpha1 = alpha2 = 1, where any positive C is
    admissible asymptotically but a desk-scale check needs the band wide
    enough to capture the near-diagonal Gaussian mass.
    """
    return max(multiplier * delta_lower_bound(e), floor)


# ---------------------------------------------------------------------------
# Riemann-sum check (Lemmas' kernel, summed directly)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiemannCheck:
    u: float
    h_sum: float
    limit_value: float
    ratio: float
    n_pairs: int
    regime: str  # "overlap" | "split"
    cells: str   # "intersect" | "subset"
    delta: float
    T_scale: float


def _cell_range(lo: float, hi: float, d: float) -> range:
    """Indices k with [k d, (k+1) d] meeting [lo, hi] (closed sets, so
    face-touching cells count)."""
    k_min = math.ceil(lo / d) - 1
    while (k_min + 1) * d < lo:
        k_min += 1
    k_max = math.floor(hi / d)
    while k_max * d > hi:
        k_max -= 1
    return range(k_min, k_max + 1)


def _cells_of_union(boxes: Sequence[Rect], d: float) -> dict:
    """Map cell index tuple -> list of (cell intersect box) pieces."""
    cells: dict[tuple, list[Rect]] = {}
    for box in boxes:
        ranges = [
            _cell_range(box.lo[j], box.hi[j], d) for j in range(box.dim)
        ]
        for k in product(*ranges):
            cell = Rect(tuple(kj * d for kj in k), tuple((kj + 1) * d for kj in k))
            piece = cell.intersect(box)
            if piece is not None:
                cells.setdefault(k, []).append(piece)
    return cells


def _limit_value(e: LocalExpansion, regime: str, M: int, mes: float,
                 T: float, u: float) -> float:
    N = e.dim_N
    if regime == "overlap":
        return (
            (2.0 * math.pi) ** (N / 2.0)
            * (-e.r2_zero) ** (-N / 2.0)
            * (1.0 + e.rho) ** N
            * T ** (-2.0 * N)
            * mes
            * u ** (N * (2.0 / e.alpha1 + 2.0 / e.alpha2 - 1.0))
        )
    return (
        (2.0 * math.pi) ** (M / 2.0)
        * (-e.r2_zero) ** (M / 2.0 - N)
        * (1.0 + e.rho) ** (2.0 * N - M)
        * T ** (-2.0 * N)
        * mes
        * u ** (M + N * (2.0 / e.alpha1 + 2.0 / e.alpha2 - 2.0))
    )


def riemann_sum_check(
    e: LocalExpansion,
    d: DomainPair,
    cross_r: Callable[[np.ndarray], np.ndarray],
    T_scale: float,
    C_delta: float,
    u: float,
    cells: str = "intersect",
) -> RiemannCheck:
    """Sum the double-sum kernel h(u) over cell pairs and compare with the
    closed-form limit for the domain pair's regime.

    cells = "intersect" uses pairs whose cell product meets the band D;
    cells = "subset" restricts to cell products contained in D. Both
    converge to the same limit.
    """
    N = d.dim_N
    if e.dim_N != N:
        raise ValueError("expansion dimension does not match the domains")
    if N not in (1, 2):
        raise ValueError("simulation-scale check supports N in {1, 2} only")
    if cells not in ("intersect", "subset"):
        raise ValueError(f"unknown cell mode {cells!r}")
    if not (T_scale > 0 and C_delta > 0 and u > 1):
        raise ValueError("need T_scale > 0, C_delta > 0, u > 1")

    d1 = T_scale * u ** (-2.0 / e.alpha1)
    d2 = T_scale * u ** (-2.0 / e.alpha2)
    delta = C_delta * math.sqrt(math.log(u)) / u

    all_boxes = list(d.A1) + list(d.A2)
    diam = math.sqrt(
        sum(
            (max(b.hi[j] for b in all_boxes) - min(b.lo[j] for b in all_boxes)) ** 2
            for j in range(N)
        )
    )
    if not (delta < diam):
        raise ValueError(
            f"delta(u) = {delta:.4g} must stay below the domain diameter "
            f"{diam:.4g}; increase u or decrease C"
        )
    if not (max(d1, d2) < delta):
        raise ValueError(
            f"cell sides d_i(u) = ({d1:.4g}, {d2:.4g}) must stay below "
            f"delta(u) = {delta:.4g}; increase u or decrease T"
        )

    mes_overlap = d.mes_intersection()
    if mes_overlap > 0.0:
        regime, M, mes = "overlap", N, mes_overlap
    else:
        if d.split_M is None:
            raise ValueError(
                "domains have zero-measure intersection but no split_M "
                "structure; the split-regime limit needs it"
            )
        regime, M = "split", d.split_M
        mes = d.mes_shared_face()
        if M > 0 and mes <= 0.0:
            raise ValueError("split regime needs mes_M(A1_M and A2_M) > 0")

    n_cells_estimate = sum(
        math.prod(len(_cell_range(b.lo[j], b.hi[j], d1)) for j in range(N))
        for b in d.A1
    )
    win = int(2.0 * (delta + d1 + d2) / d2) + 3
    budget = n_cells_estimate * win**N
    if budget > _CELL_BUDGET:
        raise CellBudgetError(
            f"about {budget:.2e} cell pairs exceed the budget {_CELL_BUDGET:.0e}; "
            "use a smaller u or a larger T_scale"
        )
    cells1 = _cells_of_union(d.A1, d1)

    one_over_1p_rho = 1.0 / (1.0 + e.rho)
    partials: list[float] = []
    n_pairs = 0
    lax = delta + d1 + d2  # tau window slack covering piece geometry

    for k, pieces1 in sorted(cells1.items()):
        if cells == "subset":
            cell_k = Rect(
                tuple(kj * d1 for kj in k), tuple((kj + 1) * d1 for kj in k)
            )
            if not union_covers(d.A1, cell_k):
                continue
            s_lo = np.array(cell_k.lo)
            s_hi = np.array(cell_k.hi)

        # candidate l window per axis from the tau range
        axes = [
            np.arange(
                math.floor((k[j] * d1 - lax) / d2),
                math.floor(((k[j] + 1) * d1 + lax) / d2) + 2,
            )
            for j in range(N)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        ls = np.column_stack([g.ravel() for g in mesh])  # (n_cand, N)

        t_lo_cell = ls * d2
        t_hi_cell = (ls + 1) * d2

        if cells == "intersect":
            member = np.zeros(len(ls), dtype=bool)
            for p1 in pieces1:
                p_lo, p_hi = np.array(p1.lo), np.array(p1.hi)
                for box2 in d.A2:
                    b_lo, b_hi = np.array(box2.lo), np.array(box2.hi)
                    t_lo = np.maximum(t_lo_cell, b_lo)
                    t_hi = np.minimum(t_hi_cell, b_hi)
                    valid = np.all(t_lo <= t_hi, axis=1)
                    gap = np.maximum(
                        np.maximum(t_lo - p_hi, p_lo - t_hi), 0.0
                    )
                    dist2 = np.sum(gap * gap, axis=1)
                    member |= valid & (dist2 <= delta * delta)
        else:
            far = np.maximum(
                np.abs(t_hi_cell - s_lo), np.abs(s_hi - t_lo_cell)
            )
            member = np.sum(far * far, axis=1) <= delta * delta
            if np.any(member):
                # cell l must lie inside A2 (single-box fast path, exact
                # union coverage for stragglers)
                inside_one = np.zeros(len(ls), dtype=bool)
                for box2 in d.A2:
                    b_lo, b_hi = np.array(box2.lo), np.array(box2.hi)
                    inside_one |= np.all(
                        (t_lo_cell >= b_lo) & (t_hi_cell <= b_hi), axis=1
                    )
                pending = member & ~inside_one
                if np.any(pending) and len(d.A2) > 1:
                    for i in np.nonzero(pending)[0]:
                        cell_l = Rect(tuple(t_lo_cell[i]), tuple(t_hi_cell[i]))
                        inside_one[i] = union_covers(d.A2, cell_l)
                member &= inside_one

        if not np.any(member):
            continue
        tau = ls[member] * d2 - np.array(k, dtype=float) * d1
        tau_norm = np.sqrt(np.sum(tau * tau, axis=1))
        r_vals = np.asarray(cross_r(tau_norm), dtype=float)
        g_vals = 1.0 / (1.0 + r_vals) - one_over_1p_rho
        partials.append(float(np.sum(np.exp(-u * u * g_vals))))
        n_pairs += int(np.count_nonzero(member))

    h_sum = math.fsum(partials)
    limit = _limit_value(e, regime, M, mes, T_scale, u)
    return RiemannCheck(
        u=u,
        h_sum=h_sum,
        limit_value=limit,
        ratio=h_sum / limit,
        n_pairs=n_pairs,
        regime=regime,
        cells=cells,
        delta=delta,
        T_scale=T_scale,
    )
