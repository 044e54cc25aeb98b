"""Two-step load and redundancy optimization for the round deadline.

Step 1 maximizes each node's expected return (data points whose gradient
arrives by a deadline t) over that node's load; the objective is piecewise
concave in the load with breakpoints at mu*(t - nu*tau).  Step 2 bisects
on t until the summed optimal returns hit the global mini-batch size.
"""

import math
from dataclasses import dataclass

import numpy as np

from .delays import NodeProfile, cdf_delay

__all__ = [
    "AllocationResult",
    "ConcavePiece",
    "InfeasibleAllocationError",
    "expected_return",
    "concavity_pieces",
    "maximize_node_return",
    "lambert_w_minus1",
    "awgn_optimal_load",
    "awgn_optimal_return",
    "total_expected_return",
    "solve_allocation",
    "integerize_loads",
]

_TAIL_EPS = 1e-18       # negative-binomial tail cutoff, exact at double precision
_PIECE_REL_TOL = 1e-9   # within-piece maximizer bracket width, relative
_BISECT_REL_WIDTH = 1e-10
_T_INFEASIBLE = 1e12    # deadline beyond which a demand is declared infeasible
_NEG_INV_E = -math.exp(-1.0)


class InfeasibleAllocationError(ValueError):
    """The demanded expected return cannot be met at any finite deadline."""


@dataclass(frozen=True)
class ConcavePiece:
    """Open load interval on which the expected return is concave."""

    lo: float
    hi: float


@dataclass(frozen=True)
class AllocationResult:
    """Optimal deadline with per-node loads (server redundancy last)."""

    t_star: float
    loads: tuple[float, ...]
    expected_return: float


def expected_return(profile: NodeProfile, load: float, t: float) -> float:
    """Expected number of points returned by t: load * P(T <= t)."""
    if load <= 0 or t <= 0:
        return 0.0
    return load * cdf_delay(profile, load, t)


def _nu_kept(p: float, nu_max: int) -> int:
    # Largest transmission count whose negative-binomial weight still
    # matters at double precision.
    if p == 0.0:
        return 2
    cut = 2 + int(math.ceil(math.log(_TAIL_EPS) / math.log(p)))
    return min(nu_max, max(cut, 2))


def concavity_pieces(profile: NodeProfile, t: float) -> list[ConcavePiece]:
    """Concavity intervals of the expected return in the load.

    Breakpoints sit at mu*(t - nu*tau) for nu = nu_max down to 2, where
    nu_max is the largest integer with t - nu*tau > 0.  Intervals are
    intersected with (0, ell_max]; the list is empty when t <= 2*tau.
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    cap = profile.ell_max
    if cap <= 0:
        return []
    if profile.ideal:
        return [ConcavePiece(0.0, float(cap))]
    mu, tau = profile.mu, profile.tau
    if t <= 2.0 * tau:
        return []
    nu_max = math.ceil(t / tau) - 1
    if nu_max < 2:
        return []
    pieces = []
    lo = 0.0
    for nu in range(nu_max, 1, -1):
        if lo >= cap:
            break
        hi = mu * (t - nu * tau)
        if hi <= lo:
            continue
        pieces.append(ConcavePiece(lo, min(hi, float(cap))))
        lo = hi
    return pieces


def maximize_node_return(profile: NodeProfile, t: float) -> tuple[float, float]:
    """Argmax and max of the expected return over loads in [0, ell_max].

    Runs a derivative-sign bisection inside every concavity piece (the
    derivative is closed-form), then compares piece optima and endpoints.
    Ties break toward the smaller load.  Returns (0, 0) when t <= 2*tau.
    """
    cap = float(profile.ell_max)
    if profile.ideal:
        return (cap, cap) if (t > 0 and cap > 0) else (0.0, 0.0)
    mu, alpha, tau, p = profile.mu, profile.alpha, profile.tau, profile.p
    if t <= 2.0 * tau or cap <= 0:
        return (0.0, 0.0)
    nu_max = math.ceil(t / tau) - 1
    if nu_max < 2:
        return (0.0, 0.0)

    kept = _nu_kept(p, nu_max)
    nus = np.arange(2, kept + 1, dtype=np.float64)
    weights = (nus - 1.0) * (1.0 - p) ** 2 * p ** (nus - 2.0)
    coef = alpha * mu * (t - nus * tau)  # all positive since kept <= nu_max

    # Piece boundaries in load space, ascending.  All breakpoints below
    # mu*(t - kept*tau) involve terms of negligible weight, so the whole
    # bottom region collapses to a single concave piece.
    lows, highs, masks = [], [], []
    lo = 0.0
    for nu in range(kept, 1, -1):
        if lo >= cap:
            break
        hi = mu * (t - nu * tau)
        if hi <= lo:
            continue
        lows.append(lo)
        highs.append(min(hi, cap))
        masks.append(nus <= nu)
        lo = hi
    if not lows:  # cap sits below the lowest breakpoint
        lows, highs, masks = [0.0], [cap], [np.ones_like(nus, dtype=bool)]

    lo_v = np.asarray(lows)
    hi_v = np.asarray(highs)
    mask = np.asarray(masks)
    piece_tops = hi_v.copy()
    lo_v = np.maximum(lo_v, 1e-12 * hi_v)  # derivative is +inf-safe away from 0

    def deriv(loads: np.ndarray) -> np.ndarray:
        # d/dl of sum_nu w_nu * l * (1 - exp(alpha - c_nu/l)), per piece.
        x = coef[None, :] / loads[:, None]
        term = 1.0 - np.exp(alpha - x) * (1.0 + x)
        return np.sum(np.where(mask, weights * term, 0.0), axis=1)

    for _ in range(64):
        mid = 0.5 * (lo_v + hi_v)
        pos = deriv(mid) > 0.0
        lo_v = np.where(pos, mid, lo_v)
        hi_v = np.where(pos, hi_v, mid)
        if np.all(hi_v - lo_v <= _PIECE_REL_TOL * hi_v):
            break

    candidates = np.concatenate([0.5 * (lo_v + hi_v), piece_tops, [cap]])
    candidates = np.unique(np.clip(candidates, 0.0, cap))
    candidates = candidates[candidates > 0.0]

    x = coef[None, :] / candidates[:, None]
    gated = np.where(x > alpha, -np.expm1(alpha - x), 0.0)
    values = candidates * np.sum(weights * gated, axis=1)

    best_load, best_val = 0.0, 0.0
    for load, val in zip(candidates, values):
        if val > best_val:
            best_load, best_val = float(load), float(val)
    return best_load, best_val


def lambert_w_minus1(x: float) -> float:
    """Lower real branch of the Lambert W function, w <= -1 with w e^w = x.

    Halley iteration from the asymptotic guess ln(-x) - ln(-ln(-x)),
    safeguarded by a bracketing bisection; a series expansion handles the
    neighborhood of the branch point -1/e.
    """
    if x < _NEG_INV_E or x >= 0.0:
        raise ValueError(f"x must be in [-1/e, 0), got {x}")
    r = 1.0 + math.e * x
    if r <= 1e-12:  # branch-point series, O(r^1.5) accurate
        s = math.sqrt(max(2.0 * r, 0.0))
        return -1.0 - s - s * s / 3.0

    lx = math.log(-x)
    w = lx - math.log(-lx)
    # Bracket: w*e^w - x is decreasing on (-inf, -1], positive far left.
    hi = -1.0
    lo = min(w, hi) - 1.0
    while lo * math.exp(lo) - x <= 0.0:
        lo = 2.0 * lo
    w = min(max(w, lo), hi)

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        if f > 0.0:
            lo = w
        else:
            hi = w
        fp = ew * (w + 1.0)
        denom = fp - f * (w + 2.0) / (2.0 * (w + 1.0))
        step = f / denom if denom != 0.0 else 0.0
        w_new = w - step
        if not lo < w_new < hi:
            w_new = 0.5 * (lo + hi)
        if abs(w_new - w) <= 1e-15 * abs(w_new):
            w = w_new
            break
        w = w_new
    return w


def _awgn_slope(profile: NodeProfile) -> float:
    # s = -alpha*mu / (W_{-1}(-e^{-(1+alpha)}) + 1), the per-second load
    # growth of the unconstrained optimum.
    w = lambert_w_minus1(-math.exp(-(1.0 + profile.alpha)))
    return -profile.alpha * profile.mu / (w + 1.0)


def awgn_optimal_load(profile: NodeProfile, t: float) -> float:
    """Closed-form optimal load for a failure-free link (p = 0)."""
    if profile.p != 0.0:
        raise ValueError("closed form requires p = 0")
    tau = profile.tau
    if t <= 2.0 * tau:
        return 0.0
    s = _awgn_slope(profile)
    zeta = profile.ell_max / s + 2.0 * tau
    if t <= zeta:
        return s * (t - 2.0 * tau)
    return float(profile.ell_max)


def awgn_optimal_return(profile: NodeProfile, t: float) -> float:
    """Closed-form optimal expected return for a failure-free link (p = 0)."""
    if profile.p != 0.0:
        raise ValueError("closed form requires p = 0")
    mu, alpha, tau = profile.mu, profile.alpha, profile.tau
    if t <= 2.0 * tau:
        return 0.0
    s = _awgn_slope(profile)
    zeta = profile.ell_max / s + 2.0 * tau
    if t <= zeta:
        s_tilde = s * -math.expm1(-alpha * (mu / s - 1.0))
        return s_tilde * (t - 2.0 * tau)
    ell = profile.ell_max
    return ell * -math.expm1(-(alpha * mu / ell) * (t - ell / mu - 2.0 * tau))


def total_expected_return(profiles: list[NodeProfile], t: float) -> float:
    """Sum of per-node optimal expected returns at deadline t."""
    if t <= 0:
        return 0.0
    total = 0.0
    for profile in profiles:
        if profile.ideal:
            total += profile.ell_max
        elif profile.p == 0.0:
            total += awgn_optimal_return(profile, t)
        else:
            total += maximize_node_return(profile, t)[1]
    return total


def _optimal_loads(profiles: list[NodeProfile], t: float) -> tuple[float, ...]:
    loads = []
    for profile in profiles:
        if profile.ideal:
            loads.append(float(profile.ell_max) if t > 0 else 0.0)
        elif profile.p == 0.0:
            loads.append(awgn_optimal_load(profile, t))
        else:
            loads.append(maximize_node_return(profile, t)[0])
    return tuple(loads)


def solve_allocation(profiles: list[NodeProfile], m: float) -> AllocationResult:
    """Smallest deadline t* whose maximal expected total return equals m.

    Doubles an upper bound from max_j 2*tau_j until the return reaches m,
    then bisects on the monotone return curve.  Raises
    InfeasibleAllocationError when the caps sum below m, or when the
    return still falls short at t = 1e12 s (the demand is only reachable
    in the infinite-deadline limit).
    """
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    cap_total = sum(p.ell_max for p in profiles)
    stochastic_cap = sum(p.ell_max for p in profiles if not p.ideal)
    if cap_total < m:
        raise InfeasibleAllocationError(
            f"total load capacity {cap_total} falls short of demand {m} "
            f"by {m - cap_total}"
        )
    if cap_total == m and stochastic_cap > 0:
        # meeting the demand would need P(T <= t) = 1 at full load on a
        # stochastic node, which no finite deadline achieves
        raise InfeasibleAllocationError(
            f"demand {m} equals the total capacity; the expected return "
            "reaches it only in the infinite-deadline limit"
        )

    non_ideal = [p for p in profiles if not p.ideal]
    hi = max((2.0 * p.tau for p in non_ideal), default=1.0)
    lo = 0.0
    while total_expected_return(profiles, hi) < m:
        lo = hi
        hi *= 2.0
        if hi > _T_INFEASIBLE:
            reach = total_expected_return(profiles, _T_INFEASIBLE)
            if reach < m:
                raise InfeasibleAllocationError(
                    f"expected return reaches only {reach} of {m} at "
                    f"t = {_T_INFEASIBLE:.0e} s; demand is met only in the "
                    "infinite-deadline limit"
                )
            hi = _T_INFEASIBLE
            break

    while hi - lo > _BISECT_REL_WIDTH * hi:
        mid = 0.5 * (lo + hi)
        if total_expected_return(profiles, mid) >= m:
            hi = mid
        else:
            lo = mid

    t_star = hi
    return AllocationResult(
        t_star=t_star,
        loads=_optimal_loads(profiles, t_star),
        expected_return=total_expected_return(profiles, t_star),
    )


def integerize_loads(
    profiles: list[NodeProfile], allocation: AllocationResult, m: float
) -> list[int]:
    """Round real-valued loads down for the trainer.

    The rounding slack is absorbed by a +1 bump of the server redundancy
    (last entry) when the integer-load expected return drops below m - 1
    and the server cap allows it.
    """
    ints = [int(math.floor(load)) for load in allocation.loads]
    t = allocation.t_star

    def ret(loads: list[int]) -> float:
        total = 0.0
        for profile, load in zip(profiles, loads):
            if profile.ideal:
                total += load
            else:
                total += expected_return(profile, load, t)
        return total

    if ret(ints) < m - 1 and ints[-1] + 1 <= profiles[-1].ell_max:
        ints[-1] += 1
    return ints
