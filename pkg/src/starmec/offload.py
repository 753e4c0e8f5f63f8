"""Partial-offloading split for one slot, solved exactly.

With powers and rates frozen, each user's energy is affine in the offload
ratio o, so the slot problem is a continuous knapsack: a box interval per
user from the deadline, plus one coupling cap on total server cycles.
Users whose net slope is negative are pushed to their upper bounds in
ascending slope order until the cap binds, with a fractional cutoff at the
margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OffloadError(ValueError):
    pass


@dataclass(frozen=True)
class OffloadProblem:
    bits: np.ndarray            # (K,) task sizes S
    cycles_per_bit: np.ndarray  # (K,)
    cpu_hz: np.ndarray          # (K,)
    cpu_coeff: float
    powers: np.ndarray          # (K,) transmit powers (watts)
    rates: np.ndarray           # (K,) uplink rates (bits/s); 0 = dead link
    deadlines: np.ndarray       # (K,) seconds
    server_cycles: float        # coupling cap C0


@dataclass(frozen=True)
class OffloadSolution:
    ratios: np.ndarray
    objective: float            # total energy at the returned ratios
    lower: np.ndarray           # per-user feasible interval actually used
    upper: np.ndarray
    latency_infeasible: np.ndarray  # bool mask of clamped users
    capacity_scaled: bool       # True when even the lower bounds overran C0


def energy_slopes(prob: OffloadProblem) -> tuple[np.ndarray, np.ndarray]:
    """Constant and slope of E_k(o) = const_k + slope_k * o.

    The offload term uses p*S/r; a dead link makes the slope infinite, which
    keeps such users pinned at their interval's lower end.
    """
    const = prob.cpu_coeff * prob.cpu_hz ** 2 * prob.bits * prob.cycles_per_bit
    with np.errstate(divide="ignore", invalid="ignore"):
        off_per_unit = np.where(prob.rates > 0,
                                prob.powers * prob.bits / prob.rates, np.inf)
    return const, off_per_unit - const


def latency_interval(prob: OffloadProblem, k: int) -> tuple[float, float, bool]:
    """Feasible [lo, hi] for user k from t_loc + t_off <= D, within [0, 1].

    When the interval is empty the user is clamped to the point of minimal
    total latency and flagged.
    """
    t_full_local = prob.bits[k] * prob.cycles_per_bit[k] / prob.cpu_hz[k]
    if prob.rates[k] > 0:
        t_unit_off = prob.bits[k] / prob.rates[k]
    else:
        t_unit_off = np.inf
    d = prob.deadlines[k]
    slope = t_unit_off - t_full_local   # latency = t_full_local + o * slope
    if slope > 0:
        if t_full_local <= d:
            return 0.0, float(min(1.0, (d - t_full_local) / slope)), False
        return 0.0, 0.0, True
    if slope < 0:
        if t_full_local + slope <= d:
            return float(min(1.0, max(0.0, (t_full_local - d) / -slope))), 1.0, False
        return 1.0, 1.0, True
    if t_full_local <= d:
        return 0.0, 1.0, False
    return 0.0, 0.0, True


def solve_offloading(prob: OffloadProblem, strict: bool = True) -> OffloadSolution:
    """Exact minimizer of total energy under box, deadline and cycle cap.

    ``strict=False`` downgrades the all-users-infeasible error to a clamped
    minimal-violation solution so a simulation slot can proceed under
    penalty.
    """
    k_count = prob.bits.shape[0]
    lo = np.zeros(k_count)
    hi = np.zeros(k_count)
    infeasible = np.zeros(k_count, dtype=bool)
    for k in range(k_count):
        lo[k], hi[k], infeasible[k] = latency_interval(prob, k)
    if strict and np.all(infeasible):
        raise OffloadError(
            f"no user can meet its deadline (users {list(np.flatnonzero(infeasible))})")

    weights = prob.bits * prob.cycles_per_bit          # server cycles per unit o
    const, slopes = energy_slopes(prob)

    ratios = lo.copy()
    used = float(np.dot(weights, ratios))
    capacity_scaled = False
    if used > prob.server_cycles:
        # deadline-forced offloading alone overruns the server; scale back
        # proportionally and let the caller account the deadline violations
        ratios *= prob.server_cycles / used
        capacity_scaled = True
    else:
        budget = prob.server_cycles - used
        order = np.argsort(slopes, kind="stable")
        for k in order:
            if slopes[k] >= 0:
                break
            head = hi[k] - ratios[k]
            if head <= 0:
                continue
            if weights[k] > 0:
                head = min(head, budget / weights[k])
            ratios[k] += head
            budget -= head * weights[k]
            if budget <= 0:
                break

    # a dead link is pinned at ratio 0; guard the inf * 0 product
    objective = float(np.sum(const + np.where(ratios > 0, slopes, 0.0) * ratios))
    return OffloadSolution(ratios=ratios, objective=objective, lower=lo,
                           upper=hi, latency_infeasible=infeasible,
                           capacity_scaled=capacity_scaled)
