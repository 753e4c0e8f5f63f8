"""Local/offload execution time and energy for one user's slot workload."""

from __future__ import annotations

from dataclasses import dataclass


class ComputeError(ValueError):
    pass


@dataclass(frozen=True)
class SlotCost:
    t_local_s: float
    t_offload_s: float
    e_local_j: float
    e_offload_j: float

    @property
    def t_total_s(self) -> float:
        # completion time is the sum of the two phases
        return self.t_local_s + self.t_offload_s

    @property
    def e_total_j(self) -> float:
        return self.e_local_j + self.e_offload_j


def local_cost(offload_ratio: float, bits: float, cycles_per_bit: float,
               cpu_hz: float, cpu_coeff: float) -> tuple[float, float]:
    """Time and energy to compute the retained (1 - o) fraction locally.

    t = (1-o) * bits * cycles_per_bit / f, and the CPU draws kappa f^3 watts,
    so E = (1-o) * kappa * f^2 * bits * cycles_per_bit.
    """
    if cpu_hz <= 0:
        raise ComputeError("cpu frequency must be > 0")
    if not 0.0 <= offload_ratio <= 1.0:
        raise ComputeError("offload ratio must lie in [0, 1]")
    kept = (1.0 - offload_ratio) * bits * cycles_per_bit
    t = kept / cpu_hz
    return t, cpu_coeff * cpu_hz ** 2 * kept


def offload_cost(offload_ratio: float, bits: float, power_w: float,
                 rate_bps: float) -> tuple[float, float]:
    """Transmission time and radio energy for the offloaded fraction."""
    if not 0.0 <= offload_ratio <= 1.0:
        raise ComputeError("offload ratio must lie in [0, 1]")
    sent = offload_ratio * bits
    if sent == 0.0:
        return 0.0, 0.0
    if rate_bps <= 0:
        raise ComputeError("offloading with a zero rate is infeasible")
    t = sent / rate_bps
    return t, power_w * t


def slot_cost(offload_ratio: float, bits: float, cycles_per_bit: float,
              cpu_hz: float, cpu_coeff: float, power_w: float,
              rate_bps: float) -> SlotCost:
    t_loc, e_loc = local_cost(offload_ratio, bits, cycles_per_bit, cpu_hz, cpu_coeff)
    t_off, e_off = offload_cost(offload_ratio, bits, power_w, rate_bps)
    return SlotCost(t_local_s=t_loc, t_offload_s=t_off,
                    e_local_j=e_loc, e_offload_j=e_off)


def latency_feasible(cost: SlotCost, deadline_s: float) -> bool:
    """Closed inequality: total completion time within the deadline."""
    return cost.t_total_s <= deadline_s
