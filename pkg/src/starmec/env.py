"""Slot-level control environment tying the radio, solver and queue layers
together.

Each step applies one discrete action to the surface/admission state, then
runs the two per-slot solvers (transmit power, then offload split), executes
the slot and returns the shaped reward.

Action catalog: one multiplicative factor per controlled vector, applied
uniformly across elements/users (amplitude split, amplification, admission),
plus a +-1 quantizer-grid shift applied to both phase vectors.  With the
default three factors per knob this yields 3^4 = 81 actions.

Feature scales (documented contract for the state vector):
  * equivalent gain:  log10(||g_k||^2 / gain_scale + 1e-12), where
    gain_scale is the incoherent cascade power at the region centroids;
  * amplitude splits: raw beta_r in [0, 1];
  * phases:           phi / 2 pi;
  * amplification:    amp / amp_max;
  * backlogs:         Q / (10 * mean arrival size).

Reward scales: queue quantities enter the drift term and the queue slack in
units of the mean arrival size; the power slack is relative to the budget;
latency slacks are relative to each deadline.  Energy enters in joules.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import queueing
from .offload import OffloadProblem, solve_offloading
from .power_control import PowerProblem, sfp_solve
from .scenario import Scenario, sample_arrivals, sample_task_bits, sample_users, substream

_USER_SPACE = 0x05E
_EPISODE_SPACE = 0xE11

O_PILOT = 0.01       # offload floor used only to keep power probing alive
ADMIT_LEVEL_MIN_REL = 0.01   # of the mean arrival size
ADMIT_LEVEL_MAX_REL = 2.0    # of the largest arrival size


def piecewise_revenue(x: float, revenue: float) -> float:
    """Slack transform: flat revenue when satisfied, raw shortfall when not."""
    return revenue if x >= 0 else x


def reward_value(dpp: float, queue_slack, power_slack: float, latency_slack,
                 admission_slack, weights, revenue: float,
                 cost_sign: float = -1.0) -> float:
    """Combine the drift-plus-penalty value and the four slack families."""
    z1, z2, z3, z4, z5 = weights
    total = z1 * cost_sign * dpp
    total += z2 * sum(piecewise_revenue(x, revenue) for x in np.atleast_1d(queue_slack))
    total += z3 * piecewise_revenue(power_slack, revenue)
    total += z4 * sum(piecewise_revenue(x, revenue) for x in np.atleast_1d(latency_slack))
    total += z5 * sum(piecewise_revenue(x, revenue) for x in np.atleast_1d(admission_slack))
    return float(total)


def action_catalog(sc: Scenario) -> list[tuple[float, int, float, float]]:
    """(beta factor, phase grid shift, amp factor, admission factor) tuples."""
    factors = sc.increment_factors
    shifts = (-1, 0, 1)
    return list(itertools.product(factors, shifts, factors, factors))


@dataclass(frozen=True)
class EnvOptions:
    """Structural overrides for baselines and ablations."""

    admit_all: bool = False            # j = J every slot
    drop_drift: bool = False           # reward uses V * energy only
    centralized_queue: bool = False    # one aggregate backlog at the server
    zero_queue_features: bool = False  # blind the agent to backlogs


@dataclass
class SlotDecision:
    """Full control tuple and outcome for one slot."""

    slot: int
    action: int
    offload: np.ndarray
    beta_r: np.ndarray
    phi_r: np.ndarray
    phi_t: np.ndarray
    amp: np.ndarray
    powers: np.ndarray
    admitted: np.ndarray
    energy_j: float
    reward: float
    backlog_bits: float
    latency_s: np.ndarray
    violations: dict = field(default_factory=dict)


class MecEnv:
    """Seeded slot simulator for one scenario."""

    def __init__(self, sc: Scenario, options: EnvOptions | None = None,
                 collect_sfp_trace: bool = False):
        self.sc = sc
        self.options = options or EnvOptions()
        self.collect_sfp_trace = collect_sfp_trace
        self.users = sample_users(sc, substream(sc.seed, _USER_SPACE))
        self.sides = [u.side for u in self.users]
        self.cpu_hz = np.array([u.cpu_freq_hz for u in self.users])
        self.cycles = np.array([u.cycles_per_bit for u in self.users])
        self.deadlines = np.array([u.deadline_s for u in self.users])
        self.catalog = action_catalog(sc)
        self.n_actions = len(self.catalog)
        k, m = sc.num_users, sc.num_elements
        self.state_dim = 2 * k + 4 * m
        self._grid_step = ch.phase_grid_step(sc.phase_bits)
        self._gain_scale = self._nominal_gain_scale()
        self._arrival_mean = float(np.mean(sc.arrival_bits_range))
        self._queue_scale = 10.0 * self._arrival_mean
        self._level_lo = ADMIT_LEVEL_MIN_REL * self._arrival_mean
        self._level_hi = ADMIT_LEVEL_MAX_REL * sc.arrival_bits_range[1]
        self.sfp_traces: list[list[float]] = []
        self.reset(0)

    # -- helpers --------------------------------------------------------------

    def _nominal_gain_scale(self) -> float:
        sc = self.sc
        ris = np.asarray(sc.ris_position)
        d_b = float(np.linalg.norm(np.asarray(sc.bs_position) - ris))
        cents = []
        for region in (sc.reflect_region, sc.transmit_region):
            x_lo, y_lo, x_hi, y_hi = region
            cents.append(((x_lo + x_hi) / 2, (y_lo + y_hi) / 2, 0.0))
        d_u = float(np.mean([np.linalg.norm(np.asarray(c) - ris) for c in cents]))
        return (sc.ref_gain ** 2 * d_u ** (-sc.path_loss_exp)
                * d_b ** (-sc.path_loss_exp) * sc.num_elements * sc.num_bs_antennas)

    def observe(self) -> np.ndarray:
        sc = self.sc
        gains = ch.equivalent_gains(self.channels, self.ris, self.sides)
        q_feat = self.queue / self._queue_scale
        if self.options.zero_queue_features:
            q_feat = np.zeros_like(q_feat)
        return np.concatenate([
            np.log10(gains / self._gain_scale + 1e-12),
            self.ris.beta_r,
            self.ris.phi_r / (2 * np.pi),
            self.ris.phi_t / (2 * np.pi),
            self.ris.amp / sc.amp_max,
            q_feat,
        ])

    def _draw_channels(self):
        self.channels = ch.sample_channels(self.sc, self.users, self._slot,
                                           rng=self._chan_rng)

    # -- MDP surface ----------------------------------------------------------

    def reset(self, episode: int) -> np.ndarray:
        sc = self.sc
        self.episode = episode
        self._slot = 0
        self._chan_rng = substream(sc.seed, _EPISODE_SPACE, episode, 0)
        self._task_rng = substream(sc.seed, _EPISODE_SPACE, episode, 1)
        self.ris = ch.initial_ris_state(sc)
        self.queue = np.zeros(sc.num_users)
        self.central_queue = 0.0
        self.offload_prev = np.full(sc.num_users, 0.5)
        self.admit_level = np.full(sc.num_users, self._arrival_mean)
        self.sfp_traces = []
        self._draw_channels()
        return self.observe()

    def apply_action(self, action: int) -> None:
        beta_f, shift, amp_f, adm_f = self.catalog[action]
        ris = self.ris
        self.ris = ch.project_ris(
            ch.RisState(
                beta_r=ris.beta_r * beta_f,
                phi_r=ris.phi_r + shift * self._grid_step,
                phi_t=ris.phi_t + shift * self._grid_step,
                amp=ris.amp * amp_f,
            ),
            self.sc,
        )
        self.admit_level = np.clip(self.admit_level * adm_f,
                                   self._level_lo, self._level_hi)

    def step(self, action: int):
        sc = self.sc
        opts = self.options
        self.apply_action(action)
        realization, ris = self.channels, self.ris

        tasks = sample_task_bits(sc, self._task_rng, sc.num_users)
        arrivals = sample_arrivals(sc, self._task_rng, sc.num_users)

        if opts.centralized_queue:
            scale = 1.0 if tasks.sum() == 0 else min(1.0, self.central_queue / tasks.sum())
            executed = tasks * scale
        else:
            executed = np.minimum(tasks, self.queue)

        # Power control is sized for a latency-feasible planning split: the
        # carried-over split, raised where needed so the local share leaves
        # at least half the deadline for transmission.  This breaks the
        # bootstrap deadlock between the power and offload subproblems.
        o_eff = np.clip(self.offload_prev, O_PILOT, 1.0)
        gains = ch.equivalent_gains(realization, ris, self.sides)
        fwd = {s: ch.forwarded_noise(realization, ris, sc, s) for s in ("r", "t")}
        noise = np.array([fwd[s] + sc.bs_noise_w for s in self.sides])
        with np.errstate(divide="ignore", invalid="ignore"):
            o_lat = np.where(executed > 0,
                             1.0 - 0.5 * self.deadlines * self.cpu_hz
                             / (executed * self.cycles), 0.0)
        o_plan = np.maximum(o_eff, np.clip(o_lat, 0.0, 1.0))
        kept_bits = (1.0 - o_plan) * executed
        t_loc_plan = kept_bits * self.cycles / self.cpu_hz
        head = np.maximum(self.deadlines - t_loc_plan, 0.0)
        with np.errstate(divide="ignore"):
            floors = np.where((o_plan * executed > 0) & (head > 0),
                              o_plan * executed / np.maximum(head, 1e-12), 0.0)
        amp_g2 = float(np.sum((ris.amp[:, None] * np.abs(realization.g_ris_bs)) ** 2))
        prob = PowerProblem(
            gains=gains, noise=noise,
            offload_bits=o_plan * executed,
            e_local=sc.cpu_coeff * self.cpu_hz ** 2 * kept_bits * self.cycles,
            bandwidth=sc.bandwidth_hz, p_max=sc.user_power_max_w,
            budget_total=sc.ris_power_budget_w, budget_coeff=amp_g2,
            budget_static=sc.ris_noise_w * float(np.sum(ris.amp ** 2)),
            rate_floors=floors,
        )
        res = sfp_solve(prob, sc.sfp, p_init=getattr(self, "_p_warm", None),
                        latency_mu=sc.sfp.latency_mu)
        powers = res.powers
        self._p_warm = powers.copy()
        if self.collect_sfp_trace:
            self.sfp_traces.append(res.merit_trace)

        total_rx = float(np.dot(gains, powers))
        denom = total_rx - gains * powers + noise
        rates = sc.bandwidth_hz * np.log1p(gains * powers / denom) / np.log(2.0)

        if sc.offload_mode == "full":
            ratios = np.ones(sc.num_users)
            capacity_scaled = False
        elif not np.any(executed > 0):
            ratios = self.offload_prev   # nothing to run; keep the carried split
            capacity_scaled = False
        else:
            sol = solve_offloading(OffloadProblem(
                bits=executed, cycles_per_bit=self.cycles, cpu_hz=self.cpu_hz,
                cpu_coeff=sc.cpu_coeff, powers=powers, rates=rates,
                deadlines=self.deadlines, server_cycles=sc.mec_capacity_cycles,
            ), strict=False)
            ratios = sol.ratios
            capacity_scaled = sol.capacity_scaled
        self.offload_prev = ratios

        # realized slot costs
        kept = (1.0 - ratios) * executed
        sent = ratios * executed
        t_loc = kept * self.cycles / self.cpu_hz
        e_loc = sc.cpu_coeff * self.cpu_hz ** 2 * kept * self.cycles
        with np.errstate(divide="ignore", invalid="ignore"):
            t_off = np.where(sent > 0, sent / rates, 0.0)
        dead = (sent > 0) & (rates <= 0)
        t_off = np.where(dead, np.inf, t_off)
        e_off = np.where(np.isfinite(t_off), powers * t_off, 0.0)
        energy = e_loc + e_off
        t_total = t_loc + t_off

        usage = ch.ris_power_usage(realization, ris, sc, powers)

        admitted = arrivals if opts.admit_all else np.minimum(self.admit_level, arrivals)
        if opts.centralized_queue:
            backlog_before = self.central_queue
            self.central_queue = queueing.step_queue(
                np.array([self.central_queue]), np.array([executed.sum()]),
                np.array([admitted.sum()]))[0]
            q_for_drift = np.array([backlog_before])
            s_for_drift = np.array([executed.sum()])
            j_for_drift = np.array([admitted.sum()])
            self.queue = np.full(sc.num_users, self.central_queue / sc.num_users)
        else:
            q_for_drift = self.queue
            s_for_drift = executed
            j_for_drift = admitted
            self.queue = queueing.step_queue(self.queue, executed, admitted)

        b = self._arrival_mean
        dpp = queueing.drift_plus_penalty(
            q_for_drift / b, s_for_drift / b, j_for_drift / b, energy, sc.lyapunov_v)
        if opts.drop_drift:
            dpp = sc.lyapunov_v * float(np.sum(energy))

        queue_slack = (q_for_drift - (tasks.sum() if opts.centralized_queue else tasks)) / b
        power_slack = (sc.ris_power_budget_w - usage) / sc.ris_power_budget_w
        latency_slack = (self.deadlines - t_total) / self.deadlines
        admission_slack = (arrivals - admitted) / b
        reward = reward_value(dpp, queue_slack, power_slack, latency_slack,
                              admission_slack, sc.reward_weights, sc.revenue,
                              sc.reward_cost_sign)

        violations = {
            "power_budget": int(usage > sc.ris_power_budget_w * (1 + 1e-9)),
            "latency": int(np.sum(t_total > self.deadlines * (1 + 1e-9))),
            "admission": int(np.sum(admitted > arrivals * (1 + 1e-9))),
            "queue_starved": int(np.sum(np.atleast_1d(queue_slack) < 0)),
            "capacity_scaled": int(capacity_scaled),
        }
        decision = SlotDecision(
            slot=self._slot, action=action, offload=ratios,
            beta_r=ris.beta_r.copy(), phi_r=ris.phi_r.copy(),
            phi_t=ris.phi_t.copy(), amp=ris.amp.copy(), powers=powers,
            admitted=admitted, energy_j=float(np.sum(energy)), reward=reward,
            backlog_bits=float(np.sum(self.queue)), latency_s=t_total,
            violations=violations,
        )

        self._slot += 1
        self._draw_channels()
        info = {
            "decision": decision,
            "budget_warning": res.budget_warning,
            "gains": gains,
            "sinr": gains * powers / denom,
            "rates": rates,
            "usage_w": usage,
        }
        return self.observe(), reward, info
