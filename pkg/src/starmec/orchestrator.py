"""End-to-end episode running, benchmark schemes, queue baselines and sweeps.

Training protocol: an agent is trained on a scenario for the configured
episode count, then evaluated greedily (no exploration) on fresh seeded
episodes; reported figures are evaluation means.  Episode indices for
evaluation start at a large offset so their random streams never collide
with training episodes.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import make_agent
from .env import EnvOptions, MecEnv, SlotDecision
from .scenario import Scenario, substream

_AGENT_SPACE = 0xA6E
_ACT_SPACE = 0xAC7
_LEARN_SPACE = 0x1EA
EVAL_EPISODE_OFFSET = 1_000_000

SCHEMES: dict[str, tuple[str, str]] = {
    "proposed": ("active_star", "partial"),
    "full_astar": ("active_star", "full"),
    "p_star": ("passive_star", "partial"),
    "a_ris": ("active_reflect", "partial"),
    "p_ris": ("passive_reflect", "partial"),
}
SWEEP_VARIABLES = ("input_size", "elements", "cpu_freq", "deadline",
                   "antennas", "users")


@dataclass
class EpisodeRecord:
    episode: int
    scheme: str
    cumulative_reward: float
    total_energy_j: float
    mean_backlog_bits: float
    violations: dict[str, int] = field(default_factory=dict)
    backlog_trace: np.ndarray | None = None
    decisions: list[SlotDecision] | None = None

    @property
    def violation_total(self) -> int:
        return int(sum(self.violations.values()))


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple[float, ...]
    seeds: tuple[int, ...]
    schemes: tuple[str, ...] = ("proposed",)
    agent: str = "ddqn"

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable '{self.variable}'")
        if not self.grid:
            raise ValueError("sweep grid must be nonempty")
        if not self.seeds:
            raise ValueError("need at least one seed per sweep point")


def scheme_scenario(sc: Scenario, scheme: str) -> Scenario:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme '{scheme}' (choose from {sorted(SCHEMES)})")
    ris_mode, offload_mode = SCHEMES[scheme]
    return sc.replace(ris_mode=ris_mode, offload_mode=offload_mode)


def apply_sweep_value(sc: Scenario, variable: str, value: float) -> Scenario:
    if variable == "input_size":
        return sc.replace(task_bits_range=(float(value), float(value)))
    if variable == "elements":
        return sc.replace(num_elements=int(value))
    if variable == "cpu_freq":
        return sc.replace(cpu_freq_range_hz=(float(value), float(value)))
    if variable == "deadline":
        return sc.replace(deadline_range_s=(float(value), float(value)))
    if variable == "antennas":
        return sc.replace(num_bs_antennas=int(value))
    if variable == "users":
        k = int(value)
        return sc.replace(num_users=k, num_reflect_users=(k + 1) // 2,
                          num_transmit_users=k // 2)
    raise ValueError(f"unknown sweep variable '{variable}'")


# ---------------------------------------------------------------------------
# episodes

def run_episode(env: MecEnv, agent, episode: int, rng: np.random.Generator,
                train: bool = True, learn_rng: np.random.Generator | None = None,
                scheme: str = "proposed", record_decisions: bool = False) -> EpisodeRecord:
    """Run one episode; when training, every transition is stored and learned."""
    state = env.reset(episode)
    if train:
        agent.begin_episode()
    n = env.sc.num_slots
    rewards = np.empty(n)
    energies = np.empty(n)
    backlog = np.empty(n)
    violations: dict[str, int] = {}
    decisions: list[SlotDecision] | None = [] if record_decisions else None
    for slot in range(n):
        action = agent.act(state, rng, greedy=not train)
        next_state, reward, info = env.step(action)
        if train:
            agent.observe(state, action, reward, next_state, learn_rng or rng)
        state = next_state
        dec: SlotDecision = info["decision"]
        rewards[slot] = reward
        energies[slot] = dec.energy_j
        backlog[slot] = dec.backlog_bits
        for key, count in dec.violations.items():
            violations[key] = violations.get(key, 0) + count
        if decisions is not None:
            decisions.append(dec)
    return EpisodeRecord(
        episode=episode, scheme=scheme,
        cumulative_reward=float(np.sum(rewards)),
        total_energy_j=float(np.sum(energies)),
        mean_backlog_bits=float(np.mean(backlog)),
        violations=violations, backlog_trace=backlog, decisions=decisions,
    )


def train_agent(sc: Scenario, agent_kind: str = "ddqn",
                options: EnvOptions | None = None, scheme: str = "proposed",
                episodes: int | None = None,
                progress=None) -> tuple[object, MecEnv, list[EpisodeRecord]]:
    """Train a fresh agent on the scenario; returns agent, env and records."""
    env = MecEnv(sc, options)
    agent = make_agent(agent_kind, env.state_dim, env.n_actions, sc.rl,
                       substream(sc.seed, _AGENT_SPACE))
    learn_rng = substream(sc.seed, _LEARN_SPACE)
    records = []
    total = episodes if episodes is not None else sc.rl.episodes
    for ep in range(total):
        rng = substream(sc.seed, _ACT_SPACE, ep)
        records.append(run_episode(env, agent, ep, rng, train=True,
                                   learn_rng=learn_rng, scheme=scheme))
        if progress is not None:
            progress(ep, records[-1])
    return agent, env, records


def evaluate_agent(env: MecEnv, agent, episodes: int, scheme: str = "proposed",
                   record_decisions: bool = False) -> list[EpisodeRecord]:
    """Greedy evaluation on fresh episode seeds."""
    records = []
    for i in range(episodes):
        ep = EVAL_EPISODE_OFFSET + i
        rng = substream(env.sc.seed, _ACT_SPACE, ep)
        records.append(run_episode(env, agent, ep, rng, train=False,
                                   scheme=scheme, record_decisions=record_decisions))
    return records


def run_benchmark(sc: Scenario, scheme: str, agent_kind: str = "ddqn",
                  eval_episodes: int | None = None,
                  record_decisions: bool = False):
    """Train and evaluate one scheme; returns (agent, eval records)."""
    sc_mode = scheme_scenario(sc, scheme)
    agent, env, _ = train_agent(sc_mode, agent_kind, scheme=scheme)
    evals = evaluate_agent(env, agent, eval_episodes or sc.rl.eval_episodes,
                           scheme=scheme, record_decisions=record_decisions)
    return agent, evals


def run_queue_baseline(sc: Scenario, kind: str, agent_kind: str = "ddqn",
                       eval_episodes: int | None = None):
    """Greedy (myopic, queue-blind) or centralized (single server queue)."""
    if kind == "greedy":
        options = EnvOptions(admit_all=True, drop_drift=True,
                             zero_queue_features=True)
    elif kind == "centralized":
        options = EnvOptions(centralized_queue=True)
    else:
        raise ValueError(f"unknown queue baseline '{kind}'")
    agent, env, _ = train_agent(sc, agent_kind, options=options, scheme=kind)
    evals = evaluate_agent(env, agent, eval_episodes or sc.rl.eval_episodes,
                           scheme=kind)
    return agent, evals


# ---------------------------------------------------------------------------
# sweeps

def _sweep_point(args):
    base, variable, value, seed, scheme, agent_kind, eval_episodes = args
    sc = apply_sweep_value(base, variable, value).replace(seed=seed)
    _, evals = run_benchmark(sc, scheme, agent_kind, eval_episodes=eval_episodes)
    return {
        "scheme": scheme,
        "value": value,
        "seed": seed,
        "cumulative_reward": float(np.mean([r.cumulative_reward for r in evals])),
        "energy_j": float(np.mean([r.total_energy_j for r in evals])),
        "mean_backlog_bits": float(np.mean([r.mean_backlog_bits for r in evals])),
        "violations": int(np.sum([r.violation_total for r in evals])),
    }


def worker_count() -> int:
    cap = os.environ.get("STARMEC_THREADS")
    if cap is not None:
        return max(1, int(cap))
    return 1


def run_sweep(base: Scenario, spec: SweepSpec,
              eval_episodes: int | None = None) -> list[dict]:
    """Full cross product of scheme x grid-value x seed, order-stable."""
    jobs = [(base, spec.variable, value, seed, scheme, spec.agent,
             eval_episodes or base.rl.eval_episodes)
            for scheme in spec.schemes
            for value in spec.grid
            for seed in spec.seeds]
    workers = worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    return rows


def summarize_sweep(rows: list[dict]) -> list[dict]:
    """Per (scheme, value) mean and standard deviation over seeds."""
    keys = sorted({(r["scheme"], r["value"]) for r in rows},
                  key=lambda t: (t[0], t[1]))
    out = []
    for scheme, value in keys:
        vals = [r for r in rows if r["scheme"] == scheme and r["value"] == value]
        energies = np.array([r["energy_j"] for r in vals])
        rewards = np.array([r["cumulative_reward"] for r in vals])
        backlogs = np.array([r["mean_backlog_bits"] for r in vals])
        out.append({
            "scheme": scheme, "value": value, "seeds": len(vals),
            "energy_mean_j": float(np.mean(energies)),
            "energy_std_j": float(np.std(energies)),
            "reward_mean": float(np.mean(rewards)),
            "reward_std": float(np.std(rewards)),
            "backlog_mean_bits": float(np.mean(backlogs)),
            "backlog_std_bits": float(np.std(backlogs)),
        })
    return out


# ---------------------------------------------------------------------------
# CSV emission

EPISODE_HEADER = ["episode", "scheme", "cumulative_reward", "energy_J",
                  "mean_backlog_bits", "violations"]
SWEEP_HEADER = ["scheme", "value", "seed", "cumulative_reward", "energy_J",
                "mean_backlog_bits", "violations"]


def write_episodes_csv(path: str | Path, records: list[EpisodeRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_HEADER)
        for rec in records:
            writer.writerow([rec.episode, rec.scheme,
                             repr(rec.cumulative_reward),
                             repr(rec.total_energy_j),
                             repr(rec.mean_backlog_bits),
                             rec.violation_total])


def write_sweep_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow([row["scheme"], repr(float(row["value"])),
                             row["seed"], repr(row["cumulative_reward"]),
                             repr(row["energy_j"]),
                             repr(row["mean_backlog_bits"]),
                             row["violations"]])


def write_sweep_summary_csv(path: str | Path, summary: list[dict]) -> None:
    fields = ["scheme", "value", "seeds", "energy_mean_j", "energy_std_j",
              "reward_mean", "reward_std", "backlog_mean_bits", "backlog_std_bits"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in summary:
            writer.writerow([row["scheme"], repr(float(row["value"])), row["seeds"]]
                            + [repr(row[k]) for k in fields[3:]])
