"""Experiment configuration: geometry, radio constants, task statistics and
solver/learning hyperparameters.

A scenario is immutable after loading and is safe to share across workers.
Scenario files are flat ``key = value`` text; keys match the field names
below, vector values are whitespace separated, and ``#`` starts a comment.
Unknown keys are rejected so typos surface immediately.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RIS_MODES = ("active_star", "passive_star", "active_reflect", "passive_reflect")
OFFLOAD_MODES = ("partial", "full")

# -174 dBm/Hz thermal density; noise power defaults integrate it over the
# configured bandwidth.
DEFAULT_NOISE_DBM_PER_HZ = -174.0


class ScenarioError(ValueError):
    """Raised for unparseable files or invariant violations (names the field)."""


@dataclass(frozen=True)
class RlParams:
    """Learning hyperparameters for the slot-control agent."""

    learning_rate: float = 0.001
    discount: float = 0.9
    eps_init: float = 1.0
    eps_min: float = 0.02
    eps_decay: float = 0.98          # per-episode multiplicative decay
    batch_size: int = 8
    replay_capacity: int = 10_000
    target_sync_period: int = 100    # steps between target-network refreshes
    episodes: int = 1000
    eval_episodes: int = 20
    hidden_width: int = 128
    num_blocks: int = 2


@dataclass(frozen=True)
class SfpParams:
    """Stopping rules and weights for the per-slot transmit-power solver."""

    tolerance_j: float = 1e-4
    max_outer: int = 50
    inner_iters: int = 60
    inner_tol: float = 1e-10
    latency_mu: float = 50.0   # hinge weight on unmet deadline-rate floors


@dataclass(frozen=True)
class Scenario:
    # population and hardware counts
    num_users: int = 20
    num_reflect_users: int = 10
    num_transmit_users: int = 10
    num_elements: int = 32
    num_bs_antennas: int = 4
    num_slots: int = 1000
    slot_length_s: float = 1.0

    # geometry (metres); regions are (x_lo, y_lo, x_hi, y_hi) at ground level
    bs_position: tuple[float, float, float] = (0.0, 0.0, 10.0)
    ris_position: tuple[float, float, float] = (-60.0, 50.0, 5.0)
    reflect_region: tuple[float, float, float, float] = (-50.0, 0.0, 100.0, 100.0)
    transmit_region: tuple[float, float, float, float] = (-240.0, 0.0, -70.0, 100.0)

    # radio constants
    bandwidth_hz: float = 2e6
    ref_gain: float = 1e-4           # linear power gain at 1 m
    path_loss_exp: float = 4.0
    rician_factor: float = 10.0
    noise_dbm_per_hz: float = DEFAULT_NOISE_DBM_PER_HZ
    ris_noise_w: float | None = None  # defaults to density * bandwidth
    bs_noise_w: float | None = None
    ris_power_budget_w: float = 0.01  # 10 dBm
    user_power_max_w: float = 0.1     # 20 dBm

    # task and computation statistics
    task_bits_range: tuple[float, float] = (30e6, 150e6)
    cycles_per_bit: float = 800.0
    deadline_range_s: tuple[float, float] = (1.0, 6.0)
    cpu_freq_range_hz: tuple[float, float] = (60e6, 180e6)
    cpu_coeff: float = 1e-28          # effective switched capacitance
    mec_capacity_cycles: float = 1e11  # server cycles available per slot
    arrival_rel_range: tuple[float, float] = (0.5, 1.5)  # x task-size midpoint

    # surface control
    phase_bits: int = 3
    amp_max: float = 10.0

    # reward shaping
    reward_weights: tuple[float, float, float, float, float] = (0.1, 0.8, 0.9, 0.9, 0.9)
    revenue: float = 1.0
    lyapunov_v: float = 100.0
    # -1 folds the drift-plus-penalty value into the reward as a cost (the
    # stabilising convention); +1 adds it verbatim.
    reward_cost_sign: float = -1.0

    # action catalog: multiplicative factors shared by the amplitude,
    # amplification and admission vectors; phases move by +/-1 grid step.
    increment_factors: tuple[float, float, float] = (0.95, 1.0, 1.05)

    ris_mode: str = "active_star"
    offload_mode: str = "partial"
    seed: int = 1

    rl: RlParams = field(default_factory=RlParams)
    sfp: SfpParams = field(default_factory=SfpParams)

    def __post_init__(self):
        if self.ris_noise_w is None:
            object.__setattr__(self, "ris_noise_w", self._thermal_noise_w())
        if self.bs_noise_w is None:
            object.__setattr__(self, "bs_noise_w", self._thermal_noise_w())
        validate(self)

    def _thermal_noise_w(self) -> float:
        return 10 ** (self.noise_dbm_per_hz / 10.0) * 1e-3 * self.bandwidth_hz

    @property
    def service_time_s(self) -> float:
        return self.num_slots * self.slot_length_s

    @property
    def task_bits_mid(self) -> float:
        lo, hi = self.task_bits_range
        return 0.5 * (lo + hi)

    @property
    def arrival_bits_range(self) -> tuple[float, float]:
        lo, hi = self.arrival_rel_range
        return (lo * self.task_bits_mid, hi * self.task_bits_mid)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def validate(sc: Scenario) -> None:
    """Check every scenario invariant; raise ScenarioError naming the field."""

    def require(cond: bool, msg: str) -> None:
        if not cond:
            raise ScenarioError(msg)

    require(sc.num_users >= 1, "num_users must be >= 1")
    require(sc.num_reflect_users >= 1, "num_reflect_users must be >= 1")
    require(sc.num_transmit_users >= 1, "num_transmit_users must be >= 1")
    require(
        sc.num_users == sc.num_reflect_users + sc.num_transmit_users,
        "num_users must equal num_reflect_users + num_transmit_users",
    )
    require(sc.num_elements >= 1, "num_elements must be >= 1")
    require(sc.num_bs_antennas >= 1, "num_bs_antennas must be >= 1")
    require(sc.num_slots >= 1, "num_slots must be >= 1")
    require(sc.slot_length_s > 0, "slot_length_s must be > 0")
    require(sc.path_loss_exp >= 2, "path_loss_exp must be >= 2")
    require(sc.bandwidth_hz > 0, "bandwidth_hz must be > 0")
    require(sc.ref_gain > 0, "ref_gain must be > 0")
    require(sc.rician_factor >= 0, "rician_factor must be >= 0")
    require(sc.ris_noise_w >= 0, "ris_noise_w must be >= 0")
    require(sc.bs_noise_w > 0, "bs_noise_w must be > 0")
    require(sc.ris_power_budget_w > 0, "ris_power_budget_w must be > 0")
    require(sc.user_power_max_w > 0, "user_power_max_w must be > 0")
    require(sc.cycles_per_bit > 0, "cycles_per_bit must be > 0")
    require(sc.cpu_coeff > 0, "cpu_coeff must be > 0")
    require(sc.mec_capacity_cycles > 0, "mec_capacity_cycles must be > 0")
    require(sc.phase_bits >= 1, "phase_bits must be >= 1")
    require(sc.amp_max >= 1, "amp_max must be >= 1")
    require(sc.revenue > 0, "revenue must be > 0")
    require(sc.lyapunov_v >= 0, "lyapunov_v must be >= 0")
    require(sc.reward_cost_sign in (-1.0, 1.0), "reward_cost_sign must be +-1")
    require(len(sc.reward_weights) == 5, "reward_weights must have 5 entries")
    require(all(f > 0 for f in sc.increment_factors), "increment_factors must be > 0")

    for name in ("task_bits_range", "deadline_range_s", "cpu_freq_range_hz",
                 "arrival_rel_range"):
        lo, hi = getattr(sc, name)
        require(lo <= hi, f"{name} must satisfy low <= high")
        require(lo > 0, f"{name} must be positive")

    for name in ("reflect_region", "transmit_region"):
        x_lo, y_lo, x_hi, y_hi = getattr(sc, name)
        require(x_lo <= x_hi and y_lo <= y_hi, f"{name} corners must be ordered")

    require(sc.ris_mode in RIS_MODES, f"ris_mode must be one of {RIS_MODES}")
    require(sc.offload_mode in OFFLOAD_MODES, f"offload_mode must be one of {OFFLOAD_MODES}")

    require(0 < sc.rl.discount < 1, "rl_discount must be in (0, 1)")
    require(0 < sc.rl.learning_rate, "rl_learning_rate must be > 0")
    require(0 <= sc.rl.eps_min <= sc.rl.eps_init <= 1, "exploration schedule out of range")
    require(0 < sc.rl.eps_decay <= 1, "rl_eps_decay must be in (0, 1]")
    require(sc.rl.batch_size >= 1, "rl_batch_size must be >= 1")
    require(sc.rl.replay_capacity >= sc.rl.batch_size, "rl_replay_capacity too small")
    require(sc.rl.target_sync_period >= 1, "rl_target_sync_period must be >= 1")
    require(sc.rl.episodes >= 1, "rl_episodes must be >= 1")
    require(sc.rl.eval_episodes >= 1, "rl_eval_episodes must be >= 1")
    require(sc.sfp.tolerance_j > 0, "sfp_tolerance_j must be > 0")
    require(sc.sfp.max_outer >= 1, "sfp_max_outer must be >= 1")
    require(sc.sfp.inner_iters >= 1, "sfp_inner_iters must be >= 1")
    require(sc.sfp.latency_mu >= 0, "sfp_latency_mu must be >= 0")


# ---------------------------------------------------------------------------
# file format

_TUPLE_FIELDS = {
    "bs_position": 3, "ris_position": 3,
    "reflect_region": 4, "transmit_region": 4,
    "task_bits_range": 2, "deadline_range_s": 2, "cpu_freq_range_hz": 2,
    "arrival_rel_range": 2, "reward_weights": 5, "increment_factors": 3,
}
_INT_FIELDS = {
    "num_users", "num_reflect_users", "num_transmit_users", "num_elements",
    "num_bs_antennas", "num_slots", "phase_bits", "seed",
}
_STR_FIELDS = {"ris_mode", "offload_mode"}
_RL_INT = {"batch_size", "replay_capacity", "target_sync_period", "episodes",
           "eval_episodes", "hidden_width", "num_blocks"}
_SFP_INT = {"max_outer", "inner_iters"}


def _scenario_keys() -> dict[str, str]:
    """Map of accepted file keys to ('scalar'|'rl'|'sfp') groups."""
    keys = {f.name: "scalar" for f in dataclasses.fields(Scenario)
            if f.name not in ("rl", "sfp")}
    keys.update({f"rl_{f.name}": "rl" for f in dataclasses.fields(RlParams)})
    keys.update({f"sfp_{f.name}": "sfp" for f in dataclasses.fields(SfpParams)})
    return keys


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    """Parse a scenario file; unspecified fields take the defaults above.

    ``seed`` overrides the file's seed when given.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    known = _scenario_keys()
    scalars: dict[str, object] = {}
    rl_kv: dict[str, object] = {}
    sfp_kv: dict[str, object] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ScenarioError(f"{path}:{lineno}: unknown key '{key}'")
        try:
            parsed = _parse_value(key, value)
        except ValueError as exc:
            raise ScenarioError(f"{path}:{lineno}: bad value for '{key}': {exc}")
        if known[key] == "rl":
            rl_kv[key[3:]] = parsed
        elif known[key] == "sfp":
            sfp_kv[key[4:]] = parsed
        else:
            scalars[key] = parsed
    if seed is not None:
        scalars["seed"] = int(seed)
    return Scenario(rl=RlParams(**rl_kv), sfp=SfpParams(**sfp_kv), **scalars)


def _parse_value(key: str, value: str):
    if key in _STR_FIELDS:
        return value
    if key in _TUPLE_FIELDS:
        parts = value.replace(",", " ").split()
        if len(parts) != _TUPLE_FIELDS[key]:
            raise ValueError(f"expected {_TUPLE_FIELDS[key]} numbers")
        return tuple(float(p) for p in parts)
    if key in _INT_FIELDS:
        return int(value)
    base = key.split("_", 1)[1] if key.startswith(("rl_", "sfp_")) else None
    if key.startswith("rl_") and base in _RL_INT:
        return int(value)
    if key.startswith("sfp_") and base in _SFP_INT:
        return int(value)
    return float(value)


def scenario_to_text(sc: Scenario) -> str:
    """Canonical serialization; load_scenario round-trips it bit-exactly."""
    lines = []
    for f in dataclasses.fields(Scenario):
        if f.name in ("rl", "sfp"):
            continue
        lines.append(f"{f.name} = {_format_value(getattr(sc, f.name))}")
    for f in dataclasses.fields(RlParams):
        lines.append(f"rl_{f.name} = {_format_value(getattr(sc.rl, f.name))}")
    for f in dataclasses.fields(SfpParams):
        lines.append(f"sfp_{f.name} = {_format_value(getattr(sc.sfp, f.name))}")
    return "\n".join(lines) + "\n"


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario_to_text(sc))


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, bool):
        raise TypeError("no boolean scenario fields")
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# user sampling

@dataclass(frozen=True)
class UserRecord:
    """Static per-user draw: position and task constants."""

    position: tuple[float, float, float]
    side: str                  # "r" (reflect) or "t" (transmit)
    cycles_per_bit: float
    deadline_s: float
    cpu_freq_hz: float


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent deterministic RNG stream for (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def sample_users(sc: Scenario, rng: np.random.Generator) -> list[UserRecord]:
    """Draw user positions and constants; reflect users first, then transmit."""
    users: list[UserRecord] = []
    for side, region, count in (
        ("r", sc.reflect_region, sc.num_reflect_users),
        ("t", sc.transmit_region, sc.num_transmit_users),
    ):
        x_lo, y_lo, x_hi, y_hi = region
        for _ in range(count):
            x = rng.uniform(x_lo, x_hi)
            y = rng.uniform(y_lo, y_hi)
            users.append(UserRecord(
                position=(x, y, 0.0),
                side=side,
                cycles_per_bit=sc.cycles_per_bit,
                deadline_s=rng.uniform(*sc.deadline_range_s),
                cpu_freq_hz=rng.uniform(*sc.cpu_freq_range_hz),
            ))
    return users


def sample_task_bits(sc: Scenario, rng: np.random.Generator, size: int) -> np.ndarray:
    """Per-slot task sizes S (bits) for each user."""
    lo, hi = sc.task_bits_range
    return rng.uniform(lo, hi, size=size)


def sample_arrivals(sc: Scenario, rng: np.random.Generator, size: int) -> np.ndarray:
    """Per-slot arriving bits J for each user (uniform around the task midpoint)."""
    lo, hi = sc.arrival_bits_range
    return rng.uniform(lo, hi, size=size)
