"""Command-line entry point.

Subcommands:
  train   -- train one agent on a scenario/scheme, write episodes.csv and a
             checkpoint
  sweep   -- cross-product experiment over one variable, write sweep CSVs
             (and optional SVG line plot)
  verify  -- run the built-in oracle suite, one pass/fail line per check

Every run writes a manifest (manifest.json) whose config hash covers all
knobs that affect results; outputs are byte-stable for a fixed hash.
``STARMEC_THREADS`` caps the sweep worker pool.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

from . import orchestrator as orch
from .agents import make_agent
from .env import MecEnv
from .orchestrator import EVAL_EPISODE_OFFSET, SweepSpec
from .scenario import Scenario, ScenarioError, load_scenario, scenario_to_text, substream


def config_hash(sc: Scenario, extra: dict) -> str:
    payload = scenario_to_text(sc) + json.dumps(extra, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def write_manifest(out: Path, command: str, scenario_path: str, sc: Scenario,
                   extra: dict, finished: bool = False) -> dict:
    manifest = {
        "command": command,
        "scenario": str(scenario_path),
        "seed": sc.seed,
        "out": str(out),
        "config_hash": config_hash(sc, extra),
        "args": extra,
        "status": "finished" if finished else "running",
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario, seed=args.seed)
    changes = {}
    if getattr(args, "episodes", None) is not None:
        changes["rl"] = sc.rl.__class__(**{**sc.rl.__dict__, "episodes": args.episodes})
    if changes:
        sc = sc.replace(**changes)
    return sc


# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    sc = _load(args)
    sc_mode = orch.scheme_scenario(sc, args.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"agent": args.agent, "mode": args.mode, "episodes": sc.rl.episodes}
    write_manifest(out, "train", args.scenario, sc_mode, extra)

    env = MecEnv(sc_mode, collect_sfp_trace=args.trace_sfp)
    agent = make_agent(args.agent, env.state_dim, env.n_actions, sc_mode.rl,
                       substream(sc_mode.seed, orch._AGENT_SPACE))
    if args.resume:
        agent.load(args.resume)
    learn_rng = substream(sc_mode.seed, orch._LEARN_SPACE)
    records = []
    for ep in range(sc_mode.rl.episodes):
        rng = substream(sc_mode.seed, orch._ACT_SPACE, ep)
        records.append(orch.run_episode(env, agent, ep, rng, train=True,
                                        learn_rng=learn_rng, scheme=args.mode))
    orch.write_episodes_csv(out / "episodes.csv", records)
    agent.save(out / "checkpoint.npz")

    if args.trace_sfp:
        with open(out / "sfp_trace.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "iteration", "merit_j"])
            for slot, trace in enumerate(env.sfp_traces[-sc_mode.num_slots:]):
                for it, value in enumerate(trace):
                    writer.writerow([slot, it, repr(value)])
    if args.dump_channels:
        _dump_channels(out / "channels.csv", sc_mode, agent)

    write_manifest(out, "train", args.scenario, sc_mode, extra, finished=True)
    print(f"trained {args.agent} on '{args.mode}' for {sc_mode.rl.episodes} episodes; "
          f"outputs in {out}")
    return 0


def _dump_channels(path: Path, sc: Scenario, agent) -> None:
    """One greedy evaluation episode's per-user link quality trace."""
    env = MecEnv(sc)
    rng = substream(sc.seed, orch._ACT_SPACE, EVAL_EPISODE_OFFSET)
    state = env.reset(EVAL_EPISODE_OFFSET)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "user", "gain", "sinr", "rate_bps"])
        for slot in range(sc.num_slots):
            action = agent.act(state, rng, greedy=True)
            state, _reward, info = env.step(action)
            for k in range(sc.num_users):
                writer.writerow([slot, k, repr(float(info["gains"][k])),
                                 repr(float(info["sinr"][k])),
                                 repr(float(info["rates"][k]))])


def cmd_sweep(args) -> int:
    sc = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = tuple(float(v) for v in args.grid.split(","))
    seeds = tuple(sc.seed + i for i in range(args.seeds))
    schemes = tuple(args.schemes.split(","))
    spec = SweepSpec(variable=args.sweep, grid=grid, seeds=seeds,
                     schemes=schemes, agent=args.agent)
    extra = {"sweep": args.sweep, "grid": list(grid), "seeds": list(seeds),
             "schemes": list(schemes), "agent": args.agent,
             "episodes": sc.rl.episodes}
    write_manifest(out, "sweep", args.scenario, sc, extra)

    rows = orch.run_sweep(sc, spec)
    csv_path = out / f"sweep_{args.sweep}.csv"
    orch.write_sweep_csv(csv_path, rows)
    summary = orch.summarize_sweep(rows)
    orch.write_sweep_summary_csv(out / f"sweep_{args.sweep}_summary.csv", summary)
    if args.plot:
        _plot_sweep(out / f"sweep_{args.sweep}.svg", args.sweep, summary)

    write_manifest(out, "sweep", args.scenario, sc, extra, finished=True)
    print(f"swept {args.sweep} over {grid} x {len(schemes)} scheme(s) x "
          f"{len(seeds)} seed(s); wrote {csv_path}")
    return 0


def _plot_sweep(path: Path, variable: str, summary: list[dict]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for scheme in sorted({row["scheme"] for row in summary}):
        pts = [r for r in summary if r["scheme"] == scheme]
        pts.sort(key=lambda r: r["value"])
        ax.errorbar([r["value"] for r in pts],
                    [r["energy_mean_j"] for r in pts],
                    yerr=[r["energy_std_j"] for r in pts],
                    marker="o", capsize=3, label=scheme)
    ax.set_xlabel(variable)
    ax.set_ylabel("evaluation energy (J)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_verify(args) -> int:
    from .verify import run_checks

    names = [args.check] if args.check else None
    results = run_checks(names)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starmec",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--seed", type=int, default=None, help="override file seed")
        p.add_argument("--out", default="starmec_out", help="output directory")
        p.add_argument("--agent", default="ddqn", choices=["ddqn", "dqn", "mab"])
        p.add_argument("--episodes", type=int, default=None,
                       help="override training episode count")

    p_train = sub.add_parser("train", help="train one agent on one scheme")
    common(p_train)
    p_train.add_argument("--mode", default="proposed",
                         choices=sorted(orch.SCHEMES))
    p_train.add_argument("--trace-sfp", action="store_true",
                         help="dump per-slot power-solver convergence traces")
    p_train.add_argument("--dump-channels", action="store_true",
                         help="dump per-user gain/SINR/rate for one evaluation episode")
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="sweep one variable over a grid")
    common(p_sweep)
    p_sweep.add_argument("--sweep", required=True, choices=orch.SWEEP_VARIABLES)
    p_sweep.add_argument("--grid", required=True,
                         help="comma-separated values, e.g. 16,32,64,128")
    p_sweep.add_argument("--seeds", type=int, default=1,
                         help="seeds per grid point (seed, seed+1, ...)")
    p_sweep.add_argument("--schemes", default="proposed",
                         help="comma-separated scheme list")
    p_sweep.add_argument("--plot", action="store_true", help="emit an SVG line plot")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the built-in oracle suite")
    p_verify.add_argument("--check", default=None,
                          help="run a single named check")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
