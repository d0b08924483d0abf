"""Command-line experiment runner.

Every command writes a JSON run manifest next to its outputs recording the
command line, configuration, seeds, output paths, SHA-256 checksums and wall
time. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agent import (DatasetEnv, EnvironmentDataError, NumericError, evaluate_policy, load_hyperparams,
                    load_params, policy_table, save_params, train)
from .config import Config, ConfigError, config_from_dict, load_config
from .dataset import (DatasetError, canonical_load, load_dataset, normalization_bounds, save_dataset,
                      sweep_states)
from .mdp import N_STATES, apply_action, decode_action, state_from_index, state_index
from .oracle import grid_search, save_ranking
from .reward import RewardWeights

log = logging.getLogger("uav_iab")

EVAL_HEADER = ("episode", "dl_p50", "dl_p5", "dl_drop", "ul_p50", "ul_p5", "ul_drop", "reward")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: list
    config: dict | None = None
    seeds: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    checksums: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    version: str = __version__

    def add_output(self, name: str, path: Path):
        self.outputs[name] = str(path)
        self.checksums[name] = sha256_file(path)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")


def write_manifest(manifest: RunManifest, output: str | Path, started: float) -> Path:
    manifest.wall_time_s = round(time.perf_counter() - started, 6)
    path = manifest_path(output)
    atomic_write_text(path, json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(output: str | Path) -> dict | None:
    path = manifest_path(output)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        log.warning("ignoring unreadable manifest %s", path)
        return None


def _dataset_load(dataset, requested: str | None) -> str:
    loads = dataset.loads()
    if requested is not None:
        load = canonical_load(requested)
        if load not in loads:
            raise DatasetError(f"dataset has no {load} records (has {', '.join(loads) or 'none'})")
        return load
    if len(loads) != 1:
        raise DatasetError(f"dataset holds loads {loads}; choose one with --load")
    return loads[0]


def _weights(text: str) -> RewardWeights:
    try:
        return RewardWeights.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _load_choice(text: str) -> str:
    if text.lower() not in ("light", "heavy"):
        raise argparse.ArgumentTypeError(f"load must be light or heavy, got {text!r}")
    return text.lower()


def cmd_gen_dataset(args, manifest: RunManifest) -> int:
    config = load_config(args.config)
    seeds = list(range(args.seed, args.seed + args.seeds))
    manifest.config = config.to_dict()
    manifest.seeds = seeds
    dataset = sweep_states(config, args.load, seeds, sim_duration=args.duration, workers=args.workers)
    save_dataset(dataset, args.out)
    manifest.add_output("dataset", args.out)
    print(f"wrote {len(dataset)} states ({canonical_load(args.load)}, {len(seeds)} seeds) to {args.out}")
    return 0


def cmd_oracle(args, manifest: RunManifest) -> int:
    dataset = load_dataset(args.dataset)
    manifest.inputs["dataset"] = sha256_file(args.dataset)
    load = _dataset_load(dataset, args.load)
    manifest.config = {"weights": str(args.weights), "load": load}
    result = grid_search(dataset, normalization_bounds(dataset), args.weights, load)
    save_ranking(result, args.out)
    manifest.add_output("ranking", args.out)
    print(f"weights {args.weights}")
    print(f"load {load}: best state {result.best_state} reward {result.best_reward:.6f}")
    return 0


def cmd_train(args, manifest: RunManifest) -> int:
    hyper = load_hyperparams(args.hyper)
    dataset = load_dataset(args.dataset)
    manifest.inputs["dataset"] = sha256_file(args.dataset)
    manifest.config = {"hyperparams": asdict(hyper), "weights": str(args.weights)}
    manifest.seeds = [args.seed]
    load = _dataset_load(dataset, args.load)
    env = DatasetEnv(dataset, load, normalization_bounds(dataset), args.weights)
    params, trace = train(env, hyper, args.seed)
    save_params(params, args.out, load)
    lines = ["iteration,epsilon,reward,loss"]
    lines += [f"{r.iteration},{r.epsilon:.17g},{r.reward:.17g},{r.loss:.17g}" for r in trace]
    Path(args.trace).write_text("\n".join(lines) + "\n")
    manifest.add_output("model", args.out)
    manifest.add_output("trace", args.trace)
    if trace and not args.no_figure:
        from .plots import render_trace
        figure = Path(args.trace).with_suffix(".svg")
        render_trace([r.iteration for r in trace], [r.reward for r in trace], figure)
        manifest.add_output("trace_figure", figure)
    rewards = np.array([r.reward for r in trace])
    if len(rewards):
        w = min(100, len(rewards))
        print(f"trained {len(trace)} iterations on {load}: first-{w} mean reward {rewards[:w].mean():.4f}, "
              f"last-{w} mean reward {rewards[-w:].mean():.4f}")
    return 0


def cmd_eval(args, manifest: RunManifest) -> int:
    params, model_load = load_params(args.model)
    dataset = load_dataset(args.dataset)
    manifest.inputs = {"model": sha256_file(args.model), "dataset": sha256_file(args.dataset)}
    manifest.seeds = [args.seed]
    load = _dataset_load(dataset, args.load or model_load)
    if model_load is not None and canonical_load(model_load) != load:
        raise DatasetError(f"model was trained on {model_load} but evaluation uses {load}")
    manifest.config = {"episodes": args.episodes, "steps": args.steps, "weights": str(args.weights), "load": load}
    env = DatasetEnv(dataset, load, normalization_bounds(dataset), args.weights)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0xE7A1]))
    starts = rng.integers(N_STATES, size=args.episodes)
    rows = []
    for k, start in enumerate(starts):
        rec = evaluate_policy(params, env, args.steps, int(start))
        m = rec.metrics
        rows.append((k, m.a_dl50, m.a_dl5, m.beta_dl, m.a_ul50, m.a_ul5, m.beta_ul, rec.reward))
    mean = np.mean(np.array([r[1:] for r in rows]), axis=0)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVAL_HEADER)
        for row in rows:
            writer.writerow([row[0], *(f"{v:.9g}" for v in row[1:])])
        writer.writerow(["mean", *(f"{v:.9g}" for v in mean)])
    manifest.add_output("evaluation", args.out)
    print(f"{args.episodes} episodes x {args.steps} steps on {load}: mean reward {mean[-1]:.6f}")
    return 0


def cmd_export_plots(args, manifest: RunManifest) -> int:
    from . import plots

    dataset = load_dataset(args.dataset)
    manifest.inputs["dataset"] = sha256_file(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source = read_manifest(args.dataset)
    if args.config is not None:
        config = load_config(args.config)
    elif source and source.get("config"):
        config = config_from_dict(source["config"])
    else:
        config = Config()
    manifest.config = config.to_dict()
    tilt_rows, pos_rows = [], []
    for load in dataset.loads():
        n_seeds = dataset.for_load(load)[0].n_seeds if 0 in dataset.for_load(load) else 1
        seeds = list(source["seeds"]) if source and source.get("seeds") else list(range(n_seeds))
        manifest.seeds = seeds
        backhaul = None
        if not args.skip_backhaul:
            backhaul = plots.backhaul_se_grid(config, load, seeds)
        rows = plots.tilt_height_rows(dataset, load, backhaul)
        tilt_rows += rows
        prow = plots.position_rows(dataset, load)
        pos_rows += prow
        for name, render, data in (("tilt_height", plots.render_tilt_height, rows),
                                   ("position", plots.render_position, prow)):
            figure = out / f"{name}_{load.lower()}.svg"
            render(data, figure)
            manifest.add_output(figure.stem, figure)
    plots.write_rows(out / "tilt_height.csv", plots.TILT_HEADER, tilt_rows)
    plots.write_rows(out / "position.csv", plots.POSITION_HEADER, pos_rows)
    manifest.add_output("tilt_height", out / "tilt_height.csv")
    manifest.add_output("position", out / "position.csv")
    print(f"wrote plot data and figures for {', '.join(dataset.loads())} to {out}")
    return 0


def _policy_actor(model_path: str, start: int):
    from .signaling import Actor

    params, _ = load_params(model_path)
    greedy = policy_table(params)
    state = {"s": int(start)}

    def act(round_no: int) -> str:
        action = int(greedy[state["s"]])
        nxt = apply_action(state_from_index(state["s"]), action)
        state["s"] = state_index(nxt)
        digits = "".join(str(d) for d in decode_action(action))
        return f"round={round_no} action={digits} state={nxt}"

    actor: Actor = act
    return actor


def cmd_signal_demo(args, manifest: RunManifest) -> int:
    from .signaling import Topology, execute, save_log, validate_log

    topology = Topology(args.users, args.ground_bs)
    actor = None
    if args.model is not None:
        manifest.inputs["model"] = sha256_file(args.model)
        start = int(np.random.default_rng(args.seed).integers(N_STATES))
        actor = _policy_actor(args.model, start)
    manifest.seeds = [args.seed]
    manifest.config = {"rounds": args.rounds, "users": args.users, "ground_bs": args.ground_bs}
    run = execute(args.rounds, topology, actor)
    check = validate_log(run.log)
    if not check:
        raise RuntimeError(f"generated log failed validation at entry {check.index}: {check.reason}")
    save_log(run.log, args.out)
    manifest.add_output("event_log", args.out)
    print(f"{len(run.log)} messages over {args.rounds} rounds; log valid; steps "
          + " ".join(run.log.step_sequence()[:8]) + (" ..." if args.rounds > 1 else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uav-iab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="simulate every UAV state and write the dataset CSV")
    p.add_argument("--config", type=Path, help="YAML config file (defaults used when omitted)")
    p.add_argument("--load", type=_load_choice, required=True)
    p.add_argument("--seeds", type=_positive_int, default=10, help="number of user drops per state")
    p.add_argument("--seed", type=int, default=0, help="first drop seed")
    p.add_argument("--duration", type=float, help="simulated seconds per drop (config value by default)")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("oracle", help="exhaustive search for the best state")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--weights", type=_weights, default=RewardWeights(), help="w_drop,w_p5,w_p50")
    p.add_argument("--load", type=_load_choice)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("train", help="train the Q-network on a dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--hyper", type=Path, help="YAML hyperparameter file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", type=_weights, default=RewardWeights())
    p.add_argument("--load", type=_load_choice)
    p.add_argument("--out", type=Path, required=True, help="model file")
    p.add_argument("--trace", type=Path, required=True, help="per-iteration trace CSV")
    p.add_argument("--no-figure", action="store_true", help="skip the SVG rendering of the trace")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy rollouts of a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--episodes", type=_positive_int, default=100)
    p.add_argument("--steps", type=_positive_int, default=100, help="steps per episode")
    p.add_argument("--seed", type=int, default=0, help="seed for the start states")
    p.add_argument("--weights", type=_weights, default=RewardWeights())
    p.add_argument("--load", type=_load_choice)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-plots", help="tidy CSVs and SVG figures of the tilt and position sweeps")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--config", type=Path, help="config for the backhaul re-simulation")
    p.add_argument("--skip-backhaul", action="store_true", help="omit the re-simulated backhaul SE")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_export_plots)

    p = sub.add_parser("signal-demo", help="run the signaling procedure and write its event log")
    p.add_argument("--rounds", type=_positive_int, default=3)
    p.add_argument("--users", type=int, default=2)
    p.add_argument("--ground-bs", type=int, default=2)
    p.add_argument("--model", type=Path, help="drive the UAV's actions with a trained model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_signal_demo)
    return parser


RUNTIME_ERRORS = (ConfigError, DatasetError, EnvironmentDataError, NumericError, OSError, ValueError, RuntimeError)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    manifest = RunManifest(command=["uav-iab", *argv])
    output = args.out
    try:
        code = args.func(args, manifest)
        write_manifest(manifest, output, started)
        return code
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
