"""Command-line entry point: ``bipkit {simulate,train,infer,eval}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. ``BIPKIT_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from bipkit.basis import BasisConfig, basis_matrix
from bipkit.config import RunConfig, load_config
from bipkit.errors import BipError, ConfigError, LayoutError, ParseError
from bipkit.evaluation import evaluate_runs
from bipkit.interaction import Interaction, load_interaction, phase_grid, save_interaction
from bipkit.modelfile import load_model, save_model
from bipkit.prior import learn_prior
from bipkit.response import LoopRates, interaction_loop, replay_stream
from bipkit.simgen import (
    HandshakeWorld,
    child_seeds,
    default_layout,
    gen_demo_set,
    gen_static_trial,
    gen_test_scenario,
)

log = logging.getLogger("bipkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
SPEEDS = ("fast", "normal", "slow", "none")
SPEED_FACTORS = {"fast": 2.0, "normal": 1.0, "slow": 0.5, "none": 1.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=_seed, help="root seed (overrides the config)")
    common.add_argument("--basis", type=int, help="basis functions per DoF (overrides the config)")
    common.add_argument("--rates", help="sample,inference,execution rates in Hz (overrides the config)")
    common.add_argument("--out", type=Path, required=True, help="output directory")

    parser = _Parser(prog="bipkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="write synthetic demos, tests and static trials")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="learn a prior model from demonstration files")
    p.add_argument("demo_dir", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="replay interactions through the filter and responder")
    p.add_argument("model", type=Path)
    p.add_argument("inputs", type=Path, nargs="+", help="interaction files or directories")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="evaluate executed interactions")
    p.add_argument("runs_dir", type=Path)
    p.set_defaults(func=cmd_eval)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    rates = LoopRates.parse(args.rates) if args.rates else None
    return cfg.with_overrides(seed=args.seed, basis_count=args.basis, rates=rates)


def _interaction_files(paths) -> list[Path]:
    files = []
    for path in paths:
        if path.is_dir():
            files.extend(sorted(p for p in path.rglob("*.txt") if p.is_file()))
        elif path.is_file():
            files.append(path)
        else:
            raise FileNotFoundError(f"no such file or directory: {path}")
    return files


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _world(cfg: RunConfig) -> HandshakeWorld:
    sim = cfg.simulation
    return HandshakeWorld.default(default_layout(sim.observed_count, sim.controlled_count))


def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = cfg.simulation
    world = _world(cfg)
    rate = cfg.rates.sample_hz
    demo_seed, test_seed, static_seed = child_seeds(cfg.seed, 3)
    out = args.out
    manifest = {"seed": cfg.seed, "config": cfg.to_dict(), "tests": [], "static": []}

    demos = gen_demo_set(
        sim.targets,
        seed=demo_seed,
        repetitions=sim.repetitions,
        world=world,
        duration_s=sim.duration_s,
        sample_rate=rate,
        noise_sd=sim.noise_sd,
    )
    (out / "demos").mkdir(parents=True, exist_ok=True)
    for k, demo in enumerate(demos):
        save_interaction(demo, out / "demos" / f"demo_{k:03d}.txt")

    (out / "tests").mkdir(parents=True, exist_ok=True)
    for i, seed in enumerate(child_seeds(test_seed, sim.tests_per_speed)):
        endpoint = world.sample_endpoint(np.random.default_rng(seed))
        for speed in SPEEDS:
            motion_s = sim.duration_s / SPEED_FACTORS[speed]
            generated = gen_test_scenario(
                seed,
                speed,
                world=world,
                duration_s=sim.duration_s,
                sample_rate=rate,
                noise_sd=sim.noise_sd,
                hold_s=max(sim.total_s - motion_s, 0.0),
                endpoint=endpoint,
            )
            stem = f"test_{i:02d}_{speed}"
            save_interaction(generated.interaction, out / "tests" / f"{stem}.txt")
            rows = "".join(f"{t},{p!r}\n" for t, p in enumerate(generated.phase.tolist()))
            _write_text(out / "truth" / f"{stem}_phase.csv", "tick,phase\n" + rows)
            manifest["tests"].append({"name": stem, "speed": speed, **generated.params.to_dict()})

    statics = world.static_endpoints()
    (out / "static").mkdir(parents=True, exist_ok=True)
    for i, seed in enumerate(child_seeds(static_seed, sim.static_runs)):
        trial = gen_static_trial(
            seed,
            statics[i % len(statics)],
            world=world,
            total_s=sim.total_s,
            duration_s=sim.duration_s,
            sample_rate=rate,
            noise_sd=sim.noise_sd,
        )
        save_interaction(trial, out / "static" / f"static_{i:02d}.txt")
        manifest["static"].append({"name": f"static_{i:02d}", "seed": seed, "static_index": i % len(statics)})

    _write_text(out / "scenarios.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(demos)} demos, {len(manifest['tests'])} tests, {len(manifest['static'])} static trials to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    files = _interaction_files([args.demo_dir])
    if not files:
        raise ParseError(f"no demonstration files (*.txt) in {args.demo_dir}")
    demos, problems = [], []
    for path in files:
        try:
            demos.append((path, load_interaction(path)))
        except ParseError as exc:
            problems.append(str(exc))
    if demos:
        ref_path, ref = demos[0]
        for path, demo in demos[1:]:
            if demo.layout != ref.layout:
                problems.append(f"{path}: layout differs from {ref_path}")
            elif demo.sample_rate != ref.sample_rate:
                problems.append(f"{path}: sampled at {demo.sample_rate} Hz, {ref_path} at {ref.sample_rate} Hz")
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        raise LayoutError(f"{len(problems)} nonconforming demonstration file(s)")

    interactions = [demo for _, demo in demos]
    layout = interactions[0].layout
    basis = [BasisConfig.uniform(cfg.basis_count) for _ in range(layout.dof_count)]
    model = learn_prior(interactions, basis)

    args.out.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out / "model.json")
    shortest = min(d.length for d in interactions)
    design_cond = np.linalg.cond(basis_matrix(phase_grid(shortest), basis[0]))
    weight_rank = np.linalg.matrix_rank(model.weight_cov)
    print(f"demonstrations: {len(interactions)}")
    print(f"layout: {layout.observed_count} observed + {layout.controlled_count} controlled DoFs")
    print(f"basis: {cfg.basis_count} per DoF, {model.weight_dim} weights, state dimension {model.state_dim}")
    print(f"basis design condition number: {design_cond:.3g}")
    print(f"weight covariance rank: {weight_rank} of {model.weight_dim}")
    print(f"prior phase velocity: {model.phase_vel0:.6g} per sample")
    return EXIT_OK


def _trace_csv(trace: np.ndarray) -> str:
    lines = ["tick,phase,phase_velocity,phase_variance,phase_velocity_variance"]
    for t, row in enumerate(trace.tolist()):
        lines.append(f"{t}," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def cmd_infer(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    files = _interaction_files(args.inputs)
    if not files:
        raise ParseError("no interaction files to replay")
    if cfg.rates.sample_hz != model.sample_rate:
        raise ConfigError(f"sample rate {cfg.rates.sample_hz} Hz does not match the model's {model.sample_rate} Hz")
    noise = cfg.noise.build(model)
    args.out.mkdir(parents=True, exist_ok=True)
    for path in files:
        interaction = load_interaction(path)
        if interaction.layout != model.layout:
            raise LayoutError(f"{path}: layout does not match the model")
        if interaction.sample_rate != model.sample_rate:
            raise LayoutError(f"{path}: sampled at {interaction.sample_rate} Hz, model expects {model.sample_rate} Hz")
        result = interaction_loop(
            model, replay_stream(interaction), cfg.rates, noise, alpha=cfg.alpha, beta=cfg.beta
        )
        save_interaction(result.executed, args.out / f"{path.stem}.txt")
        _write_text(args.out / f"{path.stem}_trace.csv", _trace_csv(result.trace))
        final = result.trace[-1]
        print(f"{path.stem}: terminal phase {final[0]:.4f}, phase velocity {final[1]:.6g}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    root = args.runs_dir
    if not root.is_dir():
        raise FileNotFoundError(f"no such directory: {root}")
    runs: dict[str, Interaction] = {}
    groups: dict[str, str] = {}
    for path in _interaction_files([root]):
        interaction = load_interaction(path)
        if not interaction.executed:
            log.info("skipping %s: not an executed interaction", path)
            continue
        rel = path.relative_to(root).with_suffix("")
        name = rel.as_posix()
        runs[name] = interaction
        groups[name] = rel.parts[0] if len(rel.parts) > 1 else "all"
    if not runs:
        raise ParseError(f"no executed interactions under {root}")

    report = evaluate_runs(runs, groups, cfg.evaluation.window_s, cfg.evaluation.thresholds)
    out = args.out
    _write_text(out / "report.json", report.to_json())
    _write_text(out / "metrics.csv", report.metrics_csv())
    for name, matrix in sorted(report.pearson.items()):
        layout = runs[name].layout
        rows = [",".join(("dof",) + layout.names)]
        rows += [",".join([layout.names[i]] + [repr(float(v)) for v in row]) for i, row in enumerate(matrix)]
        _write_text(out / "pearson" / (name.replace("/", "__") + ".csv"), "\n".join(rows) + "\n")
    for stat in report.test_stats:
        print(f"{stat.name}: U={stat.statistic:g}, p={stat.p_value:.4g}")
    for group, ratios in report.group_ratios().items():
        print(f"{group}: n={len(ratios)}, mean TTC ratio {np.mean(ratios):.4f}")
    return EXIT_OK


def _configure_logging() -> None:
    level_name = os.environ.get("BIPKIT_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bipkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"bipkit: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"bipkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (BipError, OSError, ValueError) as exc:
        print(f"bipkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
