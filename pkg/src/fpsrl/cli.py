"""Command-line pipeline around the library.

Subcommands cover the full loop: generate a transition batch, train the
world model, optimize a fuzzy policy against it, evaluate on the learned
model or the true dynamics, and render the rules.  ``reproduce`` chains
all stages from one master seed and writes a manifest tying the
artifacts together.

Exit codes: 0 success, 1 usage, 2 data or contract error, 3 result below
a configured acceptance threshold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    ExperimentConfig,
    default_config,
    config_hash,
    emit_config,
    load_config,
)
from .data import Batch, generate_batch, load_batch, save_batch
from .dynamics import BENCHMARK_IDS, benchmark_spec, sample_start_states
from .errors import FpsrlError
from .evaluate import (
    TrueDynamics,
    benchmark_success,
    discount_from_q,
    discounted_returns,
    make_batch_fitness,
    policy_fn,
    rollout_rewards,
)
from .fuzzy import (
    FuzzyPolicyParams,
    PolicyShape,
    load_policy,
    save_policy,
    search_box,
)
from .render import render_rules
from .swarm import pso_optimize
from .worldmodel import (
    ModelSettings,
    WorldModel,
    load_model,
    save_model,
    train_world_model,
)

MANIFEST_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_THRESHOLD = 3

ARTIFACT_NAMES = {
    "config": "config.ini",
    "batch": "batch.jsonl",
    "model": "model.json",
    "model_report": "model-report.jsonl",
    "policy": "policy.fuzzy",
    "history": "history.jsonl",
    "evaluation": "eval.jsonl",
    "render_svg": "render.svg",
    "render_text": "render.txt",
    "manifest": "manifest.json",
}

_RENDER_SAMPLES = 3


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fpsrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--benchmark", choices=sorted(BENCHMARK_IDS), help="benchmark id"
    )
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument(
        "--seed", type=int, metavar="N", help="master seed; derives all stage seeds"
    )
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument(
        "--threads", type=int, metavar="N", help="cap the numeric worker pool"
    )

    p = sub.add_parser("gen-data", parents=[common], help="generate a transition batch")
    p.add_argument("--size", type=int, metavar="N", help="number of transitions")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-model", parents=[common], help="train the world model")
    p.add_argument("--batch", metavar="PATH", help="batch file (default: OUT/batch.jsonl)")
    p.set_defaults(func=cmd_train_model)

    p = sub.add_parser(
        "train-policy", parents=[common], help="optimize a fuzzy policy with PSO"
    )
    p.add_argument("--model", metavar="PATH", help="model file (default: OUT/model.json)")
    p.add_argument("--particles", type=int, metavar="N", help="swarm size override")
    p.add_argument("--iters", type=int, metavar="N", help="iteration count override")
    p.add_argument(
        "--train-states",
        type=int,
        metavar="N",
        help="PSO-internal start-state count override",
    )
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser(
        "evaluate", parents=[common], help="evaluate a policy on model or true dynamics"
    )
    p.add_argument("--policy", metavar="PATH", help="policy file (default: OUT/policy.fuzzy)")
    p.add_argument(
        "--target",
        choices=("true", "model", "both"),
        default="true",
        help="dynamics to evaluate against",
    )
    p.add_argument("--model", metavar="PATH", help="model file for model targets")
    p.add_argument(
        "--min-fitness",
        type=float,
        metavar="F",
        help="exit 3 when mean fitness falls below this bar",
    )
    p.add_argument(
        "--min-success",
        type=float,
        metavar="R",
        help="exit 3 when the success rate falls below this bar",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", parents=[common], help="render policy rules")
    p.add_argument("--policy", metavar="PATH", help="policy file (default: OUT/policy.fuzzy)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser(
        "reproduce", parents=[common], help="run the full pipeline from one master seed"
    )
    p.add_argument("--size", type=int, metavar="N", help="batch size")
    p.add_argument("--particles", type=int, metavar="N", help="swarm size override")
    p.add_argument("--iters", type=int, metavar="N", help="iteration count override")
    p.add_argument(
        "--train-states",
        type=int,
        metavar="N",
        help="PSO-internal start-state count override",
    )
    p.set_defaults(func=cmd_reproduce)
    return parser


def _resolve_config(args) -> ExperimentConfig:
    """Merge config file, --benchmark, and --seed into one configuration."""
    if args.config is not None:
        cfg = load_config(args.config)
        if args.benchmark is not None and args.benchmark != cfg.benchmark:
            raise FpsrlError(
                f"--benchmark {args.benchmark} disagrees with config "
                f"benchmark {cfg.benchmark}"
            )
    elif args.benchmark is not None:
        cfg = default_config(args.benchmark)
    else:
        raise _usage_error("either --benchmark or --config is required")
    if args.seed is not None:
        cfg = cfg.with_master_seed(args.seed)
    return cfg


def _usage_error(message: str) -> SystemExit:
    sys.stderr.write(f"fpsrl: error: {message}\n")
    return SystemExit(EXIT_USAGE)


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    if args.out is not None:
        root = args.out
    elif cfg is not None and cfg.out is not None:
        root = cfg.out
    else:
        root = os.environ.get("FPSRL_OUT", "fpsrl-out")
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def run_gen_data(cfg: ExperimentConfig, out: Path) -> tuple[Batch, Path]:
    spec = benchmark_spec(cfg.benchmark)
    batch = generate_batch(
        spec, cfg.data_size, episode_len=cfg.horizon, seed=cfg.data_seed
    )
    path = out / ARTIFACT_NAMES["batch"]
    save_batch(batch, path)
    values, counts = np.unique(batch.rewards, return_counts=True)
    hist = "  ".join(f"{v:g} x {c}" for v, c in zip(values, counts))
    print(f"batch: {len(batch)} transitions -> {path}")
    print(f"rewards: {hist}")
    return batch, path


def run_train_model(
    cfg: ExperimentConfig, batch: Batch, out: Path
) -> tuple[WorldModel, Path]:
    spec = benchmark_spec(cfg.benchmark)
    settings = ModelSettings(
        depths=cfg.model_depths,
        epochs=cfg.model_epochs,
        batch_size=cfg.model_batch_size,
        learning_rate=cfg.model_learning_rate,
        seed=cfg.model_seed,
    )
    model = train_world_model(batch, spec, settings)
    path = out / ARTIFACT_NAMES["model"]
    save_model(model, path)
    _jsonl(
        out / ARTIFACT_NAMES["model_report"],
        (
            {
                "kind": "model_report",
                "target": e.target,
                "depth": e.depth,
                "train_mse": e.train_mse,
                "val_mse": e.val_mse,
                "gen_mse": e.gen_mse,
                "best_epoch": e.best_epoch,
                "selected": e.selected,
            }
            for e in model.report.entries
        ),
    )
    print(f"model -> {path}")
    print(_report_table(model))
    return model, path


def _report_table(model: WorldModel) -> str:
    report = model.report
    targets = report.targets
    depths = sorted({e.depth for e in report.entries})
    head = "target      " + "".join(f"depth {d:<8}" for d in depths) + "selected"
    lines = [head]
    for target in targets:
        entries = {e.depth: e for e in report.for_target(target)}
        cells = "".join(f"{entries[d].gen_mse:<14.3e}" for d in depths)
        chosen = report.selected(target).depth
        lines.append(f"{target:<12}{cells}{chosen}")
    return "\n".join(lines)


def _policy_shape(cfg: ExperimentConfig) -> PolicyShape:
    spec = benchmark_spec(cfg.benchmark)
    return PolicyShape(
        state_dim=spec.state_dim,
        rule_count=cfg.rule_count,
        action_scale=spec.action_high,
        symmetric=cfg.symmetric,
    )


def run_train_policy(
    cfg: ExperimentConfig, model: WorldModel, out: Path
) -> tuple[FuzzyPolicyParams, float, Path]:
    spec = benchmark_spec(cfg.benchmark)
    shape = _policy_shape(cfg)
    gamma = discount_from_q(cfg.q, cfg.horizon)
    train_states = sample_start_states(
        spec, "test", cfg.train_states, np.random.default_rng(cfg.swarm_seed)
    )
    batch_fitness = make_batch_fitness(model, shape, train_states, cfg.horizon, gamma)
    x_min, x_max = search_box(
        spec.nominal_low, spec.nominal_high, cfg.rule_count, symmetric=cfg.symmetric
    )
    swarm_cfg = cfg.swarm_config(x_min, x_max)
    history_path = out / ARTIFACT_NAMES["history"]
    with open(history_path, "w", encoding="utf-8") as handle:

        def progress(rec):
            handle.write(
                json.dumps(
                    {
                        "kind": "iteration",
                        "iteration": rec.iteration,
                        "best_fitness": rec.best_fitness,
                        "mean_fitness": rec.mean_fitness,
                    }
                )
                + "\n"
            )

        result = pso_optimize(
            None, swarm_cfg, batch_fitness=batch_fitness, progress=progress
        )
    params = shape.decode(result.best_position)
    path = out / ARTIFACT_NAMES["policy"]
    save_policy(params, path, benchmark=cfg.benchmark)
    print(
        f"policy -> {path}  (model fitness {result.best_fitness:.4f} "
        f"after {swarm_cfg.iterations} iterations, d={shape.free_length})"
    )
    return params, float(result.best_fitness), path


def _eval_env(target: str, cfg: ExperimentConfig, model: WorldModel | None):
    if target == "true":
        return TrueDynamics(benchmark_spec(cfg.benchmark))
    if model is None:
        raise FpsrlError("model evaluation needs --model or a prior train-model run")
    return model


def run_evaluate(
    cfg: ExperimentConfig,
    params: FuzzyPolicyParams,
    targets: tuple[str, ...],
    model: WorldModel | None,
    out: Path,
) -> dict:
    spec = benchmark_spec(cfg.benchmark)
    gamma = discount_from_q(cfg.q, cfg.horizon)
    starts = sample_start_states(
        spec, "test", cfg.test_states, np.random.default_rng(cfg.eval_seed)
    )
    label, predicate = benchmark_success(cfg.benchmark)
    policy = policy_fn(params)

    records = []
    summary: dict[str, dict] = {}
    for target in targets:
        env = _eval_env(target, cfg, model)
        rewards = rollout_rewards(env, policy, starts, cfg.horizon)
        returns = discounted_returns(rewards, gamma)
        rate = float(np.mean([bool(predicate(row)) for row in rewards]))
        quants = {
            f"p{int(q * 100):02d}": float(np.quantile(returns, q))
            for q in (0.05, 0.25, 0.5, 0.75, 0.95)
        }
        summary[target] = {
            "fitness": float(returns.mean()),
            "success_rate": rate,
            "quantiles": quants,
        }
        records.append(
            {
                "kind": "evaluation_summary",
                "target": target,
                "benchmark": cfg.benchmark,
                "count": len(starts),
                "fitness": summary[target]["fitness"],
                "success_label": label,
                "success_rate": rate,
                "gamma": gamma,
                "horizon": cfg.horizon,
                "quantiles": quants,
            }
        )
        records.extend(
            {
                "kind": "return",
                "target": target,
                "index": i,
                "start": starts[i].tolist(),
                "return": float(returns[i]),
            }
            for i in range(len(starts))
        )
    _jsonl(out / ARTIFACT_NAMES["evaluation"], records)

    head = f"{'target':<8}{'count':<7}{'mean F':<10}{'p05':<10}{'p50':<10}{'p95':<10}{label}"
    lines = [head]
    for target in targets:
        s = summary[target]
        lines.append(
            f"{target:<8}{len(starts):<7}{s['fitness']:<10.2f}"
            f"{s['quantiles']['p05']:<10.2f}{s['quantiles']['p50']:<10.2f}"
            f"{s['quantiles']['p95']:<10.2f}{s['success_rate']:.2f}"
        )
    print("\n".join(lines))
    return summary


def run_render(
    params: FuzzyPolicyParams, cfg: ExperimentConfig, out: Path
) -> tuple[Path, Path]:
    spec = benchmark_spec(cfg.benchmark)
    samples = list(
        sample_start_states(
            spec, "test", _RENDER_SAMPLES, np.random.default_rng(cfg.eval_seed)
        )
    )
    rendering = render_rules(params, spec.state_labels, samples)
    svg_path = out / ARTIFACT_NAMES["render_svg"]
    txt_path = out / ARTIFACT_NAMES["render_text"]
    svg_path.write_text(rendering.svg, encoding="utf-8")
    txt_path.write_text(rendering.text, encoding="utf-8")
    print(rendering.text, end="")
    print(f"render -> {svg_path}, {txt_path}")
    return svg_path, txt_path


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    if args.size is not None:
        cfg = _override(cfg, data_size=args.size)
    out = _out_dir(args, cfg)
    run_gen_data(cfg, out)
    return EXIT_OK


def cmd_train_model(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    batch_path = Path(args.batch) if args.batch else out / ARTIFACT_NAMES["batch"]
    batch = load_batch(batch_path)
    if batch.benchmark != cfg.benchmark:
        raise FpsrlError(
            f"batch benchmark {batch.benchmark} disagrees with {cfg.benchmark}"
        )
    run_train_model(cfg, batch, out)
    return EXIT_OK


def cmd_train_policy(args) -> int:
    cfg = _resolve_config(args)
    cfg = _apply_swarm_overrides(cfg, args)
    out = _out_dir(args, cfg)
    model_path = Path(args.model) if args.model else out / ARTIFACT_NAMES["model"]
    model = load_model(model_path)
    if model.benchmark != cfg.benchmark:
        raise FpsrlError(
            f"model benchmark {model.benchmark} disagrees with {cfg.benchmark}"
        )
    run_train_policy(cfg, model, out)
    return EXIT_OK


def _policy_config(args) -> tuple[ExperimentConfig, FuzzyPolicyParams]:
    """Config + policy for commands driven by a policy file."""
    out = _out_dir(args)
    path = Path(args.policy) if args.policy else out / ARTIFACT_NAMES["policy"]
    params, benchmark = load_policy(path)
    if args.config is None and args.benchmark is None:
        if benchmark is None:
            raise _usage_error(
                "policy file names no benchmark; pass --benchmark or --config"
            )
        args.benchmark = benchmark
    cfg = _resolve_config(args)
    if benchmark is not None and benchmark != cfg.benchmark:
        raise FpsrlError(
            f"policy benchmark {benchmark} disagrees with {cfg.benchmark}"
        )
    expected = _policy_shape(cfg)
    if (params.state_dim, params.rule_count) != (
        expected.state_dim,
        expected.rule_count,
    ):
        raise FpsrlError(
            f"policy shape C={params.rule_count}, D={params.state_dim} does not "
            f"match the configuration (C={expected.rule_count}, "
            f"D={expected.state_dim})"
        )
    return cfg, params


def cmd_evaluate(args) -> int:
    cfg, params = _policy_config(args)
    out = _out_dir(args, cfg)
    targets = ("true", "model") if args.target == "both" else (args.target,)
    model = None
    if "model" in targets:
        model_path = Path(args.model) if args.model else out / ARTIFACT_NAMES["model"]
        model = load_model(model_path)
    summary = run_evaluate(cfg, params, targets, model, out)
    checked = summary.get("true", summary[targets[0]])
    if args.min_fitness is not None and checked["fitness"] < args.min_fitness:
        print(
            f"fitness {checked['fitness']:.4f} below bar {args.min_fitness:.4f}",
            file=sys.stderr,
        )
        return EXIT_THRESHOLD
    if args.min_success is not None and checked["success_rate"] < args.min_success:
        print(
            f"success rate {checked['success_rate']:.4f} below bar "
            f"{args.min_success:.4f}",
            file=sys.stderr,
        )
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_render(args) -> int:
    cfg, params = _policy_config(args)
    out = _out_dir(args, cfg)
    run_render(params, cfg, out)
    return EXIT_OK


def _override(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


def _apply_swarm_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "particles", None) is not None:
        changes["swarm_particles"] = args.particles
    if getattr(args, "iters", None) is not None:
        changes["swarm_iterations"] = args.iters
    if getattr(args, "train_states", None) is not None:
        changes["train_states"] = args.train_states
    return _override(cfg, **changes) if changes else cfg


def cmd_reproduce(args) -> int:
    cfg = _resolve_config(args)
    cfg = _apply_swarm_overrides(cfg, args)
    if args.size is not None:
        cfg = _override(cfg, data_size=args.size)
    out = _out_dir(args, cfg)

    (out / ARTIFACT_NAMES["config"]).write_text(emit_config(cfg), encoding="utf-8")
    print(f"== gen-data ({cfg.benchmark}, size {cfg.data_size})")
    batch, _ = run_gen_data(cfg, out)
    print("== train-model")
    model, _ = run_train_model(cfg, batch, out)
    print("== train-policy")
    params, model_fitness, _ = run_train_policy(cfg, model, out)
    print("== evaluate (true dynamics)")
    summary = run_evaluate(cfg, params, ("true",), model, out)
    print("== render")
    run_render(params, cfg, out)

    label, _ = benchmark_success(cfg.benchmark)
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "kind": "manifest",
        "benchmark": cfg.benchmark,
        "config_hash": config_hash(cfg),
        "master_seed": args.seed,
        "seeds": {
            "data": cfg.data_seed,
            "model": cfg.model_seed,
            "swarm": cfg.swarm_seed,
            "eval": cfg.eval_seed,
        },
        "size": cfg.data_size,
        "artifacts": {k: v for k, v in ARTIFACT_NAMES.items() if k != "manifest"},
        "results": {
            "model_fitness": model_fitness,
            "true_fitness": summary["true"]["fitness"],
            "success_label": label,
            "success_rate": summary["true"]["success_rate"],
        },
    }
    manifest_path = out / ARTIFACT_NAMES["manifest"]
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"manifest -> {manifest_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            sys.stderr.write("fpsrl: error: --threads must be >= 1\n")
            return EXIT_USAGE
        try:
            import numba

            numba.set_num_threads(args.threads)
        except (ImportError, ValueError):
            pass
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except FpsrlError as exc:
        sys.stderr.write(f"fpsrl: error: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        sys.stderr.write(f"fpsrl: error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
