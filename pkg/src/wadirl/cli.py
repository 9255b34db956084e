"""Command-line entry point: serve, train, eval, synth-demo, inspect.

Config precedence for train: explicit CLI flag > config file > built-in
default. The effective configuration is echoed into the output directory.
Every subcommand exits 0 on success and nonzero with a one-line stderr
diagnostic on failure; output files appear atomically.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

from .errors import WadirlError
from .scenario import Scenario, default_scenario, load_scenario
from .training import CONDITIONS, TrainConfig, condition_uses_curriculum

_TRAIN_OVERRIDABLE = (
    "workers", "total_env_steps", "seed", "n_steps", "gamma", "lr",
    "value_coef", "entropy_coef", "grad_clip", "eval_every", "eval_rollouts",
    "log_every_updates",
)


def _load_scenario_arg(path: str | None) -> Scenario:
    return load_scenario(path) if path else default_scenario()


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve

    scenario = _load_scenario_arg(args.scenario)
    asyncio.run(serve(
        scenario,
        host=args.host,
        port=args.port,
        demo_dir=args.demo_dir,
        cadence_hz=args.cadence,
        default_seed=args.seed,
    ))
    return 0


def _build_train_config(args: argparse.Namespace) -> TrainConfig:
    from .curriculum import CurriculumConfig

    file_cfg: dict = {}
    if args.config:
        import sys as _sys
        if _sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        with open(args.config, "rb") as f:
            file_cfg = tomllib.load(f).get("train", {})

    values: dict = {}
    for key in _TRAIN_OVERRIDABLE:
        if key in file_cfg:
            values[key] = file_cfg[key]
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            values[key] = cli_value
    curriculum_cfg = CurriculumConfig(**file_cfg.get("curriculum", {}))
    return TrainConfig(
        condition=args.condition,
        curriculum=curriculum_cfg,
        out_dir=args.out,
        **values,
    )


def cmd_train(args: argparse.Namespace) -> int:
    from .trajectory import load as load_demo
    from .training import run_training

    scenario = _load_scenario_arg(args.scenario)
    cfg = _build_train_config(args)

    demo = None
    if condition_uses_curriculum(cfg.condition):
        if not args.demo:
            print(f"error: condition {cfg.condition} requires --demo", file=sys.stderr)
            return 2
        demo = load_demo(args.demo, scenario)

    os.makedirs(cfg.out_dir, exist_ok=True)
    effective = {
        "condition": cfg.condition,
        "scenario": args.scenario or "<default>",
        "scenario_hash": scenario.content_hash,
        "demo": args.demo,
        **{k: getattr(cfg, k) for k in _TRAIN_OVERRIDABLE},
        "curriculum": vars(cfg.curriculum),
        "out_dir": cfg.out_dir,
    }
    _atomic_write(os.path.join(cfg.out_dir, "effective-config.json"),
                  json.dumps(effective, indent=2, sort_keys=True) + "\n")

    _, log = run_training(cfg, scenario, demo)
    episodes = len(log.of_kind("episode"))
    print(f"trained {cfg.condition}: {cfg.total_env_steps} env steps, "
          f"{episodes} episodes -> {cfg.out_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluate import compare, evaluate, save_report
    from .policy import load_params
    from .trajectory import load as load_demo

    scenario = _load_scenario_arg(args.scenario)
    params, extra = load_params(args.checkpoint)
    report = evaluate(params, scenario, n=args.rollouts, seed=args.seed)
    label = str(extra.get("condition", "Checkpoint"))

    demo = load_demo(args.demo, scenario) if args.demo else None
    table, _ = compare([(label, report)], demo=demo, scenario=scenario if demo else None)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        save_report(report, os.path.join(args.out, "report.json"))
        _atomic_write(os.path.join(args.out, "tables.txt"), table + "\n")
        print(f"report written to {args.out}")
    return 0


def cmd_synth_demo(args: argparse.Namespace) -> int:
    from .scripted import make_reference_demo
    from .trajectory import save

    scenario = _load_scenario_arg(args.scenario)
    demo = make_reference_demo(scenario, seed=args.seed)
    save(demo, args.out)
    print(f"scripted demonstration: {demo.length} steps, score {demo.total_score} -> {args.out}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    path = args.path
    if path.endswith(".npz"):
        from .policy import load_params

        params, extra = load_params(path)
        print(f"checkpoint: {params.n_params()} parameters, obs_mode={params.spec.obs_mode.value}")
        for name, arr in params.arrays.items():
            print(f"  {name}: {list(arr.shape)}")
        if extra:
            print(f"  extra: {json.dumps(extra, sort_keys=True)}")
        return 0
    if path.endswith(".demo"):
        from .trajectory import load as load_demo

        scenario = _load_scenario_arg(args.scenario) if args.verify else None
        demo = load_demo(path, scenario)
        print(f"demonstration: {demo.length} steps, total score {demo.total_score}, "
              f"seed {demo.seed}, scenario {demo.scenario_hash}")
        if args.verify:
            print("digest chain verified against re-simulation")
        return 0
    if path.endswith(".jsonl"):
        with open(path, "r", encoding="utf-8") as f:
            records = [json.loads(line) for line in f if line.strip()]
        kinds: dict[str, int] = {}
        for r in records:
            kinds[r.get("kind", "?")] = kinds.get(r.get("kind", "?"), 0) + 1
        print(f"log: {len(records)} records {json.dumps(kinds, sort_keys=True)}")
        if records:
            print(f"last: {json.dumps(records[-1], sort_keys=True)}")
        return 0
    print(f"error: cannot inspect {path!r} (expected .demo, .npz, or .jsonl)", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wadirl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the demo-recording/replay session server")
    p.add_argument("--scenario", default=None, help="scenario TOML (default: built-in)")
    p.add_argument("--seed", type=int, default=0, help="default episode seed")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--demo-dir", default="demos", help="where finished demos are written")
    p.add_argument("--cadence", type=float, default=4.0, help="decision steps per second")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="train one experimental condition")
    p.add_argument("--condition", required=True, choices=CONDITIONS)
    p.add_argument("--demo", default=None, help="demonstration file (required for acl-*)")
    p.add_argument("--scenario", default=None)
    p.add_argument("--config", default=None, help="TOML config file with a [train] table")
    p.add_argument("--out", default="runs/out", help="output directory")
    p.add_argument("--steps", dest="total_env_steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-steps", dest="n_steps", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--value-coef", dest="value_coef", type=float, default=None)
    p.add_argument("--entropy-coef", dest="entropy_coef", type=float, default=None)
    p.add_argument("--grad-clip", dest="grad_clip", type=float, default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p.add_argument("--eval-rollouts", dest="eval_rollouts", type=int, default=None)
    p.add_argument("--log-every-updates", dest="log_every_updates", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and emit the comparison tables")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rollouts", type=int, default=100)
    p.add_argument("--demo", default=None, help="adds the Human Demonstration column")
    p.add_argument("--scenario", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-demo", help="record the scripted reference demonstration")
    p.add_argument("--scenario", default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_demo)

    p = sub.add_parser("inspect", help="describe a demo, checkpoint, or log file")
    p.add_argument("path")
    p.add_argument("--verify", action="store_true", help="re-simulate a demo's digest chain")
    p.add_argument("--scenario", default=None)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except WadirlError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
