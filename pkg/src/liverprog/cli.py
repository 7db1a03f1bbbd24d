"""Command-line interface.

Every command is driven by one JSON config file; --seed and --out override
the seed and output directory recorded there. Commands that run pipeline
stages always execute the prerequisite stages, so each one is reproducible
in isolation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, save_config
from .workflow import StageError, run_end_to_end, simulate_dataset

# command -> final pipeline stage it runs
COMMAND_STAGES = {
    "segment": "postprocess",
    "evaluate": "evaluate",
    "features": "features",
    "train": "model",
    "stats": None,  # full pipeline
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liverprog",
        description="Tumor segmentation, feature extraction, and survival modeling.",
    )
    parser.add_argument("--config", type=Path, help="run configuration JSON")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", type=Path, help="override the configured output dir")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("segment", help="complete missing label maps by propagation")
    sub.add_parser("evaluate", help="match predicted lesions against truth")
    sub.add_parser("features", help="extract per-lesion feature tables")
    sub.add_parser("train", help="cross-validate and train the survival model")
    sub.add_parser("stats", help="run the full pipeline through statistics")

    simulate = sub.add_parser("simulate", help="write a synthetic phantom dataset")
    simulate.add_argument("--cases", type=int, default=8)
    simulate.add_argument("--dim", type=int, default=64, help="cubic volume edge length")

    serve = sub.add_parser("serve", help="start the HTTP segmentation service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--static", type=Path, help="directory of viewer assets")
    return parser


def _run_config(parser: argparse.ArgumentParser, args) -> RunConfig:
    if args.config is None:
        parser.error(f"{args.command} requires --config")
    config = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            parser.error("--seed must be nonnegative")
        config = dataclasses.replace(config, seed=args.seed)
    if args.out is not None:
        config = dataclasses.replace(config, output_dir=str(args.out))
    return config


def _cmd_pipeline(parser, args) -> int:
    config = _run_config(parser, args)
    manifest = run_end_to_end(config, last_stage=COMMAND_STAGES[args.command])
    done = [s["name"] for s in manifest["stages"] if s["status"] == "done"]
    print(f"completed stages: {', '.join(done)}")
    if manifest["results"]:
        print(json.dumps(manifest["results"], indent=2))
    print(f"manifest: {Path(config.output_dir) / 'manifest.json'}")
    return 0


def _cmd_simulate(parser, args) -> int:
    if args.out is not None:
        target = args.out
    elif args.config is not None:
        target = Path(load_config(args.config).data_dir)
    else:
        parser.error("simulate requires --out (or --config with a data_dir)")
    seed = args.seed if args.seed is not None else 0
    data_dir = simulate_dataset(
        target, n_cases=args.cases, dims=(args.dim,) * 3, seed=seed
    )
    config = RunConfig(
        data_dir=str(data_dir), output_dir=str(data_dir / "run"), seed=seed
    )
    save_config(config, data_dir / "config.json")
    print(f"dataset: {data_dir} ({args.cases} cases)")
    print(f"config template: {data_dir / 'config.json'}")
    return 0


def _cmd_serve(parser, args) -> int:
    import uvicorn

    from .service import create_app

    config = _run_config(parser, args)
    app = create_app(
        config.data_dir,
        config.output_dir,
        config=config,
        static_dir=args.static,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in COMMAND_STAGES:
            return _cmd_pipeline(parser, args)
        if args.command == "simulate":
            return _cmd_simulate(parser, args)
        return _cmd_serve(parser, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
