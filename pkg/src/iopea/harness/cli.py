"""Command line entry point: ``iopea run|sweep|oracle|width``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from ..core import IopeaError, format_coords
from ..order import width
from .config import ConfigError, ExperimentConfig, build_env, iopea_config, learner_grid, load_config
from .experiment import reference_optimum, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("iopea")


def resolve_config(name: str) -> Path:
    """A path on disk, or the stem of a bundled config such as ``queue_fixed``."""
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("iopea") / "configs" / f"{name}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"{name}: no such file or bundled config")


def _load(args) -> ExperimentConfig:
    cfg = load_config(resolve_config(args.config))
    return cfg.with_overrides(seed=args.seed, replicates=getattr(args, "replicates", None),
                              downsample=getattr(args, "downsample", None),
                              workers=getattr(args, "workers", None))


def cmd_run(args) -> int:
    summary = run_experiment(_load(args), args.out)
    print(json.dumps({k: summary[k] for k in ("name", "g_star", "mean_final_gain", "relative_gap",
                                              "regret_slope")}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    for name in args.configs:
        args.config = name
        cmd_run(args)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load(args)
    theta, g = reference_optimum(cfg)
    print(json.dumps({"name": cfg.name, "theta_star": format_coords(theta), "g_star": g}))
    return EXIT_OK


def cmd_width(args) -> int:
    from ..algorithm import env_order

    cfg = _load(args)
    env = build_env(cfg)
    icfg = iopea_config(cfg, env)
    grid = learner_grid(env, icfg)
    print(json.dumps({"name": cfg.name, "grid_size": int(grid.shape[0]),
                      "width": width(env_order(env, grid, t_h=icfg.t_h_value))}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iopea", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, many=False):
        if many:
            p.add_argument("configs", nargs="+", help="config files or bundled config names")
        else:
            p.add_argument("--config", required=True, help="config file or bundled config name")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--downsample", type=float, default=None, help="geometric row spacing factor")
        p.add_argument("--workers", type=int, default=None, help="parallel replicate processes")

    common(sub.add_parser("run", help="run one experiment"))
    common(sub.add_parser("sweep", help="run several experiments"), many=True)
    common(sub.add_parser("oracle", help="grid optimum only"))
    common(sub.add_parser("width", help="report the order width for a config"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "width": cmd_width}[args.command]
    try:
        return handler(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (IopeaError, OSError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
