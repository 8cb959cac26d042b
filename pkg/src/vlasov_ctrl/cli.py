"""Command-line entry points.

    vlasov-ctrl run <config.toml>        run the configured experiment
    vlasov-ctrl validate <config.toml>   validate and echo the full config
    vlasov-ctrl gradcheck <config.toml>  finite-difference gradient oracle

Exit codes: 0 ok, 2 config error, 3 solver error, 4 gradcheck failure.
The output directory comes from the config, overridden by --out or the
VLASOV_CTRL_OUTDIR environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as config_mod
from .errors import ConfigInvalid, VlasovCtrlError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def _resolve_out_dir(cfg, override):
    out = override or os.environ.get("VLASOV_CTRL_OUTDIR") or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_run(args) -> int:
    from . import experiments

    cfg = config_mod.from_toml(args.config)
    out_dir = _resolve_out_dir(cfg, args.out)
    if cfg.mode == "forward":
        summary = experiments.run_forward_experiment(cfg, out_dir)
    else:
        summary = experiments.run_optimization_experiment(cfg, out_dir)
    for key, value in summary.items():
        print(f"{key} = {value}")
    print(f"results written to {out_dir}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = config_mod.from_toml(args.config)
    sys.stdout.write(config_mod.to_toml_str(cfg))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from . import experiments

    cfg = config_mod.from_toml(args.config)
    out_dir = _resolve_out_dir(cfg, args.out)
    summary = experiments.run_gradient_check(cfg, out_dir,
                                             n_directions=args.directions,
                                             eps=args.eps)
    for key, value in summary.items():
        print(f"{key} = {value}")
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlasov-ctrl",
        description="Vlasov-Poisson PIC solver with adjoint-based "
                    "magnetic-field optimal control")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_gc = sub.add_parser("gradcheck",
                          help="finite-difference check of the adjoint gradient")
    p_gc.add_argument("config")
    p_gc.add_argument("--out", default=None)
    p_gc.add_argument("--directions", type=int, default=3)
    p_gc.add_argument("--eps", type=float, default=1e-3)
    p_gc.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VlasovCtrlError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
