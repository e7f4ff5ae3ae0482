"""``ljfuse`` command-line entry point.

Exit codes: 0 success, 1 solver or simulation failure, 2 malformed config or
missing file, 3 invalid standing assumption (``tune``).  Failures print one
JSON object ``{"error": code, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ExperimentConfig,
    build_instance,
    build_params,
    load_config,
    load_instance_spec,
    load_json,
)
from .edc import ConsensusChannel
from .errors import ConfigError, InvalidAssumption, LJFuseError
from .fusion import fuse_central, fuse_distributed, generate_estimates
from .oracle import grid_search, solve_simplex
from .tuning import validate

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3


def _emit(obj, out_dir: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text + "\n")


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def cmd_run(args) -> int:
    from .pipeline import run_experiment

    cfg = _config(args)
    out = Path(args.out) if args.out else Path("out") / cfg.name
    summary = run_experiment(cfg, out, plots=False if args.no_plots else None)
    print(json.dumps({"out": str(out), "events": summary["events"], "terminal_f": summary["terminal_f"],
                      "relative_gap": summary.get("oracle", {}).get("relative_gap")}, indent=2))
    return 0


def _oracle_matrices(args):
    spec = load_instance_spec(args.config)
    seed = args.seed if args.seed is not None else 0
    if spec.matrices is not None:
        return np.asarray(spec.matrices, dtype=float)
    return build_instance(spec, seed).P_list


def cmd_oracle(args) -> int:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    P = _oracle_matrices(args)
    seed = args.seed if args.seed is not None else 0
    result = {}
    for kind in args.cost:
        sol = solve_simplex(P, kind, seed=seed)
        entry = {"simplex": sol.to_dict()}
        if len(P) <= 4:
            grid = grid_search(P, kind, args.resolution)
            entry["grid"] = grid.to_dict()
            entry["agreement"] = abs(grid.f_star - sol.f_star)
        result[kind] = entry
    _emit(result, Path(args.out) if args.out else None, "oracle.json")
    return 0


def cmd_tune(args) -> int:
    cfg = _config(args)
    instance = build_instance(cfg.instance, cfg.seed)
    sim = cfg.simulation
    params = build_params(cfg.protocol, instance, sim.b_lo, sim.b_hi)
    report = validate(params, instance.network.constants(), instance.spectral_bounds(), sim.b_lo, sim.b_hi)
    _emit({"params": params.to_dict(), "validation": report.to_dict()}, Path(args.out) if args.out else None,
          "tune.json")
    return 0


def cmd_fuse(args) -> int:
    cfg = _config(args)
    if args.state is None:
        raise ConfigError("--state (final_state.json from a run) is required")
    state = load_json(args.state)
    instance = build_instance(cfg.instance, cfg.seed)
    if args.estimates is not None:
        p_hat = np.asarray(load_json(args.estimates), dtype=float)
    elif instance.p_hat is not None:
        p_hat = instance.p_hat
    else:
        p_hat = generate_estimates(instance.P_list, cfg.seed, cfg.instance.estimate_truth)
    params = build_params(cfg.protocol, instance, cfg.simulation.b_lo, cfg.simulation.b_hi)
    channel = ConsensusChannel(params.kappa_q, 0.0, params.q_exp)
    agents = fuse_distributed(state, instance.P_list, p_hat, instance.network, channel,
                              cfg.fusion.horizon or params.t_c, cfg.fusion.dt, tol=cfg.simulation.tol_cons)
    x = np.asarray(state["x"], dtype=float)
    central = fuse_central(x**2 / len(x), instance.P_list, p_hat)
    _emit({"central": central.to_dict(), "agents": [a.to_dict() for a in agents]},
          Path(args.out) if args.out else None, "fusion.json")
    return 0


def cmd_sweep(args) -> int:
    from .pipeline import run_sweep

    cfg = _config(args)
    out = Path(args.out) if args.out else Path("out") / cfg.name
    rows = run_sweep(cfg, out)
    print(json.dumps({"out": str(out), "rows": rows}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ljfuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment or instance JSON file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="simulate one experiment").set_defaults(func=cmd_run)
    p = sub.add_parser("oracle", parents=[common], help="centralised optimum of the weight problem")
    p.add_argument("--cost", nargs="+", default=["trace_inverse"], choices=["trace", "logdet", "trace_inverse"])
    p.add_argument("--resolution", type=float, default=0.01, help="grid spacing for N <= 4")
    p.set_defaults(func=cmd_oracle)
    sub.add_parser("tune", parents=[common], help="gains and sufficient-condition report").set_defaults(
        func=cmd_tune
    )
    p = sub.add_parser("fuse", parents=[common], help="fuse estimates with the weights of a finished run")
    p.add_argument("--state", metavar="PATH", help="final_state.json written by 'run'")
    p.add_argument("--estimates", metavar="PATH", help="JSON list of per-agent estimate vectors")
    p.set_defaults(func=cmd_fuse)
    sub.add_parser("sweep", parents=[common], help="grid of runs over network size and dimension").set_defaults(
        func=cmd_sweep
    )
    return parser


def _fail(code: int, err: Exception) -> int:
    kind = getattr(err, "code", type(err).__name__)
    print(json.dumps({"error": kind, "message": str(err), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, err)
    except InvalidAssumption as err:
        return _fail(EXIT_ASSUMPTION if args.command == "tune" else EXIT_FAILURE, err)
    except LJFuseError as err:
        return _fail(EXIT_FAILURE, err)


if __name__ == "__main__":
    sys.exit(main())
