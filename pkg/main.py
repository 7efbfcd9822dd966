import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from config import RICKER_APPENDIX_PRESET, RICKER_STEP_LABEL
from exceptions import ConfigError, HorizonKitError
from forecast.ricker import simulate_ensemble, simulate_truth
from ingest.parser import load_config
from models import ExperimentConfig, LimitResult, LimitStatus, ScoreName
from pipeline.experiment import (
    RunOutput,
    resolve_threads,
    ricker_config,
    run_limit,
    run_sweep,
    run_tolerance_curve,
)
from utils.log_handler import LOG_FORMAT, run_id, run_logger
from utils.results import config_hash, write_ensemble_csv, write_results, write_series_csv

logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NEVER_ACCEPTABLE = 1
EXIT_IO = 3


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="horizonkit", description="Forecast limits from score-vs-tolerance tests")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--members", type=int, help="Ricker ensemble size")
    common.add_argument("--horizon", type=int, help="Ricker forecast horizon")
    common.add_argument("--score", choices=[n.value for n in ScoreName if n != ScoreName.SHIFTED_AE])
    common.add_argument("--tolerance", type=float)
    common.add_argument("--threads", type=int)
    common.add_argument("--cv-params", type=float, help="coefficient of variation of alpha and k")
    common.add_argument("--cv-init", type=float, help="coefficient of variation of the initial value")
    common.add_argument("--preset", choices=["default", "appendix"], help="Ricker parameter preset")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate-ricker", parents=[common], help="write a Ricker ensemble and truth trajectory")
    sub.add_parser("limit", parents=[common], help="forecast limit of one initialisation")
    sub.add_parser("sweep", parents=[common], help="limits over initialisation times")
    curve = sub.add_parser("tolerance-curve", parents=[common], help="limit as a function of the tolerance")
    rhos = curve.add_mutually_exclusive_group(required=True)
    rhos.add_argument("--rho", type=float, nargs="+", help="ascending tolerances")
    rhos.add_argument("--rho-grid", type=float, nargs=3, metavar=("START", "STOP", "N"), help="evenly spaced tolerances")
    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """CLI flags as dotted config keys; explicit flags beat the preset, both beat the file."""
    overrides: Dict[str, Any] = {}
    if args.preset == "appendix":
        overrides.update({f"ricker.{key}": value for key, value in RICKER_APPENDIX_PRESET.items()})
    overrides.update({
        "seed": args.seed,
        "threads": args.threads,
        "output.dir": args.out,
        "score.name": args.score,
        "score.tolerance": args.tolerance,
        "ricker.member_count": args.members,
        "ricker.horizon": args.horizon,
        "ricker.param_cv": args.cv_params,
        "ricker.init_cv": args.cv_init,
    })
    return overrides


def _rhos(args: argparse.Namespace) -> List[float]:
    if args.rho is not None:
        return list(args.rho)
    start, stop, n = args.rho_grid
    if n < 2 or n != int(n):
        raise ConfigError("--rho-grid", f"N must be an integer >= 2, got {n}")
    return [float(r) for r in np.linspace(start, stop, int(n))]


def _step_label(cfg: ExperimentConfig) -> str:
    return RICKER_STEP_LABEL if cfg.verification.simulated else cfg.verification.step


def format_limit(result: LimitResult, step: str) -> str:
    if result.status == LimitStatus.CROSSED:
        unit = step if result.lead == 1 else f"{step}s"
        return f"lead {result.lead} ({result.lead} {unit})"
    if result.status == LimitStatus.NOT_REACHED:
        return f"not reached within {result.max_lead} leads"
    return "never acceptable"


def _exit_code(output: RunOutput) -> int:
    if output.headline is not None and output.headline.status == LimitStatus.NEVER_ACCEPTABLE:
        return EXIT_NEVER_ACCEPTABLE
    return EXIT_OK


def _write(cfg: ExperimentConfig, command: str, output: RunOutput) -> None:
    write_results(
        cfg.output.dir,
        scores=output.scores,
        limits=output.limits,
        heatmap=output.heatmap,
        heatmap_inits=output.heatmap_inits,
        distributions=output.distributions,
        tables=output.tables,
        manifest_info={"command": command, "config_hash": config_hash(cfg), "seed": cfg.seed},
    )


def cmd_simulate_ricker(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, _overrides(args))
    ricker = ricker_config(cfg)
    truth_seed = cfg.seed if cfg.verification.truth_seed is None else cfg.verification.truth_seed

    with run_logger(run_id("simulate-ricker", config_hash(cfg))):
        logger.info(f"=== SIMULATE-RICKER START: {ricker.member_count} members x {ricker.horizon} generations | seed={cfg.seed} ===")
        ensemble = simulate_ensemble(ricker)
        truth = simulate_truth(ricker, truth_seed)
        write_ensemble_csv(os.path.join(cfg.output.dir, "ensemble.csv"), ensemble)
        write_series_csv(os.path.join(cfg.output.dir, "truth.csv"), truth)
        logger.info(f"=== SIMULATE-RICKER COMPLETE: wrote ensemble.csv and truth.csv to {cfg.output.dir} ===")

    print(f"simulated {ricker.member_count} members x {ricker.horizon} generations -> {cfg.output.dir}")
    return EXIT_OK


def cmd_limit(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, _overrides(args))

    with run_logger(run_id("limit", config_hash(cfg))):
        logger.info(f"=== LIMIT START: score={cfg.score.name.value} | tolerance={cfg.score.tolerance} | reference={cfg.reference.kind} ===")
        output = run_limit(cfg)
        _write(cfg, "limit", output)
        logger.info(f"=== LIMIT COMPLETE: {len(output.limits)} limit(s) written to {cfg.output.dir} ===")

    step = _step_label(cfg)
    if cfg.grouped is not None:
        for name, dist in output.distributions.items():
            print(f"{name}: mean limit {dist.mean} over {len(dist.crossed_leads)} crossed stands")
    else:
        print(f"limit: {format_limit(output.limits['limit'], step)}")
        members = output.distributions.get("members")
        if members is not None and members.mean is not None:
            print(f"member limits: mean {members.mean:.2f} +/- {members.std:.2f} ({members.not_reached_count} not reached)")
    return _exit_code(output)


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, _overrides(args))
    threads = resolve_threads(args.threads, cfg)

    with run_logger(run_id("sweep", config_hash(cfg))):
        logger.info(f"=== SWEEP START: score={cfg.score.name.value} | threads={threads} ===")
        output = run_sweep(cfg, threads=threads)
        _write(cfg, "sweep", output)
        logger.info(f"=== SWEEP COMPLETE: {len(output.heatmap_inits)} init times written to {cfg.output.dir} ===")

    step = _step_label(cfg)
    for statistic in ("mean", "median"):
        if statistic in output.limits:
            print(f"{statistic} limit: {format_limit(output.limits[statistic], step)}")
    return _exit_code(output)


def cmd_tolerance_curve(args: argparse.Namespace) -> int:
    rhos = _rhos(args)
    overrides = _overrides(args)
    # the curve sets its own tolerances; one is enough for the config to validate as absolute mode
    overrides["score.tolerance"] = rhos[0]
    cfg = load_config(args.config, overrides)

    with run_logger(run_id("tolerance-curve", config_hash(cfg))):
        logger.info(f"=== TOLERANCE-CURVE START: score={cfg.score.name.value} | {len(rhos)} tolerances ===")
        output = run_tolerance_curve(cfg, rhos)
        _write(cfg, "tolerance-curve", output)
        logger.info(f"=== TOLERANCE-CURVE COMPLETE: written to {cfg.output.dir} ===")

    step = _step_label(cfg)
    for rho, limit in zip(rhos, output.limits.values()):
        print(f"rho={rho:g}: {format_limit(limit, step)}")
    return EXIT_OK


COMMANDS = {
    "simulate-ricker": cmd_simulate_ricker,
    "limit": cmd_limit,
    "sweep": cmd_sweep,
    "tolerance-curve": cmd_tolerance_curve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except HorizonKitError as e:
        logger.error(f"{args.command} failed ({type(e).__name__}): {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed on I/O: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
