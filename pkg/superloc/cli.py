"""Command-line front end: `superloc run | synth | solve`."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from . import __version__
from .config import RunConfig, load_run_config
from .const import EXIT_CONFIG_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, SEED_ENV_VAR
from .dataset import load_dataset, save_dataset, save_solution, write_results
from .exceptions import ConfigError, SuperlocError
from .harness import (
    estimated_scatters,
    extract_ms,
    generate_scenario,
    rmse,
    run_monte_carlo,
    trial_seeds,
)
from .signal import add_awgn, synthesize
from .solver import adcg_solve, resolve_regularisation

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def resolve_seed(flag: int | None, file_seed: int) -> int:
    """Seed precedence: --seed flag, then SUPERLOC_SEED, then the config file."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None and env.strip():
        try:
            value = int(env)
        except ValueError as err:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}", field=SEED_ENV_VAR
            ) from err
        if value < 0:
            raise ConfigError(f"{SEED_ENV_VAR} must be >= 0", field=SEED_ENV_VAR)
        return value
    return file_seed


def _load(config_path: str | Path, seed: int | None) -> RunConfig:
    run = load_run_config(config_path)
    experiment = dataclasses.replace(
        run.experiment, seed=resolve_seed(seed, run.experiment.seed)
    )
    return dataclasses.replace(run, experiment=experiment)


def cmd_run(
    config_path: str | Path,
    *,
    out: str | Path | None = None,
    threads: int = 1,
    seed: int | None = None,
) -> int:
    """Run the Monte Carlo sweep of a config and write the results table."""
    run = _load(config_path, seed)
    target = Path(out) if out is not None else Path(run.output.path)
    report = run_monte_carlo(run.experiment, run.system, run.solver, threads=threads)
    write_results(target, report, run.output.format, run.output.record_runtime)

    for row in report.summary:
        print(
            f"{row.condition.value} snr={row.snr_db:g} dB "
            f"mean_rmse={row.mean_rmse_m:.3f} m std={row.std_rmse_m:.3f} m "
            f"trials={row.trials} ambiguous={row.ambiguous_count} "
            f"failed={row.failed_count}"
        )
    if report.any_nonconverged:
        _LOGGER.warning(
            "At least one trial did not converge; results were still written"
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_synth(
    config_path: str | Path, out_path: str | Path, *, seed: int | None = None
) -> int:
    """Generate trial 0 of the first condition at the first SNR and store it."""
    run = _load(config_path, seed)
    experiment = run.experiment
    scenario_seed, noise_seeds = trial_seeds(
        experiment.seed, 0, len(experiment.snr_grid_db)
    )
    scenario = generate_scenario(
        experiment.conditions[0],
        experiment.num_scatterers,
        experiment.scene,
        experiment.gain_model,
        scenario_seed,
        bs_positions=run.system.bs_positions,
        clearance_m=experiment.clearance_m,
    )
    measurements = add_awgn(
        synthesize(scenario, run.system), experiment.snr_grid_db[0], noise_seeds[0]
    )
    save_dataset(out_path, run.system, measurements, scenario)
    print(
        f"wrote {scenario.condition.value} dataset "
        f"(snr={experiment.snr_grid_db[0]:g} dB, seed={experiment.seed}) to {out_path}"
    )
    return EXIT_OK


def cmd_solve(
    dataset_path: str | Path, config_path: str | Path, out_path: str | Path
) -> int:
    """Solve a stored dataset with the solver section of a config."""
    dataset = load_dataset(dataset_path)
    run = load_run_config(config_path)
    result = adcg_solve(dataset.measurements, dataset.system, run.solver)
    lambdas = resolve_regularisation(dataset.measurements, dataset.system, run.solver)

    mobile = extract_ms(result.candidate) if result.candidate.num_atoms else None
    breakdown = None
    if mobile is not None and dataset.scenario is not None:
        breakdown = rmse(
            mobile.location, estimated_scatters(result.candidate), dataset.scenario
        )
    save_solution(out_path, result, mobile, lambdas, breakdown)

    summary = f"{result.candidate.num_atoms} atoms, converged={result.converged}"
    if mobile is not None:
        summary += f", ms=({mobile.location.x:.3f}, {mobile.location.y:.3f}) m"
    if breakdown is not None:
        summary += (
            f", rmse={breakdown.rmse_m:.3f} m, ms_error={breakdown.ms_error_m:.3f} m"
        )
    print(summary)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superloc",
        description="Super-resolved MS localisation over cooperative base stations",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log solver iterations (DEBUG)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a Monte Carlo RMSE sweep")
    run.add_argument("--config", required=True, help="Run configuration (JSON)")
    run.add_argument("--out", help="Results file, overrides output.path")
    run.add_argument(
        "--threads", type=int, default=1, help="Parallel trials (default: 1)"
    )
    run.add_argument(
        "--seed", type=int, help=f"Master seed, overrides {SEED_ENV_VAR}"
    )

    synth = commands.add_parser("synth", help="Write one synthetic dataset")
    synth.add_argument("--config", required=True, help="Run configuration (JSON)")
    synth.add_argument("--out", required=True, help="Dataset file to write")
    synth.add_argument(
        "--seed", type=int, help=f"Master seed, overrides {SEED_ENV_VAR}"
    )

    solve = commands.add_parser("solve", help="Solve a stored dataset")
    solve.add_argument("--data", required=True, help="Dataset written by `synth`")
    solve.add_argument("--config", required=True, help="Run configuration (JSON)")
    solve.add_argument("--out", required=True, help="Solution file to write")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT
    )

    try:
        if getattr(args, "seed", None) is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0", field="seed")
        if args.command == "run":
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1", field="threads")
            return cmd_run(
                args.config, out=args.out, threads=args.threads, seed=args.seed
            )
        if args.command == "synth":
            return cmd_synth(args.config, args.out, seed=args.seed)
        return cmd_solve(args.data, args.config, args.out)
    except SuperlocError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
