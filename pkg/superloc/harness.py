"""Scenario generation, estimate scoring and Monte Carlo sweeps."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from .config import ExperimentConfig, SolverConfig, SystemConfig
from .const import (
    AMBIGUITY_SPREAD_M,
    DEFAULT_CLEARANCE_M,
    DEFAULT_SCATTERERS,
    GAIN_UNIT,
)
from .exceptions import EmptyCandidateError, InvalidConditionError, SuperlocError
from .models import (
    AdcgResult,
    Association,
    CandidateSolution,
    Condition,
    Location,
    MobileEstimate,
    MonteCarloReport,
    Path,
    RmseBreakdown,
    Scenario,
    Scene,
    SummaryRow,
    TrialResult,
)
from .signal import add_awgn, synthesize
from .solver import adcg_solve

_LOGGER = logging.getLogger(__name__)

# Errors that mark a single Monte Carlo trial as failed instead of aborting the run.
_TRIAL_ERRORS = (SuperlocError, ArithmeticError, ValueError, np.linalg.LinAlgError)

_MAX_DRAWS = 10_000


def _draw_point(
    rng: np.random.Generator,
    scene: Scene,
    bs_positions: Sequence[Location],
    clearance_m: float,
) -> Location:
    """Uniform point in the scene at least clearance_m away from every BS."""
    for _ in range(_MAX_DRAWS):
        point = Location(
            float(rng.uniform(scene.x_min, scene.x_max)),
            float(rng.uniform(scene.y_min, scene.y_max)),
        )
        if all(point.distance_to(bs) >= clearance_m for bs in bs_positions):
            return point
    raise InvalidConditionError(
        f"No point of the scene is {clearance_m} m clear of every BS"
    )


def _draw_gain(rng: np.random.Generator, gain_model: str) -> complex:
    if gain_model == GAIN_UNIT:
        return 1.0 + 0.0j
    return complex(np.exp(2j * np.pi * rng.uniform()))


def generate_scenario(
    condition: Condition | str,
    num_scatterers: int | None,
    scene: Scene,
    gain_model: str,
    seed: int,
    *,
    bs_positions: Sequence[Location],
    clearance_m: float = DEFAULT_CLEARANCE_M,
) -> Scenario:
    """Random MS, shared scatterers and per-BS paths for one propagation condition."""
    condition = Condition(condition)
    if num_scatterers is None:
        num_scatterers = DEFAULT_SCATTERERS[condition.value]
    if condition is not Condition.LOS and num_scatterers < 1:
        raise InvalidConditionError(
            f"Condition {condition.value} needs at least one scatterer"
        )
    if condition is Condition.LOS:
        num_scatterers = 0

    rng = np.random.default_rng(seed)
    mobile = _draw_point(rng, scene, bs_positions, clearance_m)
    scatterers = tuple(
        _draw_point(rng, scene, bs_positions, clearance_m)
        for _ in range(num_scatterers)
    )

    per_bs: list[tuple[Path, ...]] = []
    for _ in bs_positions:
        with_los = condition in (Condition.LOS, Condition.NLOS)
        seen = scatterers
        if condition is Condition.MIXED:
            with_los = bool(rng.random() < 0.5)
            if with_los:
                seen = scatterers[: max(1, num_scatterers - 1)]
        paths = [Path(None, _draw_gain(rng, gain_model))] if with_los else []
        paths.extend(Path(s, _draw_gain(rng, gain_model)) for s in seen)
        per_bs.append(tuple(paths))

    return Scenario(
        mobile=mobile,
        per_bs_paths=tuple(per_bs),
        condition=condition,
        seed=seed,
        scatterers=scatterers,
    )


def extract_ms(candidate: CandidateSolution) -> MobileEstimate:
    """GTV-weighted centroid of the atoms' l_t, flagged when they disagree."""
    if candidate.num_atoms == 0:
        raise EmptyCandidateError("No atom left to extract an MS location from")
    mobiles = candidate.params[:, 0:2]
    norms = candidate.group_norms()
    if not np.any(norms > 0):
        norms = np.ones_like(norms)
    centroid = np.average(mobiles, axis=0, weights=norms)
    spread = 0.0
    if candidate.num_atoms > 1:
        spread = float(
            np.max(np.linalg.norm(mobiles[:, None, :] - mobiles[None, :, :], axis=-1))
        )
    return MobileEstimate(
        location=Location.from_array(centroid),
        ambiguous=spread > AMBIGUITY_SPREAD_M,
        spread_m=spread,
    )


def estimated_scatters(candidate: CandidateSolution) -> list[Location]:
    """Scatter estimates in descending group-norm order (stable on ties)."""
    order = np.argsort(-candidate.group_norms(), kind="stable")
    return [Location.from_array(candidate.params[k, 2:4]) for k in order]


def associate_scatters(
    estimated: Sequence[Location], truth: Sequence[Location]
) -> Association:
    """Greedy nearest-neighbour matching, estimates taken in the given order."""
    free = list(range(len(truth)))
    pairs: list[tuple[int, int]] = []
    leftovers: list[int] = []
    for e, estimate in enumerate(estimated):
        if not free:
            leftovers.append(e)
            continue
        nearest = min(free, key=lambda t: estimate.distance_to(truth[t]))
        pairs.append((e, nearest))
        free.remove(nearest)
    return Association(
        pairs=tuple(pairs),
        unmatched_estimates=tuple(leftovers),
        unmatched_truths=tuple(free),
    )


def rmse(
    estimated_ms: Location,
    estimated_scatters: Sequence[Location],
    truth: Scenario,
) -> RmseBreakdown:
    """Mean location error over the K truth scatters and the MS.

    Unmatched truth scatters count with their distance to the nearest estimate
    of any kind (scatter or MS).
    """
    truth_scatters = truth.truth_scatterers()
    association = associate_scatters(estimated_scatters, truth_scatters)
    ms_error = estimated_ms.distance_to(truth.mobile)

    errors = [math.nan] * len(truth_scatters)
    for e, t in association.pairs:
        errors[t] = estimated_scatters[e].distance_to(truth_scatters[t])
    matched = [errors[t] for _, t in association.pairs]

    everything = [*estimated_scatters, estimated_ms]
    for t in association.unmatched_truths:
        errors[t] = min(point.distance_to(truth_scatters[t]) for point in everything)

    total = (sum(errors) + ms_error) / (len(truth_scatters) + 1)
    matched_only = (sum(matched) + ms_error) / (len(matched) + 1)
    return RmseBreakdown(
        rmse_m=total,
        matched_only_rmse_m=matched_only,
        ms_error_m=ms_error,
        per_scatter_errors_m=tuple(errors),
    )


def trial_seeds(seed: int, trial: int, num_snr: int) -> tuple[int, list[int]]:
    """Scenario seed of a trial and one noise seed per SNR point."""
    # entropy words are zero-padded; tag 0 marks the scenario stream, 1 the noise
    scenario_seed = int(np.random.SeedSequence([seed, trial, 0]).generate_state(1)[0])
    noise_seeds = [
        int(np.random.SeedSequence([seed, trial, 1, k]).generate_state(1)[0])
        for k in range(num_snr)
    ]
    return scenario_seed, noise_seeds


def run_trial(
    scenario: Scenario,
    snr_db: float,
    noise_seed: int,
    trial: int,
    cfg: SystemConfig,
    scfg: SolverConfig,
) -> tuple[TrialResult, AdcgResult]:
    """Synthesize, corrupt, solve and score one scenario at one SNR."""
    started = time.perf_counter()
    clean = synthesize(scenario, cfg)
    measurements = add_awgn(clean, snr_db, noise_seed)
    solved = adcg_solve(measurements, cfg, scfg)
    mobile = extract_ms(solved.candidate)
    breakdown = rmse(mobile.location, estimated_scatters(solved.candidate), scenario)
    if mobile.ambiguous:
        _LOGGER.warning(
            "Trial %d at %s dB: MS estimates spread over %.1f m",
            trial,
            snr_db,
            mobile.spread_m,
        )
    result = TrialResult(
        condition=scenario.condition,
        snr_db=snr_db,
        trial=trial,
        rmse_m=breakdown.rmse_m,
        ms_error_m=breakdown.ms_error_m,
        per_scatter_errors_m=breakdown.per_scatter_errors_m,
        matched_only_rmse_m=breakdown.matched_only_rmse_m,
        converged=solved.converged,
        ambiguous=mobile.ambiguous,
        monotone=solved.monotone,
        runtime_s=time.perf_counter() - started,
    )
    return result, solved


def _failed(condition: Condition, snr_db: float, trial: int) -> TrialResult:
    return TrialResult(
        condition=condition,
        snr_db=snr_db,
        trial=trial,
        rmse_m=math.nan,
        ms_error_m=math.nan,
        matched_only_rmse_m=math.nan,
        failed=True,
    )


def summarise(trials: Sequence[TrialResult]) -> tuple[SummaryRow, ...]:
    """Per (condition, SNR) aggregate, in first-seen order.

    Means, the population std and `trials` cover the scored trials only;
    failed ones are counted in `failed_count` alone.
    """
    if not trials:
        return ()
    frame = pd.DataFrame(
        {
            "condition": [t.condition.value for t in trials],
            "snr_db": [t.snr_db for t in trials],
            "rmse_m": [t.rmse_m for t in trials],
            "matched_only_rmse_m": [t.matched_only_rmse_m for t in trials],
            "ambiguous": [t.ambiguous for t in trials],
            "failed": [t.failed for t in trials],
            "nonconverged": [not t.converged for t in trials],
        }
    )
    scored = ~frame["failed"]
    frame["scored"] = scored
    frame["rmse_m"] = frame["rmse_m"].where(scored)
    frame["matched_only_rmse_m"] = frame["matched_only_rmse_m"].where(scored)
    grouped = frame.groupby(["condition", "snr_db"], sort=False)
    table = grouped.agg(
        mean_rmse_m=("rmse_m", "mean"),
        std_rmse_m=("rmse_m", lambda s: s.std(ddof=0)),
        matched_only_rmse_m=("matched_only_rmse_m", "mean"),
        trials=("scored", "sum"),
        ambiguous_count=("ambiguous", "sum"),
        failed_count=("failed", "sum"),
        nonconverged_count=("nonconverged", "sum"),
    )
    return tuple(
        SummaryRow(
            condition=Condition(condition),
            snr_db=float(snr_db),
            mean_rmse_m=float(row.mean_rmse_m),
            std_rmse_m=float(row.std_rmse_m),
            matched_only_rmse_m=float(row.matched_only_rmse_m),
            trials=int(row.trials),
            ambiguous_count=int(row.ambiguous_count),
            failed_count=int(row.failed_count),
            nonconverged_count=int(row.nonconverged_count),
        )
        for (condition, snr_db), row in table.iterrows()
    )


def run_monte_carlo(
    experiment: ExperimentConfig,
    cfg: SystemConfig,
    scfg: SolverConfig,
    *,
    threads: int = 1,
) -> MonteCarloReport:
    """Sweep every (condition, trial, SNR) point; deterministic for any thread count.

    A trial's scenario is shared by all SNR points; noise differs per point.
    """
    snr_grid = list(experiment.snr_grid_db)

    def one(task: tuple[Condition, int, int]) -> TrialResult:
        condition, trial, snr_index = task
        snr_db = snr_grid[snr_index]
        scenario_seed, noise_seeds = trial_seeds(experiment.seed, trial, len(snr_grid))
        try:
            scenario = generate_scenario(
                condition,
                experiment.num_scatterers,
                experiment.scene,
                experiment.gain_model,
                scenario_seed,
                bs_positions=cfg.bs_positions,
                clearance_m=experiment.clearance_m,
            )
            result, _ = run_trial(
                scenario, snr_db, noise_seeds[snr_index], trial, cfg, scfg
            )
        except _TRIAL_ERRORS as err:
            _LOGGER.error(
                "Trial %d (%s, %s dB) failed with %s: %s",
                trial,
                condition.value,
                snr_db,
                type(err).__name__,
                err,
            )
            return _failed(condition, snr_db, trial)
        _LOGGER.debug(
            "Trial %d (%s, %s dB): rmse %.3f m, ms error %.3f m",
            trial,
            condition.value,
            snr_db,
            result.rmse_m,
            result.ms_error_m,
        )
        return result

    tasks = [
        (condition, trial, snr_index)
        for condition in experiment.conditions
        for snr_index in range(len(snr_grid))
        for trial in range(experiment.trials)
    ]
    _LOGGER.info(
        "Running %d trials over %d conditions and %d SNR points on %d thread(s)",
        experiment.trials,
        len(experiment.conditions),
        len(snr_grid),
        threads,
    )
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(task) for task in tasks]

    summary = summarise(results)
    for row in summary:
        _LOGGER.info(
            "%s @ %s dB: mean RMSE %.3f m (std %.3f) over %d trials",
            row.condition.value,
            row.snr_db,
            row.mean_rmse_m,
            row.std_rmse_m,
            row.trials,
        )
    return MonteCarloReport(trials=tuple(results), summary=summary)
