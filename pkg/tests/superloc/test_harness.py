"""Test scenario generation, scoring and the Monte Carlo sweep."""

import dataclasses
import itertools
import math
from pathlib import Path as FilePath

import numpy as np
import pytest

from superloc import harness
from superloc.config import ExperimentConfig, SolverConfig, load_run_config
from superloc.exceptions import (
    EmptyCandidateError,
    InvalidConditionError,
    SuperlocError,
)
from superloc.harness import (
    associate_scatters,
    estimated_scatters,
    extract_ms,
    generate_scenario,
    rmse,
    run_monte_carlo,
    summarise,
    trial_seeds,
)
from superloc.models import (
    CandidateSolution,
    Condition,
    Location,
    Path,
    Scenario,
    TrialResult,
)
from superloc.signal import synthesize


def _scenario(condition, num_scatterers, seed, system, scene, **kwargs):
    return generate_scenario(
        condition,
        num_scatterers,
        scene,
        "random_phase",
        seed,
        bs_positions=system.bs_positions,
        **kwargs,
    )


def _two_scatter_truth(mobile):
    s1, s2 = Location(200, 300), Location(700, 800)
    paths = ((Path(s1, 1 + 0j), Path(s2, 1 + 0j)),) * 4
    return Scenario(mobile, paths, Condition.OLOS, 0, scatterers=(s1, s2))


def test_generate_scenario_conditions(system, scene):
    """Test the per-BS path make-up of each propagation condition."""
    for seed in range(10):
        los = _scenario("los", None, seed, system, scene)
        assert los.scatterers == ()
        assert all(len(p) == 1 and p[0].is_los for p in los.per_bs_paths)

        nlos = _scenario("nlos", 1, seed, system, scene)
        for paths in nlos.per_bs_paths:
            assert sum(p.is_los for p in paths) == 1
            assert sum(not p.is_los for p in paths) == 1

        olos = _scenario("olos", 2, seed, system, scene)
        assert not olos.has_los
        assert all(len(p) == 2 for p in olos.per_bs_paths)

        mixed = _scenario("mixed", 2, seed, system, scene)
        for paths in mixed.per_bs_paths:
            # LoS plus the first scatterer, or both scatterers
            assert len(paths) == 2
            assert sum(p.is_los for p in paths) <= 1
            assert paths[-1].scatter == mixed.scatterers[-1] or paths[0].is_los


def test_generate_scenario_is_deterministic(system, scene):
    """Test that one seed always draws the same scenario."""
    first = _scenario("mixed", 2, 99, system, scene)
    again = _scenario("mixed", 2, 99, system, scene)
    other = _scenario("mixed", 2, 100, system, scene)
    assert first == again
    assert first != other


def test_generate_scenario_respects_scene_and_clearance(system, scene):
    """Test that every drawn point is inside the scene and clear of the BSs."""
    for seed in range(20):
        scenario = _scenario("olos", 3, seed, system, scene, clearance_m=50.0)
        for point in (scenario.mobile, *scenario.scatterers):
            assert scene.contains(point)
            assert all(point.distance_to(bs) >= 50.0 for bs in system.bs_positions)


def test_generate_scenario_gains(system, scene):
    """Test the unit and random-phase gain models."""
    bs = system.bs_positions
    unit = generate_scenario("nlos", 1, scene, "unit", 4, bs_positions=bs)
    assert all(p.gain == 1 for paths in unit.per_bs_paths for p in paths)
    random = _scenario("nlos", 1, 4, system, scene)
    gains = [p.gain for paths in random.per_bs_paths for p in paths]
    assert all(abs(g) == pytest.approx(1.0) for g in gains)
    assert len(set(gains)) == len(gains)


def test_generate_scenario_errors(system, scene):
    """Test conditions that cannot be generated."""
    with pytest.raises(InvalidConditionError):
        _scenario("olos", 0, 1, system, scene)
    with pytest.raises(InvalidConditionError):
        _scenario("nlos", 1, 1, system, scene, clearance_m=2000.0)


def test_truth_scatterers_include_virtual_scatter(system, scene):
    """Test that LoS paths contribute the MS as a truth scatter."""
    nlos = _scenario("nlos", 1, 8, system, scene)
    assert nlos.truth_scatterers() == [nlos.scatterers[0], nlos.mobile]
    olos = _scenario("olos", 2, 8, system, scene)
    assert olos.truth_scatterers() == list(olos.scatterers)


def test_extract_ms_examples():
    """Test the weighted centroid and the ambiguity flag."""
    single = CandidateSolution(
        np.array([[10.0, 20.0, 30.0, 40.0]]), np.array([[1.0, 1.0]], dtype=complex)
    )
    estimate = extract_ms(single)
    assert estimate.location == Location(10, 20)
    assert not estimate.ambiguous
    assert estimate.spread_m == 0.0

    close = CandidateSolution(
        np.array([[0.0, 0.0, 5.0, 5.0], [3.0, 4.0, 9.0, 9.0]]),
        np.array([[1.0], [3.0]], dtype=complex),
    )
    estimate = extract_ms(close)
    assert estimate.location.x == pytest.approx(2.25)
    assert estimate.location.y == pytest.approx(3.0)
    assert estimate.spread_m == pytest.approx(5.0)
    assert not estimate.ambiguous

    far = CandidateSolution(
        np.array([[0.0, 0.0, 5.0, 5.0], [30.0, 40.0, 9.0, 9.0]]),
        np.array([[1.0], [1.0]], dtype=complex),
    )
    estimate = extract_ms(far)
    assert estimate.ambiguous
    assert estimate.spread_m == pytest.approx(50.0)


def test_extract_ms_empty():
    """Test that an empty candidate has no MS estimate."""
    with pytest.raises(EmptyCandidateError):
        extract_ms(CandidateSolution.empty(4))


def test_estimated_scatters_order():
    """Test that scatters are listed strongest first."""
    candidate = CandidateSolution(
        np.array([[0, 0, 1, 1], [0, 0, 2, 2], [0, 0, 3, 3]], dtype=float),
        np.array([[0.5], [2.0], [1.0]], dtype=complex),
    )
    assert estimated_scatters(candidate) == [
        Location(2, 2),
        Location(3, 3),
        Location(1, 1),
    ]


def test_association_matches_brute_force(rng):
    """Test greedy matching against the optimal assignment for nearby estimates."""
    for _ in range(20):
        truth = [Location(100, 100), Location(500, 800), Location(900, 200)]
        order = rng.permutation(3)
        estimated = [truth[t].shifted(*rng.uniform(-10, 10, 2)) for t in order]
        association = associate_scatters(estimated, truth)

        def cost(pairs):
            return sum(estimated[e].distance_to(truth[t]) for e, t in pairs)

        best = min(
            (tuple(enumerate(perm)) for perm in itertools.permutations(range(3))),
            key=cost,
        )
        assert sorted(association.pairs) == sorted(best)
        assert association.unmatched_estimates == ()
        assert association.unmatched_truths == ()


def test_association_leftovers():
    """Test that surplus estimates and truths are reported."""
    truth = [Location(0, 0), Location(100, 0)]
    association = associate_scatters([Location(1, 0)], truth)
    assert association.pairs == ((0, 0),)
    assert association.unmatched_truths == (1,)

    association = associate_scatters(
        [Location(1, 0), Location(99, 0), Location(50, 50)], truth
    )
    assert association.unmatched_estimates == (2,)


def test_rmse_perfect_and_uniform_offset():
    """Test that RMSE is 0 at the truth and 1 when everything is 1 m off."""
    mobile = Location(400, 400)
    truth = _two_scatter_truth(mobile)
    perfect = rmse(mobile, [Location(200, 300), Location(700, 800)], truth)
    assert perfect.rmse_m == 0.0

    estimates = [Location(201, 300), Location(700, 801)]
    shifted = rmse(mobile.shifted(1, 0), estimates, truth)
    assert shifted.rmse_m == pytest.approx(1.0)
    assert shifted.ms_error_m == pytest.approx(1.0)


def test_rmse_mixed_errors():
    """Test that errors of 1, 2 and 3 m average to 2 m."""
    mobile = Location(400, 400)
    truth = _two_scatter_truth(mobile)
    result = rmse(mobile.shifted(0, 3), [Location(201, 300), Location(702, 800)], truth)
    assert result.rmse_m == pytest.approx(2.0)
    assert result.per_scatter_errors_m == pytest.approx((1.0, 2.0))


def test_rmse_unmatched_truth_uses_nearest_estimate():
    """Test that a missed scatter is scored against the closest estimate of any kind."""
    mobile = Location(700, 805)
    truth = _two_scatter_truth(mobile)
    result = rmse(mobile, [Location(200, 300)], truth)
    assert result.per_scatter_errors_m == pytest.approx((0.0, 5.0))
    assert result.rmse_m == pytest.approx(5.0 / 3)
    assert result.matched_only_rmse_m == 0.0


def test_trial_seeds():
    """Test that seeds are reproducible and distinct per trial and SNR point."""
    assert trial_seeds(7, 3, 4) == trial_seeds(7, 3, 4)
    scenario_seed, noise_seeds = trial_seeds(7, 3, 4)
    assert len(set(noise_seeds)) == 4
    assert scenario_seed not in noise_seeds
    assert trial_seeds(7, 4, 4)[0] != scenario_seed
    assert trial_seeds(8, 3, 4)[0] != scenario_seed


def test_summarise():
    """Test that the per-point aggregate scores only the trials that did not fail."""

    def trial(snr, index, value, **kwargs):
        return TrialResult(
            condition=Condition.NLOS,
            snr_db=snr,
            trial=index,
            rmse_m=value,
            ms_error_m=value,
            matched_only_rmse_m=value,
            **kwargs,
        )

    rows = summarise(
        [
            trial(0.0, 0, 1.0, converged=True),
            trial(0.0, 1, 3.0, converged=True, ambiguous=True),
            trial(0.0, 2, math.nan, failed=True),
            trial(10.0, 0, 0.5, converged=True),
        ]
    )
    assert [row.snr_db for row in rows] == [0.0, 10.0]
    first = rows[0]
    assert first.mean_rmse_m == pytest.approx(2.0)
    assert first.std_rmse_m == pytest.approx(1.0)
    assert first.trials == 2
    assert first.ambiguous_count == 1
    assert first.failed_count == 1
    assert first.nonconverged_count == 1
    assert rows[1].mean_rmse_m == pytest.approx(0.5)
    assert rows[1].std_rmse_m == 0.0
    assert summarise([]) == ()


def test_monte_carlo_records_failed_trials(system, scene, monkeypatch):
    """Test that a failing trial becomes a NaN row instead of aborting the sweep."""

    def boom(*args, **kwargs):
        raise SuperlocError("solver exploded")

    monkeypatch.setattr(harness, "adcg_solve", boom)
    experiment = ExperimentConfig(snr_grid_db=(0.0, 10.0), trials=2, scene=scene)
    report = run_monte_carlo(experiment, system, SolverConfig())
    assert len(report.trials) == 4
    assert all(t.failed and math.isnan(t.rmse_m) for t in report.trials)
    assert [(t.snr_db, t.trial) for t in report.trials] == [
        (0.0, 0),
        (0.0, 1),
        (10.0, 0),
        (10.0, 1),
    ]
    assert [row.failed_count for row in report.summary] == [2, 2]
    assert report.any_nonconverged


@pytest.mark.parametrize(
    "error",
    [
        np.linalg.LinAlgError("SVD did not converge"),
        ValueError("array must not contain infs or NaNs"),
        FloatingPointError("overflow encountered"),
        ZeroDivisionError("float division by zero"),
    ],
)
def test_monte_carlo_records_numeric_failures(system, scene, monkeypatch, error):
    """Test that numeric errors inside a trial are recorded as failed trials."""

    def boom(*args, **kwargs):
        raise error

    monkeypatch.setattr(harness, "adcg_solve", boom)
    experiment = ExperimentConfig(snr_grid_db=(0.0,), trials=2, scene=scene)
    report = run_monte_carlo(experiment, system, SolverConfig())
    assert all(t.failed for t in report.trials)
    (row,) = report.summary
    assert row.failed_count == 2
    assert row.trials == 0
    assert math.isnan(row.mean_rmse_m)


def test_monte_carlo_propagates_programming_errors(system, scene, monkeypatch):
    """Test that errors outside the numeric family still abort the sweep."""

    def boom(*args, **kwargs):
        raise TypeError("unexpected keyword")

    monkeypatch.setattr(harness, "adcg_solve", boom)
    experiment = ExperimentConfig(snr_grid_db=(0.0,), trials=1, scene=scene)
    with pytest.raises(TypeError):
        run_monte_carlo(experiment, system, SolverConfig())

@pytest.mark.slow
def test_monte_carlo_noise_free_and_thread_independent(system, scene):
    """Test a small noise-free sweep and its reproducibility across threads."""
    experiment = ExperimentConfig(
        conditions=(Condition.NLOS,),
        snr_grid_db=(math.inf,),
        trials=2,
        seed=5,
        scene=scene,
    )
    scfg = SolverConfig(coarse_grid_points_per_axis=16, search_area=scene)
    serial = run_monte_carlo(experiment, system, scfg, threads=1)
    parallel = run_monte_carlo(experiment, system, scfg, threads=2)

    assert len(serial.trials) == 2
    for row in serial.trials:
        assert not row.failed
        assert row.rmse_m < 0.5
    assert [t.rmse_m for t in serial.trials] == [t.rmse_m for t in parallel.trials]
    assert serial.summary == parallel.summary


@pytest.mark.slow
def test_desk_sweep_error_trend_and_condition_order():
    """Test that the desk sweep error falls with SNR and orders the conditions.

    Across conditions at most one adjacent SNR pair may go the wrong way; at
    the lowest SNR NLoS is no worse than mixed, which is no worse than OLoS.
    """
    config = load_run_config(FilePath(__file__).parents[2] / "configs" / "desk.json")
    report = run_monte_carlo(config.experiment, config.system, config.solver, threads=4)
    assert not any(t.failed for t in report.trials)
    assert all(t.monotone for t in report.trials)

    curves = {}
    for row in report.summary:
        curves.setdefault(row.condition, []).append((row.snr_db, row.mean_rmse_m))
    inversions = 0
    for points in curves.values():
        errors = [value for _, value in sorted(points)]
        inversions += sum(later > earlier for earlier, later in zip(errors, errors[1:]))
    assert inversions <= 1

    lowest = {condition: min(points)[1] for condition, points in curves.items()}
    assert lowest[Condition.NLOS] <= lowest[Condition.MIXED] <= lowest[Condition.OLOS]


def test_default_olos_scenario_has_three_scatterers(system, scene):
    """Test that OLoS draws three scatterers when the count is left open."""
    scenario = _scenario("olos", None, 4, system, scene)
    assert len(scenario.scatterers) == 3
    assert all(len(paths) == 3 for paths in scenario.per_bs_paths)


def test_two_scatterer_olos_data_do_not_fix_the_mobile(system, scene):
    """Test that mirroring the MS across the scatterer line leaves the data alone."""
    scenario = _scenario("olos", 2, 8, system, scene)
    first, second = (s.as_array() for s in scenario.scatterers)
    axis = (second - first) / np.linalg.norm(second - first)
    offset = scenario.mobile.as_array() - first
    mirror = first + 2 * (offset @ axis) * axis - offset
    mirrored = dataclasses.replace(scenario, mobile=Location.from_array(mirror))

    assert mirrored.mobile.distance_to(scenario.mobile) > 1.0
    for y, z in zip(
        synthesize(scenario, system).per_bs, synthesize(mirrored, system).per_bs
    ):
        np.testing.assert_allclose(z, y, rtol=0, atol=1e-9)
