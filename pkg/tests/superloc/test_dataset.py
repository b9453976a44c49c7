"""Test dataset, solution and results files."""

import json
import math

import numpy as np
import pytest

from superloc.const import RESULT_COLUMNS
from superloc.dataset import (
    load_dataset,
    save_dataset,
    save_solution,
    summary_path,
    write_results,
)
from superloc.exceptions import DatasetIOError, SchemaError
from superloc.harness import summarise
from superloc.models import (
    AdcgResult,
    CandidateSolution,
    Condition,
    IterationRecord,
    Location,
    MobileEstimate,
    MonteCarloReport,
    RmseBreakdown,
    TrialResult,
)
from superloc.signal import add_awgn, synthesize


def _report():
    trials = [
        TrialResult(Condition.NLOS, -10.0, 0, 1.25, 0.5, converged=True),
        TrialResult(
            Condition.NLOS, -10.0, 1, 2.75, 1.5, converged=False, ambiguous=True
        ),
        TrialResult(Condition.NLOS, math.inf, 0, 0.01, 0.0, converged=True),
    ]
    return MonteCarloReport(trials=tuple(trials), summary=summarise(trials))


def _result():
    candidate = CandidateSolution(
        np.array([[500.0, 400.0, 500.0, 400.0], [500.0, 400.0, 120.0, 880.0]]),
        np.array([[1 + 1j, 2, 0.5j, 1], [0.3, 0.2, 0.1, 0.4j]]),
    )
    history = (IterationRecord(1, 1, 10.0, 8.0), IterationRecord(2, 2, 6.0, 5.5))
    return AdcgResult(candidate, True, 2, history, initial_loss=20.0)


def test_dataset_round_trip_is_exact(tmp_path, system, nlos_scenario):
    """Test that matrices and ground truth come back bit for bit."""
    measurements = add_awgn(synthesize(nlos_scenario, system), -10.0, 42)
    path = tmp_path / "trial.json"
    save_dataset(path, system, measurements, nlos_scenario)

    loaded = load_dataset(path)
    assert loaded.system == system
    assert loaded.scenario == nlos_scenario
    assert loaded.measurements.snr_db == -10.0
    assert loaded.measurements.noise_seed == 42
    for y, z in zip(measurements.per_bs, loaded.measurements.per_bs):
        assert np.array_equal(y, z)


def test_dataset_without_truth(tmp_path, system, los_scenario, clean):
    """Test infinite SNR and a missing ground truth."""
    path = tmp_path / "blind.json"
    save_dataset(path, system, clean(los_scenario))
    raw = json.loads(path.read_text())
    assert raw["measurements"]["snr_db"] == "inf"
    assert "ground_truth" not in raw

    loaded = load_dataset(path)
    assert loaded.scenario is None
    assert loaded.measurements.snr_db == math.inf


def test_truncated_dataset(tmp_path, system, los_scenario, clean):
    """Test that a cut-off file is a schema error."""
    path = tmp_path / "cut.json"
    save_dataset(path, system, clean(los_scenario))
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_dataset_schema_violations(tmp_path, system, los_scenario, clean):
    """Test kind, shape and BS-count checks."""
    path = tmp_path / "data.json"
    save_dataset(path, system, clean(los_scenario))
    document = json.loads(path.read_text())

    wrong_kind = dict(document, kind="something-else")
    path.write_text(json.dumps(wrong_kind))
    with pytest.raises(SchemaError) as err:
        load_dataset(path)
    assert err.value.field == "kind"

    short = json.loads(json.dumps(document))
    short["measurements"]["per_bs"][0]["data"].pop()
    path.write_text(json.dumps(short))
    with pytest.raises(SchemaError) as err:
        load_dataset(path)
    assert err.value.field == "measurements.per_bs.0"

    missing_bs = json.loads(json.dumps(document))
    missing_bs["measurements"]["per_bs"].pop()
    path.write_text(json.dumps(missing_bs))
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_missing_dataset(tmp_path):
    """Test that an unreadable dataset is an I/O error."""
    with pytest.raises(DatasetIOError):
        load_dataset(tmp_path / "nothing.json")


def test_solution_file(tmp_path):
    """Test the solution layout with and without a ground-truth score."""
    mobile = MobileEstimate(Location(500.0, 400.0), False, 0.0)
    blind = tmp_path / "blind.json"
    save_solution(blind, _result(), mobile, (0.5, 0.25))
    document = json.loads(blind.read_text())
    assert "rmse" not in document
    assert document["kind"] == "superloc-solution"
    assert document["ms"]["location_m"] == [500.0, 400.0]
    assert document["atoms"][0]["weights"][0] == [1.0, 1.0]
    assert document["monotone"] is True
    assert len(document["history"]) == 2

    scored = tmp_path / "scored.json"
    breakdown = RmseBreakdown(1.0, 0.75, 0.5, (1.0, 1.5))
    save_solution(scored, _result(), mobile, (0.5, 0.25), breakdown)
    assert json.loads(scored.read_text())["rmse"]["rmse_m"] == 1.0


def test_results_csv(tmp_path):
    """Test the fixed CSV header, the lowercase booleans and the summary file."""
    path = tmp_path / "out" / "results.csv"
    written = write_results(path, _report())
    assert written == summary_path(path) == tmp_path / "out" / "results.summary.json"

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert lines[1] == "nlos,-10.0,0,1.25,0.5,true,false,"
    assert lines[2].endswith(",false,true,")
    assert lines[3].startswith("nlos,inf,0,")

    summary = json.loads(written.read_text())
    assert [row["snr_db"] for row in summary["rows"]] == [-10.0, "inf"]
    assert summary["rows"][0]["mean_rmse_m"] == pytest.approx(2.0)
    assert summary["rows"][0]["nonconverged_count"] == 1


def test_results_json_with_runtime(tmp_path):
    """Test the JSON results layout."""
    path = tmp_path / "results.json"
    write_results(path, _report(), fmt="json", record_runtime=True)
    rows = json.loads(path.read_text())["rows"]
    assert rows[1]["converged"] is False
    assert rows[2]["snr_db"] == "inf"
    assert rows[0]["runtime_s"] == 0.0
