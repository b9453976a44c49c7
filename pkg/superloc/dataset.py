"""Text containers for measurements, ground truth, solutions and result tables.

Complex values are stored as [re, im] pairs of decimal floats so fixtures stay
diffable; Python's float repr makes the round trip exact.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Any

import numpy as np
import pandas as pd
import voluptuous as vol

from .config import (
    SYSTEM_SCHEMA,
    SystemConfig,
    system_config_from_dict,
    system_config_to_dict,
)
from .const import DATASET_KIND, RESULT_COLUMNS, SCHEMA_VERSION, SOLUTION_KIND
from .exceptions import ConfigError, DatasetIOError, SchemaError
from .models import (
    AdcgResult,
    Condition,
    Location,
    MeasurementSet,
    MobileEstimate,
    MonteCarloReport,
    Path,
    RmseBreakdown,
    Scenario,
)

_LOGGER = logging.getLogger(__name__)

_PAIR = vol.ExactSequence([vol.Coerce(float), vol.Coerce(float)])

MATRIX_SCHEMA = vol.Schema(
    {
        vol.Required("shape"): vol.ExactSequence(
            [vol.All(int, vol.Range(min=1)), vol.All(int, vol.Range(min=1))]
        ),
        vol.Required("data"): [_PAIR],
    }
)

MEASUREMENTS_SCHEMA = vol.Schema(
    {
        vol.Optional("snr_db", default=None): vol.Any(None, vol.Coerce(float)),
        vol.Optional("noise_seed", default=None): vol.Any(None, int),
        vol.Required("per_bs"): vol.All([MATRIX_SCHEMA], vol.Length(min=1)),
    }
)

PATH_SCHEMA = vol.Schema(
    {
        vol.Required("scatter"): vol.Any(None, vol.All(int, vol.Range(min=0))),
        vol.Required("gain"): _PAIR,
    }
)

GROUND_TRUTH_SCHEMA = vol.Schema(
    {
        vol.Required("condition"): vol.In([c.value for c in Condition]),
        vol.Required("seed"): int,
        vol.Required("mobile_m"): _PAIR,
        vol.Optional("scatterers_m", default=list): [_PAIR],
        vol.Required("paths"): [[PATH_SCHEMA]],
    }
)

DATASET_SCHEMA = vol.Schema(
    {
        vol.Required("schema_version"): vol.All(int, vol.In((SCHEMA_VERSION,))),
        vol.Required("kind"): DATASET_KIND,
        vol.Required("system"): SYSTEM_SCHEMA,
        vol.Required("measurements"): MEASUREMENTS_SCHEMA,
        vol.Optional("ground_truth", default=None): vol.Any(None, GROUND_TRUTH_SCHEMA),
    }
)


@dataclass(frozen=True)
class Dataset:
    """A stored measurement set with the system it was taken with."""

    system: SystemConfig
    measurements: MeasurementSet
    scenario: Scenario | None = None


def _encode_float(value: float | None) -> float | str | None:
    if value is None or math.isnan(value):
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _encode_matrix(matrix: np.ndarray) -> dict[str, Any]:
    flat = matrix.ravel()
    return {
        "shape": list(matrix.shape),
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def _decode_matrix(entry: dict[str, Any], field: str) -> np.ndarray:
    rows, cols = entry["shape"]
    data = entry["data"]
    if len(data) != rows * cols:
        raise SchemaError(
            f"expected {rows * cols} entries for shape {rows}x{cols}, got {len(data)}",
            field=field,
        )
    values = np.array([complex(re, im) for re, im in data], dtype=complex)
    return values.reshape(rows, cols)


def _encode_scenario(scenario: Scenario) -> dict[str, Any]:
    scatterers = list(scenario.scatterers)

    def index_of(path: Path) -> int | None:
        return None if path.scatter is None else scatterers.index(path.scatter)

    return {
        "condition": scenario.condition.value,
        "seed": scenario.seed,
        "mobile_m": [scenario.mobile.x, scenario.mobile.y],
        "scatterers_m": [[s.x, s.y] for s in scatterers],
        "paths": [
            [
                {"scatter": index_of(path), "gain": [path.gain.real, path.gain.imag]}
                for path in paths
            ]
            for paths in scenario.per_bs_paths
        ],
    }


def _decode_scenario(entry: dict[str, Any]) -> Scenario:
    scatterers = tuple(Location(x, y) for x, y in entry["scatterers_m"])
    per_bs = []
    for j, paths in enumerate(entry["paths"]):
        decoded = []
        for path in paths:
            index = path["scatter"]
            if index is not None and index >= len(scatterers):
                raise SchemaError(
                    f"scatter index {index} out of range",
                    field=f"ground_truth.paths.{j}",
                )
            scatter = None if index is None else scatterers[index]
            decoded.append(Path(scatter, complex(*path["gain"])))
        per_bs.append(tuple(decoded))
    return Scenario(
        mobile=Location(*entry["mobile_m"]),
        per_bs_paths=tuple(per_bs),
        condition=Condition(entry["condition"]),
        seed=entry["seed"],
        scatterers=scatterers,
    )


def _write_json(path: FilePath, payload: Any) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")
    except OSError as err:
        raise DatasetIOError(f"Cannot write {path}: {err}") from err


def save_dataset(
    path: str | FilePath,
    cfg: SystemConfig,
    measurements: MeasurementSet,
    scenario: Scenario | None = None,
) -> None:
    """Serialise a measurement set, its system and optionally the ground truth."""
    payload: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "kind": DATASET_KIND,
        "system": system_config_to_dict(cfg),
        "measurements": {
            "snr_db": _encode_float(measurements.snr_db),
            "noise_seed": measurements.noise_seed,
            "per_bs": [_encode_matrix(y) for y in measurements.per_bs],
        },
    }
    if scenario is not None:
        payload["ground_truth"] = _encode_scenario(scenario)
    _write_json(FilePath(path), payload)
    _LOGGER.debug("Wrote dataset with %d BS matrices to %s", measurements.num_bs, path)


def load_dataset(path: str | FilePath) -> Dataset:
    """Read and validate a dataset written by save_dataset."""
    path = FilePath(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise DatasetIOError(f"Cannot read dataset {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(
            f"Malformed or truncated dataset (line {err.lineno}): {err.msg}"
        ) from err
    try:
        data = DATASET_SCHEMA(raw)
    except vol.MultipleInvalid as err:
        raise SchemaError(err.msg, field=".".join(str(p) for p in err.path)) from err

    try:
        system = system_config_from_dict(data["system"])
    except ConfigError as err:
        raise SchemaError(str(err), field="system") from err

    per_bs = tuple(
        _decode_matrix(entry, f"measurements.per_bs.{j}")
        for j, entry in enumerate(data["measurements"]["per_bs"])
    )
    expected = (system.num_antennas, system.num_subcarriers)
    for j, y in enumerate(per_bs):
        if y.shape != expected:
            raise SchemaError(
                f"matrix shape {y.shape} does not match the system {expected}",
                field=f"measurements.per_bs.{j}",
            )
    if len(per_bs) != system.num_bs:
        raise SchemaError(
            f"{len(per_bs)} matrices for {system.num_bs} BSs",
            field="measurements.per_bs",
        )

    measurements = MeasurementSet(
        per_bs=per_bs,
        snr_db=data["measurements"]["snr_db"],
        noise_seed=data["measurements"]["noise_seed"],
    )
    truth = data["ground_truth"]
    scenario = None if truth is None else _decode_scenario(truth)
    if scenario is not None and scenario.num_bs != system.num_bs:
        raise SchemaError(
            f"ground truth lists {scenario.num_bs} BSs, system has {system.num_bs}",
            field="ground_truth.paths",
        )
    return Dataset(system=system, measurements=measurements, scenario=scenario)


def save_solution(
    path: str | FilePath,
    result: AdcgResult,
    mobile: MobileEstimate | None,
    lambdas: tuple[float, float],
    breakdown: RmseBreakdown | None = None,
) -> None:
    """Write the estimated MS, atoms, weights and, when known, the RMSE."""
    candidate = result.candidate
    payload: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "kind": SOLUTION_KIND,
        "converged": result.converged,
        "monotone": result.monotone,
        "iterations": result.iterations,
        "lambda1": lambdas[0],
        "lambda2": lambdas[1],
        "ms": None
        if mobile is None
        else {
            "location_m": [mobile.location.x, mobile.location.y],
            "ambiguous": mobile.ambiguous,
            "spread_m": mobile.spread_m,
        },
        "atoms": [
            {
                "mobile_m": row[0:2].tolist(),
                "scatter_m": row[2:4].tolist(),
                "weights": [[float(w.real), float(w.imag)] for w in weights],
            }
            for row, weights in zip(candidate.params, candidate.weights)
        ],
        "history": [
            {
                "iteration": record.iteration,
                "num_atoms": record.num_atoms,
                "loss_after_weights": record.loss_after_weights,
                "loss_after_improve": record.loss_after_improve,
            }
            for record in result.history
        ],
    }
    if breakdown is not None:
        payload["rmse"] = {
            "rmse_m": breakdown.rmse_m,
            "matched_only_rmse_m": breakdown.matched_only_rmse_m,
            "ms_error_m": breakdown.ms_error_m,
            "per_scatter_errors_m": list(breakdown.per_scatter_errors_m),
        }
    _write_json(FilePath(path), payload)


def results_frame(
    report: MonteCarloReport, record_runtime: bool = False
) -> pd.DataFrame:
    """Per-trial table with the fixed result columns."""
    rows = [
        {
            "condition": trial.condition.value,
            "snr_db": trial.snr_db,
            "trial": trial.trial,
            "rmse_m": trial.rmse_m,
            "ms_error_m": trial.ms_error_m,
            "converged": "true" if trial.converged else "false",
            "ambiguous": "true" if trial.ambiguous else "false",
            "runtime_s": trial.runtime_s if record_runtime else None,
        }
        for trial in report.trials
    ]
    return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))


def summary_path(path: str | FilePath) -> FilePath:
    """<stem>.summary.json next to the results file."""
    path = FilePath(path)
    return path.with_name(f"{path.stem}.summary.json")


def write_results(
    path: str | FilePath,
    report: MonteCarloReport,
    fmt: str = "csv",
    record_runtime: bool = False,
) -> FilePath:
    """Write the per-trial table and the summary; returns the summary path."""
    path = FilePath(path)
    if fmt == "json":
        records = [
            {
                "condition": trial.condition.value,
                "snr_db": _encode_float(trial.snr_db),
                "trial": trial.trial,
                "rmse_m": _encode_float(trial.rmse_m),
                "ms_error_m": _encode_float(trial.ms_error_m),
                "converged": trial.converged,
                "ambiguous": trial.ambiguous,
                "runtime_s": trial.runtime_s if record_runtime else None,
            }
            for trial in report.trials
        ]
        _write_json(path, {"schema_version": SCHEMA_VERSION, "rows": records})
    else:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            results_frame(report, record_runtime).to_csv(
                path, index=False, lineterminator="\n", na_rep=""
            )
        except OSError as err:
            raise DatasetIOError(f"Cannot write {path}: {err}") from err

    summary = {
        "schema_version": SCHEMA_VERSION,
        "rows": [
            {
                "condition": row.condition.value,
                "snr_db": _encode_float(row.snr_db),
                "mean_rmse_m": _encode_float(row.mean_rmse_m),
                "std_rmse_m": _encode_float(row.std_rmse_m),
                "matched_only_rmse_m": _encode_float(row.matched_only_rmse_m),
                "trials": row.trials,
                "ambiguous_count": row.ambiguous_count,
                "failed_count": row.failed_count,
                "nonconverged_count": row.nonconverged_count,
            }
            for row in report.summary
        ],
    }
    target = summary_path(path)
    _write_json(target, summary)
    _LOGGER.info(
        "Wrote %d result rows to %s and the summary to %s",
        len(report.trials),
        path,
        target,
    )
    return target
