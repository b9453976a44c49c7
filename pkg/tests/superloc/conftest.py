"""Shared fixtures for the superloc tests."""

import json
import math

import numpy as np
import pytest

from superloc.config import SolverConfig, SystemConfig
from superloc.harness import generate_scenario
from superloc.models import Condition, Location, Scene
from superloc.signal import add_awgn, synthesize


@pytest.fixture
def system():
    """Default 4-BS system."""
    return SystemConfig()


@pytest.fixture
def scene():
    return Scene(0.0, 0.0, 1000.0, 1000.0)


@pytest.fixture
def exact_solver(scene):
    """Solver without regularisation, for noise-free recovery."""
    return SolverConfig(lambda1=0.0, lambda2=0.0, search_area=scene)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def nlos_scenario(system, scene):
    """One LoS path and one scattered path per BS."""
    return generate_scenario(
        Condition.NLOS, 1, scene, "random_phase", 7, bs_positions=system.bs_positions
    )


@pytest.fixture
def los_scenario(system, scene):
    return generate_scenario(
        Condition.LOS, 0, scene, "random_phase", 3, bs_positions=system.bs_positions
    )


@pytest.fixture
def clean(system):
    """Noise-free measurements of a scenario, with the SNR recorded as infinite."""

    def make(scenario):
        return add_awgn(synthesize(scenario, system), math.inf, 0)

    return make


@pytest.fixture
def random_point(rng):
    """Uniform point of the 1 km scene away from the BS corners."""

    def draw():
        return Location(*rng.uniform(50.0, 950.0, size=2))

    return draw


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration document and return its path."""

    def write(document, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2))
        return path

    return write


@pytest.fixture
def smoke_document(tmp_path):
    """Small one-trial noise-free configuration."""
    return {
        "schema_version": 1,
        "solver": {"coarse_grid_points_per_axis": 16},
        "experiment": {
            "condition": "nlos",
            "snr_grid_db": ["inf"],
            "trials": 1,
            "seed": 11,
        },
        "output": {"path": str(tmp_path / "results.csv")},
    }
