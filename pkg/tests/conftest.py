"""Shared fixtures: desk-scale pipeline runs reused across test modules."""

import pathlib
import time

import numpy as np
import pytest
import yaml

from smvrft import cli
from smvrft.lti import zoh_discretize
from smvrft.presets import EXAMPLE_PLANTS
from smvrft.signals import collect_dataset

ROOT = pathlib.Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

#: (base config, mode, overrides) for the four benchmark pipelines
DESK_RUNS = {
    "ex1_ff": ("example1_ff.yaml", "ff", {}),
    "ex1_ei": ("example1_ei.yaml", "ei", {}),
    "ex1_m10_ff": ("example1_ff.yaml", "ff", {"reference_model": {"name": "M10"}}),
    "ex2_ff": ("example2_ff.yaml", "ff", {}),
}


def _deep_update(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def write_config(path: pathlib.Path, base_name: str, overrides: dict) -> pathlib.Path:
    raw = yaml.safe_load((CONFIGS / base_name).read_text())
    _deep_update(raw, overrides)
    path.write_text(yaml.safe_dump(raw))
    return path


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """Run the four benchmark pipelines once; yield name -> (out dir, seconds)."""
    runs = {}
    for name, (base, mode, overrides) in DESK_RUNS.items():
        cfg_path = write_config(
            tmp_path_factory.mktemp(f"cfg_{name}") / "config.yaml", base, overrides
        )
        out = tmp_path_factory.mktemp(f"run_{name}")
        t0 = time.perf_counter()
        rc = cli.main(
            ["full", "--config", str(cfg_path), "--out", str(out), "--mode", mode]
        )
        elapsed = time.perf_counter() - t0
        assert rc == 0, f"desk pipeline {name} exited with {rc}"
        runs[name] = (out, elapsed)
    return runs


@pytest.fixture(scope="session")
def ex1_theta():
    p = EXAMPLE_PLANTS["example1"]
    return zoh_discretize(p.num_s, p.den_s, p.Ts)


@pytest.fixture(scope="session")
def ex2_theta():
    p = EXAMPLE_PLANTS["example2"]
    return zoh_discretize(p.num_s, p.den_s, p.Ts)


@pytest.fixture(scope="session")
def ex1_dataset(ex1_theta):
    """Clean 500-sample two-channel record of the example-1 plant."""
    return collect_dataset(
        ex1_theta, 500, 0.1, 0.125, input_seed=17, noise_seeds=(101, 202)
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(321)
