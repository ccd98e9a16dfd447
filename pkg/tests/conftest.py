"""Shared fixtures for the odgae test suite."""

import os
import sys
from datetime import datetime, timedelta

import numpy as np
import pytest

# Add parent directory to path so the application modules import
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from encoder import ModelDims  # noqa: E402
from nn_core import RngStream  # noqa: E402
from od_graph import Dataset, ODSnapshot, WeightScaler, ZoneFeatures, scale_weights, time_context  # noqa: E402
from training import build_model_params  # noqa: E402

START = datetime(2019, 1, 7)  # a Monday


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale experiment tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_snapshot(n, rng, stamp=START, density=0.6, scaler=None):
    """Random snapshot on n nodes with travel times in [100, 900] s."""
    pairs = [(o, d) for o in range(n) for d in range(n) if o != d]
    keep = [p for p in pairs if rng.random() < density] or pairs[:1]
    taus = rng.uniform(100.0, 900.0, len(keep))
    scaler = scaler or WeightScaler(1.0 / 1000.0, 1.0 / 50.0)
    return ODSnapshot(n, [p[0] for p in keep], [p[1] for p in keep], scale_weights(scaler, taus),
                      time_context(stamp), stamp, taus)


def small_dims(n, layer_dims=(6, 4), d_hour=3, d_week=3, d_g=5, d_e=4):
    return ModelDims(n, layer_dims, d_hour, d_week, d_g, d_e)


@pytest.fixture
def scaler():
    return WeightScaler(1.0 / 1000.0, 1.0 / 50.0)


@pytest.fixture
def tiny_dataset(scaler):
    """Four zones, 48 hourly snapshots with a daily travel-time pattern."""
    rng = np.random.default_rng(7)
    zones = tuple(ZoneFeatures(f"z{i}", None, tuple(rng.uniform(0, 1, 4))) for i in range(4))
    snapshots = []
    for h in range(48):
        stamp = START + timedelta(hours=h)
        base = 300.0 + 200.0 * (stamp.hour in (7, 8, 9, 16, 17, 18))
        pairs = [(o, d) for o in range(4) for d in range(4) if o != d]
        taus = np.array([base + 40.0 * abs(o - d) for o, d in pairs]) * rng.uniform(0.97, 1.03, len(pairs))
        snapshots.append(ODSnapshot(4, [p[0] for p in pairs], [p[1] for p in pairs],
                                    scale_weights(scaler, taus), time_context(stamp), stamp, taus))
    return Dataset(zones, tuple(snapshots), scaler)


@pytest.fixture
def tiny_params():
    return build_model_params(small_dims(4), RngStream(3))
