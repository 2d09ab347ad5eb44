"""Pytest configuration and shared fixtures."""

import numpy as np
import pytest

from amortprox.diffnet import Batch, Head, LayerSpec, Model
from amortprox.numkit import Rng
from amortprox.utils.config_mgr import config


@pytest.fixture(autouse=True)
def clean_config(monkeypatch):
    """Keep environment overrides out of tests."""
    monkeypatch.setattr(config, "apo_seed", None)
    monkeypatch.setattr(config, "logging_to_file", False)
    monkeypatch.setattr(config, "record_wallclock", False)
    monkeypatch.setattr(config, "grid_parallel", 1)
    return config


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def scalar_model():
    """One bias-free 1x1 linear unit with a squared-error head."""
    return Model((LayerSpec(1, 1, has_bias=False),), Head.REGRESSION)


@pytest.fixture
def half_square_batch():
    """Input 1/√2 and target 0, so the loss of weight θ is ½θ²."""
    return Batch(np.array([[np.sqrt(0.5)]]), np.zeros((1, 1)))


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"
