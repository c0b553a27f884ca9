"""pytest 公共夹具"""

import sys
from pathlib import Path

import numpy as np
import pytest

_PROJECT_ROOT = str(Path(__file__).resolve().parent)
if _PROJECT_ROOT not in sys.path:
    sys.path.insert(0, _PROJECT_ROOT)

from imss_scripts.application.hsi_pipeline import synth_dataset  # noqa: E402
from imss_scripts.devices.device_model import VariabilityModel  # noqa: E402
from imss_scripts.settings import DEFAULT_PROFILE_PATH  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(2022)


@pytest.fixture
def ideal_model():
    """无涨落：阻值恒为名义均值"""
    return VariabilityModel()


@pytest.fixture
def measured_model():
    """实测量级涨落：σ/µ = 0.2，截断在实测区间内"""
    return VariabilityModel(lrs_ratio=0.2, hrs_ratio=0.2)


@pytest.fixture
def profile_path():
    return str(DEFAULT_PROFILE_PATH)


@pytest.fixture(scope="session")
def synth_small():
    """小规模合成数据：4 类 × 60 像素，需配合 n_components=3 使用"""
    return synth_dataset(n_classes=4, n_per_class=60, bands=16, seed=7)
