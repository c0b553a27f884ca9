"""端到端验收：合成数据上的完整流程、涨落扫描趋势，以及（可选）Salinas 实测数据"""

import json
import os
from pathlib import Path

import pytest

from imss_scripts.application.dataset_io import load_mat
from imss_scripts.application.hsi_pipeline import (
    build_database,
    euclidean_nn_accuracy,
    evaluate,
    fit,
    split,
    synth_dataset,
    variability_sweep,
)
from imss_scripts.devices.device_model import Distribution
from imss_scripts.settings import DEFAULT_PROFILE_PATH
from imss_scripts.simulation.energy_model import load_tech_file
from tools.evaluation_tool import ORACLE_THRESHOLDS, OracleParams, run_oracle

SEED = 2022
ORACLE_RECORD = Path(__file__).resolve().parent / "results" / "synthetic_oracle.json"


@pytest.fixture(scope="module")
def calibrated():
    ds = synth_dataset(n_classes=4, n_per_class=250, bands=32, seed=SEED)
    train, test = split(ds, 0.7, SEED)
    return ds, train, test


def test_float_reference_and_digital_pipeline(calibrated):
    _, train, test = calibrated
    assert euclidean_nn_accuracy(train, test) >= 0.99
    model = fit(train, n_components=3)
    report = evaluate(model, build_database(model, train), test, k=1, mode="digital")
    assert report.n_test == 300
    assert report.overall_accuracy >= 0.95


def test_measured_variability_sweep(calibrated):
    ds, _, _ = calibrated
    base = load_tech_file(DEFAULT_PROFILE_PATH).variability
    sweep = variability_sweep(ds, [0.0, 0.1, 0.2, 0.4], trials=10, seed=SEED, n_components=3,
                              base=base, distribution=Distribution.LOGNORMAL)
    rows = {r["ratio"]: r for r in sweep.rows}
    assert sweep.digital_accuracy >= 0.95
    assert rows[0.0]["mean_accuracy"] == sweep.digital_accuracy
    assert sweep.digital_accuracy - rows[0.2]["mean_accuracy"] <= 0.02
    for a, b in zip(sweep.rows, sweep.rows[1:]):
        noise = 2.0 * (a["std_accuracy"] ** 2 + b["std_accuracy"] ** 2) ** 0.5
        assert b["mean_accuracy"] <= a["mean_accuracy"] + noise + 1e-12


@pytest.fixture(scope="module")
def oracle():
    result = run_oracle(OracleParams(seed=SEED))
    assert result["success"], result["error"]
    return result["summary"]


def test_engine_matches_brute_force_oracle(oracle):
    assert oracle["n_test"] == 300
    assert oracle["engine_digital_accuracy"] == oracle["digital_accuracy"]
    assert oracle["engine_float_nn_accuracy"] == pytest.approx(oracle["float_nn_accuracy"], abs=1e-12)
    assert oracle["float_nn_accuracy"] >= ORACLE_THRESHOLDS["float_nn_accuracy"]
    assert oracle["digital_accuracy"] >= ORACLE_THRESHOLDS["digital_accuracy"]
    assert oracle["analog_loss"] <= ORACLE_THRESHOLDS["analog_loss"]
    assert oracle["passed"]


@pytest.mark.skipif(not ORACLE_RECORD.exists(), reason="未提交 results/synthetic_oracle.json")
def test_oracle_reproduces_committed_record(oracle):
    committed = json.loads(ORACLE_RECORD.read_text(encoding="utf-8"))
    assert committed["seed"] == SEED
    assert committed["thresholds"] == ORACLE_THRESHOLDS
    for key in ("float_nn_accuracy", "digital_accuracy", "analog_mean_accuracy", "analog_loss"):
        assert oracle[key] == pytest.approx(committed[key], abs=1e-12), key


@pytest.mark.skipif(not os.environ.get("IMSS_SALINAS_DIR"), reason="未设置 IMSS_SALINAS_DIR")
def test_salinas_digital_accuracy():
    root = Path(os.environ["IMSS_SALINAS_DIR"])
    ds = load_mat(root / "Salinas_corrected.mat", root / "Salinas_gt.mat")
    train, test = split(ds, 0.7, SEED)
    model = fit(train, n_components=20)
    report = evaluate(model, build_database(model, train), test, k=1, mode="digital")
    assert report.overall_accuracy >= 0.89
