"""评估、扫描与合成数据工具测试"""

import numpy as np
import pytest

from tools.evaluation_tool import (
    EvalParams,
    OracleParams,
    SweepParams,
    SynthParams,
    _trend_ok,
    brute_force_labels,
    run_eval,
    run_oracle,
    run_sweep,
    run_synth,
)
from tools.search_tool import BuildDbParams, FitParams, run_build_db, run_fit


@pytest.fixture
def synth_files(tmp_path):
    result = run_synth(SynthParams(n_per_class=40, bands=16, output_dir=str(tmp_path), seed=5))
    assert result["success"], result["error"]
    pixels, labels = result["generated_files"]
    model_path = str(tmp_path / "encoder.json")
    assert run_fit(FitParams(data=pixels, labels=labels, n_components=3, model_path=model_path, seed=5))["success"]
    return tmp_path, pixels, labels, model_path


def test_synth_reports_reference_accuracy(synth_files):
    tmp_path, *_ = synth_files
    result = run_synth(SynthParams(n_per_class=40, bands=16, output_dir=str(tmp_path / "again"), seed=5))
    assert result["summary"]["n_pixels"] == 160
    assert result["summary"]["euclidean_nn_accuracy"] >= 0.99


def test_eval_digital_and_analog(synth_files):
    tmp_path, pixels, labels, model_path = synth_files
    common = dict(data=pixels, labels=labels, model_path=model_path, seed=5, output_dir=str(tmp_path / "eval"))
    digital = run_eval(EvalParams(**common))
    analog = run_eval(EvalParams(mode="analog", variability_ratio=0.0, **common))
    assert digital["success"] and analog["success"]
    assert digital["summary"]["overall_accuracy"] >= 0.95
    assert analog["summary"]["overall_accuracy"] == digital["summary"]["overall_accuracy"]
    assert sum(r["n_test"] for r in digital["rows"]) == digital["summary"]["n_test"]
    assert (tmp_path / "eval" / "confusion.csv").exists()


def test_eval_with_wrong_model_dimensions(synth_files, tmp_path):
    _, pixels, labels, _ = synth_files
    other = str(tmp_path / "other.json")
    run_fit(FitParams(data=pixels, labels=labels, n_components=2, model_path=other, seed=5))
    first = str(tmp_path / "first.json")
    run_fit(FitParams(data=pixels, labels=labels, n_components=3, model_path=first, seed=5))
    db_path = str(tmp_path / "db.imss")
    assert run_build_db(BuildDbParams(data=pixels, labels=labels, model_path=first, db_path=db_path, seed=5))["success"]
    result = run_eval(EvalParams(data=pixels, labels=labels, model_path=other, db_path=db_path, seed=5))
    assert result["error_type"] == "DimensionError"


def test_sweep(synth_files):
    _, pixels, labels, _ = synth_files
    result = run_sweep(SweepParams(data=pixels, labels=labels, ratios=[0.0, 0.2], trials=2, n_components=3, seed=5))
    assert result["success"], result["error"]
    assert result["summary"]["zero_ratio_equals_digital"]
    assert [r["ratio"] for r in result["rows"]] == [0.0, 0.2]


def test_trend_check():
    flat = [{"mean_accuracy": 0.9, "std_accuracy": 0.0}, {"mean_accuracy": 0.9, "std_accuracy": 0.0}]
    noisy = [{"mean_accuracy": 0.8, "std_accuracy": 0.02}, {"mean_accuracy": 0.82, "std_accuracy": 0.02}]
    rising = [{"mean_accuracy": 0.5, "std_accuracy": 0.0}, {"mean_accuracy": 0.9, "std_accuracy": 0.01}]
    assert _trend_ok(flat)
    assert _trend_ok(noisy)
    assert not _trend_ok(rising)


def test_brute_force_labels_break_ties_by_index():
    bits = np.array([[0, 1, 1, 0], [1, 0, 0, 1], [0, 1, 0, 0]], dtype=np.uint8)
    labels = np.array([7, 8, 9])
    queries = np.array([[0, 1, 1, 0], [1, 1, 1, 1], [0, 0, 0, 0]], dtype=np.uint8)
    # 第二个查询到第 0、1 行距离同为 2，取下标小者
    assert brute_force_labels(bits, labels, queries).tolist() == [7, 7, 9]
    assert brute_force_labels(bits.astype(np.float64), labels, queries.astype(np.float64)).tolist() == [7, 7, 9]


def test_oracle_on_small_generator(tmp_path):
    out = tmp_path / "oracle.json"
    result = run_oracle(OracleParams(n_per_class=40, bands=16, trials=2, ratio=0.0, seed=5, output_path=str(out)))
    assert result["success"], result["error"]
    s = result["summary"]
    assert s["engine_digital_accuracy"] == s["digital_accuracy"]
    assert s["analog_loss"] == 0.0
    assert out.exists() and result["generated_files"] == [str(out)]
