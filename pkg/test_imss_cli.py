"""命令行入口测试：退出码、错误行、输出格式与逐字节可复现"""

import json
from pathlib import Path

import pytest

from app.imss_cli import main
from imss_scripts.simulation.database_io import read_database
from tools.margin_tool import MARGIN_COLUMNS


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _error(err):
    lines = [line for line in err.splitlines() if line.startswith('{"error_type"')]
    assert lines, err
    return json.loads(lines[-1])


def _pipeline(capsys, out: Path):
    """synth -> fit -> build-db -> eval，返回 eval 的标准输出"""
    pixels, labels = out / "synth_pixels.csv", out / "synth_labels.csv"
    assert _run(capsys, "--out", out, "synth", "--n-per-class", 60, "--bands", 16)[0] == 0
    assert _run(capsys, "--out", out, "fit", "--data", pixels, "--labels", labels, "--n-components", 3)[0] == 0
    assert _run(capsys, "--out", out, "build-db", "--data", pixels, "--labels", labels)[0] == 0
    code, stdout, _ = _run(capsys, "--out", out, "--format", "json", "eval", "--data", pixels, "--labels", labels)
    assert code == 0
    return stdout


def test_truth_table_text_report(capsys, tmp_path):
    code, out, _ = _run(capsys, "truth-table", "--out", tmp_path)
    assert code == 0
    assert "passed: True" in out
    assert (tmp_path / "truth_table.csv").exists()
    config = json.loads((tmp_path / "run_config.json").read_text(encoding="utf-8"))
    assert config["command"] == "truth-table"
    assert config["effective"]["seed"] == 2022


def test_truth_table_with_variability(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "truth-table", "--variability")
    assert code == 0
    summary = json.loads(out)["summary"]
    assert summary["sampled_passed"]
    assert summary["mean_match"] < 1e-6
    assert summary["mean_mismatch"] >= 6e-6


def test_zero_read_voltage_reports_fail(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "truth-table", "--v-read", 0)
    assert code == 0
    assert json.loads(out)["summary"]["passed"] is False


def test_margin_csv(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "csv", "margin", "--plot")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ",".join(MARGIN_COLUMNS)
    assert len(lines) == 7
    assert lines[1].split(",")[3] == "30.3703"
    assert (tmp_path / "margin.svg").exists()


def test_energy_json(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "energy", "--compare-to", "28nm")
    assert code == 0
    rows = {r["profile"]: r for r in json.loads(out)["rows"]}
    assert rows["130nm"]["p_total"] == pytest.approx(145.2e-6)
    assert rows["130nm"]["e_search"] == pytest.approx(71.26e-12, rel=0.005)
    assert rows["28nm"]["e_search"] == pytest.approx(28.67e-12, rel=0.005)
    assert rows["130nm"]["ratio"] == pytest.approx(2.49, abs=0.05)


def test_energy_zero_vectors(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "energy", "--vectors", 0)
    assert code == 0
    assert all(r["e_search"] == 0.0 for r in json.loads(out)["rows"])


def test_pipeline_and_query(capsys, tmp_path):
    report = json.loads(_pipeline(capsys, tmp_path))
    assert report["summary"]["overall_accuracy"] >= 0.95
    assert (tmp_path / "confusion.csv").exists()

    db = read_database(tmp_path / "database.imss")
    bits = db.code(3).to_string()
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "query", "--bits", bits, "-k", 1)
    assert code == 0
    result = json.loads(out)
    assert result["rows"][0]["distance"] == 0
    assert result["summary"]["predicted_label"] == int(db.labels[3])


def test_outputs_are_byte_identical(capsys, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _pipeline(capsys, first) == _pipeline(capsys, second)
    names = sorted(p.name for p in first.iterdir() if p.name != "run_config.json")
    assert names == sorted(p.name for p in second.iterdir() if p.name != "run_config.json")
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_analog_eval_on_cube_writes_prediction_map(capsys, tmp_path):
    assert _run(capsys, "--out", tmp_path, "synth", "--n-per-class", 40, "--bands", 16, "--layout", "cube")[0] == 0
    meta = tmp_path / "synth_cube.bin.json"
    assert _run(capsys, "--out", tmp_path, "fit", "--data", meta, "--n-components", 3)[0] == 0
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "eval", "--data", meta,
                        "--mode", "analog", "--variability-ratio", 0)
    assert code == 0
    assert json.loads(out)["summary"]["mode"] == "analog"
    assert (tmp_path / "prediction_map.ppm").exists()
    assert (tmp_path / "prediction_map.csv").read_text(encoding="utf-8").count("\n") == 4


def test_sweep_zero_ratio_equals_digital(capsys, tmp_path):
    _run(capsys, "--out", tmp_path, "synth", "--n-per-class", 40, "--bands", 16)
    code, out, _ = _run(
        capsys, "--out", tmp_path, "--format", "json", "sweep",
        "--data", tmp_path / "synth_pixels.csv", "--labels", tmp_path / "synth_labels.csv",
        "--ratios", 0, 0.2, "--trials", 2, "--n-components", 3, "--plot",
    )
    assert code == 0
    summary = json.loads(out)["summary"]
    assert summary["zero_ratio_equals_digital"] is True
    assert (tmp_path / "sweep.svg").exists()


def test_missing_database_gives_error_line(capsys, tmp_path):
    code, out, err = _run(capsys, "--out", tmp_path, "query", "--db", tmp_path / "none.imss", "--bits", "0101")
    assert code == 2
    assert out == ""
    assert _error(err)["error_type"] == "DataFormatError"


def test_invalid_parameter_gives_error_line(capsys, tmp_path):
    code, _, err = _run(capsys, "--out", tmp_path, "query", "--bits", "0101", "-k", 0)
    assert code == 2
    assert _error(err)["error_type"] == "ConfigurationError"


def test_unknown_profile(capsys, tmp_path):
    code, _, err = _run(capsys, "--out", tmp_path, "energy", "--profiles", "7nm")
    assert code == 2
    assert _error(err)["error_type"] == "ConfigurationError"


def test_missing_config_file(capsys, tmp_path):
    code, _, err = _run(capsys, "--config", tmp_path / "absent.yaml", "truth-table")
    assert code == 2
    assert _error(err)["error_type"] == "ConfigurationError"


def test_unknown_subcommand_exits_with_usage():
    with pytest.raises(SystemExit) as exc:
        main(["teleport"])
    assert exc.value.code == 2


def test_readout_report(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "readout", "--variability-ratio", 0, "--n-tiles", 1)
    assert code == 0
    payload = json.loads(out)
    assert len(payload["rows"]) == 5
    assert payload["summary"]["scenario_nearest_bl"] == 7
    assert not payload["summary"]["levels_overlap"]
    for name in ("readout.csv", "readout_transfer.csv", "readout_scenario.csv"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "readout.csv").read_text(encoding="utf-8").startswith("hd,i_nominal,v_nominal")


def test_oracle_writes_record(capsys, tmp_path):
    code, out, _ = _run(capsys, "--out", tmp_path, "--format", "json", "oracle", "--trials", 1)
    assert code == 0
    summary = json.loads(out)["summary"]
    record = json.loads((tmp_path / "synthetic_oracle.json").read_text(encoding="utf-8"))
    assert record == summary
    assert record["seed"] == 2022 and record["analog_trials"] == 1
    assert record["engine_digital_accuracy"] == record["digital_accuracy"]
