"""SA 读出特性工具测试"""

import pytest

from tools.readout_tool import READOUT_COLUMNS, ReadoutParams, all_words, run_readout


def test_all_words_are_msb_first():
    words = all_words(3)
    assert words.shape == (8, 3)
    assert "".join(map(str, words[4])) == "100"


def test_nominal_levels_without_variability(tmp_path):
    result = run_readout(ReadoutParams(variability_ratio=0.0, n_tiles=2, seed=1, output_dir=str(tmp_path)))
    assert result["success"], result["error"]
    assert list(result["rows"][0]) == READOUT_COLUMNS
    assert [r["hd"] for r in result["rows"]] == [0, 1, 2, 3, 4]
    for row in result["rows"]:
        assert row["v_min"] == pytest.approx(row["v_nominal"])
        assert row["v_max"] == pytest.approx(row["v_nominal"])
    assert result["rows"][-1]["v_nominal"] == pytest.approx(1.8)
    summary = result["summary"]
    assert summary["gain"] == pytest.approx(22.5e3)
    assert not summary["levels_overlap"]
    assert summary["quantization_errors"] == 0
    assert summary["scenario_nearest_bl"] == 7
    assert len(result["scenario"]) == 16
    assert len(result["transfer"]) == 101
    assert (tmp_path / "readout_transfer.csv").exists()
    assert (tmp_path / "readout_scenario.csv").read_text(encoding="utf-8").startswith("query,BL0")


def test_small_variability_keeps_levels_apart():
    result = run_readout(ReadoutParams(variability_ratio=0.05, n_tiles=5, seed=3))
    assert result["success"]
    assert not result["summary"]["levels_overlap"]
    assert result["summary"]["quantization_errors"] == 0
    assert result["summary"]["scenario_nearest_bl"] == 7


def test_overlap_flag_follows_sampled_spread():
    result = run_readout(ReadoutParams(n_tiles=4, seed=2022))
    assert result["success"]
    rows = result["rows"]
    gaps = [b["v_min"] - a["v_max"] for a, b in zip(rows, rows[1:])]
    assert result["summary"]["levels_overlap"] == any(g <= 0 for g in gaps)
    assert result["summary"]["min_level_gap"] == pytest.approx(min(gaps))
    # HD=0 的列电流不超过 4 个 HRS 上限电流，始终是最低电压
    assert result["summary"]["scenario_nearest_bl"] == 7


def test_transfer_curve_saturates_at_vdd():
    result = run_readout(ReadoutParams(variability_ratio=0.0, n_tiles=1, curve_points=11))
    curve = result["transfer"]
    assert curve[0]["v_out"] == 0.0
    assert curve[-1]["v_out"] == pytest.approx(1.8)
    assert all(a["v_out"] <= b["v_out"] for a, b in zip(curve, curve[1:]))


def test_missing_profile_is_reported(tmp_path):
    result = run_readout(ReadoutParams(profile_path=str(tmp_path / "none.yaml")))
    assert result["error_type"] == "ConfigurationError"
