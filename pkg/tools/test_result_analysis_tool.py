"""结果输出工具测试"""

import json

import numpy as np
from PIL import Image

from imss_scripts.errors import DimensionError
from tools.result_analysis_tool import (
    class_palette,
    export_data_to_files,
    init_result,
    plot_margin,
    plot_sweep,
    record_error,
    render,
    to_csv,
    write_prediction_map,
)

ROWS = [{"n_bits": 1, "rbsm_db": 30.370279}, {"n_bits": 2, "rbsm_db": 26.5}]


def test_record_error_fills_fields():
    result = record_error(init_result(), DimensionError("长度不符"))
    assert result["success"] is False
    assert result["error_type"] == "DimensionError"
    assert result["error"] == "长度不符"
    assert record_error(init_result(), FileNotFoundError("x"))["error_type"] == "IOError"


def test_csv_uses_fixed_float_format():
    assert to_csv(ROWS) == "n_bits,rbsm_db\n1,30.3703\n2,26.5\n"
    assert to_csv(ROWS, ["rbsm_db", "n_bits"]).splitlines()[0] == "rbsm_db,n_bits"


def test_render_formats():
    result = init_result(rows=ROWS, summary={"trend": True})
    payload = json.loads(render(result, "json"))
    assert payload == {"rows": ROWS, "summary": {"trend": True}}
    text = render(result, "text", title="margin")
    assert "30.3703" in text and "trend: True" in text
    assert render(init_result(summary={"a": 1.5}), "csv") == "a\n1.5\n"


def test_export_writes_csv_and_json(tmp_path):
    files = export_data_to_files(init_result(rows=ROWS, summary={"n": np.int64(2)}), tmp_path, "margin")
    assert [p.rsplit("/", 1)[-1] for p in files] == ["margin.csv", "margin.json"]
    assert json.loads((tmp_path / "margin.json").read_text(encoding="utf-8"))["summary"] == {"n": 2}


def test_plots_are_reproducible(tmp_path):
    a = plot_margin(ROWS, tmp_path / "a.svg").read_bytes()
    b = plot_margin(ROWS, tmp_path / "b.svg").read_bytes()
    assert a == b
    sweep = [{"ratio": 0.0, "mean_accuracy": 0.98, "std_accuracy": 0.0},
             {"ratio": 0.2, "mean_accuracy": 0.97, "std_accuracy": 0.01}]
    assert plot_sweep(sweep, tmp_path / "s.svg", 0.98).read_bytes().startswith(b"<?xml")


def test_prediction_map_files(tmp_path):
    grid = np.array([[0, 1, 2], [2, 1, 0]])
    csv_path, ppm_path = write_prediction_map(grid, tmp_path)
    assert open(csv_path, encoding="utf-8").read() == "0,1,2\n2,1,0\n"
    image = Image.open(ppm_path)
    assert image.size == (3, 2)
    palette = class_palette([1, 2])
    assert image.getpixel((0, 0)) == (0, 0, 0)
    assert image.getpixel((1, 0)) == palette[1]
    assert palette[1] != palette[2]
