"""编码与检索工具测试"""

import pytest

from imss_scripts.application.dataset_io import save_csv
from imss_scripts.application.hsi_pipeline import synth_dataset
from imss_scripts.simulation.database_io import read_database
from tools.search_tool import (
    BuildDbParams,
    EncodeParams,
    FitParams,
    QueryParams,
    run_build_db,
    run_encode,
    run_fit,
    run_query,
)


@pytest.fixture
def workspace(tmp_path):
    ds = synth_dataset(n_classes=4, n_per_class=30, bands=12, seed=3)
    pixels, labels = save_csv(ds, tmp_path / "pixels.csv", tmp_path / "labels.csv")
    model_path = tmp_path / "encoder.json"
    fit_result = run_fit(FitParams(data=str(pixels), labels=str(labels), n_components=3, model_path=str(model_path)))
    assert fit_result["success"], fit_result["error"]
    return tmp_path, str(pixels), str(labels), str(model_path), fit_result


def test_fit_summary(workspace):
    _, _, _, _, result = workspace
    assert result["summary"]["code_bits"] == 24
    assert result["summary"]["n_train"] == 84
    assert result["summary"]["n_test"] == 36
    assert 0 < result["summary"]["retained_variance"] <= 1


def test_encode_writes_codes(workspace):
    tmp_path, pixels, labels, model_path, _ = workspace
    result = run_encode(EncodeParams(model_path=model_path, data=pixels, labels=labels,
                                     output_path=str(tmp_path / "codes.csv")))
    assert result["success"]
    assert len(result["rows"]) == 120
    assert all(len(r["code"]) == 24 for r in result["rows"])
    assert (tmp_path / "codes.csv").exists()


def test_build_db_and_query_pixel(workspace):
    tmp_path, pixels, labels, model_path, _ = workspace
    db_path = str(tmp_path / "db.imss")
    built = run_build_db(BuildDbParams(data=pixels, labels=labels, model_path=model_path, db_path=db_path,
                                       materialize=True, variability_ratio=0.0))
    assert built["success"]
    assert built["summary"]["n_segments"] == 6
    db = read_database(db_path)
    assert db.is_materialized and db.n_vectors == 84

    for mode in ("digital", "analog"):
        result = run_query(QueryParams(db_path=db_path, bits=db.code(0).to_string(), k=3, mode=mode))
        assert result["success"]
        assert result["rows"][0]["distance"] == 0
        assert result["rows"][0]["index"] == 0

    by_pixel = run_query(QueryParams(db_path=db_path, model_path=model_path, data=pixels, labels=labels, pixel=5))
    assert by_pixel["success"]
    assert by_pixel["summary"]["predicted_label"] == by_pixel["summary"]["true_label"]


def test_query_needs_bits_or_pixel(workspace):
    tmp_path, pixels, labels, model_path, _ = workspace
    db_path = str(tmp_path / "db.imss")
    run_build_db(BuildDbParams(data=pixels, labels=labels, model_path=model_path, db_path=db_path))
    result = run_query(QueryParams(db_path=db_path))
    assert result["error_type"] == "ConfigurationError"
    result = run_query(QueryParams(db_path=db_path, model_path=model_path, data=pixels, pixel=999))
    assert result["error_type"] == "IndexOutOfRangeError"
    result = run_query(QueryParams(db_path=db_path, bits="0101"))
    assert result["error_type"] == "DimensionError"
