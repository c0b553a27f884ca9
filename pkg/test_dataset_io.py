"""像素数据读写测试"""

import json

import numpy as np
import pytest
import scipy.io

from imss_scripts.application.dataset_io import (
    PixelDataset,
    load_csv,
    load_dataset,
    load_mat,
    load_raw_cube,
    save_csv,
    save_raw_cube,
)
from imss_scripts.errors import DataFormatError, DimensionError


def _image(rng, height=3, width=4, bands=5):
    return PixelDataset(
        features=rng.uniform(0, 5000, (height * width, bands)),
        labels=rng.integers(0, 4, height * width),
        shape=(height, width),
    )


def test_csv_round_trip(tmp_path, rng):
    ds = _image(rng)
    pixels, labels = save_csv(ds, tmp_path / "pixels.csv", tmp_path / "labels.csv")
    back = load_dataset(pixels, labels)
    assert back.n_pixels == 12 and back.bands == 5
    assert np.allclose(back.features, ds.features, atol=1e-6)
    assert np.array_equal(back.labels, ds.labels)


def test_csv_without_labels_is_unlabeled(tmp_path, rng):
    pixels, _ = save_csv(_image(rng), tmp_path / "p.csv", tmp_path / "l.csv")
    ds = load_csv(pixels)
    assert ds.classes.size == 0
    assert ds.labeled().n_pixels == 0


def test_raw_cube_round_trip(tmp_path, rng):
    ds = _image(rng)
    meta_path = save_raw_cube(ds, tmp_path / "cube.bin")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    assert meta == {"height": 3, "width": 4, "bands": 5, "label_file": "cube_labels.csv"}
    back = load_raw_cube(meta_path)
    assert back.shape == (3, 4)
    assert np.array_equal(back.features, ds.features.astype(np.float32).astype(np.float64))
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(load_dataset(meta_path).labels, ds.labels)


def test_raw_cube_size_mismatch(tmp_path, rng):
    meta_path = save_raw_cube(_image(rng), tmp_path / "cube.bin")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta["bands"] = 6
    meta_path.write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_raw_cube(meta_path)


def test_mat_ingestion(tmp_path, rng):
    cube = rng.uniform(0, 1000, (3, 4, 5))
    gt = rng.integers(0, 3, (3, 4))
    scipy.io.savemat(tmp_path / "scene.mat", {"scene": cube})
    scipy.io.savemat(tmp_path / "scene_gt.mat", {"scene_gt": gt})
    ds = load_mat(tmp_path / "scene.mat", tmp_path / "scene_gt.mat")
    assert ds.shape == (3, 4)
    assert np.allclose(ds.features, cube.reshape(12, 5))
    assert np.array_equal(ds.labels, gt.ravel())


def test_non_finite_values_rejected():
    with pytest.raises(DataFormatError):
        PixelDataset(features=np.array([[1.0, np.nan]]), labels=np.array([1]))
    with pytest.raises(DataFormatError):
        PixelDataset(features=np.array([[1.0, np.inf]]), labels=np.array([1]))


def test_label_file_errors(tmp_path, rng):
    pixels, _ = save_csv(_image(rng), tmp_path / "p.csv", tmp_path / "l.csv")
    wide = tmp_path / "wide.csv"
    wide.write_text("1,2\n3,4\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_csv(pixels, wide)
    short = tmp_path / "short.csv"
    short.write_text("1\n2\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_csv(pixels, short)
    fractional = tmp_path / "frac.csv"
    fractional.write_text("\n".join(["1.5"] * 12) + "\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_csv(pixels, fractional)


def test_unsupported_extension(tmp_path):
    with pytest.raises(DataFormatError):
        load_dataset(tmp_path / "pixels.hdr")


def test_subset_keeps_pixel_index(rng):
    ds = _image(rng)
    ds.labels[:] = [0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2]
    labeled = ds.labeled()
    assert labeled.n_pixels == 8
    assert labeled.pixel_index.tolist() == [1, 2, 4, 5, 7, 8, 10, 11]
    assert labeled.classes.tolist() == [1, 2]


def test_cube_requires_full_image(tmp_path, rng):
    ds = _image(rng).labeled()
    ds.shape = None
    with pytest.raises(DimensionError):
        save_raw_cube(ds, tmp_path / "cube.bin")
