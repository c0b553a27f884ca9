"""高光谱像素数据读写

支持三种输入：
  - CSV：每行一个像素的各波段值，另附单列整数标签 CSV
  - 原始数据立方体：小端 float32，按像素交织（BIP），旁边放一个 JSON 元数据文件
    {"height", "width", "bands", "label_file"}，label_file 为 height×width 的整数 CSV 网格
  - MATLAB .mat：公开发布的 Salinas 数据即为此格式（数据立方体与地面真值各一个文件）
标签 0 表示未标注像素。
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.io

from imss_scripts.errors import DataFormatError, DimensionError, IndexOutOfRangeError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class PixelDataset:
    """像素集合：features (n_pixels, bands)，labels (n_pixels,)，pixel_index 为原图行优先下标"""
    features: np.ndarray
    labels: np.ndarray
    class_names: Optional[List[str]] = None
    pixel_index: Optional[np.ndarray] = None
    shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.features.ndim != 2:
            raise DimensionError(f"features 必须是二维 (n_pixels, bands)，实际 {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionError(f"标签数 {self.labels.shape} 与像素数 {self.features.shape[0]} 不一致")
        if not np.isfinite(self.features).all():
            raise DataFormatError("像素数据包含 NaN 或 Inf")
        if (self.labels < 0).any():
            raise DataFormatError("标签不能为负")
        if self.pixel_index is None:
            self.pixel_index = np.arange(self.features.shape[0], dtype=np.int64)
        else:
            self.pixel_index = np.asarray(self.pixel_index, dtype=np.int64)
            if self.pixel_index.shape != self.labels.shape:
                raise DimensionError("pixel_index 与像素数不一致")
        if self.shape is not None:
            self.shape = (int(self.shape[0]), int(self.shape[1]))

    @property
    def n_pixels(self) -> int:
        return int(self.features.shape[0])

    @property
    def bands(self) -> int:
        return int(self.features.shape[1])

    @property
    def classes(self) -> np.ndarray:
        """已标注的类别编号（不含 0）"""
        return np.unique(self.labels[self.labels > 0])

    def subset(self, indices: np.ndarray) -> "PixelDataset":
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_pixels):
            raise IndexOutOfRangeError("子集下标越界")
        return PixelDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            class_names=self.class_names,
            pixel_index=self.pixel_index[indices],
            shape=self.shape,
        )

    def labeled(self) -> "PixelDataset":
        return self.subset(np.flatnonzero(self.labels > 0))


def _read_csv_matrix(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataFormatError(f"文件不存在: {path}")
    try:
        frame = pd.read_csv(path, header=None)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"CSV 解析失败: {path}: {e}") from e
    try:
        return frame.to_numpy(dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DataFormatError(f"CSV 包含非数值内容: {path}") from e


def _as_labels(values: np.ndarray, source: Path) -> np.ndarray:
    values = values.ravel()
    if not np.isfinite(values).all() or not np.equal(np.floor(values), values).all():
        raise DataFormatError(f"标签必须是整数: {source}")
    return values.astype(np.int64)


def load_csv(pixels_path: PathLike, labels_path: Optional[PathLike] = None) -> PixelDataset:
    pixels_path = Path(pixels_path)
    features = _read_csv_matrix(pixels_path)
    if labels_path is None:
        labels = np.zeros(features.shape[0], dtype=np.int64)
    else:
        labels_path = Path(labels_path)
        raw = _read_csv_matrix(labels_path)
        if raw.ndim != 2 or raw.shape[1] != 1:
            raise DataFormatError(f"标签 CSV 必须为单列: {labels_path}")
        labels = _as_labels(raw, labels_path)
        if labels.size != features.shape[0]:
            raise DataFormatError(f"标签行数 {labels.size} 与像素行数 {features.shape[0]} 不一致")
    logger.info("载入 CSV 数据: %d 个像素 × %d 个波段", features.shape[0], features.shape[1])
    return PixelDataset(features=features, labels=labels)


def save_csv(ds: PixelDataset, pixels_path: PathLike, labels_path: PathLike) -> Tuple[Path, Path]:
    pixels_path, labels_path = Path(pixels_path), Path(labels_path)
    pixels_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(ds.features).to_csv(pixels_path, header=False, index=False, float_format="%.6f")
    pd.DataFrame(ds.labels).to_csv(labels_path, header=False, index=False)
    return pixels_path, labels_path


def load_raw_cube(meta_path: PathLike, data_path: Optional[PathLike] = None) -> PixelDataset:
    """读取 BIP float32 数据立方体；data_path 缺省为元数据文件去掉 .json 后缀"""
    meta_path = Path(meta_path)
    if not meta_path.exists():
        raise DataFormatError(f"元数据文件不存在: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        height, width, bands = int(meta["height"]), int(meta["width"]), int(meta["bands"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"元数据文件非法: {meta_path}: {e}") from e
    if min(height, width, bands) < 1:
        raise DataFormatError(f"立方体尺寸非法: {height}×{width}×{bands}")

    data_path = Path(data_path) if data_path else meta_path.with_suffix("")
    if not data_path.exists():
        raise DataFormatError(f"数据文件不存在: {data_path}")
    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size != height * width * bands:
        raise DataFormatError(f"数据长度 {raw.size} 与 {height}×{width}×{bands} 不符")
    features = raw.reshape(height * width, bands).astype(np.float64)

    labels = np.zeros(height * width, dtype=np.int64)
    if meta.get("label_file"):
        label_path = meta_path.parent / meta["label_file"]
        labels = _as_labels(_read_csv_matrix(label_path), label_path)
        if labels.size != height * width:
            raise DataFormatError(f"标签数 {labels.size} 与像素数 {height * width} 不符")
    logger.info("载入数据立方体 %s: %d×%d×%d", data_path, height, width, bands)
    return PixelDataset(features=features, labels=labels, shape=(height, width))


def save_raw_cube(ds: PixelDataset, data_path: PathLike) -> Path:
    """写出 BIP float32 立方体、JSON 元数据和标签网格，返回元数据路径"""
    if ds.shape is None or ds.shape[0] * ds.shape[1] != ds.n_pixels:
        raise DimensionError("只有完整图像（带 shape）才能写成数据立方体")
    data_path = Path(data_path)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    ds.features.astype("<f4").tofile(data_path)
    label_path = data_path.with_name(data_path.stem + "_labels.csv")
    pd.DataFrame(ds.labels.reshape(ds.shape)).to_csv(label_path, header=False, index=False)
    meta = {"height": ds.shape[0], "width": ds.shape[1], "bands": ds.bands, "label_file": label_path.name}
    meta_path = data_path.with_name(data_path.name + ".json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8")
    return meta_path


def _pick_array(mat: dict, key: Optional[str], ndim: int, source: Path) -> np.ndarray:
    if key is not None:
        if key not in mat:
            raise DataFormatError(f"{source} 中没有变量 {key!r}")
        return np.asarray(mat[key])
    candidates = [k for k, v in mat.items() if not k.startswith("__") and np.ndim(v) == ndim]
    if len(candidates) != 1:
        raise DataFormatError(f"{source} 中找不到唯一的 {ndim} 维变量（候选: {candidates}），请显式指定变量名")
    return np.asarray(mat[candidates[0]])


def load_mat(cube_path: PathLike, gt_path: Optional[PathLike] = None,
             cube_key: Optional[str] = None, gt_key: Optional[str] = None) -> PixelDataset:
    cube_path = Path(cube_path)
    if not cube_path.exists():
        raise DataFormatError(f"文件不存在: {cube_path}")
    try:
        cube = _pick_array(scipy.io.loadmat(cube_path), cube_key, 3, cube_path)
    except (ValueError, NotImplementedError) as e:
        raise DataFormatError(f".mat 读取失败: {cube_path}: {e}") from e
    height, width, bands = cube.shape
    features = cube.reshape(height * width, bands).astype(np.float64)

    labels = np.zeros(height * width, dtype=np.int64)
    if gt_path is not None:
        gt_path = Path(gt_path)
        if not gt_path.exists():
            raise DataFormatError(f"文件不存在: {gt_path}")
        gt = _pick_array(scipy.io.loadmat(gt_path), gt_key, 2, gt_path)
        if gt.shape != (height, width):
            raise DataFormatError(f"地面真值尺寸 {gt.shape} 与立方体 {(height, width)} 不符")
        labels = _as_labels(gt.astype(np.float64), gt_path)
    logger.info("载入 .mat 数据 %s: %d×%d×%d", cube_path, height, width, bands)
    return PixelDataset(features=features, labels=labels, shape=(height, width))


def load_dataset(path: PathLike, labels: Optional[PathLike] = None) -> PixelDataset:
    """按扩展名分派：.csv / .json（数据立方体元数据）/ .mat"""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return load_csv(path, labels)
    if suffix == ".json":
        return load_raw_cube(path)
    if suffix == ".mat":
        return load_mat(path, labels)
    raise DataFormatError(f"不支持的数据格式: {path}")
