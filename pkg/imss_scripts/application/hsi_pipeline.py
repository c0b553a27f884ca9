"""高光谱像素分类流水线

预处理（只在训练集上拟合）：
    q1 = (x − mean) · basis              前 n_components 个主成分
    q2 = sign(q1) · log10(max(|q1|, ε))  保留符号的对数压缩
    q3 = (q2 − µ1) / σ1                  标准化
    q4 = clip((q3 − min2) / (max2 − min2), 0, 1)
    q5 = floor(q4 · 255 + 0.5)           四舍五入（q4 ≥ 0 时即远离零方向）
每个分量 8 位温度计编码，按分量顺序拼接，再在数据库中做汉明距离最近邻匹配。
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.linalg import hadamard
from scipy.spatial import cKDTree
from tqdm import tqdm

from imss_scripts.application.dataset_io import PixelDataset
from imss_scripts.devices.crossbar_array import BinaryVector
from imss_scripts.devices.device_model import Distribution, VariabilityModel
from imss_scripts.errors import (
    ConfigurationError,
    DataFormatError,
    DimensionError,
    FitError,
    SplitError,
    StateError,
)
from imss_scripts.simulation.analog_readout import SenseAmpModel
from imss_scripts.simulation.imss_engine import (
    BatchMatch,
    SearchDatabase,
    ThermometricCode,
    default_sense_amp,
    materialize,
    search_analog_batch,
    search_digital_batch,
    thermometric_encode_array,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class EncoderModel(BaseModel):
    """拟合后的预处理状态，矩阵按行优先存成嵌套列表"""

    schema_version: int = SCHEMA_VERSION
    n_components: int = Field(default=20, ge=1, description="主成分数")
    bands: int = Field(default=0, ge=0, description="输入波段数")
    epsilon: float = Field(default=1e-12, gt=0, description="log10 下限")
    code: ThermometricCode = Field(default_factory=ThermometricCode)
    pca_mean: List[float] = Field(default_factory=list)
    pca_basis: List[List[float]] = Field(default_factory=list, description="bands × n_components")
    explained_variance: List[float] = Field(default_factory=list, description="全部特征值，降序")
    mu1: List[float] = Field(default_factory=list)
    sigma1: List[float] = Field(default_factory=list)
    min2: List[float] = Field(default_factory=list)
    max2: List[float] = Field(default_factory=list)

    @property
    def is_fitted(self) -> bool:
        return len(self.pca_basis) > 0

    @property
    def code_bits(self) -> int:
        return self.n_components * self.code.bits_per_value


@dataclass
class _Arrays:
    mean: np.ndarray
    basis: np.ndarray
    mu1: np.ndarray
    sigma1: np.ndarray
    min2: np.ndarray
    max2: np.ndarray


def _arrays(model: EncoderModel) -> _Arrays:
    if not model.is_fitted:
        raise StateError("编码模型尚未拟合")
    return _Arrays(
        mean=np.asarray(model.pca_mean, dtype=np.float64),
        basis=np.asarray(model.pca_basis, dtype=np.float64),
        mu1=np.asarray(model.mu1, dtype=np.float64),
        sigma1=np.asarray(model.sigma1, dtype=np.float64),
        min2=np.asarray(model.min2, dtype=np.float64),
        max2=np.asarray(model.max2, dtype=np.float64),
    )


def _signed_log(q1: np.ndarray, epsilon: float) -> np.ndarray:
    return np.sign(q1) * np.log10(np.maximum(np.abs(q1), epsilon))


def fit(train: PixelDataset, n_components: int = 20, epsilon: float = 1e-12) -> EncoderModel:
    """在已标注训练像素上拟合 PCA 与两级归一化"""
    labeled = train.labeled()
    x = labeled.features
    if n_components > train.bands:
        raise ConfigurationError(f"主成分数 {n_components} 超过波段数 {train.bands}")
    if x.shape[0] < max(n_components, 2):
        raise FitError(f"已标注训练像素 {x.shape[0]} 个，少于主成分数 {n_components}")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
    tol = max(float(eigvals[0]), 0.0) * 1e-12
    for j in range(n_components):
        if not eigvals[j] > tol:
            raise FitError(f"第 {j} 个主成分方差为零，训练数据在该方向退化")

    basis = eigvecs[:, :n_components].copy()
    # 符号约定：每个基向量绝对值最大的系数取正
    pivot = np.abs(basis).argmax(axis=0)
    signs = np.sign(basis[pivot, np.arange(n_components)])
    basis *= np.where(signs == 0, 1.0, signs)

    q2 = _signed_log(centered @ basis, epsilon)
    mu1 = q2.mean(axis=0)
    sigma1 = q2.std(axis=0)
    for j in np.flatnonzero(~(sigma1 > 0)):
        raise FitError(f"第 {j} 个主成分对数缩放后标准差为零")
    q3 = (q2 - mu1) / sigma1
    min2, max2 = q3.min(axis=0), q3.max(axis=0)
    for j in np.flatnonzero(~(max2 > min2)):
        raise FitError(f"第 {j} 个主成分标准化后最大值不大于最小值")

    logger.info(
        "拟合完成: %d 个训练像素, %d→%d 维, 保留方差 %.4f",
        x.shape[0], train.bands, n_components, float(eigvals[:n_components].sum() / eigvals.sum()),
    )
    return EncoderModel(
        n_components=n_components,
        bands=train.bands,
        epsilon=epsilon,
        pca_mean=mean.tolist(),
        pca_basis=basis.tolist(),
        explained_variance=np.clip(eigvals, 0.0, None).tolist(),
        mu1=mu1.tolist(),
        sigma1=sigma1.tolist(),
        min2=min2.tolist(),
        max2=max2.tolist(),
    )


def quantize(model: EncoderModel, pixels: np.ndarray) -> np.ndarray:
    """q1..q5，返回 (n_pixels, n_components) 的 0..255 整数"""
    a = _arrays(model)
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    if pixels.shape[1] != model.bands:
        raise DimensionError(f"像素波段数 {pixels.shape[1]} 与模型 {model.bands} 不符")
    q2 = _signed_log((pixels - a.mean) @ a.basis, model.epsilon)
    q3 = (q2 - a.mu1) / a.sigma1
    q4 = np.clip((q3 - a.min2) / (a.max2 - a.min2), 0.0, 1.0)
    return np.floor(q4 * 255.0 + 0.5).astype(np.int64)


def encode_batch(model: EncoderModel, pixels: np.ndarray) -> np.ndarray:
    """(n_pixels, 8·n_components) 比特矩阵"""
    return thermometric_encode_array(quantize(model, pixels), model.code)


def encode(model: EncoderModel, pixel: Sequence[float]) -> BinaryVector:
    pixel = np.asarray(pixel, dtype=np.float64)
    if pixel.ndim != 1:
        raise DimensionError("encode 只接受单个像素，批量请用 encode_batch")
    return BinaryVector.from_bits(encode_batch(model, pixel[None, :])[0])


def reconstruction_residual(model: EncoderModel, ds: PixelDataset) -> Dict[str, float]:
    """投影再反投影后丢失的方差比例，与特征值记账对比"""
    a = _arrays(model)
    centered = ds.labeled().features - a.mean
    residual = centered - (centered @ a.basis) @ a.basis.T
    total = float((centered ** 2).sum())
    eig = np.asarray(model.explained_variance)
    return {
        "measured_loss": float((residual ** 2).sum()) / total if total > 0 else 0.0,
        "expected_loss": float(1.0 - eig[:model.n_components].sum() / eig.sum()) if eig.sum() > 0 else 0.0,
    }


def save_encoder(model: EncoderModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.model_dump(mode="json"), sort_keys=True, indent=2), encoding="utf-8")
    return path


def load_encoder(path: Union[str, Path]) -> EncoderModel:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"编码模型文件不存在: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"编码模型文件不是合法 JSON: {path}: {e}") from e
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"编码模型版本不受支持: {raw.get('schema_version')}")
    try:
        model = EncoderModel(**raw)
    except ValidationError as e:
        raise DataFormatError(f"编码模型字段非法: {path}: {e}") from e
    if model.is_fitted:
        basis = np.asarray(model.pca_basis)
        if basis.shape != (model.bands, model.n_components) or len(model.pca_mean) != model.bands:
            raise DataFormatError(f"编码模型矩阵尺寸与 bands/n_components 不符: {path}")
    return model


def split(ds: PixelDataset, train_fraction: float = 0.7, seed: Optional[int] = None) -> Tuple[PixelDataset, PixelDataset]:
    """按类分层随机划分，未标注像素不参与"""
    if not 0 < train_fraction < 1:
        raise ConfigurationError(f"训练集比例必须在 (0, 1) 内: {train_fraction}")
    classes = ds.classes
    if classes.size == 0:
        raise SplitError("数据集中没有已标注像素")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in classes:
        members = np.flatnonzero(ds.labels == c)
        if members.size < 2:
            raise SplitError(f"类别 {int(c)} 只有 {members.size} 个已标注像素，至少需要 2 个")
        perm = rng.permutation(members)
        n_train = min(max(math.floor(train_fraction * members.size + 0.5), 1), members.size - 1)
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    logger.info("分层划分: 训练 %d, 测试 %d, 共 %d 类", train_idx.size, test_idx.size, classes.size)
    return ds.subset(train_idx), ds.subset(test_idx)


def build_database(model: EncoderModel, train: PixelDataset) -> SearchDatabase:
    labeled = train.labeled()
    return SearchDatabase.from_bits(encode_batch(model, labeled.features), labeled.labels)


@dataclass
class EvalReport:
    overall_accuracy: float
    per_class_accuracy: Dict[int, float]
    confusion: np.ndarray
    class_ids: List[int]
    n_train: int
    n_test: int
    predictions: np.ndarray
    true_labels: np.ndarray
    pixel_index: np.ndarray
    mode: str = "digital"
    k: int = 1

    def summary(self) -> Dict:
        """可 JSON 序列化的摘要（不含逐像素预测）"""
        return {
            "mode": self.mode,
            "k": self.k,
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": {str(c): acc for c, acc in self.per_class_accuracy.items()},
            "class_ids": list(self.class_ids),
            "confusion": self.confusion.tolist(),
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


def _report(true: np.ndarray, pred: np.ndarray, db: SearchDatabase, pixel_index: np.ndarray, mode: str, k: int) -> EvalReport:
    class_ids = sorted(set(np.unique(true).tolist()) | set(np.unique(db.labels).tolist()))
    position = {c: i for i, c in enumerate(class_ids)}
    confusion = np.zeros((len(class_ids), len(class_ids)), dtype=np.int64)
    np.add.at(confusion, ([position[t] for t in true.tolist()], [position[p] for p in pred.tolist()]), 1)
    per_class = {}
    for c in np.unique(true).tolist():
        row = confusion[position[c]]
        per_class[int(c)] = float(row[position[c]] / row.sum())
    overall = float(np.trace(confusion) / confusion.sum()) if confusion.sum() else 0.0
    return EvalReport(
        overall_accuracy=overall,
        per_class_accuracy=per_class,
        confusion=confusion,
        class_ids=[int(c) for c in class_ids],
        n_train=db.n_vectors,
        n_test=int(true.size),
        predictions=pred,
        true_labels=true,
        pixel_index=pixel_index,
        mode=mode,
        k=k,
    )


def evaluate(
    model: EncoderModel,
    db: SearchDatabase,
    test: PixelDataset,
    k: int = 1,
    mode: Literal["digital", "analog"] = "digital",
    variability: Optional[VariabilityModel] = None,
    seed: Optional[Union[int, np.random.SeedSequence]] = None,
    sa: Optional[SenseAmpModel] = None,
    tile_bits: int = 4,
    tile_cols: int = 8,
    v_read: float = 0.2,
    r_access: float = 0.0,
) -> EvalReport:
    """对测试像素逐一检索并统计准确率；模拟模式下给定 variability 时先物化数据库"""
    if db.n_bits != model.code_bits:
        raise DimensionError(f"数据库码长 {db.n_bits} 与模型编码长度 {model.code_bits} 不符")
    labeled = test.labeled()
    if labeled.n_pixels == 0:
        raise StateError("测试集中没有已标注像素")
    queries = encode_batch(model, labeled.features)

    if mode == "digital":
        match: BatchMatch = search_digital_batch(db, queries, k)
    elif mode == "analog":
        if variability is not None:
            db = materialize(db, tile_bits, variability, seed, tile_cols=tile_cols, v_read=v_read, r_access=r_access)
        match = search_analog_batch(db, queries, k, sa or default_sense_amp(db))
    else:
        raise ConfigurationError(f"未知检索模式: {mode}")
    report = _report(labeled.labels, match.predicted_labels, db, labeled.pixel_index, mode, k)
    logger.info("%s 模式评估: 准确率 %.4f (%d 个测试像素)", mode, report.overall_accuracy, report.n_test)
    return report


def euclidean_nn_accuracy(train: PixelDataset, test: PixelDataset) -> float:
    """原始浮点特征上的精确欧氏最近邻准确率"""
    train, test = train.labeled(), test.labeled()
    if train.n_pixels == 0 or test.n_pixels == 0:
        raise StateError("训练集或测试集为空")
    _, nearest = cKDTree(train.features).query(test.features, k=1)
    return float((train.labels[nearest] == test.labels).mean())


def compression_ratio(bands: int, bits_per_band: int, code_bits: int) -> float:
    if code_bits < 1:
        raise ConfigurationError(f"编码长度必须为正: {code_bits}")
    return bands * bits_per_band / code_bits


def synth_dataset(
    n_classes: int = 4,
    n_per_class: int = 250,
    bands: int = 32,
    separation: float = 6.0,
    seed: Optional[int] = None,
    noise: float = 25.0,
) -> PixelDataset:
    """合成高光谱数据：各类中心位于 Hadamard 顶点方向上，叠加各向同性高斯噪声

    类中心 = 基准光谱 + Σ_j h[c, j] · separation · noise · w_j · u_j，
    u_j 为随机正交方向，权重 w_j 从 1.0 线性降到 0.5，使主成分排序确定。
    图像尺寸为 n_classes × n_per_class，每行一个类别。
    """
    if n_classes < 1 or n_per_class < 1 or bands < 1:
        raise ConfigurationError("n_classes、n_per_class、bands 必须为正")
    if separation < 0 or noise <= 0:
        raise ConfigurationError("separation 不能为负，noise 必须为正")
    rng = np.random.default_rng(seed)

    order = max(1, 1 << math.ceil(math.log2(max(n_classes, 1))))
    vertices = hadamard(order)[:n_classes].astype(np.float64)
    varying = vertices.std(axis=0) > 0
    vertices = vertices[:, varying]
    n_axes = vertices.shape[1]
    if n_axes > bands:
        raise ConfigurationError(f"{n_classes} 个类需要至少 {n_axes} 个波段")

    directions = np.linalg.qr(rng.standard_normal((bands, max(n_axes, 1))))[0][:, :n_axes]
    weights = np.linspace(1.0, 0.5, n_axes) if n_axes > 1 else np.ones(n_axes)
    base = 1000.0 + 3000.0 * np.sin(np.linspace(0.0, np.pi, bands)) ** 2
    centers = base + (vertices * (separation * noise * weights)) @ directions.T

    features = np.repeat(centers, n_per_class, axis=0) + rng.normal(0.0, noise, (n_classes * n_per_class, bands))
    labels = np.repeat(np.arange(1, n_classes + 1, dtype=np.int64), n_per_class)
    return PixelDataset(
        features=features,
        labels=labels,
        class_names=[f"class_{c}" for c in range(1, n_classes + 1)],
        shape=(n_classes, n_per_class),
    )


def prediction_map(predictions: np.ndarray, pixel_index: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """把逐像素预测放回原图网格，未预测的位置为 0"""
    height, width = shape
    pixel_index = np.asarray(pixel_index, dtype=np.int64)
    if pixel_index.size and (pixel_index.min() < 0 or pixel_index.max() >= height * width):
        raise DimensionError(f"像素下标超出 {height}×{width} 图像")
    grid = np.zeros(height * width, dtype=np.int64)
    grid[pixel_index] = np.asarray(predictions, dtype=np.int64)
    return grid.reshape(height, width)


@dataclass
class SweepResult:
    rows: List[Dict[str, float]]
    digital_accuracy: float
    n_train: int
    n_test: int
    accuracies: Dict[float, List[float]] = field(default_factory=dict)


def sweep_variability_model(
    ratio: float,
    base: Optional[VariabilityModel] = None,
    distribution: Distribution = Distribution.TRUNCATED_GAUSSIAN,
    bounded: bool = True,
) -> VariabilityModel:
    """LRS 与 HRS 同时设置为相同 σ/µ 的涨落模型"""
    if ratio < 0:
        raise ConfigurationError(f"σ/µ 不能为负: {ratio}")
    model = (base or VariabilityModel()).model_copy(update={"distribution": Distribution(distribution)}).with_ratio(ratio)
    return model if bounded else model.unbounded()


def variability_sweep(
    ds: PixelDataset,
    ratios: Sequence[float],
    trials: int = 10,
    seed: Optional[int] = None,
    n_components: int = 20,
    train_fraction: float = 0.7,
    k: int = 1,
    base: Optional[VariabilityModel] = None,
    distribution: Distribution = Distribution.TRUNCATED_GAUSSIAN,
    bounded: bool = True,
    tile_bits: int = 4,
    tile_cols: int = 8,
    v_read: float = 0.2,
    r_access: float = 0.0,
    v_dd: float = 1.8,
    progress: bool = False,
) -> SweepResult:
    """对每个 σ/µ 做 trials 次重新物化的模拟检索，统计准确率均值与标准差"""
    if trials < 1:
        raise ConfigurationError(f"trials 必须 ≥ 1: {trials}")
    for r in ratios:
        if r < 0:
            raise ConfigurationError(f"σ/µ 不能为负: {r}")
    train, test = split(ds, train_fraction, seed)
    model = fit(train, n_components)
    db = build_database(model, train)
    digital = evaluate(model, db, test, k, mode="digital").overall_accuracy

    streams = np.random.SeedSequence(seed).spawn(len(ratios) * trials)
    rows, accuracies = [], {}
    total = len(ratios) * trials
    with tqdm(total=total, desc="variability sweep", disable=not progress) as bar:
        for i, ratio in enumerate(ratios):
            vm = sweep_variability_model(ratio, base, distribution, bounded)
            accs = []
            for t in range(trials):
                if vm.is_deterministic and accs:
                    accs.append(accs[0])
                else:
                    materialized = materialize(db, tile_bits, vm, np.random.default_rng(streams[i * trials + t]),
                                               tile_cols=tile_cols, v_read=v_read, r_access=r_access)
                    sa = default_sense_amp(materialized, v_dd=v_dd)
                    accs.append(evaluate(model, materialized, test, k, mode="analog", sa=sa).overall_accuracy)
                bar.update(1)
            arr = np.asarray(accs)
            accuracies[float(ratio)] = accs
            rows.append({
                "ratio": float(ratio),
                "mean_accuracy": float(arr.mean()),
                "std_accuracy": float(arr.std()),
                "min_accuracy": float(arr.min()),
                "max_accuracy": float(arr.max()),
                "trials": trials,
            })
            logger.info("σ/µ=%.3f: 准确率 %.4f ± %.4f", ratio, arr.mean(), arr.std())
    return SweepResult(rows=rows, digital_accuracy=digital, n_train=db.n_vectors, n_test=test.labeled().n_pixels, accuracies=accuracies)
