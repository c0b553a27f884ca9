"""编码与检索工具
fit：在训练划分上拟合预处理模型并保存为 JSON
encode：把像素编码成温度计码字
build-db：对训练划分编码，写出数据库文件（可选物化到阵列块）
query：对单个码字或数据集中的某个像素做 top-k 检索
训练划分由 (train_fraction, seed) 唯一确定，fit 与 build-db 使用相同参数即得到相同划分。
"""

import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from imss_scripts.application.dataset_io import load_dataset
from imss_scripts.application.hsi_pipeline import (
    build_database,
    encode_batch,
    fit,
    load_encoder,
    quantize,
    save_encoder,
    split,
)
from imss_scripts.devices.crossbar_array import BinaryVector
from imss_scripts.errors import ConfigurationError, ImssError, IndexOutOfRangeError
from imss_scripts.simulation.database_io import read_database, write_database
from imss_scripts.simulation.energy_model import load_tech_file
from imss_scripts.simulation.imss_engine import (
    default_sense_amp,
    materialize,
    search_analog,
    search_digital,
)
from imss_scripts.settings import DEFAULT_PROFILE_PATH
from tools.result_analysis_tool import init_result, record_error, to_csv

logger = logging.getLogger(__name__)


class DatasetParams(BaseModel):
    """数据集与划分"""
    data: str = Field(description="像素数据：.csv / 数据立方体 .json 元数据 / .mat")
    labels: Optional[str] = Field(default=None, description="标签文件（CSV 单列或 .mat 地面真值）")
    train_fraction: float = Field(default=0.7, description="训练集比例", gt=0, lt=1)
    seed: int = Field(default=2022, description="划分随机种子")


class FitParams(DatasetParams):
    n_components: int = Field(default=20, description="主成分数", ge=1)
    epsilon: float = Field(default=1e-12, description="log10 下限", gt=0)
    model_path: str = Field(description="输出的编码模型 JSON 路径")


class EncodeParams(BaseModel):
    model_path: str = Field(description="编码模型 JSON")
    data: str = Field(description="像素数据")
    labels: Optional[str] = Field(default=None, description="标签文件")
    output_path: Optional[str] = Field(default=None, description="码字 CSV 输出路径")


class BuildDbParams(DatasetParams):
    model_path: str = Field(description="编码模型 JSON")
    db_path: str = Field(description="输出的数据库文件路径")
    materialize: bool = Field(default=False, description="是否物化到阵列块（写出阻值块）")
    tile_bits: int = Field(default=4, description="阵列块位数", ge=1)
    tile_cols: int = Field(default=8, description="阵列块列数", ge=1)
    v_read: float = Field(default=0.2, description="读电压 (V)", gt=0)
    r_access: float = Field(default=0.0, description="访问电阻 (Ω)", ge=0)
    variability_ratio: Optional[float] = Field(default=None, description="σ/µ，None 时使用工艺参数文件中的涨落", ge=0)
    profile_path: Optional[str] = Field(default=None, description="工艺参数文件")


class QueryParams(BaseModel):
    db_path: str = Field(description="数据库文件")
    bits: Optional[str] = Field(default=None, description="查询码字（0/1 字符串）")
    model_path: Optional[str] = Field(default=None, description="按像素查询时使用的编码模型")
    data: Optional[str] = Field(default=None, description="按像素查询时的数据集")
    labels: Optional[str] = Field(default=None, description="标签文件")
    pixel: Optional[int] = Field(default=None, description="数据集中的像素下标")
    k: int = Field(default=1, description="top-k", ge=1)
    mode: Literal["digital", "analog"] = Field(default="digital", description="检索模式")
    v_dd: float = Field(default=1.8, description="SA 电源 (V)", gt=0)
    v_offset: float = Field(default=0.0, description="SA 输出偏置 (V)")
    transfer: Literal["linear", "tanh"] = Field(default="linear", description="SA 传输特性")


def run_fit(params: FitParams) -> Dict[str, Any]:
    result = init_result()
    try:
        ds = load_dataset(params.data, params.labels)
        train, test = split(ds, params.train_fraction, params.seed)
        model = fit(train, params.n_components, params.epsilon)
        path = save_encoder(model, params.model_path)
        eig = np.asarray(model.explained_variance)
        result["summary"] = {
            "bands": model.bands,
            "n_components": model.n_components,
            "code_bits": model.code_bits,
            "n_train": train.labeled().n_pixels,
            "n_test": test.labeled().n_pixels,
            "retained_variance": float(eig[:model.n_components].sum() / eig.sum()) if eig.sum() > 0 else 0.0,
        }
        result["generated_files"].append(str(path))
        result["success"] = True
        result["message"] = f"编码模型已保存到 {path}"
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result


def run_encode(params: EncodeParams) -> Dict[str, Any]:
    result = init_result()
    try:
        model = load_encoder(params.model_path)
        ds = load_dataset(params.data, params.labels)
        q5 = quantize(model, ds.features)
        bits = encode_batch(model, ds.features)
        rows = [
            {
                "pixel": int(ds.pixel_index[i]),
                "label": int(ds.labels[i]),
                "q5": " ".join(str(v) for v in q5[i]),
                "code": "".join(str(b) for b in bits[i]),
            }
            for i in range(ds.n_pixels)
        ]
        result["rows"] = rows
        result["summary"] = {"n_pixels": ds.n_pixels, "code_bits": model.code_bits}
        if params.output_path:
            path = Path(params.output_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(to_csv(rows), encoding="utf-8")
            result["generated_files"].append(str(path))
        result["success"] = True
        result["message"] = f"编码了 {ds.n_pixels} 个像素"
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result


def run_build_db(params: BuildDbParams) -> Dict[str, Any]:
    result = init_result()
    try:
        model = load_encoder(params.model_path)
        ds = load_dataset(params.data, params.labels)
        train, _ = split(ds, params.train_fraction, params.seed)
        db = build_database(model, train)
        if params.materialize:
            variability = load_tech_file(params.profile_path or DEFAULT_PROFILE_PATH).variability
            if params.variability_ratio is not None:
                variability = variability.with_ratio(params.variability_ratio)
            db = materialize(db, params.tile_bits, variability, params.seed,
                             tile_cols=params.tile_cols, v_read=params.v_read, r_access=params.r_access)
        path = write_database(db, params.db_path)
        result["summary"] = {
            "n_vectors": db.n_vectors,
            "n_bits": db.n_bits,
            "materialized": db.is_materialized,
        }
        if db.is_materialized:
            result["summary"].update({
                "n_segments": db.tiling.n_segments,
                "n_physical_tiles": db.tiling.n_physical_tiles,
            })
        result["generated_files"].append(str(path))
        result["success"] = True
        result["message"] = f"数据库已写入 {path}"
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result


def _resolve_query(params: QueryParams):
    """返回 (查询码字, 像素真实标签或 None)"""
    if params.bits is not None:
        return BinaryVector.from_string(params.bits), None
    if params.pixel is None or params.model_path is None or params.data is None:
        raise ConfigurationError("需要 --bits，或者同时给出 --model、--data 与 --pixel")
    model = load_encoder(params.model_path)
    ds = load_dataset(params.data, params.labels)
    if not 0 <= params.pixel < ds.n_pixels:
        raise IndexOutOfRangeError(f"像素下标 {params.pixel} 越界 [0, {ds.n_pixels})")
    bits = encode_batch(model, ds.features[params.pixel:params.pixel + 1])[0]
    return BinaryVector.from_bits(bits), int(ds.labels[params.pixel])


def run_query(params: QueryParams) -> Dict[str, Any]:
    result = init_result()
    try:
        db = read_database(params.db_path)
        query, true_label = _resolve_query(params)
        if params.mode == "analog":
            sa = default_sense_amp(db, params.v_dd, params.v_offset, params.transfer)
            match = search_analog(db, query, params.k, sa)
        else:
            match = search_digital(db, query, params.k)
        result["rows"] = [
            {"rank": rank, "index": int(i), "distance": int(match.distances[i]), "label": int(db.labels[i])}
            for rank, i in enumerate(match.topk_indices)
        ]
        result["summary"] = {
            "mode": params.mode,
            "k": params.k,
            "predicted_label": match.predicted_label,
            "mode_count": match.mode_count,
        }
        if true_label is not None:
            result["summary"]["true_label"] = true_label
        result["success"] = True
        result["message"] = f"预测类别 {match.predicted_label}"
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result
