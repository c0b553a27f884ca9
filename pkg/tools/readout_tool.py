"""SA 读出特性工具
给出 SA 传输曲线、HD=0..n 的名义输出电平及其在采样阵列块上的电压分布（含电平重叠判断），
以及 4×8 阵列上全部 16 个 4 位查询的逐比特线输出电压表。
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from imss_scripts.devices.crossbar_array import ArrayTile, BinaryVector, parallel_search_currents
from imss_scripts.devices.device_model import VariabilityModel, nominal_currents
from imss_scripts.errors import ImssError
from imss_scripts.simulation.analog_readout import (
    SenseAmpModel,
    hd_levels,
    level_currents,
    level_separation,
    quantize_hd,
    select_gain,
    sense,
)
from imss_scripts.simulation.energy_model import load_tech_file
from imss_scripts.settings import DEFAULT_PROFILE_PATH
from tools.result_analysis_tool import init_result, record_error, to_csv

logger = logging.getLogger(__name__)

# BL0..BL7 上存储的 4 位码字，BL7 为 0100
SCENARIO_WORDS = ["0000", "0001", "0011", "0111", "1111", "1010", "1100", "0100"]

READOUT_COLUMNS = ["hd", "i_nominal", "v_nominal", "v_min", "v_max", "gap_to_next"]


class ReadoutParams(BaseModel):
    """读出特性参数；variability_ratio 缺省时使用工艺参数文件中的涨落"""
    n_bits: int = Field(default=4, description="列长（穷举 2^n 个码字，最多 8）", ge=1, le=8)
    n_tiles: int = Field(default=10, description="采样阵列块数", ge=1)
    variability_ratio: Optional[float] = Field(default=None, description="σ/µ（LRS/HRS 同时）", ge=0)
    v_read: float = Field(default=0.2, description="读电压 (V)", gt=0)
    r_access: float = Field(default=0.0, description="访问电阻 (Ω)", ge=0)
    v_dd: float = Field(default=1.8, description="SA 电源 (V)", gt=0)
    v_offset: float = Field(default=0.0, description="SA 输出偏置 (V)")
    transfer: Literal["linear", "tanh"] = Field(default="linear", description="SA 传输特性")
    curve_points: int = Field(default=101, description="传输曲线采样点数", ge=2)
    seed: Optional[int] = Field(default=None, description="随机种子")
    profile_path: Optional[str] = Field(default=None, description="工艺参数文件")
    output_dir: Optional[str] = Field(default=None, description="传输曲线与查询电压表的输出目录")


def all_words(n_bits: int) -> np.ndarray:
    """全部 2^n 个 n 位码字，MSB 在前，形状 (2^n, n)"""
    return ((np.arange(1 << n_bits)[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1).astype(np.uint8)


def _sense_amp(n_bits: int, i_mismatch: float, params: ReadoutParams) -> SenseAmpModel:
    return SenseAmpModel(
        v_dd=params.v_dd,
        gain=select_gain(n_bits, i_mismatch, params.v_dd),
        v_offset=params.v_offset,
        transfer=params.transfer,
    )


def level_spread(
    n_bits: int,
    variability: VariabilityModel,
    sa: SenseAmpModel,
    n_tiles: int,
    rng: np.random.Generator,
    v_read: float = 0.2,
    r_access: float = 0.0,
) -> Dict[str, np.ndarray]:
    """在 n_tiles 个采样阵列块上穷举全部 (码字, 查询) 组合，统计每个 HD 的输出电压范围

    Args:
        n_bits: 列长，每个阵列块存 2^n 列
        variability: 器件涨落模型
        sa: 灵敏放大器
        n_tiles: 采样阵列块数
        rng: 随机数发生器

    Returns:
        v_min / v_max 为每个 HD 的输出电压极值，errors 为量化错误的列数
    """
    i_match, i_mismatch = nominal_currents(variability, v_read, r_access)
    words = all_words(n_bits)
    hd = (words[:, None, :] != words[None, :, :]).sum(axis=2)
    v_min = np.full(n_bits + 1, np.inf)
    v_max = np.full(n_bits + 1, -np.inf)
    errors = 0
    for _ in range(n_tiles):
        tile = ArrayTile.from_words(words.T, variability, rng, v_read=v_read, r_access=r_access)
        for qi, query in enumerate(words):
            v_out = sense(parallel_search_currents(tile, BinaryVector.from_bits(query)), sa)
            np.minimum.at(v_min, hd[qi], v_out)
            np.maximum.at(v_max, hd[qi], v_out)
            errors += int((quantize_hd(v_out, n_bits, sa, i_match, i_mismatch) != hd[qi]).sum())
    return {"v_min": v_min, "v_max": v_max, "errors": np.int64(errors)}


def scenario_table(variability: VariabilityModel, sa: SenseAmpModel, rng: np.random.Generator,
                   v_read: float = 0.2, r_access: float = 0.0) -> List[Dict[str, Any]]:
    """4×8 阵列块上 16 个查询在 BL0..BL7 的输出电压"""
    stored = np.array([[int(ch) for ch in w] for w in SCENARIO_WORDS], dtype=np.uint8).T
    tile = ArrayTile.from_words(stored, variability, rng, v_read=v_read, r_access=r_access)
    rows = []
    for query in all_words(4):
        v_out = sense(parallel_search_currents(tile, BinaryVector.from_bits(query)), sa)
        row: Dict[str, Any] = {"query": "".join(str(int(b)) for b in query)}
        row.update({f"BL{c}": float(v) for c, v in enumerate(v_out)})
        row["nearest_bl"] = int(np.argmin(v_out))
        rows.append(row)
    return rows


def run_readout(params: ReadoutParams) -> Dict[str, Any]:
    result = init_result()
    try:
        variability = load_tech_file(params.profile_path or DEFAULT_PROFILE_PATH).variability
        if params.variability_ratio is not None:
            variability = variability.with_ratio(params.variability_ratio)
        variability.check()
        rng = np.random.default_rng(params.seed)
        n = params.n_bits
        i_match, i_mismatch = nominal_currents(variability, params.v_read, params.r_access)
        sa = _sense_amp(n, i_mismatch, params)

        levels = hd_levels(n, sa, i_match, i_mismatch)
        spread = level_spread(n, variability, sa, params.n_tiles, rng, params.v_read, params.r_access)
        gaps = spread["v_min"][1:] - spread["v_max"][:-1]
        currents = level_currents(n, i_match, i_mismatch)
        result["rows"] = [
            {
                "hd": k,
                "i_nominal": float(currents[k]),
                "v_nominal": float(levels[k]),
                "v_min": float(spread["v_min"][k]),
                "v_max": float(spread["v_max"][k]),
                "gap_to_next": float(gaps[k]) if k < n else None,
            }
            for k in range(n + 1)
        ]

        curve_i = np.linspace(0.0, 1.25 * n * i_mismatch, params.curve_points)
        transfer = [{"current": float(i), "v_out": float(v)} for i, v in zip(curve_i, sense(curve_i, sa))]
        scenario = scenario_table(variability, _sense_amp(4, i_mismatch, params), rng,
                                  params.v_read, params.r_access)
        result["transfer"] = transfer
        result["scenario"] = scenario

        result["summary"] = {
            "n_bits": n,
            "n_tiles": params.n_tiles,
            "gain": sa.gain,
            "lrs_ratio": variability.lrs_ratio,
            "hrs_ratio": variability.hrs_ratio,
            "nominal_separation": level_separation(n, sa, i_match, i_mismatch),
            "min_level_gap": float(gaps.min()),
            "levels_overlap": bool((gaps <= 0).any()),
            "quantization_errors": int(spread["errors"]),
            "scenario_nearest_bl": {r["query"]: r["nearest_bl"] for r in scenario}["0100"],
        }
        if params.output_dir:
            out = Path(params.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            for name, rows in (("readout_transfer.csv", transfer), ("readout_scenario.csv", scenario)):
                (out / name).write_text(to_csv(rows), encoding="utf-8")
                result["generated_files"].append(str(out / name))
        result["success"] = True
        result["message"] = "相邻 HD 电平重叠" if result["summary"]["levels_overlap"] else "相邻 HD 电平无重叠"
        logger.info("读出特性: %d 位列, 最小电平间隙 %.4g V", n, result["summary"]["min_level_gap"])
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result
