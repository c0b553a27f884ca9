"""灵敏放大器（SA）行为模型与感测裕度分析

位线电流经 SA 转换为电压，再按 n+1 个名义电平最近邻量化回汉明距离估计。
RBSM（基于电阻的感测裕度）衡量全匹配与单失配两种情形下列等效电阻之比（dB）。
"""

from __future__ import annotations

import math
from typing import List, Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from imss_scripts.errors import ConfigurationError

ArrayLike = Union[float, Sequence[float], np.ndarray]


class SenseAmpModel(BaseModel):
    """SA 电流-电压传输特性"""

    model_config = ConfigDict(frozen=True)

    v_dd: float = Field(default=1.8, gt=0, description="SA 电源电压 (V)")
    gain: float = Field(default=22.5e3, gt=0, description="跨阻增益 (V/A)")
    v_offset: float = Field(default=0.0, description="输出失调 (V)")
    transfer: Literal["linear", "tanh"] = Field(default="linear", description="传输曲线形状")


class MarginReport(BaseModel):
    """某一列长度下的感测裕度"""

    n_bits: int
    r_all_match: float
    r_one_mismatch: float
    rbsm_db: float
    i_separation: float
    v_separation: float


def select_gain(n_bits: int, i_mismatch_nominal: float, v_dd: float = 1.8) -> float:
    """按列长选择增益，使全失配电流映射到约 v_dd"""
    if n_bits < 1:
        raise ConfigurationError(f"列长必须 ≥ 1: {n_bits}")
    if not i_mismatch_nominal > 0:
        raise ConfigurationError(f"名义失配电流必须为正: {i_mismatch_nominal}")
    if not v_dd > 0:
        raise ConfigurationError(f"v_dd 必须为正: {v_dd}")
    return v_dd / (n_bits * i_mismatch_nominal)


def sense(current: ArrayLike, sa: SenseAmpModel):
    """电流转电压，输出钳位到 [0, v_dd]；标量输入返回 float"""
    i = np.asarray(current, dtype=np.float64)
    if sa.transfer == "tanh":
        raw = sa.v_dd * np.tanh(sa.gain * i / sa.v_dd) + sa.v_offset
    else:
        raw = sa.gain * i + sa.v_offset
    out = np.clip(raw, 0.0, sa.v_dd)
    return float(out) if out.ndim == 0 else out


def level_currents(n_bits: int, i_match: float, i_mismatch: float) -> np.ndarray:
    """HD = 0..n 对应的名义列电流 k·I_mm + (n−k)·I_m"""
    k = np.arange(n_bits + 1, dtype=np.float64)
    return k * i_mismatch + (n_bits - k) * i_match


def hd_levels(n_bits: int, sa: SenseAmpModel, i_match: float, i_mismatch: float) -> np.ndarray:
    """n+1 个名义输出电平"""
    return np.asarray(sense(level_currents(n_bits, i_match, i_mismatch), sa), dtype=np.float64)


def level_separation(n_bits: int, sa: SenseAmpModel, i_match: float, i_mismatch: float) -> float:
    """相邻电平的最小间距，≤0 表示电平重叠"""
    levels = hd_levels(n_bits, sa, i_match, i_mismatch)
    return float(np.diff(levels).min()) if n_bits >= 1 else 0.0


def quantize_hd(v_out: ArrayLike, n_bits: int, sa: SenseAmpModel, i_match: float, i_mismatch: float):
    """最近名义电平量化，等距时取较小的 HD；标量输入返回 int"""
    levels = hd_levels(n_bits, sa, i_match, i_mismatch)
    v = np.asarray(v_out, dtype=np.float64)
    # 饱和区多个电平可能相等，保留每个电平值第一次出现的 k
    uniq, first_k = np.unique(levels, return_index=True)
    pos = np.searchsorted(uniq, v, side="left")
    lo = np.clip(pos - 1, 0, uniq.size - 1)
    hi = np.clip(pos, 0, uniq.size - 1)
    d_lo = np.abs(v - uniq[lo])
    d_hi = np.abs(uniq[hi] - v)
    k_lo = first_k[lo]
    k_hi = first_k[hi]
    pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (k_hi < k_lo))
    k = np.where(pick_hi, k_hi, k_lo)
    return int(k) if k.ndim == 0 else k.astype(np.int64)


def _parallel(*resistances: float) -> float:
    return 1.0 / sum(1.0 / r for r in resistances)


def rbsm(
    n_bits: int,
    r_lrs: float,
    r_hrs: float,
    v_read: float = 0.2,
    v_dd: float = 1.8,
    r_access: float = 0.0,
) -> MarginReport:
    """全匹配（n 个 HRS 并联）与单失配（n−1 个 HRS 并联 ∥ 1 个 LRS）的电阻比"""
    if n_bits < 1:
        raise ConfigurationError(f"列长必须 ≥ 1: {n_bits}")
    if not (0 < r_lrs < r_hrs) or not math.isfinite(r_hrs):
        raise ConfigurationError(f"需要 0 < r_lrs < r_hrs，实际 {r_lrs}, {r_hrs}")

    r_all_match = r_hrs / n_bits
    r_one_mismatch = _parallel(r_hrs / (n_bits - 1), r_lrs) if n_bits > 1 else r_lrs
    rbsm_db = 20.0 * math.log10(r_all_match / r_one_mismatch)

    i_match = v_read / (r_hrs + r_access)
    i_mismatch = v_read / (r_lrs + r_access)
    i_separation = i_mismatch - i_match
    if v_read > 0:
        sa = SenseAmpModel(v_dd=v_dd, gain=select_gain(n_bits, i_mismatch, v_dd))
        v_separation = level_separation(n_bits, sa, i_match, i_mismatch)
    else:
        v_separation = 0.0
    return MarginReport(
        n_bits=n_bits,
        r_all_match=r_all_match,
        r_one_mismatch=r_one_mismatch,
        rbsm_db=rbsm_db,
        i_separation=i_separation,
        v_separation=v_separation,
    )


def margin_sweep(
    n_bits_list: Sequence[int],
    r_lrs: float = 10e3,
    r_hrs: float = 330e3,
    v_read: float = 0.2,
    v_dd: float = 1.8,
    r_access: float = 0.0,
) -> List[MarginReport]:
    return [rbsm(int(n), r_lrs, r_hrs, v_read, v_dd, r_access) for n in n_bits_list]
