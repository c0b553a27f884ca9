"""RRAM 器件模型
二值阻态（LRS/HRS）、编程、读电流以及器件间（D2D）阻值涨落的统计模型。

默认参数取自实测阻值分布：LRS 3 kΩ ~ 20 kΩ，HRS 110 kΩ ~ 1 MΩ；
均值取区间的几何中点附近（10 kΩ / 330 kΩ）。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from imss_scripts.errors import ConfigurationError

SeedLike = Union[int, np.random.Generator, None]

# 截断重采样的最大轮数，超过说明区间内几乎没有概率质量
_MAX_RESAMPLE_ROUNDS = 1000


class ResistanceState(str, Enum):
    """器件阻态"""
    LRS = "LRS"
    HRS = "HRS"


class Distribution(str, Enum):
    """阻值分布族"""
    LOGNORMAL = "LOGNORMAL"
    TRUNCATED_GAUSSIAN = "TRUNCATED_GAUSSIAN"


class VariabilityModel(BaseModel):
    """器件间阻值涨落模型，ratio 为 σ/µ"""

    model_config = ConfigDict(frozen=True)

    lrs_mean: float = Field(default=10e3, description="LRS 均值 (Ω)")
    hrs_mean: float = Field(default=330e3, description="HRS 均值 (Ω)")
    lrs_ratio: float = Field(default=0.0, description="LRS σ/µ")
    hrs_ratio: float = Field(default=0.0, description="HRS σ/µ")
    distribution: Distribution = Field(default=Distribution.LOGNORMAL, description="分布族")
    lrs_bounds: Optional[Tuple[float, float]] = Field(default=(3e3, 20e3), description="LRS 截断区间 (Ω)")
    hrs_bounds: Optional[Tuple[float, float]] = Field(default=(110e3, 1e6), description="HRS 截断区间 (Ω)")

    def check(self) -> None:
        """校验模型不变量，非法时抛出 ConfigurationError"""
        for state in ResistanceState:
            mean, ratio, bounds = self.parameters(state)
            if not (mean > 0 and math.isfinite(mean)):
                raise ConfigurationError(f"{state.value} 均值必须为正: {mean}")
            if ratio < 0 or not math.isfinite(ratio):
                raise ConfigurationError(f"{state.value} σ/µ 不能为负: {ratio}")
            if bounds is not None:
                low, high = bounds
                if not (0 < low < high):
                    raise ConfigurationError(f"{state.value} 区间非法: {bounds}")
                if not (low <= mean <= high):
                    raise ConfigurationError(f"{state.value} 均值 {mean} 不在区间 {bounds} 内")
        if self.lrs_bounds is not None and self.hrs_bounds is not None:
            if not self.lrs_bounds[1] < self.hrs_bounds[0]:
                raise ConfigurationError(
                    f"LRS 区间上限 {self.lrs_bounds[1]} 必须小于 HRS 区间下限 {self.hrs_bounds[0]}"
                )

    def parameters(self, state: ResistanceState) -> Tuple[float, float, Optional[Tuple[float, float]]]:
        if state == ResistanceState.LRS:
            return self.lrs_mean, self.lrs_ratio, self.lrs_bounds
        return self.hrs_mean, self.hrs_ratio, self.hrs_bounds

    def with_ratio(self, ratio: float) -> "VariabilityModel":
        """LRS 与 HRS 同时设置为相同的 σ/µ"""
        return self.model_copy(update={"lrs_ratio": ratio, "hrs_ratio": ratio})

    def unbounded(self) -> "VariabilityModel":
        """去掉截断区间（只保证阻值为正）"""
        return self.model_copy(update={"lrs_bounds": None, "hrs_bounds": None})

    @property
    def is_deterministic(self) -> bool:
        return self.lrs_ratio == 0 and self.hrs_ratio == 0


@dataclass(frozen=True)
class DeviceCell:
    """单个 1T-1R 单元：名义阻态 + 采样阻值"""
    state: ResistanceState
    resistance: float

    def __post_init__(self):
        if not self.resistance > 0:
            raise ConfigurationError(f"器件阻值必须为正: {self.resistance}")


class Pulse(BaseModel):
    """单个编程/读取脉冲"""

    model_config = ConfigDict(frozen=True)

    v_wl: float = Field(description="字线电压 (V)")
    v_sl: float = Field(description="源线电压 (V)")
    v_bl: float = Field(description="位线电压 (V)")
    width: float = Field(description="脉宽 (s)")

    @property
    def drive_voltage(self) -> float:
        """加在器件两端的电压幅度 |V_SL - V_BL|"""
        return abs(self.v_sl - self.v_bl)


class ProgrammingProtocol(BaseModel):
    """SET / RESET / READ 脉冲条件，仅用于能耗核算与文档，不参与动力学"""

    model_config = ConfigDict(frozen=True)

    set_pulse: Pulse = Field(default=Pulse(v_wl=1.8, v_sl=1.4, v_bl=0.0, width=1e-6))
    reset_pulse: Pulse = Field(default=Pulse(v_wl=4.5, v_sl=0.0, v_bl=1.2, width=1e-6))
    read_pulse: Pulse = Field(default=Pulse(v_wl=1.4, v_sl=0.2, v_bl=0.0, width=50e-6))

    def check(self) -> None:
        for name, pulse in (("SET", self.set_pulse), ("RESET", self.reset_pulse), ("READ", self.read_pulse)):
            if not pulse.width > 0:
                raise ConfigurationError(f"{name} 脉宽必须为正: {pulse.width}")
        read_v = self.read_pulse.drive_voltage
        if not (read_v < self.set_pulse.drive_voltage and read_v < self.reset_pulse.drive_voltage):
            raise ConfigurationError("读电压幅度必须小于 SET/RESET 电压")


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _draw(rng: np.random.Generator, distribution: Distribution, mean: float, ratio: float, size: int) -> np.ndarray:
    if distribution == Distribution.LOGNORMAL:
        sigma_ln = math.sqrt(math.log1p(ratio * ratio))
        mu_ln = math.log(mean) - 0.5 * sigma_ln * sigma_ln
        return rng.lognormal(mu_ln, sigma_ln, size)
    return rng.normal(mean, ratio * mean, size)


def sample_resistances(
    state: ResistanceState,
    model: VariabilityModel,
    size: int,
    rng: SeedLike = None,
) -> np.ndarray:
    """批量采样某一阻态的阻值，区间外的样本重新采样"""
    model.check()
    rng = make_rng(rng)
    mean, ratio, bounds = model.parameters(state)
    if size <= 0:
        return np.empty(0, dtype=np.float64)
    if ratio == 0:
        return np.full(size, mean, dtype=np.float64)

    low, high = bounds if bounds is not None else (0.0, math.inf)
    values = _draw(rng, model.distribution, mean, ratio, size)
    # 高斯分布没有区间时也要排除非正阻值
    bad = ~((values >= low) & (values <= high) & (values > 0))
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > _MAX_RESAMPLE_ROUNDS:
            raise ConfigurationError(
                f"{state.value} 区间 {bounds} 内概率质量过小，无法完成截断采样"
            )
        n_bad = int(bad.sum())
        values[bad] = _draw(rng, model.distribution, mean, ratio, n_bad)
        bad = ~((values >= low) & (values <= high) & (values > 0))
    return values


def sample_device(state: ResistanceState, model: VariabilityModel, rng_seed: SeedLike) -> DeviceCell:
    """按阻态分布采样一个器件"""
    resistance = sample_resistances(state, model, 1, rng_seed)[0]
    return DeviceCell(state=state, resistance=float(resistance))


def read_current(cell: DeviceCell, v_read: float, r_access: float = 0.0) -> float:
    """欧姆读出：V / (R + R_access)"""
    if v_read < 0:
        raise ConfigurationError(f"读电压不能为负: {v_read}")
    if r_access < 0:
        raise ConfigurationError(f"访问电阻不能为负: {r_access}")
    return v_read / (cell.resistance + r_access)


def program(cell: DeviceCell, target: ResistanceState, model: VariabilityModel, rng_seed: SeedLike) -> DeviceCell:
    """瞬时编程到目标阻态并重新采样阻值"""
    return sample_device(target, model, rng_seed)


def nominal_currents(model: VariabilityModel, v_read: float, r_access: float = 0.0) -> Tuple[float, float]:
    """名义匹配/失配电流 (i_match, i_mismatch)：匹配选中 HRS，失配选中 LRS"""
    i_match = read_current(DeviceCell(ResistanceState.HRS, model.hrs_mean), v_read, r_access)
    i_mismatch = read_current(DeviceCell(ResistanceState.LRS, model.lrs_mean), v_read, r_access)
    return i_match, i_mismatch
