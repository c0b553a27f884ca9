"""运行配置

config/config.yaml 提供默认值，环境变量（IMSS_ 前缀，嵌套字段用 __ 分隔，可写在 .env 中）
覆盖 YAML，命令行参数再覆盖两者。
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from imss_scripts.errors import ConfigurationError

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "config.yaml"
DEFAULT_PROFILE_PATH = PROJECT_ROOT / "config" / "tech_profiles.yaml"


class DefaultsSection(BaseModel):
    """全局默认值"""
    seed: int = Field(default=2022, description="随机种子")
    results_dir: str = Field(default="results", description="结果输出目录")
    output_format: Literal["text", "csv", "json"] = Field(default="text", description="报告输出格式")
    log_level: str = Field(default="INFO", description="日志级别")
    profile_path: str = Field(default="config/tech_profiles.yaml", description="工艺参数文件路径")


class ArraySection(BaseModel):
    """阵列几何与读出条件"""
    tile_bits: int = Field(default=4, description="每列XOR位数（物理行数的一半）", ge=1)
    tile_cols: int = Field(default=8, description="每个阵列块的列数", ge=1)
    v_read: float = Field(default=0.2, description="读电压 (V)", ge=0)
    r_access: float = Field(default=0.0, description="串联访问晶体管电阻 (Ω)", ge=0)


class ReadoutSection(BaseModel):
    """灵敏放大器配置"""
    v_dd: float = Field(default=1.8, description="SA电源电压 (V)", gt=0)
    v_offset: float = Field(default=0.0, description="SA输出偏置 (V)")
    transfer: Literal["linear", "tanh"] = Field(default="linear", description="SA传输特性")


class PipelineSection(BaseModel):
    """HSI预处理流水线配置"""
    n_components: int = Field(default=20, description="PCA主成分数", ge=1)
    train_fraction: float = Field(default=0.7, description="训练集比例", gt=0, lt=1)
    epsilon: float = Field(default=1e-12, description="log10下限", gt=0)
    k: int = Field(default=1, description="top-k 投票数", ge=1)


class SweepSection(BaseModel):
    """器件涨落扫描配置"""
    ratios: List[float] = Field(default=[0.0, 0.1, 0.2, 0.4], description="σ/µ 列表")
    trials: int = Field(default=10, description="每个比例的蒙特卡洛次数", ge=1)
    distribution: Literal["LOGNORMAL", "TRUNCATED_GAUSSIAN"] = Field(
        default="TRUNCATED_GAUSSIAN", description="扫描使用的阻值分布"
    )
    bounded: bool = Field(default=True, description="是否按实测阻值区间截断")


class ImssSettings(BaseSettings):
    """IMSS 仿真器运行配置"""

    model_config = SettingsConfigDict(
        env_prefix="IMSS_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="ignore",
    )

    defaults: DefaultsSection = Field(default_factory=DefaultsSection)
    array: ArraySection = Field(default_factory=ArraySection)
    readout: ReadoutSection = Field(default_factory=ReadoutSection)
    pipeline: PipelineSection = Field(default_factory=PipelineSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    def resolve_path(self, value: str) -> Path:
        """相对路径按项目根目录解析"""
        path = Path(value)
        return path if path.is_absolute() else PROJECT_ROOT / path


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(config_path: Optional[str] = None) -> ImssSettings:
    """读取YAML配置并叠加环境变量覆盖"""
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    file_values: Dict[str, Any] = {}
    if path.exists():
        try:
            file_values = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"配置文件解析失败: {path}: {e}") from e
        if not isinstance(file_values, dict):
            raise ConfigurationError(f"配置文件顶层必须是映射: {path}")
    elif config_path:
        raise ConfigurationError(f"配置文件不存在: {path}")

    try:
        env_values = ImssSettings().model_dump(exclude_unset=True)
        return ImssSettings(**_deep_merge(file_values, env_values))
    except ValidationError as e:
        raise ConfigurationError(f"配置校验失败: {e}") from e
