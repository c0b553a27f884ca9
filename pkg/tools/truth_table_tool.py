"""XOR 位单元真值表工具
名义参数下给出四种 (存储, 查询) 组合的读电流与判定；
开启涨落时在 n_cells 个采样位单元上重复实验并统计电流分布。
"""

import logging
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from imss_scripts.devices.crossbar_array import (
    MATCH_CURRENT_LIMIT,
    MISMATCH_CURRENT_FLOOR,
    SENSE_MARGIN_FLOOR,
    sampled_truth_table,
    truth_table,
)
from imss_scripts.devices.device_model import VariabilityModel
from imss_scripts.errors import ImssError
from imss_scripts.simulation.energy_model import load_tech_file
from imss_scripts.settings import DEFAULT_PROFILE_PATH
from tools.result_analysis_tool import init_result, record_error

logger = logging.getLogger(__name__)


class TruthTableParams(BaseModel):
    """真值表参数"""
    profile_path: Optional[str] = Field(default=None, description="工艺参数文件，None 使用内置文件")
    v_read: float = Field(default=0.2, description="读电压 (V)", ge=0)
    r_access: float = Field(default=0.0, description="访问电阻 (Ω)", ge=0)
    variability: bool = Field(default=False, description="是否在采样位单元上统计")
    n_cells: int = Field(default=32, description="采样位单元总数（两种存储值各占一半）", ge=2)
    seed: int = Field(default=2022, description="随机种子")


def run_truth_table(params: TruthTableParams) -> Dict[str, Any]:
    result = init_result()
    try:
        tech = load_tech_file(params.profile_path or DEFAULT_PROFILE_PATH)
        # 名义表只用阻值均值
        nominal = VariabilityModel(lrs_mean=tech.variability.lrs_mean, hrs_mean=tech.variability.hrs_mean,
                                   lrs_bounds=tech.variability.lrs_bounds, hrs_bounds=tech.variability.hrs_bounds)
        rows = truth_table(nominal, params.v_read, params.r_access)
        passed = all(row["passed"] for row in rows)
        summary = {
            "passed": passed,
            "match_limit": MATCH_CURRENT_LIMIT,
            "mismatch_floor": MISMATCH_CURRENT_FLOOR,
        }
        if params.variability:
            sampled = sampled_truth_table(tech.variability, params.n_cells, params.seed, params.v_read, params.r_access)
            rows = [dict(row, source="nominal") for row in rows]
            rows += [
                {
                    "stored": c["stored"], "query": c["query"], "xor": c["xor"],
                    "current": c["mean"], "min": c["min"], "max": c["max"], "std": c["std"],
                    "passed": (c["mean"] < MATCH_CURRENT_LIMIT) if c["xor"] == 0 else (c["mean"] >= MISMATCH_CURRENT_FLOOR),
                    "source": f"sampled_{params.n_cells}",
                }
                for c in sampled["combinations"]
            ]
            summary.update({
                "sampled_passed": sampled["passed"],
                "mean_match": sampled["mean_match"],
                "mean_mismatch": sampled["mean_mismatch"],
                "min_separation": sampled["min_separation"],
                "separation_floor": SENSE_MARGIN_FLOOR,
            })
            passed = passed and sampled["passed"]
            summary["passed"] = passed
        result["rows"] = rows
        result["summary"] = summary
        result["success"] = True
        result["message"] = "PASS" if passed else "FAIL"
        logger.info("真值表: %s", result["message"])
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result
