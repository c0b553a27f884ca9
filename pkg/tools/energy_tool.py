"""功耗/能耗报告工具
对每个工艺参数组给出 P_total、E_XOR（反推值与公式值）、E_search，
可选给出相对某个参数组的能耗比、读周期数和存储占用。
"""

import logging
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from imss_scripts.errors import ImssError
from imss_scripts.simulation.energy_model import (
    compare_profiles,
    energy_report,
    load_tech_file,
    search_latency,
    storage_footprint_bytes,
    total_power,
)
from imss_scripts.settings import DEFAULT_PROFILE_PATH
from tools.result_analysis_tool import init_result, record_error

logger = logging.getLogger(__name__)


class EnergyParams(BaseModel):
    """能耗报告参数"""
    profiles: List[str] = Field(default=["130nm", "28nm"], description="参数组名称（也可用对比数据行名）")
    bits: int = Field(default=128, description="每个向量的位数", ge=0)
    vectors: int = Field(default=32, description="向量数", ge=0)
    compare_to: Optional[str] = Field(default=None, description="计算能耗比时作为分母的参数组")
    tile_bits: int = Field(default=4, description="阵列块位数", ge=1)
    tile_cols: int = Field(default=8, description="阵列块列数", ge=1)
    include_references: bool = Field(default=False, description="是否附带对比数据行")
    profile_path: Optional[str] = Field(default=None, description="工艺参数文件")


def run_energy(params: EnergyParams) -> Dict[str, Any]:
    result = init_result()
    try:
        tech = load_tech_file(params.profile_path or DEFAULT_PROFILE_PATH)
        baseline = tech.profile(params.compare_to) if params.compare_to else None
        rows = []
        notes = []
        for name in params.profiles:
            profile = tech.profile(name)
            report = energy_report(profile, params.bits, params.vectors)
            latency = search_latency(profile, params.bits, params.vectors, params.tile_bits, params.tile_cols)
            row = {
                "profile": name,
                "p_total": total_power(profile),
                "e_xor": report.e_xor,
                "e_xor_formula": report.e_xor_formula,
                "e_search": report.e_search,
                "e_search_formula": report.e_search_formula,
                "cycles": latency["cycles"],
                "latency": latency["latency"],
            }
            if baseline is not None:
                row["ratio"] = compare_profiles(profile, baseline, params.bits, params.vectors)
            rows.append(row)
            if report.note and report.note not in notes:
                notes.append(report.note)

        summary: Dict[str, Any] = {
            "bits_per_vector": params.bits,
            "n_vectors": params.vectors,
            "notes": notes,
        }
        summary.update({f"storage_{k}": v for k, v in storage_footprint_bytes(params.vectors, params.bits).items()})
        if params.compare_to:
            summary["compare_to"] = params.compare_to
        if params.include_references:
            summary["references"] = [
                {
                    "name": row.name,
                    "device_stack": row.device_stack,
                    "node": row.node,
                    "e_search": row.e_search,
                    "simulated": row.simulated,
                }
                for row in tech.reference_rows.values()
            ]
        result["rows"] = rows
        result["summary"] = summary
        result["success"] = True
        result["message"] = f"完成 {len(rows)} 个参数组的能耗核算"
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result
