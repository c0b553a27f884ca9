"""感测裕度（RBSM）扫描工具"""

import logging
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from imss_scripts.errors import ImssError
from imss_scripts.simulation.analog_readout import margin_sweep
from imss_scripts.simulation.energy_model import load_tech_file
from imss_scripts.settings import DEFAULT_PROFILE_PATH
from tools.result_analysis_tool import init_result, record_error

logger = logging.getLogger(__name__)

MARGIN_COLUMNS = ["n_bits", "r_all_match", "r_one_mismatch", "rbsm_db", "i_separation", "v_separation"]


class MarginParams(BaseModel):
    """裕度扫描参数；r_lrs / r_hrs 缺省时取工艺参数文件中的阻值均值"""
    n_bits_list: List[int] = Field(default=[1, 2, 4, 8, 16, 32], description="列长列表")
    r_lrs: Optional[float] = Field(default=None, description="LRS 阻值 (Ω)", gt=0)
    r_hrs: Optional[float] = Field(default=None, description="HRS 阻值 (Ω)", gt=0)
    v_read: float = Field(default=0.2, description="读电压 (V)", ge=0)
    v_dd: float = Field(default=1.8, description="SA 电源 (V)", gt=0)
    r_access: float = Field(default=0.0, description="访问电阻 (Ω)", ge=0)
    profile_path: Optional[str] = Field(default=None, description="工艺参数文件")


def run_margin(params: MarginParams) -> Dict[str, Any]:
    result = init_result()
    try:
        r_lrs, r_hrs = params.r_lrs, params.r_hrs
        if r_lrs is None or r_hrs is None:
            variability = load_tech_file(params.profile_path or DEFAULT_PROFILE_PATH).variability
            r_lrs = r_lrs or variability.lrs_mean
            r_hrs = r_hrs or variability.hrs_mean
        reports = margin_sweep(params.n_bits_list, r_lrs, r_hrs, params.v_read, params.v_dd, params.r_access)
        rows = [r.model_dump() for r in reports]
        values = [r["rbsm_db"] for r in rows]
        result["rows"] = rows
        result["summary"] = {
            "r_lrs": r_lrs,
            "r_hrs": r_hrs,
            "strictly_decreasing": all(a > b for a, b in zip(values, values[1:])),
        }
        result["success"] = True
        result["message"] = f"计算了 {len(rows)} 个列长的 RBSM"
    except (ImssError, OSError) as e:
        record_error(result, e)
    return result
