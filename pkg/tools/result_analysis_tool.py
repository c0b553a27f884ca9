"""结果输出工具
把各工具返回的表格写成文本/CSV/JSON，绘制裕度和涨落扫描曲线（SVG），
导出预测分类图（CSV 网格 + PPM 图像）。
所有输出不含时间戳，相同输入得到逐字节相同的文件。
"""

import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from PIL import Image
from rich.console import Console
from rich.table import Table

from imss_scripts.errors import ImssError

logger = logging.getLogger(__name__)

# SVG 中的元素 id 和元数据固定下来
plt.rcParams["svg.hashsalt"] = "imss"
_SVG_METADATA = {"Date": None, "Creator": None}

FLOAT_FORMAT = "%.6g"


def init_result(**extra: Any) -> Dict[str, Any]:
    """工具函数统一的结果字典"""
    result = {
        "success": False,
        "message": "",
        "error": None,
        "error_type": None,
        "rows": [],
        "summary": {},
        "generated_files": [],
    }
    result.update(extra)
    return result


def record_error(result: Dict[str, Any], exc: Exception) -> Dict[str, Any]:
    result["success"] = False
    result["error"] = str(exc)
    result["error_type"] = type(exc).__name__ if isinstance(exc, ImssError) else "IOError"
    logger.error("%s: %s", result["error_type"], exc)
    return result


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"无法序列化 {type(value).__name__}")


def to_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False, default=_json_default) + "\n"


def to_csv(rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    frame = pd.DataFrame(list(rows), columns=list(columns) if columns else None)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_cell(v) for v in value) + "]"
    return str(value)


def to_text(rows: Sequence[Dict[str, Any]], title: str = "", summary: Optional[Dict[str, Any]] = None) -> str:
    """rich 表格渲染成纯文本（固定宽度、无颜色）"""
    buffer = io.StringIO()
    console = Console(file=buffer, width=160, color_system=None, force_terminal=False)
    if rows:
        table = Table(title=title or None)
        columns = list(rows[0].keys())
        for col in columns:
            table.add_column(col)
        for row in rows:
            table.add_row(*[_cell(row.get(col, "")) for col in columns])
        console.print(table)
    elif title:
        console.print(title)
    for key in sorted(summary or {}):
        console.print(f"{key}: {_cell(summary[key])}")
    return buffer.getvalue()


def render(result: Dict[str, Any], fmt: str, title: str = "", columns: Optional[Sequence[str]] = None) -> str:
    rows = result.get("rows") or []
    if fmt == "json":
        return to_json({"rows": rows, "summary": result.get("summary", {})})
    if fmt == "csv":
        return to_csv(rows, columns) if rows else to_csv([result.get("summary", {})])
    return to_text(rows, title, result.get("summary"))


def export_data_to_files(result: Dict[str, Any], output_dir: Path, stem: str,
                         columns: Optional[Sequence[str]] = None) -> List[str]:
    """把结果表写成 <stem>.csv 和 <stem>.json"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    files = []
    if result.get("rows"):
        csv_path = output_dir / f"{stem}.csv"
        csv_path.write_text(to_csv(result["rows"], columns), encoding="utf-8")
        files.append(str(csv_path))
    json_path = output_dir / f"{stem}.json"
    json_path.write_text(to_json({"rows": result.get("rows", []), "summary": result.get("summary", {})}), encoding="utf-8")
    files.append(str(json_path))
    return files


def plot_margin(rows: Sequence[Dict[str, Any]], file_path: Path) -> Path:
    """RBSM 与列长的关系"""
    n_bits = [r["n_bits"] for r in rows]
    rbsm_db = [r["rbsm_db"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n_bits, rbsm_db, marker="o", linewidth=2)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("XOR cells per column")
    ax.set_ylabel("RBSM (dB)")
    ax.set_title("Sensing margin vs. column length")
    ax.grid(True, which="both", linestyle="--", alpha=0.7)
    fig.tight_layout()
    fig.savefig(file_path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.info("裕度曲线已保存到 %s", file_path)
    return Path(file_path)


def plot_sweep(rows: Sequence[Dict[str, Any]], file_path: Path, digital_accuracy: Optional[float] = None) -> Path:
    """准确率与器件涨落 σ/µ 的关系，误差棒为 1σ"""
    ratios = [r["ratio"] for r in rows]
    mean = np.array([r["mean_accuracy"] for r in rows]) * 100
    std = np.array([r["std_accuracy"] for r in rows]) * 100
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(ratios, mean, yerr=std, marker="o", capsize=4, linewidth=2, label="analog")
    if digital_accuracy is not None:
        ax.axhline(digital_accuracy * 100, color="gray", linestyle="--", label="digital")
    ax.set_xlabel("Variability (σ/µ)")
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Accuracy vs. device variability")
    ax.grid(True, linestyle="--", alpha=0.7)
    ax.legend()
    fig.tight_layout()
    fig.savefig(file_path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.info("涨落扫描曲线已保存到 %s", file_path)
    return Path(file_path)


def class_palette(class_ids: Iterable[int]) -> Dict[int, tuple]:
    """类别 -> RGB；0（未标注）为黑色，其余取 tab20 色表"""
    cmap = plt.get_cmap("tab20")
    palette = {0: (0, 0, 0)}
    for c in sorted(set(int(c) for c in class_ids) - {0}):
        r, g, b, _ = cmap((c - 1) % cmap.N)
        palette[c] = (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))
    return palette


def write_prediction_map(grid: np.ndarray, output_dir: Path, stem: str = "prediction_map") -> List[str]:
    """分类图写成 CSV 网格和 PPM 图像"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = output_dir / f"{stem}.csv"
    pd.DataFrame(grid).to_csv(csv_path, header=False, index=False, lineterminator="\n")

    palette = class_palette(np.unique(grid).tolist())
    rgb = np.zeros(grid.shape + (3,), dtype=np.uint8)
    for c, color in palette.items():
        rgb[grid == c] = color
    ppm_path = output_dir / f"{stem}.ppm"
    Image.fromarray(rgb).save(ppm_path, format="PPM")
    return [str(csv_path), str(ppm_path)]
