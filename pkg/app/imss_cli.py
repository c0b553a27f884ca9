"""IMSS 仿真器命令行入口

用法示例：
    python app/imss_cli.py truth-table --variability
    python app/imss_cli.py --format csv margin --n-bits 1 2 4 8 16 32
    python app/imss_cli.py readout --variability-ratio 0.2 --n-tiles 32
    python app/imss_cli.py energy --profiles 130nm 28nm --compare-to 28nm
    python app/imss_cli.py --out results/synth synth --n-classes 4
    python app/imss_cli.py --out results oracle
    python app/imss_cli.py fit --data results/synth/synth_pixels.csv --labels results/synth/synth_labels.csv --n-components 3

全局参数（--seed / --profile / --out / --format / --config / --log-level）可以写在子命令前或后。
成功退出码 0；操作失败时退出码 2，并在 stderr 输出一行 JSON：{"error_type": ..., "message": ...}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

# Ensure project root is on sys.path when running this file directly
_PROJECT_ROOT = str(Path(__file__).resolve().parent.parent)
if _PROJECT_ROOT not in sys.path:
    sys.path.insert(0, _PROJECT_ROOT)

from pydantic import ValidationError

from imss_scripts.errors import ConfigurationError, ImssError
from imss_scripts.log import setup_logging
from imss_scripts.settings import ImssSettings, load_settings
from tools.energy_tool import EnergyParams, run_energy
from tools.evaluation_tool import (
    EvalParams,
    OracleParams,
    SweepParams,
    SynthParams,
    run_eval,
    run_oracle,
    run_sweep,
    run_synth,
)
from tools.margin_tool import MARGIN_COLUMNS, MarginParams, run_margin
from tools.readout_tool import READOUT_COLUMNS, ReadoutParams, run_readout
from tools.result_analysis_tool import export_data_to_files, plot_margin, render, to_json
from tools.search_tool import (
    BuildDbParams,
    EncodeParams,
    FitParams,
    QueryParams,
    run_build_db,
    run_encode,
    run_fit,
    run_query,
)
from tools.truth_table_tool import TruthTableParams, run_truth_table

Result = Dict[str, Any]


class Context:
    """一次运行的有效全局配置"""

    def __init__(self, args: argparse.Namespace, settings: ImssSettings):
        d = settings.defaults
        self.settings = settings
        self.seed = args.seed if getattr(args, "seed", None) is not None else d.seed
        # 命令行路径相对当前目录，配置文件中的路径相对项目根目录
        profile = getattr(args, "profile", None)
        self.profile = str(Path(profile) if profile else settings.resolve_path(d.profile_path))
        out = getattr(args, "out", None)
        self.out = Path(out) if out else settings.resolve_path(d.results_dir)
        self.format = getattr(args, "format", None) or d.output_format

    def out_file(self, value: Optional[str], default_name: str) -> str:
        return value if value else str(self.out / default_name)


def _pick(value, default):
    return default if value is None else value


def _global_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="随机种子")
    common.add_argument("--profile", help="工艺参数文件路径")
    common.add_argument("--out", help="输出目录")
    common.add_argument("--format", choices=["text", "csv", "json"], help="报告输出格式")
    common.add_argument("--config", help="YAML 配置文件路径")
    common.add_argument("--log-level", dest="log_level", help="日志级别")
    return common


def _dataset_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--data", required=required, help="像素数据 (.csv / 数据立方体 .json / .mat)")
    p.add_argument("--labels", default=None, help="标签文件")


def _array_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tile-bits", type=int, default=None, help="阵列块位数")
    p.add_argument("--tile-cols", type=int, default=None, help="阵列块列数")
    p.add_argument("--v-read", type=float, default=None, help="读电压 (V)")
    p.add_argument("--r-access", type=float, default=None, help="访问电阻 (Ω)")


def _array_options(args: argparse.Namespace, ctx: Context) -> Dict[str, Any]:
    s = ctx.settings
    return {
        "tile_bits": _pick(args.tile_bits, s.array.tile_bits),
        "tile_cols": _pick(args.tile_cols, s.array.tile_cols),
        "v_read": _pick(args.v_read, s.array.v_read),
        "r_access": _pick(args.r_access, s.array.r_access),
    }


def cmd_truth_table(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = TruthTableParams(
        profile_path=ctx.profile,
        v_read=_pick(args.v_read, ctx.settings.array.v_read),
        r_access=_pick(args.r_access, ctx.settings.array.r_access),
        variability=args.variability,
        n_cells=args.n_cells,
        seed=ctx.seed,
    )
    return run_truth_table(params), "truth_table"


def cmd_margin(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = MarginParams(
        n_bits_list=args.n_bits,
        r_lrs=args.r_lrs,
        r_hrs=args.r_hrs,
        v_read=_pick(args.v_read, ctx.settings.array.v_read),
        v_dd=ctx.settings.readout.v_dd,
        r_access=_pick(args.r_access, ctx.settings.array.r_access),
        profile_path=ctx.profile,
    )
    result = run_margin(params)
    if result["success"] and args.plot:
        ctx.out.mkdir(parents=True, exist_ok=True)
        result["generated_files"].append(str(plot_margin(result["rows"], ctx.out / "margin.svg")))
    return result, "margin"


def cmd_readout(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    r = ctx.settings.readout
    params = ReadoutParams(
        n_bits=_pick(args.n_bits, ctx.settings.array.tile_bits),
        n_tiles=args.n_tiles,
        variability_ratio=args.variability_ratio,
        v_read=_pick(args.v_read, ctx.settings.array.v_read),
        r_access=_pick(args.r_access, ctx.settings.array.r_access),
        v_dd=r.v_dd,
        v_offset=r.v_offset,
        transfer=r.transfer,
        seed=ctx.seed,
        profile_path=ctx.profile,
        output_dir=str(ctx.out),
    )
    return run_readout(params), "readout"


def cmd_energy(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = EnergyParams(
        profiles=args.profiles,
        bits=args.bits,
        vectors=args.vectors,
        compare_to=args.compare_to,
        tile_bits=ctx.settings.array.tile_bits,
        tile_cols=ctx.settings.array.tile_cols,
        include_references=args.references,
        profile_path=ctx.profile,
    )
    return run_energy(params), "energy"


def cmd_fit(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    p = ctx.settings.pipeline
    params = FitParams(
        data=args.data,
        labels=args.labels,
        train_fraction=_pick(args.train_fraction, p.train_fraction),
        seed=ctx.seed,
        n_components=_pick(args.n_components, p.n_components),
        epsilon=p.epsilon,
        model_path=ctx.out_file(args.model, "encoder.json"),
    )
    return run_fit(params), "fit"


def cmd_encode(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = EncodeParams(
        model_path=ctx.out_file(args.model, "encoder.json"),
        data=args.data,
        labels=args.labels,
        output_path=ctx.out_file(args.output, "codes.csv"),
    )
    return run_encode(params), "encode"


def cmd_build_db(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = BuildDbParams(
        data=args.data,
        labels=args.labels,
        train_fraction=_pick(args.train_fraction, ctx.settings.pipeline.train_fraction),
        seed=ctx.seed,
        model_path=ctx.out_file(args.model, "encoder.json"),
        db_path=ctx.out_file(args.db, "database.imss"),
        materialize=args.materialize,
        variability_ratio=args.variability_ratio,
        profile_path=ctx.profile,
        **_array_options(args, ctx),
    )
    return run_build_db(params), "build_db"


def cmd_query(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    r = ctx.settings.readout
    params = QueryParams(
        db_path=ctx.out_file(args.db, "database.imss"),
        bits=args.bits,
        model_path=args.model,
        data=args.data,
        labels=args.labels,
        pixel=args.pixel,
        k=_pick(args.k, ctx.settings.pipeline.k),
        mode=args.mode,
        v_dd=r.v_dd,
        v_offset=r.v_offset,
        transfer=r.transfer,
    )
    return run_query(params), "query"


def cmd_eval(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    r = ctx.settings.readout
    params = EvalParams(
        data=args.data,
        labels=args.labels,
        train_fraction=_pick(args.train_fraction, ctx.settings.pipeline.train_fraction),
        seed=ctx.seed,
        model_path=ctx.out_file(args.model, "encoder.json"),
        db_path=args.db,
        k=_pick(args.k, ctx.settings.pipeline.k),
        mode=args.mode,
        variability_ratio=args.variability_ratio,
        output_dir=str(ctx.out),
        v_dd=r.v_dd,
        v_offset=r.v_offset,
        transfer=r.transfer,
        profile_path=ctx.profile,
        **_array_options(args, ctx),
    )
    return run_eval(params), "eval"


def cmd_sweep(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    s, p = ctx.settings.sweep, ctx.settings.pipeline
    params = SweepParams(
        data=args.data,
        labels=args.labels,
        train_fraction=_pick(args.train_fraction, p.train_fraction),
        seed=ctx.seed,
        ratios=_pick(args.ratios, s.ratios),
        trials=_pick(args.trials, s.trials),
        n_components=_pick(args.n_components, p.n_components),
        k=_pick(args.k, p.k),
        distribution=_pick(args.distribution, s.distribution),
        bounded=s.bounded and not args.unbounded,
        progress=args.progress,
        v_dd=ctx.settings.readout.v_dd,
        profile_path=ctx.profile,
        **_array_options(args, ctx),
    )
    plot_path = None
    if args.plot:
        ctx.out.mkdir(parents=True, exist_ok=True)
        plot_path = str(ctx.out / "sweep.svg")
    return run_sweep(params, plot_path), "sweep"


def cmd_synth(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = SynthParams(
        n_classes=args.n_classes,
        n_per_class=args.n_per_class,
        bands=args.bands,
        separation=args.separation,
        noise=args.noise,
        seed=ctx.seed,
        output_dir=str(ctx.out),
        layout=args.layout,
        train_fraction=ctx.settings.pipeline.train_fraction,
    )
    return run_synth(params), "synth"


def cmd_oracle(args: argparse.Namespace, ctx: Context) -> Tuple[Result, str]:
    params = OracleParams(
        seed=ctx.seed,
        ratio=args.ratio,
        trials=args.trials,
        train_fraction=ctx.settings.pipeline.train_fraction,
        profile_path=ctx.profile,
        output_path=str(ctx.out / "synthetic_oracle.json"),
    )
    return run_oracle(params), "oracle"


Handler = Callable[[argparse.Namespace, Context], Tuple[Result, str]]


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    ap = argparse.ArgumentParser(
        prog="imss_cli",
        description="RRAM 2T-2R XOR 存内相似性搜索仿真器",
        parents=[common],
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name: str, handler: Handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("truth-table", cmd_truth_table, "XOR 位单元真值表")
    p.add_argument("--v-read", type=float, default=None, help="读电压 (V)")
    p.add_argument("--r-access", type=float, default=None, help="访问电阻 (Ω)")
    p.add_argument("--variability", action="store_true", help="在采样位单元上统计电流分布")
    p.add_argument("--n-cells", type=int, default=32, help="采样位单元数")

    p = add("margin", cmd_margin, "RBSM 与列长的关系")
    p.add_argument("--n-bits", type=int, nargs="+", default=[1, 2, 4, 8, 16, 32], help="列长列表")
    p.add_argument("--r-lrs", type=float, default=None, help="LRS 阻值 (Ω)")
    p.add_argument("--r-hrs", type=float, default=None, help="HRS 阻值 (Ω)")
    p.add_argument("--v-read", type=float, default=None, help="读电压 (V)")
    p.add_argument("--r-access", type=float, default=None, help="访问电阻 (Ω)")
    p.add_argument("--plot", action="store_true", help="输出 margin.svg")

    p = add("readout", cmd_readout, "SA 传输曲线、HD 电平分布与 4×8 阵列查询电压表")
    p.add_argument("--n-bits", type=int, default=None, help="列长（默认 tile_bits）")
    p.add_argument("--n-tiles", type=int, default=10, help="采样阵列块数")
    p.add_argument("--variability-ratio", type=float, default=None, help="σ/µ（默认使用工艺参数文件）")
    p.add_argument("--v-read", type=float, default=None, help="读电压 (V)")
    p.add_argument("--r-access", type=float, default=None, help="访问电阻 (Ω)")

    p = add("energy", cmd_energy, "功耗与每次搜索能耗")
    p.add_argument("--profiles", nargs="+", default=["130nm", "28nm"], help="参数组名称")
    p.add_argument("--bits", type=int, default=128, help="每个向量的位数")
    p.add_argument("--vectors", type=int, default=32, help="向量数")
    p.add_argument("--compare-to", default=None, help="能耗比的分母参数组")
    p.add_argument("--references", action="store_true", help="附带对比数据")

    p = add("fit", cmd_fit, "拟合预处理模型")
    _dataset_args(p)
    p.add_argument("--model", default=None, help="输出模型路径（默认 <out>/encoder.json）")
    p.add_argument("--n-components", type=int, default=None, help="主成分数")
    p.add_argument("--train-fraction", type=float, default=None, help="训练集比例")

    p = add("encode", cmd_encode, "像素编码为温度计码字")
    _dataset_args(p)
    p.add_argument("--model", default=None, help="编码模型路径")
    p.add_argument("--output", default=None, help="码字 CSV（默认 <out>/codes.csv）")

    p = add("build-db", cmd_build_db, "对训练划分编码并写出数据库")
    _dataset_args(p)
    _array_args(p)
    p.add_argument("--model", default=None, help="编码模型路径")
    p.add_argument("--db", default=None, help="数据库路径（默认 <out>/database.imss）")
    p.add_argument("--materialize", action="store_true", help="物化到阵列块并写出阻值")
    p.add_argument("--variability-ratio", type=float, default=None, help="σ/µ（默认使用工艺参数文件）")
    p.add_argument("--train-fraction", type=float, default=None, help="训练集比例")

    p = add("query", cmd_query, "top-k 检索")
    _dataset_args(p, required=False)
    p.add_argument("--db", default=None, help="数据库路径")
    p.add_argument("--bits", default=None, help="查询码字（0/1 字符串）")
    p.add_argument("--model", default=None, help="按像素查询时的编码模型")
    p.add_argument("--pixel", type=int, default=None, help="按像素查询时的像素下标")
    p.add_argument("-k", type=int, default=None, help="top-k")
    p.add_argument("--mode", choices=["digital", "analog"], default="digital", help="检索模式")

    p = add("eval", cmd_eval, "测试划分上的分类准确率")
    _dataset_args(p)
    _array_args(p)
    p.add_argument("--model", default=None, help="编码模型路径")
    p.add_argument("--db", default=None, help="数据库路径（缺省时现场构建）")
    p.add_argument("-k", type=int, default=None, help="top-k")
    p.add_argument("--mode", choices=["digital", "analog"], default="digital", help="检索模式")
    p.add_argument("--variability-ratio", type=float, default=None, help="模拟模式的 σ/µ")
    p.add_argument("--train-fraction", type=float, default=None, help="训练集比例")

    p = add("sweep", cmd_sweep, "器件涨落扫描")
    _dataset_args(p)
    _array_args(p)
    p.add_argument("--ratios", type=float, nargs="+", default=None, help="σ/µ 列表")
    p.add_argument("--trials", type=int, default=None, help="每个比例的试验次数")
    p.add_argument("--n-components", type=int, default=None, help="主成分数")
    p.add_argument("-k", type=int, default=None, help="top-k")
    p.add_argument("--distribution", choices=["LOGNORMAL", "TRUNCATED_GAUSSIAN"], default=None, help="阻值分布")
    p.add_argument("--unbounded", action="store_true", help="不截断阻值区间")
    p.add_argument("--train-fraction", type=float, default=None, help="训练集比例")
    p.add_argument("--plot", action="store_true", help="输出 sweep.svg")
    p.add_argument("--progress", action="store_true", help="显示进度条")

    p = add("synth", cmd_synth, "生成合成高光谱数据集")
    p.add_argument("--n-classes", type=int, default=4, help="类别数")
    p.add_argument("--n-per-class", type=int, default=250, help="每类像素数")
    p.add_argument("--bands", type=int, default=32, help="波段数")
    p.add_argument("--separation", type=float, default=6.0, help="类中心间距（噪声标准差的倍数）")
    p.add_argument("--noise", type=float, default=25.0, help="噪声标准差")
    p.add_argument("--layout", choices=["csv", "cube"], default="csv", help="输出布局")

    p = add("oracle", cmd_oracle, "标定合成数据上的暴力最近邻验收基准")
    p.add_argument("--ratio", type=float, default=0.2, help="模拟检索的 σ/µ")
    p.add_argument("--trials", type=int, default=10, help="蒙特卡洛次数")
    return ap


def _error_line(error_type: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error_type": error_type, "message": message}, sort_keys=True, ensure_ascii=False) + "\n")


def _run_config(command: str, args: argparse.Namespace, ctx: Context) -> Dict[str, Any]:
    arguments = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    return {
        "command": command,
        "arguments": arguments,
        "effective": {"seed": ctx.seed, "profile": ctx.profile, "out": str(ctx.out), "format": ctx.format},
        "settings": ctx.settings.model_dump(mode="json"),
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(getattr(args, "config", None))
    except ConfigurationError as e:
        _error_line(type(e).__name__, str(e))
        return 2
    setup_logging(getattr(args, "log_level", None) or settings.defaults.log_level)

    try:
        ctx = Context(args, settings)
        result, stem = args.handler(args, ctx)
    except ValidationError as e:
        _error_line("ConfigurationError", str(e))
        return 2
    except (ImssError, OSError) as e:
        _error_line(type(e).__name__, str(e))
        return 2

    if not result["success"]:
        _error_line(result.get("error_type") or "ImssError", result.get("error") or "")
        return 2

    columns: Optional[List[str]] = {"margin": MARGIN_COLUMNS, "readout": READOUT_COLUMNS}.get(stem)
    sys.stdout.write(render(result, ctx.format, title=args.command, columns=columns))
    try:
        export_data_to_files(result, ctx.out, stem, columns)
        (ctx.out / "run_config.json").write_text(to_json(_run_config(args.command, args, ctx)), encoding="utf-8")
    except OSError as e:
        _error_line("IOError", str(e))
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
