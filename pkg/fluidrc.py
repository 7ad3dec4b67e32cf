#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
fluidrc 命令行入口

每个流水线阶段一个子命令，外加端到端的 pipeline。全部随机性来自 --seed 主种子。
退出码：0 成功，2 配置错误，3 数据错误，4 训练发散。
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from analysis.utils.config import AnalysisConfig
from analysis.utils.experiments import (
    area_study,
    quantized_corpus,
    run_cell,
    sweep_q_records,
    white_balance_study,
)
from analysis.utils.information import mi_per_pattern, mutual_information
from augmentation.utils.config import AugmentationConfig, AugmentConfig
from augmentation.utils.gaussian_augmenter import gaussian_augment, sigma_sweep, total_sweep
from common.base_pipeline import FluidPipeline, RunConfig, validated
from common.errors import ConfigError, DataError, FluidRCError
from common.record_io import (
    ingest_signals,
    read_json,
    read_quantized,
    write_json,
    write_quantized,
    write_signal_records,
    write_table,
)
from common.seeding import STAGE_AUGMENT, STAGE_ENSEMBLE, STAGE_SENSOR_NOISE, STAGE_SPLIT, derive_seed
from patterns.utils.pattern_corpus import (
    canonical_corpus,
    find_pattern,
    parse_pattern_key,
    similarity_matrix,
)
from readout.utils.readout_trainer import ReadoutModel, evaluate, fit_and_evaluate, split
from reservoir_sim.utils.config import ReservoirConfig, load_chip_config
from reservoir_sim.utils.reservoir_simulator import run_corpus
from signal_processing.utils.config import QuantizationConfig
from signal_processing.utils.signal_processor import mad_matrix, quantize_all, white_balance

logger = logging.getLogger("fluidrc")

# CLI 参数名 → RunConfig 字段名
_OVERRIDES = {
    "seed": "seed",
    "q": "q",
    "areas": "areas",
    "rpp": "records_per_pattern",
    "sigma": "sigma",
    "total": "target_total",
    "models": "n_models",
    "noise": "noise_sigma",
    "chip": "chip_config",
    "workers": "workers",
    "unit": "mi_unit",
}


def run_pipeline(out_dir: str, config_path: Optional[str] = None, **overrides) -> Dict[str, Any]:
    """
    运行端到端流水线并写出报告目录

    Args:
        out_dir (str): 输出目录
        config_path (str, optional): JSON 运行配置
        **overrides: RunConfig 字段覆盖

    Returns:
        dict: {"success", "output_path", "error_msg", "metadata"}

    Examples:
        >>> result = run_pipeline("out", seed=7, n_models=5)
        >>> if result["success"]:
        ...     print(result["metadata"]["mean_accuracy"])
    """
    try:
        cfg = RunConfig.load(config_path, out_dir=out_dir, **overrides)
    except ConfigError as e:
        e.stage = e.stage or "config"
        return {
            "success": False,
            "output_path": None,
            "error_msg": str(e),
            "metadata": {"stage": e.stage, "exit_code": e.exit_code},
        }
    return FluidPipeline().run(cfg)


# ---------------------------------------------------------------- 辅助函数

def _run_config(args) -> RunConfig:
    overrides = {}
    for flag, name in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    return RunConfig.load(getattr(args, "config", None), **overrides)


def _signals(args, cfg: RunConfig):
    """--signals 指定时导入外部记录，否则模拟标准语料"""
    if getattr(args, "signals", None):
        return ingest_signals(args.signals)
    topo, optics = load_chip_config(cfg.chip_config)
    return run_corpus(canonical_corpus(), topo, optics, noise_sigma=cfg.noise_sigma,
                      seed=derive_seed(cfg.seed, STAGE_SENSOR_NOISE), workers=cfg.workers)


def _out(args, default: str) -> Path:
    path = Path(getattr(args, "out", None) or default)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _print_json(payload: Dict):
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


# ---------------------------------------------------------------- 子命令

def cmd_patterns(args) -> int:
    """patterns list | show <图案> | similarity"""
    if args.action == "similarity":
        return cmd_similarity(args)
    corpus = canonical_corpus(args.fixtures)
    if args.action == "show":
        if not args.name:
            raise ConfigError("patterns show needs a pattern, e.g. PN:10")
        p = find_pattern(corpus, *parse_pattern_key(args.name))
        print(p.name)
        for channel, row in zip(ReservoirConfig.CHANNELS, p.rows()):
            print(f"{channel} {row}")
        return 0
    for p in corpus:
        print(f"{p.name:8s} {' '.join(p.rows())}")
    return 0


def cmd_similarity(args) -> int:
    shifts = args.shifts == "on"
    matrix = similarity_matrix(canonical_corpus(args.fixtures), by=args.by, max_over_shifts=shifts)
    frame = matrix.to_frame()
    if matrix.within is not None:
        frame["within"] = matrix.within
    write_table(frame, _out(args, f"similarity_{args.by}.csv"), {"by": args.by, "max_over_shifts": shifts})
    return 0


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    signals = _signals(args, cfg)
    if args.pattern:
        key = parse_pattern_key(args.pattern)
        signals = [r for r in signals if (r.class_label, r.variant_id) == key]
        if not signals:
            raise DataError(f"unknown pattern: {args.pattern}")
    write_signal_records(signals, _out(args, "signals"))
    return 0


def cmd_ingest(args) -> int:
    records = ingest_signals(args.path)
    _print_json({
        "records": len(records),
        "n_frames": records[0].n_frames,
        "classes": sorted({str(r.class_label) for r in records}),
    })
    return 0


def cmd_quantize(args) -> int:
    cfg = _run_config(args)
    records = _signals(args, cfg)
    qcfg = validated(QuantizationConfig, q=cfg.q, areas=cfg.areas, n_frames=records[0].n_frames)
    write_quantized(quantize_all(records, qcfg), _out(args, f"quantized_q{cfg.q}.csv"),
                    n_frames=records[0].n_frames)
    return 0


def cmd_wb(args) -> int:
    cfg = _run_config(args)
    records = _signals(args, cfg)
    if args.study:
        table = white_balance_study(records, cfg.experiment())
        write_table(table, _out(args, "white_balance_study.csv"), {"seed": cfg.seed}, index=False)
        return 0
    write_signal_records([white_balance(r) for r in records], _out(args, "signals_wb"))
    return 0


def cmd_augment(args) -> int:
    cfg = _run_config(args)
    train, meta = read_quantized(args.train)
    aug_cfg = validated(AugmentConfig, sigma=cfg.sigma, target_total=cfg.target_total,
                        seed=derive_seed(cfg.seed, STAGE_AUGMENT))
    write_quantized(gaussian_augment(train, aug_cfg), _out(args, "augmented.csv"),
                    scalar=meta.get("scalar"), n_frames=meta.get("n_frames"))
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    exp = cfg.experiment()
    cell = run_cell(quantized_corpus(_signals(args, cfg), exp), exp)
    out = _out(args, "report.json")
    write_json(out, {"config": cfg.reproducible_dump(), "seeds": cell.seeds, "ensemble": cell.report.to_dict()})
    write_json(out.with_name(f"{out.stem}_model.json"), cell.report.best_model.to_dict())
    write_quantized(cell.test, out.with_name(f"{out.stem}_test.csv"), scalar=cell.report.scalar)
    print(f"mean accuracy {cell.report.mean:.2f}% ± {cell.report.std:.2f} over {len(cell.report.accuracies)} models")
    return 0


def cmd_eval(args) -> int:
    model = ReadoutModel.from_dict(read_json(args.model))
    test, _ = read_quantized(args.test)
    report = evaluate(model, test).to_dict()
    if getattr(args, "out", None):
        write_json(_out(args, "eval.json"), report)
    else:
        _print_json(report)
    return 0


def cmd_mi(args) -> int:
    cfg = _run_config(args)
    records = _signals(args, cfg)
    qcfg = validated(QuantizationConfig, q=cfg.q, areas=list(ReservoirConfig.DETECTION_AREAS),
                     n_frames=records[0].n_frames)
    quantized = quantize_all(records, qcfg)
    corpus = canonical_corpus()
    if args.pattern:
        heatmap = mi_per_pattern(quantized, corpus, args.pattern, unit=cfg.mi_unit)
    else:
        heatmap = mutual_information(quantized, corpus, unit=cfg.mi_unit)
    suffix = f"_{args.pattern}" if args.pattern else ""
    write_table(heatmap.to_frame(), _out(args, f"mi_q{cfg.q}{suffix}.csv"), {**heatmap.metadata(), "seed": cfg.seed})
    return 0


def cmd_mad(args) -> int:
    cfg = _run_config(args)
    matrix = mad_matrix(_signals(args, cfg), by=args.by)
    frame = matrix.to_frame()
    if matrix.within is not None:
        frame["within"] = matrix.within
    write_table(frame, _out(args, f"mad_{args.by}.csv"), {"by": args.by, "seed": cfg.seed})
    return 0


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    signals = _signals(args, cfg)
    out = _out(args, f"sweep_{args.axis}.csv")
    meta = {"axis": args.axis, "seed": cfg.seed, "n_models": cfg.n_models}
    if args.axis == "q-records":
        grid = sweep_q_records(signals, cfg.experiment().model_copy(update={"augment": args.augment}))
        write_table(grid.to_frame("mean"), out, meta)
        write_table(grid.to_frame("std"), out.with_name(f"{out.stem}_std.csv"), meta)
        return 0

    exp = cfg.experiment()
    train, test = split(quantized_corpus(signals, exp), exp.records_per_pattern,
                        derive_seed(cfg.seed, STAGE_SPLIT))
    train_cfg = exp.train.model_copy(update={"seed": derive_seed(cfg.seed, STAGE_ENSEMBLE)})

    def trainer(augmented, test_set):
        return fit_and_evaluate(augmented, test_set, train_cfg, n_models=cfg.n_models, workers=cfg.workers)

    if args.axis == "sigma":
        sigma_sweep(train, test, AugmentationConfig.SIGMA_GRID, trainer,
                    target_total=cfg.target_total, seed=derive_seed(cfg.seed, STAGE_AUGMENT), out_path=str(out))
    else:
        total_sweep(train, test, AugmentationConfig.TOTAL_GRID, trainer,
                    sigma=cfg.sigma, seed=derive_seed(cfg.seed, STAGE_AUGMENT), out_path=str(out))
    return 0


def cmd_areas(args) -> int:
    cfg = _run_config(args)
    table = area_study(_signals(args, cfg), cfg.experiment())
    write_table(table, _out(args, f"areas_q{cfg.q}.csv"), {"q": cfg.q, "seed": cfg.seed}, index=False)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _run_config(args)
    result = FluidPipeline().run(cfg)
    if not result["success"]:
        print(result["error_msg"], file=sys.stderr)
        return result["metadata"].get("exit_code", 1)
    print(f"report written to {result['output_path']} "
          f"(mean accuracy {result['metadata']['mean_accuracy']:.2f}%)")
    return 0


# ---------------------------------------------------------------- 参数解析

def _global_options() -> argparse.ArgumentParser:
    # SUPPRESS：子命令未给出时不覆盖主解析器上的值
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="主种子（默认 42）")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON 运行配置")
    common.add_argument("--out", default=argparse.SUPPRESS, help="输出文件或目录")
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="日志级别")
    return common


def _experiment_options(p: argparse.ArgumentParser, signals: bool = True):
    p.add_argument("--q", type=int, help="量化区间数")
    p.add_argument("--areas", help="检测区，例如 1,3")
    p.add_argument("--rpp", type=int, help="每图案训练记录数 (1..4)")
    p.add_argument("--sigma", type=float, help="合成偏移标准差")
    p.add_argument("--total", type=int, help="真实 + 合成记录总数")
    p.add_argument("--models", type=int, help="集成模型数")
    p.add_argument("--noise", type=float, help="传感器噪声标准差")
    p.add_argument("--chip", help="芯片配置 JSON")
    p.add_argument("--workers", type=int, help="并行线程数")
    if signals:
        p.add_argument("--signals", help="导入信号目录而不是模拟")


def _similarity_options(p: argparse.ArgumentParser):
    p.add_argument("--by", choices=["variant", "class"], default="variant")
    p.add_argument("--shifts", choices=["on", "off"], default="off", help="是否在列平移上取最大相似度")
    p.add_argument("--shift", dest="shifts", action="store_const", const="on", help="等同 --shifts on")
    p.add_argument("--fixtures", help="夹具文件路径")


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(
        prog="fluidrc",
        description="微流控储层计算模拟与分析",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("patterns", parents=[common], help="图案语料：list / show / similarity")
    p.add_argument("action", nargs="?", choices=["list", "show", "similarity"], default="list")
    p.add_argument("name", nargs="?", help="show 的图案，例如 PN:10")
    _similarity_options(p)
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("similarity", parents=[common], help="输入图案相似度矩阵")
    _similarity_options(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("simulate", parents=[common], help="模拟语料并写出原始信号")
    _experiment_options(p, signals=False)
    p.add_argument("--pattern", help="只写出单个图案，例如 PN:10（也接受 PN_V10）")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", parents=[common], help="导入并校验信号 CSV")
    p.add_argument("path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("quantize", parents=[common], help="量化信号")
    _experiment_options(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("wb", parents=[common], help="灰度世界白平衡")
    _experiment_options(p)
    p.add_argument("--study", action="store_true", help="比较白平衡前后的分类准确率")
    p.set_defaults(func=cmd_wb)

    p = sub.add_parser("augment", parents=[common], help="高斯偏移数据增强")
    _experiment_options(p, signals=False)
    p.add_argument("--train", required=True, help="量化训练集 CSV")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="集成训练读出层")
    _experiment_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="评估已保存的模型")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mi", parents=[common], help="互信息热图")
    _experiment_options(p)
    p.add_argument("--pattern", help="只用单个类别，例如 PN")
    p.add_argument("--unit", choices=list(AnalysisConfig.MI_UNITS))
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("mad", parents=[common], help="输出 MAD 矩阵")
    _experiment_options(p)
    p.add_argument("--by", choices=["variant", "class"], default="class")
    p.set_defaults(func=cmd_mad)

    p = sub.add_parser("sweep", parents=[common], help="准确率扫描")
    _experiment_options(p)
    p.add_argument("--axis", choices=["q-records", "sigma", "total"], default="q-records")
    p.add_argument("--augment", action="store_true", help="q-records 扫描时也生成合成记录")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("areas", parents=[common], help="检测区组合对比")
    _experiment_options(p)
    p.set_defaults(func=cmd_areas)

    p = sub.add_parser("pipeline", parents=[common], help="端到端流水线与报告")
    _experiment_options(p, signals=False)
    p.add_argument("--unit", choices=list(AnalysisConfig.MI_UNITS))
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = getattr(args, "log_level", None) or os.getenv("FLUIDRC_LOG_LEVEL", "WARNING")
    logging.basicConfig(level=level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FluidRCError as e:
        e.stage = e.stage or args.command
        print(str(e), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
