"""
划分 → 增强 → 集成训练 → 评估 的实验单元，以及在其上构建的扫描与对比研究
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from augmentation.utils.config import AugmentConfig
from augmentation.utils.gaussian_augmenter import gaussian_augment
from common.errors import DataError
from common.pairwise import PairwiseMatrix
from common.seeding import STAGE_AUGMENT, STAGE_ENSEMBLE, STAGE_SPLIT, derive_seed
from patterns.utils.pattern_corpus import SimilarityMatrix
from readout.utils.readout_trainer import EnsembleReport, fit_and_evaluate, split
from reservoir_sim.utils.config import ReservoirConfig
from reservoir_sim.utils.reservoir_simulator import SignalRecord
from signal_processing.utils.signal_processor import QuantizedRecord, quantize_all, white_balance
from .config import AnalysisConfig, ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class CellResult:
    """单次实验的全部产物"""

    report: EnsembleReport
    train: List[QuantizedRecord]
    test: List[QuantizedRecord]
    augmented: List[QuantizedRecord]
    seeds: Dict[str, int] = field(default_factory=dict)

    @property
    def synthetic(self) -> List[QuantizedRecord]:
        return [r for r in self.augmented if r.synthetic]


@dataclass
class SweepGrid:
    """
    Q × 每图案训练记录数 的准确率网格

    Attributes:
        qs, rpps: 两个坐标轴
        mean, std: (len(qs), len(rpps)) 的集成准确率均值/标准差
    """

    qs: List[int]
    rpps: List[int]
    mean: np.ndarray
    std: np.ndarray

    def to_frame(self, which: str = "mean") -> pd.DataFrame:
        values = self.mean if which == "mean" else self.std
        return pd.DataFrame(
            values,
            index=pd.Index([f"Q={q}" for q in self.qs], name="q"),
            columns=[f"rpp={r}" for r in self.rpps],
        )

    def cell(self, q: int, rpp: int):
        i, j = self.qs.index(q), self.rpps.index(rpp)
        return float(self.mean[i, j]), float(self.std[i, j])


def stage_seeds(master: int) -> Dict[str, int]:
    """实验用到的全部阶段种子"""
    return {stage: derive_seed(master, stage) for stage in (STAGE_SPLIT, STAGE_AUGMENT, STAGE_ENSEMBLE)}


def quantized_corpus(signals: Sequence[SignalRecord], exp: ExperimentConfig) -> List[QuantizedRecord]:
    if not signals:
        raise DataError("no signal records to quantize")
    return quantize_all(signals, exp.quantization(signals[0].n_frames))


def run_cell(corpus: Sequence[QuantizedRecord], exp: ExperimentConfig) -> CellResult:
    """
    在已量化的 80 条真实记录上跑一次完整实验

    测试集只由主种子决定；合成记录只进入训练集。

    Args:
        corpus: 真实量化记录
        exp (ExperimentConfig): 实验参数

    Returns:
        CellResult: 集成报告及各数据划分
    """
    seeds = stage_seeds(exp.seed)
    train, test = split(corpus, exp.records_per_pattern, seeds[STAGE_SPLIT])
    if exp.augment:
        aug_cfg = AugmentConfig(sigma=exp.sigma, target_total=max(exp.target_total, len(train)),
                                seed=seeds[STAGE_AUGMENT])
        augmented = gaussian_augment(train, aug_cfg)
    else:
        augmented = list(train)
    train_cfg = exp.train.model_copy(update={"seed": seeds[STAGE_ENSEMBLE]})
    report = fit_and_evaluate(augmented, test, train_cfg, n_models=exp.n_models, workers=exp.workers)
    return CellResult(report=report, train=train, test=test, augmented=augmented, seeds=seeds)


def sweep_q_records(signals: Sequence[SignalRecord], exp: ExperimentConfig,
                    qs: Sequence[int] = AnalysisConfig.SWEEP_QS,
                    rpps: Sequence[int] = AnalysisConfig.SWEEP_RPPS) -> SweepGrid:
    """
    每个 (Q, 每图案记录数) 单元跑一次 run_cell

    Args:
        signals: 原始信号记录（80 条）
        exp (ExperimentConfig): 除 q / records_per_pattern 外的实验参数
        qs, rpps: 坐标轴

    Returns:
        SweepGrid: 完整网格
    """
    mean = np.zeros((len(qs), len(rpps)))
    std = np.zeros_like(mean)
    for i, q in enumerate(qs):
        corpus = quantized_corpus(signals, exp.model_copy(update={"q": q}))
        for j, rpp in enumerate(rpps):
            report = run_cell(corpus, exp.model_copy(update={"q": q, "records_per_pattern": rpp})).report
            mean[i, j], std[i, j] = report.mean, report.std
            logger.info("sweep cell Q=%d rpp=%d: %.2f ± %.2f", q, rpp, report.mean, report.std)
    return SweepGrid(qs=list(qs), rpps=list(rpps), mean=mean, std=std)


def area_subsets() -> List[List[str]]:
    """D1/D2/D3 的全部 7 个非空子集，按大小排序"""
    areas = ReservoirConfig.DETECTION_AREAS
    return [list(c) for k in range(1, len(areas) + 1) for c in itertools.combinations(areas, k)]


def area_study(signals: Sequence[SignalRecord], exp: ExperimentConfig,
               subsets: Optional[Sequence[Sequence[str]]] = None) -> pd.DataFrame:
    """
    不同检测区组合下的集成准确率

    Returns:
        pd.DataFrame: 列 areas, n_features, mean_accuracy, std_accuracy
    """
    rows = []
    for subset in subsets or area_subsets():
        cell_exp = exp.model_copy(update={"areas": list(subset)})
        # model_copy 不重新校验，按区域顺序规范化
        cell_exp = ExperimentConfig(**cell_exp.model_dump())
        corpus = quantized_corpus(signals, cell_exp)
        report = run_cell(corpus, cell_exp).report
        rows.append({
            "areas": ",".join(cell_exp.areas),
            "n_features": corpus[0].features.size,
            "mean_accuracy": report.mean,
            "std_accuracy": report.std,
        })
    return pd.DataFrame(rows)


def white_balance_study(signals: Sequence[SignalRecord], exp: ExperimentConfig) -> pd.DataFrame:
    """原始信号与逐帧白平衡后信号的集成准确率对比"""
    rows = []
    for name, records in (("raw", list(signals)), ("white_balanced", [white_balance(r) for r in signals])):
        report = run_cell(quantized_corpus(records, exp), exp).report
        rows.append({"signals": name, "mean_accuracy": report.mean, "std_accuracy": report.std})
    return pd.DataFrame(rows)


def closest_cross_class_pairs(matrix: PairwiseMatrix, k: int = AnalysisConfig.CLOSEST_PAIRS,
                              higher_is_closer: Optional[bool] = None) -> List[Dict]:
    """
    variant 级矩阵中最接近的 k 个跨类别变体对

    Args:
        matrix: by="variant" 的相似度或 MAD 矩阵
        k (int): 返回对数
        higher_is_closer (bool, optional): 缺省时相似度矩阵为 True，其余为 False

    Returns:
        list: [{"a", "b", "value"}, ...]，从最接近开始
    """
    if matrix.by != "variant":
        raise DataError("closest pairs need a variant-level matrix")
    if higher_is_closer is None:
        higher_is_closer = isinstance(matrix, SimilarityMatrix)
    classes = [label.rsplit("_V", 1)[0] for label in matrix.labels]
    pairs = []
    n = len(matrix.labels)
    for i in range(n):
        for j in range(i + 1, n):
            if classes[i] != classes[j]:
                v = float(matrix.values[i, j])
                pairs.append((-v if higher_is_closer else v, i, j))
    pairs.sort()
    return [
        {"a": matrix.labels[i], "b": matrix.labels[j], "value": float(matrix.values[i, j])}
        for _, i, j in pairs[:k]
    ]
