"""
输入注入与量化输出之间的互信息

离散插件估计：联合直方图 → H(I) + H(O) − H(I, O)，单位 bit。
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import entropy

from common.errors import ConfigError, DataError, DimensionError
from patterns.utils.config import PatternConfig
from patterns.utils.pattern_corpus import Pattern
from reservoir_sim.utils.config import ReservoirConfig
from signal_processing.utils.signal_processor import QuantizedRecord
from .config import AnalysisConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MIHeatmap:
    """
    3×9 互信息热图

    Attributes:
        values: 行 = 输入颜色 R/G/B，列 = (区域, 通道)
        q: 量化区间数，同时是输出的分箱数
        filter: "all" 或单个类别
        unit: 采样单元
        n_samples: 联合分布的样本数
    """

    values: np.ndarray
    q: int
    filter: str = AnalysisConfig.MI_FILTER_ALL
    unit: str = "slot"
    n_samples: int = 0

    @property
    def rows(self):
        return list(PatternConfig.DYES)

    @property
    def columns(self):
        return ReservoirConfig.series_names()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.rows, columns=self.columns)

    def metadata(self) -> Dict:
        return {"q": self.q, "filter": self.filter, "unit": self.unit, "n_samples": self.n_samples}


def _codes(x: np.ndarray) -> np.ndarray:
    return np.unique(np.asarray(x), return_inverse=True)[1].reshape(-1)


def discrete_mutual_information(x: Sequence, y: Sequence) -> float:
    """
    两个离散变量的插件互信息（bit）

    Args:
        x, y: 等长的离散取值序列

    Returns:
        float: 非负互信息；任一变量为常数时为 0
    """
    x, y = np.asarray(x), np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] == 0:
        raise DataError("mutual information needs at least one sample")
    cx, cy = _codes(x), _codes(y)
    joint = np.zeros((cx.max() + 1, cy.max() + 1))
    np.add.at(joint, (cx, cy), 1.0)
    h_x = entropy(joint.sum(axis=1), base=2)
    h_y = entropy(joint.sum(axis=0), base=2)
    h_xy = entropy(joint.reshape(-1), base=2)
    return float(max(h_x + h_y - h_xy, 0.0))


def equal_width_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    """在观测范围上做 n_bins 个等宽分箱，返回 0..n_bins-1 的箱号"""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=int)
    edges = np.linspace(lo, hi, n_bins + 1)
    return np.clip(np.digitize(values, edges[1:-1]), 0, n_bins - 1)


def slot_intervals(q: int, n_frames: Optional[int] = None) -> np.ndarray:
    """每个注入时隙对应的量化区间（包含时隙中点的区间）"""
    n_frames = n_frames or PatternConfig.total_frames()
    width = n_frames // q
    mid = np.arange(PatternConfig.COLS) * PatternConfig.SLOT_FRAMES + PatternConfig.SLOT_FRAMES // 2
    return mid // width


def _samples(records: Sequence[QuantizedRecord], patterns: Sequence[Pattern], q: int, unit: str):
    """
    构造 (输入, 输出) 样本

    Returns:
        tuple: inputs (n, 3), outputs (n, 9)
    """
    inputs, outputs = [], []
    if unit == "slot":
        intervals = slot_intervals(q)
        for rec, pat in zip(records, patterns):
            blocks = rec.blocks()                       # (9, q)
            inputs.append(pat.array.T)                  # (5, 3)
            outputs.append(blocks[:, intervals].T)      # (5, 9)
    else:
        for rec, pat in zip(records, patterns):
            inputs.append(pat.array.sum(axis=1)[None, :])
            outputs.append(rec.blocks().mean(axis=1)[None, :])
    return np.vstack(inputs), np.vstack(outputs)


def mutual_information(records: Sequence[QuantizedRecord], corpus: Sequence[Pattern],
                       pattern_filter: str = AnalysisConfig.MI_FILTER_ALL,
                       unit: str = AnalysisConfig.DEFAULT_MI_UNIT) -> MIHeatmap:
    """
    三个输入与九个输出之间的互信息热图

    slot 单元：每个 (记录, 时隙) 为一个样本，输入为该颜色在该时隙是否注入，
    输出为该路信号在包含时隙中点的区间上的量化值，按 Q 个等宽箱离散化。
    record 单元：每条记录一个样本，输入为该颜色的注入时隙数，输出为该路信号特征均值。

    Args:
        records: 含全部九路信号的真实量化记录
        corpus: 图案语料，用 (类别, 变体号) 匹配记录
        pattern_filter (str): "all" 或单个类别标签
        unit (str): "slot" 或 "record"

    Returns:
        MIHeatmap: 3×9 热图

    Raises:
        ConfigError: unit 未知或记录的 Q 不一致
        DataError: 过滤后少于 2 条记录或找不到对应图案
    """
    if unit not in AnalysisConfig.MI_UNITS:
        raise ConfigError(f"unknown MI unit: {unit}. supported: {AnalysisConfig.MI_UNITS}")
    if pattern_filter != AnalysisConfig.MI_FILTER_ALL and pattern_filter not in PatternConfig.CLASS_LABELS:
        raise ConfigError(f"unknown pattern filter: {pattern_filter}")
    selected = [r for r in records
                if pattern_filter == AnalysisConfig.MI_FILTER_ALL or r.class_label == pattern_filter]
    if len(selected) < 2:
        raise DataError(f"mutual information needs at least 2 records for filter '{pattern_filter}'")
    qs = {r.q for r in selected}
    if len(qs) != 1:
        raise ConfigError(f"records use different Q values: {sorted(qs)}")
    q = qs.pop()
    expected = tuple(ReservoirConfig.series_names())
    if any(r.series != expected for r in selected):
        raise DimensionError("mutual information heatmap needs all nine series (areas D1, D2, D3)")

    by_key: Dict[Tuple[str, int], Pattern] = {p.key: p for p in corpus}
    try:
        patterns = [by_key[r.key] for r in selected]
    except KeyError as e:
        raise DataError(f"no pattern for record {e.args[0]}")

    inputs, outputs = _samples(selected, patterns, q, unit)
    values = np.zeros((len(PatternConfig.DYES), outputs.shape[1]))
    for j in range(outputs.shape[1]):
        binned = equal_width_bins(outputs[:, j], q)
        for c in range(len(PatternConfig.DYES)):
            values[c, j] = discrete_mutual_information(inputs[:, c], binned)
    logger.info("MI heatmap (Q=%d, filter=%s, unit=%s) over %d samples", q, pattern_filter, unit, len(inputs))
    return MIHeatmap(values=values, q=q, filter=pattern_filter, unit=unit, n_samples=len(inputs))


def mi_per_pattern(records: Sequence[QuantizedRecord], corpus: Sequence[Pattern], class_label: str,
                   unit: str = AnalysisConfig.DEFAULT_MI_UNIT) -> MIHeatmap:
    """只用单个类别的 10 个变体计算热图"""
    members = [r for r in records if r.class_label == class_label]
    if len(members) != PatternConfig.VARIANTS_PER_CLASS:
        raise DataError(
            f"class {class_label} has {len(members)} records, expected {PatternConfig.VARIANTS_PER_CLASS}"
        )
    return mutual_information(members, corpus, pattern_filter=class_label, unit=unit)
