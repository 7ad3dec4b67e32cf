"""
原始九路信号 → 模型特征

量化、灰度世界白平衡、全局标量归一化，以及储层输出之间的平均绝对差（MAD）。
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common.errors import ConfigError, DataError, DimensionError
from common.pairwise import PairwiseMatrix, aggregate_by_class, pairwise_values
from patterns.utils.config import PatternConfig
from reservoir_sim.utils.config import ReservoirConfig
from reservoir_sim.utils.reservoir_simulator import SignalRecord
from .config import QuantizationConfig, SignalConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuantizedRecord:
    """
    Q×O 特征向量

    特征顺序为 (区域, 通道, 区间)：每路信号占连续的 q 个特征。

    Attributes:
        features: 特征向量
        class_label, variant_id: 标签
        q: 区间数
        series: 选用的信号名，如 ("D1_R", "D1_G", ...)
        synthetic: 是否为合成记录
    """

    features: np.ndarray
    class_label: Optional[str]
    variant_id: Optional[int]
    q: int
    series: Tuple[str, ...]
    synthetic: bool = False

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float).reshape(-1)
        if features.size != self.q * len(self.series):
            raise DimensionError(
                f"expected {self.q * len(self.series)} features (Q={self.q}, O={len(self.series)}), "
                f"got {features.size}"
            )
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        features = features.copy()
        features.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "series", tuple(self.series))

    @property
    def o(self) -> int:
        return len(self.series)

    @property
    def name(self) -> str:
        return f"{self.class_label}_V{self.variant_id}"

    @property
    def key(self):
        return (self.class_label, self.variant_id)

    def blocks(self) -> np.ndarray:
        """(O, q) 视图，每行一路信号"""
        return self.features.reshape(self.o, self.q)

    def with_features(self, features: np.ndarray, **changes) -> "QuantizedRecord":
        return replace(self, features=features, **changes)


class MadMatrix(PairwiseMatrix):
    """储层输出两两 MAD 矩阵（量程百分比，对角线 0）"""


def quantize(rec: SignalRecord, cfg: QuantizationConfig) -> QuantizedRecord:
    """
    每个区间取算术平均

    Args:
        rec (SignalRecord): 原始信号
        cfg (QuantizationConfig): 区间数与检测区

    Returns:
        QuantizedRecord: q × 3|areas| 个特征

    Raises:
        ConfigError: q 不整除信号长度
    """
    n = rec.n_frames
    if n % cfg.q != 0:
        raise ConfigError(f"Q={cfg.q} does not divide {n} frames")
    idx = [ReservoirConfig.DETECTION_AREAS.index(a) for a in cfg.areas]
    selected = rec.signals[idx].reshape(len(idx) * 3, cfg.q, n // cfg.q)
    return QuantizedRecord(
        features=selected.mean(axis=2).reshape(-1),
        class_label=rec.class_label,
        variant_id=rec.variant_id,
        q=cfg.q,
        series=tuple(cfg.series()),
        synthetic=rec.synthetic,
    )


def quantize_all(records: Sequence[SignalRecord], cfg: QuantizationConfig) -> List[QuantizedRecord]:
    return [quantize(r, cfg) for r in records]


def white_balance(rec: SignalRecord) -> SignalRecord:
    """
    逐帧灰度世界白平衡

    每帧把三个区域上同一通道的值按 全局均值/通道均值 缩放，使三个通道均值
    相等；结果截断到 [0, 255]。某通道均值为 0 的帧保持原样并计入警告数。

    Args:
        rec (SignalRecord): 原始信号

    Returns:
        SignalRecord: 平衡后的信号，metadata 中记录 wb_warnings 与 wb_clipped_frames
    """
    values = rec.signals.transpose(2, 0, 1)             # (n, 区域, 通道)
    channel_means = values.mean(axis=1)                 # (n, 通道)
    global_mean = values.mean(axis=(1, 2))              # (n,)
    degenerate = np.any(channel_means == 0.0, axis=1)
    safe = np.where(channel_means == 0.0, 1.0, channel_means)
    gains = global_mean[:, None] / safe
    gains[degenerate] = 1.0
    balanced = values * gains[:, None, :]
    out_of_range = np.any((balanced < SignalConfig.WB_MIN) | (balanced > SignalConfig.WB_MAX), axis=(1, 2))
    balanced = np.clip(balanced, SignalConfig.WB_MIN, SignalConfig.WB_MAX)

    warnings = int(degenerate.sum())
    if warnings:
        logger.warning("white balance skipped %d frame(s) of %s with a zero channel mean", warnings, rec.name)
    metadata = dict(rec.metadata)
    metadata.update({
        "white_balanced": True,
        "wb_warnings": warnings,
        "wb_clipped_frames": int(out_of_range.sum()),
    })
    return rec.with_signals(balanced.transpose(1, 2, 0), metadata=metadata)


def normalize_global(dataset: Sequence[QuantizedRecord]) -> Tuple[List[QuantizedRecord], float]:
    """
    用训练集上的最大绝对特征值做单一标量归一化

    Args:
        dataset: 非空训练集

    Returns:
        tuple: (归一化后的数据集, 标量)；全零数据集的标量为 1
    """
    if not dataset:
        raise DataError("normalize_global needs a non-empty training set")
    scalar = float(max(np.max(np.abs(r.features)) for r in dataset))
    if scalar == 0.0:
        scalar = 1.0
    return apply_scalar(dataset, scalar), scalar


def apply_scalar(dataset: Sequence[QuantizedRecord], scalar: float) -> List[QuantizedRecord]:
    """把训练时得到的标量应用到测试集/合成集"""
    return [r.with_features(r.features / scalar) for r in dataset]


def mad(rec_a: SignalRecord, rec_b: SignalRecord, value_range: Optional[float] = None) -> float:
    """
    两条原始记录的平均绝对差，以量程 (baseline − floor) 的百分比表示

    Args:
        rec_a, rec_b (SignalRecord): 形状相同的记录
        value_range (float, optional): 量程，缺省取 rec_a 的 baseline − floor

    Returns:
        float: 百分比

    Raises:
        DimensionError: 形状不一致
    """
    if rec_a.signals.shape != rec_b.signals.shape:
        raise DimensionError(f"shape mismatch: {rec_a.signals.shape} vs {rec_b.signals.shape}")
    span = value_range if value_range is not None else rec_a.value_range
    return float(np.mean(np.abs(rec_a.signals - rec_b.signals)) / span * 100.0)


def mad_matrix(records: Sequence[SignalRecord], by: str = "variant",
               value_range: Optional[float] = None) -> MadMatrix:
    """
    两两 MAD 矩阵

    Args:
        records: 非空记录列表
        by (str): "variant" 或 "class"（按变体对取均值）
        value_range (float, optional): 量程

    Returns:
        MadMatrix: 对称、对角线为 0
    """
    if not records:
        raise DataError("mad_matrix needs at least one record")
    if by not in ("variant", "class"):
        raise DataError(f"unknown aggregation: {by}")
    values = pairwise_values(list(records), lambda a, b: mad(a, b, value_range), diagonal=0.0)
    if by == "variant":
        return MadMatrix(values=values, labels=[r.name for r in records], by="variant")
    class_values, labels, within = aggregate_by_class(
        values, [r.class_label for r in records], PatternConfig.CLASS_LABELS, diagonal=0.0
    )
    return MadMatrix(values=class_values, labels=labels, by="class", within=within)
