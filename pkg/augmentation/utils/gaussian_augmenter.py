"""
量化记录的合成数据生成

每条合成记录从一条真实训练记录出发，对其每一路信号抽取一个高斯偏移，
整路 q 个特征一起平移，模拟实验间信号整体上下漂移。
"""
import logging
from abc import ABC, abstractmethod
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from common.errors import BalanceError, ConfigError, DataError
from common.seeding import record_rng
from patterns.utils.config import PatternConfig
from signal_processing.utils.signal_processor import QuantizedRecord
from .config import AugmentConfig, AugmentationConfig

logger = logging.getLogger(__name__)


class GeneratorKind(Enum):
    """已注册的合成器"""
    GAUSSIAN = "gaussian"

    @classmethod
    def list_kinds(cls):
        return [k.value for k in cls]


class SyntheticGenerator(ABC):
    """合成器接口：根据源记录与序号生成一条合成记录"""

    @abstractmethod
    def synthesize(self, source: QuantizedRecord, index: int) -> QuantizedRecord:
        ...


class GaussianOffsetGenerator(SyntheticGenerator):
    """每路信号一个 N(0, sigma²) 偏移"""

    def __init__(self, sigma: float, seed: int):
        self.sigma = float(sigma)
        self.seed = int(seed)

    def offsets(self, index: int, n_series: int) -> np.ndarray:
        """第 index 条合成记录的偏移（计数器式种子，与生成顺序无关）"""
        return record_rng(self.seed, index).normal(0.0, self.sigma, size=n_series)

    def synthesize(self, source: QuantizedRecord, index: int) -> QuantizedRecord:
        shifted = source.blocks() + self.offsets(index, source.o)[:, None]
        return source.with_features(shifted.reshape(-1), synthetic=True)


class DataAugmenter:
    """
    合成数据生成器注册表

    与格式转换器注册方式相同：按 GeneratorKind 注册实现，统一入口 augment()。
    """

    def __init__(self):
        self._generators: Dict[GeneratorKind, Callable[[AugmentConfig], SyntheticGenerator]] = {}
        self._register_generators()

    def _register_generators(self):
        self._generators[GeneratorKind.GAUSSIAN] = lambda cfg: GaussianOffsetGenerator(cfg.sigma, cfg.seed)

    def get_supported_generators(self) -> List[str]:
        return [k.value for k in self._generators]

    def augment(self, train: Sequence[QuantizedRecord], cfg: AugmentConfig,
                classes: Sequence[str] = PatternConfig.CLASS_LABELS) -> List[QuantizedRecord]:
        """
        把训练集扩充到 cfg.target_total 条

        Args:
            train: 真实训练记录（不能含合成记录）
            cfg (AugmentConfig): 增强参数
            classes: 必须全部出现在训练集中的类别

        Returns:
            list: 原样的真实记录 + (target_total − |train|) 条合成记录

        Raises:
            BalanceError: 训练集缺少某个类别
            ConfigError: target_total 小于训练集大小或合成器未注册
        """
        try:
            kind = GeneratorKind(cfg.generator)
        except ValueError:
            raise ConfigError(
                f"unknown generator: {cfg.generator}. supported: {GeneratorKind.list_kinds()}"
            )
        if not train:
            raise DataError("augmentation needs a non-empty training set")
        if any(r.synthetic for r in train):
            raise DataError("augmentation sources must be real records")
        if cfg.target_total < len(train):
            raise ConfigError(f"target_total={cfg.target_total} is smaller than the {len(train)} real records")

        by_class = {c: [r for r in train if r.class_label == c] for c in classes}
        missing = [c for c, members in by_class.items() if not members]
        if missing:
            raise BalanceError(f"classes missing from training set: {missing}")

        generator = self._generators[kind](cfg)
        n_synthetic = cfg.target_total - len(train)
        synthetic = []
        for k in range(n_synthetic):
            # 类别轮转，类内源记录轮转
            members = by_class[classes[k % len(classes)]]
            source = members[(k // len(classes)) % len(members)]
            synthetic.append(generator.synthesize(source, k))
        logger.info("generated %d synthetic records (sigma=%s, seed=%d)", n_synthetic, cfg.sigma, cfg.seed)
        return list(train) + synthetic


def gaussian_augment(train: Sequence[QuantizedRecord], cfg: AugmentConfig,
                     classes: Sequence[str] = PatternConfig.CLASS_LABELS) -> List[QuantizedRecord]:
    """高斯偏移增强的便捷入口"""
    if cfg.generator != GeneratorKind.GAUSSIAN.value:
        cfg = cfg.model_copy(update={"generator": GeneratorKind.GAUSSIAN.value})
    return DataAugmenter().augment(train, cfg, classes)


def assert_real_only(records: Sequence[QuantizedRecord], split_name: str = "test"):
    """合成记录只能用于训练：在划分边界检查"""
    leaked = [r.name for r in records if r.synthetic]
    if leaked:
        raise DataError(f"synthetic records in {split_name} split: {leaked[:3]}")


def _sweep(values, make_cfg, train, test, trainer, column, out_path):
    assert_real_only(test)
    rows = []
    for v in values:
        augmented = gaussian_augment(train, make_cfg(v))
        report = trainer(augmented, test)
        rows.append({
            column: v,
            "mean_accuracy": report.mean,
            "std_accuracy": report.std,
        })
        logger.info("%s=%s -> mean accuracy %.2f", column, v, report.mean)
    if out_path:
        pd.DataFrame(rows).to_csv(out_path, index=False)
    return rows


def sigma_sweep(train: Sequence[QuantizedRecord], test: Sequence[QuantizedRecord],
                sigmas: Sequence[float], trainer: Callable,
                target_total: int = AugmentationConfig.DEFAULT_TARGET_TOTAL,
                seed: int = AugmentationConfig.DEFAULT_SEED,
                out_path: Optional[str] = None) -> List[dict]:
    """
    准确率随偏移标准差的变化

    Args:
        train, test: 真实训练集与测试集（原始量化值）
        sigmas: 待扫描的标准差，输出按输入顺序
        trainer: trainer(train, test) → 带 mean/std 属性的集成报告
        target_total (int): 每个 sigma 下的总记录数
        seed (int): 增强种子
        out_path (str, optional): 写出 CSV 的路径

    Returns:
        list: [{"sigma", "mean_accuracy", "std_accuracy"}, ...]
    """
    return _sweep(
        sigmas,
        lambda s: AugmentConfig(sigma=s, target_total=target_total, seed=seed),
        train, test, trainer, "sigma", out_path,
    )


def total_sweep(train: Sequence[QuantizedRecord], test: Sequence[QuantizedRecord],
                totals: Sequence[int], trainer: Callable,
                sigma: float = AugmentationConfig.DEFAULT_SIGMA,
                seed: int = AugmentationConfig.DEFAULT_SEED,
                out_path: Optional[str] = None) -> List[dict]:
    """准确率随总记录数（真实 + 合成）的变化"""
    return _sweep(
        totals,
        lambda t: AugmentConfig(sigma=sigma, target_total=t, seed=seed),
        train, test, trainer, "target_total", out_path,
    )
