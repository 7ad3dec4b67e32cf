"""
分析与实验配置
"""
import os
from typing import List

from pydantic import BaseModel, Field, field_validator

from augmentation.utils.config import AugmentationConfig
from readout.utils.config import ReadoutConfig, TrainConfig
from signal_processing.utils.config import QuantizationConfig, SignalConfig, normalize_areas


class AnalysisConfig:
    """分析配置类"""

    # 量化区间 × 每图案训练记录数 的扫描网格
    SWEEP_QS = (1, 2, 5, 10)
    SWEEP_RPPS = (1, 2, 3, 4)

    # MI 采样单元：slot = (记录, 时隙)，record = 整条记录
    MI_UNITS = ("slot", "record")
    DEFAULT_MI_UNIT = os.getenv("FLUIDRC_MI_UNIT", "slot")
    DEFAULT_MI_Q = 5
    MI_FILTER_ALL = "all"

    # 流水线报告中列出的最接近跨类变体对数
    CLOSEST_PAIRS = 5


class ExperimentConfig(BaseModel):
    """
    一次 划分 → 增强 → 集成训练 → 评估 的实验参数

    Attributes:
        q, areas: 量化参数
        records_per_pattern: 每类真实训练记录数
        augment: 是否生成合成记录
        sigma, target_total: 高斯偏移增强参数
        n_models: 集成模型数
        seed: 主种子，各阶段种子由它派生
        workers: 集成训练线程数
        train: 读出层训练参数（其中的 seed 会被派生种子覆盖）
    """

    q: int = Field(default=SignalConfig.DEFAULT_Q, ge=1)
    areas: List[str] = Field(default_factory=lambda: list(SignalConfig.DEFAULT_AREAS))
    records_per_pattern: int = Field(default=ReadoutConfig.TRAIN_POOL_PER_CLASS, ge=1)
    augment: bool = True
    sigma: float = Field(default=AugmentationConfig.DEFAULT_SIGMA, ge=0.0)
    target_total: int = Field(default=AugmentationConfig.DEFAULT_TARGET_TOTAL, gt=0)
    n_models: int = Field(default=ReadoutConfig.N_MODELS, ge=1)
    seed: int = Field(default=AugmentationConfig.DEFAULT_SEED, ge=0)
    workers: int = Field(default=1, ge=1)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @field_validator("areas", mode="before")
    @classmethod
    def _normalize_areas(cls, v):
        return normalize_areas(v)

    def quantization(self, n_frames: int) -> QuantizationConfig:
        return QuantizationConfig(q=self.q, areas=self.areas, n_frames=n_frames)
