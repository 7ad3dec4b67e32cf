"""
信号处理配置
"""
import os
from typing import List, Sequence, Union

from pydantic import BaseModel, Field, computed_field, field_validator, model_validator

from patterns.utils.config import PatternConfig
from reservoir_sim.utils.config import ReservoirConfig


class SignalConfig:
    """信号处理配置类"""

    # 扫描用的量化区间数
    QUANTIZATION_LEVELS = (1, 2, 5, 10)
    DEFAULT_Q = int(os.getenv("FLUIDRC_Q", 2))
    DEFAULT_AREAS = ("D1", "D3")

    # 白平衡输出截断范围
    WB_MIN = 0.0
    WB_MAX = 255.0


def normalize_areas(value: Union[str, Sequence[str]]) -> List[str]:
    """
    解析检测区集合

    Args:
        value: "1,3"、"D1,D3" 或 ["D1", "D3"]

    Returns:
        list: 按 D1, D2, D3 排序的区域名

    Raises:
        ValueError: 集合为空或含未知区域
    """
    if isinstance(value, str):
        value = [a for a in value.split(",") if a.strip()]
    out = []
    for a in value:
        a = str(a).strip().upper()
        if a.isdigit():
            a = f"D{a}"
        out.append(a)
    if not out:
        raise ValueError("areas must be a non-empty subset of D1, D2, D3")
    unknown = [a for a in out if a not in ReservoirConfig.DETECTION_AREAS]
    if unknown:
        raise ValueError(f"unknown detection areas: {unknown}")
    return [a for a in ReservoirConfig.DETECTION_AREAS if a in out]


class QuantizationConfig(BaseModel):
    """
    量化配置

    Attributes:
        q: 每路信号的等长区间数，必须整除帧数
        areas: 选用的检测区（D1/D2/D3 的非空子集）
        n_frames: 信号长度
    """

    q: int = Field(default=SignalConfig.DEFAULT_Q, ge=1)
    areas: List[str] = Field(default_factory=lambda: list(SignalConfig.DEFAULT_AREAS))
    n_frames: int = Field(default_factory=PatternConfig.total_frames)

    @field_validator("areas", mode="before")
    @classmethod
    def _normalize_areas(cls, v):
        return normalize_areas(v)

    @model_validator(mode="after")
    def _check_divisor(self):
        if self.n_frames % self.q != 0:
            raise ValueError(f"Q={self.q} does not divide {self.n_frames} frames")
        return self

    @computed_field
    @property
    def o(self) -> int:
        """选用的信号路数 O = 3 × |areas|"""
        return len(ReservoirConfig.CHANNELS) * len(self.areas)

    @property
    def n_features(self) -> int:
        return self.q * self.o

    def series(self) -> List[str]:
        return ReservoirConfig.series_names(self.areas)
