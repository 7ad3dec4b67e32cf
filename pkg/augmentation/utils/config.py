"""
合成数据配置
"""
import os

from pydantic import BaseModel, Field


class AugmentationConfig:
    """数据增强配置类"""

    # 偏移标准差：在 1..30 的扫描中 8 最优
    DEFAULT_SIGMA = float(os.getenv("FLUIDRC_SIGMA", 8.0))
    # 真实 + 合成记录总数
    DEFAULT_TARGET_TOTAL = int(os.getenv("FLUIDRC_TARGET_TOTAL", 200))
    DEFAULT_SEED = 42

    # sigma 扫描与记录总数扫描的缺省网格
    SIGMA_GRID = (1.0, 4.0, 8.0, 12.0, 15.0, 20.0, 30.0)
    TOTAL_GRID = (50, 100, 200, 400, 800, 1600)


class AugmentConfig(BaseModel):
    """
    高斯偏移增强参数

    Attributes:
        sigma: 偏移标准差（原始读数单位）
        target_total: 真实 + 合成记录总数
        seed: 生成种子
        generator: 合成器名称，目前只有 "gaussian"
    """

    sigma: float = Field(default=AugmentationConfig.DEFAULT_SIGMA, ge=0.0)
    target_total: int = Field(default=AugmentationConfig.DEFAULT_TARGET_TOTAL, gt=0)
    seed: int = Field(default=AugmentationConfig.DEFAULT_SEED, ge=0)
    generator: str = "gaussian"
