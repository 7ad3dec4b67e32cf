"""
读出层训练配置
"""
import os

from pydantic import BaseModel, Field


class ReadoutConfig:
    """读出层配置类"""

    LEARNING_RATE = float(os.getenv("FLUIDRC_LEARNING_RATE", 0.02))
    MAX_EPOCHS = int(os.getenv("FLUIDRC_MAX_EPOCHS", 300))
    # 训练损失平台期早停
    EARLY_STOP_PATIENCE = 20
    EARLY_STOP_MIN_DELTA = 1e-4
    ADAM_BETAS = (0.9, 0.999)
    ADAM_EPSILON = 1e-8
    # 权重初始化 U(-0.5, 0.5)，偏置初始化为 0
    INIT_RANGE = 0.5

    N_MODELS = int(os.getenv("FLUIDRC_N_MODELS", 50))

    # 每类 10 个变体：6 个固定做测试，其余 4 个作为训练池
    TEST_VARIANTS_PER_CLASS = 6
    TRAIN_POOL_PER_CLASS = 4
    RECORDS_PER_PATTERN = (1, 2, 3, 4)


class TrainConfig(BaseModel):
    """单个读出层模型的训练参数（全批量 Adam）"""

    learning_rate: float = Field(default=ReadoutConfig.LEARNING_RATE, gt=0.0)
    max_epochs: int = Field(default=ReadoutConfig.MAX_EPOCHS, ge=1)
    early_stop_patience: int = Field(default=ReadoutConfig.EARLY_STOP_PATIENCE, ge=1)
    min_delta: float = Field(default=ReadoutConfig.EARLY_STOP_MIN_DELTA, ge=0.0)
    seed: int = Field(default=0, ge=0)
    beta1: float = Field(default=ReadoutConfig.ADAM_BETAS[0], ge=0.0, lt=1.0)
    beta2: float = Field(default=ReadoutConfig.ADAM_BETAS[1], ge=0.0, lt=1.0)
    epsilon: float = Field(default=ReadoutConfig.ADAM_EPSILON, gt=0.0)
    init_range: float = Field(default=ReadoutConfig.INIT_RANGE, gt=0.0)
