"""
fluidrc 异常层级

库代码只负责抛出异常；编排层（FluidPipeline、fluidrc.py）负责把异常转换为
结果字典或进程退出码。
"""
from typing import Optional


class FluidRCError(Exception):
    """所有 fluidrc 错误的基类"""

    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self):
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class ConfigError(FluidRCError):
    """配置参数非法（Q 不整除帧数、area 集合为空等）"""

    exit_code = 2


class DataError(FluidRCError):
    """数据内容或形状不符合约定"""

    exit_code = 3


class CorpusLoadError(DataError):
    """图案夹具文件缺失或格式错误"""


class RecordParseError(DataError):
    """记录文件解析失败，消息中包含文件名与行号"""

    def __init__(self, path: str, line: Optional[int], message: str, stage: Optional[str] = None):
        location = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{location}: {message}", stage=stage)
        self.path = path
        self.line = line


class DimensionError(DataError):
    """数组维度或长度不匹配"""


class BalanceError(DataError):
    """训练集缺少某个类别，无法做类别均衡的数据增强"""


class DivergenceError(FluidRCError):
    """训练过程中损失出现 NaN/Inf"""

    exit_code = 4

    def __init__(self, epoch: int, message: Optional[str] = None, stage: Optional[str] = None):
        super().__init__(message or f"loss diverged at epoch {epoch}", stage=stage)
        self.epoch = epoch
