"""
主种子派生与配置哈希

所有随机性都来自同一个主种子：每个阶段用 derive_seed(master, stage) 得到
独立的阶段种子，逐记录的随机数再用 default_rng([stage_seed, index]) 生成，
因此结果与线程数、执行顺序无关。
"""
import hashlib
import json
from typing import Any, List

import numpy as np

# 派生种子用到的阶段名
STAGE_SENSOR_NOISE = "sensor_noise"
STAGE_SPLIT = "split"
STAGE_AUGMENT = "augment"
STAGE_ENSEMBLE = "ensemble"


def derive_seed(master: int, stage: str) -> int:
    """
    由主种子和阶段名派生 64 位阶段种子

    Args:
        master (int): 主种子
        stage (str): 阶段名

    Returns:
        int: 非负 64 位整数
    """
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def record_rng(stage_seed: int, index: int) -> np.random.Generator:
    """按 (阶段种子, 序号) 构造计数器式随机数发生器"""
    return np.random.default_rng([int(stage_seed), int(index)])


def member_seeds(stage_seed: int, n: int) -> List[int]:
    """为集成中的 n 个模型生成权重初始化种子"""
    states = np.random.SeedSequence(int(stage_seed)).generate_state(n, dtype=np.uint64)
    return [int(s) for s in states]


def canonical_json(payload: Any) -> str:
    """排序键、紧凑分隔符的 JSON，用于哈希"""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=json_default)


def config_hash(payload: Any) -> str:
    """
    计算配置内容的哈希

    Args:
        payload: 可 JSON 序列化的配置内容（pydantic 模型请先 model_dump）

    Returns:
        str: SHA-256 十六进制串的前 16 位
    """
    if hasattr(payload, "model_dump"):
        payload = payload.model_dump(mode="json")
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


def file_sha256(path) -> str:
    """文件内容的 SHA-256，写入 manifest"""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def json_default(obj):
    """numpy 标量与数组的 JSON 序列化"""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
