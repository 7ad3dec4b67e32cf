"""
芯片拓扑与光学读数配置

类属性为缺省值（可用 FLUIDRC_* 环境变量覆盖）；运行时使用经过校验的
pydantic 模型 ChipTopology / OpticsConfig。
"""
import json
import os
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from common.errors import ConfigError


class ReservoirConfig:
    """储层模拟器配置类"""

    # 光学读数范围：清水读作 baseline，染料饱和时降到 floor
    DEFAULT_BASELINE = float(os.getenv("FLUIDRC_BASELINE", 120.0))
    DEFAULT_FLOOR = float(os.getenv("FLUIDRC_FLOOR", 40.0))
    RAW_MIN = 0.0
    RAW_MAX = 255.0

    # 入口增益：每帧注入体积占入口腔体积的比例，300 帧内入口浓度 ≥ 0.95
    DEFAULT_INLET_GAIN = float(os.getenv("FLUIDRC_INLET_GAIN", 0.1))

    # 红色通道额外的柱塞流延迟段（按有泵开启的帧计）
    DEFAULT_RED_DELAY_FRAMES = int(os.getenv("FLUIDRC_RED_DELAY_FRAMES", 600))
    # out_9 到 D3 的延迟段
    DEFAULT_D3_DELAY_FRAMES = int(os.getenv("FLUIDRC_D3_DELAY_FRAMES", 300))

    # 仅作记录的物理参数
    FLOW_RATE_ML_MIN = 3.0

    DETECTION_AREAS = ("D1", "D2", "D3")
    CHANNELS = ("R", "G", "B")

    # 并行模拟线程数
    WORKERS = int(os.getenv("FLUIDRC_WORKERS", 1))

    @classmethod
    def series_names(cls, areas=None):
        """九路信号列名 D1_R ... D3_B"""
        areas = areas or cls.DETECTION_AREAS
        return [f"{a}_{c}" for a in areas for c in cls.CHANNELS]


class NodeKind(str, Enum):
    """腔体类型"""
    INLET = "inlet"
    CHANNEL = "channel"      # 柱塞流延迟段，只有一个上游节点
    CHAMBER = "chamber"
    DETECTION = "detection"
    OUTLET = "outlet"


class ChipNode(BaseModel):
    name: str
    kind: NodeKind
    dye: Optional[int] = None          # 入口对应的染料序号 0/1/2
    delay_frames: int = 0              # CHANNEL 节点的延迟帧数（有流动的帧）
    area: Optional[str] = None         # DETECTION 节点对应 D1/D2/D3


class ChipEdge(BaseModel):
    source: str
    target: str
    coefficient: float = Field(ge=0.0, le=1.0)


class ChipTopology(BaseModel):
    """
    芯片腔体网络

    边系数表示源节点每帧有效流量中沿该边流出的份额；份额之和小于 1 时
    剩余部分排出芯片。
    """

    nodes: List[ChipNode]
    edges: List[ChipEdge]
    inlet_gain: float = Field(default=ReservoirConfig.DEFAULT_INLET_GAIN, gt=0.0, le=1.0)
    # 泵关闭的入口仍向其下游延迟段推入清水（只要有任一泵开启）
    inlet_flush: bool = True
    metadata: Dict[str, float] = Field(
        default_factory=lambda: {"flow_rate_ml_min": ReservoirConfig.FLOW_RATE_ML_MIN}
    )

    @model_validator(mode="after")
    def _check_graph(self):
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        by_name = {n.name: n for n in self.nodes}
        out_sum = {n: 0.0 for n in names}
        incoming = {n: [] for n in names}
        for e in self.edges:
            if e.source not in by_name or e.target not in by_name:
                raise ValueError(f"edge {e.source}->{e.target} references unknown node")
            out_sum[e.source] += e.coefficient
            incoming[e.target].append(e)
        for name, total in out_sum.items():
            if total > 1.0 + 1e-12:
                raise ValueError(f"outgoing coefficients of {name} sum to {total:.6f} > 1")
        for n in self.nodes:
            if n.kind == NodeKind.INLET:
                if n.dye not in (0, 1, 2):
                    raise ValueError(f"inlet {n.name} needs dye in 0..2")
                if incoming[n.name]:
                    raise ValueError(f"inlet {n.name} cannot have incoming edges")
            if n.kind == NodeKind.CHANNEL:
                src = incoming[n.name]
                if len(src) != 1:
                    raise ValueError(f"channel {n.name} must be fed by exactly one node")
                feeder = by_name[src[0].source]
                if feeder.kind in (NodeKind.CHANNEL, NodeKind.OUTLET):
                    raise ValueError(f"channel {n.name} cannot be fed by {feeder.kind.value} {feeder.name}")
                if n.delay_frames < 1:
                    raise ValueError(f"channel {n.name} needs delay_frames >= 1")
        areas = sorted(n.area for n in self.nodes if n.kind == NodeKind.DETECTION)
        if areas != sorted(ReservoirConfig.DETECTION_AREAS):
            raise ValueError(f"detection areas must be {ReservoirConfig.DETECTION_AREAS}, got {areas}")
        self.topological_order()
        return self

    def topological_order(self) -> List[str]:
        """Kahn 拓扑排序；有环时报错"""
        indeg = {n.name: 0 for n in self.nodes}
        children = {n.name: [] for n in self.nodes}
        for e in self.edges:
            indeg[e.target] += 1
            children[e.source].append(e.target)
        ready = [n.name for n in self.nodes if indeg[n.name] == 0]
        order = []
        while ready:
            name = ready.pop(0)
            order.append(name)
            for child in children[name]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    ready.append(child)
        if len(order) != len(self.nodes):
            raise ValueError("topology contains a cycle")
        return order

    def node(self, name: str) -> ChipNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def detection_nodes(self) -> List[str]:
        """按 D1, D2, D3 顺序返回检测节点名"""
        by_area = {n.area: n.name for n in self.nodes if n.kind == NodeKind.DETECTION}
        return [by_area[a] for a in ReservoirConfig.DETECTION_AREAS]

    def outgoing_sum(self, name: str) -> float:
        return sum(e.coefficient for e in self.edges if e.source == name)


class OpticsConfig(BaseModel):
    """
    光学读数模型

    alpha[d][c] 为染料 d 对通道 c 的吸收系数；对角线为 0（红染料不吸收红通道），
    非对角线缺省为 1。blue_green_crosstalk > 0 时蓝染料让部分绿光透过，
    蓝色区域读数偏绿。
    """

    baseline: float = ReservoirConfig.DEFAULT_BASELINE
    floor: float = ReservoirConfig.DEFAULT_FLOOR
    alpha: List[List[float]] = Field(
        default_factory=lambda: [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
    )
    blue_green_crosstalk: float = Field(default=0.0, ge=0.0, le=1.0)

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, v):
        if len(v) != 3 or any(len(row) != 3 for row in v):
            raise ValueError("alpha must be 3x3")
        if any(not 0.0 <= x <= 1.0 for row in v for x in row):
            raise ValueError("alpha entries must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _check_range(self):
        if not self.baseline > self.floor >= 0.0:
            raise ValueError("need baseline > floor >= 0")
        if self.baseline > ReservoirConfig.RAW_MAX:
            raise ValueError("baseline exceeds raw 8-bit range")
        return self

    @property
    def value_range(self) -> float:
        return self.baseline - self.floor

    def absorption(self):
        """应用串扰项后的 3×3 吸收矩阵"""
        a = np.array(self.alpha, dtype=float)
        a[2, 1] = a[2, 1] * (1.0 - self.blue_green_crosstalk)
        return a


def load_chip_config(path: Optional[str]):
    """
    读取芯片配置 JSON {"topology": {...}, "optics": {...}}

    Args:
        path (str, optional): 配置文件路径；None 时全部使用缺省值

    Returns:
        tuple: (ChipTopology, OpticsConfig)

    Raises:
        ConfigError: 文件缺失、JSON 损坏或校验失败
    """
    from .reservoir_simulator import default_topology

    if path is None:
        return default_topology(), OpticsConfig()
    if not os.path.exists(path):
        raise ConfigError(f"chip config not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"chip config {path} is not valid JSON: {e}")
    try:
        topo = ChipTopology(**payload["topology"]) if "topology" in payload else default_topology()
        optics = OpticsConfig(**payload.get("optics", {}))
    except ValidationError as e:
        raise ConfigError(f"chip config {path} is invalid: {e.errors()[0]['msg']}")
    return topo, optics
