"""
蜻蜓翅脉芯片的腔体流动模拟器

离散时间、线性的转移/置换模型：
- 泵开启时，入口腔体向纯染料弛豫（每帧增益 g）
- 每个节点的有效流量沿拓扑逐级传递，边系数为源节点流量中流向下游的份额
- 节点更新 c ← (1 − V)·c + Σ v_e·c_src，即按比例置换驻留流体，质量守恒
- 没有泵开启的帧状态完全不变（短时记忆）
- 延迟段在任一泵开启的帧推进一格；红色通道的 600 帧延迟段保证红色染料
  至少 600 个流动帧后才到达检测区，泵关闭的红色入口向其中推入清水
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from common.errors import DataError, DimensionError
from common.seeding import config_hash, record_rng
from patterns.utils.config import PatternConfig
from patterns.utils.pattern_corpus import InjectionSchedule, Pattern, encode_schedule
from .config import (
    ChipEdge,
    ChipNode,
    ChipTopology,
    NodeKind,
    OpticsConfig,
    ReservoirConfig,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChipState:
    """某一帧各腔体的染料浓度 (c_r, c_g, c_b)，其余为清水"""

    node_names: Tuple[str, ...]
    concentrations: np.ndarray
    frame: int

    def of(self, name: str) -> np.ndarray:
        return self.concentrations[self.node_names.index(name)]


@dataclass(frozen=True)
class ConcentrationTrace:
    """逐帧浓度轨迹，values 形状为 (n_frames, n_nodes, 3)"""

    node_names: Tuple[str, ...]
    values: np.ndarray

    def at(self, frame: int, name: str) -> np.ndarray:
        return self.values[frame, self.node_names.index(name)]

    def state(self, frame: int) -> ChipState:
        return ChipState(self.node_names, self.values[frame].copy(), frame)


@dataclass(frozen=True)
class SignalRecord:
    """
    一次实验的九路原始信号

    Attributes:
        class_label: 类别（外部导入的无标签信号可为 None）
        variant_id: 变体号
        signals: (3 区域, 3 通道, n_frames) 数组。原始记录须落在 [floor, baseline]
            内；白平衡与合成记录只要求 8 位范围 [0, 255]
        seed: 传感器噪声种子
        baseline, floor: 产生该记录的光学读数范围
        config_hash: 模拟配置哈希
        metadata: 其他元数据（白平衡警告数等）
    """

    class_label: Optional[str]
    variant_id: Optional[int]
    signals: np.ndarray
    seed: Optional[int] = None
    baseline: float = ReservoirConfig.DEFAULT_BASELINE
    floor: float = ReservoirConfig.DEFAULT_FLOOR
    config_hash: Optional[str] = None
    synthetic: bool = False
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        signals = np.asarray(self.signals, dtype=float)
        areas, channels = len(ReservoirConfig.DETECTION_AREAS), len(ReservoirConfig.CHANNELS)
        if signals.ndim != 3 or signals.shape[:2] != (areas, channels):
            raise DimensionError(f"signals must have shape (3, 3, n_frames), got {signals.shape}")
        if not np.all(np.isfinite(signals)):
            raise DataError("signals contain non-finite values")
        if signals.min() < ReservoirConfig.RAW_MIN or signals.max() > ReservoirConfig.RAW_MAX:
            raise DataError("signals outside raw range [0, 255]")
        if not (self.synthetic or self.metadata.get("white_balanced")):
            if signals.min() < self.floor or signals.max() > self.baseline:
                raise DataError(
                    f"signals span [{signals.min():g}, {signals.max():g}], outside optical range "
                    f"[{self.floor:g}, {self.baseline:g}]"
                )
        signals = signals.copy()
        signals.setflags(write=False)
        object.__setattr__(self, "signals", signals)

    @property
    def n_frames(self) -> int:
        return self.signals.shape[2]

    @property
    def name(self) -> str:
        return f"{self.class_label}_V{self.variant_id}"

    @property
    def value_range(self) -> float:
        return self.baseline - self.floor

    def table(self) -> np.ndarray:
        """(n_frames, 9) 表格，列顺序 D1_R, D1_G, ..., D3_B"""
        return self.signals.reshape(9, -1).T

    def with_signals(self, signals: np.ndarray, **changes) -> "SignalRecord":
        return replace(self, signals=signals, **changes)


@dataclass
class _FlowPlan:
    """某一泵开关组合（及各延迟段出口流量）下的一帧更新算子"""

    transition: np.ndarray                 # (N, N)
    source: np.ndarray                     # (N, 3) 入口注入项
    channel_in: Dict[str, float]           # 本帧进入各延迟段的体积
    channel_fed: Dict[str, bool]           # 进入的是上游流体（False 为入口推入的清水）
    channel_out: Dict[str, np.ndarray]     # 延迟段出口流向各节点的体积 (N,)


class CompartmentSimulator:
    """
    单次实验的有状态模拟器

    延迟段是一条按帧推进的柱塞流管道：每个有泵开启的帧，入口端进入一个
    流体单元，出口端放出 delay_frames 帧之前进入的单元。由入口供液的延迟段
    在该入口的泵关闭时推入等体积清水（inlet_flush），因此其中的染料只要芯片
    还在流动就会继续前进。

    Args:
        topo (ChipTopology): 芯片拓扑
    """

    def __init__(self, topo: ChipTopology):
        self.topo = topo
        self.node_names = tuple(n.name for n in topo.nodes if n.kind != NodeKind.CHANNEL)
        self._index = {name: i for i, name in enumerate(self.node_names)}
        self._channels = [n for n in topo.nodes if n.kind == NodeKind.CHANNEL]
        self._feed = {}
        for ch in self._channels:
            self._feed[ch.name] = next(e for e in topo.edges if e.target == ch.name)
        self._order = topo.topological_order()
        self._plans: Dict[Tuple, _FlowPlan] = {}
        self.reset()

    def reset(self):
        """回到充满清水的初始状态"""
        self._c = np.zeros((len(self.node_names), 3))
        self._volumes = {ch.name: np.zeros(ch.delay_frames) for ch in self._channels}
        self._parcels = {ch.name: np.zeros((ch.delay_frames, 3)) for ch in self._channels}
        self._heads = {ch.name: 0 for ch in self._channels}
        self.frame = 0
        self.injected_mass = np.zeros(3)

    @property
    def state(self) -> ChipState:
        return ChipState(self.node_names, self._c.copy(), self.frame)

    def total_dye_mass(self) -> np.ndarray:
        """芯片内（含延迟段）各染料总量，腔体体积记为 1"""
        mass = self._c.sum(axis=0)
        for name, parcels in self._parcels.items():
            mass = mass + self._volumes[name] @ parcels
        return mass

    def _plan(self, active: Tuple[bool, bool, bool], released: Tuple[float, ...]) -> _FlowPlan:
        key = (active, released)
        if key in self._plans:
            return self._plans[key]
        topo = self.topo
        n = len(self.node_names)
        inflow = {name: 0.0 for name in self._order}
        transition = np.eye(n)
        source = np.zeros((n, 3))
        channel_in, channel_fed = {}, {}
        channel_out = {ch.name: np.zeros(n) for ch in self._channels}
        released_by = {ch.name: v for ch, v in zip(self._channels, released)}

        for name in self._order:
            node = topo.node(name)
            if node.kind == NodeKind.INLET:
                volume = topo.inlet_gain if active[node.dye] else 0.0
                source[self._index[name], node.dye] = volume
            elif node.kind == NodeKind.CHANNEL:
                feed = self._feed[name]
                channel_in[name], channel_fed[name] = inflow[name], inflow[name] > 0.0
                if not channel_fed[name] and topo.inlet_flush and topo.node(feed.source).kind == NodeKind.INLET:
                    channel_in[name] = topo.inlet_gain * feed.coefficient
                volume = released_by[name]
            else:
                volume = inflow[name]
            if volume == 0.0:
                continue
            if name in self._index:
                i = self._index[name]
                transition[i, i] -= volume
            for e in topo.edges:
                if e.source != name or e.coefficient == 0.0:
                    continue
                v = volume * e.coefficient
                inflow[e.target] += v
                if e.target not in self._index:
                    continue
                j = self._index[e.target]
                if name in self._index:
                    transition[j, self._index[name]] += v
                else:
                    channel_out[name][j] += v

        plan = _FlowPlan(
            transition=transition,
            source=source,
            channel_in=channel_in,
            channel_fed=channel_fed,
            channel_out=channel_out,
        )
        self._plans[key] = plan
        return plan

    def step(self, active: Sequence[bool]):
        """
        推进一帧

        Args:
            active: 红/绿/蓝三个泵本帧是否开启
        """
        key = tuple(bool(a) for a in active)
        self.frame += 1
        if not any(key):
            return
        released = tuple(float(self._volumes[ch.name][self._heads[ch.name]]) for ch in self._channels)
        plan = self._plan(key, released)
        prev = self._c
        new = plan.transition @ prev + plan.source
        for ch in self._channels:
            name = ch.name
            head = self._heads[name]
            volumes, parcels = self._volumes[name], self._parcels[name]
            if volumes[head] > 0.0:
                new += np.outer(plan.channel_out[name], parcels[head])
            volumes[head] = plan.channel_in[name]
            if plan.channel_fed[name]:
                parcels[head] = prev[self._index[self._feed[name].source]]
            else:
                parcels[head] = 0.0
            self._heads[name] = (head + 1) % ch.delay_frames
        np.clip(new, 0.0, 1.0, out=new)
        self._c = new
        self.injected_mass = self.injected_mass + plan.source.sum(axis=0)


def default_topology() -> ChipTopology:
    """
    缺省芯片拓扑

    红色入口 → 延迟段 → prop_4，主要流向 out_7/D1；绿色从 prop_5 分散到三个
    出口腔；蓝色从 prop_6 主要流向 out_9，再经一段较短的延迟段到达 D3。
    三路在 out_8/D2 汇合。

    Returns:
        ChipTopology: 满足全部拓扑不变式的网络
    """
    cfg = ReservoirConfig
    nodes = [
        ChipNode(name="inlet_R", kind=NodeKind.INLET, dye=0),
        ChipNode(name="inlet_G", kind=NodeKind.INLET, dye=1),
        ChipNode(name="inlet_B", kind=NodeKind.INLET, dye=2),
        ChipNode(name="channel_R", kind=NodeKind.CHANNEL, delay_frames=cfg.DEFAULT_RED_DELAY_FRAMES),
        ChipNode(name="prop_4", kind=NodeKind.CHAMBER),
        ChipNode(name="prop_5", kind=NodeKind.CHAMBER),
        ChipNode(name="prop_6", kind=NodeKind.CHAMBER),
        ChipNode(name="out_7", kind=NodeKind.CHAMBER),
        ChipNode(name="out_8", kind=NodeKind.CHAMBER),
        ChipNode(name="out_9", kind=NodeKind.CHAMBER),
        ChipNode(name="channel_9", kind=NodeKind.CHANNEL, delay_frames=cfg.DEFAULT_D3_DELAY_FRAMES),
        ChipNode(name="det_D1", kind=NodeKind.DETECTION, area="D1"),
        ChipNode(name="det_D2", kind=NodeKind.DETECTION, area="D2"),
        ChipNode(name="det_D3", kind=NodeKind.DETECTION, area="D3"),
        ChipNode(name="outlet_10", kind=NodeKind.OUTLET),
        ChipNode(name="outlet_11", kind=NodeKind.OUTLET),
        ChipNode(name="outlet_12", kind=NodeKind.OUTLET),
    ]
    links = [
        ("inlet_R", "channel_R", 1.0),
        ("channel_R", "prop_4", 1.0),
        ("inlet_G", "prop_5", 1.0),
        ("inlet_B", "prop_6", 1.0),
        ("prop_4", "out_7", 0.5),
        ("prop_4", "out_8", 0.2),
        ("prop_4", "out_9", 0.3),
        ("prop_5", "out_7", 0.3),
        ("prop_5", "out_8", 0.4),
        ("prop_5", "out_9", 0.3),
        ("prop_6", "out_7", 0.15),
        ("prop_6", "out_8", 0.25),
        ("prop_6", "out_9", 0.6),
        ("out_7", "det_D1", 1.0),
        ("out_8", "det_D2", 1.0),
        ("out_9", "channel_9", 1.0),
        ("channel_9", "det_D3", 1.0),
        ("det_D1", "outlet_10", 1.0),
        ("det_D2", "outlet_11", 1.0),
        ("det_D3", "outlet_12", 1.0),
    ]
    edges = [ChipEdge(source=s, target=t, coefficient=k) for s, t, k in links]
    return ChipTopology(nodes=nodes, edges=edges)


def _check_length(schedule: InjectionSchedule):
    expected = PatternConfig.total_frames()
    if len(schedule) != expected:
        raise DimensionError(f"schedule has {len(schedule)} frames, expected {expected}")


def simulate_concentrations(schedule: InjectionSchedule, topo: ChipTopology) -> ConcentrationTrace:
    """
    逐帧浓度轨迹（第 t 帧为该帧更新之后的状态）

    Args:
        schedule (InjectionSchedule): 泵时序
        topo (ChipTopology): 芯片拓扑

    Returns:
        ConcentrationTrace: 全部非延迟段节点的浓度
    """
    _check_length(schedule)
    sim = CompartmentSimulator(topo)
    values = np.empty((len(schedule), len(sim.node_names), 3))
    for t, active in enumerate(schedule.frames):
        sim.step(active)
        values[t] = sim._c
    return ConcentrationTrace(sim.node_names, values)


def readings(concentrations: np.ndarray, optics: OpticsConfig) -> np.ndarray:
    """
    浓度 → RGB 读数

    value = baseline − (baseline − floor) × clamp(Σ_d α[d][c]·c_d, 0, 1)

    Args:
        concentrations: (..., 3) 染料浓度
        optics (OpticsConfig): 光学配置

    Returns:
        np.ndarray: 与输入同形状的通道读数
    """
    absorbance = np.clip(concentrations @ optics.absorption(), 0.0, 1.0)
    return optics.baseline - optics.value_range * absorbance


def simulate(schedule: InjectionSchedule, topo: Optional[ChipTopology] = None,
             optics: Optional[OpticsConfig] = None,
             label: Optional[Tuple[str, int]] = None) -> SignalRecord:
    """
    把注入时序转换为九路检测信号（确定性，无随机数）

    Args:
        schedule (InjectionSchedule): 1800 帧泵时序
        topo (ChipTopology, optional): 芯片拓扑，默认 default_topology()
        optics (OpticsConfig, optional): 光学配置
        label (tuple, optional): (类别, 变体号)

    Returns:
        SignalRecord: 信号记录

    Raises:
        DimensionError: 时序长度不是 1800
    """
    topo = topo or default_topology()
    optics = optics or OpticsConfig()
    _check_length(schedule)
    sim = CompartmentSimulator(topo)
    det_idx = [sim.node_names.index(n) for n in topo.detection_nodes()]
    det = np.empty((len(schedule), len(det_idx), 3))
    for t, active in enumerate(schedule.frames):
        sim.step(active)
        det[t] = sim._c[det_idx]
    signals = readings(det, optics).transpose(1, 2, 0)
    class_label, variant_id = label if label else (None, None)
    return SignalRecord(
        class_label=class_label,
        variant_id=variant_id,
        signals=signals,
        baseline=optics.baseline,
        floor=optics.floor,
        config_hash=chip_config_hash(topo, optics),
    )


def chip_config_hash(topo: ChipTopology, optics: OpticsConfig, **extra) -> str:
    """拓扑 + 光学 (+ 噪声参数) 的配置哈希"""
    payload = {"topology": topo.model_dump(mode="json"), "optics": optics.model_dump(mode="json")}
    payload.update(extra)
    return config_hash(payload)


def run_corpus(corpus: Sequence[Pattern], topo: Optional[ChipTopology] = None,
               optics: Optional[OpticsConfig] = None, noise_sigma: float = 0.0,
               seed: Optional[int] = None, workers: Optional[int] = None) -> List[SignalRecord]:
    """
    批量模拟语料

    Args:
        corpus: 图案列表
        topo, optics: 芯片与光学配置
        noise_sigma (float): 传感器偏移噪声标准差；每条记录每路信号一个偏移
        seed (int, optional): 噪声种子（noise_sigma > 0 时必需）
        workers (int, optional): 并行线程数，结果与线程数无关

    Returns:
        list: 与 corpus 顺序一致的 SignalRecord
    """
    topo = topo or default_topology()
    optics = optics or OpticsConfig()
    workers = workers or ReservoirConfig.WORKERS
    if noise_sigma < 0:
        raise DataError("noise_sigma must be non-negative")
    if noise_sigma > 0 and seed is None:
        raise DataError("sensor noise needs a seed")
    chash = chip_config_hash(topo, optics, noise_sigma=noise_sigma, seed=seed)

    def _one(i: int) -> SignalRecord:
        p = corpus[i]
        rec = simulate(encode_schedule(p), topo, optics, label=p.key)
        signals = rec.signals
        if noise_sigma > 0:
            offsets = record_rng(seed, i).normal(0.0, noise_sigma, size=signals.shape[:2])
            signals = np.clip(signals + offsets[:, :, None], optics.floor, optics.baseline)
        return rec.with_signals(signals, seed=seed, config_hash=chash)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_one, range(len(corpus))))
    else:
        records = [_one(i) for i in range(len(corpus))]
    logger.info("simulated %d records (noise sigma=%s, workers=%d)", len(records), noise_sigma, workers)
    return records
