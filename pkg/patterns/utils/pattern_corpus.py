"""
输入图案语料、注入时序编码与输入空间相似度
"""
import logging
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common.errors import CorpusLoadError, DataError
from common.pairwise import PairwiseMatrix, aggregate_by_class, pairwise_values
from .config import PatternConfig

logger = logging.getLogger(__name__)

_HEADER_RE = re.compile(r"^(\S+)\s+(\d+)$")
_ROW_RE = re.compile(r"^[01]+$")
_KEY_RE = re.compile(r"^([A-Za-z0-9]+?)(?::|_V)(\d+)$")


@dataclass(frozen=True)
class Pattern:
    """
    3×5 二值注入网格

    Attributes:
        grid: 行 = 红/绿/蓝，列 = 时隙
        class_label: 8 个类别之一
        variant_id: 1..10
    """

    grid: Tuple[Tuple[int, ...], ...]
    class_label: str
    variant_id: int

    def __post_init__(self):
        rows, cols = PatternConfig.ROWS, PatternConfig.COLS
        if len(self.grid) != rows or any(len(r) != cols for r in self.grid):
            raise DataError(f"pattern {self.class_label}:{self.variant_id} grid must be {rows}x{cols}")
        if any(cell not in (0, 1) for r in self.grid for cell in r):
            raise DataError(f"pattern {self.class_label}:{self.variant_id} grid must be binary")
        if self.class_label not in PatternConfig.CLASS_LABELS:
            raise DataError(f"unknown pattern class: {self.class_label}")
        if not 1 <= self.variant_id <= PatternConfig.VARIANTS_PER_CLASS:
            raise DataError(f"variant id out of range: {self.variant_id}")

    @classmethod
    def from_rows(cls, rows: Sequence[str], class_label: str, variant_id: int) -> "Pattern":
        """由 "10001" 形式的字符串行构造"""
        grid = tuple(tuple(int(ch) for ch in row) for row in rows)
        return cls(grid=grid, class_label=class_label, variant_id=int(variant_id))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.grid, dtype=np.int8)

    @property
    def name(self) -> str:
        return f"{self.class_label}_V{self.variant_id}"

    @property
    def key(self) -> Tuple[str, int]:
        return (self.class_label, self.variant_id)

    def rows(self) -> List[str]:
        return ["".join(str(c) for c in r) for r in self.grid]


@dataclass(frozen=True)
class InjectionSchedule:
    """
    逐帧泵状态

    Attributes:
        frames: (n_frames, 3) 布尔数组，列依次为红/绿/蓝泵
        frame_rate: 帧率
    """

    frames: np.ndarray
    frame_rate: int = PatternConfig.FRAME_RATE

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=bool)
        if frames.ndim != 2 or frames.shape[1] != PatternConfig.ROWS:
            raise DataError(f"schedule must have shape (n_frames, 3), got {frames.shape}")
        frames = frames.copy()
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]

    def pump_on(self, dye: int, frame: int) -> bool:
        return bool(self.frames[frame, dye])

    def decode_grid(self) -> np.ndarray:
        """
        按 300 帧时隙多数表决还原网格（编码在 0..1499 帧上可逆）

        Returns:
            np.ndarray: 3×5 二值数组
        """
        slot = PatternConfig.SLOT_FRAMES
        cols = PatternConfig.COLS
        blocks = self.frames[: cols * slot].reshape(cols, slot, PatternConfig.ROWS)
        return (blocks.sum(axis=1) * 2 > slot).T.astype(np.int8)


class SimilarityMatrix(PairwiseMatrix):
    """输入图案相似度矩阵（百分比，对角线 100）"""


def parse_fixtures(text: str, source: str = "<fixtures>") -> List[Pattern]:
    """
    解析夹具文本

    Args:
        text (str): 夹具文件内容
        source (str): 用于错误信息的来源名

    Returns:
        list: Pattern 列表（按文件顺序）

    Raises:
        CorpusLoadError: 条目格式错误时，信息中包含条目名与行号
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    patterns = []
    i = 0
    while i < len(lines):
        lineno, header = lines[i]
        m = _HEADER_RE.match(header)
        if not m:
            raise CorpusLoadError(f"{source}:{lineno}: expected '<class> <variant>', got {header!r}")
        entry = f"{m.group(1)} {m.group(2)}"
        rows = [ln for _, ln in lines[i + 1:i + 1 + PatternConfig.ROWS]]
        if len(rows) < PatternConfig.ROWS:
            raise CorpusLoadError(f"{source}:{lineno}: entry {entry} is truncated")
        for row in rows:
            if len(row) != PatternConfig.COLS or not _ROW_RE.match(row):
                raise CorpusLoadError(
                    f"{source}:{lineno}: entry {entry} has malformed row {row!r}"
                )
        try:
            patterns.append(Pattern.from_rows(rows, m.group(1), int(m.group(2))))
        except DataError as e:
            raise CorpusLoadError(f"{source}:{lineno}: entry {entry}: {e.message}")
        i += 1 + PatternConfig.ROWS
    return patterns


@lru_cache(maxsize=8)
def _load_corpus(path: str) -> Tuple[Pattern, ...]:
    if not os.path.exists(path):
        raise CorpusLoadError(f"pattern fixtures not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        patterns = parse_fixtures(f.read(), source=os.path.basename(path))

    seen = {}
    for p in patterns:
        if p.key in seen:
            raise CorpusLoadError(f"duplicate entry {p.class_label} {p.variant_id}")
        seen[p.key] = p
    expected = [(c, v) for c in PatternConfig.CLASS_LABELS
                for v in range(1, PatternConfig.VARIANTS_PER_CLASS + 1)]
    missing = [f"{c} {v}" for c, v in expected if (c, v) not in seen]
    if missing:
        raise CorpusLoadError(f"missing entry {missing[0]} ({len(missing)} missing)")
    logger.debug("loaded %d patterns from %s", len(patterns), path)
    return tuple(seen[k] for k in expected)


def canonical_corpus(path: Optional[str] = None) -> List[Pattern]:
    """
    读取 8 类 × 10 变体的标准语料

    Args:
        path (str, optional): 夹具文件路径，默认 PatternConfig.FIXTURES_FILE

    Returns:
        list: 80 个 Pattern，按类别顺序、变体号升序排列
    """
    return list(_load_corpus(os.path.abspath(path or PatternConfig.FIXTURES_FILE)))


def parse_pattern_key(text: str) -> Tuple[str, int]:
    """
    解析图案标识，接受 "PN:10" 与 "PN_V10" 两种写法

    Args:
        text (str): 图案标识

    Returns:
        tuple: (类别, 变体号)

    Raises:
        DataError: 格式无法识别
    """
    match = _KEY_RE.match(text.strip())
    if not match:
        raise DataError(f"pattern key must look like PN:10 or PN_V10, got {text!r}")
    return match.group(1), int(match.group(2))


def find_pattern(corpus: Sequence[Pattern], class_label: str, variant_id: int) -> Pattern:
    """按 (类别, 变体号) 查找图案"""
    for p in corpus:
        if p.class_label == class_label and p.variant_id == int(variant_id):
            return p
    raise DataError(f"pattern {class_label}:{variant_id} not in corpus")


def encode_schedule(p: Pattern) -> InjectionSchedule:
    """
    把网格展开为逐帧泵状态

    第 j 列占用帧 [300j, 300j+300)；最后 300 帧全部关闭。

    Args:
        p (Pattern): 输入图案

    Returns:
        InjectionSchedule: 1800 帧时序
    """
    slot = PatternConfig.SLOT_FRAMES
    active = np.repeat(p.array.T.astype(bool), slot, axis=0)
    idle = np.zeros((PatternConfig.IDLE_FRAMES, PatternConfig.ROWS), dtype=bool)
    return InjectionSchedule(frames=np.vstack([active, idle]))


def _agreement(a: np.ndarray, b: np.ndarray, shift: int) -> float:
    cols = a.shape[1]
    lo, hi = max(0, -shift), min(cols, cols - shift)
    if hi <= lo:
        return 0.0
    a_part = a[:, lo:hi]
    b_part = b[:, lo + shift:hi + shift]
    return 100.0 * float(np.count_nonzero(a_part == b_part)) / a_part.size


def pattern_similarity(a: Pattern, b: Pattern, max_over_shifts: bool = False) -> float:
    """
    网格逐格一致率（百分比）

    Args:
        a, b (Pattern): 待比较图案
        max_over_shifts (bool): 为 True 时在列平移 s ∈ {-2..2} 上取最大值，
            不重叠的列同时从分子和分母中排除

    Returns:
        float: [0, 100] 内的相似度
    """
    ga, gb = a.array, b.array
    if not max_over_shifts:
        return _agreement(ga, gb, 0)
    shifts = range(-PatternConfig.MAX_SHIFT, PatternConfig.MAX_SHIFT + 1)
    return max(_agreement(ga, gb, s) for s in shifts)


def similarity_matrix(corpus: Sequence[Pattern], by: str = "variant",
                      max_over_shifts: bool = False) -> SimilarityMatrix:
    """
    两两相似度矩阵

    Args:
        corpus: 非空图案列表
        by (str): "variant" 按单个图案，"class" 按类别取变体对均值
        max_over_shifts (bool): 是否在平移上取最大

    Returns:
        SimilarityMatrix: 对称、对角线为 100 的矩阵
    """
    if not corpus:
        raise DataError("similarity_matrix needs a non-empty corpus")
    if by not in ("variant", "class"):
        raise DataError(f"unknown aggregation: {by}")
    values = pairwise_values(
        list(corpus), lambda x, y: pattern_similarity(x, y, max_over_shifts), diagonal=100.0
    )
    if by == "variant":
        return SimilarityMatrix(values=values, labels=[p.name for p in corpus], by="variant")
    class_values, labels, within = aggregate_by_class(
        values, [p.class_label for p in corpus], PatternConfig.CLASS_LABELS, diagonal=100.0
    )
    return SimilarityMatrix(values=class_values, labels=labels, by="class", within=within)
