"""
两两比较矩阵（输入图案相似度、储层输出 MAD 共用）
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class PairwiseMatrix:
    """
    带行列标签的对称矩阵

    Attributes:
        values: 方阵
        labels: 行/列标签（variant 模式为 "PN_V10"，class 模式为 "PN"）
        by: "variant" 或 "class"
        within: class 模式下每个类别内部不同变体两两比较的均值
    """

    values: np.ndarray
    labels: List[str]
    by: str = "variant"
    within: Optional[np.ndarray] = field(default=None)

    def to_frame(self) -> pd.DataFrame:
        """转换为带行列标签的 DataFrame，便于写 CSV"""
        return pd.DataFrame(self.values, index=self.labels, columns=self.labels)

    def within_frame(self) -> Optional[pd.DataFrame]:
        if self.within is None:
            return None
        return pd.DataFrame({"within": self.within}, index=self.labels)


def pairwise_values(items: Sequence, fn: Callable, diagonal: float) -> np.ndarray:
    """
    计算对称两两矩阵，只对上三角调用 fn

    Args:
        items: 待比较对象
        fn: 二元比较函数
        diagonal: 对角线取值

    Returns:
        np.ndarray: n×n 矩阵
    """
    n = len(items)
    values = np.full((n, n), float(diagonal))
    for i in range(n):
        for j in range(i + 1, n):
            v = float(fn(items[i], items[j]))
            values[i, j] = v
            values[j, i] = v
    return values


def aggregate_by_class(values: np.ndarray, class_of: Sequence[str], class_order: Sequence[str],
                       diagonal: float):
    """
    把 variant 级矩阵按类别聚合

    跨类别条目取所有变体对的均值；对角线固定为 diagonal；
    类内离散度（不同变体两两比较的均值）单独返回。

    Returns:
        tuple: (class_values, class_labels, within)
    """
    class_of = np.asarray(class_of)
    labels = [c for c in class_order if np.any(class_of == c)]
    k = len(labels)
    out = np.full((k, k), float(diagonal))
    within = np.zeros(k)
    for i, ci in enumerate(labels):
        idx_i = np.flatnonzero(class_of == ci)
        block = values[np.ix_(idx_i, idx_i)]
        m = len(idx_i)
        if m > 1:
            within[i] = block[np.triu_indices(m, k=1)].mean()
        else:
            within[i] = float(diagonal)
        for j in range(i + 1, k):
            idx_j = np.flatnonzero(class_of == labels[j])
            v = values[np.ix_(idx_i, idx_j)].mean()
            out[i, j] = v
            out[j, i] = v
    return out, labels, within
