"""
可训练的 softmax 读出层

单层全连接 + softmax，one-hot 目标，交叉熵损失，全批量 Adam，
训练损失平台期早停；集成训练只改变权重初始化种子。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from augmentation.utils.gaussian_augmenter import assert_real_only
from common.errors import BalanceError, ConfigError, DataError, DimensionError, DivergenceError
from common.seeding import config_hash, member_seeds
from patterns.utils.config import PatternConfig
from signal_processing.utils.signal_processor import QuantizedRecord, normalize_global
from .config import ReadoutConfig, TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class ReadoutModel:
    """
    读出层参数

    Attributes:
        weights: (n_features, n_classes)
        bias: (n_classes,)
        scalar: 训练时的全局归一化标量；预测时原始特征先除以它
        epochs_trained: 实际训练轮数
        seed: 权重初始化种子
        classes: 输出节点对应的类别
    """

    weights: np.ndarray
    bias: np.ndarray
    scalar: float = 1.0
    epochs_trained: int = 0
    seed: int = 0
    classes: Tuple[str, ...] = PatternConfig.CLASS_LABELS
    q: Optional[int] = None
    series: Tuple[str, ...] = ()
    config_hash: Optional[str] = None

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.weights.size)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """原始（未归一化）特征 → 各类别概率"""
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimensionError(f"model expects {self.n_features} features, got {x.shape[1]}")
        return softmax(x / self.scalar @ self.weights + self.bias)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(features), axis=1)

    def to_dict(self) -> Dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "scalar": self.scalar,
            "epochs_trained": self.epochs_trained,
            "seed": self.seed,
            "classes": list(self.classes),
            "q": self.q,
            "series": list(self.series),
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "ReadoutModel":
        try:
            return cls(
                weights=np.asarray(payload["weights"], dtype=float),
                bias=np.asarray(payload["bias"], dtype=float),
                scalar=float(payload["scalar"]),
                epochs_trained=int(payload.get("epochs_trained", 0)),
                seed=int(payload.get("seed", 0)),
                classes=tuple(payload.get("classes", PatternConfig.CLASS_LABELS)),
                q=payload.get("q"),
                series=tuple(payload.get("series", ())),
                config_hash=payload.get("config_hash"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed model payload: {e}")


@dataclass
class EvalReport:
    """
    测试集评估结果

    Attributes:
        accuracy: 百分比
        confusion: 行 = 真实类别，列 = 预测类别
        misclassified: 类别 → [(变体号, 预测类别), ...]
    """

    accuracy: float
    confusion: np.ndarray
    classes: Tuple[str, ...]
    misclassified: Dict[str, List[Tuple[int, str]]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "accuracy": self.accuracy,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "misclassified": {k: [list(v) for v in vs] for k, vs in self.misclassified.items()},
        }


@dataclass
class EnsembleReport:
    """n 个只差初始化种子的模型在同一测试集上的准确率统计"""

    accuracies: List[float]
    seeds: List[int]
    best: EvalReport
    epochs: List[int] = field(default_factory=list)
    scalar: float = 1.0
    config_hash: Optional[str] = None
    # 准确率最高的成员模型，不写入 to_dict
    best_model: Optional[ReadoutModel] = field(default=None, repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def min(self) -> float:
        return float(np.min(self.accuracies))

    @property
    def max(self) -> float:
        return float(np.max(self.accuracies))

    def to_dict(self) -> Dict:
        return {
            "n_models": len(self.accuracies),
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "accuracies": list(self.accuracies),
            "seeds": list(self.seeds),
            "epochs": list(self.epochs),
            "scalar": self.scalar,
            "config_hash": self.config_hash,
            "best": self.best.to_dict(),
        }


class Adam:
    """Adam 优化器（带偏差修正）"""

    def __init__(self, params: Sequence[np.ndarray], lr: float, b1: float, b2: float, eps: float):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
        """原地更新 params"""
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g ** 2
            m_hat = self.m[i] / (1 - self.b1 ** self.t)
            v_hat = self.v[i] / (1 - self.b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def softmax(z: np.ndarray) -> np.ndarray:
    """逐行数值稳定的 softmax"""
    z = np.atleast_2d(z)
    e = np.exp(z - np.max(z, axis=1, keepdims=True))
    return e / np.sum(e, axis=1, keepdims=True)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def loss_and_gradients(weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray):
    """
    平均交叉熵及其解析梯度

    Args:
        weights: (f, C)
        bias: (C,)
        x: (n, f) 特征
        y: (n, C) one-hot 目标

    Returns:
        tuple: (loss, dW, db)
    """
    n = x.shape[0]
    probs = softmax(x @ weights + bias)
    loss = -np.sum(y * np.log(np.clip(probs, 1e-300, None))) / n
    delta = (probs - y) / n
    return float(loss), x.T @ delta, delta.sum(axis=0)


def design_matrix(records: Sequence[QuantizedRecord], classes: Sequence[str]):
    """记录列表 → (X, 类别序号)"""
    if not records:
        raise DataError("empty record set")
    widths = {r.features.size for r in records}
    if len(widths) != 1:
        raise DimensionError(f"records have mixed feature counts: {sorted(widths)}")
    unknown = {r.class_label for r in records} - set(classes)
    if unknown:
        raise DataError(f"records with unknown classes: {sorted(unknown)}")
    x = np.vstack([r.features for r in records])
    y = np.array([list(classes).index(r.class_label) for r in records])
    return x, y


def split(records: Sequence[QuantizedRecord], records_per_pattern: int, seed: int):
    """
    固定测试集的训练/测试划分

    测试集为每类 6 个变体（只由 seed 决定，不随 records_per_pattern 变化）；
    训练集从其余 4 个变体中按同一随机顺序取前 records_per_pattern 个。

    Args:
        records: 80 条真实量化记录
        records_per_pattern (int): 1..4
        seed (int): 划分种子

    Returns:
        tuple: (train, test)，均按类别、变体号排序
    """
    if records_per_pattern not in ReadoutConfig.RECORDS_PER_PATTERN:
        raise ConfigError(
            f"records_per_pattern must be in {ReadoutConfig.RECORDS_PER_PATTERN}, got {records_per_pattern}"
        )
    assert_real_only(records, "corpus")
    rng = np.random.default_rng(int(seed))
    n_test = ReadoutConfig.TEST_VARIANTS_PER_CLASS
    train, test = [], []
    for label in PatternConfig.CLASS_LABELS:
        members = sorted((r for r in records if r.class_label == label), key=lambda r: r.variant_id)
        if len(members) != PatternConfig.VARIANTS_PER_CLASS:
            raise DataError(
                f"class {label} has {len(members)} records, expected {PatternConfig.VARIANTS_PER_CLASS}"
            )
        order = rng.permutation(len(members))
        test_idx = sorted(order[:n_test])
        train_idx = sorted(order[n_test:][:records_per_pattern])
        test.extend(members[i] for i in test_idx)
        train.extend(members[i] for i in train_idx)
    return train, test


def train(train_set: Sequence[QuantizedRecord], cfg: TrainConfig, scalar: float = 1.0,
          classes: Sequence[str] = PatternConfig.CLASS_LABELS) -> ReadoutModel:
    """
    全批量 Adam 训练 softmax 读出层

    Args:
        train_set: 已归一化的训练记录，每个类别至少一条
        cfg (TrainConfig): 训练参数
        scalar (float): 归一化标量，写入模型供预测使用
        classes: 输出节点顺序

    Returns:
        ReadoutModel: 训练好的模型

    Raises:
        DivergenceError: 损失出现 NaN/Inf
    """
    x, y_idx = design_matrix(train_set, classes)
    missing = [c for i, c in enumerate(classes) if not np.any(y_idx == i)]
    if missing:
        raise BalanceError(f"training set has no records for {missing}")
    y = one_hot(y_idx, len(classes))

    rng = np.random.default_rng(cfg.seed)
    weights = rng.uniform(-cfg.init_range, cfg.init_range, size=(x.shape[1], len(classes)))
    bias = np.zeros(len(classes))
    opt = Adam([weights, bias], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    best_loss = np.inf
    wait = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        loss, d_w, d_b = loss_and_gradients(weights, bias, x, y)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, stage="train")
        opt.step([weights, bias], [d_w, d_b])
        if loss < best_loss - cfg.min_delta:
            best_loss = loss
            wait = 0
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                logger.debug("early stop at epoch %d (loss %.6f)", epoch, loss)
                break

    first = train_set[0]
    return ReadoutModel(
        weights=weights,
        bias=bias,
        scalar=float(scalar),
        epochs_trained=epoch,
        seed=cfg.seed,
        classes=tuple(classes),
        q=first.q,
        series=first.series,
        config_hash=config_hash(cfg),
    )


def evaluate(model: ReadoutModel, test_set: Sequence[QuantizedRecord]) -> EvalReport:
    """
    argmax 分类并统计混淆矩阵

    Args:
        model (ReadoutModel): 模型
        test_set: 原始量化测试记录（只能是真实记录）

    Returns:
        EvalReport: 准确率、混淆矩阵、误分类变体
    """
    if not test_set:
        raise DataError("cannot evaluate on an empty test set")
    assert_real_only(test_set, "test")
    x, y = design_matrix(test_set, model.classes)
    pred = model.predict(x)
    k = len(model.classes)
    confusion = np.zeros((k, k), dtype=int)
    misclassified: Dict[str, List[Tuple[int, str]]] = {}
    for rec, t, p in zip(test_set, y, pred):
        confusion[t, p] += 1
        if t != p:
            misclassified.setdefault(rec.class_label, []).append((rec.variant_id, model.classes[p]))
    accuracy = 100.0 * float(np.trace(confusion)) / len(test_set)
    return EvalReport(accuracy=accuracy, confusion=confusion, classes=model.classes,
                      misclassified=misclassified)


def train_ensemble(train_set: Sequence[QuantizedRecord], test_set: Sequence[QuantizedRecord],
                   cfg: TrainConfig, n_models: int = ReadoutConfig.N_MODELS, scalar: float = 1.0,
                   workers: int = 1) -> EnsembleReport:
    """
    训练 n_models 个只差初始化种子的模型

    Args:
        train_set: 已归一化训练集
        test_set: 原始测试集
        cfg (TrainConfig): cfg.seed 为集成主种子，成员种子由它派生
        n_models (int): 模型数
        scalar (float): 归一化标量
        workers (int): 并行线程数，统计结果与之无关

    Returns:
        EnsembleReport: 均值/标准差/最小/最大准确率与每个成员的种子
    """
    if n_models < 1:
        raise ConfigError("n_models must be >= 1")
    seeds = member_seeds(cfg.seed, n_models)

    def _member(seed: int):
        model = train(train_set, cfg.model_copy(update={"seed": seed}), scalar=scalar)
        return model, evaluate(model, test_set)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_member, seeds))
    else:
        results = [_member(s) for s in seeds]

    accuracies = [rep.accuracy for _, rep in results]
    best_index = int(np.argmax(accuracies))
    best_model, best = results[best_index]
    report = EnsembleReport(
        accuracies=accuracies,
        seeds=seeds,
        best=best,
        epochs=[m.epochs_trained for m, _ in results],
        scalar=float(scalar),
        config_hash=config_hash(cfg),
        best_model=best_model,
    )
    logger.info("ensemble of %d: mean %.2f%% std %.2f", n_models, report.mean, report.std)
    return report


def fit_and_evaluate(train_raw: Sequence[QuantizedRecord], test_raw: Sequence[QuantizedRecord],
                     cfg: TrainConfig, n_models: int = ReadoutConfig.N_MODELS,
                     workers: int = 1) -> EnsembleReport:
    """训练集上求全局标量 → 集成训练 → 原始测试集评估"""
    normalized, scalar = normalize_global(train_raw)
    return train_ensemble(normalized, test_raw, cfg, n_models=n_models, scalar=scalar, workers=workers)
