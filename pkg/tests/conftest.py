import numpy as np
import pytest

from common.seeding import STAGE_SENSOR_NOISE, derive_seed
from patterns.utils.pattern_corpus import Pattern, canonical_corpus, encode_schedule
from reservoir_sim.utils.config import ReservoirConfig
from reservoir_sim.utils.reservoir_simulator import SignalRecord, run_corpus, simulate
from signal_processing.utils.config import QuantizationConfig
from signal_processing.utils.signal_processor import QuantizedRecord, quantize_all


@pytest.fixture(scope="session")
def corpus():
    return canonical_corpus()


@pytest.fixture(scope="session")
def clean_signals(corpus):
    return run_corpus(corpus)


@pytest.fixture(scope="session")
def noisy_signals(corpus):
    return run_corpus(corpus, noise_sigma=2.0, seed=derive_seed(42, STAGE_SENSOR_NOISE))


@pytest.fixture(scope="session")
def quantized_q5_all(clean_signals):
    cfg = QuantizationConfig(q=5, areas=list(ReservoirConfig.DETECTION_AREAS))
    return quantize_all(clean_signals, cfg)


@pytest.fixture(scope="session")
def quantized_default(noisy_signals):
    return quantize_all(noisy_signals, QuantizationConfig())


@pytest.fixture
def grid_record():
    """由 3 行字符串网格直接模拟一条记录"""

    def _make(rows, label=("P1", 1)):
        p = Pattern.from_rows(rows, *label)
        return simulate(encode_schedule(p), label=p.key)

    return _make


@pytest.fixture
def make_signal():
    def _make(signals, label="P1", variant=1, **kw):
        signals = np.asarray(signals, dtype=float)
        # 超出缺省 [40, 120] 的人工信号按完整 8 位范围记录
        if signals.min() < ReservoirConfig.DEFAULT_FLOOR or signals.max() > ReservoirConfig.DEFAULT_BASELINE:
            kw.setdefault("floor", ReservoirConfig.RAW_MIN)
            kw.setdefault("baseline", ReservoirConfig.RAW_MAX)
        return SignalRecord(class_label=label, variant_id=variant, signals=signals, **kw)

    return _make


@pytest.fixture
def make_qrecord():
    def _make(features, label="P1", variant=1, q=1, series=None, synthetic=False):
        features = np.asarray(features, dtype=float)
        series = series or tuple(f"s{i}" for i in range(features.size // q))
        return QuantizedRecord(features=features, class_label=label, variant_id=variant,
                               q=q, series=tuple(series), synthetic=synthetic)

    return _make
