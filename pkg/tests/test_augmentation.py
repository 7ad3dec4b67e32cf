from collections import Counter
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from augmentation.utils.config import AugmentConfig
from augmentation.utils.gaussian_augmenter import (
    DataAugmenter,
    GaussianOffsetGenerator,
    assert_real_only,
    gaussian_augment,
    sigma_sweep,
    total_sweep,
)
from common.errors import BalanceError, ConfigError, DataError
from readout.utils.config import TrainConfig
from readout.utils.readout_trainer import fit_and_evaluate


@pytest.fixture(scope="module")
def train_32(quantized_default):
    return [r for r in quantized_default if r.variant_id <= 4]


def test_zero_sigma_copies_sources(train_32):
    out = gaussian_augment(train_32, AugmentConfig(sigma=0.0, target_total=64))
    for rec in out[32:]:
        assert rec.synthetic
        source = next(r for r in train_32 if r.key == rec.key)
        assert np.array_equal(rec.features, source.features)


def test_target_total_and_balance(train_32):
    out = gaussian_augment(train_32, AugmentConfig(sigma=8.0, target_total=200))
    assert len(out) == 200
    assert all(a is b for a, b in zip(out[:32], train_32))
    assert sum(r.synthetic for r in out) == 168
    assert set(Counter(r.class_label for r in out).values()) == {25}


def test_offset_statistics():
    gen = GaussianOffsetGenerator(sigma=8.0, seed=42)
    draws = np.concatenate([gen.offsets(i, 10) for i in range(1000)])
    assert draws.size == 10_000
    assert abs(draws.mean()) < 0.25
    assert 7.6 <= draws.std() <= 8.4


def test_whole_series_is_shifted_uniformly(train_32):
    out = gaussian_augment(train_32, AugmentConfig(sigma=8.0, target_total=100))
    for rec in out[32:]:
        source = next(r for r in train_32 if r.key == rec.key)
        delta = rec.blocks() - source.blocks()
        assert np.all(np.ptp(delta, axis=1) <= 1e-9)


def test_augment_is_deterministic(train_32):
    cfg = AugmentConfig(sigma=8.0, target_total=120, seed=5)
    a, b = gaussian_augment(train_32, cfg), gaussian_augment(train_32, cfg)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))
    c = gaussian_augment(train_32, cfg.model_copy(update={"seed": 6}))
    assert not all(np.array_equal(x.features, y.features) for x, y in zip(a[32:], c[32:]))


def test_missing_class_raises(train_32):
    partial = [r for r in train_32 if r.class_label != "PL"]
    with pytest.raises(BalanceError, match="PL"):
        gaussian_augment(partial, AugmentConfig(target_total=100))


def test_target_below_train_size(train_32):
    with pytest.raises(ConfigError):
        gaussian_augment(train_32, AugmentConfig(target_total=10))


def test_target_equal_to_train_adds_nothing(train_32):
    out = gaussian_augment(train_32, AugmentConfig(target_total=32))
    assert len(out) == 32
    assert not any(r.synthetic for r in out)


def test_synthetic_sources_rejected(train_32):
    out = gaussian_augment(train_32, AugmentConfig(target_total=40))
    with pytest.raises(DataError):
        gaussian_augment(out, AugmentConfig(target_total=80))


def test_unknown_generator(train_32):
    with pytest.raises(ConfigError, match="unknown generator"):
        DataAugmenter().augment(train_32, AugmentConfig(generator="mixup"))
    assert DataAugmenter().get_supported_generators() == ["gaussian"]


def test_assert_real_only(train_32):
    assert_real_only(train_32)
    fake = train_32[0].with_features(train_32[0].features, synthetic=True)
    with pytest.raises(DataError, match="test split"):
        assert_real_only([fake])


def _fake_trainer(train, test):
    return SimpleNamespace(mean=float(len(train)), std=0.0)


def test_sigma_sweep_rows(train_32, tmp_path):
    out = tmp_path / "sigma.csv"
    rows = sigma_sweep(train_32, train_32[:8], [1.0, 8.0, 30.0], _fake_trainer, target_total=64,
                       out_path=str(out))
    assert [r["sigma"] for r in rows] == [1.0, 8.0, 30.0]
    assert all(r["mean_accuracy"] == 64.0 for r in rows)
    assert list(pd.read_csv(out).columns) == ["sigma", "mean_accuracy", "std_accuracy"]


def test_sigma_sweep_with_trained_readout(train_32, quantized_default):
    test = [r for r in quantized_default if r.variant_id > 8]
    cfg = TrainConfig(max_epochs=20, seed=5)

    def trainer(train, test_set):
        return fit_and_evaluate(train, test_set, cfg, n_models=2)

    rows = sigma_sweep(train_32, test, [1.0, 8.0], trainer, target_total=48, seed=3)
    assert [r["sigma"] for r in rows] == [1.0, 8.0]
    for r in rows:
        assert 0.0 <= r["mean_accuracy"] <= 100.0
        assert r["std_accuracy"] >= 0.0
    assert sigma_sweep(train_32, test, [1.0, 8.0], trainer, target_total=48, seed=3) == rows


def test_total_sweep_rows(train_32):
    rows = total_sweep(train_32, train_32[:8], [32, 50, 100], _fake_trainer)
    assert [r["mean_accuracy"] for r in rows] == [32.0, 50.0, 100.0]


def test_sweep_rejects_synthetic_test(train_32):
    fake = train_32[0].with_features(train_32[0].features, synthetic=True)
    with pytest.raises(DataError):
        sigma_sweep(train_32, [fake], [8.0], _fake_trainer)
