import json

import numpy as np
import pytest
from pydantic import ValidationError

from common.errors import ConfigError, DataError, DimensionError
from patterns.utils.pattern_corpus import InjectionSchedule, Pattern, encode_schedule, find_pattern
from reservoir_sim.utils.config import ChipTopology, OpticsConfig, load_chip_config
from reservoir_sim.utils.reservoir_simulator import (
    CompartmentSimulator,
    SignalRecord,
    default_topology,
    run_corpus,
    simulate,
    simulate_concentrations,
)

R, G, B = 0, 1, 2
D1, D2, D3 = 0, 1, 2


def _schedule(rows):
    return encode_schedule(Pattern.from_rows(rows, "P1", 1))


def test_all_off_schedule_stays_at_baseline(grid_record):
    rec = grid_record(["00000"] * 3)
    assert rec.signals.shape == (3, 3, 1800)
    assert np.all(rec.signals == 120.0)


def test_idle_tail_is_constant(clean_signals):
    for rec in clean_signals:
        tail = rec.signals[:, :, 1500:]
        assert np.all(tail == tail[:, :, :1])


def test_signals_within_optical_range(clean_signals):
    for rec in clean_signals:
        assert rec.signals.min() >= 40.0
        assert rec.signals.max() <= 120.0


def test_red_only_reaches_detection_after_delay(grid_record):
    rec = grid_record(["11111", "00000", "00000"])
    assert np.all(rec.signals[:, :, :600] == 120.0)
    # 红色染料不吸收红光，绿/蓝通道在 D1 明显下降
    assert rec.signals[D1, G, 1499] < 120.0
    assert rec.signals[D1, B, 1499] < 120.0
    assert rec.signals[D1, R, 1499] >= 0.98 * 120.0


def test_red_concentration_delay_in_trace():
    trace = simulate_concentrations(_schedule(["11111", "00000", "00000"]), default_topology())
    assert trace.at(599, "prop_4")[R] == 0.0
    assert trace.at(1499, "prop_4")[R] > 0.5


def test_red_only_dominance():
    trace = simulate_concentrations(_schedule(["11111", "00000", "00000"]), default_topology())
    red = [trace.at(1499, node)[R] for node in ("det_D1", "det_D2", "det_D3")]
    assert red[D1] > red[D2] > 0.0
    assert red[D1] > red[D3] > 0.0


def test_blue_only_dominates_d3(grid_record):
    rec = grid_record(["00000", "00000", "11111"])
    drop = 120.0 - rec.signals[:, R, 1499]
    assert drop[D3] > drop[D2] > drop[D1]


def test_all_dyes_mix_at_d2():
    trace = simulate_concentrations(_schedule(["11111"] * 3), default_topology())
    assert np.all(trace.at(1499, "det_D2") > 0.0)


def test_outflow_displaces_resident_dye():
    # 绿色第 0、1 时隙，红色第 2..4 时隙：红色通道先推出清水再推出红色，稀释下游的绿色
    trace = simulate_concentrations(_schedule(["00111", "11000", "00000"]), default_topology())
    for node in ("out_7", "det_D1", "out_8", "det_D2"):
        assert trace.at(599, node)[G] > 0.0
        assert trace.at(1199, node)[G] < trace.at(599, node)[G]
        assert trace.at(1499, node)[G] < trace.at(1199, node)[G]
    assert trace.at(1499, "out_7")[R] > 0.0


def test_red_advances_while_other_pumps_run():
    # 红色只在第 0 时隙注入；之后只有绿泵开启，红色仍按流动帧计满延迟后到达
    trace = simulate_concentrations(_schedule(["10000", "01100", "00000"]), default_topology())
    assert trace.at(599, "prop_4")[R] == 0.0
    assert trace.at(899, "prop_4")[R] > 0.5
    assert trace.at(899, "out_7")[R] > 0.0


def test_pu_v1_shows_red_downstream(corpus):
    trace = simulate_concentrations(encode_schedule(find_pattern(corpus, "PU", 1)), default_topology())
    assert trace.at(599, "prop_4")[R] == 0.0
    assert trace.at(899, "prop_4")[R] > 0.5
    assert trace.at(899, "out_7")[R] > 0.1
    assert trace.at(1499, "det_D1")[R] > 0.0


def test_single_red_slot_changes_signals():
    a = simulate(_schedule(["10000", "11111", "00000"]))
    b = simulate(_schedule(["11000", "11111", "00000"]))
    assert not np.array_equal(a.signals, b.signals)


def test_corpus_signals_are_distinct(clean_signals):
    seen = {}
    for rec in clean_signals:
        key = rec.signals.tobytes()
        assert key not in seen, f"{rec.name} duplicates {seen.get(key)}"
        seen[key] = rec.name


def test_inlet_flush_pushes_red_out_of_prop_4():
    sched = _schedule(["11000", "00111", "00000"])
    flushed = simulate_concentrations(sched, default_topology())
    assert flushed.at(1199, "prop_4")[R] > 0.5
    assert flushed.at(1499, "prop_4")[R] < flushed.at(1199, "prop_4")[R]

    still = default_topology().model_copy(update={"inlet_flush": False})
    held = simulate_concentrations(sched, still)
    assert held.at(1199, "prop_4")[R] > 0.5
    assert held.at(1499, "prop_4")[R] == held.at(1199, "prop_4")[R]


def test_idle_frames_retain_state():
    sim = CompartmentSimulator(default_topology())
    for _ in range(200):
        sim.step((False, True, True))
    before = sim.state.concentrations
    for _ in range(100):
        sim.step((False, False, False))
    assert np.array_equal(sim.state.concentrations, before)
    assert sim.frame == 300


def test_concentrations_bounded_and_mass_conserved():
    sim = CompartmentSimulator(default_topology())
    frames = _schedule(["10110", "01101", "11011"]).frames
    for active in frames:
        sim.step(active)
        c = sim.state.concentrations
        assert c.min() >= 0.0 and c.max() <= 1.0
        assert np.all(sim.total_dye_mass() <= sim.injected_mass + 1e-9)


def test_simulation_is_repeatable(corpus):
    sched = encode_schedule(find_pattern(corpus, "PN", 1))
    a, b = simulate(sched), simulate(sched)
    assert np.array_equal(a.signals, b.signals)
    assert a.config_hash == b.config_hash


def test_schedule_length_must_be_1800():
    with pytest.raises(DimensionError):
        simulate(InjectionSchedule(frames=np.zeros((1799, 3), dtype=bool)))


def test_blue_green_crosstalk_raises_green_at_d3():
    sched = _schedule(["00000", "00000", "11111"])
    plain = simulate(sched)
    leaky = simulate(sched, optics=OpticsConfig(blue_green_crosstalk=0.5))
    assert leaky.signals[D3, G, 1499] > plain.signals[D3, G, 1499]
    assert leaky.signals[D3, R, 1499] == plain.signals[D3, R, 1499]


def test_noise_is_seeded_and_worker_independent(corpus):
    subset = corpus[::10]
    a = run_corpus(subset, noise_sigma=2.0, seed=7, workers=1)
    b = run_corpus(subset, noise_sigma=2.0, seed=7, workers=3)
    c = run_corpus(subset, noise_sigma=2.0, seed=8, workers=1)
    for x, y in zip(a, b):
        assert np.array_equal(x.signals, y.signals)
    assert any(not np.array_equal(x.signals, z.signals) for x, z in zip(a, c))


def test_noise_is_one_offset_per_series(corpus, clean_signals):
    noisy = run_corpus(corpus[:1], noise_sigma=2.0, seed=3)[0]
    diff = noisy.signals - clean_signals[0].signals
    inside = (noisy.signals > 40.0) & (noisy.signals < 120.0)
    assert np.all(noisy.signals <= 120.0)
    for area in range(3):
        for ch in range(3):
            kept = diff[area, ch][inside[area, ch]]
            if kept.size:
                assert np.ptp(kept) < 1e-9


def test_noise_requires_seed(corpus):
    with pytest.raises(DataError):
        run_corpus(corpus[:1], noise_sigma=1.0)


def test_run_corpus_preserves_labels(corpus, clean_signals):
    assert [(r.class_label, r.variant_id) for r in clean_signals] == [p.key for p in corpus]


def _topology_payload():
    return default_topology().model_dump(mode="json")


def test_topology_rejects_cycle():
    payload = _topology_payload()
    payload["edges"].append({"source": "det_D1", "target": "out_7", "coefficient": 0.0})
    with pytest.raises(ValidationError, match="cycle"):
        ChipTopology(**payload)


def test_topology_rejects_outflow_above_one():
    payload = _topology_payload()
    payload["edges"].append({"source": "prop_4", "target": "out_9", "coefficient": 0.5})
    with pytest.raises(ValidationError, match="sum to"):
        ChipTopology(**payload)


def test_topology_needs_three_detection_areas():
    payload = _topology_payload()
    for node in payload["nodes"]:
        if node["name"] == "det_D3":
            node["area"] = "D2"
    with pytest.raises(ValidationError, match="detection areas"):
        ChipTopology(**payload)


def test_topology_channel_needs_single_feeder():
    payload = _topology_payload()
    payload["edges"].append({"source": "prop_5", "target": "channel_9", "coefficient": 0.0})
    with pytest.raises(ValidationError, match="exactly one node"):
        ChipTopology(**payload)


def test_topology_rejects_channel_fed_by_channel():
    payload = _topology_payload()
    for edge in payload["edges"]:
        if edge["target"] == "channel_9":
            edge["source"], edge["coefficient"] = "channel_R", 0.0
    with pytest.raises(ValidationError, match="cannot be fed by channel"):
        ChipTopology(**payload)


def test_signal_record_optical_range():
    signals = np.full((3, 3, 10), 100.0)
    signals[0, 0, 0] = 130.0
    with pytest.raises(DataError, match="optical range"):
        SignalRecord(class_label="P1", variant_id=1, signals=signals)
    assert SignalRecord(class_label="P1", variant_id=1, signals=signals, synthetic=True).signals.max() == 130.0
    balanced = SignalRecord(class_label="P1", variant_id=1, signals=signals, metadata={"white_balanced": True})
    assert balanced.signals.max() == 130.0
    signals[0, 0, 0] = 300.0
    with pytest.raises(DataError, match="raw range"):
        SignalRecord(class_label="P1", variant_id=1, signals=signals, synthetic=True)


def test_optics_rejects_inverted_range():
    with pytest.raises(ValidationError):
        OpticsConfig(baseline=40.0, floor=120.0)


def test_load_chip_config_defaults_and_errors(tmp_path):
    topo, optics = load_chip_config(None)
    assert optics.baseline == 120.0
    assert topo.detection_nodes() == ["det_D1", "det_D2", "det_D3"]

    with pytest.raises(ConfigError, match="not found"):
        load_chip_config(str(tmp_path / "missing.json"))

    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_chip_config(str(broken))

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"optics": {"blue_green_crosstalk": 2.0}}), encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid"):
        load_chip_config(str(bad))


def test_load_chip_config_optics_only(tmp_path):
    path = tmp_path / "chip.json"
    path.write_text(json.dumps({"optics": {"baseline": 200.0, "floor": 20.0}}), encoding="utf-8")
    topo, optics = load_chip_config(str(path))
    assert optics.value_range == 180.0
    assert len(topo.nodes) == len(default_topology().nodes)
