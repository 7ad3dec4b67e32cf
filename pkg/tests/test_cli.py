import json

import numpy as np
import pytest

from common.base_pipeline import FluidPipeline, PipelineStage, RunConfig
from common.errors import ConfigError
from common.record_io import read_json, write_json, write_signal_record
from fluidrc import main, run_pipeline
from readout.utils import readout_trainer
from readout.utils.readout_trainer import ReadoutModel

SMALL = {"n_models": 2, "train": {"max_epochs": 30}}


@pytest.fixture(scope="module")
def bundles(tmp_path_factory):
    base = tmp_path_factory.mktemp("bundles")
    first = run_pipeline(str(base / "a"), workers=1, **SMALL)
    second = run_pipeline(str(base / "b"), workers=2, **SMALL)
    return base / "a", base / "b", first, second


def test_pipeline_succeeds(bundles):
    a, _, first, _ = bundles
    assert first["success"], first["error_msg"]
    assert first["output_path"] == str(a)
    for name in ("report.json", "report.md", "report.html", "manifest.json", "mi_q2.csv",
                 "similarity_class.csv", "mad_class.csv", "quantized/test.csv"):
        assert (a / name).exists(), name
    assert len(list((a / "signals").glob("*.csv"))) == 80


def test_pipeline_is_byte_identical_across_workers(bundles):
    a, b, first, second = bundles
    files_a = sorted(p.relative_to(a).as_posix() for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b).as_posix() for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert first["metadata"]["config_hash"] == second["metadata"]["config_hash"]


def test_report_contents(bundles):
    a, _, first, _ = bundles
    report = read_json(a / "report.json")
    assert report["n_train"] == 200
    assert report["n_synthetic"] == 168
    assert report["n_test"] == 48
    assert report["n_features"] == 12
    assert "out_dir" not in report["config"] and "workers" not in report["config"]
    assert report["seeds"]["master"] == 42
    assert len(report["ensemble"]["accuracies"]) == 2
    assert len(report["mi"]["values"]) == 3 and len(report["mi"]["values"][0]) == 9
    assert report["ensemble"]["mean"] == pytest.approx(first["metadata"]["mean_accuracy"])

    manifest = read_json(a / "manifest.json")
    assert manifest["config_hash"] == report["config_hash"]
    assert "report.json" in manifest["files"]
    assert len(manifest["seeds"]["ensemble_members"]) == 2
    assert "混淆矩阵" in (a / "report.md").read_text(encoding="utf-8")


def test_pipeline_rejects_bad_q(tmp_path):
    result = run_pipeline(str(tmp_path), q=7)
    assert not result["success"]
    assert result["metadata"]["exit_code"] == 2
    assert main(["pipeline", "--q", "7", "--out", str(tmp_path)]) == 2


def test_run_config_validation():
    assert RunConfig.load(q=3).q == 3
    assert RunConfig.load(areas="3,1").areas == ["D1", "D3"]
    with pytest.raises(ConfigError, match="records_per_pattern"):
        RunConfig.load(records_per_pattern=5)
    with pytest.raises(ConfigError):
        RunConfig.load(areas="4")
    with pytest.raises(ConfigError):
        RunConfig.load(mi_unit="frame")
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.load("/nonexistent/run.json")


def test_run_config_file_with_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"q": 5, "seed": 3}), encoding="utf-8")
    cfg = RunConfig.load(str(path), seed=9)
    assert (cfg.q, cfg.seed) == (5, 9)
    assert cfg.experiment().q == 5


def test_stage_registry():
    assert FluidPipeline().get_supported_stages() == PipelineStage.list_stages()


def test_patterns_command(capsys):
    assert main(["patterns"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 80
    assert lines[0].startswith("P1_V1")


def test_similarity_command(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["similarity", "--by", "class", "--out", str(out)]) == 0
    header = out.read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header[-1] == "within"
    assert len(header) == 10


def test_ingest_exit_codes(clean_signals, tmp_path, capsys):
    path = write_signal_record(clean_signals[0], tmp_path)
    assert main(["ingest", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["n_frames"] == 1800

    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    assert main(["ingest", str(path)]) == 3
    assert "[ingest]" in capsys.readouterr().err


def test_missing_chip_config_is_config_error(tmp_path):
    assert main(["simulate", "--chip", str(tmp_path / "chip.json"), "--out", str(tmp_path / "s")]) == 2


def test_simulate_single_pattern(tmp_path):
    out = tmp_path / "signals"
    assert main(["simulate", "--pattern", "PN_V10", "--noise", "0", "--out", str(out)]) == 0
    assert [p.name for p in out.glob("*.csv")] == ["PN_V10.csv"]
    assert main(["simulate", "--pattern", "PX_V1", "--noise", "0", "--out", str(out)]) == 3


def test_train_then_eval(tmp_path, capsys):
    out = tmp_path / "run.json"
    assert main(["train", "--models", "2", "--out", str(out)]) == 0
    report = read_json(out)
    capsys.readouterr()
    assert main(["eval", "--model", str(tmp_path / "run_model.json"), "--test", str(tmp_path / "run_test.csv")]) == 0
    evaluated = json.loads(capsys.readouterr().out)
    assert evaluated["accuracy"] == report["ensemble"]["best"]["accuracy"]


def test_divergence_exit_code(monkeypatch, tmp_path):
    def _nan_loss(w, b, x, y):
        return float("nan"), w * 0.0, b * 0.0

    monkeypatch.setattr(readout_trainer, "loss_and_gradients", _nan_loss)
    assert main(["train", "--models", "1", "--noise", "0", "--out", str(tmp_path / "r.json")]) == 4


def test_mi_command(tmp_path):
    out = tmp_path / "mi.csv"
    assert main(["mi", "--q", "5", "--noise", "0", "--out", str(out)]) == 0
    rows = out.read_text(encoding="utf-8").splitlines()
    assert len(rows) == 4
    assert read_json(tmp_path / "mi.json")["q"] == 5


def test_patterns_list_and_show(capsys):
    assert main(["patterns", "list"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 80

    assert main(["patterns", "show", "PN:10"]) == 0
    shown = capsys.readouterr().out.strip().splitlines()
    assert shown == ["PN_V10", "R 01100", "G 01010", "B 01001"]

    assert main(["patterns", "show", "PN_V10"]) == 0
    assert capsys.readouterr().out.strip().splitlines() == shown


def test_patterns_show_errors():
    assert main(["patterns", "show"]) == 2
    assert main(["patterns", "show", "PN:11"]) == 3
    assert main(["patterns", "show", "PN-10"]) == 3


def test_similarity_shifts_flag(tmp_path):
    plain, shifted, alias = tmp_path / "off.csv", tmp_path / "on.csv", tmp_path / "alias.csv"
    assert main(["similarity", "--shifts", "off", "--out", str(plain)]) == 0
    assert main(["patterns", "similarity", "--shifts", "on", "--out", str(shifted)]) == 0
    assert main(["similarity", "--shift", "--out", str(alias)]) == 0
    assert read_json(tmp_path / "off.json")["max_over_shifts"] is False
    assert read_json(tmp_path / "on.json")["max_over_shifts"] is True
    assert shifted.read_bytes() == alias.read_bytes()
    assert shifted.read_bytes() != plain.read_bytes()


@pytest.mark.parametrize("key", ["PN:10", "PN_V10"])
def test_simulate_pattern_key_forms(tmp_path, key):
    out = tmp_path / "signals"
    assert main(["simulate", "--pattern", key, "--noise", "0", "--out", str(out)]) == 0
    assert [p.name for p in out.glob("*.csv")] == ["PN_V10.csv"]
    assert read_json(out / "PN_V10.json")["variant"] == 10


def test_unreadable_tables_exit_with_data_error(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    bad = tmp_path / "bad.csv"
    bad.write_text("feature_0,class,variant,synthetic\n1.0,P1,1,0\n2.0,P1,2,0,9,9\n", encoding="utf-8")
    model = tmp_path / "model.json"
    write_json(model, ReadoutModel(weights=np.zeros((12, 8)), bias=np.zeros(8)).to_dict())

    assert main(["eval", "--model", str(model), "--test", str(empty)]) == 3
    assert main(["augment", "--train", str(bad), "--out", str(tmp_path / "aug.csv")]) == 3
    assert main(["augment", "--train", str(empty), "--out", str(tmp_path / "aug.csv")]) == 3
    err = capsys.readouterr().err
    assert "empty.csv:1: empty file" in err
