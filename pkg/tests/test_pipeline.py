import importlib.util
import json
from pathlib import Path

import pandas as pd
import pytest

from src.config import RuntimeConfig
from src.forge.manifest import load_manifest
from src.observability.events import NullLogger
from src.orch import pipeline
from src.orch.pipeline import _StageClock, baseline_ce, forge_splits, run_experiment
from src.report import build_report
from src.schemas.experiment import (
    BackboneConfig,
    DatasetSpec,
    ExperimentConfig,
    IfdConfig,
    IfpuConfig,
    OutputSpec,
    RelabelConfig,
)
from src.schemas.records import load_record, load_records


def _config(out_dir, **dataset):
    spec = dict(
        class_count=3,
        per_class=16,
        test_per_class=4,
        imbalance_factor=2.0,
        noise_ratio=0.25,
        image_size=8,
    )
    spec.update(dataset)
    return ExperimentConfig(
        name="smoke",
        dataset=DatasetSpec(**spec),
        backbone=BackboneConfig(channels=4, width=4),
        ifd=IfdConfig(epochs=1, batch_size=8, augment=False),
        ifpu=IfpuConfig(epochs=1, batch_size=8, augment=False),
        relabel=RelabelConfig(batch_size=32),
        output=OutputSpec(out_dir=str(out_dir)),
    )


def _runtime(run_id, tmp_path):
    return RuntimeConfig(run_id=run_id, data_root=tmp_path / "raw", log_json=True)


# ---------------------------
# forge_splits
# ---------------------------
def test_forge_splits_on_blobs(tmp_path):
    data = forge_splits(_config(tmp_path).dataset)
    assert data.train.class_count == 3
    assert data.test.class_sizes.tolist() == [4, 4, 4]
    assert data.train.base.class_sizes.tolist() == [16, 11, 8]
    assert data.train.flipped.sum() > 0
    assert data.sources == {}


# ---------------------------
# run_experiment
# ---------------------------
def test_smoke_run_writes_artifacts(tmp_path):
    cfg = _config(tmp_path)
    record = run_experiment(cfg, _runtime("r1", tmp_path))
    assert record.status == "ok", record.error
    assert record.failed_stage is None
    assert record.config_hash == cfg.config_hash()
    assert len(record.om_trajectory) == 1
    assert len(record.lsm_trajectory) == 1
    assert record.overall_acc is not None
    assert record.hit_rate is not None
    # a label set always contains the top-1 class unless that class is the observed one
    assert record.hit_rate >= record.top1_hit_rate
    assert set(record.stage_timings_sec) == {"forge", "ifd", "unlearn", "evaluate"}
    assert len(record.flip_counts) == 3

    run_dir = tmp_path / "r1"
    for name in (
        "config.json",
        "manifest.json",
        "transition.json",
        "ifd_log.jsonl",
        "ifpu_log.jsonl",
        "relabel.jsonl",
        "result.json",
        "run_summary.json",
    ):
        assert (run_dir / name).is_file(), name
    assert (run_dir / "checkpoints" / "original" / "bundle.pt").is_file()
    assert (run_dir / "checkpoints" / "unlearned" / "bundle.pt").is_file()

    assert load_record(run_dir / "result.json") == record
    stored = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    assert stored["config_hash"] == record.config_hash
    forged = load_manifest(run_dir / "manifest.json")
    assert len(forged.train) == sum(record.observed_class_sizes)
    assert len(forged.test) == 12
    assert forged.imbalance_factor == 2.0
    dump = (run_dir / "relabel.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(dump) == len(forged.train)

    csv = pd.read_csv(tmp_path / "summary.csv")
    assert csv["run_id"].tolist() == ["r1"]


def test_runs_are_reproducible(tmp_path):
    cfg = _config(tmp_path)
    a = run_experiment(cfg, _runtime("a", tmp_path))
    b = run_experiment(cfg, _runtime("b", tmp_path))
    assert a.status == b.status == "ok"
    assert a.comparable() == b.comparable()
    assert len(pd.read_csv(tmp_path / "summary.csv")) == 2


def test_missing_cifar_root_fails_in_forge(tmp_path):
    cfg = _config(tmp_path, source="cifar10", data_root=str(tmp_path / "nowhere"))
    record = run_experiment(cfg, _runtime("bad", tmp_path))
    assert record.status == "failed"
    assert record.failed_stage == "forge"
    assert "FileNotFoundError" in record.error
    assert record.overall_acc is None
    assert (tmp_path / "bad" / "result.json").is_file()


def test_stage_clock_labels_the_gap_after_a_stage():
    clock = _StageClock(NullLogger())
    with clock.stage("forge"):
        assert clock.current == "forge"
    assert clock.current == "after_forge"
    assert "forge" in clock.timings
    with pytest.raises(RuntimeError):
        with clock.stage("ifd"):
            raise RuntimeError("boom")
    assert clock.current == "ifd"
    assert "ifd" not in clock.timings


def test_failure_between_stages_is_not_charged_to_forge(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("no held-out set")

    monkeypatch.setattr(pipeline, "_held_out_accuracy", broken)
    record = run_experiment(_config(tmp_path), _runtime("gap", tmp_path))
    assert record.status == "failed"
    assert record.failed_stage == "after_forge"
    assert "no held-out set" in record.error


def test_baseline_shares_run_dir(tmp_path):
    cfg = _config(tmp_path)
    runtime = _runtime("pair", tmp_path)
    dull = run_experiment(cfg, runtime)
    ce = baseline_ce(cfg, runtime)
    assert ce.status == "ok", ce.error
    assert ce.method == "ce"
    assert ce.config_hash == dull.config_hash
    assert ce.om_trajectory == []
    assert set(ce.stage_timings_sec) == {"forge", "ce", "evaluate"}
    assert (tmp_path / "pair" / "result_ce.json").is_file()
    assert (tmp_path / "pair" / "run_summary_ce.json").is_file()

    records = load_records(tmp_path)
    assert sorted(r.method for r in records) == ["ce", "dull"]


# ---------------------------
# report
# ---------------------------
def test_report_from_stored_records(tmp_path):
    cfg = _config(tmp_path / "runs")
    runtime = _runtime("rep", tmp_path)
    run_experiment(cfg, runtime)
    baseline_ce(cfg, runtime)

    out = tmp_path / "report"
    path = build_report(load_records(tmp_path / "runs"), out)
    text = path.read_text(encoding="utf-8")
    assert "## Runs" in text
    assert "Deltas for config" in text
    for name in ("om_lsm.png", "accuracy.png", "flip_counts.png"):
        assert (out / name).stat().st_size > 0
        assert name in text


def test_hash_tracks_training_settings(tmp_path):
    cfg = _config(tmp_path)
    changed = cfg.model_copy(update={"ifd": cfg.ifd.model_copy(update={"beta": 0.05})})
    renamed = cfg.model_copy(update={"name": "other"})
    assert changed.config_hash() != cfg.config_hash()
    assert renamed.config_hash() == cfg.config_hash()


# ---------------------------
# forge script
# ---------------------------
SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def _script(name):
    spec = importlib.util.spec_from_file_location(f"script_{name}", SCRIPTS / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def test_forge_script_exit_codes(tmp_path):
    forge = _script("forge")
    out = tmp_path / "m.json"
    args = ["--classes", "3", "--per-class", "16", "--test-per-class", "4", "--if", "2"]
    assert forge.main([*args, "--noise", "0.25", "--out", str(out)]) == 0
    assert out.is_file()
    summary = json.loads(out.with_suffix(".summary.json").read_text(encoding="utf-8"))
    assert summary["train"] == 35

    missing = ["--source", str(tmp_path / "nowhere"), "--out", str(tmp_path / "x.json")]
    assert forge.main(missing) == 1
    assert not (tmp_path / "x.json").exists()
