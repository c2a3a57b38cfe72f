import io
import json
from pathlib import Path

import pytest

from src.config import RuntimeConfig
from src.errors import TrainingDivergedError
from src.observability.artifact_writer import ExperimentArtifactWriter
from src.observability.events import EventLogger, JsonlLog, NullLogger
from src.schemas.experiment import (
    ExperimentConfig,
    IfdStageConfig,
    UnlearnStageConfig,
    load_config,
)
from src.schemas.records import ResultRecord

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# ---------------------------
# RuntimeConfig
# ---------------------------
def test_runtime_reads_env(monkeypatch):
    monkeypatch.setenv("RUN_ID", "env-run")
    monkeypatch.setenv("DULL_DATA_ROOT", "/tmp/cifar")
    monkeypatch.setenv("DEVICE", "cuda:1")
    monkeypatch.setenv("DETERMINISTIC", "no")
    monkeypatch.setenv("MAX_LOSS", "50")
    rt = RuntimeConfig()
    assert rt.run_id == "env-run"
    assert rt.data_root == Path("/tmp/cifar")
    assert rt.device == "cuda:1"
    assert rt.deterministic is False
    assert rt.max_loss == 50.0


def test_runtime_bad_numbers_fall_back(monkeypatch):
    monkeypatch.setenv("TORCH_THREADS", "many")
    monkeypatch.setenv("MAX_LOSS", "huge")
    rt = RuntimeConfig()
    assert rt.torch_threads == 0
    assert rt.max_loss == 1e6


# ---------------------------
# EventLogger / JsonlLog
# ---------------------------
def test_logger_json_lines():
    buf = io.StringIO()
    EventLogger("r1", stream=buf).info("ifd_epoch", epoch=3, om=0.123456789, path=Path("a/b"))
    payload = json.loads(buf.getvalue())
    assert payload["event"] == "ifd_epoch"
    assert payload["level"] == "INFO"
    assert payload["run_id"] == "r1"
    assert payload["om"] == 0.123457
    assert payload["path"] == "a/b"


def test_logger_text_mode_and_level_filter():
    buf = io.StringIO()
    log = EventLogger("r2", log_json=False, log_level="WARN", stream=buf)
    log.info("hidden")
    log.warn("shown", stage="forge")
    text = buf.getvalue()
    assert "hidden" not in text
    assert "event=shown" in text
    assert "stage=forge" in text


def test_null_logger_is_silent(capsys):
    NullLogger().error("boom")
    assert capsys.readouterr().out == ""


def test_jsonl_log_truncates_and_appends(tmp_path):
    path = tmp_path / "logs" / "ifd_log.jsonl"
    path.parent.mkdir()
    path.write_text("stale\n", encoding="utf-8")
    table = JsonlLog(path)
    table.append({"epoch": 1, "L0": 2.5})
    table.append({"epoch": 2, "L0": 1.5})
    lines = path.read_text(encoding="utf-8").splitlines()
    assert [json.loads(x)["epoch"] for x in lines] == [1, 2]
    assert len(JsonlLog(None).rows) == 0


# ---------------------------
# errors / config files
# ---------------------------
def test_diverged_error_names_stage_and_checkpoint():
    e = TrainingDivergedError("ifd", 7, "loss nan", Path("ckpt/bundle.pt"))
    assert e.stage == "ifd"
    assert e.epoch == 7
    assert "ifd" in str(e) and "7" in str(e)


def test_load_yaml_and_json_configs(tmp_path):
    y = tmp_path / "exp.yaml"
    y.write_text("name: tiny\nifd:\n  beta: 0.1\n  epochs: 2\n", encoding="utf-8")
    cfg = load_config(y, ExperimentConfig)
    assert cfg.name == "tiny"
    assert cfg.ifd.beta == 0.1

    j = tmp_path / "stage.json"
    j.write_text(json.dumps({"ifpu": {"epochs": 3}}), encoding="utf-8")
    assert load_config(j, UnlearnStageConfig).ifpu.epochs == 3


def test_unknown_config_keys_rejected(tmp_path):
    y = tmp_path / "bad.yaml"
    y.write_text("ifd:\n  betta: 0.1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="betta"):
        load_config(y, ExperimentConfig)


# ---------------------------
# ExperimentArtifactWriter
# ---------------------------
def test_artifact_writer_layout(tmp_path):
    w = ExperimentArtifactWriter(tmp_path, "run9")
    assert w.checkpoint_dir("original") == tmp_path / "run9" / "checkpoints" / "original"
    assert w.log_path("ifpu") == tmp_path / "run9" / "ifpu_log.jsonl"

    w.write_config({"name": "x"}, "abc")
    stored = json.loads((tmp_path / "run9" / "config.json").read_text(encoding="utf-8"))
    assert stored == {"config_hash": "abc", "config": {"name": "x"}}

    dull = ResultRecord(run_id="run9", config_hash="abc", overall_acc=40.0)
    ce = dull.model_copy(update={"method": "ce"})
    assert w.write_result(dull).name == "result.json"
    assert w.write_result(ce).name == "result_ce.json"
    assert w.write_summary(ce, extra={"note": "baseline"}).name == "run_summary_ce.json"
    summary = json.loads((tmp_path / "run9" / "run_summary_ce.json").read_text(encoding="utf-8"))
    assert summary["note"] == "baseline"

    w.append_csv(dull)
    w.append_csv(ce)
    rows = (tmp_path / "summary.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 3
    assert rows[0].startswith("run_id,")


@pytest.mark.parametrize(
    "name", ["smoke.yaml", "blobs_lt.yaml", "cifar10_lt.yaml", "cifar100_lt.yaml"]
)
def test_shipped_experiment_configs_parse(name):
    cfg = load_config(CONFIGS / name, ExperimentConfig)
    assert cfg.config_hash()


def test_shipped_stage_configs_parse():
    assert load_config(CONFIGS / "ifd_stage.yaml", IfdStageConfig).ifd.beta == 0.01
    assert load_config(CONFIGS / "unlearn_stage.yaml", UnlearnStageConfig).mixer.lam == 0.5
