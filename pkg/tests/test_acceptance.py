"""Longer training runs on synthetic blobs. Enable with RUN_SLOW=1."""

import math
import os

import numpy as np
import pytest

from src.config import RuntimeConfig
from src.orch.pipeline import baseline_ce, forge_splits, run_experiment
from src.schemas.experiment import (
    BackboneConfig,
    DatasetSpec,
    ExperimentConfig,
    IfdConfig,
    IfpuConfig,
    OutputSpec,
)
from src.training.ifd import epochs_to_threshold, train_ifd

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(os.getenv("RUN_SLOW") != "1", reason="set RUN_SLOW=1"),
]

SEEDS = (1, 2, 3)
CLASSES = 10
K = 64
TOY_EPOCHS = 30


def _dataset(seed, noise_ratio):
    return DatasetSpec(
        class_count=CLASSES,
        per_class=200,
        test_per_class=40,
        imbalance_factor=10.0,
        noise_ratio=noise_ratio,
        image_size=16,
        seed=seed,
    )


def _toy(beta, seed):
    train = forge_splits(_dataset(seed, 0.4)).train.training_view()
    cfg = IfdConfig(beta=beta, epochs=TOY_EPOCHS, batch_size=64, lr=0.05, seed=seed)
    _, report = train_ifd(train, cfg, BackboneConfig(channels=K, width=16, seed=seed))
    return report


# ---------------------------
# channel disentangling
# ---------------------------
def test_ifd_cuts_overlap_fivefold_and_settles_lsm():
    report = _toy(0.01, SEEDS[0])
    assert report.final_om <= report.initial_om / 5
    # nonnegative orthonormal columns: 1/K (one channel per class) up to
    # sqrt(C/K)/C (K/C channels per class at equal weight)
    expected = math.sqrt(CLASSES / K) / CLASSES
    assert 1.0 / K <= report.final_lsm <= 1.5 * expected
    assert report.final_lsm < report.initial_lsm


def test_larger_beta_reaches_low_overlap_sooner():
    never = TOY_EPOCHS + 1
    mean_epochs = {}
    for beta in (1.0, 0.01, 0.001):
        hits = []
        for seed in SEEDS:
            report = _toy(beta, seed)
            e = epochs_to_threshold(report.om, report.initial_om / 5)
            hits.append(never if e is None else e)
        mean_epochs[beta] = float(np.mean(hits))
    assert mean_epochs[1.0] < never
    assert mean_epochs[1.0] <= mean_epochs[0.01] <= mean_epochs[0.001]


# ---------------------------
# DULL against matched CE
# ---------------------------
def _config(out_dir, seed, noise_ratio):
    return ExperimentConfig(
        name=f"blobs-r{noise_ratio}-s{seed}",
        dataset=_dataset(seed, noise_ratio),
        backbone=BackboneConfig(channels=K, width=16, seed=seed),
        ifd=IfdConfig(epochs=12, batch_size=64, lr=0.05, seed=seed),
        ifpu=IfpuConfig(epochs=6, batch_size=64, lr=0.05, seed=seed),
        output=OutputSpec(out_dir=str(out_dir), save_checkpoints=False),
    )


def _pairs(out_dir, noise_ratio):
    out = []
    for seed in SEEDS:
        cfg = _config(out_dir, seed, noise_ratio)
        rt = RuntimeConfig(run_id=f"r{noise_ratio}-s{seed}", data_root=out_dir, show_progress=False)
        dull, ce = run_experiment(cfg, rt), baseline_ce(cfg, rt)
        assert dull.status == ce.status == "ok", (dull.error, ce.error)
        out.append((dull, ce))
    return out


@pytest.fixture(scope="module")
def noisy_pairs(tmp_path_factory):
    return _pairs(tmp_path_factory.mktemp("noisy"), 0.4)


@pytest.fixture(scope="module")
def clean_pairs(tmp_path_factory):
    return _pairs(tmp_path_factory.mktemp("clean"), 0.0)


def test_dull_beats_ce_under_t2h_noise(noisy_pairs):
    gaps = [dull.overall_acc - ce.overall_acc for dull, ce in noisy_pairs]
    assert np.mean(gaps) >= 3.0, gaps


def test_dull_matches_ce_on_clean_data(clean_pairs):
    gaps = [dull.overall_acc - ce.overall_acc for dull, ce in clean_pairs]
    assert abs(np.mean(gaps)) <= 2.0, gaps


def test_label_sets_capture_flipped_truth_better_than_top1(noisy_pairs):
    for dull, _ in noisy_pairs:
        assert dull.hit_rate_flipped is not None
        assert dull.hit_rate_flipped > dull.top1_hit_rate_flipped
