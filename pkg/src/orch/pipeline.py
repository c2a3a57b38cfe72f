from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterator, Optional

import numpy as np

from src.config import RuntimeConfig
from src.eval.metrics import evaluate
from src.forge.cifar import ingest_cifar, load_images, source_checksums
from src.forge.datasets import LabeledDataset, NoisyDataset
from src.forge.diagnostics import (
    empirical_transition_matrix,
    flip_count_matrix,
    imbalance_factor,
)
from src.forge.longtail import balanced_subset, build_longtail
from src.forge.manifest import save_manifest
from src.forge.noise import inject_t2h_noise
from src.forge.synthetic import make_blobs
from src.nets.bundle import ModelBundle
from src.observability.artifact_writer import ExperimentArtifactWriter
from src.observability.events import EventLogger
from src.relabel.multilabel import hit_rate, top1_hit_rate
from src.relabel.relabeler import RelabelResult, relabel_dataset, write_relabel_dump
from src.schemas.experiment import DatasetSpec, ExperimentConfig
from src.schemas.records import Method, ResultRecord
from src.training.baseline import train_ce
from src.training.ifd import train_ifd
from src.training.unlearn import unlearn_finetune


@dataclass(frozen=True, eq=False)
class PreparedData:
    train: NoisyDataset
    test: LabeledDataset
    imbalance_factor: float
    sources: Dict[str, str] = field(default_factory=dict)


def _blobs(spec: DatasetSpec, split: str, per_class: int) -> LabeledDataset:
    return make_blobs(
        spec.class_count,
        per_class,
        image_size=spec.image_size,
        seed=spec.seed,
        noise_std=spec.blob_noise_std,
        split=split,
    )


def forge_splits(spec: DatasetSpec, runtime: Optional[RuntimeConfig] = None) -> PreparedData:
    """
    Forge the noisy long-tailed training split and a balanced clean test split.

    CIFAR splits come back label-only; blob splits carry their pixels.
    """
    runtime = runtime or RuntimeConfig()
    if spec.source == "blobs":
        source = _blobs(spec, "train", spec.per_class or 600)
        test = _blobs(spec, "test", spec.test_per_class or 100)
        sources: Dict[str, str] = {}
    else:
        root = Path(spec.data_root) if spec.data_root else runtime.data_root
        source = ingest_cifar(root, spec.source, "train")
        if spec.per_class is not None:
            source = balanced_subset(source, spec.per_class, spec.seed)
        test = ingest_cifar(root, spec.source, "test")
        if spec.test_per_class is not None:
            test = balanced_subset(test, spec.test_per_class, spec.seed)
        sources = source_checksums(source.refs + test.refs, root)

    longtail = build_longtail(source, spec.imbalance_factor, spec.seed)
    noisy = inject_t2h_noise(longtail, spec.noise_ratio, spec.seed, spec.selection)
    return PreparedData(
        train=noisy, test=test, imbalance_factor=spec.imbalance_factor, sources=sources
    )


def with_pixels(data: PreparedData, data_root: Optional[str | Path]) -> PreparedData:
    train, test = data.train, data.test
    if train.base.images is None:
        train = train.with_images(load_images(train.base, data_root, data.sources))
    if test.images is None:
        test = test.with_images(load_images(test, data_root, data.sources))
    return replace(data, train=train, test=test)


def prepare_data(spec: DatasetSpec, runtime: Optional[RuntimeConfig] = None) -> PreparedData:
    """`forge_splits` with pixels loaded for both splits."""
    runtime = runtime or RuntimeConfig()
    root = Path(spec.data_root) if spec.data_root else runtime.data_root
    return with_pixels(forge_splits(spec, runtime), root)


def _observed_if(noisy: NoisyDataset) -> Optional[float]:
    try:
        return imbalance_factor(noisy)
    except ValueError:
        # noise emptied a class
        return None


def capture_rates(relabel: RelabelResult, true_labels: np.ndarray) -> dict:
    """Multi-label and top-1 hit rates, over all instances and over flipped ones."""
    flipped = relabel.observed != true_labels
    return {
        "hit_rate": hit_rate(relabel.membership, true_labels),
        "hit_rate_flipped": hit_rate(relabel.membership, true_labels, flipped),
        "top1_hit_rate": top1_hit_rate(relabel.p_ws, true_labels),
        "top1_hit_rate_flipped": top1_hit_rate(relabel.p_ws, true_labels, flipped),
    }


def _held_out_accuracy(
    test: LabeledDataset,
    observed_sizes: np.ndarray,
    config: ExperimentConfig,
    runtime: RuntimeConfig,
) -> Callable[[ModelBundle], float]:
    # per-epoch logging only; never fed back into training
    def val_acc(bundle: ModelBundle) -> float:
        return evaluate(
            bundle,
            test.images,
            test.labels,
            observed_sizes,
            batch_size=config.eval.batch_size,
            device=runtime.device,
        ).overall

    return val_acc


class _StageClock:
    def __init__(self, logger: EventLogger) -> None:
        self.logger = logger
        self.timings: Dict[str, float] = {}
        self.current: Optional[str] = None

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        self.current = name
        self.logger.info("stage_start", stage=name)
        started = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - started, 3)
        self.logger.info("stage_done", stage=name, sec=self.timings[name])
        # work between stages is not charged to the stage that just finished
        self.current = f"after_{name}"


def _run(
    config: ExperimentConfig,
    runtime: RuntimeConfig,
    method: Method,
    body: Callable[[PreparedData, ExperimentArtifactWriter, _StageClock, dict], None],
) -> ResultRecord:
    logger = EventLogger.from_runtime(runtime)
    writer = ExperimentArtifactWriter(config.output.out_dir, runtime.run_id)
    config_hash = config.config_hash()
    writer.write_config(config.model_dump(mode="json"), config_hash)
    clock = _StageClock(logger)
    fields: dict = {}
    started = time.perf_counter()
    logger.info("run_start", name=config.name, method=method, config_hash=config_hash)

    status, error = "ok", None
    try:
        with clock.stage("forge"):
            data = prepare_data(config.dataset, runtime)
            noisy = data.train
            save_manifest(
                writer.manifest_path,
                noisy.without_images(),
                data.test.without_images(),
                imbalance_factor=data.imbalance_factor,
                sources=data.sources,
            )
            transition = empirical_transition_matrix(noisy)
            flips = flip_count_matrix(noisy).tolist()
            writer.write_transition(transition.to_dict(), flips)
            fields.update(
                transition_matrix=transition.matrix.tolist(),
                flip_counts=flips,
                original_imbalance_factor=data.imbalance_factor,
                observed_imbalance_factor=_observed_if(noisy),
                observed_class_sizes=sorted(noisy.observed_sizes_by_class.tolist(), reverse=True),
            )
        body(data, writer, clock, fields)
    except Exception as e:
        status, error = "failed", f"{type(e).__name__}: {e}"
        logger.error("stage_failed", stage=clock.current, error=error)

    record = ResultRecord(
        run_id=runtime.run_id,
        name=config.name,
        method=method,
        status=status,
        failed_stage=clock.current if status == "failed" else None,
        error=error,
        config_hash=config_hash,
        wall_clock_sec=round(time.perf_counter() - started, 3),
        stage_timings_sec=clock.timings,
        **{k: v for k, v in fields.items() if k != "metrics"},
    )
    if "metrics" in fields:
        record = record.apply_metrics(fields["metrics"])

    writer.write_result(record)
    writer.write_summary(record)
    writer.append_csv(record, config.output.summary_csv)
    logger.info(
        "run_done",
        status=record.status,
        overall_acc=record.overall_acc,
        tail_acc=record.tail_acc,
        wall_clock_sec=record.wall_clock_sec,
    )
    return record


def run_experiment(
    config: ExperimentConfig, runtime: Optional[RuntimeConfig] = None
) -> ResultRecord:
    """
    forge -> IFD -> IFPU fine-tune -> evaluate -> persist.

    Stage exceptions never escape: the returned (and persisted) record then
    has status "failed" and names the stage.
    """
    runtime = runtime or RuntimeConfig()
    config_hash = config.config_hash()
    save_ckpt = config.output.save_checkpoints

    def body(
        data: PreparedData, writer: ExperimentArtifactWriter, clock: _StageClock, fields: dict
    ) -> None:
        logger = clock.logger
        noisy, test = data.train, data.test
        train_set = noisy.training_view()
        observed_sizes = noisy.observed_sizes_by_class
        true_labels = noisy.true_labels

        val_acc = _held_out_accuracy(test, observed_sizes, config, runtime)

        with clock.stage("ifd"):
            original, report = train_ifd(
                train_set,
                config.ifd,
                config.backbone,
                runtime=runtime,
                logger=logger,
                log_path=writer.log_path("ifd"),
                checkpoint_dir=writer.checkpoint_dir("original") if save_ckpt else None,
                config_hash=config_hash,
                eval_fn=val_acc,
            )
            fields.update(om_trajectory=report.om, lsm_trajectory=report.lsm)

        with clock.stage("unlearn"):
            unlearned, _ = unlearn_finetune(
                original,
                train_set,
                config.stage_config(),
                backbone=config.backbone,
                runtime=runtime,
                logger=logger,
                log_path=writer.log_path("ifpu"),
                checkpoint_dir=writer.checkpoint_dir("unlearned") if save_ckpt else None,
                config_hash=config_hash,
                hit_rate_fn=lambda r: capture_rates(r, true_labels),
                val_fn=val_acc,
            )
            final = relabel_dataset(
                unlearned,
                train_set.images,
                train_set.labels,
                train_set.ids,
                config.relabel,
                seed=config.ifpu.seed,
                device=runtime.device,
            )
            write_relabel_dump(writer.relabel_path, final)
            fields.update(capture_rates(final, true_labels))

        with clock.stage("evaluate"):
            fields["metrics"] = evaluate(
                unlearned,
                test.images,
                test.labels,
                observed_sizes,
                batch_size=config.eval.batch_size,
                device=runtime.device,
            )

    return _run(config, runtime, "dull", body)


def baseline_ce(config: ExperimentConfig, runtime: Optional[RuntimeConfig] = None) -> ResultRecord:
    """Plain CE on the same forged data, backbone and schedule; epochs = IFD + IFPU budget."""
    runtime = runtime or RuntimeConfig()
    config_hash = config.config_hash()

    def body(
        data: PreparedData, writer: ExperimentArtifactWriter, clock: _StageClock, fields: dict
    ) -> None:
        noisy, test = data.train, data.test
        observed_sizes = noisy.observed_sizes_by_class

        val_acc = _held_out_accuracy(test, observed_sizes, config, runtime)

        with clock.stage("ce"):
            bundle, _ = train_ce(
                noisy.training_view(),
                config.ifd,
                config.backbone,
                epochs=config.ifd.epochs + config.ifpu.epochs,
                runtime=runtime,
                logger=clock.logger,
                log_path=writer.log_path("ce"),
                checkpoint_dir=(
                    writer.checkpoint_dir("ce") if config.output.save_checkpoints else None
                ),
                config_hash=config_hash,
                eval_fn=val_acc,
            )

        with clock.stage("evaluate"):
            fields["metrics"] = evaluate(
                bundle,
                test.images,
                test.labels,
                observed_sizes,
                batch_size=config.eval.batch_size,
                device=runtime.device,
            )

    return _run(config, runtime, "ce", body)
