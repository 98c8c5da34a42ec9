"""
Training loop
=============

Mini-batch training with per-epoch validation. The best checkpoint by
validation F1 is kept under ``output_dir`` together with a CSV metrics log.

.. autosummary::
    ~train
    ~train_step
    ~evaluate_records
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import backward, no_grad, scale
from ..data.jitter import scale_jitter
from ..data.manifest import read_manifest
from ..data.rng import SplitMix64, derive_seed
from ..data.tiles import TileRecord
from ..errors import DatasetError, NonFiniteError, TrainingDivergedError
from ..evaluation.metrics import ConfusionMatrix, accumulate_confusion, semantic_metrics
from ..models import METRIC_COLUMNS, RunConfig, SemanticMetrics
from ..nn.head import predict, seg_loss
from ..nn.model import GeoSegModel
from .checkpoint import save_checkpoint
from .optim import AdamW

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "best.gvck"
METRICS_LOG_NAME = "metrics.csv"
METRICS_LOG_HEADER = ("epoch", "split", *METRIC_COLUMNS, "loss")

# sub-seed streams derived from the run seed
_SHUFFLE_STREAM = 1
_JITTER_STREAM = 2


@dataclass
class TrainResult:
    config: RunConfig
    model: GeoSegModel
    checkpoint: Path
    metrics_log: Path
    best_epoch: int
    best_val: SemanticMetrics
    step_losses: List[float] = field(default_factory=list)
    history: List[Dict[str, float]] = field(default_factory=list)


def evaluate_records(
    model: GeoSegModel, records: Sequence[TileRecord], n_classes: int
) -> Tuple[SemanticMetrics, float]:
    """Metrics and mean loss over ``records`` without recording gradients."""
    if not records:
        raise DatasetError("nothing to evaluate")
    cm = ConfusionMatrix(n_classes)
    total = 0.0
    with no_grad():
        for record in records:
            logits = model(record.raster, record.coord)
            total += seg_loss(logits, record.mask).item()
            class_map, _ = predict(logits)
            cm = accumulate_confusion(class_map, record.mask, n_classes, into=cm)
    return semantic_metrics(cm), total / len(records)


def train_step(
    model: GeoSegModel, optimizer: AdamW, batch: Sequence[TileRecord]
) -> Tuple[float, float]:
    """One optimizer step on the batch-mean loss; returns (loss, lr)."""
    model.store.zero_grad()
    total = 0.0
    for record in batch:
        logits = model(record.raster, record.coord)
        loss = scale(seg_loss(logits, record.mask), 1.0 / len(batch))
        backward(loss)
        total += loss.item()
    for name, param in model.store.items():
        if param.grad is not None and not np.all(np.isfinite(param.grad)):
            raise NonFiniteError(f"gradient of {name}")
    lr = optimizer.step()
    return total, lr


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = SplitMix64(derive_seed(seed, _SHUFFLE_STREAM, epoch))
    return np.argsort(rng.random(n), kind="stable")


def _augment(record: TileRecord, config: RunConfig, epoch: int, index: int) -> TileRecord:
    if not config.jitter:
        return record
    seed = derive_seed(config.seed, _JITTER_STREAM, epoch, index)
    return scale_jitter(record, (config.jitter_min, config.jitter_max), seed=seed)


def _log_row(epoch: int, metrics: SemanticMetrics, loss: float) -> Dict[str, float]:
    row: Dict[str, float] = {"epoch": epoch}
    row.update(metrics.row())
    row["loss"] = loss
    return row


def train(config: RunConfig, output_dir: Optional[Path] = None) -> TrainResult:
    """Train one model as described by ``config``."""
    fusion = config.fusion_config()
    manifest = read_manifest(config.manifest)
    if manifest.n_classes != config.n_classes:
        raise DatasetError(
            f"config expects {config.n_classes} classes, manifest declares {manifest.n_classes}"
        )
    train_records = manifest.load("train")
    val_records = manifest.load("val")

    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / CHECKPOINT_NAME
    metrics_log = out / METRICS_LOG_NAME

    model = GeoSegModel.from_run_config(config)
    batch_size = config.effective_batch
    steps_per_epoch = math.ceil(len(train_records) / batch_size)
    optimizer = AdamW(
        model.store,
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
        total_steps=config.epochs * steps_per_epoch,
    )
    logger.info(
        "Training fusion=%s on %d tiles: %d epochs x %d steps, %d parameters",
        fusion.tag if fusion else "none",
        len(train_records),
        config.epochs,
        steps_per_epoch,
        model.n_parameters,
    )

    step_losses: List[float] = []
    history: List[Dict[str, float]] = []
    best_f1 = -1.0
    best_epoch = 0
    best_val: Optional[SemanticMetrics] = None

    with open(metrics_log, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_LOG_HEADER)
        for epoch in range(1, config.epochs + 1):
            order = _epoch_order(config.seed, epoch, len(train_records))
            for start in range(0, len(order), batch_size):
                indices = [int(i) for i in order[start : start + batch_size]]
                batch = [_augment(train_records[i], config, epoch, i) for i in indices]
                try:
                    loss, lr = train_step(model, optimizer, batch)
                except NonFiniteError as e:
                    lr = optimizer.lr_at(optimizer.steps)
                    raise TrainingDivergedError(
                        optimizer.steps, lr, [train_records[i].tile_id for i in indices], str(e)
                    ) from e
                step_losses.append(loss)
                logger.debug("step %d loss %.5f lr %.3g", optimizer.steps, loss, lr)

            metrics, val_loss = evaluate_records(model, val_records, config.n_classes)
            history.append(_log_row(epoch, metrics, val_loss))
            writer.writerow(
                [epoch, "val", *(f"{metrics.row()[c]:.6f}" for c in METRIC_COLUMNS), f"{val_loss:.6f}"]
            )
            f.flush()
            logger.info(
                "epoch %d/%d val f1 %.4f miou %.4f loss %.4f",
                epoch,
                config.epochs,
                metrics.f1,
                metrics.miou,
                val_loss,
            )
            if metrics.f1 > best_f1:
                best_f1, best_epoch, best_val = metrics.f1, epoch, metrics
                save_checkpoint(checkpoint, config, model)

    assert best_val is not None
    logger.info("Best val f1 %.4f at epoch %d, checkpoint %s", best_f1, best_epoch, checkpoint)
    return TrainResult(
        config=config,
        model=model,
        checkpoint=checkpoint,
        metrics_log=metrics_log,
        best_epoch=best_epoch,
        best_val=best_val,
        step_losses=step_losses,
        history=history,
    )
