"""
Checkpoint evaluation on one dataset split
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

from ..data.manifest import read_manifest
from ..errors import DatasetError
from ..models import SemanticMetrics
from .checkpoint import load_checkpoint
from .train import evaluate_records

logger = logging.getLogger(__name__)


def evaluate(
    checkpoint: Union[str, Path],
    split: str = "test",
    manifest: Optional[Union[str, Path]] = None,
) -> Tuple[SemanticMetrics, float]:
    """Metrics and mean loss of a checkpoint over a full split.

    The manifest defaults to the one named in the checkpoint's config echo.
    """
    model, config = load_checkpoint(checkpoint)
    dataset = read_manifest(manifest or config.manifest)
    if dataset.n_classes != model.n_classes:
        raise DatasetError(
            f"checkpoint predicts {model.n_classes} classes, dataset declares {dataset.n_classes}"
        )
    records = dataset.load(split)
    metrics, loss = evaluate_records(model, records, model.n_classes)
    logger.info(
        "Evaluated %s on %s split (%d tiles): f1 %.4f miou %.4f",
        checkpoint,
        split,
        len(records),
        metrics.f1,
        metrics.miou,
    )
    return metrics, loss
