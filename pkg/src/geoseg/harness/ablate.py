"""
Fusion ablation sweep
=====================

Trains every valid (placement, granularity, strategy) configuration plus a
no-fusion baseline ``trials`` times and reports one row per configuration.
Trial ``t`` of every configuration, baseline included, trains with seed
``base_seed ^ derive_seed(0, t)``, so configurations are compared on paired
seeds and a sweep gives the same rows serially or across worker processes.

.. autosummary::
    ~ablate
    ~aggregate_trials
    ~best_configuration
    ~write_ablation_csv
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import settings
from ..data.rng import MASK64, derive_seed
from ..errors import ConfigError
from ..models import (
    ABLATION_HEADER,
    METRIC_COLUMNS,
    AblationRow,
    FusionConfig,
    RunConfig,
    SemanticMetrics,
    valid_fusion_configs,
)
from .train import train

logger = logging.getLogger(__name__)

BASELINE = "none"

# (config index, trial, run config); index 0 is the baseline
Job = Tuple[int, int, RunConfig]
Outcome = Tuple[Optional[SemanticMetrics], Optional[str]]


def trial_seed(base_seed: int, trial: int) -> int:
    """Seed shared by trial ``trial`` of every configuration."""
    return (base_seed ^ derive_seed(0, trial)) & MASK64


def _slug(tag: str) -> str:
    return tag.replace("/", "_")


def _jobs(base: RunConfig, fusions: Sequence[FusionConfig], trials: int) -> List[Job]:
    root = Path(base.output_dir) / "ablation"
    jobs: List[Job] = []
    for k, fusion in enumerate([None, *fusions]):
        tag = fusion.tag if fusion is not None else BASELINE
        for t in range(trials):
            config = base.model_copy(
                update={
                    "fusion": tag,
                    "seed": trial_seed(base.seed, t),
                    "output_dir": str(root / _slug(tag) / f"trial{t}"),
                }
            )
            jobs.append((k, t, config))
    return jobs


def _run_job(job: Job) -> Outcome:
    _, trial, config = job
    try:
        return train(config).best_val, None
    except Exception as e:  # any failure becomes an error row
        logger.warning("Ablation config %s trial %d failed: %s", config.fusion, trial, e)
        return None, f"{type(e).__name__}: {e}"


def aggregate_trials(trials: Sequence[SemanticMetrics]) -> Dict[str, float]:
    """Mean of every metric and the standard error of F1 (0 for one trial)."""
    if not trials:
        raise ValueError("no trials to aggregate")
    summary = {c: float(np.mean([m.row()[c] for m in trials])) for c in METRIC_COLUMNS}
    f1 = np.array([m.f1 for m in trials])
    summary["f1_stderr"] = float(f1.std(ddof=1) / np.sqrt(len(f1))) if len(f1) > 1 else 0.0
    return summary


def _row(feature: str, fusion: Optional[FusionConfig], outcomes: List[Outcome]) -> AblationRow:
    if fusion is None:
        labels = {"placement": BASELINE, "granularity": BASELINE, "strategy": BASELINE}
    else:
        labels = {
            "placement": fusion.placement,
            "granularity": fusion.granularity,
            "strategy": fusion.strategy,
        }
    errors = [error for _, error in outcomes if error is not None]
    if errors:
        return AblationRow(feature=feature, error=errors[0], **labels)
    metrics = [m for m, _ in outcomes if m is not None]
    return AblationRow(feature=feature, **labels, **aggregate_trials(metrics))


def _is_baseline(row: AblationRow) -> bool:
    return row.strategy == BASELINE


def sort_rows(rows: Sequence[AblationRow]) -> List[AblationRow]:
    """F1 descending (stable), then failed configurations, then the baseline."""
    fused = [r for r in rows if not _is_baseline(r)]
    done = sorted((r for r in fused if r.error is None), key=lambda r: -(r.f1 or 0.0))
    failed = [r for r in fused if r.error is not None]
    return done + failed + [r for r in rows if _is_baseline(r)]


def best_configuration(rows: Sequence[AblationRow]) -> AblationRow:
    """Top fused row by F1, ties broken by mIoU and then by sweep order."""
    candidates = [
        (i, r) for i, r in enumerate(rows) if r.error is None and not _is_baseline(r)
    ]
    if not candidates:
        raise ValueError("no successful fused configuration")
    _, best = max(candidates, key=lambda item: (item[1].f1, item[1].miou, -item[0]))
    return best


def write_ablation_csv(rows: Sequence[AblationRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_HEADER)
        for row in rows:
            writer.writerow(row.csv_fields())
    logger.info("Wrote %d ablation rows to %s", len(rows), path)
    return path


def ablate(
    base: RunConfig,
    trials: int = 1,
    out: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
) -> List[AblationRow]:
    """Run the full sweep; rows come back sorted and are written to ``out`` if given."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    fusion_kwargs = {
        "n_tokens": base.cross_attention_tokens,
        "d_attn": base.d_attn,
        "residual": base.cross_attention_residual,
    }
    fusions = valid_fusion_configs(**fusion_kwargs)
    jobs = _jobs(base, fusions, trials)
    workers = settings.workers if workers is None else workers
    logger.info(
        "Ablation: %d configurations + baseline, %d trial(s), %d worker(s)",
        len(fusions),
        trials,
        workers,
    )

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    else:
        outcomes = [_run_job(job) for job in jobs]

    grouped: Dict[int, List[Outcome]] = {}
    for (k, _, _), outcome in zip(jobs, outcomes):
        grouped.setdefault(k, []).append(outcome)
    rows = [
        _row(base.feature, fusion, grouped[k]) for k, fusion in enumerate([None, *fusions])
    ]
    for row in rows:
        if row.error is None:
            logger.info(
                "%s/%s/%s f1 %.4f", row.placement, row.granularity, row.strategy, row.f1
            )

    rows = sort_rows(rows)
    if out is not None:
        write_ablation_csv(rows, out)
    return rows
