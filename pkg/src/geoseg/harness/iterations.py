"""
Training-length arithmetic
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from ..errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 75

# Sample counts and reported iteration counts of the published training setup,
# keyed by (dataset, device, devices). Per-device batch sizes were not published.
PUBLISHED_SAMPLES: Dict[str, int] = {"Infra": 4306, "RTS": 1706, "IWP": 606}
PUBLISHED_ITERATIONS: Dict[Tuple[str, str, int], int] = {
    ("Infra", "RTX 5000", 4): 20500,
    ("RTS", "RTX 5000", 4): 8000,
    ("IWP", "RTX 5000", 4): 2900,
    ("Infra", "A100", 1): 2600,
    ("RTS", "A100", 1): 4000,
    ("IWP", "A100", 1): 5700,
    ("Infra", "A100", 3): 900,
    ("RTS", "A100", 3): 1350,
    ("IWP", "A100", 3): 1900,
    ("Infra", "L2", 8): 1703,
    ("RTS", "L2", 8): 16000,
    ("IWP", "L2", 8): 710,
}


def iterations_for(n_samples: int, epochs: int, per_device_batch: int, devices: int) -> int:
    """epochs * ceil(n_samples / (per_device_batch * devices))"""
    for name, value in (
        ("n_samples", n_samples),
        ("epochs", epochs),
        ("per_device_batch", per_device_batch),
        ("devices", devices),
    ):
        if value < 1:
            raise ConfigError(f"{name} must be positive, got {value}")
    effective = per_device_batch * devices
    return epochs * -(-n_samples // effective)


@dataclass(frozen=True)
class IterationRow:
    dataset: str
    n_samples: int
    device: str
    devices: int
    per_device_batch: int
    epochs: int = DEFAULT_EPOCHS

    @property
    def iterations(self) -> int:
        return iterations_for(self.n_samples, self.epochs, self.per_device_batch, self.devices)

    @property
    def reported(self) -> Optional[int]:
        return PUBLISHED_ITERATIONS.get((self.dataset, self.device, self.devices))


def iteration_table(rows: Iterable[IterationRow]) -> List[Dict[str, object]]:
    """Computed iterations next to the published count, where one exists."""
    table = []
    for row in rows:
        computed = row.iterations
        reported = row.reported
        if reported is not None and reported != computed:
            logger.info(
                "%s on %dx %s: computed %d iterations, published %d",
                row.dataset,
                row.devices,
                row.device,
                computed,
                reported,
            )
        table.append(
            {
                "dataset": row.dataset,
                "device": row.device,
                "devices": row.devices,
                "per_device_batch": row.per_device_batch,
                "n_samples": row.n_samples,
                "epochs": row.epochs,
                "iterations": computed,
                "reported": reported,
            }
        )
    return table
