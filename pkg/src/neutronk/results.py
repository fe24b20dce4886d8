"""Small result records shared by the estimators."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

METHODS = ("census-ratio", "log-growth", "superhistory", "collision", "time-lambda")


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error."""

    value: float
    std_error: float
    n_samples: int

    def __float__(self):
        return float(self.value)

    def within(self, target: float, n_sigma: float = 3.0, floor: float = 0.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.std_error + floor


def mean_estimate(samples) -> Estimate:
    x = np.asarray(samples, float)
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(x.mean()), se, n)


@dataclass
class EigenEstimate:
    value: float
    std_error: float
    n_active: int
    n_inactive: int
    method: str
    extinct: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if not self.std_error >= 0 and not np.isnan(self.std_error):
            raise ValueError("std_error must be >= 0")

    def as_record(self) -> dict:
        d = asdict(self)
        d["extras"] = {k: _plain(v) for k, v in self.extras.items()}
        return d


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def combined_sigma(*ests) -> float:
    return float(np.sqrt(sum(e.std_error ** 2 for e in ests)))


def agree(a, b, n_sigma: float = 3.0) -> bool:
    return abs(a.value - b.value) <= n_sigma * combined_sigma(a, b)
