"""Two-sided CUSUM change detector used as a baseline.

The detector watches one scalar derived from each 6-axis sample (the
acceleration norm by default). A warm-up phase estimates the mean and
standard deviation of the new regime; afterwards the standardized value
``z`` drives the cumulative sums

    S+ <- max(0, S+ + z - k)      S- <- max(0, S- - z - k)

and a detection fires when either sum exceeds ``h``. Both ``k`` and ``h``
are in units of the warm-up standard deviation. After a detection the sums
are cleared and a new warm-up starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Union

import numpy as np

from .dispersion import DispersionAccumulator
from .features import euclidean_norm
from .gate import GateConfig, WindowVerdict

SIGNALS: Dict[str, Callable[[Sequence[float]], float]] = {
    "norm_a": lambda r: euclidean_norm(r[0:3]),
    "norm_w": lambda r: euclidean_norm(r[3:6]),
    "ax": lambda r: r[0],
    "ay": lambda r: r[1],
    "az": lambda r: r[2],
    "wx": lambda r: r[3],
    "wy": lambda r: r[4],
    "wz": lambda r: r[5],
}


@dataclass(frozen=True)
class CusumConfig:
    sensitivity: float = 3.0
    warmup: int = 26
    threshold: float = 0.3
    signal: str = "norm_a"
    sigma_floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.sensitivity <= 0:
            raise ValueError(f"sensitivity must be > 0, got {self.sensitivity}")
        if self.threshold <= 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.warmup < 2:
            raise ValueError(f"warmup must be >= 2 samples, got {self.warmup}")
        if self.signal not in SIGNALS:
            raise ValueError(f"signal must be one of {sorted(SIGNALS)}, got {self.signal!r}")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be > 0")

    @classmethod
    def for_rate(cls, sample_rate: float, **kwargs) -> "CusumConfig":
        """Default parameters with a one-second warm-up at ``sample_rate``."""
        return cls(warmup=max(2, int(round(sample_rate))), **kwargs)


class Cusum:
    """Sample-level detector; :meth:`step` returns True on a detection."""

    def __init__(self, config: CusumConfig = CusumConfig()) -> None:
        self.config = config
        self._warm = DispersionAccumulator()
        self.mu = 0.0
        self.sigma = 1.0
        self.s_pos = 0.0
        self.s_neg = 0.0
        self.n_detections = 0

    @property
    def warming_up(self) -> bool:
        return self._warm.count < self.config.warmup

    def reset(self) -> None:
        self._warm.reset()
        self.s_pos = 0.0
        self.s_neg = 0.0

    def step(self, x: float) -> bool:
        if not math.isfinite(x):
            raise ValueError(f"non-finite CUSUM input {x!r}")
        cfg = self.config
        if self.warming_up:
            self._warm.update(x)
            if not self.warming_up:
                self.mu = self._warm.mu
                self.sigma = max(math.sqrt(self._warm.variance()), cfg.sigma_floor)
            return False
        z = (x - self.mu) / self.sigma
        self.s_pos = max(0.0, self.s_pos + z - cfg.sensitivity)
        self.s_neg = max(0.0, self.s_neg - z - cfg.sensitivity)
        if self.s_pos > cfg.threshold or self.s_neg > cfg.threshold:
            self.n_detections += 1
            self.reset()
            return True
        return False

    def run(self, xs: Sequence[float]) -> List[int]:
        """Indices (into ``xs``) of the samples that triggered a detection."""
        return [i for i, x in enumerate(xs) if self.step(x)]


def signal_values(data: np.ndarray, signal: str = "norm_a") -> List[float]:
    f = SIGNALS[signal]
    return [f(row) for row in np.asarray(data, dtype=float).tolist()]


def detections_to_verdicts(
    detections: Sequence[int], n_samples: int, window: int, hop: int
) -> List[WindowVerdict]:
    """Per-window verdicts: a window is a transition if any detection lies inside it."""
    n = 0 if n_samples < window else (n_samples - window) // hop + 1
    hits = [0] * (n_samples + 1)
    for d in detections:
        hits[d + 1] += 1
    for i in range(n_samples):
        hits[i + 1] += hits[i]
    out = []
    for j in range(n):
        lo, hi = j * hop, j * hop + window
        out.append(WindowVerdict(j, hi - 1, None, hits[hi] - hits[lo] > 0))
    return out


def run_cusum(
    config: CusumConfig, data: Union[np.ndarray, Sequence[Sequence[float]]], gate_config: GateConfig
) -> List[WindowVerdict]:
    """Run the detector over a stream and map detections onto the gate's window grid."""
    xs = signal_values(np.asarray(data, dtype=float), config.signal)
    det = Cusum(config).run(xs)
    return detections_to_verdicts(det, len(xs), gate_config.window, gate_config.hop)


def flops_per_step(config: CusumConfig, hop: int) -> int:
    """Detector FLOPs per window step (``hop`` samples), same counting rules as the gate."""
    signal = 6 if config.signal in ("norm_a", "norm_w") else 0
    per_sample = signal + 2 + 4  # standardise (sub, div); two sums (add, sub each)
    return hop * per_sample
