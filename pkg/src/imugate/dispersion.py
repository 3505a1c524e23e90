"""Online dispersion statistics used to pick the two template features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

from .errors import InsufficientDataError

SCORE_EPS = 1e-12


class DispersionAccumulator:
    """Welford mean/M2 plus successive-difference and square sums for one feature."""

    __slots__ = ("count", "mu", "m2", "prev", "ssd_sum", "sq_sum")
    STATE_SCALARS = 6

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self.count = 0
        self.mu = 0.0
        self.m2 = 0.0
        self.prev = 0.0
        self.ssd_sum = 0.0
        self.sq_sum = 0.0

    def update(self, x: float) -> "DispersionAccumulator":
        n = self.count + 1
        delta = x - self.mu
        self.mu += delta / n
        self.m2 += delta * (x - self.mu)
        if self.count:
            d = x - self.prev
            self.ssd_sum += d * d
        self.sq_sum += x * x
        self.prev = x
        self.count = n
        return self

    def extend(self, xs: Iterable[float]) -> "DispersionAccumulator":
        # same recursion as update(), hoisted into locals for long streams
        count, mu, m2, prev = self.count, self.mu, self.m2, self.prev
        ssd, sq = self.ssd_sum, self.sq_sum
        for x in xs:
            n = count + 1
            delta = x - mu
            mu += delta / n
            m2 += delta * (x - mu)
            if count:
                d = x - prev
                ssd += d * d
            sq += x * x
            prev = x
            count = n
        self.count, self.mu, self.m2, self.prev = count, mu, m2, prev
        self.ssd_sum, self.sq_sum = ssd, sq
        return self

    def _require(self, what: str) -> None:
        if self.count < 2:
            raise InsufficientDataError(
                f"{what} needs at least 2 samples, got {self.count}"
            )

    def variance(self) -> float:
        self._require("variance")
        return self.m2 / (self.count - 1)

    def mssd(self) -> float:
        self._require("MSSD")
        return self.ssd_sum / self.count

    def rms_squared(self) -> float:
        if self.count == 0:
            raise InsufficientDataError("RMS of an empty accumulator")
        return self.sq_sum / self.count

    def __repr__(self) -> str:
        return (
            f"DispersionAccumulator(count={self.count}, mu={self.mu!r}, "
            f"m2={self.m2!r}, ssd_sum={self.ssd_sum!r}, sq_sum={self.sq_sum!r})"
        )


@dataclass(frozen=True)
class FeatureScore:
    index: int
    norm_variance: float
    norm_mssd: float
    score: float


def score_feature(acc: DispersionAccumulator, index: int, eps: float = SCORE_EPS) -> FeatureScore:
    """Score = (var / rms^2) / (mssd / rms^2 + eps); higher is more informative.

    A feature with zero RMS carries no signal and scores -inf.
    """
    var = acc.variance()
    mssd = acc.mssd()
    rms2 = acc.rms_squared()
    if rms2 == 0.0:
        return FeatureScore(index, 0.0, 0.0, -math.inf)
    nvar = var / rms2
    nmssd = mssd / rms2
    return FeatureScore(index, nvar, nmssd, nvar / (nmssd + eps))


def rank_features(accs: Sequence[DispersionAccumulator], eps: float = SCORE_EPS) -> List[int]:
    """Feature indices by descending score, lower index first on ties."""
    scores = [score_feature(acc, i, eps) for i, acc in enumerate(accs)]
    scores.sort(key=lambda s: (-s.score, s.index))
    return [s.index for s in scores]
