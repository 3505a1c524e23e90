"""Two-feature joint-density templates and their NCC comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import DegenerateTemplateError, EmptyWindowError

GRID = 10


@dataclass(frozen=True)
class BinBounds:
    """Min/max of the two selected features, captured on the reference window."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def __post_init__(self) -> None:
        if self.hi1 < self.lo1 or self.hi2 < self.lo2:
            raise ValueError(f"inverted bin bounds: {self}")

    @classmethod
    def from_values(cls, xs: Sequence[float], ys: Sequence[float]) -> "BinBounds":
        return cls(min(xs), max(xs), min(ys), max(ys))

    def normalize(self, x1: float, x2: float) -> Tuple[float, float]:
        return normalize_feature(x1, self.lo1, self.hi1), normalize_feature(x2, self.lo2, self.hi2)


def normalize_feature(x: float, lo: float, hi: float) -> float:
    """Min-max rescale into [0, 1], clamped; a zero-width range maps to 0.5."""
    span = hi - lo
    if span <= 0.0:
        return 0.5
    v = (x - lo) / span
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@dataclass(frozen=True, eq=False)
class Template:
    bins: np.ndarray  # (GRID, GRID); rows follow the second feature, columns the first
    sample_count: int

    def flat(self) -> List[float]:
        """Row-major dump of the bins (second-feature bin major)."""
        return [float(v) for v in self.bins.ravel()]

    @classmethod
    def from_flat(cls, values: Sequence[float], sample_count: int) -> "Template":
        arr = np.asarray(values, dtype=float)
        side = math.isqrt(arr.size)
        if side * side != arr.size:
            raise ValueError(f"{arr.size} values do not form a square grid")
        return cls(arr.reshape(side, side), sample_count)


def bin_index(v: float, grid: int = GRID) -> int:
    """Half-open bins [k/g, (k+1)/g); v == 1 falls into the last bin."""
    k = int(v * grid)
    return grid - 1 if k >= grid else k


def build(pairs: Iterable[Tuple[float, float]], grid: int = GRID) -> Template:
    """Normalised 2-D histogram of (x1, x2) pairs already scaled into [0, 1]."""
    counts = [0] * (grid * grid)
    n = 0
    for x1, x2 in pairs:
        counts[bin_index(x2, grid) * grid + bin_index(x1, grid)] += 1
        n += 1
    if n == 0:
        raise EmptyWindowError("cannot build a template from zero samples")
    bins = np.asarray(counts, dtype=float).reshape(grid, grid) / n
    return Template(bins, n)


def build_from_features(
    xs: Sequence[float], ys: Sequence[float], bounds: BinBounds, grid: int = GRID
) -> Template:
    lo1, hi1, lo2, hi2 = bounds.lo1, bounds.hi1, bounds.lo2, bounds.hi2
    pairs = (
        (normalize_feature(x, lo1, hi1), normalize_feature(y, lo2, hi2))
        for x, y in zip(xs, ys)
    )
    return build(pairs, grid)


def ncc(tn: Template, tr: Template) -> float:
    """Pearson correlation between two templates over all bins."""
    x = tn.bins.ravel()
    y = tr.bins.ravel()
    # flat templates: checked on the bins, since mean subtraction leaves rounding residue
    if x.min() == x.max() or y.min() == y.max():
        raise DegenerateTemplateError("template with zero bin variance")
    a = x - x.mean()
    b = y - y.mean()
    saa = float(np.dot(a, a))
    sbb = float(np.dot(b, b))
    r = float(np.dot(a, b)) / (math.sqrt(saa) * math.sqrt(sbb))
    return max(-1.0, min(1.0, r))


def similarity(tn: Template, tr: Template) -> float:
    """NCC with the degenerate-template policy applied.

    Two identical flat templates count as a perfect match; any other
    degenerate comparison scores 0 so the caller treats it as a change.
    """
    try:
        return ncc(tn, tr)
    except DegenerateTemplateError:
        if np.array_equal(tn.bins, tr.bins):
            return 1.0
        return 0.0
