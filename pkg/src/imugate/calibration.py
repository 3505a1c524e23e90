"""Supervised one-shot selection of the NCC threshold.

The gate is replayed on a short labelled recording with detection disabled
and its reference rebuilt at the known transitions. Every monitoring window
yields an NCC value and a class (1 = transition, 0 = stable). Three ways of
labelling the windows around a change point are available:

* ``"zone"`` (default): every window of the tolerance zone is class 1;
  rebuild after the zone.
* ``"contains"``: windows that contain the change point are class 1; the
  other windows of its tolerance zone are left out. The reference is rebuilt
  right after the last window containing it.
* ``"zone_min"``: one class-1 value per change point, the lowest NCC in its
  tolerance zone; rebuild after the zone.

Windows outside every tolerance zone are class 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .datasets import LabeledStream
from .errors import InsufficientDataError
from .evaluation import WindowTruth
from .gate import Gate, GateConfig

DEFAULT_WEIGHT = 0.7


@dataclass
class LabeledNccSeries:
    ncc: List[float] = field(default_factory=list)
    labels: List[int] = field(default_factory=list)

    def add(self, value: float, label: int) -> None:
        self.ncc.append(float(value))
        self.labels.append(int(label))

    def extend(self, other: "LabeledNccSeries") -> None:
        self.ncc.extend(other.ncc)
        self.labels.extend(other.labels)

    def __len__(self) -> int:
        return len(self.ncc)

    def class_values(self, label: int) -> List[float]:
        return [v for v, c in zip(self.ncc, self.labels) if c == label]

    @property
    def n_positive(self) -> int:
        return sum(self.labels)

    @property
    def n_negative(self) -> int:
        return len(self.labels) - self.n_positive


LABELINGS = ("zone", "contains", "zone_min")


def collect(stream: LabeledStream, config: GateConfig, labeling: str = "zone") -> LabeledNccSeries:
    """Replay the gate on ``stream`` with rebuilds forced at labelled transitions."""
    if labeling not in LABELINGS:
        raise ValueError(f"labeling must be one of {LABELINGS}, got {labeling!r}")
    n_windows = config.n_windows(len(stream))
    if n_windows < 2:
        raise InsufficientDataError(
            f"calibration stream has {len(stream)} samples, fewer than 2 windows of {config.window}"
        )
    truth = WindowTruth.from_change_points(stream.change_points, len(stream), config.window, config.hop)
    zones = [truth.zone(k) for k in range(len(truth.change_windows))]
    in_zone = truth.zone_mask()
    owner: Dict[int, int] = {}
    for k, z in enumerate(zones):
        for j in z:
            owner.setdefault(j, k)
    if labeling == "contains":
        rebuild_after = set()
        for w in truth.change_windows:
            j = w
            while j + 1 < truth.n_windows and truth.contains[j + 1] and j + 1 not in truth.change_windows:
                j += 1
            rebuild_after.add(j)
    else:
        rebuild_after = {z[-1] for z in zones if len(z)}
    zone_end = {z[-1]: k for k, z in enumerate(zones) if len(z)}
    lowest: List[Optional[float]] = [None] * len(zones)

    series = LabeledNccSeries()
    gate = Gate(config, detect=False)
    step = gate.step_values
    for row in stream.data.tolist():
        v = step(*row)
        if v is None:
            continue
        j = v.window_index
        if v.ncc is not None:
            if not in_zone[j]:
                series.add(v.ncc, 0)
            elif labeling == "zone":
                series.add(v.ncc, 1)
            elif labeling == "contains":
                if truth.contains[j]:
                    series.add(v.ncc, 1)
            else:
                k = owner[j]
                if lowest[k] is None or v.ncc < lowest[k]:
                    lowest[k] = v.ncc
        if labeling == "zone_min" and j in zone_end and lowest[zone_end[j]] is not None:
            series.add(lowest[zone_end[j]], 1)
        if j in rebuild_after:
            gate.force_rebuild()
    return series


def collect_many(
    streams: Iterable[LabeledStream], config: GateConfig, labeling: str = "zone"
) -> LabeledNccSeries:
    series = LabeledNccSeries()
    for s in streams:
        series.extend(collect(s, config, labeling))
    return series


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    tpr: float
    tnr: float
    weight: float
    window: Optional[int] = None
    sample_rate: Optional[float] = None
    n_positive: int = 0
    n_negative: int = 0

    @property
    def objective(self) -> float:
        return self.weight * self.tpr + (1.0 - self.weight) * self.tnr

    def to_text(self) -> str:
        keys = ("threshold", "weight", "tpr", "tnr", "window", "sample_rate", "n_positive", "n_negative")
        return "".join(f"{k}={getattr(self, k)!r}\n" for k in keys)

    @classmethod
    def from_text(cls, text: str) -> "CalibrationResult":
        vals: Dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            vals[key.strip()] = value.strip()
        missing = {"threshold", "weight", "tpr", "tnr"} - vals.keys()
        if missing:
            raise ValueError(f"calibration file lacks {sorted(missing)}")

        def opt(key: str, conv):
            v = vals.get(key)
            return None if v in (None, "None") else conv(v)

        return cls(
            threshold=float(vals["threshold"]),
            tpr=float(vals["tpr"]),
            tnr=float(vals["tnr"]),
            weight=float(vals["weight"]),
            window=opt("window", int),
            sample_rate=opt("sample_rate", float),
            n_positive=int(vals.get("n_positive", 0)),
            n_negative=int(vals.get("n_negative", 0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CalibrationResult":
        return cls.from_text(Path(path).read_text())


def candidate_thresholds(values: Iterable[float]) -> List[float]:
    """Lowest value, midpoints of consecutive distinct values, and just above the highest.

    Together these realise every distinct split of the values under the
    rule ``ncc < threshold``. Candidates outside (-1, 1) are dropped since the
    gate cannot use them.
    """
    v = np.unique(np.asarray(list(values), dtype=float))
    if v.size == 0:
        return []
    cands = [float(v[0])]
    cands.extend(float(x) for x in (v[:-1] + v[1:]) / 2.0)
    cands.append(float(np.nextafter(v[-1], np.inf)))
    return [c for c in cands if -1.0 < c < 1.0]


def fit_threshold(series: LabeledNccSeries, weight: float = DEFAULT_WEIGHT) -> CalibrationResult:
    """Threshold maximising ``weight*TPR + (1-weight)*TNR`` for the rule ``ncc < threshold``.

    Ties go to the higher TPR, then to the lower threshold.
    """
    if not 0.0 < weight < 1.0:
        raise ValueError(f"weight must lie in (0, 1), got {weight}")
    pos = np.sort(np.asarray(series.class_values(1), dtype=float))
    neg = np.sort(np.asarray(series.class_values(0), dtype=float))
    if pos.size == 0 or neg.size == 0:
        raise InsufficientDataError(
            f"calibration needs both classes, got {pos.size} transition and "
            f"{neg.size} stable windows"
        )
    n1, n0 = pos.size, neg.size
    best = None
    for th in candidate_thresholds(series.ncc):
        tp = int(np.searchsorted(pos, th, side="left"))
        tn = n0 - int(np.searchsorted(neg, th, side="left"))
        tpr = tp / n1
        tnr = tn / n0
        obj = weight * tpr + (1.0 - weight) * tnr
        if best is None or obj > best[0] or (obj == best[0] and tpr > best[1]):
            best = (obj, tpr, tnr, th)
    if best is None:
        raise InsufficientDataError("no admissible threshold in (-1, 1)")
    _, tpr, tnr, th = best
    return CalibrationResult(th, tpr, tnr, weight, n_positive=n1, n_negative=n0)


def class_quartiles(series: LabeledNccSeries) -> Dict[int, List[float]]:
    """Min, Q1, median, Q3, max of the NCC values of each class."""
    out = {}
    for label in (0, 1):
        vals = series.class_values(label)
        if vals:
            out[label] = [float(q) for q in np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])]
    return out


def calibrate(
    streams: Iterable[LabeledStream],
    config: GateConfig,
    weight: float = DEFAULT_WEIGHT,
    labeling: str = "zone",
) -> Tuple[CalibrationResult, LabeledNccSeries]:
    """Collect NCC values from ``streams`` and fit the threshold; returns (result, series)."""
    series = collect_many(streams, config, labeling)
    res = fit_threshold(series, weight)
    res = CalibrationResult(
        res.threshold,
        res.tpr,
        res.tnr,
        res.weight,
        config.window,
        config.sample_rate,
        res.n_positive,
        res.n_negative,
    )
    return res, series
