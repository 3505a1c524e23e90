"""Windowed ground truth, relaxed detection matching, metrics and compute savings.

A ground-truth change point at sample ``c`` is attributed to the earliest
window that contains it, ``w``. A transition verdict anywhere in windows
``w-1 .. w+2`` (the tolerance zone) counts as a correct detection.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from .errors import ProtocolError

ZONE_BEFORE = 1
ZONE_AFTER = 2
DENDRON_FLOPS = 853_000


def change_window(c: int, window: int, hop: int) -> int:
    """Index of the earliest window ``[j*hop, j*hop + window)`` containing sample ``c``."""
    return max(0, -(-(c - window + 1) // hop))


@dataclass(frozen=True)
class WindowRecord:
    index: int
    contains_transition: bool
    in_zone: bool


@dataclass(frozen=True)
class WindowTruth:
    n_windows: int
    change_windows: Tuple[int, ...]
    contains: Tuple[bool, ...]
    before: int = ZONE_BEFORE
    after: int = ZONE_AFTER

    @classmethod
    def from_change_points(
        cls,
        change_points: Sequence[int],
        n_samples: int,
        window: int,
        hop: int,
        before: int = ZONE_BEFORE,
        after: int = ZONE_AFTER,
    ) -> "WindowTruth":
        n = 0 if n_samples < window else (n_samples - window) // hop + 1
        contains = [False] * n
        cws = []
        for c in sorted(change_points):
            w = change_window(c, window, hop)
            if w >= n:
                continue
            cws.append(w)
            j = w
            while j < n and j * hop <= c:
                contains[j] = True
                j += 1
        return cls(n, tuple(cws), tuple(contains), before, after)

    @classmethod
    def from_windows(
        cls, n_windows: int, change_windows: Sequence[int], before: int = ZONE_BEFORE, after: int = ZONE_AFTER
    ) -> "WindowTruth":
        """Truth given directly as change-point windows (contains = change window itself)."""
        cws = tuple(sorted(change_windows))
        if any(not 0 <= w < n_windows for w in cws):
            raise ValueError(f"change windows {cws} outside [0, {n_windows})")
        contains = tuple(j in cws for j in range(n_windows))
        return cls(n_windows, cws, contains, before, after)

    def zone(self, k: int) -> range:
        w = self.change_windows[k]
        return range(max(0, w - self.before), min(self.n_windows, w + self.after + 1))

    def zone_mask(self) -> List[bool]:
        mask = [False] * self.n_windows
        for k in range(len(self.change_windows)):
            for j in self.zone(k):
                mask[j] = True
        return mask

    def windows(self) -> List[WindowRecord]:
        mask = self.zone_mask()
        return [WindowRecord(j, self.contains[j], mask[j]) for j in range(self.n_windows)]


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> Optional[float]:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def tnr(self) -> Optional[float]:
        d = self.tn + self.fp
        return self.tn / d if d else None

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


def _transition_flags(verdicts: Sequence) -> List[bool]:
    flags = []
    for j, v in enumerate(verdicts):
        if isinstance(v, bool):
            flags.append(v)
            continue
        if v.window_index != j:
            raise ProtocolError(f"verdict {j} carries window index {v.window_index}")
        flags.append(bool(v.transition))
    return flags


def relaxed_match(verdicts: Sequence, truth: WindowTruth) -> ConfusionCounts:
    """Score per-window transition verdicts against ground truth.

    Each change point yields exactly one TP or FN: the first transition
    verdict landing in a still-unclaimed zone claims it (zones are claimed
    left to right). Further verdicts inside any zone are absorbed. Outside
    the zones every window is an FP or TN. Windows inside zones never
    count as TN.

    ``verdicts`` holds one entry per window, either booleans or
    ``WindowVerdict`` objects with consecutive window indices.
    """
    flags = _transition_flags(verdicts)
    if len(flags) != truth.n_windows:
        raise ProtocolError(f"{len(flags)} verdicts for {truth.n_windows} windows")
    zones = [truth.zone(k) for k in range(len(truth.change_windows))]
    in_zone = truth.zone_mask()
    claimed = [False] * len(zones)
    counts = ConfusionCounts()
    for j, fired in enumerate(flags):
        if not in_zone[j]:
            if fired:
                counts.fp += 1
            else:
                counts.tn += 1
            continue
        if not fired:
            continue
        for k, z in enumerate(zones):
            if not claimed[k] and j in z:
                claimed[k] = True
                counts.tp += 1
                break
    counts.fn = claimed.count(False)
    return counts


@dataclass(frozen=True)
class Summary:
    tpr_mean: float
    tpr_std: float
    tnr_mean: float
    tnr_std: float
    n_tpr: int
    n_tnr: int


def _mean_std(xs: Sequence[float]) -> Tuple[float, float]:
    if not xs:
        return math.nan, math.nan
    m = sum(xs) / len(xs)
    return m, math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def metrics(per_subject: Iterable[ConfusionCounts]) -> Summary:
    """Mean and population std of TPR and TNR across subjects.

    Subjects where a rate is undefined (no positives, or no negatives) are
    left out of that rate's aggregate.
    """
    counts = list(per_subject)
    if not counts:
        raise ValueError("metrics needs at least one subject")
    tprs = [c.tpr for c in counts if c.tpr is not None]
    tnrs = [c.tnr for c in counts if c.tnr is not None]
    tm, ts = _mean_std(tprs)
    nm, ns = _mean_std(tnrs)
    return Summary(tm, ts, nm, ns, len(tprs), len(tnrs))


@dataclass(frozen=True)
class CostReport:
    n_windows: int
    n_invocations: int
    gate_flops: int
    har_flops: int
    always_on: int
    gated: int
    reduction: float

    def as_dict(self) -> dict:
        return asdict(self)


def cost_model(n_windows: int, n_invocations: int, gate_flops: int, har_flops: int = DENDRON_FLOPS) -> CostReport:
    """Always-on HAR cost versus gate-always-on plus HAR-on-demand."""
    if not 0 <= n_invocations <= n_windows:
        raise ValueError(f"invocations {n_invocations} not in [0, {n_windows}]")
    if gate_flops <= 0 or har_flops <= 0:
        raise ValueError("FLOP counts must be positive")
    always_on = n_windows * har_flops
    gated = n_windows * gate_flops + n_invocations * har_flops
    reduction = 1.0 - gated / always_on if always_on else 0.0
    return CostReport(n_windows, n_invocations, gate_flops, har_flops, always_on, gated, reduction)


# -- per-subject runs and reports ----------------------------------------------


@dataclass(frozen=True)
class SubjectResult:
    subject: str
    counts: ConfusionCounts
    n_windows: int
    n_invocations: int


def window_flags(verdicts: Sequence, n_windows: int) -> List[bool]:
    """Per-window transition flags; windows without a verdict count as no transition."""
    flags = [False] * n_windows
    for v in verdicts:
        if v.window_index < n_windows and v.transition:
            flags[v.window_index] = True
    return flags


def evaluate_flags(subject: str, flags: Sequence[bool], truth: WindowTruth) -> SubjectResult:
    counts = relaxed_match(list(flags), truth)
    return SubjectResult(subject, counts, truth.n_windows, sum(flags))


def format_table(results: Sequence[SubjectResult], summary: Summary, cost: Optional[CostReport] = None) -> str:
    def pct(x: Optional[float]) -> str:
        return "   -  " if x is None or math.isnan(x) else f"{100 * x:6.2f}"

    lines = [f"{'subject':<12} {'TP':>5} {'FN':>5} {'FP':>5} {'TN':>5} {'TPR%':>6} {'TNR%':>6} {'invoc':>6}"]
    for r in results:
        c = r.counts
        lines.append(
            f"{r.subject:<12} {c.tp:>5} {c.fn:>5} {c.fp:>5} {c.tn:>5} "
            f"{pct(c.tpr)} {pct(c.tnr)} {r.n_invocations:>6}"
        )
    lines.append(
        f"aggregate    TPR {100 * summary.tpr_mean:.2f} +- {100 * summary.tpr_std:.2f} %   "
        f"TNR {100 * summary.tnr_mean:.2f} +- {100 * summary.tnr_std:.2f} %"
    )
    if cost is not None:
        lines.append(
            f"cost: {cost.n_invocations}/{cost.n_windows} windows invoke HAR, "
            f"gate {cost.gate_flops} FLOPs/step, HAR {cost.har_flops} FLOPs, "
            f"reduction {100 * cost.reduction:.1f} %"
        )
    return "\n".join(lines)


def results_csv(results: Sequence[SubjectResult], summary: Summary) -> str:
    rows = ["subject,tp,fn,fp,tn,tpr,tnr,n_windows,n_invocations"]

    def fmt(x: Optional[float]) -> str:
        return "" if x is None or math.isnan(x) else repr(x)

    for r in results:
        c = r.counts
        rows.append(
            f"{r.subject},{c.tp},{c.fn},{c.fp},{c.tn},{fmt(c.tpr)},{fmt(c.tnr)},"
            f"{r.n_windows},{r.n_invocations}"
        )
    total = ConfusionCounts()
    for r in results:
        total = total + r.counts
    rows.append(
        f"ALL,{total.tp},{total.fn},{total.fp},{total.tn},{fmt(summary.tpr_mean)},"
        f"{fmt(summary.tnr_mean)},{sum(r.n_windows for r in results)},"
        f"{sum(r.n_invocations for r in results)}"
    )
    return "\n".join(rows) + "\n"


def _json_num(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def results_json(results: Sequence[SubjectResult], summary: Summary, cost: Optional[CostReport] = None, **extra) -> str:
    doc = {
        "subjects": [
            {
                "subject": r.subject,
                **asdict(r.counts),
                "tpr": r.counts.tpr,
                "tnr": r.counts.tnr,
                "n_windows": r.n_windows,
                "n_invocations": r.n_invocations,
            }
            for r in results
        ],
        "aggregate": {k: _json_num(v) for k, v in asdict(summary).items()},
        "cost": cost.as_dict() if cost is not None else None,
    }
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
