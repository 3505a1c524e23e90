"""Streaming activity-change gate.

The gate consumes 6-axis samples one at a time and, at every hop boundary of
the sliding window grid, emits a :class:`WindowVerdict`. Its life cycle is

* ``BUILDING_REFERENCE``: collect W fresh feature vectors, rank the features
  by dispersion, keep the best two, freeze their window extrema as bin bounds
  and build the reference template;
* ``MONITORING``: at each hop, build the current template from the last W
  feature vectors and compare it to the reference with NCC. A score below the
  threshold is a transition, which resets all running statistics and starts a
  new reference.

Window ``j`` covers samples ``[j*hop, j*hop + W)``; its verdict is produced
when sample ``j*hop + W - 1`` arrives.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import deque
from dataclasses import dataclass
from typing import Deque, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from . import features as feat
from .dispersion import DispersionAccumulator, rank_features
from .features import FEATURE_NAMES, N_FEATURES, FeatureExtractor, FeatureVector, Sample
from .template import GRID, BinBounds, Template, build_from_features, similarity

REBUILD_MODES = ("next_window", "trigger_window")


@dataclass(frozen=True)
class GateConfig:
    """Gate parameters.

    ``hop`` defaults to half the window (50% overlap). ``rebuild`` selects
    whether a new reference is taken from the W samples following a detected
    transition (``"next_window"``) or from the window that triggered it
    (``"trigger_window"``).
    """

    window: int
    threshold: float = 0.5
    hop: Optional[int] = None
    hyst_fraction: float = feat.HYST_FRACTION
    gamma_mc: float = feat.GAMMA_MC
    gamma_p2p: float = feat.GAMMA_P2P
    grid: int = GRID
    rebuild: str = "next_window"
    sample_rate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.hop is None:
            object.__setattr__(self, "hop", self.window // 2)
        if self.window < 4:
            raise ValueError(f"window must be >= 4 samples, got {self.window}")
        if self.hop < 1:
            raise ValueError(f"hop must be >= 1 sample, got {self.hop}")
        if not -1.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (-1, 1), got {self.threshold}")
        if self.grid < 2:
            raise ValueError(f"grid must be >= 2, got {self.grid}")
        if self.rebuild not in REBUILD_MODES:
            raise ValueError(f"rebuild must be one of {REBUILD_MODES}, got {self.rebuild!r}")

    @classmethod
    def for_rate(
        cls, sample_rate: float, window_s: float = 3.0, overlap: float = 0.5, **kwargs
    ) -> "GateConfig":
        if window_s <= 0:
            raise ValueError(f"window_s must be > 0, got {window_s}")
        if not 0.0 <= overlap < 1.0:
            raise ValueError(f"overlap must lie in [0, 1), got {overlap}")
        window = int(round(window_s * sample_rate))
        hop = max(1, int(round(window * (1.0 - overlap))))
        return cls(window=window, hop=hop, sample_rate=sample_rate, **kwargs)

    def n_windows(self, n_samples: int) -> int:
        if n_samples < self.window:
            return 0
        return (n_samples - self.window) // self.hop + 1

    def window_end(self, index: int) -> int:
        return index * self.hop + self.window - 1


class Phase(enum.Enum):
    BUILDING_REFERENCE = "building_reference"
    MONITORING = "monitoring"


@dataclass(frozen=True)
class WindowVerdict:
    window_index: int
    end_sample: int
    ncc: Optional[float]
    transition: bool
    features: Optional[Tuple[int, int]] = None
    # True for the window whose samples formed a new reference template
    reference: bool = False

    def feature_names(self) -> Tuple[str, str]:
        if self.features is None:
            return ("", "")
        return FEATURE_NAMES[self.features[0]], FEATURE_NAMES[self.features[1]]


class Gate:
    """One gate instance per stream.

    Set ``detect=False`` to only report NCC values (never transitions); the
    reference is then rebuilt only through :meth:`force_rebuild`.
    """

    def __init__(self, config: GateConfig, detect: bool = True) -> None:
        self.config = config
        self.detect = detect
        self.extractor = FeatureExtractor(
            gamma_mc=config.gamma_mc,
            gamma_p2p=config.gamma_p2p,
            hyst_fraction=config.hyst_fraction,
        )
        self._buffer: Deque[FeatureVector] = deque(maxlen=config.window)
        self._accs = [DispersionAccumulator() for _ in range(N_FEATURES)]
        self.phase = Phase.BUILDING_REFERENCE
        self.selected: Optional[Tuple[int, int]] = None
        self.bounds: Optional[BinBounds] = None
        self.reference: Optional[Template] = None
        self.n_samples = 0
        self._ref_end = config.window - 1
        self._ref_start = 0

    # -- stream interface -------------------------------------------------

    def step(self, s: Sample) -> Optional[WindowVerdict]:
        if s.t != self.n_samples:
            raise ValueError(f"expected sample index {self.n_samples}, got {s.t}")
        return self.step_values(*s.a, *s.w)

    def step_values(
        self, ax: float, ay: float, az: float, wx: float, wy: float, wz: float
    ) -> Optional[WindowVerdict]:
        cfg = self.config
        t = self.n_samples
        self.n_samples = t + 1
        fv = self.extractor.update(ax, ay, az, wx, wy, wz)
        self._buffer.append(fv)
        building = self.phase is Phase.BUILDING_REFERENCE
        if building and t >= self._ref_start:
            for acc, x in zip(self._accs, fv):
                acc.update(x)

        offset = t - (cfg.window - 1)
        if offset < 0 or offset % cfg.hop:
            return None
        index = offset // cfg.hop

        if building:
            if t < self._ref_end:
                return WindowVerdict(index, t, None, False)
            self._build_reference(self._accs)
            self.phase = Phase.MONITORING
            return WindowVerdict(index, t, None, False, self.selected, reference=True)

        f1, f2 = self.selected
        current = build_from_features(
            [v[f1] for v in self._buffer], [v[f2] for v in self._buffer], self.bounds, cfg.grid
        )
        score = similarity(current, self.reference)
        transition = self.detect and score < cfg.threshold
        verdict = WindowVerdict(index, t, score, transition, self.selected)
        if transition:
            self._restart(t)
        return verdict

    def feed(self, data: Union[np.ndarray, Iterable[Sequence[float]]]) -> List[WindowVerdict]:
        """Process rows of (ax, ay, az, wx, wy, wz); return the verdicts produced."""
        rows = data.tolist() if isinstance(data, np.ndarray) else data
        out = []
        step = self.step_values
        for row in rows:
            v = step(*row)
            if v is not None:
                out.append(v)
        return out

    def force_rebuild(self) -> None:
        """Restart as if the verdict just emitted had been a transition."""
        cfg = self.config
        last = self.n_samples - 1
        offset = last - (cfg.window - 1)
        if offset < 0 or offset % cfg.hop:
            raise RuntimeError("force_rebuild must be called right after a verdict")
        self._restart(last)

    # -- internals --------------------------------------------------------

    def _restart(self, t: int) -> None:
        self.extractor.reset()
        for acc in self._accs:
            acc.reset()
        cfg = self.config
        if cfg.rebuild == "trigger_window" and len(self._buffer) == cfg.window and self.reference is not None:
            accs = [DispersionAccumulator() for _ in range(N_FEATURES)]
            for fv in self._buffer:
                for acc, x in zip(accs, fv):
                    acc.update(x)
            self._build_reference(accs)
            return
        # next grid boundary whose window lies entirely after t
        k = -(-(t + 1) // cfg.hop)
        self._ref_end = cfg.window - 1 + k * cfg.hop
        self._ref_start = self._ref_end - cfg.window + 1
        self.phase = Phase.BUILDING_REFERENCE

    def _build_reference(self, accs: Sequence[DispersionAccumulator]) -> None:
        f1, f2 = rank_features(accs)[:2]
        xs = [v[f1] for v in self._buffer]
        ys = [v[f2] for v in self._buffer]
        self.selected = (f1, f2)
        self.bounds = BinBounds.from_values(xs, ys)
        self.reference = build_from_features(xs, ys, self.bounds, self.config.grid)


def run_gate(config: GateConfig, data: np.ndarray, detect: bool = True) -> List[WindowVerdict]:
    return Gate(config, detect=detect).feed(data)


# -- verdict CSV ------------------------------------------------------------

VERDICT_COLUMNS = ("window_index", "end_sample", "ncc", "transition", "f1", "f2")


def write_verdicts(verdicts: Iterable[WindowVerdict], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(VERDICT_COLUMNS)
    for v in verdicts:
        f1, f2 = v.feature_names()
        w.writerow(
            [
                v.window_index,
                v.end_sample,
                "" if v.ncc is None else repr(v.ncc),
                int(v.transition),
                f1,
                f2,
            ]
        )


def verdicts_to_csv(verdicts: Iterable[WindowVerdict]) -> str:
    buf = io.StringIO()
    write_verdicts(verdicts, buf)
    return buf.getvalue()


def read_verdicts(src: TextIO) -> List[WindowVerdict]:
    reader = csv.DictReader(src)
    if tuple(reader.fieldnames or ()) != VERDICT_COLUMNS:
        raise ValueError(f"unexpected verdict header {reader.fieldnames}")
    out = []
    for row in reader:
        names = (row["f1"], row["f2"])
        pair = None
        if names[0]:
            pair = (FEATURE_NAMES.index(names[0]), FEATURE_NAMES.index(names[1]))
        out.append(
            WindowVerdict(
                int(row["window_index"]),
                int(row["end_sample"]),
                float(row["ncc"]) if row["ncc"] else None,
                row["transition"] == "1",
                pair,
            )
        )
    return out


# -- static cost model ------------------------------------------------------
#
# Counting convention: every add, sub, mul, div, sqrt and trigonometric call
# is one FLOP. Comparisons, abs, min/max selection and integer bookkeeping
# are free.

# per-sample cost of shared intermediate quantities
_COMPONENT_FLOPS = {
    "mag_a": 6,  # 3 mul, 2 add, sqrt
    "mag_w": 6,
    "gravity": 9,  # atan2, div, asin, sin, cos, sin, cos, 2 mul
    "stats_norma": 6,  # running mean (4) + sum of squares (2)
    "stats_wx": 6,
    "stats_wy": 6,
    "hyst_wx": 5,  # variance (3), sqrt, scale
    "hyst_wy": 5,
}
# per-sample cost owned by each feature, plus the shared pieces it needs
_FEATURE_FLOPS = {
    "norm_a": (0, ("mag_a",)),
    "norm_w": (0, ("mag_w",)),
    "der_ax": (1, ()),
    "der_wy": (1, ()),
    "der_normw": (1, ("mag_w",)),
    "g_x": (0, ("mag_a", "gravity")),
    "g_y": (0, ("mag_a", "gravity")),
    "g_z": (0, ("mag_a", "gravity")),
    "mc_wx": (4, ("stats_wx", "hyst_wx")),  # band edges (2), |u-avg| and accumulate (2)
    "mc_wy": (4, ("stats_wy", "hyst_wy")),
    "p2p_norma": (7, ("mag_a", "stats_norma")),  # decayed max (3), min (3), difference
    "p2p_wx": (7, ("stats_wx",)),
}
_WELFORD_UPDATE = 12  # count, delta, mean (2), M2 (3), successive diff (3), square sum (2)
_SCORE = 7  # var, mssd, rms^2, two normalisations, eps, ratio
_NORMALIZE_BIN = 3  # sub, div, scale-to-grid per feature and sample


@dataclass(frozen=True)
class FlopBreakdown:
    features: int  # (A) feature extraction over one window
    reference: int  # (B) dispersion statistics and feature ranking
    current: int  # (C) normalisation and histogram of one template
    compare: int  # (D) NCC

    @property
    def total(self) -> int:
        return self.features + self.reference + self.current + self.compare


def feature_flops_per_sample(names: Sequence[str] = FEATURE_NAMES) -> int:
    own = 0
    shared = set()
    for name in names:
        cost, deps = _FEATURE_FLOPS[name]
        own += cost
        shared.update(deps)
    return own + sum(_COMPONENT_FLOPS[c] for c in shared)


def ncc_flops(bins: int) -> int:
    means = 2 * bins  # (bins - 1) adds + 1 div, twice
    centre = 2 * bins
    dots = 3 * (2 * bins - 1)
    return means + centre + dots + 4  # 2 sqrt, mul, div


def flop_breakdown(config: GateConfig, features: Sequence[str] = FEATURE_NAMES) -> FlopBreakdown:
    """Per-window-step FLOPs, split by phase (worst case: reference phase included)."""
    w = config.window
    bins = config.grid * config.grid
    n = len(features)
    return FlopBreakdown(
        features=w * feature_flops_per_sample(features),
        reference=w * n * _WELFORD_UPDATE + n * _SCORE,
        current=w * 2 * _NORMALIZE_BIN + 2 + bins,  # 2 spans, then counts / n
        compare=ncc_flops(bins),
    )


def flops_per_step(config: GateConfig, features: Sequence[str] = FEATURE_NAMES) -> int:
    return flop_breakdown(config, features).total


def state_size_bytes(config: GateConfig, scalar_bytes: int = 4) -> int:
    """Memory of the gate state: feature ring buffer, accumulators and templates."""
    bins = config.grid * config.grid
    ring = config.window * N_FEATURES
    extractor = FeatureExtractor.state_scalars()
    dispersion = N_FEATURES * DispersionAccumulator.STATE_SCALARS
    templates = 2 * bins  # reference + current
    bounds_and_pair = 4 + 2
    control = 5  # phase, sample counter, reference end, threshold, window counter
    return scalar_bytes * (ring + extractor + dispersion + templates + bounds_and_pair + control)
