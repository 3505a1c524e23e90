"""Sample-wise recursive IMU features.

Twelve features are produced for every incoming 6-axis sample. All of them
are recursive: the extractor only keeps a handful of scalars per tracked
channel, never the raw stream.

Feature order (index -> name) is fixed by ``FEATURE_NAMES``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional, Sequence, Tuple

from .errors import DegenerateInputError

FEATURE_NAMES: Tuple[str, ...] = (
    "norm_a",
    "norm_w",
    "der_ax",
    "der_wy",
    "der_normw",
    "g_x",
    "g_y",
    "g_z",
    "mc_wx",
    "mc_wy",
    "p2p_norma",
    "p2p_wx",
)
N_FEATURES = len(FEATURE_NAMES)

GAMMA_MC = 0.8
GAMMA_P2P = 0.7
HYST_FRACTION = 0.1
HYST_FLOOR = 1e-6

Vec3 = Tuple[float, float, float]


class Sample(NamedTuple):
    """One IMU reading: sample index, acceleration and angular velocity."""

    t: int
    a: Vec3
    w: Vec3


class FeatureVector(NamedTuple):
    norm_a: float
    norm_w: float
    der_ax: float
    der_wy: float
    der_normw: float
    g_x: float
    g_y: float
    g_z: float
    mc_wx: float
    mc_wy: float
    p2p_norma: float
    p2p_wx: float


def euclidean_norm(v: Sequence[float]) -> float:
    x, y, z = v
    return math.sqrt(x * x + y * y + z * z)


def gravity_components(a: Sequence[float]) -> Vec3:
    """Unit gravity direction from roll/pitch Euler angles.

    Raises DegenerateInputError when the acceleration has zero norm, since
    pitch is then undefined.
    """
    ax, ay, az = a
    norm = math.sqrt(ax * ax + ay * ay + az * az)
    if norm == 0.0:
        raise DegenerateInputError("zero-norm acceleration has no gravity direction")
    roll = math.atan2(ay, az)
    pitch = math.asin(max(-1.0, min(1.0, ax / norm)))
    cos_pitch = math.cos(pitch)
    return (math.sin(pitch), cos_pitch * math.sin(roll), cos_pitch * math.cos(roll))


def mean_crossing_step(
    mc: float, prev: float, u: float, avg: float, hyst: float, gamma: float = GAMMA_MC
) -> float:
    """Advance a hysteretic mean-crossing accumulator by one sample.

    ``avg`` is the running mean *before* ``u`` is folded in. A crossing only
    counts when the previous sample sits outside the band on one side and the
    current one lands outside it on the other side.
    """
    up = prev < avg - hyst and u >= avg + hyst
    down = prev > avg + hyst and u <= avg - hyst
    if up or down:
        return mc + abs(u - avg)
    return mc * gamma


def extrema_step(
    mx: float, mn: float, u: float, avg: float, gamma: float = GAMMA_P2P
) -> Tuple[float, float]:
    """Running max/min that relax toward the running mean when not renewed."""
    mx = u if u > mx else avg + gamma * (mx - avg)
    mn = u if u < mn else avg - gamma * (avg - mn)
    return mx, mn


class Derivative:
    """First-order difference; emits 0 for the first sample."""

    __slots__ = ("prev",)

    def __init__(self) -> None:
        self.prev: Optional[float] = None

    def update(self, u: float) -> float:
        prev = self.prev
        self.prev = u
        return 0.0 if prev is None else u - prev


class ChannelStats:
    """Running mean, variance, decaying extrema and mean-crossing state of one channel."""

    __slots__ = (
        "n",
        "avg",
        "sumsq",
        "prev",
        "mx",
        "mn",
        "mc",
        "p2p",
        "gamma_mc",
        "gamma_p2p",
        "hyst_fraction",
        "hyst_floor",
    )
    # gamma/hysteresis slots are configuration, not per-stream state
    STATE_SCALARS = 8

    def __init__(
        self,
        gamma_mc: float = GAMMA_MC,
        gamma_p2p: float = GAMMA_P2P,
        hyst_fraction: float = HYST_FRACTION,
        hyst_floor: float = HYST_FLOOR,
    ) -> None:
        self.gamma_mc = gamma_mc
        self.gamma_p2p = gamma_p2p
        self.hyst_fraction = hyst_fraction
        self.hyst_floor = hyst_floor
        self.reset()

    def reset(self) -> None:
        self.n = 0
        self.avg = 0.0
        self.sumsq = 0.0
        self.prev = 0.0
        self.mx = 0.0
        self.mn = 0.0
        self.mc = 0.0
        self.p2p = 0.0

    @property
    def variance(self) -> float:
        if self.n == 0:
            return 0.0
        return max(0.0, self.sumsq / self.n - self.avg * self.avg)

    def hysteresis(self) -> float:
        return max(self.hyst_fraction * math.sqrt(self.variance), self.hyst_floor)

    def update(self, u: float) -> None:
        if self.n == 0:
            self.n = 1
            self.avg = self.mx = self.mn = self.prev = u
            self.sumsq = u * u
            self.mc = 0.0
            self.p2p = 0.0
            return
        avg = self.avg
        self.mc = mean_crossing_step(
            self.mc, self.prev, u, avg, self.hysteresis(), self.gamma_mc
        )
        self.mx, self.mn = extrema_step(self.mx, self.mn, u, avg, self.gamma_p2p)
        self.p2p = self.mx - self.mn
        self.n += 1
        self.avg = avg + (u - avg) / self.n
        self.sumsq += u * u
        self.prev = u


class FeatureExtractor:
    """Stateful per-stream extractor of the twelve features.

    Parameters
    ----------
    gamma_mc, gamma_p2p : float
        Decay factors of the mean-crossing accumulators and running extrema.
    hyst_fraction : float
        Hysteresis half-width as a fraction of the channel's running std.
    hyst_floor : float
        Lower bound on the hysteresis half-width, in channel units.
    """

    def __init__(
        self,
        gamma_mc: float = GAMMA_MC,
        gamma_p2p: float = GAMMA_P2P,
        hyst_fraction: float = HYST_FRACTION,
        hyst_floor: float = HYST_FLOOR,
    ) -> None:
        params = (gamma_mc, gamma_p2p, hyst_fraction, hyst_floor)
        self._norm_a = ChannelStats(*params)
        self._wx = ChannelStats(*params)
        self._wy = ChannelStats(*params)
        self._der_ax = Derivative()
        self._der_wy = Derivative()
        self._der_normw = Derivative()
        self._gravity: Optional[Vec3] = None
        self._last_t: Optional[int] = None
        self.degenerate_count = 0

    def reset(self) -> None:
        """Restart every running statistic. Stream position tracking is kept."""
        for ch in (self._norm_a, self._wx, self._wy):
            ch.reset()
        for d in (self._der_ax, self._der_wy, self._der_normw):
            d.prev = None
        self._gravity = None

    def extract(self, s: Sample) -> FeatureVector:
        if self._last_t is not None and s.t != self._last_t + 1:
            raise ValueError(f"sample index {s.t} does not follow {self._last_t}")
        vec = self.update(*s.a, *s.w)
        self._last_t = s.t
        return vec

    def update(
        self, ax: float, ay: float, az: float, wx: float, wy: float, wz: float
    ) -> FeatureVector:
        """Fold one sample given as six scalars; no index bookkeeping."""
        norm_a = math.sqrt(ax * ax + ay * ay + az * az)
        norm_w = math.sqrt(wx * wx + wy * wy + wz * wz)
        if norm_a > 0.0:
            g = gravity_components((ax, ay, az))
            self._gravity = g
        else:
            self.degenerate_count += 1
            g = self._gravity if self._gravity is not None else (0.0, 0.0, 1.0)
        na, cx, cy = self._norm_a, self._wx, self._wy
        na.update(norm_a)
        cx.update(wx)
        cy.update(wy)
        return FeatureVector(
            norm_a,
            norm_w,
            self._der_ax.update(ax),
            self._der_wy.update(wy),
            self._der_normw.update(norm_w),
            g[0],
            g[1],
            g[2],
            cx.mc,
            cy.mc,
            na.p2p,
            cx.p2p,
        )

    @staticmethod
    def state_scalars() -> int:
        """Number of scalars held as per-stream state (independent of stream length)."""
        channels = 3 * ChannelStats.STATE_SCALARS
        derivatives = 3
        gravity = 3
        counter = 1
        return channels + derivatives + gravity + counter

    def nbytes(self, scalar_bytes: int = 4) -> int:
        return self.state_scalars() * scalar_bytes
