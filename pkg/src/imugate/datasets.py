"""Labelled IMU streams: dataset loaders and a synthetic generator.

All loaders return :class:`LabeledStream` objects whose ``data`` array holds
``(ax, ay, az, wx, wy, wz)`` rows in the units recorded by the device.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .errors import DataFormatError, EmptyStreamError
from .features import Sample

log = logging.getLogger(__name__)

PathLike = Union[str, Path]
CHANNELS = ("ax", "ay", "az", "wx", "wy", "wz")


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # exclusive
    label: str

    def __len__(self) -> int:
        return self.end - self.start


@dataclass
class LabeledStream:
    sample_rate: float
    device: str
    subject: str
    data: np.ndarray
    segments: List[Segment]
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != 6:
            raise ValueError(f"data must have shape (N, 6), got {self.data.shape}")
        n = len(self.data)
        pos = 0
        for seg in self.segments:
            if seg.start != pos or seg.end <= seg.start:
                raise ValueError(f"segments are not contiguous at sample {pos}: {seg}")
            pos = seg.end
        if pos != n:
            raise ValueError(f"segments cover {pos} samples, stream has {n}")

    def __len__(self) -> int:
        return len(self.data)

    @property
    def change_points(self) -> List[int]:
        """First sample index of every segment after the first."""
        return [seg.start for seg in self.segments[1:]]

    @property
    def stream_id(self) -> str:
        """Subject id, qualified by the recording protocol when there is one."""
        protocol = self.meta.get("protocol")
        return f"{protocol}_{self.subject}" if protocol else self.subject

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def labels(self) -> List[str]:
        out: List[str] = []
        for seg in self.segments:
            out.extend([seg.label] * len(seg))
        return out

    def samples(self) -> Iterator[Sample]:
        for t, row in enumerate(self.data.tolist()):
            yield Sample(t, (row[0], row[1], row[2]), (row[3], row[4], row[5]))

    # normalized CSV dump ---------------------------------------------------

    def write_csv(self, out: TextIO) -> None:
        out.write(
            f"# sample_rate={self.sample_rate!r} device={self.device} subject={self.subject}\n"
        )
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("t",) + CHANNELS + ("label",))
        labels = self.labels()
        for t, (row, label) in enumerate(zip(self.data.tolist(), labels)):
            w.writerow([t] + [repr(v) for v in row] + [label])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, src: TextIO, name: str = "<stream>") -> "LabeledStream":
        first = src.readline()
        meta = dict(re.findall(r"(\w+)=(\S+)", first)) if first.startswith("#") else {}
        if "sample_rate" not in meta:
            raise DataFormatError(f"{name}:1: missing '# sample_rate=...' header")
        reader = csv.reader(src)
        header = next(reader, None)
        if header is None or tuple(header) != ("t",) + CHANNELS + ("label",):
            raise DataFormatError(f"{name}:2: unexpected column header {header}")
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=3):
            if len(rec) != 8:
                raise DataFormatError(f"{name}:{lineno}: expected 8 fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec[1:7]])
            except ValueError as exc:
                raise DataFormatError(f"{name}:{lineno}: {exc}") from None
            labels.append(rec[7])
        if not rows:
            raise EmptyStreamError(f"{name}: no samples")
        return cls(
            float(meta["sample_rate"]),
            meta.get("device", "synthetic"),
            meta.get("subject", Path(name).stem),
            np.asarray(rows),
            segments_from_labels(labels),
        )


def segments_from_labels(labels: Sequence[str]) -> List[Segment]:
    segs: List[Segment] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segs.append(Segment(start, i, labels[start]))
            start = i
    return segs


def load_csv_streams(path: PathLike) -> List[LabeledStream]:
    """Load streams written by :meth:`LabeledStream.write_csv` (file or directory)."""
    path = Path(path)
    files = sorted(path.rglob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no .csv streams under {path}")
    out = []
    for f in files:
        with open(f, newline="") as fh:
            out.append(LabeledStream.read_csv(fh, name=str(f)))
    return out


# -- UCA-EHAR ---------------------------------------------------------------

UCA_EHAR_RATE = 26.0
UCA_EHAR_LABELS = {
    "LYING": "lying",
    "RUNNING": "running",
    "SITTING": "sitting",
    "STAIRS": "stairs",
    "WALKING_UPSTAIRS": "stairs",
    "WALKING_DOWNSTAIRS": "stairs",
    "UPSTAIRS": "stairs",
    "DOWNSTAIRS": "stairs",
    "STANDING": "standing",
    "WALKING": "walking",
    "STAND_TO_SIT": "stand_to_sit",
    "SIT_TO_STAND": "sit_to_stand",
    "SIT_TO_LIE": "sit_to_lie",
    "LIE_TO_SIT": "lie_to_sit",
}
UCA_EHAR_DISCARDED = {"DRINKING"}

_UCA_COLUMNS = {
    "ax": ("ax", "acc_x", "accx"),
    "ay": ("ay", "acc_y", "accy"),
    "az": ("az", "acc_z", "accz"),
    "wx": ("gx", "gyr_x", "gyro_x", "wx"),
    "wy": ("gy", "gyr_y", "gyro_y", "wy"),
    "wz": ("gz", "gyr_z", "gyro_z", "wz"),
    "label": ("class", "label", "activity"),
}


def _norm_label(raw: str) -> str:
    return re.sub(r"[\s\-]+", "_", raw.strip().upper())


def _parse_uca_file(path: Path) -> LabeledStream:
    text = path.read_text()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise EmptyStreamError(f"{path}: empty file")
    delim = ";" if lines[0].count(";") > lines[0].count(",") else ","
    header = [h.strip().lower() for h in lines[0].split(delim)]
    cols = {}
    for key, aliases in _UCA_COLUMNS.items():
        idx = next((header.index(a) for a in aliases if a in header), None)
        if idx is None:
            raise DataFormatError(f"{path}:1: no column for {key} in header {header}")
        cols[key] = idx
    rows: List[List[float]] = []
    labels: List[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = line.split(delim)
        if len(rec) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
        label = _norm_label(rec[cols["label"]])
        if label in UCA_EHAR_DISCARDED:
            continue
        if label not in UCA_EHAR_LABELS:
            raise DataFormatError(f"{path}:{lineno}: unknown activity label {rec[cols['label']]!r}")
        try:
            vals = [float(rec[cols[c]]) for c in CHANNELS]
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataFormatError(f"{path}:{lineno}: non-finite sample")
        rows.append(vals)
        labels.append(UCA_EHAR_LABELS[label])
    if not rows:
        raise EmptyStreamError(f"{path}: no usable samples")
    stem = path.stem
    protocol, _, subject = stem.rpartition("_")
    return LabeledStream(
        UCA_EHAR_RATE,
        "glasses",
        subject or stem,
        np.asarray(rows),
        segments_from_labels(labels),
        meta={"protocol": protocol or stem, "file": str(path)},
    )


def load_uca_ehar(path: PathLike) -> List[LabeledStream]:
    """Load UCA-EHAR recordings (one CSV per subject and protocol).

    ``path`` may be a single file or a directory searched recursively.
    Files are processed in sorted order so the result does not depend on
    directory listing order.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    files = sorted(path.rglob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise EmptyStreamError(f"no CSV files under {path}")
    return [_parse_uca_file(f) for f in files]


# -- WISDM ------------------------------------------------------------------

WISDM_RATE = 20.0
WISDM_KEPT = {"A": "walking", "B": "jogging", "C": "stairs", "D": "sitting", "E": "standing"}
WISDM_CODES = set("ABCDEFGHIJKLMOPQRS")
WISDM_DEVICES = ("watch", "phone")

_WISDM_NAME = re.compile(r"data_(\d+)_(accel|gyro)_(watch|phone)\.txt$")


def _read_wisdm_file(path: Path) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    ts: List[int] = []
    xyz: List[Tuple[float, float, float]] = []
    codes: List[str] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip().rstrip(";")
            if not line:
                continue
            rec = line.split(",")
            if len(rec) != 6:
                raise DataFormatError(f"{path}:{lineno}: expected 6 fields, got {len(rec)}")
            code = rec[1].strip()
            if code not in WISDM_CODES:
                raise DataFormatError(f"{path}:{lineno}: unknown activity code {code!r}")
            try:
                ts.append(int(rec[2]))
                xyz.append((float(rec[3]), float(rec[4]), float(rec[5])))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            codes.append(code)
    return np.asarray(ts, dtype=np.int64), np.asarray(xyz, dtype=float).reshape(-1, 3), codes


def pair_by_timestamp(
    ta: np.ndarray, tg: np.ndarray, tolerance: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Monotone one-to-one pairing of two timestamp sequences.

    Both sequences must be sorted. A pair is formed when the two heads are
    within ``tolerance``; otherwise the earlier head is dropped.
    Returns index arrays into ``ta`` and ``tg``.
    """
    ia: List[int] = []
    ig: List[int] = []
    i = j = 0
    a = ta.tolist()
    g = tg.tolist()
    while i < len(a) and j < len(g):
        d = a[i] - g[j]
        if abs(d) <= tolerance:
            ia.append(i)
            ig.append(j)
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return np.asarray(ia, dtype=int), np.asarray(ig, dtype=int)


def _wisdm_subject(accel: Path, gyro: Path, subject: str, device: str) -> LabeledStream:
    ta, acc, ca = _read_wisdm_file(accel)
    tg, gyr, cg = _read_wisdm_file(gyro)
    if len(ta) == 0 or len(tg) == 0:
        raise EmptyStreamError(f"subject {subject}: empty accelerometer or gyroscope file")
    oa = np.argsort(ta, kind="stable")
    og = np.argsort(tg, kind="stable")
    ta, acc, ca = ta[oa], acc[oa], [ca[k] for k in oa]
    tg, gyr, cg = tg[og], gyr[og], [cg[k] for k in og]
    steps = np.diff(ta)
    period = float(np.median(steps[steps > 0])) if np.any(steps > 0) else 1.0
    ia, ig = pair_by_timestamp(ta, tg, period / 2.0)
    keep = [k for k in range(len(ia)) if ca[ia[k]] == cg[ig[k]] and ca[ia[k]] in WISDM_KEPT]
    unpaired = (len(ta) - len(ia)) + (len(tg) - len(ig))
    if unpaired:
        log.warning("subject %s (%s): %d samples without a partner dropped", subject, device, unpaired)
    if not keep:
        raise EmptyStreamError(f"subject {subject} ({device}): no samples of the kept activities")
    ia, ig = ia[keep], ig[keep]
    data = np.hstack([acc[ia], gyr[ig]])
    labels = [WISDM_KEPT[ca[k]] for k in ia]
    return LabeledStream(
        WISDM_RATE,
        device,
        subject,
        data,
        segments_from_labels(labels),
        meta={"unpaired": unpaired},
    )


def load_wisdm(path: PathLike, device: str) -> List[LabeledStream]:
    """Load WISDM raw accelerometer and gyroscope files for one device.

    ``path`` is either the accelerometer file of one subject (its gyroscope
    twin is looked up next to it or in a sibling ``gyro`` directory) or a
    directory searched recursively for ``data_<id>_{accel,gyro}_<device>.txt``.
    Subjects with no samples of the five kept activities are skipped when
    loading a directory and raise :class:`EmptyStreamError` otherwise.
    """
    if device not in WISDM_DEVICES:
        raise ValueError(f"device must be one of {WISDM_DEVICES}, got {device!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.is_file():
        m = _WISDM_NAME.search(path.name)
        if not m or m.group(2) != "accel":
            raise DataFormatError(f"{path}: not a WISDM accelerometer file")
        gname = path.name.replace("_accel_", "_gyro_")
        candidates = [path.with_name(gname), path.parent.parent / "gyro" / gname]
        gyro = next((c for c in candidates if c.exists()), None)
        if gyro is None:
            raise FileNotFoundError(f"no gyroscope file {gname} for {path}")
        return [_wisdm_subject(path, gyro, m.group(1), device)]

    files: Dict[Tuple[str, str], Path] = {}
    for f in sorted(path.rglob(f"data_*_{device}.txt")):
        m = _WISDM_NAME.search(f.name)
        if m:
            files[(m.group(1), m.group(2))] = f
    subjects = sorted({sid for sid, _ in files}, key=lambda s: (len(s), s))
    out = []
    for sid in subjects:
        if (sid, "accel") not in files or (sid, "gyro") not in files:
            log.warning("subject %s (%s): missing accel or gyro file, skipped", sid, device)
            continue
        try:
            out.append(_wisdm_subject(files[(sid, "accel")], files[(sid, "gyro")], sid, device))
        except EmptyStreamError as exc:
            log.warning("%s", exc)
    if not out:
        raise EmptyStreamError(f"no usable WISDM {device} subjects under {path}")
    return out


# -- synthetic streams -------------------------------------------------------


@dataclass
class SegmentSpec:
    """One stationary regime: per-channel periodic motion + white noise around an offset.

    ``harmonics`` holds the relative weights of the 2nd, 3rd, ... harmonics
    added to every channel's fundamental. ``modulation`` is the relative
    size of slow random fluctuations of amplitude and cadence (stride to
    stride variability), with correlation time ``modulation_s`` seconds.
    """

    duration: float
    amplitude: Sequence[float]
    frequency: Sequence[float]
    noise: Sequence[float]
    offset: Sequence[float]
    label: str = ""
    harmonics: Sequence[float] = ()
    modulation: float = 0.0
    modulation_s: float = 1.0

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")
        for name in ("amplitude", "frequency", "noise", "offset"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"{name} needs 6 per-channel values")


@dataclass
class SynthSpec:
    segments: List[SegmentSpec]
    sample_rate: float = UCA_EHAR_RATE
    seed: int = 0
    subject: str = "synth"
    device: str = "synthetic"

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("a synthetic stream needs at least one segment")

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "subject": self.subject,
            "device": self.device,
            "segments": [
                {
                    "duration": s.duration,
                    "amplitude": list(s.amplitude),
                    "frequency": list(s.frequency),
                    "noise": list(s.noise),
                    "offset": list(s.offset),
                    "label": s.label,
                    "harmonics": list(s.harmonics),
                    "modulation": s.modulation,
                    "modulation_s": s.modulation_s,
                }
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(
            segments=[SegmentSpec(**s) for s in d["segments"]],
            sample_rate=float(d.get("sample_rate", UCA_EHAR_RATE)),
            seed=int(d.get("seed", 0)),
            subject=str(d.get("subject", "synth")),
            device=str(d.get("device", "synthetic")),
        )


def _slow_noise(rng: np.random.Generator, n: int, corr_samples: float) -> np.ndarray:
    """Unit-variance AR(1) process with the given correlation length, shape (n,)."""
    a = math.exp(-1.0 / max(corr_samples, 1e-9))
    e = rng.standard_normal(n) * math.sqrt(1.0 - a * a)
    out = np.empty(n)
    x = rng.standard_normal()
    for i in range(n):
        x = a * x + e[i]
        out[i] = x
    return out


def synth(spec: SynthSpec) -> LabeledStream:
    """Render a piecewise-stationary stream; deterministic for a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    parts = []
    segments = []
    pos = 0
    for k, seg in enumerate(spec.segments):
        n = max(1, int(round(seg.duration * spec.sample_rate)))
        amp = np.asarray(seg.amplitude, dtype=float)
        freq = np.asarray(seg.frequency, dtype=float)
        noise = np.asarray(seg.noise, dtype=float)
        phase0 = rng.uniform(0.0, 2.0 * np.pi, size=6)
        envelope = np.ones((n, 1))
        rate = np.ones((n, 1))
        if seg.modulation > 0:
            corr = seg.modulation_s * spec.sample_rate
            envelope = np.maximum(0.1, 1.0 + seg.modulation * _slow_noise(rng, n, corr))[:, None]
            rate = np.maximum(0.1, 1.0 + seg.modulation * _slow_noise(rng, n, corr))[:, None]
        # cycles elapsed per channel, integrating the (possibly jittered) cadence
        cycles = np.cumsum(rate * freq / spec.sample_rate, axis=0) - rate[0] * freq / spec.sample_rate
        theta = 2.0 * np.pi * cycles + phase0
        wave = np.sin(theta)
        for h, c in enumerate(seg.harmonics, start=2):
            wave = wave + c * np.sin(h * theta + rng.uniform(0.0, 2.0 * np.pi, size=6))
        block = (
            np.asarray(seg.offset, dtype=float)
            + amp * envelope * wave
            + noise * rng.standard_normal((n, 6))
        )
        parts.append(block)
        segments.append(Segment(pos, pos + n, seg.label or f"seg{k}"))
        pos += n
    return LabeledStream(
        spec.sample_rate, spec.device, spec.subject, np.vstack(parts), segments, meta={"seed": spec.seed}
    )


# Ranges of the random activity generator. Accelerations are in g, angular
# velocities in deg/s; sensor noise is well below the weakest activity.
ACTIVITY_FREQ = (0.6, 2.5)
FREQ_LIMITS = (0.3, 5.0)
ACC_AMP = (0.1, 0.8)
ACC_AMP_LIMITS = (0.05, 2.0)
GYRO_PER_G = (12.5, 190.0)  # gyro amplitude per g of acceleration amplitude
SHIFT_RANGE = (1.5, 10.0)
ACC_NOISE = 0.005
GYRO_NOISE = 0.5


def _shift(rng: np.random.Generator, value: float, limits: Tuple[float, float]) -> float:
    """Multiply or divide ``value`` by a factor drawn from SHIFT_RANGE, staying inside ``limits``."""
    lo, hi = limits
    r = float(rng.uniform(*SHIFT_RANGE))
    up, down = hi / value, value / lo
    r = min(r, max(up, down))
    dirs = [d for d, room in ((1, up), (-1, down)) if r <= room]
    d = dirs[int(rng.integers(len(dirs)))]
    return min(hi, max(lo, value * r**d))


def random_activity_spec(
    seed: int,
    n_segments: int,
    durations: Tuple[float, float] = (20.0, 40.0),
    sample_rate: float = UCA_EHAR_RATE,
    subject: str = "synth",
    freq_shift_prob: float = 0.5,
    overtones: float = 0.0,
    modulation: float = 0.0,
) -> SynthSpec:
    """Random piecewise-stationary "activity" stream.

    Every channel oscillates at the activity cadence or twice it around a
    fixed gravity orientation. Each transition rescales the motion amplitude
    by 1.5x-10x (up or down) and, with probability ``freq_shift_prob``, also
    rescales the cadence by 1.5x-10x.

    ``overtones`` > 0 gives each activity 2nd and 3rd harmonics with random
    weights up to that value; ``modulation`` adds slow amplitude and cadence
    fluctuations of that relative size.
    """
    rng = np.random.default_rng(seed)
    grav = rng.normal(size=3)
    grav[2] = abs(grav[2]) + 2.0
    grav /= np.linalg.norm(grav)
    offset = [float(v) for v in grav] + [0.0, 0.0, 0.0]
    weights = rng.uniform(0.3, 1.0, size=6)
    harmonics = rng.choice([1.0, 2.0], size=6)
    gyro_per_g = float(rng.uniform(*GYRO_PER_G))
    freq = float(rng.uniform(*ACTIVITY_FREQ))
    amp = float(rng.uniform(*ACC_AMP))
    segs = []
    for k in range(n_segments):
        if k:
            amp = _shift(rng, amp, ACC_AMP_LIMITS)
            if rng.random() < freq_shift_prob:
                freq = _shift(rng, freq, FREQ_LIMITS)
        scale = np.array([amp] * 3 + [amp * gyro_per_g] * 3)
        segs.append(
            SegmentSpec(
                duration=float(rng.uniform(*durations)),
                amplitude=[float(v) for v in scale * weights],
                frequency=[float(v) for v in freq * harmonics],
                noise=[ACC_NOISE] * 3 + [GYRO_NOISE] * 3,
                offset=offset,
                label=f"act{k}",
                harmonics=[float(c) for c in rng.uniform(0.0, overtones, size=2)] if overtones > 0 else [],
                modulation=modulation,
            )
        )
    return SynthSpec(segs, sample_rate, seed=seed, subject=subject)


def synthetic_suite(
    n_subjects: int = 60,
    seed: int = 0,
    segments: Tuple[int, int] = (6, 10),
    durations: Tuple[float, float] = (20.0, 40.0),
    sample_rate: float = UCA_EHAR_RATE,
) -> List[LabeledStream]:
    """``n_subjects`` independent random activity streams (deterministic in ``seed``)."""
    seq = np.random.SeedSequence(seed)
    out = []
    for i, child in enumerate(seq.spawn(n_subjects)):
        sub_seed = int(child.generate_state(1)[0])
        n_seg = int(np.random.default_rng(sub_seed).integers(segments[0], segments[1] + 1))
        spec = random_activity_spec(sub_seed, n_seg, durations, sample_rate, subject=f"S{i:02d}")
        out.append(synth(spec))
    return out


def calibration_stream(
    seed: int, minutes: float = 3.0, transitions: int = 9, sample_rate: float = UCA_EHAR_RATE
) -> LabeledStream:
    """Short labelled recording with evenly spaced transitions, for threshold calibration."""
    n_seg = transitions + 1
    dur = minutes * 60.0 / n_seg
    spec = random_activity_spec(seed, n_seg, (dur, dur), sample_rate, subject=f"cal{seed}")
    return synth(spec)
