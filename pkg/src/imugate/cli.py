"""Command-line entry point: ``imugate {calibrate,evaluate,trace,synth,cost}``.

Datasets are given as ``KIND:PATH``:

* ``uca-ehar:DIR_OR_FILE``
* ``wisdm:DIR_OR_ACCEL_FILE`` (with ``--device watch|phone``)
* ``csv:DIR_OR_FILE``, streams written by ``imugate synth``
* ``synth:SPEC.json``, a synthetic stream specification
* ``suite:N``, N generated subjects (seeded by ``--seed``)

Options may also come from a ``key=value`` file passed with ``--config``;
command-line flags take precedence.

Exit codes: 0 ok, 1 usage, 2 data error, 3 insufficient data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import cusum as cusum_mod
from .calibration import DEFAULT_WEIGHT, LABELINGS, CalibrationResult, calibrate, class_quartiles
from .datasets import (
    UCA_EHAR_RATE,
    WISDM_DEVICES,
    LabeledStream,
    SynthSpec,
    calibration_stream,
    load_csv_streams,
    load_uca_ehar,
    load_wisdm,
    synth,
    synthetic_suite,
)
from .errors import DataFormatError, EmptyStreamError, InsufficientDataError
from .evaluation import (
    ConfusionCounts,
    SubjectResult,
    WindowTruth,
    cost_model,
    format_table,
    metrics,
    relaxed_match,
    results_csv,
    results_json,
    window_flags,
)
from .gate import REBUILD_MODES, GateConfig, flops_per_step, run_gate, write_verdicts

log = logging.getLogger("imugate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INSUFFICIENT = 0, 1, 2, 3
DATASET_KINDS = ("uca-ehar", "wisdm", "csv", "synth", "suite")
CALIBRATION_HINT = (
    "calibration needs labelled transitions: record about 2-3 minutes of activity "
    "containing 8-10 transitions"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit code 1 for usage errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- option validation --------------------------------------------------------

# dest -> (predicate, description of the accepted range)
_RANGES = {
    "window_s": (lambda v: v > 0, "> 0"),
    "overlap": (lambda v: 0 <= v < 1, "in [0, 1)"),
    "threshold": (lambda v: -1 < v < 1, "in (-1, 1)"),
    "weight": (lambda v: 0 < v < 1, "in (0, 1)"),
    "cusum_sensitivity": (lambda v: v > 0, "> 0"),
    "cusum_threshold": (lambda v: v > 0, "> 0"),
    "n_windows": (lambda v: v >= 0, ">= 0"),
    "n_invocations": (lambda v: v >= 0, ">= 0"),
    "gate_flops": (lambda v: v > 0, "> 0"),
    "har_flops": (lambda v: v > 0, "> 0"),
    "sample_rate": (lambda v: v > 0, "> 0"),
}


def _check_ranges(args: argparse.Namespace) -> None:
    for dest, (ok, desc) in _RANGES.items():
        v = getattr(args, dest, None)
        if v is not None and not ok(v):
            raise UsageError(f"--{dest.replace('_', '-')}={v} out of range: expected {desc}")


def read_config_file(path: str) -> Dict[str, str]:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are ignored."""
    out: Dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, values: Dict[str, str]) -> None:
    """Install config-file values as parser defaults, converting and checking each key."""
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"config key {key!r} is not an option of this command; known: {sorted(actions)}")
        if action.nargs == 0:  # store_true flags
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r}: expected true/false, got {raw!r}")
            defaults[key] = low in ("true", "1", "yes")
            continue
        conv = action.type or str
        try:
            value = conv(raw)
        except (TypeError, ValueError):
            raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {getattr(conv, '__name__', conv)}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not one of {list(action.choices)}")
        if key in _RANGES and not _RANGES[key][0](value):
            raise UsageError(f"config key {key!r}={value} out of range: expected {_RANGES[key][1]}")
        defaults[key] = value
    parser.set_defaults(**defaults)


# -- datasets -----------------------------------------------------------------


def load_dataset(spec: str, device: Optional[str] = None, seed: int = 0) -> List[LabeledStream]:
    kind, sep, path = spec.partition(":")
    if not sep or kind not in DATASET_KINDS or not path:
        raise UsageError(f"--dataset must be KIND:PATH with KIND in {DATASET_KINDS}, got {spec!r}")
    if kind == "suite":
        try:
            n = int(path)
        except ValueError:
            raise UsageError(f"suite:N needs an integer subject count, got {path!r}") from None
        if n < 1:
            raise UsageError(f"suite:N needs N >= 1, got {n}")
        return synthetic_suite(n, seed=seed)
    if not Path(path).exists():
        raise FileNotFoundError(f"dataset path not found: {path}")
    if kind == "uca-ehar":
        return load_uca_ehar(path)
    if kind == "wisdm":
        if device not in WISDM_DEVICES:
            raise UsageError(f"wisdm needs --device in {WISDM_DEVICES}")
        return load_wisdm(path, device)
    if kind == "csv":
        return load_csv_streams(path)
    try:
        doc = json.loads(Path(path).read_text())
        return [synth(SynthSpec.from_dict(doc))]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: invalid synthetic spec: {exc}") from None


def _gate_config(args: argparse.Namespace, rate: float, threshold: float = 0.5) -> GateConfig:
    return GateConfig.for_rate(
        rate, args.window_s, args.overlap, threshold=threshold, rebuild=args.rebuild
    )


def _threshold(args: argparse.Namespace) -> float:
    if args.detector != "gate":
        return 0.5
    if (args.threshold is None) == (args.calibration is None):
        raise UsageError("give exactly one of --threshold or --calibration")
    if args.threshold is not None:
        return args.threshold
    try:
        res = CalibrationResult.load(args.calibration)
    except OSError as exc:
        raise FileNotFoundError(f"calibration file {args.calibration}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataFormatError(f"calibration file {args.calibration}: {exc}") from None
    return res.threshold


def _cusum_config(args: argparse.Namespace, rate: float) -> cusum_mod.CusumConfig:
    return cusum_mod.CusumConfig.for_rate(
        rate,
        sensitivity=args.cusum_sensitivity,
        threshold=args.cusum_threshold,
        signal=args.cusum_signal,
    )


def _run_detector(args: argparse.Namespace, stream: LabeledStream, threshold: float):
    cfg = _gate_config(args, stream.sample_rate, threshold)
    if args.detector == "gate":
        return cfg, run_gate(cfg, stream.data)
    return cfg, cusum_mod.run_cusum(_cusum_config(args, stream.sample_rate), stream.data, cfg)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_calibrate(args: argparse.Namespace) -> int:
    streams = load_dataset(args.dataset, args.device, args.seed)
    rates = {s.sample_rate for s in streams}
    if len(rates) != 1:
        raise DataFormatError(f"calibration streams mix sample rates {sorted(rates)}")
    cfg = _gate_config(args, rates.pop())
    if sum(len(s.change_points) for s in streams) == 0:
        raise InsufficientDataError(f"no labelled transitions in the calibration data; {CALIBRATION_HINT}")
    try:
        res, series = calibrate(streams, cfg, args.weight, args.labeling)
    except InsufficientDataError as exc:
        raise InsufficientDataError(f"{exc}; {CALIBRATION_HINT}") from None
    out = _out_dir(args)
    path = out / "calibration.txt"
    res.save(path)
    print(f"threshold {res.threshold:.6f}  (w = {res.weight})")
    print(f"calibration TPR {100 * res.tpr:.2f} %  TNR {100 * res.tnr:.2f} %")
    print(f"class 1 (transition): {res.n_positive} windows   class 0 (stable): {res.n_negative} windows")
    names = {0: "class 0", 1: "class 1"}
    print(f"{'':8} {'min':>8} {'q1':>8} {'median':>8} {'q3':>8} {'max':>8}")
    for label, qs in sorted(class_quartiles(series).items()):
        print(f"{names[label]:8} " + " ".join(f"{q:8.4f}" for q in qs))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    threshold = _threshold(args)
    streams = load_dataset(args.dataset, args.device, args.seed)
    by_subject: "OrderedDict[str, List]" = OrderedDict()
    gate_flops = None
    for stream in streams:
        cfg, verdicts = _run_detector(args, stream, threshold)
        truth = WindowTruth.from_change_points(stream.change_points, len(stream), cfg.window, cfg.hop)
        flags = window_flags(verdicts, truth.n_windows)
        if args.always_on:
            flags = [True] * truth.n_windows
        counts = relaxed_match(flags, truth)
        by_subject.setdefault(stream.subject, []).append((counts, truth.n_windows, sum(flags)))
        if args.detector == "gate":
            step = flops_per_step(cfg)
        else:
            step = cusum_mod.flops_per_step(_cusum_config(args, stream.sample_rate), cfg.hop)
        gate_flops = step if gate_flops is None else max(gate_flops, step)
    results = []
    for subject, rows in by_subject.items():
        total = ConfusionCounts()
        for c, _, _ in rows:
            total = total + c
        results.append(SubjectResult(subject, total, sum(r[1] for r in rows), sum(r[2] for r in rows)))
    summary = metrics(r.counts for r in results)
    n_windows = sum(r.n_windows for r in results)
    n_inv = sum(r.n_invocations for r in results)
    cost = cost_model(n_windows, n_inv, gate_flops, args.har_flops) if n_windows else None
    table = format_table(results, summary, cost)
    print(table)
    out = _out_dir(args)
    (out / "report.txt").write_text(table + "\n")
    (out / "results.csv").write_text(results_csv(results, summary))
    (out / "results.json").write_text(
        results_json(
            results,
            summary,
            cost,
            detector=args.detector,
            threshold=threshold if args.detector == "gate" else None,
            always_on=args.always_on,
        )
    )
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    threshold = _threshold(args)
    streams = load_dataset(args.dataset, args.device, args.seed)
    match = [s for s in streams if args.subject in (s.stream_id, s.subject)]
    if len(match) != 1:
        ids = ", ".join(s.stream_id for s in streams)
        what = "unknown" if not match else "ambiguous"
        raise UsageError(f"{what} subject {args.subject!r}; available: {ids}")
    stream = match[0]
    cfg, verdicts = _run_detector(args, stream, threshold)
    labels = stream.labels()
    out = _out_dir(args)
    vpath = out / f"verdicts_{stream.stream_id}.csv"
    with open(vpath, "w", newline="") as fh:
        write_verdicts(verdicts, fh)
    tpath = out / f"timeline_{stream.stream_id}.csv"
    with open(tpath, "w", newline="") as fh:
        fh.write("window_index,label,triggered\n")
        for v in verdicts:
            fh.write(f"{v.window_index},{labels[v.end_sample]},{int(v.transition)}\n")
    fired = sum(v.transition for v in verdicts)
    print(f"{stream.stream_id}: {len(verdicts)} windows, {fired} triggered")
    print(f"wrote {vpath} and {tpath}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except OSError as exc:
            raise FileNotFoundError(f"spec file {args.spec}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.spec}: {exc}") from None
        try:
            streams = [synth(SynthSpec.from_dict(doc))]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{args.spec}: invalid synthetic spec: {exc}") from None
    elif args.calibration_stream:
        streams = [calibration_stream(args.seed, args.minutes, args.transitions, args.sample_rate)]
    else:
        streams = synthetic_suite(args.subjects, seed=args.seed, sample_rate=args.sample_rate)
    out = _out_dir(args)
    for s in streams:
        path = out / f"{s.stream_id}.csv"
        with open(path, "w", newline="") as fh:
            s.write_csv(fh)
    print(f"wrote {len(streams)} stream(s) to {out}")
    return EXIT_OK


def cmd_cost(args: argparse.Namespace) -> int:
    gate_flops = args.gate_flops
    if gate_flops is None:
        gate_flops = flops_per_step(GateConfig.for_rate(args.sample_rate, args.window_s, args.overlap))
    rep = cost_model(args.n_windows, args.n_invocations, gate_flops, args.har_flops)
    print(json.dumps(rep.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="imugate", description="IMU activity-change gate: calibration, evaluation, tracing.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser, dataset: bool = True) -> None:
        sp.add_argument("--config", help="key=value file with default option values")
        if dataset:
            sp.add_argument("--dataset", required=False, help="KIND:PATH, KIND in " + ", ".join(DATASET_KINDS))
            sp.add_argument("--device", choices=WISDM_DEVICES, help="WISDM device")
        sp.add_argument("--window-s", type=float, default=3.0, help="window length in seconds (default 3)")
        sp.add_argument("--overlap", type=float, default=0.5, help="window overlap in [0, 1) (default 0.5)")
        sp.add_argument("--rebuild", choices=REBUILD_MODES, default="next_window", help="reference rebuild policy")
        sp.add_argument("--seed", type=int, default=0, help="seed for generated data")
        sp.add_argument("--out", default="out", help="output directory")

    def detector(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--threshold", type=float, help="explicit NCC threshold")
        sp.add_argument("--calibration", help="calibration file written by 'calibrate'")
        sp.add_argument("--detector", choices=("gate", "cusum"), default="gate")
        sp.add_argument("--cusum-sensitivity", type=float, default=3.0)
        sp.add_argument("--cusum-threshold", type=float, default=0.3)
        sp.add_argument("--cusum-signal", choices=sorted(cusum_mod.SIGNALS), default="norm_a")

    sp = sub.add_parser("calibrate", help="fit the NCC threshold on labelled data")
    common(sp)
    sp.add_argument("--weight", type=float, default=DEFAULT_WEIGHT, help="TPR weight w (default 0.7)")
    sp.add_argument("--labeling", choices=LABELINGS, default="zone", help="class-1 window labelling")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("evaluate", help="run a detector over a dataset and report TPR/TNR and cost")
    common(sp)
    detector(sp)
    sp.add_argument("--always-on", action="store_true", help="report the always-invoke baseline")
    sp.add_argument("--har-flops", type=int, default=853_000, help="HAR model FLOPs per invocation")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("trace", help="per-window verdicts and activation timeline for one subject")
    common(sp)
    detector(sp)
    sp.add_argument("--subject", required=False, help="subject or stream id")
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("synth", help="write generated streams as CSV")
    common(sp, dataset=False)
    sp.add_argument("--spec", help="JSON stream specification")
    sp.add_argument("--calibration-stream", action="store_true", help="write one calibration stream")
    sp.add_argument("--subjects", type=int, default=60, help="suite size (default 60)")
    sp.add_argument("--minutes", type=float, default=3.0, help="calibration stream length")
    sp.add_argument("--transitions", type=int, default=9, help="calibration stream transitions")
    sp.add_argument("--sample-rate", type=float, default=UCA_EHAR_RATE)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("cost", help="compute savings of gated versus always-on HAR")
    common(sp, dataset=False)
    sp.add_argument("--n-windows", type=int, required=False)
    sp.add_argument("--n-invocations", type=int, required=False)
    sp.add_argument("--gate-flops", type=int, help="gate FLOPs per step (default: derived from the window)")
    sp.add_argument("--har-flops", type=int, default=853_000)
    sp.add_argument("--sample-rate", type=float, default=UCA_EHAR_RATE)
    sp.set_defaults(func=cmd_cost)
    return p


_REQUIRED = {
    "calibrate": ("dataset",),
    "evaluate": ("dataset",),
    "trace": ("dataset", "subject"),
    "cost": ("n_windows", "n_invocations"),
}


def _parse(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, values)
        args = parser.parse_args(argv)
    missing = [d for d in _REQUIRED.get(args.command, ()) if getattr(args, d, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    _check_ranges(args)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(f"imugate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse --help or usage error
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"imugate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientDataError as exc:
        print(f"imugate: insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (DataFormatError, EmptyStreamError, FileNotFoundError) as exc:
        print(f"imugate: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"imugate: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
