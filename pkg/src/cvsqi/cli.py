"""Command-line workflows: generate, preprocess, split, train, threshold,
evaluate, assess, bench.

Exit codes: 0 success, 2 validation error, 3 I/O error.  A JSON config file
named by the CVSQI_CONFIG environment variable supplies default flag values.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import dataio, discriminative, experiment, manifold, model_io
from .errors import (CvsqiError, InvalidScenario, IoError, MissingCalibration,
                     ValidationError)
from .evaluation import confusion, metrics, roc_auc, split_by_subject
from .forward import MotionEvent, SynthScenario, synthesize_stream
from .labels import QualityLabel
from .preprocess import (CALIBRATION_SAMPLES, SAMPLE_MS, CalibrationWindow,
                         naive_scale_factor, normalize_cycle, segment_cycles,
                         subject_scale_factor)

CONFIG_ENV = "CVSQI_CONFIG"

# flag defaults that a config file may override
_CONFIG_KEYS = ("seed", "norm", "scale", "epochs", "lr", "arch", "kind", "beta")


@dataclass
class PipelineConfig:
    """Defaults shared across commands, loadable from a JSON file."""

    norm: str = "interp"
    scale: str = "subject"
    arch: str = "vgg3"
    kind: str = "bcvae"
    beta: float | None = None
    seed: int = 0
    epochs: int = 25
    lr: float = 1e-3
    paths: dict = field(default_factory=dict)


def _load_config() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError(f"config {path} must hold a JSON object")
    return {k: v for k, v in cfg.items() if k in _CONFIG_KEYS}


# --- scenario files ---

def scenario_from_file(path: str) -> SynthScenario:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid scenario JSON: {exc}") from exc
    events = tuple(MotionEvent(**ev) for ev in doc.pop("motion_events", []))
    try:
        return SynthScenario(motion_events=events, **doc)
    except TypeError as exc:
        raise ValidationError(f"{path}: bad scenario field: {exc}") from exc


# --- preprocessing shared by train/threshold/evaluate/assess ---

def _normalized_arrays(cycles, scheme: str, scale_mode: str, calibrations):
    factors = {}
    if scale_mode == "subject":
        if not calibrations:
            raise ValidationError("subject scaling requires --calib")
        factors = {sid: subject_scale_factor(c) for sid, c in calibrations.items()}
    rows, y_train, y_eval = [], [], []
    for c in cycles:
        if scale_mode == "subject":
            if c.subject_id not in factors:
                raise ValidationError(f"no calibration for subject {c.subject_id!r}")
            scale = factors[c.subject_id]
        elif scale_mode == "naive":
            scale = naive_scale_factor(c)
        elif scale_mode == "none":
            scale = None
        else:
            raise ValidationError(f"unknown scale mode {scale_mode!r}")
        rows.append(normalize_cycle(c, scheme, scale).values)
        y_train.append(c.label.train_value)
        y_eval.append(c.label.eval_value)
    if not rows:
        raise ValidationError("empty cycle dataset")
    return np.stack(rows), np.asarray(y_train), np.asarray(y_eval, dtype=np.int64)


def _load_calibrations(path: str | None):
    return dataio.read_calibrations(path) if path else None


# --- commands ---

def cmd_gen(args) -> int:
    if args.scenario:
        scenario = scenario_from_file(args.scenario)
        stream = synthesize_stream(scenario)
        cycles = experiment.cycles_from_stream(stream, skip_calibration=False)
        calibrations = {}
        if stream.n_samples >= CALIBRATION_SAMPLES:
            calibrations[scenario.subject_id] = experiment.calibration_from_stream(stream)
        streams = {scenario.subject_id: stream}
    else:
        ds = experiment.generate_dataset(args.seed, n_subjects=args.subjects,
                                         duration_ms=args.duration_ms,
                                         keep_streams=bool(args.out_stream))
        cycles, calibrations, streams = ds.cycles, ds.calibrations, ds.streams

    dataio.write_cycles(cycles, args.out_cycles)
    if args.out_calib:
        dataio.write_calibrations(calibrations, args.out_calib)
    if args.out_stream:
        for sid, stream in sorted(streams.items()):
            suffix = f".{sid}" if len(streams) > 1 else ""
            dataio.write_stream(stream, args.out_stream + suffix,
                                channels=args.channels)

    counts = {lab: 0 for lab in QualityLabel}
    for c in cycles:
        counts[c.label] += 1
    n = max(len(cycles), 1)
    print(f"cycles: {len(cycles)}")
    for lab in QualityLabel:
        print(f"  {lab.value:<16} {counts[lab]:>6}  ({100.0 * counts[lab] / n:.2f}%)")
    return 0


def cmd_preprocess(args) -> int:
    cycles = dataio.read_cycles(args.cycles)
    calibrations = _load_calibrations(args.calib)
    factors = {}
    if args.scale == "subject":
        if not calibrations:
            raise ValidationError("subject scaling requires --calib")
        factors = {sid: subject_scale_factor(c) for sid, c in calibrations.items()}
    out = []
    for c in cycles:
        if args.scale == "subject":
            if c.subject_id not in factors:
                raise ValidationError(f"no calibration for subject {c.subject_id!r}")
            scale = factors[c.subject_id]
        elif args.scale == "naive":
            scale = naive_scale_factor(c)
        else:
            scale = None
        out.append(normalize_cycle(c, args.norm, scale))
    dataio.write_normalized(out, args.out)
    print(f"normalized {len(out)} cycles -> {args.out}")
    return 0


def cmd_split(args) -> int:
    cycles = dataio.read_cycles(args.cycles)
    train, val, test = split_by_subject(cycles, seed=args.seed)
    dataio.write_cycles(train, args.out_train)
    dataio.write_cycles(val, args.out_val)
    dataio.write_cycles(test, args.out_test)
    total = len(cycles)
    for name, part in (("train", train), ("val", val), ("test", test)):
        sids = sorted({c.subject_id for c in part})
        print(f"{name}: {len(part)} cycles ({100.0 * len(part) / total:.1f}%), "
              f"subjects {' '.join(sids)}")
    return 0


def cmd_train(args) -> int:
    calibrations = _load_calibrations(args.calib)
    x_tr, y_tr, _ = _normalized_arrays(dataio.read_cycles(args.train),
                                       args.norm, args.scale, calibrations)
    x_va, _, yev_va = _normalized_arrays(dataio.read_cycles(args.val),
                                         args.norm, args.scale, calibrations)
    model = discriminative.build(args.arch, seed=args.seed)
    history = discriminative.train(model, x_tr, y_tr, x_va, yev_va,
                                   epochs=args.epochs, lr=args.lr, seed=args.seed)
    model_io.save_model(model, args.out, norm_scheme=args.norm, scale_mode=args.scale)
    print(f"trained {args.arch}: best val AUC "
          f"{model.training_meta['best_val_auc']:.4f} "
          f"(final loss {history['train_loss'][-1]:.4f}) -> {args.out}")
    return 0


def cmd_train_manifold(args) -> int:
    calibrations = _load_calibrations(args.calib)
    cycles = dataio.read_cycles(args.pos_train)
    x_pos, _, yev = _normalized_arrays(cycles, args.norm, args.scale, calibrations)
    x_val = None
    if args.val:
        val_cycles = [c for c in dataio.read_cycles(args.val)
                      if c.label is QualityLabel.NORMAL]
        if val_cycles:
            x_val, _, _ = _normalized_arrays(val_cycles, args.norm, args.scale,
                                             calibrations)
    if args.kind == "pca":
        model = manifold.pca_fit(x_pos)
        model.training_meta = {"n_train": int(x_pos.shape[0])}
    else:
        model = manifold.build_vae(args.kind, seed=args.seed, beta=args.beta)
        history = manifold.vae_train(model, x_pos, yev, epochs=args.epochs,
                                     lr=args.lr, seed=args.seed, x_val_pos=x_val)
        print(f"final train loss {history['train_loss'][-1]:.4f}")
    model_io.save_model(model, args.out, norm_scheme=args.norm, scale_mode=args.scale)
    print(f"trained {args.kind} on {x_pos.shape[0]} positive cycles -> {args.out}")
    return 0


def cmd_threshold(args) -> int:
    model, prep = model_io.load_model(args.model)
    if not hasattr(model, "threshold_d"):
        raise ValidationError("threshold selection applies to manifold models only")
    calibrations = _load_calibrations(args.calib)
    cycles = dataio.read_cycles(args.scored)
    x, _, yev = _normalized_arrays(cycles, prep["norm_scheme"], prep["scale_mode"],
                                  calibrations)
    r = manifold.residuals(model, x)
    d, j = manifold.select_threshold(r, yev)
    model.threshold_d = d
    model_io.save_model(model, args.model, norm_scheme=prep["norm_scheme"],
                        scale_mode=prep["scale_mode"])
    print(f"threshold d = {d:.6g} (Youden J = {j:.4f}) written to {args.model}")
    return 0


def _model_scores(model, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(score, verdict) per cycle; higher score means more likely normal."""
    if isinstance(model, discriminative.DiscriminativeModel):
        p = discriminative.forward(model, x)
        return p, (p >= 0.5).astype(int)
    r = manifold.residuals(model, x)
    if model.threshold_d is None:
        raise ValidationError("manifold model has no threshold; run `threshold` first")
    return -r, (r <= model.threshold_d).astype(int)


def cmd_evaluate(args) -> int:
    model, prep = model_io.load_model(args.model)
    calibrations = _load_calibrations(args.calib)
    cycles = dataio.read_cycles(args.test)
    x, _, yev = _normalized_arrays(cycles, prep["norm_scheme"], prep["scale_mode"],
                                  calibrations)
    scores, preds = _model_scores(model, x)
    _, auc = roc_auc(scores, yev)
    m = metrics(confusion(preds, yev))

    name = getattr(model, "architecture", getattr(model, "kind", "model"))
    cols = ("accuracy", "ppv", "npv", "sensitivity", "specificity", "auc")
    values = {**m.values, "auc": auc}
    print(f"{'model':<10}" + "".join(f"{c:>13}" for c in cols))
    row = "".join(f"{values[c]:>13.4f}" if values[c] is not None else f"{'n/a':>13}"
                  for c in cols)
    print(f"{name:<10}" + row)
    if m.undefined:
        print(f"undefined metrics (zero denominator): {', '.join(m.undefined)}")

    if args.out:
        record = {"model": name, "n_test": len(cycles), "metrics": values,
                  "undefined": m.undefined, "preprocessing": prep}
        dataio.atomic_write(args.out, [json.dumps(record, indent=1)])
    return 0


def cmd_assess(args) -> int:
    model, prep = model_io.load_model(args.model)
    scheme = model_io.check_scheme(prep, args.norm)
    if scheme is None:
        raise ValidationError("model file does not record a normalization scheme")
    scale_mode = prep.get("scale_mode", "subject")

    t_ms, x, r_peaks, label_codes = dataio.read_stream(args.stream)
    if scale_mode == "subject":
        if t_ms.size < CALIBRATION_SAMPLES:
            raise MissingCalibration(
                f"stream holds {t_ms.size * SAMPLE_MS / 1000:.1f} s; subject "
                f"scaling needs the first {CALIBRATION_SAMPLES * SAMPLE_MS / 1000:.0f} s")
        cal = CalibrationWindow(subject_id="stream",
                                samples=x[:CALIBRATION_SAMPLES])
        scale = subject_scale_factor(cal)

    cycles = segment_cycles(list(zip(t_ms.tolist(), x.tolist())), r_peaks,
                            subject_id="stream",
                            labels=label_codes if len(label_codes) == len(r_peaks) - 1
                            else None)
    lines = []
    for c in cycles:   # strictly in stream order
        if scale_mode == "naive":
            s = naive_scale_factor(c)
        elif scale_mode == "none":
            s = None
        else:
            s = scale
        vec = normalize_cycle(c, scheme, s).values
        score, verdict = _model_scores(model, vec[None, :])
        lines.append(f"{c.t_start_ms},{int(verdict[0])},{repr(float(score[0]))}")
    if args.out:
        dataio.atomic_write(args.out, lines)
    else:
        for line in lines:
            print(line)
    return 0


def bench_models(named_models, cycles, repeats: int = 1) -> list[dict]:
    """Per-cycle wall-clock latency (normalize + forward + verdict) per model.

    cycles is a list of (CvsCycle, scale, scheme) ready for assessment.
    Returns one LatencyReport record per model.
    """
    if len(cycles) < 1000:
        raise ValidationError(f"benchmark needs >= 1000 cycles, got {len(cycles)}")
    reports = []
    for name, model in named_models:
        # warm start: one full pass outside timing
        for c, s, scheme in cycles[:10]:
            _model_scores(model, normalize_cycle(c, scheme, s).values[None, :])
        times = np.empty(len(cycles) * repeats)
        i = 0
        for _ in range(repeats):
            for c, s, scheme in cycles:
                t0 = time.perf_counter()
                vec = normalize_cycle(c, scheme, s).values
                _model_scores(model, vec[None, :])
                times[i] = time.perf_counter() - t0
                i += 1
        us = times * 1e6
        reports.append({
            "model": name,
            "n_samples": int(us.size),
            "mean_us": float(us.mean()),
            "median_us": float(np.median(us)),
            "p99_us": float(np.percentile(us, 99)),
        })
    return reports


def _bench_cycles(n_cycles: int, seed: int):
    """Synthetic assessment-ready cycles for benchmarking."""
    rng = np.random.default_rng(seed)
    out = []
    subjects = 0
    while len(out) < n_cycles:
        scenario = experiment.default_subject_scenario(seed, subjects,
                                                       duration_ms=60_000)
        stream = synthesize_stream(scenario)
        cal = experiment.calibration_from_stream(stream)
        s = subject_scale_factor(cal)
        for c in experiment.cycles_from_stream(stream):
            out.append((c, s, "interp"))
        subjects += 1
    rng.shuffle(out)
    return out[:n_cycles]


def cmd_bench(args) -> int:
    named = []
    if args.models:
        for path in args.models:
            model, prep = model_io.load_model(path)
            name = getattr(model, "architecture", getattr(model, "kind", path))
            named.append((name, model))
    else:
        for arch in discriminative.ARCHITECTURES:
            named.append((arch, discriminative.build(arch, seed=args.seed)))
        for kind in ("vae", "bvae", "cvae", "bcvae"):
            m = manifold.build_vae(kind, seed=args.seed)
            m.threshold_d = 1.0
            named.append((kind, m))

    cycles = _bench_cycles(args.n_cycles, args.seed)
    reports = bench_models(named, cycles)
    print(f"{'model':<10}{'mean us':>12}{'median us':>12}{'p99 us':>12}{'n':>8}")
    for r in reports:
        print(f"{r['model']:<10}{r['mean_us']:>12.1f}{r['median_us']:>12.1f}"
              f"{r['p99_us']:>12.1f}{r['n_samples']:>8}")
    return 0


# --- argument parsing ---

def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvsqi",
        description="Per-cardiac-cycle signal quality indexing for EIT volume signals")
    subparsers = []
    _sub = parser.add_subparsers(dest="command", required=True)

    class _Sub:
        def add_parser(self, *a, **kw):
            p = _sub.add_parser(*a, **kw)
            subparsers.append(p)
            return p
    sub = _Sub()

    p = sub.add_parser("gen", help="generate a synthetic cycle dataset")
    p.add_argument("--scenario", help="JSON scenario file for one subject")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--duration-ms", type=int, default=110_000)
    p.add_argument("--out-cycles", required=True)
    p.add_argument("--out-calib")
    p.add_argument("--out-stream")
    p.add_argument("--channels", action="store_true",
                   help="write the 208-channel stream form")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("preprocess", help="scale- and size-normalize a cycle dataset")
    p.add_argument("--cycles", required=True)
    p.add_argument("--norm", choices=("interp", "pad"), default="interp")
    p.add_argument("--scale", choices=("naive", "subject", "none"), default="subject")
    p.add_argument("--calib")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="subject-disjoint 80/10/10 split")
    p.add_argument("--cycles", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-val", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a discriminative classifier")
    p.add_argument("--arch", choices=discriminative.ARCHITECTURES, default="vgg3")
    p.add_argument("--norm", choices=("interp", "pad"), default="interp")
    p.add_argument("--scale", choices=("naive", "subject", "none"), default="subject")
    p.add_argument("--calib")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-manifold", help="train a manifold model on positives")
    p.add_argument("--kind", choices=manifold.MANIFOLD_KINDS, default="bcvae")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--norm", choices=("interp", "pad"), default="interp")
    p.add_argument("--scale", choices=("naive", "subject", "none"), default="subject")
    p.add_argument("--calib")
    p.add_argument("--pos-train", required=True)
    p.add_argument("--val")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_manifold)

    p = sub.add_parser("threshold", help="select and persist the residual threshold")
    p.add_argument("--model", required=True)
    p.add_argument("--scored", required=True,
                   help="labeled cycle dataset the model scores itself")
    p.add_argument("--calib")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("evaluate", help="metrics table on a labeled test set")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--calib")
    p.add_argument("--out", help="machine-readable JSON record")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("assess", help="per-cycle verdict stream for a CVS recording")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--norm", choices=("interp", "pad"), default=None,
                   help="must match the scheme recorded in the model file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("bench", help="per-cycle inference latency report")
    p.add_argument("--models", nargs="*", default=None,
                   help="model files; default benches freshly built models")
    p.add_argument("--n-cycles", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    if defaults:
        for p in subparsers:
            known = {k: v for k, v in defaults.items()
                     if any(a.dest == k for a in p._actions)}
            p.set_defaults(**known)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser(_load_config())
        args = parser.parse_args(argv)
        return args.func(args)
    except (FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CvsqiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
