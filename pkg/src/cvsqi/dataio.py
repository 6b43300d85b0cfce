"""Line-oriented file formats: streams, cycle datasets, normalized datasets, calibration.

All files are comma-separated UTF-8 with LF line endings.  Writes go through a
temp-file-then-rename so readers never observe partial files.

  stream:      t_ms, x_t, r_peak_flag, label_code        (label on the cycle's
               first sample, -1 elsewhere; optional 208-channel variant)
  cycles:      subject_id, t_start_ms, label_code, v, x_0, ..., x_{v-1}
  normalized:  subject_id, t_start_ms, label_code, 150 values, scheme
  calibration: subject_id, 2000 values
"""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import IoError, ValidationError
from .labels import QualityLabel
from .preprocess import (CALIBRATION_SAMPLES, TARGET_LEN, CalibrationWindow,
                         CvsCycle, NormalizedCycle)


def _fmt(x: float) -> str:
    return repr(float(x))


def atomic_write(path: str, lines) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line)
                f.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(str(exc)) from exc


# --- stream files ---

def write_stream(stream, path: str, channels: bool = False) -> None:
    """Export a synthetic stream; set channels=True for the 208-channel form."""
    first_sample_label = {}
    for (a, _b), label in zip(zip(stream.r_peaks[:-1], stream.r_peaks[1:]),
                              stream.cycle_labels):
        first_sample_label[int(a)] = label.code

    def lines():
        for i in range(stream.n_samples):
            t = int(stream.t_ms[i])
            flag = 1 if t in set(int(p) for p in stream.r_peaks) else 0
            code = first_sample_label.get(t, -1)
            if channels:
                gs = ",".join(_fmt(v) for v in stream.g[i] - stream.baseline)
                yield f"{t},{gs},{flag},{code}"
            else:
                yield f"{t},{_fmt(stream.cvs[i])},{flag},{code}"
    atomic_write(path, lines())


def read_stream(path: str):
    """Returns (t_ms, x, r_peaks, cycle_labels) from a scalar stream file."""
    t_list, x_list, peaks, label_codes = [], [], [], []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 4:
                raise ValidationError(f"{path}:{ln}: expected 4 fields, got {len(parts)}")
            t = int(parts[0])
            t_list.append(t)
            x_list.append(float(parts[1]))
            if int(parts[2]) == 1:
                peaks.append(t)
            code = int(parts[3])
            if code != -1:
                label_codes.append(QualityLabel.from_code(code))
    return (np.asarray(t_list, dtype=np.int64), np.asarray(x_list),
            np.asarray(peaks, dtype=np.int64), label_codes)


# --- cycle datasets ---

def write_cycles(cycles, path: str) -> None:
    def lines():
        for c in cycles:
            xs = ",".join(_fmt(v) for v in c.samples)
            yield f"{c.subject_id},{c.t_start_ms},{c.label.code},{c.v},{xs}"
    atomic_write(path, lines())


def read_cycles(path: str) -> list[CvsCycle]:
    out = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(",")
            if len(parts) < 4:
                raise ValidationError(f"{path}:{ln}: malformed cycle record")
            sid, t_start, code, v = parts[0], int(parts[1]), int(parts[2]), int(parts[3])
            values = [float(p) for p in parts[4:]]
            if len(values) != v:
                raise ValidationError(
                    f"{path}:{ln}: declared {v} samples but found {len(values)}")
            out.append(CvsCycle(subject_id=sid, t_start_ms=t_start,
                                samples=np.asarray(values),
                                label=QualityLabel.from_code(code)))
    return out


# --- normalized datasets ---

def write_normalized(cycles, path: str) -> None:
    def lines():
        for c in cycles:
            xs = ",".join(_fmt(v) for v in c.values)
            yield f"{c.subject_id},{c.t_start_ms},{c.label.code},{xs},{c.scheme}"
    atomic_write(path, lines())


def read_normalized(path: str) -> list[NormalizedCycle]:
    out = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 3 + TARGET_LEN + 1:
                raise ValidationError(f"{path}:{ln}: malformed normalized record")
            sid, t_start, code = parts[0], int(parts[1]), int(parts[2])
            values = [float(p) for p in parts[3:3 + TARGET_LEN]]
            scheme = parts[-1]
            out.append(NormalizedCycle(values=np.asarray(values), subject_id=sid,
                                       t_start_ms=t_start, scheme=scheme,
                                       label=QualityLabel.from_code(code)))
    return out


# --- calibration ---

def write_calibrations(calibrations: dict[str, CalibrationWindow], path: str) -> None:
    def lines():
        for sid in sorted(calibrations):
            xs = ",".join(_fmt(v) for v in calibrations[sid].samples)
            yield f"{sid},{xs}"
    atomic_write(path, lines())


def read_calibrations(path: str) -> dict[str, CalibrationWindow]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 1 + CALIBRATION_SAMPLES:
                raise ValidationError(
                    f"{path}:{ln}: calibration row must hold {CALIBRATION_SAMPLES} samples")
            out[parts[0]] = CalibrationWindow(
                subject_id=parts[0], samples=np.asarray([float(p) for p in parts[1:]]))
    return out
