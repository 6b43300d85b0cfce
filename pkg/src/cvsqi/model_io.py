"""Versioned model artifacts: JSON with base64 float64 tensors and a checksum.

An artifact records the architecture descriptor, the preprocessing
configuration it was trained under (size scheme + scale mode), the parameters,
training metadata, and (for manifold models) the selected threshold.  Loading
verifies the format version and a SHA-256 checksum over the canonical payload.
"""
from __future__ import annotations

import base64
import hashlib
import json

import numpy as np

from .discriminative import DiscriminativeModel
from .errors import CorruptFile, SchemeMismatch, VersionMismatch
from .manifold import PcaModel, VaeModel
from .nn import ParamSet

FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.float64).reshape(d["shape"]).copy()


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def model_artifact(model, norm_scheme: str, scale_mode: str) -> dict:
    if isinstance(model, DiscriminativeModel):
        payload = {
            "family": "discriminative",
            "architecture": model.architecture,
            "descriptor": model.descriptor,
            "seed": model.seed,
            "params": {k: _encode_array(v) for k, v in model.params.values.items()},
            "training": model.training_meta,
        }
    elif isinstance(model, VaeModel):
        payload = {
            "family": "manifold",
            "kind": model.kind,
            "beta": model.beta,
            "encoder": model.enc,
            "decoder": model.dec,
            "seed": model.seed,
            "params": {k: _encode_array(v) for k, v in model.params.values.items()},
            "threshold": model.threshold_d,
            "training": model.training_meta,
            "audit": model.train_audit,
        }
    elif isinstance(model, PcaModel):
        payload = {
            "family": "manifold",
            "kind": "pca",
            "mean": _encode_array(model.mean),
            "components": _encode_array(model.components),
            "threshold": model.threshold_d,
            "training": model.training_meta,
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    payload["preprocessing"] = {"norm_scheme": norm_scheme, "scale_mode": scale_mode}
    return payload


def save_model(model, path: str, norm_scheme: str, scale_mode: str) -> None:
    payload = model_artifact(model, norm_scheme, scale_mode)
    doc = {"format_version": FORMAT_VERSION, "payload": payload,
           "checksum": _checksum(payload)}
    from .dataio import atomic_write
    atomic_write(path, [json.dumps(doc, indent=1)])


def load_model(path: str):
    """Returns (model, preprocessing dict).  Raises VersionMismatch/CorruptFile."""
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: not a valid model file ({exc})") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: file version {version}, supported version {FORMAT_VERSION}")
    payload = doc.get("payload")
    if payload is None or doc.get("checksum") != _checksum(payload):
        raise CorruptFile(f"{path}: checksum mismatch")

    prep = payload["preprocessing"]
    if payload["family"] == "discriminative":
        model = DiscriminativeModel(
            architecture=payload["architecture"],
            descriptor=payload["descriptor"],
            params=ParamSet({k: _decode_array(v) for k, v in payload["params"].items()}),
            seed=payload["seed"],
            training_meta=payload.get("training", {}),
        )
    elif payload["kind"] == "pca":
        model = PcaModel(mean=_decode_array(payload["mean"]),
                         components=_decode_array(payload["components"]),
                         threshold_d=payload.get("threshold"),
                         training_meta=payload.get("training", {}))
    else:
        model = VaeModel(
            kind=payload["kind"], beta=payload["beta"],
            enc=payload["encoder"], dec=payload["decoder"],
            params=ParamSet({k: _decode_array(v) for k, v in payload["params"].items()}),
            seed=payload["seed"], threshold_d=payload.get("threshold"),
            training_meta=payload.get("training", {}),
            train_audit=payload.get("audit", {}),
        )
    return model, prep


def check_scheme(prep: dict, norm_scheme: str | None) -> str:
    """Resolve the size scheme for assessment; explicit overrides must agree."""
    recorded = prep.get("norm_scheme")
    if norm_scheme is not None and recorded is not None and norm_scheme != recorded:
        raise SchemeMismatch(
            f"model was trained with scheme {recorded!r}, requested {norm_scheme!r}")
    return norm_scheme or recorded
