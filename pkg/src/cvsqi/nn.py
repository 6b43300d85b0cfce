"""Parameter containers, seeded initialization, Adam, and descriptor-driven forward.

Architectures are plain JSON-able descriptors: a list of layer dicts consumed
both by the initializer (which allocates glorot-uniform weights and zero
biases) and by forward_layers (which builds the autodiff graph).
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import NotConvolutional, ShapeMismatch

ACTIVATIONS = {"relu": ad.relu, "sigmoid": ad.sigmoid, None: None}


class ParamSet:
    """Named parameter tensors plus per-parameter Adam moments and a step counter."""

    def __init__(self, values: dict[str, np.ndarray]):
        self.values = {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.values.items()}
        self.t = 0

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.values.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            if k not in self.values or self.values[k].shape != v.shape:
                raise ShapeMismatch(f"parameter {k!r} shape mismatch on load")
            self.values[k] = np.asarray(v, dtype=np.float64).copy()

    def as_vars(self) -> dict[str, Var]:
        return {k: Var(v) for k, v in self.values.items()}


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard Adam update with bias correction, in place."""
    params.t += 1
    t = params.t
    for name, g in grads.items():
        if name not in params.values:
            raise ShapeMismatch(f"gradient for unknown parameter {name!r}")
        if g.shape != params.values[name].shape:
            raise ShapeMismatch(f"gradient shape mismatch for {name!r}")
        params.m[name] = beta1 * params.m[name] + (1 - beta1) * g
        params.v[name] = beta2 * params.v[name] + (1 - beta2) * g * g
        m_hat = params.m[name] / (1 - beta1 ** t)
        v_hat = params.v[name] / (1 - beta2 ** t)
        params.values[name] = params.values[name] - lr * m_hat / (np.sqrt(v_hat) + eps)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(layers: list[dict], seed: int, prefix: str = "") -> dict[str, np.ndarray]:
    """Deterministic glorot-uniform weights, zero biases, one entry per trainable layer."""
    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for i, layer in enumerate(layers):
        kind = layer["type"]
        name = f"{prefix}layer{i}"
        if kind == "dense":
            fi, fo = layer["in"], layer["out"]
            values[f"{name}.W"] = _glorot(rng, (fo, fi), fi, fo)
            values[f"{name}.b"] = np.zeros(fo)
        elif kind in ("conv", "deconv"):
            k, cin, cout = layer["k"], layer["cin"], layer["cout"]
            values[f"{name}.W"] = _glorot(rng, (k, cin, cout), k * cin, k * cout)
            values[f"{name}.b"] = np.zeros(cout)
    return values


def forward_layers(layers: list[dict], params: dict[str, Var], x: Var,
                   prefix: str = "") -> Var:
    """Run the descriptor's layer stack on x, building the autodiff graph."""
    h = x
    for i, layer in enumerate(layers):
        kind = layer["type"]
        name = f"{prefix}layer{i}"
        if kind == "dense":
            h = ad.dense(h, params[f"{name}.W"], params[f"{name}.b"])
        elif kind == "conv":
            h = ad.conv1d(h, params[f"{name}.W"], params[f"{name}.b"],
                          stride=layer.get("stride", 1))
        elif kind == "deconv":
            h = ad.conv_transpose1d(h, params[f"{name}.W"], params[f"{name}.b"],
                                    stride=layer.get("stride", 2),
                                    out_len=layer["out_len"])
        elif kind == "pool":
            h = ad.maxpool1d(h)
        elif kind == "flatten":
            n = h.value.shape[0]
            h = ad.reshape(h, (n, -1))
        elif kind == "reshape":
            n = h.value.shape[0]
            h = ad.reshape(h, (n, layer["len"], layer["ch"]))
        else:
            raise ShapeMismatch(f"unknown layer type {kind!r}")
        act = ACTIVATIONS[layer.get("act")]
        if act is not None:
            h = act(h)
    return h


def shape_trace(layers: list[dict], input_shape) -> list[tuple]:
    """Propagate (length, channels) / (features,) shapes through a descriptor."""
    shape = tuple(input_shape)
    trace = [shape]
    for layer in layers:
        kind = layer["type"]
        if kind == "dense":
            shape = (layer["out"],)
        elif kind == "conv":
            stride = layer.get("stride", 1)
            shape = (-(-shape[0] // stride), layer["cout"])
        elif kind == "deconv":
            shape = (layer["out_len"], layer["cout"])
        elif kind == "pool":
            shape = (shape[0] // 2, shape[1])
        elif kind == "flatten":
            shape = (shape[0] * shape[1],)
        elif kind == "reshape":
            shape = (layer["len"], layer["ch"])
        trace.append(shape)
    return trace


def receptive_field(layers: list[dict]) -> int:
    """Receptive field of one unit in the last conv layer, by the standard recursion."""
    rf, jump = 1, 1
    last_conv_rf = None
    for layer in layers:
        kind = layer["type"]
        if kind == "conv":
            stride = layer.get("stride", 1)
            rf += (layer["k"] - 1) * jump
            jump *= stride
            last_conv_rf = rf
        elif kind == "pool":
            rf += 1 * jump
            jump *= 2
        elif kind in ("dense", "flatten"):
            break
    if last_conv_rf is None:
        raise NotConvolutional("architecture has no convolutional layers")
    return last_conv_rf
