"""Discriminative quality classifiers: LR, two MLPs, and three VGG16 variants.

All map a normalized 150-sample cycle to a probability that the cycle is
motion-free.  Training minimizes a class-weighted cross-entropy with soft
targets (ambiguous cycles carry target 0.25) and keeps the parameters from the
epoch with the best validation AUC.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import (EmptySplit, NotConvolutional, ShapeMismatch,
                     SingleClassDataset)
from .evaluation import roc_auc
from .nn import (ParamSet, adam_step, forward_layers, init_params,
                 receptive_field, shape_trace)

INPUT_LEN = 150
CLIP_EPS = 1e-12

ARCHITECTURES = ("lr", "mlp1", "mlp2", "vgg3", "vgg4", "vgg5")

_VGG_BLOCK_CHANNELS = (4, 8, 16, 32)   # conv-conv-pool blocks
_VGG5_TAIL_CHANNELS = 64               # conv-conv before flatten


def _mlp_descriptor(dims: list[int]) -> list[dict]:
    layers = []
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        act = "sigmoid" if i == len(dims) - 2 else "relu"
        layers.append({"type": "dense", "in": fi, "out": fo, "act": act})
    return layers


def _vgg_descriptor(n_blocks: int) -> list[dict]:
    layers: list[dict] = []
    cin = 1
    length = INPUT_LEN
    for b in range(min(n_blocks, 4)):
        cout = _VGG_BLOCK_CHANNELS[b]
        layers.append({"type": "conv", "k": 3, "cin": cin, "cout": cout, "act": "relu"})
        layers.append({"type": "conv", "k": 3, "cin": cout, "cout": cout, "act": "relu"})
        layers.append({"type": "pool"})
        cin = cout
        length //= 2
    if n_blocks == 5:
        cout = _VGG5_TAIL_CHANNELS
        layers.append({"type": "conv", "k": 3, "cin": cin, "cout": cout, "act": "relu"})
        layers.append({"type": "conv", "k": 3, "cin": cout, "cout": cout, "act": "relu"})
        cin = cout
    layers.append({"type": "flatten"})
    flat = length * cin
    layers.append({"type": "dense", "in": flat, "out": flat, "act": "relu"})
    layers.append({"type": "dense", "in": flat, "out": 1, "act": "sigmoid"})
    return layers


def architecture_descriptor(name: str) -> list[dict]:
    if name == "lr":
        return [{"type": "dense", "in": INPUT_LEN, "out": 1, "act": "sigmoid"}]
    if name == "mlp1":
        return _mlp_descriptor([150, 150, 300, 300, 150, 150, 150, 1])
    if name == "mlp2":
        return _mlp_descriptor([150, 150, 150, 100, 50, 25, 10, 1])
    if name in ("vgg3", "vgg4", "vgg5"):
        return _vgg_descriptor(int(name[-1]))
    raise ShapeMismatch(f"unknown architecture {name!r}")


@dataclass
class DiscriminativeModel:
    architecture: str
    descriptor: list[dict]
    params: ParamSet
    seed: int
    training_meta: dict = field(default_factory=dict)

    @property
    def is_convolutional(self) -> bool:
        return any(l["type"] == "conv" for l in self.descriptor)


def build(architecture: str, seed: int) -> DiscriminativeModel:
    desc = architecture_descriptor(architecture)
    return DiscriminativeModel(architecture=architecture, descriptor=desc,
                               params=ParamSet(init_params(desc, seed)), seed=seed)


def _forward_var(model: DiscriminativeModel, x: np.ndarray,
                 params: dict[str, Var]) -> Var:
    if x.ndim != 2 or x.shape[1] != INPUT_LEN:
        raise ShapeMismatch(f"expected (N, {INPUT_LEN}) input, got {x.shape}")
    xv = Var(x)
    if model.is_convolutional:
        xv = ad.reshape(xv, (x.shape[0], INPUT_LEN, 1))
    out = forward_layers(model.descriptor, params, xv)
    return ad.reshape(out, (x.shape[0],))


def forward(model: DiscriminativeModel, x: np.ndarray) -> np.ndarray:
    """Probabilities in (0, 1) for a batch of normalized cycles (N, 150)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return _forward_var(model, x, model.params.as_vars()).value


@dataclass(frozen=True)
class ClassWeights:
    zeta_pos: float
    zeta_neg: float

    def __post_init__(self):
        if self.zeta_pos <= 0 or self.zeta_neg <= 0:
            raise SingleClassDataset("class weights must be positive")


def weighted_ce(pred: float, y: float, weights: ClassWeights) -> float:
    """Weighted cross-entropy for one prediction with a soft target in [0, 1]."""
    p = min(max(float(pred), CLIP_EPS), 1.0 - CLIP_EPS)
    return (-weights.zeta_pos * y * math.log(p)
            - weights.zeta_neg * (1.0 - y) * math.log(1.0 - p))


def _weighted_ce_loss(pred: Var, y: np.ndarray, weights: ClassWeights) -> Var:
    p = ad.clip(pred, CLIP_EPS, 1.0 - CLIP_EPS)
    pos = ad.scale(ad.mul(Var(y), ad.log(p)), -weights.zeta_pos)
    neg = ad.scale(ad.mul(Var(1.0 - y), ad.log(ad.sub(Var(np.ones_like(y)), p))),
                   -weights.zeta_neg)
    return ad.mean(ad.add(pos, neg))


def compute_class_weights(train_values: np.ndarray) -> ClassWeights:
    """Inverse-frequency weights; ambiguous samples contribute fractional mass.

    A sample with soft target y counts y toward the positive mass and 1 - y
    toward the negative mass; each class is weighted by the opposite class's
    fraction so the minority is upweighted.
    """
    y = np.asarray(train_values, dtype=np.float64)
    if y.size == 0:
        raise EmptySplit("no training labels")
    pos_eff = float(y.sum())
    neg_eff = float((1.0 - y).sum())
    if pos_eff == 0.0 or neg_eff == 0.0:
        raise SingleClassDataset("training labels contain a single class")
    n = float(y.size)
    return ClassWeights(zeta_pos=neg_eff / n, zeta_neg=pos_eff / n)


def compute_receptive_field(architecture: str) -> int:
    desc = architecture_descriptor(architecture)
    if not any(l["type"] == "conv" for l in desc):
        raise NotConvolutional(f"{architecture} has no convolutional layers")
    return receptive_field(desc)


def architecture_shape_trace(architecture: str) -> list[tuple]:
    desc = architecture_descriptor(architecture)
    start = (INPUT_LEN, 1) if any(l["type"] == "conv" for l in desc) else (INPUT_LEN,)
    return shape_trace(desc, start)


def train(model: DiscriminativeModel, x_train: np.ndarray, y_train: np.ndarray,
          x_val: np.ndarray, y_val_eval: np.ndarray, epochs: int, lr: float,
          batch_size: int = 64, seed: int = 0,
          weights: ClassWeights | None = None) -> dict:
    """Train in place; restore the epoch with the best validation AUC.

    y_train holds soft train targets; y_val_eval holds hard {0, 1} eval labels.
    Deterministic under (model params, seed).
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise EmptySplit("train and validation sets must be non-empty")
    if weights is None:
        weights = compute_class_weights(y_train)
    rng = np.random.default_rng(seed)
    n = x_train.shape[0]
    history = {"train_loss": [], "val_auc": []}
    best_auc, best_values = -np.inf, model.params.copy_values()

    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            pvars = model.params.as_vars()
            pred = _forward_var(model, x_train[idx], pvars)
            loss = _weighted_ce_loss(pred, y_train[idx], weights)
            ad.backward(loss)
            grads = {k: v.grad for k, v in pvars.items() if v.grad is not None}
            adam_step(model.params, grads, lr)
            epoch_loss += float(loss.value) * idx.size
        history["train_loss"].append(epoch_loss / n)

        scores = forward(model, x_val)
        try:
            _, auc = roc_auc(scores, y_val_eval)
        except SingleClassDataset:
            auc = 0.5
        history["val_auc"].append(auc)
        if auc > best_auc:
            best_auc = auc
            best_values = model.params.copy_values()

    model.params.load_values(best_values)
    model.training_meta = {"epochs": epochs, "lr": lr, "batch_size": batch_size,
                           "seed": seed, "best_val_auc": best_auc,
                           "zeta_pos": weights.zeta_pos, "zeta_neg": weights.zeta_neg}
    return history
