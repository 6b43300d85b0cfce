"""Manifold-learning quality models: PCA and (convolutional) (beta-)VAEs.

These learn only from motion-free cycles.  A cycle is scored by the Euclidean
residual between itself and its reconstruction; the accept/reject threshold is
picked by maximizing Youden's J over residuals from the train+val pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import (ContainsNegativeSamples, EmptySplit, InsufficientSamples,
                     NonPositiveSigma, NotFitted, ShapeMismatch,
                     SingleClassDataset, ThresholdUnset)
from .nn import ParamSet, adam_step, forward_layers, init_params

INPUT_LEN = 150
LATENT_DIM = 10

MANIFOLD_KINDS = ("pca", "vae", "bvae", "cvae", "bcvae")
DEFAULT_BETA = {"vae": 1.0, "bvae": 0.5, "cvae": 1.0, "bcvae": 0.5}


# --- PCA ---

@dataclass
class PcaModel:
    mean: np.ndarray | None = None
    components: np.ndarray | None = None     # (10, 150), orthonormal rows
    threshold_d: float | None = None
    kind: str = "pca"
    training_meta: dict = field(default_factory=dict)

    @property
    def fitted(self) -> bool:
        return self.components is not None


def pca_fit(x_pos: np.ndarray, k: int = LATENT_DIM) -> PcaModel:
    """Top-k principal directions of the positive cycles, via SVD of centered data."""
    x = np.asarray(x_pos, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch("pca_fit expects (N, 150)")
    if x.shape[0] < k:
        raise InsufficientSamples(f"need at least {k} samples, got {x.shape[0]}")
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    return PcaModel(mean=mean, components=vt[:k].copy())


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Reconstruction: mean + projection onto the principal subspace."""
    if not model.fitted:
        raise NotFitted("PCA model has not been fitted")
    x = np.asarray(x, dtype=np.float64)
    centered = x - model.mean
    z = centered @ model.components.T
    return model.mean + z @ model.components


# --- VAE ---

def _mlp_vae_descriptors() -> tuple[list[dict], list[dict]]:
    enc = [
        {"type": "dense", "in": 150, "out": 125, "act": "relu"},
        {"type": "dense", "in": 125, "out": 75, "act": "relu"},
        {"type": "dense", "in": 75, "out": 50, "act": "relu"},
        {"type": "dense", "in": 50, "out": 2 * LATENT_DIM},
    ]
    dec = [
        {"type": "dense", "in": 10, "out": 50, "act": "relu"},
        {"type": "dense", "in": 50, "out": 75, "act": "relu"},
        {"type": "dense", "in": 75, "out": 125, "act": "relu"},
        {"type": "dense", "in": 125, "out": 150},
    ]
    return enc, dec


def _conv_vae_descriptors() -> tuple[list[dict], list[dict]]:
    enc = [
        {"type": "conv", "k": 3, "cin": 1, "cout": 8, "stride": 2, "act": "relu"},
        {"type": "conv", "k": 3, "cin": 8, "cout": 16, "stride": 2, "act": "relu"},
        {"type": "conv", "k": 3, "cin": 16, "cout": 24, "stride": 2, "act": "relu"},
        {"type": "conv", "k": 3, "cin": 24, "cout": 32, "stride": 2, "act": "relu"},
        {"type": "flatten"},
        {"type": "dense", "in": 320, "out": 2 * LATENT_DIM},
    ]
    dec = [
        {"type": "dense", "in": 10, "out": 320},
        {"type": "reshape", "len": 10, "ch": 32},
        {"type": "deconv", "k": 3, "cin": 32, "cout": 24, "stride": 2, "out_len": 19, "act": "relu"},
        {"type": "deconv", "k": 3, "cin": 24, "cout": 16, "stride": 2, "out_len": 38, "act": "relu"},
        {"type": "deconv", "k": 3, "cin": 16, "cout": 8, "stride": 2, "out_len": 75, "act": "relu"},
        {"type": "deconv", "k": 3, "cin": 8, "cout": 8, "stride": 2, "out_len": 150, "act": "relu"},
        {"type": "conv", "k": 1, "cin": 8, "cout": 1, "act": "relu"},
        {"type": "flatten"},
        {"type": "dense", "in": 150, "out": 150},
    ]
    return enc, dec


def vae_descriptors(kind: str) -> tuple[list[dict], list[dict]]:
    if kind in ("vae", "bvae"):
        return _mlp_vae_descriptors()
    if kind in ("cvae", "bcvae"):
        return _conv_vae_descriptors()
    raise ShapeMismatch(f"unknown VAE kind {kind!r}")


@dataclass
class VaeModel:
    kind: str
    beta: float
    enc: list[dict]
    dec: list[dict]
    params: ParamSet
    seed: int
    threshold_d: float | None = None
    training_meta: dict = field(default_factory=dict)
    train_audit: dict = field(default_factory=dict)

    @property
    def is_convolutional(self) -> bool:
        return self.kind in ("cvae", "bcvae")


def build_vae(kind: str, seed: int, beta: float | None = None) -> VaeModel:
    enc, dec = vae_descriptors(kind)
    values = {**init_params(enc, seed, prefix="enc."),
              **init_params(dec, seed + 1, prefix="dec.")}
    return VaeModel(kind=kind, beta=DEFAULT_BETA[kind] if beta is None else beta,
                    enc=enc, dec=dec, params=ParamSet(values), seed=seed)


def _encode(model: VaeModel, x: np.ndarray, params: dict[str, Var]) -> tuple[Var, Var]:
    xv = Var(x)
    if model.is_convolutional:
        xv = ad.reshape(xv, (x.shape[0], INPUT_LEN, 1))
    h = forward_layers(model.enc, params, xv, prefix="enc.")
    return ad.slice_cols(h, 0, LATENT_DIM), ad.slice_cols(h, LATENT_DIM, 2 * LATENT_DIM)


def _decode(model: VaeModel, z: Var, params: dict[str, Var]) -> Var:
    return forward_layers(model.dec, params, z, prefix="dec.")


def vae_forward(model: VaeModel, x: np.ndarray, noise: np.ndarray | None = None):
    """Reconstruction plus (mu, sigma, z).  Deterministic (z = mu) unless noise given.

    The sigma head is parameterized as exp(log sigma) so sigma stays positive.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != INPUT_LEN:
        raise ShapeMismatch(f"expected (N, {INPUT_LEN}), got {x.shape}")
    params = model.params.as_vars()
    mu, log_sigma = _encode(model, x, params)
    sigma = np.exp(log_sigma.value)
    if noise is None:
        z = mu
    else:
        z = ad.add(mu, ad.mul(ad.exp(log_sigma), Var(noise)))
    recon = _decode(model, z, params)
    return recon.value, mu.value, sigma, z.value


def kl_term(mu: np.ndarray, sigma: np.ndarray) -> float:
    """KL(N(mu, diag(sigma^2)) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - log sigma^2 - 1)."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise NonPositiveSigma("sigma must be strictly positive")
    return float(0.5 * np.sum(mu ** 2 + sigma ** 2 - np.log(sigma ** 2) - 1.0))


def _vae_loss(model: VaeModel, x: np.ndarray, params: dict[str, Var],
              noise: np.ndarray) -> Var:
    """Mean over the batch of squared reconstruction norm + beta * KL."""
    n = x.shape[0]
    mu, log_sigma = _encode(model, x, params)
    z = ad.add(mu, ad.mul(ad.exp(log_sigma), Var(noise)))
    recon = _decode(model, z, params)
    sq = ad.sum_(ad.square(ad.sub(recon, Var(x))))
    # KL with sigma^2 = exp(2 log sigma)
    kl = ad.scale(ad.sum_(ad.add(ad.sub(ad.add(ad.square(mu),
                                               ad.exp(ad.scale(log_sigma, 2.0))),
                                        ad.scale(log_sigma, 2.0)),
                                 Var(-np.ones((n, LATENT_DIM))))), 0.5)
    return ad.scale(ad.add(sq, ad.scale(kl, model.beta)), 1.0 / n)


def vae_train(model: VaeModel, x_pos: np.ndarray, eval_labels: np.ndarray,
              epochs: int, lr: float, seed: int = 0, batch_size: int = 64,
              x_val_pos: np.ndarray | None = None) -> dict:
    """Train on positive cycles only; negatives in the input are a hard error.

    Model selection keeps the epoch with the best validation reconstruction
    loss when validation positives are supplied.  train_audit records how many
    negative samples entered gradient updates (always 0 by construction).
    """
    x_pos = np.asarray(x_pos, dtype=np.float64)
    labels = np.asarray(eval_labels, dtype=np.int64)
    if x_pos.shape[0] == 0:
        raise EmptySplit("no positive training samples")
    if labels.shape[0] != x_pos.shape[0]:
        raise ShapeMismatch("labels must align with training samples")
    if np.any(labels != 1):
        raise ContainsNegativeSamples(
            f"{int(np.sum(labels != 1))} non-positive samples in manifold training set")

    rng = np.random.default_rng(seed)
    n = x_pos.shape[0]
    history = {"train_loss": [], "val_recon": []}
    audit = {"negatives_in_updates": 0, "updates": 0, "samples_seen": 0}
    best_val, best_values = np.inf, model.params.copy_values()

    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = x_pos[idx]
            noise = rng.standard_normal((idx.size, LATENT_DIM))
            pvars = model.params.as_vars()
            loss = _vae_loss(model, batch, pvars, noise)
            ad.backward(loss)
            grads = {k: v.grad for k, v in pvars.items() if v.grad is not None}
            adam_step(model.params, grads, lr)
            epoch_loss += float(loss.value) * idx.size
            audit["updates"] += 1
            audit["samples_seen"] += int(idx.size)
            audit["negatives_in_updates"] += int(np.sum(labels[idx] != 1))
        history["train_loss"].append(epoch_loss / n)

        if x_val_pos is not None and len(x_val_pos):
            recon, _, _, _ = vae_forward(model, x_val_pos)
            val = float(np.mean(np.sum((recon - x_val_pos) ** 2, axis=1)))
            history["val_recon"].append(val)
            if val < best_val:
                best_val = val
                best_values = model.params.copy_values()

    if x_val_pos is not None and len(x_val_pos):
        model.params.load_values(best_values)
    model.train_audit = audit
    model.training_meta = {"epochs": epochs, "lr": lr, "batch_size": batch_size,
                           "seed": seed, "beta": model.beta}
    return history


# --- scoring ---

def residuals(model, x: np.ndarray) -> np.ndarray:
    """Euclidean reconstruction distances for a batch, inference mode."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if isinstance(model, PcaModel):
        recon = pca_project(model, x)
    else:
        recon, _, _, _ = vae_forward(model, x)
    return np.linalg.norm(x - recon, axis=1)


def residual(model, x: np.ndarray) -> float:
    return float(residuals(model, np.atleast_2d(x))[0])


def select_threshold(scores: np.ndarray, eval_labels: np.ndarray) -> tuple[float, float]:
    """Threshold d maximizing J = sensitivity + specificity - 1 for rule r <= d.

    Candidates are midpoints between consecutive distinct residuals plus
    sentinels below the minimum and at +inf; ties break toward smaller d.
    """
    r = np.asarray(scores, dtype=np.float64)
    y = np.asarray(eval_labels, dtype=np.int64)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("threshold selection needs both classes")

    distinct = np.unique(r)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    low = distinct[0] / 2.0 if distinct[0] > 0 else -np.inf
    candidates = np.concatenate([[low], mids, distinct[-1:], [np.inf]])

    best_d, best_j = candidates[0], -np.inf
    for d in candidates:
        accept = r <= d
        tp = int(np.sum(accept & (y == 1)))
        tn = int(np.sum(~accept & (y == 0)))
        j = tp / n_pos + tn / n_neg - 1.0
        if j > best_j + 1e-15:
            best_j, best_d = j, d
    return float(max(best_d, 0.0)), float(best_j)


def assess(model, x: np.ndarray) -> int:
    """1 (normal) iff the residual is at or below the model threshold."""
    d = model.threshold_d
    if d is None:
        raise ThresholdUnset("threshold has not been selected")
    return 1 if residual(model, x) <= d else 0
