"""Autoencoder training, latent encoding, and reconstruction-error scoring.

The reconstruction error is the per-sample mean squared error between the
boolean input and its sigmoid reconstruction; it doubles as the anomaly
score, the threshold baseline, and the reward-shaping signal downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyFeedbackSet,
    EmptyTrainingSet,
    LatentTooLarge,
)
from .neural_core import DenseNet, TrainConfig


def default_latent_dim(d: int) -> int:
    return min(16, d - 1)


def default_hidden_dim(d: int) -> int:
    return max(16, d // 2)


# Tuned for boolean inputs under the per-feature-mean MSE loss; the 1/d
# factor shrinks gradients, hence the large step size.
AE_TRAIN_DEFAULTS = dict(learning_rate=2.0, epochs=40, batch_size=32)


def default_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(seed=seed, **AE_TRAIN_DEFAULTS)


@dataclass
class AutoencoderModel:
    encoder: DenseNet  # d -> hidden -> k
    decoder: DenseNet  # k -> hidden -> d, sigmoid output
    k: int
    train_log: list[float] = field(default_factory=list)  # mean loss after each epoch
    tau: float | None = None
    version: int = 0
    parent_version: int | None = None
    seed: int | None = None
    config: dict | None = None

    @property
    def d(self) -> int:
        return self.encoder.input_dim

    def to_dict(self) -> dict:
        return {
            "format": "aptensemble-autoencoder/1",
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "k": self.k,
            "tau": self.tau,
            "version": self.version,
            "parent_version": self.parent_version,
            "seed": self.seed,
            "config": self.config,
            "train_log": self.train_log,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AutoencoderModel":
        return cls(
            encoder=DenseNet.from_dict(doc["encoder"]),
            decoder=DenseNet.from_dict(doc["decoder"]),
            k=doc["k"],
            train_log=list(doc.get("train_log", [])),
            tau=doc.get("tau"),
            version=doc.get("version", 0),
            parent_version=doc.get("parent_version"),
            seed=doc.get("seed"),
            config=doc.get("config"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "AutoencoderModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_matrix(records) -> np.ndarray:
    x = np.asarray(records, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    return np.ascontiguousarray(x)


def _train_epochs(model: AutoencoderModel, x: np.ndarray, cfg: TrainConfig,
                  rng: np.random.Generator) -> None:
    """SGD on the mean reconstruction loss; appends per-epoch loss to train_log."""
    n, d = x.shape
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start : start + cfg.batch_size]]
            z, enc_cache = model.encoder.forward(batch)
            xhat, dec_cache = model.decoder.forward(z)
            # loss = mean over batch of (1/d) sum_i (x_i - xhat_i)^2
            grad = (2.0 / (d * batch.shape[0])) * (xhat - batch)
            dec_grads = model.decoder.backward(dec_cache, grad)
            enc_grads = model.encoder.backward(enc_cache, dec_grads.d_input)
            model.decoder.sgd_step(dec_grads, cfg.learning_rate)
            model.encoder.sgd_step(enc_grads, cfg.learning_rate)
        model.train_log.append(float(np.mean(recon_errors(model, x))))


def train_ae(train_records, cfg: TrainConfig, k: int) -> AutoencoderModel:
    """Train a fresh autoencoder on (benign) boolean records.

    train_records: (n, d) array-like of 0/1 rows. Deterministic per cfg.seed.
    """
    x = _as_matrix(train_records)
    if x.size == 0:
        raise EmptyTrainingSet("autoencoder training set is empty")
    d = x.shape[1]
    if k >= d:
        raise LatentTooLarge(f"latent dim {k} must be < feature dim {d}")
    hidden = default_hidden_dim(d)
    rng = np.random.default_rng(cfg.seed)
    model = AutoencoderModel(
        encoder=DenseNet.init([d, hidden, k], ["relu", "identity"], rng),
        decoder=DenseNet.init([k, hidden, d], ["relu", "sigmoid"], rng),
        k=k,
        seed=cfg.seed,
        config=cfg.to_dict(),
    )
    _train_epochs(model, x, cfg, rng)
    return model


def encode(model: AutoencoderModel, x) -> np.ndarray:
    """Latent vector(s) for one bit-vector or a batch of them."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != model.d:
        raise DimensionMismatch(f"input width {arr.shape[-1]}, model expects {model.d}")
    z, _ = model.encoder.forward(arr)
    return z


def reconstruct(model: AutoencoderModel, x) -> np.ndarray:
    xhat, _ = model.decoder.forward(encode(model, x))
    return xhat


def recon_error(model: AutoencoderModel, x) -> float:
    """Per-sample mean squared reconstruction error (the anomaly score)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch("recon_error takes a single vector; use recon_errors")
    if arr.shape[0] != model.d:
        raise DimensionMismatch(f"input width {arr.shape[0]}, model expects {model.d}")
    xhat = reconstruct(model, arr)
    return float(np.mean((arr - xhat) ** 2))


def recon_errors(model: AutoencoderModel, x) -> np.ndarray:
    """Vector of per-record reconstruction errors for a batch."""
    arr = _as_matrix(x)
    if arr.shape[1] != model.d:
        raise DimensionMismatch(f"input width {arr.shape[1]}, model expects {model.d}")
    xhat = reconstruct(model, arr)
    return np.mean((arr - xhat) ** 2, axis=1)


def ae_threshold_classify(model: AutoencoderModel, x, tau: float) -> int:
    """Threshold baseline: flag iff the reconstruction error exceeds tau."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    return int(recon_error(model, x) > tau)


def benign_threshold(model: AutoencoderModel, benign_records, percentile: float = 99.0) -> float:
    """Default tau: a high percentile of the benign training errors."""
    errs = recon_errors(model, benign_records)
    return float(np.percentile(errs, percentile))


def refine_on_false_positives(model: AutoencoderModel, confirmed_benign,
                              cfg: TrainConfig) -> AutoencoderModel:
    """Fine-tune a copy of the model on oracle-confirmed benign records.

    Returns a new model version; the input model is left untouched.
    """
    x = _as_matrix(confirmed_benign)
    if x.size == 0:
        raise EmptyFeedbackSet("no confirmed-benign records supplied")
    if x.shape[1] != model.d:
        raise DimensionMismatch(f"input width {x.shape[1]}, model expects {model.d}")
    refined = AutoencoderModel(
        encoder=model.encoder.copy(),
        decoder=model.decoder.copy(),
        k=model.k,
        train_log=list(model.train_log),
        tau=model.tau,
        version=model.version + 1,
        parent_version=model.version,
        seed=model.seed,
        config=cfg.to_dict(),
    )
    rng = np.random.default_rng(cfg.seed)
    _train_epochs(refined, x, cfg, rng)
    return refined
