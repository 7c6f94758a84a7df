"""Minimal dense feed-forward networks with manual backpropagation.

Shared by the autoencoder, the DQN heads and the PPO heads. Nothing here
knows about rewards or anomaly scores; it is plain math: forward pass with
an activation trace, exact gradients, and in-place SGD. The per-layer
arithmetic is delegated to aptensemble.kernels (compiled when available).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionMismatch, ShapeMismatch, StaleCache

ACTIVATIONS = {
    "identity": kernels.ACT_IDENTITY,
    "relu": kernels.ACT_RELU,
    "sigmoid": kernels.ACT_SIGMOID,
    "tanh": kernels.ACT_TANH,
}
_ACT_NAMES = {v: k for k, v in ACTIVATIONS.items()}


@dataclass
class TrainConfig:
    """Hyperparameters for any SGD training loop in this package."""

    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    weight_init: str = "uniform_scaled"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.weight_init != "uniform_scaled":
            raise ValueError(f"unknown weight_init {self.weight_init!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "weight_init": self.weight_init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class Layer:
    w: np.ndarray  # (d_out, d_in)
    b: np.ndarray  # (d_out,)
    act: int

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]


class DenseNet:
    """A chain of dense layers. Single-writer during training."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("a DenseNet needs at least one layer")
        for lo, hi in zip(layers, layers[1:]):
            if lo.out_dim != hi.in_dim:
                raise DimensionMismatch(
                    f"layer dims do not chain: {lo.out_dim} -> {hi.in_dim}"
                )
        self.layers = layers
        self._version = 0  # bumped on every parameter update; caches carry it

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @classmethod
    def init(cls, dims: list[int], activations: list[str], rng: np.random.Generator) -> "DenseNet":
        """Uniform scaled init: w, b ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for d_in, d_out, act in zip(dims, dims[1:], activations):
            bound = 1.0 / np.sqrt(d_in)
            w = rng.uniform(-bound, bound, size=(d_out, d_in))
            b = rng.uniform(-bound, bound, size=d_out)
            layers.append(Layer(w, b, ACTIVATIONS[act]))
        return cls(layers)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.w.copy(), l.b.copy(), l.act) for l in self.layers])

    def copy_params_from(self, other: "DenseNet") -> None:
        if len(self.layers) != len(other.layers):
            raise ShapeMismatch("layer count differs")
        for mine, theirs in zip(self.layers, other.layers):
            if mine.w.shape != theirs.w.shape:
                raise ShapeMismatch("layer shapes differ")
            mine.w[...] = theirs.w
            mine.b[...] = theirs.b
        self._version += 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, "ForwardCache"]:
        """Evaluate the net on a vector (d,) or batch (n, d).

        Returns the output plus the activation trace needed by backward().
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x.reshape(1, -1) if single else x
        if batch.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"input has width {batch.shape[1]}, net expects {self.input_dim}"
            )
        batch = np.ascontiguousarray(batch)
        activations = [batch]
        for layer in self.layers:
            batch = kernels.layer_forward(batch, layer.w, layer.b, layer.act)
            activations.append(batch)
        y = batch[0] if single else batch
        return y, ForwardCache(self, self._version, activations, single)

    def backward(self, cache: "ForwardCache", upstream_grad: np.ndarray) -> "ParamGrads":
        """Exact gradients of (upstream_grad . output) w.r.t. every parameter."""
        if cache.net is not self or cache.version != self._version:
            raise StaleCache("cache does not match the net's current parameters")
        g = np.asarray(upstream_grad, dtype=np.float64)
        if cache.single:
            g = g.reshape(1, -1)
        if g.shape != cache.activations[-1].shape:
            raise ShapeMismatch(
                f"upstream grad shape {g.shape} != output shape {cache.activations[-1].shape}"
            )
        g = np.ascontiguousarray(g)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)  # type: ignore
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            a = cache.activations[idx + 1]
            a_prev = cache.activations[idx]
            d_w, d_b, g = kernels.layer_backward(g, a, a_prev, layer.w, layer.act)
            grads[idx] = (d_w, d_b)
        d_input = np.asarray(g)
        if cache.single:
            d_input = d_input[0]
        return ParamGrads(grads, d_input=d_input)

    def sgd_step(self, grads: "ParamGrads", lr: float) -> "DenseNet":
        """In-place theta <- theta - lr * grad. Returns self."""
        if lr < 0:
            raise ValueError(f"lr must be >= 0, got {lr}")
        if len(grads.per_layer) != len(self.layers):
            raise ShapeMismatch("grad layer count differs from net")
        for layer, (d_w, d_b) in zip(self.layers, grads.per_layer):
            if d_w.shape != layer.w.shape or d_b.shape != layer.b.shape:
                raise ShapeMismatch("grad shapes differ from parameters")
            layer.w -= lr * d_w
            layer.b -= lr * d_b
        self._version += 1
        return self

    # -- checkpointing ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [
                {
                    "w": l.w.tolist(),  # row-major nested lists
                    "b": l.b.tolist(),
                    "activation": _ACT_NAMES[l.act],
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        layers = [
            Layer(
                np.asarray(spec["w"], dtype=np.float64),
                np.asarray(spec["b"], dtype=np.float64),
                ACTIVATIONS[spec["activation"]],
            )
            for spec in d["layers"]
        ]
        return cls(layers)


@dataclass
class ForwardCache:
    """Activation trace from one forward pass, consumed by backward()."""

    net: DenseNet
    version: int
    activations: list[np.ndarray]  # [input, layer1 out, ..., output]
    single: bool


@dataclass
class ParamGrads:
    per_layer: list[tuple[np.ndarray, np.ndarray]]  # (d_w, d_b) per layer
    d_input: np.ndarray | None = None  # gradient w.r.t. the net input

    def scaled(self, factor: float) -> "ParamGrads":
        return ParamGrads([(dw * factor, db * factor) for dw, db in self.per_layer])

    def add_(self, other: "ParamGrads") -> "ParamGrads":
        for (dw, db), (ow, ob) in zip(self.per_layer, other.per_layer):
            dw += ow
            db += ob
        return self

    @classmethod
    def zeros_like(cls, net: DenseNet) -> "ParamGrads":
        return cls([(np.zeros_like(l.w), np.zeros_like(l.b)) for l in net.layers])


def save_checkpoint(net: DenseNet, path: str | Path, *, seed: int | None = None,
                    config: dict | None = None, extra: dict | None = None) -> None:
    """Write a self-describing JSON checkpoint (dims, activations, params)."""
    doc = {"format": "aptensemble-densenet/1", "net": net.to_dict()}
    if seed is not None:
        doc["seed"] = seed
    if config is not None:
        doc["config"] = config
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[DenseNet, dict]:
    doc = json.loads(Path(path).read_text())
    return DenseNet.from_dict(doc["net"]), doc
