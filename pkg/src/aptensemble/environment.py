"""Stateless detection environment: states, rewards, and reward shaping.

A defender observes one process record at a time. Its state is the latent
code of that record plus the reconstruction error, and the episode ends
immediately after the classify action, so rewards are one-step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import AutoencoderModel, encode, recon_error
from .dataset import APT
from .errors import InvalidConfig


@dataclass(frozen=True)
class DefenderState:
    """Observation handed to an agent: latent vector plus anomaly score."""

    z: np.ndarray
    eps: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.eps) or self.eps < 0:
            raise InvalidConfig(f"eps must be finite and non-negative, got {self.eps}")

    def as_vector(self) -> np.ndarray:
        """Flat [z, eps] feature vector, the network input representation."""
        return np.append(self.z, self.eps)


@dataclass(frozen=True)
class RewardParams:
    beta: float = 0.5
    lam: float = 1.0
    gamma: float = 0.9

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise InvalidConfig(f"beta must be non-negative, got {self.beta}")
        if self.lam < 0:
            raise InvalidConfig(f"lambda must be non-negative, got {self.lam}")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidConfig(f"gamma must be in [0,1), got {self.gamma}")

    def to_dict(self) -> dict:
        return {"beta": self.beta, "lambda": self.lam, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardParams":
        return cls(
            beta=d.get("beta", 0.5),
            lam=d.get("lambda", 1.0),
            gamma=d.get("gamma", 0.9),
        )


def make_state(model: AutoencoderModel, x: np.ndarray) -> DefenderState:
    return DefenderState(z=encode(model, x), eps=recon_error(model, x))


def reward(action: int, label: int, eps: float, beta: float) -> float:
    """Unified detection reward.

    Correct calls earn +1, false alarms cost 1, and a missed intrusion
    costs 2; every case carries the beta-scaled anomaly bonus so that
    high-error records dominate the learning signal.
    """
    if action == (1 if label == APT else 0):
        base = 1.0
    elif action == 1:
        base = -1.0  # benign flagged
    else:
        base = -2.0  # intrusion missed
    return base + beta * eps


def shaped_reward(base: float, ae_loss: float, lam: float) -> float:
    return base + lam * ae_loss
