"""Defender agents: tabular Q, DQN, PPO, and an adversarially trained DQN.

All four share one observation format (the [z, eps] state vector), one
prediction contract (AgentPrediction), and one training entry point
(train_agent). Episodes are one step long, so every TD target is just the
observed reward; gamma multiplies a zero continuation value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import DefenderState, RewardParams, reward
from .errors import EmptyBatch, EmptyTrainingSet, InvalidConfig
from .neural_core import DenseNet, TrainConfig

# exploration schedule for the value-based agents, decayed linearly per step
EPS_START = 0.2
EPS_END = 0.01


@dataclass(frozen=True)
class AgentPrediction:
    p_apt: float
    action: int
    margin: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_apt <= 1.0:
            raise InvalidConfig(f"p_apt out of [0,1]: {self.p_apt}")
        if self.margin < 0:
            raise InvalidConfig(f"margin must be non-negative: {self.margin}")


def softmax2(q: np.ndarray) -> np.ndarray:
    """Stable softmax over a length-2 value vector."""
    m = float(np.max(q))
    e = np.exp(np.asarray(q, dtype=float) - m)
    return e / e.sum()


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


# -- tabular Q ------------------------------------------------------------------

@dataclass
class QTable:
    """Q-learning over a discretized 2-D projection of the state vector.

    The projection is a fixed seeded Gaussian matrix; bin edges come from
    the observed training range (calibrate), so the table stays small no
    matter how wide the latent space is.
    """

    projection: np.ndarray
    bins_per_dim: int = 16
    alpha: float = 0.1
    epsilon_greedy: tuple[float, float] = (EPS_START, EPS_END)
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    table: dict = field(default_factory=dict)

    def calibrate(self, state_vectors: np.ndarray) -> None:
        proj = state_vectors @ self.projection.T
        self.lo = proj.min(axis=0)
        self.hi = proj.max(axis=0)

    def cell(self, s: DefenderState) -> tuple[int, int]:
        if self.lo is None or self.hi is None:
            raise InvalidConfig("QTable must be calibrated before use")
        proj = self.projection @ s.as_vector()
        width = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        idx = np.floor((proj - self.lo) / width * self.bins_per_dim).astype(int)
        idx = np.clip(idx, 0, self.bins_per_dim - 1)
        return int(idx[0]), int(idx[1])

    def q_values(self, s: DefenderState) -> np.ndarray:
        return np.array(self.table.get(self.cell(s), (0.0, 0.0)), dtype=float)

    def to_dict(self) -> dict:
        return {
            "kind": "q_table",
            "projection": self.projection.tolist(),
            "bins_per_dim": self.bins_per_dim,
            "alpha": self.alpha,
            "epsilon_greedy": list(self.epsilon_greedy),
            "lo": None if self.lo is None else self.lo.tolist(),
            "hi": None if self.hi is None else self.hi.tolist(),
            "cells": [[list(k), list(v)] for k, v in sorted(self.table.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        tbl = cls(
            projection=np.asarray(d["projection"], dtype=float),
            bins_per_dim=d["bins_per_dim"],
            alpha=d["alpha"],
            epsilon_greedy=tuple(d["epsilon_greedy"]),
            lo=None if d["lo"] is None else np.asarray(d["lo"], dtype=float),
            hi=None if d["hi"] is None else np.asarray(d["hi"], dtype=float),
        )
        tbl.table = {tuple(k): np.asarray(v, dtype=float) for k, v in d["cells"]}
        return tbl


def make_q_table(state_dim: int, seed: int, bins_per_dim: int = 16, alpha: float = 0.1) -> QTable:
    rng = np.random.default_rng(seed)
    return QTable(projection=rng.normal(size=(2, state_dim)), bins_per_dim=bins_per_dim, alpha=alpha)


def q_update(tbl: QTable, s: DefenderState, a: int, r: float) -> QTable:
    """One tabular update toward the terminal target r: Q += alpha (r - Q)."""
    key = tbl.cell(s)
    q = tbl.table.setdefault(key, np.zeros(2))
    q[a] += tbl.alpha * (r - q[a])
    return tbl


# -- DQN ---------------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring buffer of (state_vector, action, reward) transitions."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise InvalidConfig(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: list = []
        self._ptr = 0

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._ptr] = item
        self._ptr = (self._ptr + 1) % self.capacity

    def sample(self, rng: np.random.Generator, size: int) -> list:
        idx = rng.integers(0, len(self._items), size=size)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


@dataclass
class DqnAgent:
    online: DenseNet
    target: DenseNet
    replay: ReplayBuffer
    sync_period: int = 32
    step_count: int = 0

    def q_values(self, s: DefenderState) -> np.ndarray:
        q, _ = self.online.forward(s.as_vector())
        return q

    def to_dict(self) -> dict:
        return {
            "kind": "dqn",
            "online": self.online.to_dict(),
            "target": self.target.to_dict(),
            "sync_period": self.sync_period,
            "step_count": self.step_count,
            "replay_capacity": self.replay.capacity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DqnAgent":
        return cls(
            online=DenseNet.from_dict(d["online"]),
            target=DenseNet.from_dict(d["target"]),
            replay=ReplayBuffer(d["replay_capacity"]),
            sync_period=d["sync_period"],
            step_count=d["step_count"],
        )


def make_dqn(
    state_dim: int,
    seed: int,
    hidden: int = 16,
    capacity: int = 512,
    sync_period: int = 32,
) -> DqnAgent:
    rng = np.random.default_rng(seed)
    online = DenseNet.init([state_dim, hidden, 2], ["relu", "identity"], rng)
    return DqnAgent(online=online, target=online.copy(), replay=ReplayBuffer(capacity), sync_period=sync_period)


def dqn_td_loss(net: DenseNet, svecs: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared one-step TD error; the pure-loss twin of dqn_train_step."""
    q, _ = net.forward(svecs)
    chosen = q[np.arange(len(actions)), actions]
    return float(np.mean((chosen - targets) ** 2))


def dqn_td_grads(net: DenseNet, svecs: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Analytic gradient of dqn_td_loss with respect to the net parameters."""
    q, cache = net.forward(svecs)
    upstream = np.zeros_like(q)
    rows = np.arange(len(actions))
    upstream[rows, actions] = 2.0 * (q[rows, actions] - targets) / len(actions)
    return net.backward(cache, upstream)


def dqn_train_step(agent: DqnAgent, batch: list, lr: float) -> DqnAgent:
    """One SGD step on the batch TD loss, plus periodic target sync.

    Transitions are terminal, so the target is the raw reward; the
    gamma max_a' Q(s', a'; target) continuation term is identically zero.
    """
    if not batch:
        raise EmptyBatch("dqn_train_step needs at least one transition")
    svecs = np.stack([b[0] for b in batch])
    actions = np.array([b[1] for b in batch], dtype=int)
    targets = np.array([b[2] for b in batch], dtype=float)
    agent.online.sgd_step(dqn_td_grads(agent.online, svecs, actions, targets), lr)
    agent.step_count += 1
    if agent.step_count % agent.sync_period == 0:
        agent.target.copy_params_from(agent.online)
    return agent


# -- PPO ----------------------------------------------------------------------------

@dataclass
class PpoAgent:
    policy: DenseNet
    value: DenseNet
    snapshot: DenseNet
    clip_eps: float = 0.2

    def policy_probs(self, svec: np.ndarray) -> np.ndarray:
        logits, _ = self.policy.forward(svec)
        return softmax2(logits)

    def to_dict(self) -> dict:
        return {
            "kind": "ppo",
            "policy": self.policy.to_dict(),
            "value": self.value.to_dict(),
            "snapshot": self.snapshot.to_dict(),
            "clip_eps": self.clip_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PpoAgent":
        return cls(
            policy=DenseNet.from_dict(d["policy"]),
            value=DenseNet.from_dict(d["value"]),
            snapshot=DenseNet.from_dict(d["snapshot"]),
            clip_eps=d["clip_eps"],
        )


def make_ppo(state_dim: int, seed: int, hidden: int = 16, clip_eps: float = 0.2) -> PpoAgent:
    rng = np.random.default_rng(seed)
    policy = DenseNet.init([state_dim, hidden, 2], ["relu", "identity"], rng)
    value = DenseNet.init([state_dim, hidden, 1], ["relu", "identity"], rng)
    return PpoAgent(policy=policy, value=value, snapshot=policy.copy(), clip_eps=clip_eps)


def ppo_surrogate_loss(
    policy: DenseNet,
    svecs: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    old_probs: np.ndarray,
    clip_eps: float,
) -> float:
    """Negative mean clipped surrogate; the pure-loss twin of the policy step."""
    logits, _ = policy.forward(svecs)
    p = _softmax_rows(logits)
    ratio = p[np.arange(len(actions)), actions] / old_probs
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    return float(-np.mean(np.minimum(unclipped, clipped)))


def ppo_policy_grads(
    policy: DenseNet,
    svecs: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    old_probs: np.ndarray,
    clip_eps: float,
):
    """Analytic gradient of ppo_surrogate_loss with respect to policy params."""
    n = len(actions)
    rows = np.arange(n)
    logits, cache = policy.forward(svecs)
    p = _softmax_rows(logits)
    pa = p[rows, actions]
    ratio = pa / old_probs
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    # the min picks the clipped branch only when clipping would help the
    # objective; in that regime the sample's policy gradient is exactly zero
    active = unclipped <= clipped
    coeff = np.where(active, advantages / old_probs * pa, 0.0)
    one_hot = np.zeros_like(p)
    one_hot[rows, actions] = 1.0
    upstream = -(coeff[:, None] * (one_hot - p)) / n
    return policy.backward(cache, upstream)


def value_mse_grads(net: DenseNet, svecs: np.ndarray, targets: np.ndarray):
    """Analytic gradient of mean (V(s) - target)^2 for the value head."""
    v, cache = net.forward(svecs)
    upstream = (2.0 * (v[:, 0] - targets) / len(targets))[:, None]
    return net.backward(cache, upstream)


def value_mse_loss(net: DenseNet, svecs: np.ndarray, targets: np.ndarray) -> float:
    v, _ = net.forward(svecs)
    return float(np.mean((v[:, 0] - targets) ** 2))


def ppo_update(agent: PpoAgent, batch: list, lr: float) -> PpoAgent:
    """One clipped-surrogate ascent step plus a value-regression step.

    batch items are (state_vector, action, reward) collected under the
    snapshot policy. Advantage is reward minus the value baseline, exact
    for one-step episodes. The snapshot refreshes after the update so the
    next batch starts at ratio 1.
    """
    if not batch:
        raise EmptyBatch("ppo_update needs at least one transition")
    svecs = np.stack([b[0] for b in batch])
    actions = np.array([b[1] for b in batch], dtype=int)
    rewards = np.array([b[2] for b in batch], dtype=float)
    rows = np.arange(len(batch))

    old_logits, _ = agent.snapshot.forward(svecs)
    old_probs = _softmax_rows(old_logits)[rows, actions]

    v, _ = agent.value.forward(svecs)
    advantages = rewards - v[:, 0]

    grads = ppo_policy_grads(agent.policy, svecs, actions, advantages, old_probs, agent.clip_eps)
    agent.policy.sgd_step(grads, lr)
    agent.value.sgd_step(value_mse_grads(agent.value, svecs, rewards), lr)

    agent.snapshot.copy_params_from(agent.policy)
    return agent


# -- adversarial -------------------------------------------------------------------

@dataclass
class AdversarialAgent:
    base: DqnAgent
    delta_bound: float = 0.1
    k_samples: int = 16

    def __post_init__(self) -> None:
        if self.delta_bound < 0:
            raise InvalidConfig(f"delta_bound must be non-negative, got {self.delta_bound}")
        if self.k_samples < 1:
            raise InvalidConfig(f"k_samples must be at least 1, got {self.k_samples}")

    def to_dict(self) -> dict:
        return {
            "kind": "adversarial",
            "base": self.base.to_dict(),
            "delta_bound": self.delta_bound,
            "k_samples": self.k_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdversarialAgent":
        return cls(base=DqnAgent.from_dict(d["base"]), delta_bound=d["delta_bound"], k_samples=d["k_samples"])


def make_adversarial(
    state_dim: int,
    seed: int,
    hidden: int = 16,
    capacity: int = 512,
    sync_period: int = 32,
    delta_bound: float = 0.1,
    k_samples: int = 16,
) -> AdversarialAgent:
    return AdversarialAgent(
        base=make_dqn(state_dim, seed, hidden, capacity, sync_period),
        delta_bound=delta_bound,
        k_samples=k_samples,
    )


def _attack_loss(net: DenseNet, svec: np.ndarray, label: int) -> float:
    # cross-entropy of the softmax-ed Q pair against the true label; the
    # same probabilities predict() exposes, so a worse loss means a worse call
    q, _ = net.forward(svec)
    p = softmax2(q)
    return float(-np.log(max(p[label], 1e-12)))


def adversarial_perturb(
    agent: AdversarialAgent, s: DefenderState, label: int, rng: np.random.Generator
) -> DefenderState:
    """Worst of k uniform max-norm perturbations; the zero draw always competes.

    Candidates come sequentially from the caller's rng, so a larger k on
    the same stream strictly extends the smaller candidate set.
    """
    vec = s.as_vector()
    best_vec, best_loss = vec, _attack_loss(agent.base.online, vec, label)
    for _ in range(agent.k_samples - 1):
        delta = rng.uniform(-agent.delta_bound, agent.delta_bound, size=vec.shape)
        cand = vec + delta
        # eps is physically non-negative; clamping only shrinks the perturbation
        cand[-1] = max(cand[-1], 0.0)
        loss = _attack_loss(agent.base.online, cand, label)
        if loss > best_loss:
            best_vec, best_loss = cand, loss
    return DefenderState(z=best_vec[:-1], eps=float(best_vec[-1]))


# -- uniform prediction ----------------------------------------------------------------

def agent_kind(agent) -> str:
    if isinstance(agent, QTable):
        return "q"
    if isinstance(agent, AdversarialAgent):
        return "adversarial"
    if isinstance(agent, DqnAgent):
        return "dqn"
    if isinstance(agent, PpoAgent):
        return "ppo"
    raise InvalidConfig(f"unknown agent type {type(agent).__name__}")


def predict(agent, s: DefenderState) -> AgentPrediction:
    """Map any agent's raw outputs onto (p_apt, action, margin).

    Value agents score by the softmax of their two Q-values and report the
    raw Q-gap as margin; the policy agent reports its own probability and
    a [0,1]-rescaled distance from the decision boundary. Ties always
    resolve to the hostile call.
    """
    if isinstance(agent, PpoAgent):
        probs = agent.policy_probs(s.as_vector())
        p_apt = float(probs[1])
        margin = abs(p_apt - 0.5) * 2.0
    else:
        if isinstance(agent, AdversarialAgent):
            q = agent.base.q_values(s)
        elif isinstance(agent, DqnAgent):
            q = agent.q_values(s)
        elif isinstance(agent, QTable):
            q = agent.q_values(s)
        else:
            raise InvalidConfig(f"unknown agent type {type(agent).__name__}")
        p_apt = float(softmax2(q)[1])
        margin = float(abs(q[1] - q[0]))
    action = 1 if p_apt >= 0.5 else 0
    return AgentPrediction(p_apt=p_apt, action=action, margin=margin)


# -- training loop ------------------------------------------------------------------------

@dataclass
class TrainMetrics:
    mean_reward_per_epoch: list[float]
    n_steps: int

    def to_dict(self) -> dict:
        return {"mean_reward_per_epoch": self.mean_reward_per_epoch, "n_steps": self.n_steps}


def _epsilon_at(step: int, total: int, schedule: tuple[float, float]) -> float:
    start, end = schedule
    if total <= 1:
        return end
    frac = min(step / (total - 1), 1.0)
    return start + (end - start) * frac


def _greedy(q: np.ndarray) -> int:
    return 1 if q[1] >= q[0] else 0


def train_agent(
    agent,
    states_with_labels: list[tuple[DefenderState, int]],
    params: RewardParams,
    cfg: TrainConfig,
    reward_bonus: float = 0.0,
) -> tuple[object, TrainMetrics]:
    """Run cfg.epochs of predict-reward-update over the labeled states.

    reward_bonus is added to every reward (the retraining shaping term);
    zero for plain training. The adversarial agent also experiences a
    perturbed copy of each state, rewarded against the true label and the
    true reconstruction error.
    """
    if not states_with_labels:
        raise EmptyTrainingSet("no states to train on")
    rng = np.random.default_rng(cfg.seed)
    n = len(states_with_labels)
    kind = agent_kind(agent)

    if kind == "q" and agent.lo is None:
        agent.calibrate(np.stack([s.as_vector() for s, _ in states_with_labels]))

    schedule = agent.epsilon_greedy if kind == "q" else (EPS_START, EPS_END)
    total_steps = cfg.epochs * n
    step = 0
    epoch_means: list[float] = []

    for _ in range(cfg.epochs):
        rewards_seen: list[float] = []
        pending: list = []  # PPO collection buffer
        for i in rng.permutation(n):
            s, label = states_with_labels[i]
            if kind == "ppo":
                probs = _softmax_rows(agent.snapshot.forward(s.as_vector()[None, :])[0])[0]
                a = int(rng.random() < probs[1])
                r = reward(a, label, s.eps, params.beta) + reward_bonus
                pending.append((s.as_vector(), a, r))
                if len(pending) >= cfg.batch_size:
                    ppo_update(agent, pending, cfg.learning_rate)
                    pending = []
                rewards_seen.append(r)
            elif kind == "q":
                eps_greedy = _epsilon_at(step, total_steps, schedule)
                a = int(rng.integers(2)) if rng.random() < eps_greedy else _greedy(agent.q_values(s))
                r = reward(a, label, s.eps, params.beta) + reward_bonus
                q_update(agent, s, a, r)
                rewards_seen.append(r)
            else:
                base = agent.base if kind == "adversarial" else agent
                eps_greedy = _epsilon_at(step, total_steps, schedule)
                a = int(rng.integers(2)) if rng.random() < eps_greedy else _greedy(base.q_values(s))
                r = reward(a, label, s.eps, params.beta) + reward_bonus
                base.replay.push((s.as_vector(), a, r))
                if len(base.replay) >= cfg.batch_size:
                    dqn_train_step(base, base.replay.sample(rng, cfg.batch_size), cfg.learning_rate)
                rewards_seen.append(r)
                if kind == "adversarial":
                    s_adv = adversarial_perturb(agent, s, label, rng)
                    a2 = int(rng.integers(2)) if rng.random() < eps_greedy else _greedy(base.q_values(s_adv))
                    r2 = reward(a2, label, s.eps, params.beta) + reward_bonus
                    base.replay.push((s_adv.as_vector(), a2, r2))
                    if len(base.replay) >= cfg.batch_size:
                        dqn_train_step(base, base.replay.sample(rng, cfg.batch_size), cfg.learning_rate)
                    rewards_seen.append(r2)
            step += 1
        if kind == "ppo" and pending:
            ppo_update(agent, pending, cfg.learning_rate)
        epoch_means.append(float(np.mean(rewards_seen)))

    return agent, TrainMetrics(mean_reward_per_epoch=epoch_means, n_steps=step)


def load_agent(d: dict):
    """Rebuild any serialized agent from its kind-tagged dict."""
    kind = d.get("kind")
    if kind == "q_table":
        return QTable.from_dict(d)
    if kind == "dqn":
        return DqnAgent.from_dict(d)
    if kind == "ppo":
        return PpoAgent.from_dict(d)
    if kind == "adversarial":
        return AdversarialAgent.from_dict(d)
    raise InvalidConfig(f"unknown agent kind {kind!r}")
