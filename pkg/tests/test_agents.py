import copy
import math

import numpy as np
import pytest

from aptensemble import agents as ag
from aptensemble.environment import DefenderState, RewardParams
from aptensemble.errors import EmptyBatch, EmptyTrainingSet, InvalidConfig
from aptensemble.neural_core import DenseNet, TrainConfig
from tests.conftest import finite_difference_grads, max_relative_error


def separable_states(n=120, k=4, seed=0):
    """Two well-separated clusters in latent space with matching eps bands."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % 2
        center = 0.9 if label else 0.1
        z = rng.normal(center, 0.05, size=k)
        eps = rng.uniform(0.6, 0.9) if label else rng.uniform(0.0, 0.1)
        out.append((DefenderState(z=z, eps=float(eps)), label))
    return out


def accuracy(agent, states_with_labels):
    hits = sum(
        1 for s, y in states_with_labels if ag.predict(agent, s).action == y
    )
    return hits / len(states_with_labels)


def _calibrated_table(seed=0, alpha=0.1):
    tbl = ag.make_q_table(state_dim=4, seed=seed, alpha=alpha)
    rng = np.random.default_rng(seed)
    tbl.calibrate(rng.uniform(size=(50, 4)))
    return tbl


def _state(rng, k=3):
    return DefenderState(z=rng.normal(size=k), eps=float(rng.uniform(0, 1)))


# -- tabular Q -------------------------------------------------------------------

def test_q_update_substitution():
    tbl = _calibrated_table(alpha=0.5)
    s = DefenderState(z=np.array([0.5, 0.5, 0.5]), eps=0.5)
    ag.q_update(tbl, s, 1, 1.0)
    assert tbl.q_values(s)[1] == pytest.approx(0.5)
    assert tbl.q_values(s)[0] == 0.0


def test_q_update_alpha_zero_noop():
    tbl = _calibrated_table(alpha=0.0)
    s = DefenderState(z=np.array([0.1, 0.9, 0.4]), eps=0.2)
    ag.q_update(tbl, s, 0, -2.0)
    assert tbl.q_values(s)[0] == 0.0


def test_q_update_fixed_point():
    tbl = _calibrated_table(alpha=0.1)
    s = DefenderState(z=np.array([0.3, 0.3, 0.3]), eps=0.1)
    for _ in range(200):
        ag.q_update(tbl, s, 1, 0.7)
    assert abs(tbl.q_values(s)[1] - 0.7) < 1e-6


def test_q_update_touches_one_cell():
    tbl = _calibrated_table()
    rng = np.random.default_rng(2)
    # seed several cells first
    for _ in range(10):
        ag.q_update(tbl, _state(rng), 1, 0.5)
    before = {k: v.copy() for k, v in tbl.table.items()}
    s = _state(rng)
    ag.q_update(tbl, s, 0, -1.0)
    changed = [
        k for k in tbl.table
        if k not in before or not np.array_equal(tbl.table[k], before[k])
    ]
    assert len(changed) == 1
    assert changed[0] == tbl.cell(s)


def test_q_table_requires_calibration():
    tbl = ag.make_q_table(state_dim=4, seed=0)
    with pytest.raises(InvalidConfig):
        tbl.q_values(DefenderState(z=np.zeros(3), eps=0.0))


# -- DQN ---------------------------------------------------------------------------

def test_dqn_zero_td_error_keeps_params():
    agent = ag.make_dqn(state_dim=4, seed=3)
    rng = np.random.default_rng(3)
    svec = rng.uniform(size=4)
    q, _ = agent.online.forward(svec)
    before = agent.online.to_dict()
    ag.dqn_train_step(agent, [(svec, 1, float(q[1]))], lr=0.1)
    assert agent.online.to_dict()["layers"] == before["layers"]


def test_dqn_grads_match_finite_differences():
    agent = ag.make_dqn(state_dim=5, seed=4, hidden=6)
    rng = np.random.default_rng(4)
    svecs = rng.uniform(-1, 1, size=(8, 5))
    actions = rng.integers(0, 2, size=8)
    targets = rng.uniform(-2, 2, size=8)
    analytic = ag.dqn_td_grads(agent.online, svecs, actions, targets)
    numeric = finite_difference_grads(
        lambda: ag.dqn_td_loss(agent.online, svecs, actions, targets), agent.online
    )
    assert max_relative_error(analytic.per_layer, numeric) < 1e-4


def test_dqn_target_sync():
    agent = ag.make_dqn(state_dim=3, seed=5, sync_period=3)
    rng = np.random.default_rng(5)
    batch = [(rng.uniform(size=3), int(rng.integers(2)), float(rng.normal())) for _ in range(4)]
    ag.dqn_train_step(agent, batch, 0.05)
    ag.dqn_train_step(agent, batch, 0.05)
    assert agent.online.to_dict()["layers"] != agent.target.to_dict()["layers"]
    ag.dqn_train_step(agent, batch, 0.05)
    assert agent.online.to_dict()["layers"] == agent.target.to_dict()["layers"]


def test_dqn_empty_batch():
    agent = ag.make_dqn(state_dim=3, seed=6)
    with pytest.raises(EmptyBatch):
        ag.dqn_train_step(agent, [], 0.1)


def test_replay_ring_buffer_eviction():
    buf = ag.ReplayBuffer(capacity=4)
    for i in range(10):
        buf.push(i)
    assert len(buf) == 4
    assert sorted(buf._items) == [6, 7, 8, 9]
    with pytest.raises(InvalidConfig):
        ag.ReplayBuffer(0)


# -- PPO ----------------------------------------------------------------------------

def test_ppo_first_update_ratio_is_one():
    agent = ag.make_ppo(state_dim=4, seed=7)
    rng = np.random.default_rng(7)
    svecs = rng.uniform(size=(6, 4))
    actions = rng.integers(0, 2, size=6)
    advantages = rng.normal(size=6)
    logits, _ = agent.snapshot.forward(svecs)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    old_probs = (e / e.sum(axis=1, keepdims=True))[np.arange(6), actions]
    # policy == snapshot, so every ratio is 1 and the surrogate is -mean(adv)
    loss = ag.ppo_surrogate_loss(agent.policy, svecs, actions, advantages, old_probs, 0.2)
    assert loss == pytest.approx(-advantages.mean())


def _single_logit_policy(b0, b1):
    net = DenseNet.init([2, 2], ["identity"], np.random.default_rng(0))
    net.layers[0].w[:] = 0.0
    net.layers[0].b[:] = (b0, b1)
    return net


def test_ppo_clip_saturation_zero_gradient():
    # current policy prob of action 1 is 0.5; old prob 0.1 -> ratio 5 > 1.2
    policy = _single_logit_policy(0.0, 0.0)
    svecs = np.array([[0.3, 0.7]])
    actions = np.array([1])
    grads = ag.ppo_policy_grads(policy, svecs, actions, np.array([1.0]), np.array([0.1]), 0.2)
    for d_w, d_b in grads.per_layer:
        assert np.all(d_w == 0.0)
        assert np.all(d_b == 0.0)
    # same ratio but negative advantage: min picks the unclipped branch,
    # so the gradient must NOT vanish
    grads = ag.ppo_policy_grads(policy, svecs, actions, np.array([-1.0]), np.array([0.1]), 0.2)
    assert any(np.any(d_b != 0.0) for _, d_b in grads.per_layer)


def test_ppo_policy_grads_match_finite_differences():
    agent = ag.make_ppo(state_dim=4, seed=8, hidden=5)
    rng = np.random.default_rng(8)
    svecs = rng.uniform(-1, 1, size=(10, 4))
    actions = rng.integers(0, 2, size=10)
    advantages = rng.normal(size=10)
    old_probs = rng.uniform(0.2, 0.8, size=10)
    analytic = ag.ppo_policy_grads(agent.policy, svecs, actions, advantages, old_probs, 0.2)
    numeric = finite_difference_grads(
        lambda: ag.ppo_surrogate_loss(agent.policy, svecs, actions, advantages, old_probs, 0.2),
        agent.policy,
    )
    assert max_relative_error(analytic.per_layer, numeric) < 1e-4


def test_ppo_value_grads_match_finite_differences():
    agent = ag.make_ppo(state_dim=4, seed=9, hidden=5)
    rng = np.random.default_rng(9)
    svecs = rng.uniform(-1, 1, size=(7, 4))
    targets = rng.normal(size=7)
    analytic = ag.value_mse_grads(agent.value, svecs, targets)
    numeric = finite_difference_grads(
        lambda: ag.value_mse_loss(agent.value, svecs, targets), agent.value
    )
    assert max_relative_error(analytic.per_layer, numeric) < 1e-4


def test_ppo_snapshot_refreshes_after_update():
    agent = ag.make_ppo(state_dim=3, seed=10)
    rng = np.random.default_rng(10)
    batch = [(rng.uniform(size=3), int(rng.integers(2)), float(rng.normal())) for _ in range(5)]
    ag.ppo_update(agent, batch, 0.05)
    assert agent.snapshot.to_dict()["layers"] == agent.policy.to_dict()["layers"]
    with pytest.raises(EmptyBatch):
        ag.ppo_update(agent, [], 0.05)


# -- adversarial -------------------------------------------------------------------------

def _p_correct(agent, s, label):
    q = agent.base.q_values(s)
    return ag.softmax2(q)[label]


def test_adversarial_zero_bound_identity():
    agent = ag.make_adversarial(state_dim=4, seed=11, delta_bound=0.0, k_samples=8)
    rng = np.random.default_rng(11)
    s = _state(rng)
    out = ag.adversarial_perturb(agent, s, 1, rng)
    assert np.array_equal(out.z, s.z)
    assert out.eps == s.eps


def test_adversarial_never_helps_the_defender():
    agent = ag.make_adversarial(state_dim=4, seed=12, delta_bound=0.3, k_samples=8)
    rng = np.random.default_rng(12)
    for _ in range(15):
        s = _state(rng)
        label = int(rng.integers(2))
        out = ag.adversarial_perturb(agent, s, label, rng)
        assert _p_correct(agent, out, label) <= _p_correct(agent, s, label) + 1e-12
        assert np.max(np.abs(out.as_vector() - s.as_vector())) <= 0.3 + 1e-12


def test_adversarial_nested_candidate_sets():
    # same rng stream: the k=4 candidates are a prefix of the k=64 ones
    small = ag.make_adversarial(state_dim=4, seed=13, delta_bound=0.3, k_samples=4)
    big = ag.make_adversarial(state_dim=4, seed=13, delta_bound=0.3, k_samples=64)
    rng = np.random.default_rng(13)
    s = _state(rng)
    out_small = ag.adversarial_perturb(small, s, 1, np.random.default_rng(99))
    out_big = ag.adversarial_perturb(big, s, 1, np.random.default_rng(99))
    assert _p_correct(big, out_big, 1) <= _p_correct(small, out_small, 1) + 1e-12


def test_adversarial_invalid_config():
    with pytest.raises(InvalidConfig):
        ag.make_adversarial(state_dim=3, seed=0, delta_bound=-0.1)
    with pytest.raises(InvalidConfig):
        ag.make_adversarial(state_dim=3, seed=0, k_samples=0)


# -- predict ---------------------------------------------------------------------------

def test_predict_tie_goes_hostile():
    tbl = _calibrated_table()
    s = DefenderState(z=np.array([0.5, 0.5, 0.5]), eps=0.5)
    pred = ag.predict(tbl, s)  # untouched cell: Q = (0, 0)
    assert pred.p_apt == 0.5
    assert pred.action == 1
    assert pred.margin == 0.0


def test_predict_ppo_probability_mapping():
    policy = _single_logit_policy(math.log(0.9), math.log(0.1))
    agent = ag.PpoAgent(policy=policy, value=policy.copy(), snapshot=policy.copy())
    pred = ag.predict(agent, DefenderState(z=np.array([0.0]), eps=0.0))
    assert pred.p_apt == pytest.approx(0.1)
    assert pred.action == 0
    assert pred.margin == pytest.approx(0.8)


def test_predict_matches_independent_softmax():
    agent = ag.make_dqn(state_dim=4, seed=14)
    rng = np.random.default_rng(14)
    s = _state(rng)
    q = agent.q_values(s)
    expected = math.exp(q[1]) / (math.exp(q[0]) + math.exp(q[1]))
    pred = ag.predict(agent, s)
    assert pred.p_apt == pytest.approx(expected)
    assert pred.margin == pytest.approx(abs(q[1] - q[0]))


def test_predict_bounds_and_purity_all_kinds():
    rng = np.random.default_rng(15)
    tbl = _calibrated_table(seed=15)
    kinds = [
        tbl,
        ag.make_dqn(state_dim=4, seed=15),
        ag.make_ppo(state_dim=4, seed=15),
        ag.make_adversarial(state_dim=4, seed=15),
    ]
    for agent in kinds:
        for _ in range(10):
            s = _state(rng)
            a = ag.predict(agent, s)
            b = ag.predict(agent, s)
            assert 0.0 <= a.p_apt <= 1.0
            assert a.margin >= 0.0
            assert (a.p_apt, a.action, a.margin) == (b.p_apt, b.action, b.margin)
            assert a.action == (1 if a.p_apt >= 0.5 else 0)


# -- train_agent ----------------------------------------------------------------------

def test_train_dqn_reaches_high_accuracy():
    data = separable_states(seed=20)
    agent = ag.make_dqn(state_dim=5, seed=20)
    agent, metrics = ag.train_agent(agent, data, RewardParams(), TrainConfig(epochs=15, seed=20))
    assert accuracy(agent, data) >= 0.95
    assert len(metrics.mean_reward_per_epoch) == 15


def test_train_reward_curve_improves():
    data = separable_states(seed=21)
    agent = ag.make_dqn(state_dim=5, seed=21)
    _, metrics = ag.train_agent(agent, data, RewardParams(), TrainConfig(epochs=20, seed=21))
    r = np.array(metrics.mean_reward_per_epoch)
    windows = r.reshape(4, 5).mean(axis=1)
    assert all(b >= a - 0.05 for a, b in zip(windows, windows[1:]))
    assert windows[-1] > windows[0]


def test_train_q_table_learns():
    data = separable_states(seed=22)
    agent = ag.make_q_table(state_dim=5, seed=22)
    agent, _ = ag.train_agent(agent, data, RewardParams(), TrainConfig(epochs=15, seed=22))
    assert accuracy(agent, data) >= 0.9


def test_train_ppo_learns():
    data = separable_states(seed=23)
    agent = ag.make_ppo(state_dim=5, seed=23)
    agent, _ = ag.train_agent(agent, data, RewardParams(), TrainConfig(epochs=25, seed=23))
    assert accuracy(agent, data) >= 0.9


def test_train_adversarial_accuracy_budget():
    data = separable_states(seed=24)
    plain = ag.make_dqn(state_dim=5, seed=24)
    plain, _ = ag.train_agent(plain, data, RewardParams(), TrainConfig(epochs=15, seed=24))
    adv = ag.make_adversarial(state_dim=5, seed=24)
    adv, _ = ag.train_agent(adv, data, RewardParams(), TrainConfig(epochs=15, seed=24))
    assert accuracy(adv, data) >= accuracy(plain, data) - 0.10


def test_train_deterministic():
    data = separable_states(seed=25)
    cfg = TrainConfig(epochs=8, seed=25)
    a1, m1 = ag.train_agent(ag.make_dqn(state_dim=5, seed=25), data, RewardParams(), cfg)
    a2, m2 = ag.train_agent(ag.make_dqn(state_dim=5, seed=25), data, RewardParams(), cfg)
    assert m1.mean_reward_per_epoch == m2.mean_reward_per_epoch
    for s, _ in data[:10]:
        assert ag.predict(a1, s).p_apt == ag.predict(a2, s).p_apt


def test_train_empty_set():
    with pytest.raises(EmptyTrainingSet):
        ag.train_agent(ag.make_dqn(state_dim=3, seed=0), [], RewardParams(), TrainConfig())


def test_train_reward_bonus_shifts_rewards():
    data = separable_states(n=40, seed=26)
    cfg = TrainConfig(epochs=2, seed=26)
    _, base = ag.train_agent(ag.make_q_table(state_dim=5, seed=26), data, RewardParams(), cfg)
    _, boosted = ag.train_agent(
        ag.make_q_table(state_dim=5, seed=26), data, RewardParams(), cfg, reward_bonus=0.25
    )
    for b, s in zip(base.mean_reward_per_epoch, boosted.mean_reward_per_epoch):
        assert s == pytest.approx(b + 0.25)


# -- serialization ----------------------------------------------------------------------

def test_agent_roundtrips_preserve_predictions():
    rng = np.random.default_rng(30)
    data = separable_states(n=30, seed=30)
    cfg = TrainConfig(epochs=3, seed=30)
    agents = [
        ag.make_q_table(state_dim=5, seed=30),
        ag.make_dqn(state_dim=5, seed=30),
        ag.make_ppo(state_dim=5, seed=30),
        ag.make_adversarial(state_dim=5, seed=30),
    ]
    for agent in agents:
        trained, _ = ag.train_agent(agent, data, RewardParams(), cfg)
        clone = ag.load_agent(copy.deepcopy(trained.to_dict()))
        for _ in range(5):
            s = _state(rng, k=4)
            assert ag.predict(clone, s).p_apt == pytest.approx(ag.predict(trained, s).p_apt)
