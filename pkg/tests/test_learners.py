import numpy as np
import pytest

from glucorl.data import OfflineDataset
from glucorl.discrete_q import (BcqConfig, CqlConfig, stable_logsumexp,
                                train_bcq_discrete, train_cql_discrete)
from glucorl.nn import (adam_init, adam_step, backward, forward,
                        forward_cached, huber_loss, init_network, polyak_update)
from glucorl.policy import DiscreteActionMap
from glucorl.td3bc import Td3BcConfig, train_td3bc

from mdp import (GAMMA, N_STATES, build_dataset, greedy_primitive, state_vec,
                 value_iteration)

TWO_BINS = DiscreteActionMap(2)

TD3BC_FAST = Td3BcConfig(gradient_steps=4000, batch_size=128, hidden=(32, 32),
                         discount=GAMMA, reward_scale=1.0,
                         actor_lr=1e-3, critic_lr=1e-3)
BCQ_FAST = BcqConfig(gradient_steps=4000, batch_size=128, hidden=(32, 32),
                     discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02)
CQL_FAST = CqlConfig(gradient_steps=4000, batch_size=128, hidden=(32, 32),
                     discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02)


@pytest.fixture(scope="module")
def mdp_dataset():
    return build_dataset(10_000, np.random.default_rng(0), TWO_BINS)


def test_value_iteration_oracle_solves_mdp():
    q, pi = value_iteration()
    assert list(pi) == [1, 0]
    assert q[0, 1] == pytest.approx(-1.1)
    assert q[1, 0] == pytest.approx(-1.0)


def test_td3bc_recovers_optimal_policy(mdp_dataset):
    policy, _ = train_td3bc(mdp_dataset, TD3BC_FAST, seed=1)
    _, pi_star = value_iteration()
    assert greedy_primitive(policy, TWO_BINS, (0, 1)) == list(pi_star)


def test_bcq_recovers_optimal_policy(mdp_dataset):
    policy, _ = train_bcq_discrete(mdp_dataset, BCQ_FAST, TWO_BINS, seed=1)
    _, pi_star = value_iteration()
    assert greedy_primitive(policy, TWO_BINS, (0, 1)) == list(pi_star)


def test_cql_recovers_optimal_policy(mdp_dataset):
    policy, _ = train_cql_discrete(mdp_dataset, CQL_FAST, TWO_BINS, seed=1)
    _, pi_star = value_iteration()
    assert greedy_primitive(policy, TWO_BINS, (0, 1)) == list(pi_star)


def test_td3bc_degenerate_dataset_clones_constant_action():
    """Constant actions + constant rewards: the BC term dominates."""
    rng = np.random.default_rng(3)
    n = 4000
    states = np.repeat(np.eye(N_STATES), n // 2, axis=0)
    ds = OfflineDataset(
        states=states,
        actions=np.full((n, 1), 0.31),
        rewards=np.full(n, -0.5),
        next_states=states,
        dones=np.zeros(n, dtype=bool),
        norm_mean=states.mean(axis=0),
        norm_sd=np.maximum(states.std(axis=0), 1e-8),
    )
    policy, _ = train_td3bc(ds, TD3BC_FAST, seed=0)
    for s in range(N_STATES):
        assert policy.act(state_vec(s)) == pytest.approx(0.31, abs=0.05)


def test_td3bc_deterministic_given_seed(mdp_dataset):
    cfg = Td3BcConfig(gradient_steps=300, batch_size=64, hidden=(16, 16),
                      discount=GAMMA, reward_scale=1.0)
    p1, _ = train_td3bc(mdp_dataset, cfg, seed=9)
    p2, _ = train_td3bc(mdp_dataset, cfg, seed=9)
    for a, b in zip(p1.actor.weights, p2.actor.weights):
        assert np.array_equal(a, b)


def test_td3bc_critic_probe_loss_decreases(mdp_dataset):
    _, history = train_td3bc(mdp_dataset, TD3BC_FAST, seed=5)
    losses = [loss for _, loss in history.critic_checkpoints]
    early = np.mean(losses[:3])
    late = np.mean(losses[-3:])
    assert late < early


def test_bcq_lambda_one_is_behavior_cloning():
    """With the full constraint, the policy must pick the most likely action."""
    rng = np.random.default_rng(4)
    # behavior: action 0 dominates in state 0, action 1 in state 1 (3:1 odds),
    # even though value iteration prefers the opposite in state 0
    states, actions, rewards, next_states = [], [], [], []
    from mdp import NEXT_STATE, REWARDS
    for _ in range(6000):
        s = int(rng.integers(2))
        a = int(rng.random() < 0.25) if s == 0 else int(rng.random() < 0.75)
        states.append(state_vec(s))
        actions.append(TWO_BINS.centers[a])
        rewards.append(REWARDS[s, a])
        next_states.append(state_vec(NEXT_STATE[s, a]))
    states = np.asarray(states)
    ds = OfflineDataset(states=states, actions=np.asarray(actions)[:, None],
                        rewards=np.asarray(rewards),
                        next_states=np.asarray(next_states),
                        dones=np.zeros(6000, dtype=bool),
                        norm_mean=states.mean(axis=0),
                        norm_sd=np.maximum(states.std(axis=0), 1e-8))
    cfg = BcqConfig(gradient_steps=4000, batch_size=128, hidden=(32, 32),
                    discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02,
                    bc_threshold=1.0)
    policy, _ = train_bcq_discrete(ds, cfg, TWO_BINS, seed=2)
    assert greedy_primitive(policy, TWO_BINS, (0, 1)) == [0, 1]


def test_bcq_never_selects_unobserved_action_while_unconstrained_does():
    """One dangerous action absent from the data: lambda=0.3 avoids it."""
    amap = DiscreteActionMap(4)
    ds = build_dataset(8000, np.random.default_rng(3), amap,
                       primitive_bins=(1, 2))
    observed_bins = {1, 2}
    chosen = {}
    for lam in (0.3, 0.0):
        cfg = BcqConfig(gradient_steps=4000, batch_size=128, hidden=(32, 32),
                        discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02,
                        bc_threshold=lam)
        policy, _ = train_bcq_discrete(ds, cfg, amap, seed=2)
        chosen[lam] = [int(amap.index_of(policy.act(state_vec(s))))
                       for s in range(N_STATES)]
    assert set(chosen[0.3]) <= observed_bins
    assert not set(chosen[0.0]) <= observed_bins  # overestimation pathology


def test_cql_alpha_zero_matches_reference_fitted_q(mdp_dataset):
    """Regularizer off reduces to plain fitted Q-learning, bit for bit.

    The reference below re-implements the fitted-Q loop with the same rng
    protocol (network init, probe split, batch draws).
    """
    cfg = CqlConfig(gradient_steps=500, batch_size=64, hidden=(16, 16),
                    discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02,
                    cql_alpha=0.0)
    policy, _ = train_cql_discrete(mdp_dataset, cfg, TWO_BINS, seed=11)

    ds = mdp_dataset
    rng = np.random.default_rng(11)
    states = (ds.states - ds.norm_mean) / ds.norm_sd
    next_states = (ds.next_states - ds.norm_mean) / ds.norm_sd
    a_idx = TWO_BINS.index_of(ds.actions[:, 0])
    not_done = 1.0 - ds.dones.astype(np.float64)
    q_net = init_network([2, 16, 16, 2], ["relu", "relu", "identity"], rng)
    q_target = q_net.copy()
    opt = adam_init(q_net, alpha=1e-3)
    n_probe = min(max(int(len(ds) * 0.025), 1), 2048, len(ds) - 1)
    perm = rng.permutation(len(ds))
    train_idx = perm[n_probe:]
    rows = np.arange(64)
    for step in range(500):
        idx = train_idx[rng.integers(0, len(train_idx), 64)]
        y = ds.rewards[idx] + GAMMA * not_done[idx] * \
            forward(q_target, next_states[idx]).max(axis=1)
        q_all, cache = forward_cached(q_net, states[idx])
        _, d_sel = huber_loss(q_all[rows, a_idx[idx]], y)
        dq = np.zeros_like(q_all)
        dq[rows, a_idx[idx]] = d_sel
        grad, _ = backward(q_net, cache, dq)
        adam_step(q_net, opt, grad)
        polyak_update(q_target, q_net, 0.02)

    for a, b in zip(policy.q_net.weights, q_net.weights):
        assert np.array_equal(a, b)


def test_cql_conservatism_pushes_dataset_action_values_down():
    ds = build_dataset(8000, np.random.default_rng(5), TWO_BINS)
    means = {}
    for alpha in (0.0, 1.0):
        cfg = CqlConfig(gradient_steps=4000, batch_size=128, hidden=(32, 32),
                        discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02,
                        cql_alpha=alpha)
        policy, _ = train_cql_discrete(ds, cfg, TWO_BINS, seed=7)
        z = (ds.states - policy.norm_mean) / policy.norm_sd
        q = forward(policy.q_net, z)
        idx = TWO_BINS.index_of(ds.actions[:, 0])
        means[alpha] = q[np.arange(len(ds)), idx].mean()
    assert means[1.0] < means[0.0]


def test_logsumexp_shift_identity(rng):
    q = rng.normal(size=(16, 8)) * 50
    for c in (1.0, -273.5, 1e6):
        shifted = stable_logsumexp(q + c)
        np.testing.assert_allclose(shifted, stable_logsumexp(q) + c,
                                   rtol=1e-12, atol=1e-9)


def test_reward_scaling_leaves_argmax_policies_unchanged():
    reference = {}
    for k in (1.0, 37.0):
        dsk = build_dataset(6000, np.random.default_rng(11), TWO_BINS,
                            reward_scale=k)
        cfg = CqlConfig(gradient_steps=3000, batch_size=128, hidden=(32, 32),
                        discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02)
        cql_pol, _ = train_cql_discrete(dsk, cfg, TWO_BINS, seed=4)
        bcfg = BcqConfig(gradient_steps=3000, batch_size=128, hidden=(32, 32),
                         discount=GAMMA, reward_scale=1.0, q_lr=1e-3, tau=0.02)
        bcq_pol, _ = train_bcq_discrete(dsk, bcfg, TWO_BINS, seed=4)
        reference[k] = (greedy_primitive(cql_pol, TWO_BINS, (0, 1)),
                        greedy_primitive(bcq_pol, TWO_BINS, (0, 1)))
    assert reference[1.0] == reference[37.0]


def test_policies_emit_actions_in_range(mdp_dataset, rng):
    cfg = Td3BcConfig(gradient_steps=200, batch_size=64, hidden=(16, 16),
                      discount=GAMMA, reward_scale=1.0)
    policy, _ = train_td3bc(mdp_dataset, cfg, seed=0)
    for _ in range(20):
        a = policy.act(rng.normal(size=N_STATES) * 10)
        assert -1.0 <= a <= 1.0
    dcfg = CqlConfig(gradient_steps=200, batch_size=64, hidden=(16, 16),
                     discount=GAMMA, reward_scale=1.0)
    dpolicy, _ = train_cql_discrete(mdp_dataset, dcfg, TWO_BINS, seed=0)
    centers = set(TWO_BINS.centers)
    for _ in range(20):
        assert dpolicy.act(rng.normal(size=N_STATES) * 10) in centers


def test_empty_dataset_rejected():
    empty = OfflineDataset(states=np.zeros((0, 2)), actions=np.zeros((0, 1)),
                           rewards=np.zeros(0), next_states=np.zeros((0, 2)),
                           dones=np.zeros(0, dtype=bool),
                           norm_mean=np.zeros(2), norm_sd=np.ones(2))
    with pytest.raises(ValueError):
        train_td3bc(empty, TD3BC_FAST, 0)
    with pytest.raises(ValueError):
        train_bcq_discrete(empty, BCQ_FAST, TWO_BINS, 0)
    with pytest.raises(ValueError):
        train_cql_discrete(empty, CQL_FAST, TWO_BINS, 0)
