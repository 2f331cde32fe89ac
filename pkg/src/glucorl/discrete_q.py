"""Discrete-action offline Q-learners over a binned basal action.

The one-dimensional pump action quantizes onto a uniform grid with
negligible loss, which lets both learners drop their continuous-control
machinery:

* batch-constrained Q-learning trains a Q-head plus a behavior-likelihood
  head; both action selection and bootstrap targets only consider bins whose
  behavior likelihood is within a threshold ratio of the most likely bin;
* conservative Q-learning adds `cql_alpha * (logsumexp_a Q - Q(a_data))` to
  the temporal-difference loss, pushing down values of actions the dataset
  does not support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OfflineDataset
from .nn import (adam_init, adam_step, backward, forward, forward_cached,
                 huber_loss, init_network, polyak_update)
from .policy import DiscreteActionMap, DiscretePolicy
from .td3bc import TrainingDivergedError, TrainingHistory, _probe_split


@dataclass(frozen=True)
class BcqConfig:
    q_lr: float = 3e-4
    bc_threshold: float = 0.3    # likelihood-ratio constraint lambda
    tau: float = 0.005
    target_update_period: int = 1
    batch_size: int = 256
    gradient_steps: int = 100_000
    discount: float = 0.99
    hidden: tuple[int, ...] = (256, 256)
    reward_scale: float = 0.1

    def validate(self) -> None:
        if not 0 <= self.bc_threshold <= 1:
            raise ValueError("bc_threshold must be in [0, 1]")
        if not 0 < self.discount < 1:
            raise ValueError("discount must be in (0, 1)")
        if self.target_update_period < 1:
            raise ValueError("target_update_period must be >= 1")


@dataclass(frozen=True)
class CqlConfig:
    q_lr: float = 3e-4
    cql_alpha: float = 1.0
    discount: float = 0.99
    batch_size: int = 256
    gradient_steps: int = 100_000
    tau: float = 0.005
    target_update_period: int = 1
    hidden: tuple[int, ...] = (256, 256)
    reward_scale: float = 0.1

    def validate(self) -> None:
        if self.cql_alpha < 0:
            raise ValueError("cql_alpha must be >= 0")
        if not 0 < self.discount < 1:
            raise ValueError("discount must be in (0, 1)")


def _prepare(dataset: OfflineDataset, action_map: DiscreteActionMap,
             reward_scale: float):
    mean, sd = dataset.norm_mean, dataset.norm_sd
    states = (dataset.states - mean) / sd
    next_states = (dataset.next_states - mean) / sd
    action_idx = action_map.index_of(dataset.actions[:, 0])
    rewards = dataset.rewards * reward_scale
    not_done = 1.0 - dataset.dones.astype(np.float64)
    return states, action_idx, rewards, next_states, not_done


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


def stable_logsumexp(q: np.ndarray) -> np.ndarray:
    """Row-wise logsumexp with max-shift; exact under constant shifts."""
    m = q.max(axis=1)
    return m + np.log(np.exp(q - m[:, None]).sum(axis=1))


def train_bcq_discrete(dataset: OfflineDataset, config: BcqConfig = BcqConfig(),
                       action_map: DiscreteActionMap = DiscreteActionMap(),
                       seed: int = 0) -> tuple[DiscretePolicy, TrainingHistory]:
    """Batch-constrained Q-learning over binned actions."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    states, action_idx, rewards, next_states, not_done = _prepare(
        dataset, action_map, config.reward_scale)
    n_bins = action_map.n_bins
    state_dim = states.shape[1]
    sizes = [state_dim, *config.hidden, n_bins]
    acts = ["relu"] * len(config.hidden) + ["identity"]
    q_net = init_network(sizes, acts, rng)
    behavior = init_network(sizes, acts, rng)
    q_target = q_net.copy()
    q_opt = adam_init(q_net, alpha=config.q_lr)
    b_opt = adam_init(behavior, alpha=config.q_lr)

    train_idx, probe_idx = _probe_split(len(dataset), rng)
    history = TrainingHistory()
    checkpoint_every = max(config.gradient_steps // 20, 1)

    def constrained_next_q(nxt: np.ndarray) -> np.ndarray:
        """Bootstrap value: Q-target evaluated at the constrained argmax."""
        probs = _softmax(forward(behavior, nxt))
        eligible = probs / probs.max(axis=1, keepdims=True) >= config.bc_threshold
        q_online = np.where(eligible, forward(q_net, nxt), -np.inf)
        best = np.argmax(q_online, axis=1)
        q_t = forward(q_target, nxt)
        return q_t[np.arange(len(nxt)), best]

    def probe_loss() -> float:
        y = rewards[probe_idx] + config.discount * not_done[probe_idx] * \
            constrained_next_q(next_states[probe_idx])
        q = forward(q_net, states[probe_idx])
        sel = q[np.arange(len(probe_idx)), action_idx[probe_idx]]
        return huber_loss(sel, y)[0]

    batch = config.batch_size
    rows = np.arange(batch)
    for step in range(config.gradient_steps):
        idx = train_idx[rng.integers(0, len(train_idx), batch)]
        s, a, r, nxt, nd = (states[idx], action_idx[idx], rewards[idx],
                            next_states[idx], not_done[idx])
        y = r + config.discount * nd * constrained_next_q(nxt)

        q_all, q_cache = forward_cached(q_net, s)
        sel = q_all[rows, a]
        td_loss, d_sel = huber_loss(sel, y)
        if not np.isfinite(td_loss):
            raise TrainingDivergedError(f"bcq: non-finite TD loss at step {step}")
        dq = np.zeros_like(q_all)
        dq[rows, a] = d_sel
        grad, _ = backward(q_net, q_cache, dq)
        adam_step(q_net, q_opt, grad)

        logits, b_cache = forward_cached(behavior, s)
        probs = _softmax(logits)
        dlogits = probs.copy()
        dlogits[rows, a] -= 1.0
        grad_b, _ = backward(behavior, b_cache, dlogits / batch)
        adam_step(behavior, b_opt, grad_b)

        if (step + 1) % config.target_update_period == 0:
            polyak_update(q_target, q_net, config.tau)
        if step % checkpoint_every == 0 or step == config.gradient_steps - 1:
            history.critic_checkpoints.append((step, probe_loss()))

    history.final_critic_loss = probe_loss()
    policy = DiscretePolicy(q_net=q_net, action_map=action_map,
                            norm_mean=dataset.norm_mean.copy(),
                            norm_sd=dataset.norm_sd.copy(), kind="bcq",
                            behavior_net=behavior,
                            bc_threshold=config.bc_threshold)
    return policy, history


def train_cql_discrete(dataset: OfflineDataset, config: CqlConfig = CqlConfig(),
                       action_map: DiscreteActionMap = DiscreteActionMap(),
                       seed: int = 0) -> tuple[DiscretePolicy, TrainingHistory]:
    """Conservative Q-learning over binned actions; greedy final policy."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    states, action_idx, rewards, next_states, not_done = _prepare(
        dataset, action_map, config.reward_scale)
    n_bins = action_map.n_bins
    sizes = [states.shape[1], *config.hidden, n_bins]
    acts = ["relu"] * len(config.hidden) + ["identity"]
    q_net = init_network(sizes, acts, rng)
    q_target = q_net.copy()
    q_opt = adam_init(q_net, alpha=config.q_lr)

    train_idx, probe_idx = _probe_split(len(dataset), rng)
    history = TrainingHistory()
    checkpoint_every = max(config.gradient_steps // 20, 1)

    def probe_loss() -> float:
        y = rewards[probe_idx] + config.discount * not_done[probe_idx] * \
            forward(q_target, next_states[probe_idx]).max(axis=1)
        q = forward(q_net, states[probe_idx])
        sel = q[np.arange(len(probe_idx)), action_idx[probe_idx]]
        return huber_loss(sel, y)[0]

    batch = config.batch_size
    rows = np.arange(batch)
    for step in range(config.gradient_steps):
        idx = train_idx[rng.integers(0, len(train_idx), batch)]
        s, a, r, nxt, nd = (states[idx], action_idx[idx], rewards[idx],
                            next_states[idx], not_done[idx])
        y = r + config.discount * nd * forward(q_target, nxt).max(axis=1)

        q_all, q_cache = forward_cached(q_net, s)
        sel = q_all[rows, a]
        td_loss, d_sel = huber_loss(sel, y)
        dq = np.zeros_like(q_all)
        dq[rows, a] = d_sel
        loss = td_loss
        if config.cql_alpha > 0:
            # d/dQ of mean(logsumexp(Q) - Q[a]) = (softmax(Q) - onehot(a)) / batch
            probs = _softmax(q_all)
            dq += config.cql_alpha * probs / batch
            dq[rows, a] -= config.cql_alpha / batch
            loss = td_loss + config.cql_alpha * float(
                np.mean(stable_logsumexp(q_all) - sel))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"cql: non-finite loss at step {step}")
        grad, _ = backward(q_net, q_cache, dq)
        adam_step(q_net, q_opt, grad)

        if (step + 1) % config.target_update_period == 0:
            polyak_update(q_target, q_net, config.tau)
        if step % checkpoint_every == 0 or step == config.gradient_steps - 1:
            history.critic_checkpoints.append((step, probe_loss()))

    history.final_critic_loss = probe_loss()
    policy = DiscretePolicy(q_net=q_net, action_map=action_map,
                            norm_mean=dataset.norm_mean.copy(),
                            norm_sd=dataset.norm_sd.copy(), kind="cql")
    return policy, history
