"""Behavior-cloning-regularized twin-delayed deterministic actor-critic.

The critic update is the standard clipped double-Q target with smoothed
target-policy actions; the delayed actor maximizes Q under an adaptive
scale alpha / mean|Q| while regressing onto the dataset actions (mean
squared behavioral cloning term).  Trained fully offline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import OfflineDataset
from .nn import (AdamState, Network, adam_init, adam_step, backward,
                 forward, forward_cached, init_network, mse_loss, polyak_update)
from .policy import ContinuousPolicy


class TrainingDivergedError(RuntimeError):
    """A learner produced a non-finite loss."""


@dataclass(frozen=True)
class Td3BcConfig:
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha: float = 2.5            # BC regularization scale
    tau: float = 0.005
    policy_noise: float = 0.2     # action-space units
    noise_clip: float = 0.5
    policy_delay: int = 2
    batch_size: int = 256
    gradient_steps: int = 100_000
    discount: float = 0.99
    hidden: tuple[int, ...] = (256, 256)
    reward_scale: float = 0.1     # rewards multiplied by this before TD

    def validate(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if not 0 < self.discount < 1:
            raise ValueError("discount must be in (0, 1)")


@dataclass
class TrainingHistory:
    """Probe losses recorded during training (checkpoint index, loss)."""

    critic_checkpoints: list[tuple[int, float]] = field(default_factory=list)
    final_critic_loss: float = float("nan")


def _probe_split(n: int, rng: np.random.Generator,
                 fraction: float = 0.025, cap: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into a training pool and a small held-out probe."""
    n_probe = min(max(int(n * fraction), 1), cap, max(n - 1, 1))
    perm = rng.permutation(n)
    return perm[n_probe:], perm[:n_probe]


def train_td3bc(dataset: OfflineDataset, config: Td3BcConfig = Td3BcConfig(),
                seed: int = 0) -> tuple[ContinuousPolicy, TrainingHistory]:
    """Run the full offline TD3-BC loop; returns (policy, probe history)."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)

    mean, sd = dataset.norm_mean, dataset.norm_sd
    states = (dataset.states - mean) / sd
    next_states = (dataset.next_states - mean) / sd
    actions = dataset.actions
    rewards = dataset.rewards[:, None] * config.reward_scale
    not_done = 1.0 - dataset.dones[:, None].astype(np.float64)

    state_dim = states.shape[1]
    actor_sizes = [state_dim, *config.hidden, 1]
    critic_sizes = [state_dim + 1, *config.hidden, 1]
    relu_stack = ["relu"] * len(config.hidden)
    actor = init_network(actor_sizes, relu_stack + ["tanh"], rng)
    critic1 = init_network(critic_sizes, relu_stack + ["identity"], rng)
    critic2 = init_network(critic_sizes, relu_stack + ["identity"], rng)
    actor_target = actor.copy()
    critic1_target = critic1.copy()
    critic2_target = critic2.copy()
    actor_opt = adam_init(actor, alpha=config.actor_lr)
    critic1_opt = adam_init(critic1, alpha=config.critic_lr)
    critic2_opt = adam_init(critic2, alpha=config.critic_lr)

    train_idx, probe_idx = _probe_split(len(dataset), rng)
    history = TrainingHistory()
    checkpoint_every = max(config.gradient_steps // 20, 1)

    def critic_probe_loss() -> float:
        s, a = states[probe_idx], actions[probe_idx]
        nxt = next_states[probe_idx]
        target_a = np.clip(forward(actor_target, nxt), -1.0, 1.0)
        q_next = np.minimum(forward(critic1_target, np.hstack([nxt, target_a])),
                            forward(critic2_target, np.hstack([nxt, target_a])))
        y = rewards[probe_idx] + config.discount * not_done[probe_idx] * q_next
        pred = forward(critic1, np.hstack([s, a]))
        return float(np.mean((pred - y) ** 2))

    batch = config.batch_size
    for step in range(config.gradient_steps):
        idx = train_idx[rng.integers(0, len(train_idx), batch)]
        s, a, r, nxt, nd = states[idx], actions[idx], rewards[idx], next_states[idx], not_done[idx]

        # clipped double-Q target with smoothed target actions
        noise = np.clip(config.policy_noise * rng.standard_normal((batch, 1)),
                        -config.noise_clip, config.noise_clip)
        next_a = np.clip(forward(actor_target, nxt) + noise, -1.0, 1.0)
        next_sa = np.hstack([nxt, next_a])
        q_next = np.minimum(forward(critic1_target, next_sa),
                            forward(critic2_target, next_sa))
        y = r + config.discount * nd * q_next

        sa = np.hstack([s, a])
        critic_loss = 0.0
        for critic, opt in ((critic1, critic1_opt), (critic2, critic2_opt)):
            pred, cache = forward_cached(critic, sa)
            loss, dpred = mse_loss(pred, y)
            critic_loss += loss
            grad, _ = backward(critic, cache, dpred)
            adam_step(critic, opt, grad)
        if not np.isfinite(critic_loss):
            raise TrainingDivergedError(
                f"td3bc: non-finite critic loss at step {step}")

        if step % config.policy_delay == 0:
            pi, actor_cache = forward_cached(actor, s)
            sa_pi = np.hstack([s, pi])
            q_pi, critic_cache = forward_cached(critic1, sa_pi)
            lam = config.alpha / max(float(np.mean(np.abs(q_pi))), 1e-12)
            bc_diff = pi - a
            actor_loss = -lam * float(np.mean(q_pi)) + float(np.mean(bc_diff ** 2))
            if not np.isfinite(actor_loss):
                raise TrainingDivergedError(
                    f"td3bc: non-finite actor loss at step {step}")
            # d(actor_loss)/d(pi): Q-ascent flows back through the critic input
            _, d_input = backward(critic1, critic_cache,
                                  np.full((batch, 1), -lam / batch))
            d_pi = d_input[:, state_dim:] + 2.0 * bc_diff / bc_diff.size
            actor_grad, _ = backward(actor, actor_cache, d_pi)
            adam_step(actor, actor_opt, actor_grad)
            polyak_update(critic1_target, critic1, config.tau)
            polyak_update(critic2_target, critic2, config.tau)
            polyak_update(actor_target, actor, config.tau)

        if step % checkpoint_every == 0 or step == config.gradient_steps - 1:
            history.critic_checkpoints.append((step, critic_probe_loss()))

    history.final_critic_loss = critic_probe_loss()
    policy = ContinuousPolicy(actor=actor, norm_mean=mean.copy(),
                              norm_sd=sd.copy(), kind="td3bc")
    return policy, history
