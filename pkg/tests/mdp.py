"""Tiny exactly-solvable MDP used as an oracle for the offline learners.

Two one-hot-encoded states; two primitive actions (stay / toggle) embedded
in the normalized action range.  Rewards are all negative, mirroring the
risk-based environment.  Value iteration on the known dynamics gives the
exact optimal policy the learners must recover from full-coverage data.
"""

from __future__ import annotations

import numpy as np

from glucorl.data import OfflineDataset
from glucorl.policy import DiscreteActionMap

N_STATES = 2
# rewards[s, a]; action 0 stays, action 1 toggles
REWARDS = np.array([[-1.0, -0.2],
                    [-0.1, -0.8]])
NEXT_STATE = np.array([[0, 1],
                       [1, 0]])
GAMMA = 0.9


def state_vec(s: int) -> np.ndarray:
    v = np.zeros(N_STATES)
    v[s] = 1.0
    return v


def value_iteration(rewards=REWARDS, next_state=NEXT_STATE, gamma=GAMMA,
                    tol=1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Exact Q and greedy policy for the deterministic MDP."""
    q = np.zeros_like(rewards)
    while True:
        v = q.max(axis=1)
        q_new = rewards + gamma * v[next_state]
        if np.max(np.abs(q_new - q)) < tol:
            return q_new, q_new.argmax(axis=1)
        q = q_new


def action_values(action_map: DiscreteActionMap,
                  primitive_bins: tuple[int, ...]) -> np.ndarray:
    """Normalized action value of each primitive action."""
    return action_map.centers[list(primitive_bins)]


def build_dataset(n: int, rng: np.random.Generator,
                  action_map: DiscreteActionMap = DiscreteActionMap(2),
                  primitive_bins: tuple[int, ...] = (0, 1),
                  allowed: dict[int, tuple[int, ...]] | None = None,
                  reward_scale: float = 1.0) -> OfflineDataset:
    """Uniform full-coverage transitions (optionally restricting actions)."""
    allowed = allowed or {s: (0, 1) for s in range(N_STATES)}
    values = action_values(action_map, primitive_bins)
    states, actions, rewards, next_states = [], [], [], []
    for _ in range(n):
        s = int(rng.integers(N_STATES))
        a = int(rng.choice(allowed[s]))
        states.append(state_vec(s))
        actions.append(values[a])
        rewards.append(REWARDS[s, a] * reward_scale)
        next_states.append(state_vec(NEXT_STATE[s, a]))
    states = np.asarray(states)
    sd = np.maximum(states.std(axis=0), 1e-8)
    return OfflineDataset(
        states=states,
        actions=np.asarray(actions)[:, None],
        rewards=np.asarray(rewards),
        next_states=np.asarray(next_states),
        dones=np.zeros(n, dtype=bool),
        norm_mean=states.mean(axis=0),
        norm_sd=sd,
    )


def greedy_primitive(policy, action_map: DiscreteActionMap,
                     primitive_bins: tuple[int, ...]) -> list[int]:
    """Map each state's policy action to the nearest primitive action."""
    values = action_values(action_map, primitive_bins)
    out = []
    for s in range(N_STATES):
        a = policy.act(state_vec(s))
        out.append(int(np.argmin(np.abs(values - a))))
    return out
