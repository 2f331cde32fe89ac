"""Trained dosing policies: action interface, binning, disk persistence.

All policies map the 12-dimensional state to a basal action in [-1, 1].
Feature z-scoring uses the statistics of the training dataset and is baked
into the policy, so callers always pass raw (unnormalized) features.
Discrete policies emit bin centers of their action map.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Network, WeightFormatError, forward, load_weights, save_weights

POLICY_KINDS = ("td3bc", "bcq", "cql")


@dataclass(frozen=True)
class DiscreteActionMap:
    """Uniform quantization of the normalized action range [-1, 1]."""

    n_bins: int = 16

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("need at least 2 bins")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return -1.0 + (np.arange(self.n_bins) + 0.5) * (2.0 / self.n_bins)

    def index_of(self, action: float | np.ndarray) -> np.ndarray:
        """Bin index containing each action (clipped into range)."""
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        idx = np.floor((a + 1.0) * 0.5 * self.n_bins).astype(np.int64)
        return np.clip(idx, 0, self.n_bins - 1)

    def center(self, index: int) -> float:
        return float(self.centers[index])


def _normalize(features: np.ndarray, mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    z = (x - mean) / sd
    return z


@dataclass
class ContinuousPolicy:
    """Deterministic actor network with tanh output in (-1, 1)."""

    actor: Network
    norm_mean: np.ndarray
    norm_sd: np.ndarray

    kind: str = "td3bc"

    def act(self, features: np.ndarray) -> float:
        z = _normalize(features, self.norm_mean, self.norm_sd)
        a = forward(self.actor, z)[0, 0]
        return float(np.clip(a, -1.0, 1.0))

    def act_batch(self, features: np.ndarray) -> np.ndarray:
        z = _normalize(features, self.norm_mean, self.norm_sd)
        return np.clip(forward(self.actor, z)[:, 0], -1.0, 1.0)


@dataclass
class DiscretePolicy:
    """Greedy policy over binned actions, optionally behavior-constrained.

    With a behavior head and threshold lambda, action selection follows the
    batch-constrained rule: only bins whose behavior likelihood is at least
    lambda times the most likely bin's are eligible for the Q argmax.
    """

    q_net: Network
    action_map: DiscreteActionMap
    norm_mean: np.ndarray
    norm_sd: np.ndarray
    kind: str = "cql"
    behavior_net: Network | None = None
    bc_threshold: float = 0.0

    def _eligible_q(self, z: np.ndarray) -> np.ndarray:
        q = forward(self.q_net, z)
        if self.behavior_net is not None and self.bc_threshold > 0.0:
            logits = forward(self.behavior_net, z)
            logits = logits - logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            ratio = probs / probs.max(axis=1, keepdims=True)
            q = np.where(ratio >= self.bc_threshold, q, -np.inf)
        return q

    def act(self, features: np.ndarray) -> float:
        z = _normalize(features, self.norm_mean, self.norm_sd)
        q = self._eligible_q(z)
        return self.action_map.center(int(np.argmax(q[0])))

    def act_batch(self, features: np.ndarray) -> np.ndarray:
        z = _normalize(features, self.norm_mean, self.norm_sd)
        q = self._eligible_q(z)
        return self.action_map.centers[np.argmax(q, axis=1)]


Policy = ContinuousPolicy | DiscretePolicy


def save_policy(policy: Policy, path: str | Path) -> None:
    """Persist a policy as a weight file with a policy-type header."""
    if isinstance(policy, ContinuousPolicy):
        extra = {
            "policy_kind": np.array(policy.kind),
            "norm_mean": policy.norm_mean,
            "norm_sd": policy.norm_sd,
        }
        save_weights(policy.actor, path, extra)
        return
    extra = {
        "policy_kind": np.array(policy.kind),
        "norm_mean": policy.norm_mean,
        "norm_sd": policy.norm_sd,
        "n_bins": np.array(policy.action_map.n_bins),
        "bc_threshold": np.array(policy.bc_threshold),
    }
    if policy.behavior_net is not None:
        for i, (w, b) in enumerate(zip(policy.behavior_net.weights,
                                       policy.behavior_net.biases)):
            extra[f"behavior_weight_{i}"] = w
            extra[f"behavior_bias_{i}"] = b
        extra["behavior_layer_sizes"] = np.array(policy.behavior_net.layer_sizes)
        extra["behavior_activations"] = np.array(policy.behavior_net.activations)
    save_weights(policy.q_net, path, extra)


def load_policy(path: str | Path) -> Policy:
    net, extra = load_weights(path)
    if "policy_kind" not in extra:
        raise WeightFormatError(f"{path}: not a policy file (missing kind header)")
    kind = str(extra["policy_kind"])
    mean = extra["norm_mean"]
    sd = extra["norm_sd"]
    if kind == "td3bc":
        return ContinuousPolicy(actor=net, norm_mean=mean, norm_sd=sd, kind=kind)
    if kind not in POLICY_KINDS:
        raise WeightFormatError(f"{path}: unknown policy kind {kind!r}")
    behavior = None
    if "behavior_layer_sizes" in extra:
        sizes = [int(x) for x in extra["behavior_layer_sizes"]]
        acts = [str(x) for x in extra["behavior_activations"]]
        n = len(sizes) - 1
        behavior = Network(sizes, acts,
                           [extra[f"behavior_weight_{i}"] for i in range(n)],
                           [extra[f"behavior_bias_{i}"] for i in range(n)])
    return DiscretePolicy(
        q_net=net,
        action_map=DiscreteActionMap(int(extra["n_bins"])),
        norm_mean=mean, norm_sd=sd, kind=kind,
        behavior_net=behavior,
        bc_threshold=float(extra["bc_threshold"]),
    )
