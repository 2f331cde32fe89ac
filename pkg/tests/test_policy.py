import numpy as np
import pytest

from glucorl import nn
from glucorl.policy import (ContinuousPolicy, DiscreteActionMap, DiscretePolicy,
                            load_policy, save_policy)


@pytest.fixture
def action_map():
    return DiscreteActionMap(16)


def test_bins_partition_range(action_map):
    edges = action_map.edges
    assert edges[0] == -1.0 and edges[-1] == 1.0
    assert np.all(np.diff(edges) > 0)
    centers = action_map.centers
    assert len(centers) == 16
    assert np.all(centers > -1.0) and np.all(centers < 1.0)


def test_index_of_centers_is_identity(action_map):
    for i, c in enumerate(action_map.centers):
        assert action_map.index_of(c) == i


def test_index_of_clips_out_of_range(action_map):
    assert action_map.index_of(-2.0) == 0
    assert action_map.index_of(2.0) == 15
    assert action_map.index_of(1.0) == 15  # upper edge belongs to last bin


def test_too_few_bins_rejected():
    with pytest.raises(ValueError):
        DiscreteActionMap(1)


def _continuous(rng):
    actor = nn.init_network([12, 16, 1], ["relu", "tanh"], rng)
    return ContinuousPolicy(actor=actor, norm_mean=np.zeros(12),
                            norm_sd=np.ones(12))


def _discrete(rng, with_behavior):
    q = nn.init_network([12, 16, 8], ["relu", "identity"], rng)
    behavior = nn.init_network([12, 16, 8], ["relu", "identity"], rng) \
        if with_behavior else None
    return DiscretePolicy(q_net=q, action_map=DiscreteActionMap(8),
                          norm_mean=np.zeros(12), norm_sd=np.ones(12),
                          kind="bcq" if with_behavior else "cql",
                          behavior_net=behavior,
                          bc_threshold=0.3 if with_behavior else 0.0)


def test_continuous_policy_bounded_and_deterministic(rng):
    policy = _continuous(rng)
    f = rng.normal(size=12)
    a1, a2 = policy.act(f), policy.act(f)
    assert a1 == a2
    for _ in range(50):
        a = policy.act(rng.normal(size=12) * 100)
        assert -1.0 <= a <= 1.0


def test_discrete_policy_outputs_bin_centers(rng):
    policy = _discrete(rng, with_behavior=False)
    centers = set(policy.action_map.centers)
    for _ in range(50):
        assert policy.act(rng.normal(size=12)) in centers


def test_bcq_threshold_masks_unlikely_bins(rng):
    policy = _discrete(rng, with_behavior=True)
    f = rng.normal(size=12)
    z = (f - policy.norm_mean) / policy.norm_sd
    logits = nn.forward(policy.behavior_net, z[None, :])[0]
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    eligible = probs / probs.max() >= policy.bc_threshold
    q = nn.forward(policy.q_net, z[None, :])[0]
    masked = np.where(eligible, q, -np.inf)
    assert policy.act(f) == policy.action_map.center(int(np.argmax(masked)))


def test_continuous_policy_round_trip(rng, tmp_path):
    policy = _continuous(rng)
    path = tmp_path / "p.npz"
    save_policy(policy, path)
    again = load_policy(path)
    assert isinstance(again, ContinuousPolicy)
    f = rng.normal(size=12)
    assert again.act(f) == policy.act(f)


def test_discrete_policy_round_trip_with_behavior(rng, tmp_path):
    policy = _discrete(rng, with_behavior=True)
    path = tmp_path / "p.npz"
    save_policy(policy, path)
    again = load_policy(path)
    assert isinstance(again, DiscretePolicy)
    assert again.kind == "bcq"
    assert again.bc_threshold == 0.3
    assert again.action_map.n_bins == 8
    f = rng.normal(size=12)
    assert again.act(f) == policy.act(f)


def test_plain_weight_file_rejected_as_policy(rng, tmp_path):
    net = nn.init_network([3, 2], ["identity"], rng)
    path = tmp_path / "w.npz"
    nn.save_weights(net, path)
    with pytest.raises(nn.WeightFormatError):
        load_policy(path)
