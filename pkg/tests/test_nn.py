import numpy as np
import pytest

from glucorl import nn


def finite_difference_gradients(net, x, target, h=1e-6):
    """Central-difference oracle for every parameter."""
    dw = [np.zeros_like(w) for w in net.weights]
    db = [np.zeros_like(b) for b in net.biases]

    def loss():
        return nn.mse_loss(nn.forward(net, x), target)[0]

    for layer, w in enumerate(net.weights):
        flat = w.ravel()
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            lp = loss()
            flat[k] = old - h
            lm = loss()
            flat[k] = old
            dw[layer].ravel()[k] = (lp - lm) / (2 * h)
    for layer, b in enumerate(net.biases):
        for k in range(b.size):
            old = b[k]
            b[k] = old + h
            lp = loss()
            b[k] = old - h
            lm = loss()
            b[k] = old
            db[layer][k] = (lp - lm) / (2 * h)
    return dw, db


def test_zero_network_outputs_zero(rng):
    net = nn.init_network([4, 3, 2], ["relu", "identity"], rng)
    for w in net.weights:
        w[:] = 0.0
    x = rng.normal(size=(5, 4))
    assert np.all(nn.forward(net, x) == 0.0)


def test_identity_single_layer(rng):
    net = nn.init_network([3, 3], ["identity"], rng)
    net.weights[0][:] = np.eye(3)
    net.biases[0][:] = 0.0
    x = rng.normal(size=(6, 3))
    assert np.allclose(nn.forward(net, x), x)


def test_forward_matches_hand_computation(rng):
    net = nn.init_network([12, 32, 1], ["relu", "identity"], rng)
    x = rng.normal(size=(3, 12))
    # independent spreadsheet-style evaluation with explicit loops
    expected = np.zeros((3, 1))
    for r in range(3):
        hidden = []
        for j in range(32):
            z = net.biases[0][j]
            for i in range(12):
                z += x[r, i] * net.weights[0][i, j]
            hidden.append(max(z, 0.0))
        out = net.biases[1][0]
        for j in range(32):
            out += hidden[j] * net.weights[1][j, 0]
        expected[r, 0] = out
    assert np.allclose(nn.forward(net, x), expected, rtol=1e-12)


def test_forward_rejects_dimension_mismatch(rng):
    net = nn.init_network([4, 2], ["identity"], rng)
    with pytest.raises(ValueError):
        nn.forward(net, rng.normal(size=(3, 5)))


def test_constant_output_net_zero_gradient(rng):
    net = nn.init_network([3, 4, 1], ["relu", "identity"], rng)
    for w in net.weights:
        w[:] = 0.0
    net.biases[1][0] = 2.5
    x = rng.normal(size=(8, 3))
    target = np.full((8, 1), 2.5)
    y, cache = nn.forward_cached(net, x)
    _, dpred = nn.mse_loss(y, target)
    grad, _ = nn.backward(net, cache, dpred)
    assert all(np.all(g == 0.0) for g in grad.d_weights)
    assert all(np.all(g == 0.0) for g in grad.d_biases)


@pytest.mark.parametrize("sizes,acts", [
    ([3, 5, 1], ["relu", "identity"]),
    ([2, 4, 4, 1], ["relu", "tanh", "identity"]),
    ([4, 6, 2], ["tanh", "identity"]),
])
def test_backward_matches_finite_differences(sizes, acts, rng):
    net = nn.init_network(sizes, acts, rng)
    x = rng.normal(size=(7, sizes[0]))
    target = rng.normal(size=(7, sizes[-1]))
    y, cache = nn.forward_cached(net, x)
    _, dpred = nn.mse_loss(y, target)
    grad, _ = nn.backward(net, cache, dpred)
    dw, db = finite_difference_gradients(net, x, target)
    for a, b in zip(grad.d_weights, dw):
        assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-4)) < 1e-5
    for a, b in zip(grad.d_biases, db):
        assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-4)) < 1e-5


def test_gradient_linearity(rng):
    net = nn.init_network([3, 6, 2], ["relu", "identity"], rng)
    x = rng.normal(size=(5, 3))
    ta = rng.normal(size=(5, 2))
    tb = rng.normal(size=(5, 2))
    y, cache = nn.forward_cached(net, x)
    _, da = nn.mse_loss(y, ta)
    _, db_ = nn.mse_loss(y, tb)
    ga, _ = nn.backward(net, cache, da)
    gb, _ = nn.backward(net, cache, db_)
    gsum, _ = nn.backward(net, cache, da + db_)
    for combined, a, b in zip(gsum.d_weights, ga.d_weights, gb.d_weights):
        assert np.allclose(combined, a + b, rtol=1e-12)


def test_input_gradient_supports_actor_through_critic(rng):
    """d(critic(s, actor(s)))/d(actor params) via the input-gradient path."""
    actor = nn.init_network([2, 8, 1], ["relu", "tanh"], rng)
    critic = nn.init_network([3, 8, 1], ["relu", "identity"], rng)
    s = rng.normal(size=(4, 2))

    def objective():
        a = nn.forward(actor, s)
        return float(np.mean(nn.forward(critic, np.hstack([s, a]))))

    a, actor_cache = nn.forward_cached(actor, s)
    q, critic_cache = nn.forward_cached(critic, np.hstack([s, a]))
    _, d_input = nn.backward(critic, critic_cache, np.full((4, 1), 1.0 / 4))
    grad, _ = nn.backward(actor, actor_cache, d_input[:, 2:])

    h = 1e-6
    w = actor.weights[0]
    for idx in ((0, 0), (1, 3)):
        old = w[idx]
        w[idx] = old + h
        fp = objective()
        w[idx] = old - h
        fm = objective()
        w[idx] = old
        fd = (fp - fm) / (2 * h)
        assert grad.d_weights[0][idx] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_huber_matches_mse_in_quadratic_region(rng):
    pred = rng.normal(size=(6, 1)) * 0.1
    target = np.zeros((6, 1))
    hl, hg = nn.huber_loss(pred, target, delta=10.0)
    ml, mg = nn.mse_loss(pred, target)
    assert hl == pytest.approx(ml / 2)
    assert np.allclose(hg, mg / 2)


def test_adam_zero_gradient_leaves_params(rng):
    net = nn.init_network([2, 3], ["identity"], rng)
    before = [w.copy() for w in net.weights]
    state = nn.adam_init(net)
    zero = nn.Gradient([np.zeros_like(w) for w in net.weights],
                       [np.zeros_like(b) for b in net.biases])
    nn.adam_step(net, state, zero)
    for w, old in zip(net.weights, before):
        assert np.array_equal(w, old)


def test_adam_converges_on_scalar_quadratic(rng):
    net = nn.init_network([1, 1], ["identity"], rng)
    net.weights[0][0, 0] = 3.0
    net.biases[0][0] = 0.0
    state = nn.adam_init(net, alpha=1e-2)
    for _ in range(2000):
        w = net.weights[0][0, 0]
        grad = nn.Gradient([np.array([[2.0 * w]])], [np.zeros(1)])
        nn.adam_step(net, state, grad)
    assert abs(net.weights[0][0, 0]) < 1e-3


def test_adam_bitwise_deterministic(rng):
    def run():
        r = np.random.default_rng(8)
        net = nn.init_network([3, 5, 1], ["relu", "identity"], r)
        state = nn.adam_init(net, alpha=1e-3)
        x = np.random.default_rng(9).normal(size=(16, 3))
        t = np.random.default_rng(10).normal(size=(16, 1))
        for _ in range(200):
            y, cache = nn.forward_cached(net, x)
            _, dpred = nn.mse_loss(y, t)
            grad, _ = nn.backward(net, cache, dpred)
            nn.adam_step(net, state, grad)
        return net

    a, b = run(), run()
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_polyak_endpoints_and_midpoint(rng):
    online = nn.init_network([2, 2], ["identity"], rng)
    target = nn.init_network([2, 2], ["identity"], rng)

    t1 = target.copy()
    nn.polyak_update(t1, online, tau=1.0)
    assert np.array_equal(t1.weights[0], online.weights[0])

    t0 = target.copy()
    nn.polyak_update(t0, online, tau=0.0)
    assert np.array_equal(t0.weights[0], target.weights[0])

    half = target.copy()
    half.weights[0][:] = 0.0
    src = online.copy()
    src.weights[0][:] = 2.0
    nn.polyak_update(half, src, tau=0.5)
    assert np.all(half.weights[0] == 1.0)


def test_weight_file_round_trip(rng, tmp_path):
    net = nn.init_network([12, 32, 1], ["relu", "tanh"], rng)
    path = tmp_path / "w.npz"
    nn.save_weights(net, path, extra={"norm_mean": np.arange(12.0)})
    again, extra = nn.load_weights(path)
    assert again.layer_sizes == net.layer_sizes
    assert again.activations == net.activations
    for a, b in zip(again.weights, net.weights):
        assert np.array_equal(a, b)
    assert np.array_equal(extra["norm_mean"], np.arange(12.0))


def test_weight_file_architecture_mismatch(rng, tmp_path):
    net = nn.init_network([4, 3], ["identity"], rng)
    path = tmp_path / "w.npz"
    nn.save_weights(net, path)
    with pytest.raises(nn.WeightFormatError):
        nn.load_weights(path, expected_layer_sizes=[4, 5])


def test_weight_file_corruption_detected(rng, tmp_path):
    net = nn.init_network([4, 3], ["identity"], rng)
    path = tmp_path / "w.npz"
    nn.save_weights(net, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(nn.WeightFormatError):
        nn.load_weights(path)
