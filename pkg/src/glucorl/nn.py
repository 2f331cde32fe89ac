"""Dense feedforward networks with exact reverse-mode gradients and Adam.

Everything runs in 64-bit floats on plain numpy arrays, so training is
bit-reproducible for a fixed seed.  `backward` also returns the gradient
with respect to the network input, which lets actor losses differentiate
through a critic (network-through-network composition).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class WeightFormatError(IOError):
    """Weight file is corrupt, truncated or structurally incompatible."""


@dataclass
class Network:
    """MLP parameters: weight matrices are (fan_in, fan_out)."""

    layer_sizes: list[int]
    activations: list[str]          # one per weight layer
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "Network":
        return Network(list(self.layer_sizes), list(self.activations),
                       [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases])

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass
class Gradient:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def __add__(self, other: "Gradient") -> "Gradient":
        return Gradient([a + b for a, b in zip(self.d_weights, other.d_weights)],
                        [a + b for a, b in zip(self.d_biases, other.d_biases)])

    def scale(self, k: float) -> "Gradient":
        return Gradient([k * w for w in self.d_weights],
                        [k * b for b in self.d_biases])


def init_network(layer_sizes: list[int], activations: list[str],
                 rng: np.random.Generator) -> Network:
    """He-uniform init for relu layers, Xavier-uniform otherwise."""
    if len(activations) != len(layer_sizes) - 1:
        raise ValueError("need one activation per weight layer")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    weights, biases = [], []
    for fan_in, fan_out, act in zip(layer_sizes[:-1], layer_sizes[1:], activations):
        if act == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(list(layer_sizes), list(activations), weights, biases)


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Batch forward pass; x is (n, layer_sizes[0])."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input shape {a.shape} does not match "
                         f"input width {net.layer_sizes[0]}")
    for w, b, act in zip(net.weights, net.biases, net.activations):
        a = _apply(act, a @ w + b)
    return a


def forward_cached(net: Network, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass retaining per-layer (input, post-activation) for backward."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input shape {a.shape} does not match "
                         f"input width {net.layer_sizes[0]}")
    cache = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = a @ w + b
        out = _apply(act, z)
        cache.append((a, out))
        a = out
    return a, cache


def backward(net: Network, cache: list,
             upstream: np.ndarray) -> tuple[Gradient, np.ndarray]:
    """Exact reverse-mode gradients given d(loss)/d(output).

    Returns (parameter gradient, gradient w.r.t. the network input).
    """
    d = np.asarray(upstream, dtype=np.float64)
    d_weights = [None] * net.n_layers
    d_biases = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        a_in, out = cache[i]
        act = net.activations[i]
        if act == "relu":
            d = d * (out > 0.0)
        elif act == "tanh":
            d = d * (1.0 - out * out)
        d_weights[i] = a_in.T @ d
        d_biases[i] = d.sum(axis=0)
        d = d @ net.weights[i].T
    return Gradient(d_weights, d_biases), d


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements; returns (loss, d_loss/d_pred)."""
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


def huber_loss(pred: np.ndarray, target: np.ndarray,
               delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Huber loss averaged over all elements; returns (loss, d_loss/d_pred)."""
    diff = pred - target
    n = diff.size
    absd = np.abs(diff)
    quad = absd <= delta
    loss = np.where(quad, 0.5 * diff * diff, delta * (absd - 0.5 * delta))
    grad = np.where(quad, diff, delta * np.sign(diff)) / n
    return float(np.sum(loss) / n), grad


@dataclass
class AdamState:
    """Bias-corrected Adam moments, one slot per parameter tensor."""

    alpha: float
    beta1: float
    beta2: float
    epsilon: float
    step_count: int
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]


def adam_init(net: Network, alpha: float = 3e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        alpha=alpha, beta1=beta1, beta2=beta2, epsilon=epsilon, step_count=0,
        m_weights=[np.zeros_like(w) for w in net.weights],
        v_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_biases=[np.zeros_like(b) for b in net.biases],
    )


def adam_step(net: Network, state: AdamState, grad: Gradient) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for params, grads, ms, vs in (
            (net.weights, grad.d_weights, state.m_weights, state.v_weights),
            (net.biases, grad.d_biases, state.m_biases, state.v_biases)):
        for p, g, m, v in zip(params, grads, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= state.alpha * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def polyak_update(target: Network, online: Network, tau: float) -> Network:
    """target <- (1 - tau)*target + tau*online, elementwise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for tw, ow in zip(target.weights, online.weights):
        tw *= 1.0 - tau
        tw += tau * ow
    for tb, ob in zip(target.biases, online.biases):
        tb *= 1.0 - tau
        tb += tau * ob
    return target


# -- weight files ------------------------------------------------------------

WEIGHT_FORMAT_VERSION = 1


def _param_checksum(net: Network) -> str:
    h = hashlib.sha256()
    for w, b in zip(net.weights, net.biases):
        h.update(np.ascontiguousarray(w).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


def save_weights(net: Network, path: str | Path,
                 extra: dict[str, np.ndarray] | None = None) -> None:
    """Versioned weight file: architecture header, parameters, checksum."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload: dict[str, np.ndarray] = {
        "format_version": np.array(WEIGHT_FORMAT_VERSION),
        "layer_sizes": np.array(net.layer_sizes, dtype=np.int64),
        "activations": np.array(net.activations),
        "checksum": np.array(_param_checksum(net)),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        payload[f"weight_{i}"] = w
        payload[f"bias_{i}"] = b
    for key, value in (extra or {}).items():
        payload[f"extra_{key}"] = np.asarray(value)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **payload)
    tmp.replace(path)


def load_weights(path: str | Path,
                 expected_layer_sizes: list[int] | None = None,
                 ) -> tuple[Network, dict[str, np.ndarray]]:
    """Load a weight file; verifies checksum and (optionally) architecture."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            payload = {k: archive[k] for k in archive.files}
    except Exception as exc:
        raise WeightFormatError(f"{path}: unreadable weight file ({exc})") from exc
    version = int(payload.get("format_version", -1))
    if version != WEIGHT_FORMAT_VERSION:
        raise WeightFormatError(f"{path}: format_version {version}")
    layer_sizes = [int(x) for x in payload["layer_sizes"]]
    activations = [str(x) for x in payload["activations"]]
    n = len(layer_sizes) - 1
    try:
        weights = [payload[f"weight_{i}"] for i in range(n)]
        biases = [payload[f"bias_{i}"] for i in range(n)]
    except KeyError as exc:
        raise WeightFormatError(f"{path}: missing parameter array {exc}") from exc
    net = Network(layer_sizes, activations, weights, biases)
    if str(payload["checksum"]) != _param_checksum(net):
        raise WeightFormatError(f"{path}: parameter checksum mismatch")
    if expected_layer_sizes is not None and layer_sizes != list(expected_layer_sizes):
        raise WeightFormatError(
            f"{path}: architecture {layer_sizes} != expected {expected_layer_sizes}")
    extra = {k[len("extra_"):]: v for k, v in payload.items() if k.startswith("extra_")}
    return net, extra
