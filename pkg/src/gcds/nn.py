"""Dense ReLU networks with exact reverse-mode gradients.

Hand-rolled on purpose: the training objective needs gradients with
respect to the *inputs* of one network (the critic) to drive another
(the generator), and keeping the whole stack in float64 numpy makes
runs reproducible bit for bit.  No autodiff framework is involved.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ioutil import atomic_write_text

__all__ = [
    "NetworkSpec",
    "DenseNet",
    "ForwardCache",
    "GradientBundle",
    "AdamState",
    "OptimizerError",
    "init_network",
    "forward",
    "backward",
    "init_adam",
    "adam_step",
    "flatten_params",
    "set_params",
    "flatten_grads",
    "checkpoint_record",
    "network_from_record",
    "save_checkpoint",
    "load_checkpoint",
]


class OptimizerError(RuntimeError):
    """An optimizer update could not be applied (e.g. non-finite gradients)."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a fully connected ReLU network.

    Parameters
    ----------
    input_dim : int
        Number of input features.
    hidden_widths : tuple of int
        Width of each hidden ReLU layer; may be empty, giving a purely
        linear map.
    output_dim : int
        Number of outputs; the readout is always linear.
    output_activation : str
        Only ``"identity"`` is supported.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.output_dim < 1:
            raise ValueError(f"output_dim must be >= 1, got {self.output_dim}")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_widths}")
        if self.output_activation != "identity":
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @property
    def widths(self) -> tuple[int, ...]:
        """Layer widths including input and output."""
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_widths) + 1

    @property
    def param_count(self) -> int:
        """Total number of weights and biases: sum of (w_i + 1) * w_{i+1}."""
        ws = self.widths
        return sum((ws[i] + 1) * ws[i + 1] for i in range(len(ws) - 1))


@dataclass
class DenseNet:
    """A concrete network: spec plus parameter arrays.

    ``weights[i]`` has shape (widths[i+1], widths[i]); rows index output
    units.  ``biases[i]`` has shape (widths[i+1],).  All float64.
    """

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        ws = self.spec.widths
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ValueError("parameter list length does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (ws[i + 1], ws[i])
            if w.shape != want:
                raise ValueError(f"weights[{i}] has shape {w.shape}, expected {want}")
            if b.shape != (ws[i + 1],):
                raise ValueError(f"biases[{i}] has shape {b.shape}, expected ({ws[i + 1]},)")


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by backward().

    ``activations[0]`` is the input batch; ``activations[l]`` for l >= 1
    is the post-ReLU output of hidden layer l.  ``pre_activations[l-1]``
    is the matching pre-ReLU value.
    """

    activations: list[np.ndarray]
    pre_activations: list[np.ndarray]
    n_layers: int


@dataclass
class GradientBundle:
    """Gradients of a scalar loss with respect to parameters and inputs."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]
    d_input: np.ndarray


def init_network(spec: NetworkSpec, seed: int) -> DenseNet:
    """Create a network with He-normal weights and zero biases.

    Weights of a layer with fan-in f are drawn i.i.d. N(0, 2/f); the
    draw order is fixed (layer by layer) so a given (spec, seed) pair
    always produces the same parameters.
    """
    rng = np.random.default_rng(seed)
    ws = spec.widths
    weights, biases = [], []
    for i in range(spec.n_layers):
        fan_in = ws[i]
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.standard_normal((ws[i + 1], ws[i])) * scale)
        biases.append(np.zeros(ws[i + 1]))
    return DenseNet(spec, weights, biases)


def forward(net: DenseNet, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch of rows.

    Parameters
    ----------
    batch : ndarray of shape (n, input_dim)

    Returns
    -------
    output : ndarray of shape (n, output_dim)
    cache : ForwardCache
        Everything backward() needs; holding on to it is only required
        when gradients are wanted.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.spec.input_dim:
        raise ValueError(
            f"batch has shape {batch.shape}, expected (n, {net.spec.input_dim})"
        )
    activations = [batch]
    pre_activations = []
    a = batch
    for i in range(net.spec.n_layers - 1):
        z = a @ net.weights[i].T + net.biases[i]
        a = np.maximum(z, 0.0)
        pre_activations.append(z)
        activations.append(a)
    out = a @ net.weights[-1].T + net.biases[-1]
    return out, ForwardCache(activations, pre_activations, net.spec.n_layers)


def backward(net: DenseNet, cache: ForwardCache, upstream: np.ndarray) -> GradientBundle:
    """Gradients of sum_rows <upstream, output> via reverse mode.

    ``upstream`` has one row per batch row; the implied scalar loss is
    the sum over the batch of the inner product with the network output.
    The ReLU subgradient at exactly zero is taken to be zero.
    """
    if cache.n_layers != net.spec.n_layers:
        raise ValueError("cache does not match network (layer count differs)")
    upstream = np.asarray(upstream, dtype=np.float64)
    n = cache.activations[0].shape[0]
    if upstream.shape != (n, net.spec.output_dim):
        raise ValueError(
            f"upstream has shape {upstream.shape}, expected ({n}, {net.spec.output_dim})"
        )
    for i, a in enumerate(cache.activations):
        if a.shape != (n, net.spec.widths[i]):
            raise ValueError("cache does not match network (activation shapes differ)")

    L = net.spec.n_layers
    d_weights: list[np.ndarray] = [np.empty(0)] * L
    d_biases: list[np.ndarray] = [np.empty(0)] * L
    delta = upstream
    for layer in range(L - 1, -1, -1):
        a_prev = cache.activations[layer]
        d_weights[layer] = delta.T @ a_prev
        d_biases[layer] = delta.sum(axis=0)
        delta = delta @ net.weights[layer]
        if layer > 0:
            delta = delta * (cache.pre_activations[layer - 1] > 0)
    return GradientBundle(d_weights, d_biases, delta)


# ---------------------------------------------------------------------------
# Parameter flattening.  Order is fixed and shared by the optimizer and the
# checkpoint format: for each layer, weights row-major, then biases.

def flatten_params(net: DenseNet) -> np.ndarray:
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def set_params(net: DenseNet, flat: np.ndarray) -> None:
    """Write a flat parameter vector back into the network arrays."""
    if flat.shape != (net.spec.param_count,):
        raise ValueError(
            f"flat parameter vector has shape {flat.shape}, expected ({net.spec.param_count},)"
        )
    pos = 0
    for w, b in zip(net.weights, net.biases):
        w[...] = flat[pos:pos + w.size].reshape(w.shape)
        pos += w.size
        b[...] = flat[pos:pos + b.size]
        pos += b.size


def flatten_grads(grads: GradientBundle) -> np.ndarray:
    parts = []
    for dw, db in zip(grads.d_weights, grads.d_biases):
        parts.append(dw.ravel())
        parts.append(db)
    return np.concatenate(parts)


@dataclass
class AdamState:
    """First/second moment accumulators for one network's parameters."""

    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def init_adam(
    spec: NetworkSpec,
    lr: float = 1e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    n = spec.param_count
    return AdamState(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(state: AdamState, net: DenseNet, grads: GradientBundle) -> tuple[AdamState, DenseNet]:
    """One bias-corrected Adam update, mutating state and net in place.

    Raises OptimizerError (carrying the step index) if any gradient
    entry is non-finite; the state is left untouched in that case.
    """
    g = flatten_grads(grads)
    if g.shape != state.m.shape:
        raise ValueError(f"gradient size {g.shape} does not match state {state.m.shape}")
    if not np.all(np.isfinite(g)):
        raise OptimizerError("non-finite gradient entries", step=state.t + 1)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    theta = flatten_params(net)
    theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    set_params(net, theta)
    return state, net


# ---------------------------------------------------------------------------
# Checkpoints.  JSON keeps floats at full precision (shortest round-trip
# repr), so save -> load reproduces parameters bit for bit.

def checkpoint_record(net: DenseNet, seed: int = 0, step: int = 0) -> dict:
    return {
        "spec": {
            "input_dim": net.spec.input_dim,
            "hidden_widths": list(net.spec.hidden_widths),
            "output_dim": net.spec.output_dim,
            "output_activation": net.spec.output_activation,
        },
        "params": [float(x) for x in flatten_params(net)],
        "seed": int(seed),
        "step": int(step),
    }


def network_from_record(record: dict) -> tuple[DenseNet, int, int]:
    s = record["spec"]
    spec = NetworkSpec(
        input_dim=int(s["input_dim"]),
        hidden_widths=tuple(s["hidden_widths"]),
        output_dim=int(s["output_dim"]),
        output_activation=s.get("output_activation", "identity"),
    )
    flat = np.asarray(record["params"], dtype=np.float64)
    net = init_network(spec, seed=0)
    set_params(net, flat)
    return net, int(record["seed"]), int(record["step"])


def save_checkpoint(net: DenseNet, path: str, seed: int = 0, step: int = 0) -> None:
    """Write a checkpoint atomically (temp file + rename)."""
    record = checkpoint_record(net, seed=seed, step=step)
    atomic_write_text(path, json.dumps(record))


def load_checkpoint(path: str) -> tuple[DenseNet, int, int]:
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_record(json.load(fh))

