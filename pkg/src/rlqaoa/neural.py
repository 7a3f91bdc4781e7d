"""Small dense networks in numpy: tanh MLP, exact backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    """Fully connected net with tanh hidden layers and a linear output layer.

    ``weights[k]`` has shape ``(sizes[k], sizes[k+1])``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} incompatible with bias {b.shape}")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: input size {w.shape[0]} != previous output {self.weights[k - 1].shape[1]}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (w0, b0, w1, b1, ...), shared with the net."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> Mlp:
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x):
        return mlp_forward(self, x)


def mlp_init(sizes, rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 3:
        raise ValueError(f"need at least one hidden layer, got sizes {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def _forward_cache(net: Mlp, x: np.ndarray):
    if x.shape[-1] != net.sizes[0]:
        raise ValueError(f"input size {x.shape[-1]} does not match network input {net.sizes[0]}")
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if k < last:
            h = np.tanh(h)
        acts.append(h)
    return acts


def mlp_forward(net: Mlp, x) -> np.ndarray:
    """Apply the net to one input vector or a batch of row vectors."""
    return _forward_cache(net, np.asarray(x, dtype=np.float64))[-1]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def mlp_backward(net: Mlp, x, upstream) -> Gradients:
    """Reverse-mode gradients of ``sum(upstream * net(x))``.

    For a batch the parameter gradients are summed over rows.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    acts = _forward_cache(net, x)
    if g.shape != acts[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
    single = x.ndim == 1
    if single:
        acts = [a[None, :] for a in acts]
        g = g[None, :]
    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        gw[k] = acts[k].T @ g
        gb[k] = g.sum(axis=0)
        g = g @ net.weights[k].T
        if k > 0:
            g = g * (1.0 - acts[k] ** 2)  # acts[k] is tanh output of layer k-1
    return Gradients(gw, gb, g[0] if single else g)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(lr, beta1, beta2, eps, 0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params, grads):
    """Bias-corrected Adam descent step ``p -= lr * m_hat / (sqrt(v_hat) + eps)``, in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and moments must align")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
