"""Small dense networks and the Adam optimizer, built on the autodiff core."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import Rng

_ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "identity": lambda t: t,
}


class Mlp:
    """Fully connected net: x @ W + b per layer, activation between.

    Weights start at N(0, s^2) with s = sqrt(2/fan_in) when the hidden
    activation is relu and sqrt(1/fan_in) otherwise; biases start at zero.
    Initialization draws come from the supplied Rng in layer order,
    row-major within each weight matrix.
    """

    def __init__(self, sizes: list[int], rng: Rng,
                 hidden_activation: str = "relu",
                 output_activation: str = "identity",
                 name: str = "mlp"):
        if len(sizes) < 2:
            raise ValueError("Mlp needs at least input and output sizes")
        for act in (hidden_activation, output_activation):
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = list(sizes)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.name = name
        self.layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt((2.0 if hidden_activation == "relu" else 1.0)
                            / fan_in)
            w = rng.normals(fan_in * fan_out).reshape(fan_in, fan_out) * scale
            W = Tensor(w, trainable=True, name=f"{name}.l{i}.W")
            b = Tensor(np.zeros(fan_out), trainable=True, name=f"{name}.l{i}.b")
            self.layers.append((W, b))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            h = ad.add(ad.matmul(h, W), b)
            act = self.output_activation if i == last else self.hidden_activation
            h = _ACTIVATIONS[act](h)
        return h

    def parameters(self) -> list[Tensor]:
        out = []
        for W, b in self.layers:
            out.append(W)
            out.append(b)
        return out


class Adam:
    """Adam with bias correction: beta1=0.9, beta2=0.999, eps=1e-8.

    step() reads each parameter's .grad (None counts as zero), checks for
    NaN/Inf, and updates parameter values in place.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = 0.0
            elif not np.all(np.isfinite(g)):
                name = p.name or f"param[{i}]"
                raise FloatingPointError(f"non-finite gradient for {name}")
            m = self.m[i]
            v = self.v[i]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
