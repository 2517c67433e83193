"""Small dense and group-convolutional networks with hand-written backprop.

Everything is numpy: forward passes return caches, backward passes return
parameter-gradient dicts keyed like the parameter dicts, and the Adam
optimizer updates those dicts in place.  The group-convolutional network
stores only free parameters theta per channel pair; materialized weights
are expand(shared_basis, theta), so every update stays exactly inside the
equivariant subspace and gradients reach theta through the (linear)
expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import projection
from .projection import LayerKind


def relu(x):
    return np.maximum(x, 0.0)


class MLP:
    """Plain fully connected network, relu hidden layers, linear output."""

    def __init__(self, sizes, rng=None, params=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.params: dict[str, np.ndarray] = {}
        if params is not None:
            self.params = params
            return
        if rng is None:
            rng = np.random.default_rng(0)
        for layer, (fan_in, fan_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            self.params[f"w{layer}"] = rng.uniform(-bound, bound, (fan_out, fan_in))
            self.params[f"b{layer}"] = np.zeros(fan_out)

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def forward(self, x):
        """x: (n, sizes[0]) -> (output (n, sizes[-1]), cache)."""
        cache = [x]
        out = x
        for layer in range(self.n_layers):
            pre = out @ self.params[f"w{layer}"].T + self.params[f"b{layer}"]
            out = relu(pre) if layer < self.n_layers - 1 else pre
            cache.append(out)
        return out, cache

    def backward(self, d_out, cache):
        """Gradient dict for d(loss)/d(output) = d_out; returns (grads, d_in)."""
        grads = {}
        delta = d_out
        for layer in range(self.n_layers - 1, -1, -1):
            post = cache[layer + 1]
            if layer < self.n_layers - 1:
                delta = delta * (post > 0)
            x_in = cache[layer]
            grads[f"w{layer}"] = delta.T @ x_in
            grads[f"b{layer}"] = delta.sum(axis=0)
            delta = delta @ self.params[f"w{layer}"]
        return grads, delta

    def __call__(self, x):
        return self.forward(x)[0]

    def parameter_count(self):
        return sum(p.size for p in self.params.values())


class GConvNet:
    """Octahedral group-convolutional network on flattened 3x3 tensors.

    Architecture: one lifting layer (tensor -> `channels` regular vectors,
    relu, per-channel bias), `n_inner` inner layers (relu, per-channel
    bias), one final layer back to a flattened tensor (no bias, no
    activation).  Parameters are the free coordinates theta of each layer's
    shared basis.
    """

    def __init__(self, channels=16, n_inner=1, rng=None, params=None):
        self.channels = int(channels)
        self.n_inner = int(n_inner)
        self._basis = {kind: projection.shared_basis(kind) for kind in LayerKind}
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            c = self.channels
            lift_bound = 1.0 / np.sqrt(9.0)
            self.params = {
                "lift_theta": rng.uniform(-lift_bound, lift_bound, (c, 9)),
                "lift_bias": np.zeros(c),
            }
            bound = 1.0 / np.sqrt(48.0 * c)
            for layer in range(self.n_inner):
                self.params[f"inner{layer}_theta"] = rng.uniform(
                    -bound, bound, (c, c, 48)
                )
                self.params[f"inner{layer}_bias"] = np.zeros(c)
            self.params["final_theta"] = rng.uniform(-bound, bound, (c, 9))

    def materialize(self):
        """Expand free parameters into dense (block) weight matrices."""
        c = self.channels
        lift_basis = self._basis[LayerKind.LIFT].matrix
        inner_basis = self._basis[LayerKind.INNER].matrix
        final_basis = self._basis[LayerKind.FINAL].matrix
        w_lift = (self.params["lift_theta"] @ lift_basis.T).reshape(c, 48, 9)
        w_inner = []
        for layer in range(self.n_inner):
            blocks = (self.params[f"inner{layer}_theta"] @ inner_basis.T).reshape(
                c, c, 48, 48
            )
            w_inner.append(blocks.transpose(0, 2, 1, 3).reshape(48 * c, 48 * c))
        w_final = (self.params["final_theta"] @ final_basis.T).reshape(c, 9, 48)
        return w_lift, w_inner, w_final

    def forward(self, x):
        """x: (n, 9) flattened tensors -> ((n, 9) outputs, cache)."""
        n = x.shape[0]
        c = self.channels
        w_lift, w_inner, w_final = self.materialize()
        pre = x @ w_lift.reshape(c * 48, 9).T + np.repeat(
            self.params["lift_bias"], 48
        )
        h = relu(pre)
        hidden = [h]
        for layer in range(self.n_inner):
            pre = h @ w_inner[layer].T + np.repeat(
                self.params[f"inner{layer}_bias"], 48
            )
            h = relu(pre)
            hidden.append(h)
        wf_flat = w_final.transpose(1, 0, 2).reshape(9, c * 48)
        out = h @ wf_flat.T
        cache = (x, hidden, w_inner, wf_flat)
        return out, cache

    def backward(self, d_out, cache):
        """Free-parameter gradients for d(loss)/d(output) = d_out."""
        x, hidden, w_inner, wf_flat = cache
        c = self.channels
        lift_basis = self._basis[LayerKind.LIFT].matrix
        inner_basis = self._basis[LayerKind.INNER].matrix
        final_basis = self._basis[LayerKind.FINAL].matrix
        grads = {}

        d_wf_flat = d_out.T @ hidden[-1]  # (9, c*48)
        d_wf = d_wf_flat.reshape(9, c, 48).transpose(1, 0, 2).reshape(c, 9 * 48)
        grads["final_theta"] = d_wf @ final_basis
        delta = d_out @ wf_flat  # (n, c*48)

        for layer in range(self.n_inner - 1, -1, -1):
            delta = delta * (hidden[layer + 1] > 0)
            grads[f"inner{layer}_bias"] = (
                delta.sum(axis=0).reshape(c, 48).sum(axis=1)
            )
            d_big = delta.T @ hidden[layer]  # (48c, 48c)
            d_blocks = d_big.reshape(c, 48, c, 48).transpose(0, 2, 1, 3).reshape(
                c, c, 48 * 48
            )
            grads[f"inner{layer}_theta"] = d_blocks @ inner_basis
            delta = delta @ w_inner[layer]

        delta = delta * (hidden[0] > 0)
        grads["lift_bias"] = delta.sum(axis=0).reshape(c, 48).sum(axis=1)
        d_wl = (delta.T @ x).reshape(c, 48 * 9)
        grads["lift_theta"] = d_wl @ lift_basis
        return grads

    def __call__(self, x):
        return self.forward(x)[0]

    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    def max_commutation_error(self):
        """Worst materialized-weight equivariance violation (diagnostic)."""
        w_lift, w_inner, w_final = self.materialize()
        worst = 0.0
        for block in w_lift:
            worst = max(worst, projection.commutation_error(LayerKind.LIFT, block))
        for mat in w_inner:
            c = self.channels
            blocks = mat.reshape(c, 48, c, 48)
            for i in range(c):
                for j in range(c):
                    worst = max(
                        worst,
                        projection.commutation_error(
                            LayerKind.INNER, blocks[i, :, j, :]
                        ),
                    )
        for block in w_final:
            worst = max(worst, projection.commutation_error(LayerKind.FINAL, block))
        return worst


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class Adam:
    """Bias-corrected Adam on parameter dicts."""

    config: AdamConfig = field(default_factory=AdamConfig)
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        cfg = self.config
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for key, p in params.items():
            g = grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            self.m[key] = cfg.beta1 * self.m[key] + (1.0 - cfg.beta1) * g
            self.v[key] = cfg.beta2 * self.v[key] + (1.0 - cfg.beta2) * (g * g)
            m_hat = self.m[key] / bc1
            v_hat = self.v[key] / bc2
            p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
