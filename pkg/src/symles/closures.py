"""The six LES closure models, the training loop, and model persistence.

Every closure maps pointwise velocity-gradient samples (shape (..., 3, 3))
to a symmetric deviatoric stress (same shape).  The data-driven models share
the prefactor Delta^2 ||A||_F^2 and operate on the normalized gradient
A/||A||_F, which enforces scaling invariance and makes the output vanish
where the gradient vanishes.  Training minimizes the mean relative squared
Frobenius error of the predicted stress against the stored discrete SFS,
with gradients backpropagated through the pointwise networks, the
tensor-basis assembly, and the shared-basis expansion.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import filtering, nn, spectral, tensors
from .spectral import Grid

SMAGORINSKY_CS = 0.17

#: default architectures, sized to roughly match the three models'
#: trainable-parameter budgets (~12-14k each)
TBNN_SIZES = (5, 64, 64, 64, 64, 7)
CONV_SIZES = (9, 103, 103, 6)
GCONV_CHANNELS = 16
GCONV_INNER_LAYERS = 1

MODEL_NAMES = ("nomodel", "smag", "clark", "tbnn", "gconv", "conv")
_VARIANT_TAGS = {name: tag for tag, name in enumerate(MODEL_NAMES)}

_DIAG = np.arange(3)


def _sym6_from_outputs(out6):
    """(n, 6) network outputs (11,22,33,12,13,23) -> (n, 3, 3) symmetric."""
    m = np.empty(out6.shape[:-1] + (3, 3))
    for c, (i, j) in enumerate(spectral.SYM_PAIRS):
        m[..., i, j] = out6[..., c]
        m[..., j, i] = out6[..., c]
    return m


def _outputs_from_sym_grad(d_m):
    """Adjoint of `_sym6_from_outputs`: off-diagonal slots collect both entries."""
    out = np.empty(d_m.shape[:-2] + (6,))
    for c, (i, j) in enumerate(spectral.SYM_PAIRS):
        out[..., c] = d_m[..., i, j] if i == j else d_m[..., i, j] + d_m[..., j, i]
    return out


class NoModel:
    name = "nomodel"
    trainable = False

    def stress(self, a, delta):
        return np.zeros_like(a)

    def parameter_count(self):
        return 0


class Smagorinsky:
    """m = -2 (C_s Delta)^2 |S| S with |S| = sqrt(2 S_ij S_ij)."""

    name = "smag"
    trainable = False

    def __init__(self, cs: float = SMAGORINSKY_CS):
        self.cs = float(cs)

    def stress(self, a, delta):
        s = (a + np.swapaxes(a, -1, -2)) / 2.0
        s_mag = np.sqrt(2.0 * np.einsum("...ij,...ij->...", s, s))
        return -2.0 * (self.cs * delta) ** 2 * s_mag[..., None, None] * s

    def parameter_count(self):
        return 1


class Clark:
    """Gradient model m = Delta^2 / 12 A A^T, stored deviatoric."""

    name = "clark"
    trainable = False

    def stress(self, a, delta):
        raw = delta**2 / 12.0 * (a @ np.swapaxes(a, -1, -2))
        return tensors.deviatoric(raw)

    def parameter_count(self):
        return 0


class TBNNClosure:
    """Tensor-basis network: invariants -> 7 coefficients -> basis stress."""

    name = "tbnn"
    trainable = True

    def __init__(self, mlp: nn.MLP | None = None, seed: int = 0):
        self.mlp = mlp or nn.MLP(TBNN_SIZES, rng=np.random.default_rng(seed))
        self.params = self.mlp.params

    def features(self, a):
        """(lambda (n,5), deviatoric basis tensors (n,7,3,3), prefactor (n,))."""
        a_star, norm = tensors.normalized_gradient(a)
        s, w = tensors.split(a_star)
        lam = tensors.invariants(s, w)
        t_dev = tensors.deviatoric(tensors.basis(s, w))[..., 1:, :, :]
        return lam, t_dev, norm**2

    def stress(self, a, delta):
        lam, t_dev, norm_sq = self.features(a)
        alpha = self.mlp(lam.reshape(-1, 5)).reshape(lam.shape[:-1] + (7,))
        pref = delta**2 * norm_sq
        return pref[..., None, None] * np.einsum("...k,...kij->...ij", alpha, t_dev)

    def parameter_count(self):
        return self.mlp.parameter_count()


class ConvClosure:
    """Unconstrained pointwise network from the 9 gradient entries."""

    name = "conv"
    trainable = True

    def __init__(self, mlp: nn.MLP | None = None, seed: int = 0):
        self.mlp = mlp or nn.MLP(CONV_SIZES, rng=np.random.default_rng(seed))
        self.params = self.mlp.params

    def features(self, a):
        a_star, norm = tensors.normalized_gradient(a)
        return a_star.reshape(a.shape[:-2] + (9,)), norm**2

    def stress(self, a, delta):
        x, norm_sq = self.features(a)
        out6 = self.mlp(x.reshape(-1, 9)).reshape(a.shape[:-2] + (6,))
        m = tensors.deviatoric(_sym6_from_outputs(out6))
        return (delta**2 * norm_sq)[..., None, None] * m

    def parameter_count(self):
        return self.mlp.parameter_count()


class GConvClosure:
    """Group-convolutional pointwise network (lift / inner / final)."""

    name = "gconv"
    trainable = True

    def __init__(self, net: nn.GConvNet | None = None, seed: int = 0):
        self.net = net or nn.GConvNet(
            channels=GCONV_CHANNELS,
            n_inner=GCONV_INNER_LAYERS,
            rng=np.random.default_rng(seed),
        )
        self.params = self.net.params

    def features(self, a):
        a_star, norm = tensors.normalized_gradient(a)
        return a_star.reshape(a.shape[:-2] + (9,)), norm**2

    def stress(self, a, delta):
        x, norm_sq = self.features(a)
        out9 = self.net(x.reshape(-1, 9)).reshape(a.shape[:-2] + (3, 3))
        m = tensors.deviatoric((out9 + np.swapaxes(out9, -1, -2)) / 2.0)
        return (delta**2 * norm_sq)[..., None, None] * m

    def parameter_count(self):
        return self.net.parameter_count()


def make_closure(name: str, seed: int = 0):
    """Instantiate a closure by CLI name."""
    table = {
        "nomodel": NoModel,
        "smag": Smagorinsky,
        "clark": Clark,
        "tbnn": lambda: TBNNClosure(seed=seed),
        "gconv": lambda: GConvClosure(seed=seed),
        "conv": lambda: ConvClosure(seed=seed),
    }
    if name not in table:
        raise ValueError(f"unknown model '{name}' (choose from {MODEL_NAMES})")
    return table[name]()


def stress_field(closure, u_hat: np.ndarray, grid: Grid, delta: float) -> np.ndarray:
    """Pointwise closure applied to a spectral velocity; (n, n, n, 3, 3)."""
    a = spectral.vgt_field(u_hat, grid)
    return closure.stress(a, delta)


def les_closure_term(closure, grid: Grid, delta: float, dealias: bool = True):
    """Callback producing the six-component spectral model stress for the rhs."""
    if isinstance(closure, NoModel):
        return None

    def term(u_hat):
        m = stress_field(closure, u_hat, grid, delta)
        m_hat = grid.forward(spectral.full_to_sym6(m))
        if dealias:
            m_hat *= grid.dealias_mask
        return m_hat

    return term


# ----------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 5          # per-epoch pass over all mini-batches
    batch_size: int = 10     # snapshots per mini-batch
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self):
        if min(self.epochs, self.batch_size) < 1:
            raise ValueError("epochs and batch size must be positive")
        if min(self.learning_rate, self.beta1, self.beta2, self.eps) <= 0:
            raise ValueError("optimizer hyperparameters must be positive")


@dataclass
class Sample:
    """Per-snapshot arrays cached for training."""

    features: tuple
    tau: np.ndarray       # (npts, 3, 3)
    tau_norm_sq: float    # full-tensor squared Frobenius norm over the grid


def prepare_sample(closure, pair: filtering.SnapshotPair, grid: Grid) -> Sample:
    a = spectral.vgt_field(pair.u_bar, grid).reshape(-1, 3, 3)
    tau = spectral.sym6_to_full(pair.tau_dev).reshape(-1, 3, 3)
    tau_norm_sq = float(np.sum(tau * tau))
    if tau_norm_sq == 0.0:
        raise ValueError("snapshot has zero-norm SFS; relative loss undefined")
    return Sample(features=closure.features(a), tau=tau, tau_norm_sq=tau_norm_sq)


def _forward_backward(closure, sample: Sample, delta: float, weight: float):
    """One snapshot's loss contribution and parameter gradients."""
    if isinstance(closure, TBNNClosure):
        lam, t_dev, norm_sq = sample.features
        alpha, cache = closure.mlp.forward(lam)
        pref = (delta**2 * norm_sq)[:, None, None]
        m = pref * np.einsum("nk,nkij->nij", alpha, t_dev)
        err = m - sample.tau
        loss = float(np.sum(err * err)) / sample.tau_norm_sq
        d_m = (2.0 * weight / sample.tau_norm_sq) * err
        d_alpha = np.einsum("nij,nkij->nk", pref * d_m, t_dev)
        grads, _ = closure.mlp.backward(d_alpha, cache)
        return loss, grads

    if isinstance(closure, ConvClosure):
        x, norm_sq = sample.features
        out6, cache = closure.mlp.forward(x)
        pref = (delta**2 * norm_sq)[:, None, None]
        m = pref * tensors.deviatoric(_sym6_from_outputs(out6))
        err = m - sample.tau
        loss = float(np.sum(err * err)) / sample.tau_norm_sq
        d_m = (2.0 * weight / sample.tau_norm_sq) * err * pref
        d_out6 = _outputs_from_sym_grad(tensors.deviatoric(d_m))
        grads, _ = closure.mlp.backward(d_out6, cache)
        return loss, grads

    if isinstance(closure, GConvClosure):
        x, norm_sq = sample.features
        out9, cache = closure.net.forward(x)
        pref = (delta**2 * norm_sq)[:, None, None]
        raw = out9.reshape(-1, 3, 3)
        m = pref * tensors.deviatoric((raw + np.swapaxes(raw, -1, -2)) / 2.0)
        err = m - sample.tau
        loss = float(np.sum(err * err)) / sample.tau_norm_sq
        d_m = (2.0 * weight / sample.tau_norm_sq) * err * pref
        # deviatoric and symmetrization are self-adjoint
        d_raw = tensors.deviatoric((d_m + np.swapaxes(d_m, -1, -2)) / 2.0)
        grads = closure.net.backward(d_raw.reshape(-1, 9), cache)
        return loss, grads

    raise TypeError(f"{type(closure).__name__} is not trainable")


def loss(closure, pairs, grid: Grid, delta: float) -> float:
    """Mean relative squared Frobenius error over a batch of snapshot pairs."""
    if not pairs:
        raise ValueError("empty batch")
    total = 0.0
    for pair in pairs:
        a = spectral.vgt_field(pair.u_bar, grid).reshape(-1, 3, 3)
        tau = spectral.sym6_to_full(pair.tau_dev).reshape(-1, 3, 3)
        tau_norm_sq = float(np.sum(tau * tau))
        if tau_norm_sq == 0.0:
            raise ValueError("snapshot has zero-norm SFS; relative loss undefined")
        err = closure.stress(a, delta) - tau
        total += float(np.sum(err * err)) / tau_norm_sq
    return total / len(pairs)


def batch_loss_and_grads(closure, samples, delta: float):
    """Mini-batch loss and summed parameter gradients."""
    n = len(samples)
    grads = None
    total = 0.0
    for sample in samples:
        value, g = _forward_backward(closure, sample, delta, weight=1.0 / n)
        total += value / n
        if grads is None:
            grads = g
        else:
            for key in grads:
                grads[key] += g[key]
    return total, grads


def train(closure, train_pairs, grid: Grid, delta: float, config: TrainConfig):
    """Mini-batch Adam training; returns history rows (epoch, batch, loss)."""
    config.validate()
    if not closure.trainable:
        raise TypeError(f"model '{closure.name}' has no trainable parameters")
    samples = [prepare_sample(closure, p, grid) for p in train_pairs]
    if not samples:
        raise ValueError("no training data")
    optimizer = nn.Adam(
        nn.AdamConfig(
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
        )
    )
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        for batch_idx, start in enumerate(range(0, len(samples), config.batch_size)):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            value, grads = batch_loss_and_grads(closure, batch, delta)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {batch_idx}"
                )
            optimizer.step(closure.params, grads)
            history.append((epoch, batch_idx, value))
    return history


# ------------------------------------------------------------- persistence

_MAGIC = b"SGSNET01"
_KIND_DENSE, _KIND_LIFT, _KIND_INNER, _KIND_FINAL = range(4)


def _layer_records(closure):
    if isinstance(closure, (TBNNClosure, ConvClosure)):
        mlp = closure.mlp
        records = []
        for layer in range(mlp.n_layers):
            w = mlp.params[f"w{layer}"]
            records.append((_KIND_DENSE, w.shape, (0, 0)))
        return records
    if isinstance(closure, GConvClosure):
        net = closure.net
        c = net.channels
        records = [(_KIND_LIFT, (48, 9), (c, 1))]
        records += [(_KIND_INNER, (48, 48), (c, c))] * net.n_inner
        records.append((_KIND_FINAL, (9, 48), (1, c)))
        return records
    return []


def _param_arrays(closure):
    """Parameter arrays in declaration order (weights then bias per layer)."""
    if isinstance(closure, (TBNNClosure, ConvClosure)):
        out = []
        for layer in range(closure.mlp.n_layers):
            out.append(closure.mlp.params[f"w{layer}"])
            out.append(closure.mlp.params[f"b{layer}"])
        return out
    if isinstance(closure, GConvClosure):
        net = closure.net
        out = [net.params["lift_theta"], net.params["lift_bias"]]
        for layer in range(net.n_inner):
            out.append(net.params[f"inner{layer}_theta"])
            out.append(net.params[f"inner{layer}_bias"])
        out.append(net.params["final_theta"])
        return out
    if isinstance(closure, Smagorinsky):
        return [np.array([closure.cs])]
    return []


def save_model(path, closure) -> None:
    """Write a closure to the binary SGSNET01 container."""
    records = _layer_records(closure)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI", _VARIANT_TAGS[closure.name], len(records)))
        for kind, dims, chans in records:
            fh.write(struct.pack("<BIIII", kind, dims[0], dims[1], chans[0], chans[1]))
        for arr in _param_arrays(closure):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path):
    """Read a closure written by :func:`save_model`."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("bad model file magic")
        tag, n_layers = struct.unpack("<BI", fh.read(5))
        records = [struct.unpack("<BIIII", fh.read(17)) for _ in range(n_layers)]
        payload = fh.read()
    name = MODEL_NAMES[tag]
    values = np.frombuffer(payload, dtype="<f8")

    def take(shape):
        nonlocal values
        size = int(np.prod(shape))
        out, values = values[:size].reshape(shape).copy(), values[size:]
        return out

    if name in ("nomodel", "clark"):
        return make_closure(name)
    if name == "smag":
        return Smagorinsky(cs=float(take((1,))[0]))
    if name in ("tbnn", "conv"):
        params = {}
        sizes = [records[0][2]]
        for layer, (kind, out_dim, in_dim, _, _) in enumerate(records):
            if kind != _KIND_DENSE:
                raise ValueError("dense model file contains non-dense layers")
            params[f"w{layer}"] = take((out_dim, in_dim))
            params[f"b{layer}"] = take((out_dim,))
            sizes.append(out_dim)
        mlp = nn.MLP(sizes, params=params)
        return TBNNClosure(mlp=mlp) if name == "tbnn" else ConvClosure(mlp=mlp)
    if name == "gconv":
        c = records[0][3]
        n_inner = sum(1 for rec in records if rec[0] == _KIND_INNER)
        params = {"lift_theta": take((c, 9)), "lift_bias": take((c,))}
        for layer in range(n_inner):
            params[f"inner{layer}_theta"] = take((c, c, 48))
            params[f"inner{layer}_bias"] = take((c,))
        params["final_theta"] = take((c, 9))
        net = nn.GConvNet(channels=c, n_inner=n_inner, params=params)
        return GConvClosure(net=net)
    raise ValueError(f"unsupported model tag {tag}")
