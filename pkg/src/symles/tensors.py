"""Velocity-gradient algebra: strain/rotation split, invariants, tensor basis.

All functions are vectorized over leading axes, so a whole grid of 3x3
velocity-gradient tensors (shape (..., 3, 3)) is processed in one call.
The five scalar invariants and the eight basis tensors follow the minimal
complete set for isotropic tensor functions of (S, W); together they let a
pointwise closure be assembled that is equivariant under every orthogonal
conjugation regardless of how the scalar coefficients are produced.
"""

from __future__ import annotations

import numpy as np

#: Frobenius norms below this are treated as an exactly-zero gradient.
TINY_NORM = 1e-300


def split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strain-rate S = (A + A^T)/2 and rotation-rate W = (A - A^T)/2."""
    at = np.swapaxes(a, -1, -2)
    return (a + at) / 2.0, (a - at) / 2.0


def invariants(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """The five invariants (tr S^2, tr W^2, tr S^3, tr S W^2, tr S^2 W^2).

    Returned stacked on a new trailing axis of length 5.
    """
    s2 = s @ s
    w2 = w @ w
    tr = lambda m: np.trace(m, axis1=-2, axis2=-1)
    return np.stack(
        [tr(s2), tr(w2), tr(s2 @ s), tr(s @ w2), tr(s2 @ w2)], axis=-1
    )


def basis(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """The eight basis tensors T^(0..7), stacked on axis -3.

    T0 = I, T1 = S, T2 = S^2, T3 = W^2, T4 = SW - WS, T5 = WSW,
    T6 = S^2 W - W S^2, T7 = W S W^2 - W^2 S W.  All are symmetric.
    """
    s2 = s @ s
    w2 = w @ w
    sw = s @ w
    ws = w @ s
    eye = np.broadcast_to(np.eye(3), s.shape)
    tensors = [
        eye,
        s,
        s2,
        w2,
        sw - ws,
        ws @ w,
        s2 @ w - w @ s2,
        ws @ w2 - w2 @ sw,
    ]
    return np.stack(tensors, axis=-3)


def deviatoric(sigma: np.ndarray) -> np.ndarray:
    """Trace-free part sigma - tr(sigma) I / 3."""
    tr = np.trace(sigma, axis1=-2, axis2=-1)
    out = sigma.copy()
    idx = np.arange(3)
    out[..., idx, idx] -= tr[..., None] / 3.0
    return out


def frobenius_norm(a: np.ndarray) -> np.ndarray:
    """Pointwise Frobenius norm over the trailing 3x3 axes."""
    return np.sqrt(np.einsum("...ij,...ij->...", a, a))


def normalized_gradient(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """A / ||A||_F with a zero-safe guard; returns (A*, ||A||_F).

    Points with ||A||_F below :data:`TINY_NORM` get A* = 0; the closures
    multiply by ||A||_F^2 afterwards so their output vanishes there anyway.
    """
    norm = frobenius_norm(a)
    safe = np.where(norm > TINY_NORM, norm, 1.0)
    a_star = np.where(
        (norm > TINY_NORM)[..., None, None], a / safe[..., None, None], 0.0
    )
    return a_star, norm


def tbnn_stress(a: np.ndarray, delta: float, alpha: np.ndarray) -> np.ndarray:
    """Assemble the tensor-basis stress from coefficients alpha.

    m = Delta^2 ||A||_F^2 sum_{k=1..7} alpha_k T^(k),dev(A*), where invariants
    and basis tensors are evaluated on the normalized gradient A* = A/||A||_F
    and the identity tensor is omitted (its deviatoric part vanishes).
    ``alpha`` has shape (..., 7) matching the leading axes of ``a``.
    """
    if delta <= 0:
        raise ValueError("filter width must be positive")
    a_star, norm = normalized_gradient(a)
    s, w = split(a_star)
    t_dev = deviatoric(basis(s, w))[..., 1:, :, :]  # drop T0
    prefactor = delta**2 * norm**2
    return prefactor[..., None, None] * np.einsum(
        "...k,...kij->...ij", alpha, t_dev
    )
