"""Equivariant weight projectors for the group-convolutional layers.

Three layer shapes appear in the network: a lifting layer mapping flattened
3x3 tensors (9 values) into 48-channel regular-representation vectors, inner
layers mapping regular vectors to regular vectors, and a final layer mapping
back to flattened tensors.  Averaging an arbitrary weight matrix over the
group,

    lift : w = 1/48 sum_g P_g^-1 w~ Q_g      (P_g w = w Q_g afterwards)
    inner: w = 1/48 sum_g P_g^-1 w~ P_g      (P_g w = w P_g)
    final: w = 1/48 sum_g Q_g^-1 w~ P_g      (Q_g w = w P_g)

yields the equivariant part of w~.  With the 1/48 normalization each
projector is symmetric idempotent, so its spectrum is {0, 1} and the unit
eigenvectors form an orthonormal basis of the equivariant weight space:
9 free parameters for lift and final layers, 48 for inner layers.  Training
happens directly in these compressed coordinates via :func:`expand`.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import octa

_MAGIC = b"EQBASIS1"


class LayerKind(enum.Enum):
    LIFT = 0
    INNER = 1
    FINAL = 2

    @property
    def shape(self) -> tuple[int, int]:
        """(out_dim, in_dim) of the materialized weight matrix."""
        return {
            LayerKind.LIFT: (48, 9),
            LayerKind.INNER: (48, 48),
            LayerKind.FINAL: (9, 48),
        }[self]

    @property
    def rank(self) -> int:
        """Number of free parameters (unit eigenvalues of the projector)."""
        return {LayerKind.LIFT: 9, LayerKind.INNER: 48, LayerKind.FINAL: 9}[self]


@lru_cache(maxsize=1)
def _group_data():
    group = octa.enumerate_group()
    perms = [octa.regular_rep(g) for g in group]
    qmats = [octa.tensor_rep(g) for g in group]
    return group, perms, qmats


def project_lift(w: np.ndarray) -> np.ndarray:
    """Group-average a 48x9 lifting weight; output satisfies P_g w = w Q_g."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (48, 9):
        raise ValueError("lift weight must be 48x9")
    _, perms, qmats = _group_data()
    # P_g^-1 w has rows permuted: (P_g^-1 w)[i] = w[pi_g[i]]
    return sum(w[pi] @ q for pi, q in zip(perms, qmats)) / 48.0


def project_inner(w: np.ndarray) -> np.ndarray:
    """Group-average a 48x48 inner weight; output commutes with every P_g."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (48, 48):
        raise ValueError("inner weight must be 48x48")
    _, perms, _ = _group_data()
    return sum(w[np.ix_(pi, pi)] for pi in perms) / 48.0


def project_final(w: np.ndarray) -> np.ndarray:
    """Group-average a 9x48 final weight; output satisfies Q_g w = w P_g."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (9, 48):
        raise ValueError("final weight must be 9x48")
    _, perms, qmats = _group_data()
    return sum(q.T @ w[:, pi] for pi, q in zip(perms, qmats)) / 48.0


def project(kind: LayerKind, w: np.ndarray) -> np.ndarray:
    return {
        LayerKind.LIFT: project_lift,
        LayerKind.INNER: project_inner,
        LayerKind.FINAL: project_final,
    }[kind](w)


def commutation_error(kind: LayerKind, w: np.ndarray) -> float:
    """max_g ||L_g w - w R_g||_F for the layer's commutation relation."""
    _, perms, qmats = _group_data()
    worst = 0.0
    for pi, q in zip(perms, qmats):
        if kind is LayerKind.LIFT:
            lhs, rhs = _permute_rows(w, pi), w @ q
        elif kind is LayerKind.INNER:
            lhs, rhs = _permute_rows(w, pi), w[:, pi]
        else:
            lhs, rhs = q @ w, w[:, pi]
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def _permute_rows(w: np.ndarray, pi: np.ndarray) -> np.ndarray:
    # P_g w with regular-rep permutation pi: row pi[j] of the result is row j
    out = np.empty_like(w)
    out[pi] = w
    return out


@lru_cache(maxsize=3)
def projector_matrix(kind: LayerKind) -> np.ndarray:
    """Dense matrix of the projector on row-major-flattened weights."""
    _, perms, qmats = _group_data()
    out_dim, in_dim = kind.shape
    dim = out_dim * in_dim
    acc = np.zeros((dim, dim))
    eye48 = np.eye(48)
    # row-major flattening: vec(A w B) = kron(A, B^T) vec(w)
    if kind is LayerKind.INNER:
        # kron(P^T, P^T) is a permutation: entry [(i,k), (pi[i], pi[k])] = 1
        rows_i = np.arange(48)[:, None]
        rows_k = np.arange(48)[None, :]
        view = acc.reshape(48, 48, 48, 48)
        for pi in perms:
            view[rows_i, rows_k, pi[rows_i], pi[rows_k]] += 1.0
    else:
        for pi, q in zip(perms, qmats):
            p_mat = eye48[:, pi]  # P_g: column j is e_{pi[j]}; P_g^-1 = P_g^T
            if kind is LayerKind.LIFT:
                acc += np.kron(p_mat.T, q.T)
            else:
                acc += np.kron(q.T, p_mat.T)
    return acc / 48.0


@dataclass(frozen=True)
class SharedBasis:
    """Orthonormal basis of the equivariant weight space for one layer kind."""

    kind: LayerKind
    matrix: np.ndarray  # (out_dim * in_dim, rank), orthonormal columns

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]


def _compute_basis(kind: LayerKind) -> SharedBasis:
    proj = projector_matrix(kind)
    eigvals, eigvecs = np.linalg.eigh(proj)
    near_one = eigvals > 0.5
    if not (
        np.all(np.abs(eigvals[near_one] - 1.0) <= 1e-8)
        and np.all(np.abs(eigvals[~near_one]) <= 1e-8)
    ):
        raise RuntimeError(f"{kind} projector spectrum is not bimodal {{0, 1}}")
    r = int(near_one.sum())
    if r != kind.rank:
        raise RuntimeError(f"{kind} projector rank {r}, expected {kind.rank}")
    return SharedBasis(kind=kind, matrix=np.ascontiguousarray(eigvecs[:, near_one]))


_BASES: dict[LayerKind, SharedBasis] = {}


def shared_basis(kind: LayerKind) -> SharedBasis:
    """Basis of unit-eigenvalue eigenvectors (computed once, then cached)."""
    if kind not in _BASES:
        _BASES[kind] = _compute_basis(kind)
    return _BASES[kind]


def expand(basis: SharedBasis, theta: np.ndarray) -> np.ndarray:
    """Materialize an equivariant weight matrix from free parameters."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (basis.rank,):
        raise ValueError(f"theta must have length {basis.rank}")
    return (basis.matrix @ theta).reshape(basis.kind.shape)


def contract(basis: SharedBasis, w: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`expand`: free-parameter gradient from a weight gradient."""
    return basis.matrix.T @ np.asarray(w, dtype=np.float64).reshape(-1)


def save_bases(path, bases=None) -> None:
    """Write the three shared bases as consecutive EQBASIS1 records."""
    if bases is None:
        bases = [shared_basis(k) for k in LayerKind]
    with open(path, "wb") as fh:
        for basis in bases:
            rows, cols = basis.matrix.shape
            fh.write(_MAGIC)
            fh.write(struct.pack("<BII", basis.kind.value, rows, cols))
            fh.write(np.asfortranarray(basis.matrix).astype("<f8").tobytes(order="F"))


def load_bases(path) -> dict[LayerKind, SharedBasis]:
    """Read EQBASIS1 records; raises ValueError on malformed content."""
    out: dict[LayerKind, SharedBasis] = {}
    with open(path, "rb") as fh:
        while True:
            magic = fh.read(8)
            if not magic:
                break
            if magic != _MAGIC:
                raise ValueError("bad shared-basis cache magic")
            tag, rows, cols = struct.unpack("<BII", fh.read(9))
            kind = LayerKind(tag)
            payload = fh.read(8 * rows * cols)
            if len(payload) != 8 * rows * cols:
                raise ValueError("truncated shared-basis cache")
            mat = np.frombuffer(payload, dtype="<f8").reshape((rows, cols), order="F")
            out[kind] = SharedBasis(kind=kind, matrix=mat.copy())
    return out


def validate_basis(basis: SharedBasis, tol: float = 1e-10) -> None:
    """Check orthonormality and the commutation relation; raises on failure."""
    gram = basis.matrix.T @ basis.matrix
    if np.abs(gram - np.eye(basis.rank)).max() > tol:
        raise ValueError(f"{basis.kind} basis columns are not orthonormal")
    expected_shape = basis.kind.shape
    if basis.matrix.shape != (expected_shape[0] * expected_shape[1], basis.kind.rank):
        raise ValueError(f"{basis.kind} basis has wrong shape")
    for col in range(basis.rank):
        w = basis.matrix[:, col].reshape(expected_shape)
        if commutation_error(basis.kind, w) > 1e-12:
            raise ValueError(f"{basis.kind} basis column {col} is not equivariant")
