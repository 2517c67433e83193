"""The octahedral group of 48 signed permutations and its representations.

Every grid-compatible roto-reflection of a periodic cube is a signed
permutation matrix R = S P (diagonal sign flips times an axis permutation).
This module enumerates all 48 of them in a fixed flat ordering, provides
composition/inversion via an exact integer Cayley table, and implements the
group actions on vectors, 3x3 tensors, and sampled fields, plus the regular
(48-channel) and flattened-tensor (9x9) representations used by the
equivariant network layers.

Conventions: element k = i + 6*(j - 1) pairs permutation i in 1..6 with sign
pattern j in 1..8 ("column-major" flat ordering), so element 1 is the
identity and element 43 is the point reflection -I.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# The six axis permutations p (rows) and eight sign patterns s (rows).
# (R x)_i = s_i * x[p_i]; stored 0-based.
_PERMS = np.array(
    [[1, 2, 3], [2, 3, 1], [3, 1, 2], [3, 2, 1], [2, 1, 3], [1, 3, 2]],
    dtype=np.int64,
) - 1
_SIGNS = np.array(
    [
        [+1, +1, +1],
        [-1, +1, +1],
        [+1, -1, +1],
        [+1, +1, -1],
        [-1, -1, +1],
        [+1, -1, -1],
        [-1, +1, -1],
        [-1, -1, -1],
    ],
    dtype=np.int64,
)

GROUP_ORDER = 48
IDENTITY_INDEX = 1       # flat index of the identity element
POINT_REFLECTION_INDEX = 43  # flat index of -I


@dataclass(frozen=True)
class GroupElement:
    """One octahedral roto-reflection, identified by (perm, sign) indices."""

    perm_index: int  # 1..6
    sign_index: int  # 1..8

    def __post_init__(self):
        if not (1 <= self.perm_index <= 6 and 1 <= self.sign_index <= 8):
            raise ValueError(f"invalid group element indices {self}")

    @property
    def flat_index(self) -> int:
        """Flat label in 1..48 (column-major over perm then sign)."""
        return self.perm_index + 6 * (self.sign_index - 1)

    @property
    def perm(self) -> np.ndarray:
        """0-based axis permutation p with (R x)_i = s_i x[p_i]."""
        return _PERMS[self.perm_index - 1]

    @property
    def signs(self) -> np.ndarray:
        return _SIGNS[self.sign_index - 1]


def element(flat_index: int) -> GroupElement:
    """Group element for a flat label in 1..48."""
    if not 1 <= flat_index <= GROUP_ORDER:
        raise ValueError(f"flat index {flat_index} outside 1..48")
    j, i = divmod(flat_index - 1, 6)
    return GroupElement(perm_index=i + 1, sign_index=j + 1)


@lru_cache(maxsize=1)
def enumerate_group() -> tuple[GroupElement, ...]:
    """All 48 elements in flat order (element 1 = identity)."""
    return tuple(element(k) for k in range(1, GROUP_ORDER + 1))


def rotation_matrix(g: GroupElement) -> np.ndarray:
    """The 3x3 integer matrix R = S P of the element."""
    r = np.zeros((3, 3), dtype=np.int64)
    r[np.arange(3), g.perm] = g.signs
    return r


@lru_cache(maxsize=1)
def _matrix_lookup() -> dict[bytes, int]:
    return {
        rotation_matrix(g).tobytes(): g.flat_index for g in enumerate_group()
    }


def element_from_matrix(r: np.ndarray) -> GroupElement:
    """Find the unique element whose matrix equals ``r`` (exact match)."""
    key = np.asarray(r, dtype=np.int64).tobytes()
    try:
        return element(_matrix_lookup()[key])
    except KeyError:
        raise ValueError("matrix is not an octahedral signed permutation") from None


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """The element whose matrix is R_g R_h."""
    return element_from_matrix(rotation_matrix(g) @ rotation_matrix(h))


def inverse(g: GroupElement) -> GroupElement:
    """The element whose matrix is R_g^T."""
    return element_from_matrix(rotation_matrix(g).T)


@lru_cache(maxsize=1)
def cayley_table() -> np.ndarray:
    """48x48 table, table[i, j] = 0-based index of g_{i+1} * g_{j+1}."""
    group = enumerate_group()
    table = np.empty((GROUP_ORDER, GROUP_ORDER), dtype=np.int64)
    for a, g in enumerate(group):
        for b, h in enumerate(group):
            table[a, b] = compose(g, h).flat_index - 1
    return table


def regular_rep(g: GroupElement) -> np.ndarray:
    """Permutation pi of 0..47 with pi[j] = index of g * g_j.

    The matrix form rho(g) has rho[pi[j], j] = 1, i.e. channel j is sent to
    channel pi[j]; see :func:`regular_rep_matrix`.
    """
    return cayley_table()[g.flat_index - 1].copy()


def regular_rep_matrix(g: GroupElement) -> np.ndarray:
    """rho(g) as a dense 48x48 permutation matrix (rho_ij = delta[g_i, g g_j])."""
    pi = regular_rep(g)
    mat = np.zeros((GROUP_ORDER, GROUP_ORDER))
    mat[pi, np.arange(GROUP_ORDER)] = 1.0
    return mat


def tensor_rep(g: GroupElement) -> np.ndarray:
    """9x9 matrix Q_g with Q_g vec(sigma) = vec(R sigma R^T), row-major vec."""
    r = rotation_matrix(g)
    return np.kron(r, r).astype(np.float64)


def act_on_matrix(g: GroupElement, sigma: np.ndarray) -> np.ndarray:
    """Conjugate 3x3 tensors (trailing axes ...x3x3) by R_g: R sigma R^T."""
    r = rotation_matrix(g).astype(np.float64)
    return np.einsum("ia,...ab,jb->...ij", r, sigma, r)


def _source_indices(g: GroupElement, n: int) -> tuple[np.ndarray, ...]:
    # Target grid index m maps to source index (R^T m) mod n on each axis,
    # valid for both physical points x = m h and integer wavenumbers k = m mod n.
    rt = rotation_matrix(g).T
    idx = np.indices((n, n, n))
    src = np.tensordot(rt, idx, axes=1) % n
    return tuple(src)


def _act_on_grid(g: GroupElement, field: np.ndarray) -> np.ndarray:
    shape = field.shape
    if len(shape) < 3 or not (shape[-1] == shape[-2] == shape[-3]):
        raise ValueError("field must be cubic with trailing axes (n, n, n)")
    n = shape[-1]
    lead = shape[:-3]
    src = _source_indices(g, n)
    p, s = g.perm, g.signs.astype(field.real.dtype)
    if lead == ():
        return field[src]
    if lead == (3,):
        out = np.empty_like(field)
        for i in range(3):
            out[i] = s[i] * field[p[i]][src]
        return out
    if lead == (3, 3):
        out = np.empty_like(field)
        for i in range(3):
            for j in range(3):
                out[i, j] = (s[i] * s[j]) * field[p[i], p[j]][src]
        return out
    raise ValueError(f"unsupported field rank with leading shape {lead}")


def act_on_physical_field(g: GroupElement, field: np.ndarray) -> np.ndarray:
    """Apply g to a sampled field on the uniform periodic grid x_m = m L/n.

    Scalars transform as p(R^-1 x), vectors as R u(R^-1 x), and tensors as
    R sigma(R^-1 x) R^T.  Leading shape selects the rank: (), (3,) or (3, 3).
    """
    return _act_on_grid(g, field)


def act_on_spectral_field(g: GroupElement, coeffs: np.ndarray) -> np.ndarray:
    """Apply g to Fourier coefficients: u'(k) = R u(R^T k) (and tensor analogue).

    For signed permutations the wavenumber remap is an exact integer gather,
    so this agrees with transforming in physical space to round-off.
    """
    return _act_on_grid(g, coeffs)
