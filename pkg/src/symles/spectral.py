"""Pseudo-spectral machinery for a triply periodic box.

Velocity fields are stored as full complex Fourier coefficient arrays of
shape (3, n, n, n) in standard FFT mode order, with the Fourier-series
normalization (a physical cos(2 pi x1 / L) has coefficients 1/2 at
k = (+-1, 0, 0)).  The full complex layout keeps the 48 octahedral
wavenumber remaps trivial; desk-scale grids make the extra memory cheap.

The nonlinear term uses the 2/3 rule: velocities are truncated at
||k||_inf < n/3 before forming pointwise products, and the convective
tendency is truncated again so the resolved band is closed under the
dynamics (this is what makes the dealiased inviscid evolution conserve
energy to time-discretization error).
"""

from __future__ import annotations

import numpy as np
import scipy.fft as _fft

#: (i, j) index pairs of the six stored components of a symmetric tensor.
SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
#: lookup[i][j] = component index of (i, j) in SYM_PAIRS order
SYM_LOOKUP = ((0, 3, 4), (3, 1, 5), (4, 5, 2))

_WORKERS = -1  # scipy.fft splits independent 1-D lines; results don't depend on it


class Grid:
    """Uniform periodic n^3 grid with precomputed wavenumber arrays."""

    def __init__(self, n: int, box_length: float = 2.0 * np.pi):
        if n <= 0 or n % 2 != 0:
            raise ValueError("grid size must be even and positive")
        if box_length <= 0:
            raise ValueError("box length must be positive")
        self.n = int(n)
        self.box_length = float(box_length)
        self.h = self.box_length / self.n
        k1d = np.fft.fftfreq(n, d=1.0 / n).astype(np.float64)
        self.k = np.array(np.meshgrid(k1d, k1d, k1d, indexing="ij"))
        self.ksq = np.einsum("i...,i...->...", self.k, self.k)
        self.kmag = np.sqrt(self.ksq)
        scale = 2.0j * np.pi / self.box_length
        self.xi = scale * self.k  # spectral derivative operator per axis
        self.dealias_mask = dealias_mask(n)
        self.shell = np.floor(self.kmag).astype(np.int64)
        self.max_shell = int(self.shell.max())
        self._ksq_safe = np.where(self.ksq > 0, self.ksq, 1.0)

    def points(self) -> np.ndarray:
        """Physical coordinates, shape (3, n, n, n)."""
        x1d = self.h * np.arange(self.n)
        return np.array(np.meshgrid(x1d, x1d, x1d, indexing="ij"))

    def forward(self, phys: np.ndarray) -> np.ndarray:
        """Physical samples -> Fourier-series coefficients."""
        if phys.shape[-3:] != (self.n,) * 3:
            raise ValueError("field shape does not match grid")
        return _fft.fftn(phys, axes=(-3, -2, -1), workers=_WORKERS) / self.n**3

    def inverse(self, spec: np.ndarray) -> np.ndarray:
        """Fourier-series coefficients -> physical samples (complex)."""
        if spec.shape[-3:] != (self.n,) * 3:
            raise ValueError("field shape does not match grid")
        return _fft.ifftn(spec, axes=(-3, -2, -1), workers=_WORKERS) * self.n**3


def dealias_mask(n: int) -> np.ndarray:
    """Boolean mask keeping modes with ||k||_inf < n/3 (the 2/3 rule)."""
    k1d = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    keep = k1d < n / 3.0
    return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


def dealias_truncate(field: np.ndarray, n: int | None = None) -> np.ndarray:
    """Zero modes at or beyond the 2/3-rule cutoff on the trailing 3 axes."""
    if n is None:
        n = field.shape[-1]
    if field.shape[-3:] != (n,) * 3:
        raise ValueError("field shape does not match n")
    return field * dealias_mask(n)


def derivative(spec: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Spectral derivative along a box axis (0, 1 or 2)."""
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    return spec * grid.xi[axis]


def leray_project(u_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Remove the pressure-gradient part: u - k (k . u) / |k|^2 (k=0 kept)."""
    kdotu = np.einsum("i...,i...->...", grid.k, u_hat)
    return u_hat - grid.k * (kdotu / grid._ksq_safe)


def divergence(u_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """xi_j u_j of a 3-component spectral field."""
    return np.einsum("i...,i...->...", grid.xi, u_hat)


def max_divergence(u_hat: np.ndarray, grid: Grid) -> float:
    """max_k |xi_j u_j| / max(||u||, tiny), the divergence-free residual."""
    div = np.abs(divergence(u_hat, grid)).max()
    norm = np.abs(u_hat).max()
    return float(div / norm) if norm > 0 else float(div)


def nonlinear_stress(u_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Six spectral components of the dealiased product u_i u_j."""
    u_trunc = u_hat * grid.dealias_mask
    u_phys = grid.inverse(u_trunc).real
    prods = np.stack([u_phys[i] * u_phys[j] for i, j in SYM_PAIRS])
    return grid.forward(prods)


def viscous_stress(u_hat: np.ndarray, grid: Grid, nu: float) -> np.ndarray:
    """Six spectral components of -nu (xi_j u_i + xi_i u_j)."""
    return np.stack(
        [-nu * (grid.xi[j] * u_hat[i] + grid.xi[i] * u_hat[j]) for i, j in SYM_PAIRS]
    )


def numerical_stress(u_hat: np.ndarray, grid: Grid, nu: float) -> np.ndarray:
    """Discrete stress: dealiased product minus viscous term (six components)."""
    if nu < 0:
        raise ValueError("viscosity must be nonnegative")
    sigma = nonlinear_stress(u_hat, grid)
    if nu > 0:
        sigma += viscous_stress(u_hat, grid, nu)
    return sigma


def divergence_sym(stress6: np.ndarray, grid: Grid) -> np.ndarray:
    """d_i = xi_j sigma_ij for a six-component symmetric spectral tensor."""
    return np.stack(
        [
            sum(grid.xi[j] * stress6[SYM_LOOKUP[i][j]] for j in range(3))
            for i in range(3)
        ]
    )


def rhs(
    u_hat: np.ndarray,
    grid: Grid,
    nu: float,
    f_hat: np.ndarray | None = None,
    extra_stress6: np.ndarray | None = None,
) -> np.ndarray:
    """Pressure-free tendency: -xi_j pi (sigma_ij) + pi f_i.

    The convective part is the dealias-truncated nonlinear stress; the
    viscous part of the stress divergence reduces, after projection, to the
    plain spectral Laplacian (its gradient component is annihilated), so it
    is applied in that form on the full spectrum.  ``extra_stress6`` adds a
    closure stress (already in spectral form) to the divergence.
    """
    sigma = nonlinear_stress(u_hat, grid) * grid.dealias_mask
    if extra_stress6 is not None:
        sigma = sigma + extra_stress6
    tendency = -divergence_sym(sigma, grid)
    if nu > 0:
        tendency += (nu * (2.0 * np.pi / grid.box_length) ** 2) * (
            -grid.ksq
        ) * u_hat
    if f_hat is not None:
        tendency = tendency + f_hat
    return leray_project(tendency, grid)


def energy(u_hat: np.ndarray) -> float:
    """Total kinetic energy sum_k ||u(k)||^2 / 2."""
    return 0.5 * float(np.sum(np.abs(u_hat) ** 2))


def dissipation(u_hat: np.ndarray, grid: Grid, nu: float) -> float:
    """Viscous dissipation rate nu sum_k |k_phys|^2 ||u(k)||^2."""
    kphys_sq = (2.0 * np.pi / grid.box_length) ** 2 * grid.ksq
    return float(nu * np.sum(kphys_sq * np.sum(np.abs(u_hat) ** 2, axis=0)))


def shell_energies(u_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Energy per wavenumber shell kappa <= ||k|| < kappa + 1."""
    dens = 0.5 * np.sum(np.abs(u_hat) ** 2, axis=0)
    return np.bincount(
        grid.shell.ravel(), weights=dens.ravel(), minlength=grid.max_shell + 1
    )


def conjugate_symmetry_error(spec: np.ndarray) -> float:
    """max |u(-k) - conj(u(k))| / max |u|, zero for real physical fields."""
    mirrored = mirror(spec)
    norm = np.abs(spec).max()
    err = np.abs(mirrored - np.conj(spec)).max()
    return float(err / norm) if norm > 0 else float(err)


def mirror(field: np.ndarray) -> np.ndarray:
    """Index reversal m -> -m mod n on the trailing three axes."""
    out = field
    for ax in (-3, -2, -1):
        idx = (-np.arange(field.shape[ax])) % field.shape[ax]
        out = np.take(out, idx, axis=ax)
    return out


def inverse_reflect_symmetric(spec: np.ndarray, grid: Grid) -> np.ndarray:
    """Real inverse transform, symmetrized over the grid point reflection.

    Averaging the inverse transform with its mirror conjugate partner is an
    exact identity in exact arithmetic, but makes the result commute
    *bitwise* with the index mirror m -> -m mod n (floating-point addition
    is commutative).  The closure-input pipeline uses this so that group
    elements acting trivially on 3x3 tensors produce bit-identical
    velocity-gradient samples, keeping their equivariance errors exactly
    zero for any pointwise model.
    """
    direct = grid.inverse(spec)
    mirrored = mirror(grid.inverse(mirror(spec)))
    return ((direct + mirrored) / 2.0).real


def vgt_field(u_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Velocity-gradient samples A_ij = d u_i / d x_j, shape (n, n, n, 3, 3)."""
    a_hat = np.empty((3, 3) + u_hat.shape[-3:], dtype=complex)
    for i in range(3):
        for j in range(3):
            a_hat[i, j] = grid.xi[j] * u_hat[i]
    a_phys = inverse_reflect_symmetric(a_hat, grid)
    return np.moveaxis(a_phys, (0, 1), (-2, -1))


def strain_field(u_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Strain-rate samples (A + A^T)/2, shape (n, n, n, 3, 3)."""
    a = vgt_field(u_hat, grid)
    return (a + np.swapaxes(a, -1, -2)) / 2.0


def sym6_to_full(sym6: np.ndarray) -> np.ndarray:
    """(6, ...) six-component storage -> (..., 3, 3) symmetric tensors."""
    out = np.empty(sym6.shape[1:] + (3, 3), dtype=sym6.dtype)
    for c, (i, j) in enumerate(SYM_PAIRS):
        out[..., i, j] = sym6[c]
        out[..., j, i] = sym6[c]
    return out


def full_to_sym6(full: np.ndarray) -> np.ndarray:
    """(..., 3, 3) symmetric tensors -> (6, ...) six-component storage."""
    return np.stack([full[..., i, j] for i, j in SYM_PAIRS])
