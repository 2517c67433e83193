"""Modified Gaussian filter, coarse-grid restriction, and the discrete SFS.

The filter kernel is 1 inside the forced shells (so filtering commutes with
the shell forcing) and Gaussian beyond:

    G(k) = 1                              for ||k|| < 3
    G(k) = exp(-||k||^2 Delta^2 / 24)     for ||k|| >= 3

The training target is the discretization-consistent sub-filter stress

    tau = restrict(G * sigma_nl^N(v)) - sigma_nl^M(restrict(G * v)),

built from the nonlinear stresses only (the viscous commutator vanishes
because spectral derivatives commute with wavenumber-wise scaling).  It is
stored deviatoric, in physical space, on the coarse grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral
from .spectral import Grid


@dataclass(frozen=True)
class FilterSpec:
    """Modified Gaussian filter with a low-shell passthrough."""

    delta: float
    passthrough_radius: float = 3.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("filter width must be positive")

    def kernel(self, grid: Grid) -> np.ndarray:
        """G(k) sampled on the grid's wavenumbers; values in (0, 1]."""
        gauss = np.exp(-grid.ksq * self.delta**2 / 24.0)
        return np.where(grid.kmag < self.passthrough_radius, 1.0, gauss)


def filter_for_les(les_n: int, box_length: float, width_factor: float = 4.0) -> FilterSpec:
    """The standard choice Delta = width_factor * h_LES."""
    return FilterSpec(delta=width_factor * box_length / les_n)


def apply_filter(u_hat: np.ndarray, spec: FilterSpec, grid: Grid) -> np.ndarray:
    """Wavenumber-wise multiply by the filter kernel."""
    return u_hat * spec.kernel(grid)


def _coarse_index(m: int, n: int) -> np.ndarray:
    k_coarse = np.fft.fftfreq(m, d=1.0 / m).astype(np.int64)
    return k_coarse % n


def restrict_to_coarse(u_hat: np.ndarray, fine: Grid, m: int) -> np.ndarray:
    """Copy modes with all |k_i| <= m/2 - 1 onto an m^3 grid (Nyquist row zero)."""
    if m >= fine.n:
        raise ValueError("coarse grid must be smaller than the fine grid")
    if m <= 0 or m % 2:
        raise ValueError("coarse grid size must be even and positive")
    idx = _coarse_index(m, fine.n)
    out = u_hat[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]].copy()
    nyq = m // 2
    out[..., nyq, :, :] = 0.0
    out[..., :, nyq, :] = 0.0
    out[..., :, :, nyq] = 0.0
    return out


def prolong_to_fine(u_hat: np.ndarray, coarse: Grid, n: int) -> np.ndarray:
    """Zero-pad coarse coefficients onto an n^3 grid (adjoint of restriction)."""
    if n <= coarse.n:
        raise ValueError("fine grid must be larger than the coarse grid")
    idx = _coarse_index(coarse.n, n)
    out = np.zeros(u_hat.shape[:-3] + (n, n, n), dtype=u_hat.dtype)
    out[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = u_hat
    return out


def filtered_velocity(
    v_hat: np.ndarray, fine: Grid, coarse: Grid, spec: FilterSpec
) -> np.ndarray:
    """Filter a DNS state and restrict it to the LES grid."""
    return restrict_to_coarse(apply_filter(v_hat, spec, fine), fine, coarse.n)


def discrete_sfs(
    v_hat: np.ndarray, fine: Grid, coarse: Grid, spec: FilterSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Filtered velocity and deviatoric discrete SFS of one DNS state.

    Returns (u_bar spectral on the coarse grid, tau as six physical
    components on the coarse grid).
    """
    sigma_fine = spectral.nonlinear_stress(v_hat, fine)
    sigma_fine = restrict_to_coarse(apply_filter(sigma_fine, spec, fine), fine, coarse.n)
    u_bar = filtered_velocity(v_hat, fine, coarse, spec)
    sigma_coarse = spectral.nonlinear_stress(u_bar, coarse)
    tau_hat = sigma_fine - sigma_coarse
    tau = coarse.inverse(tau_hat).real
    trace = (tau[0] + tau[1] + tau[2]) / 3.0
    tau[:3] -= trace
    return u_bar, tau


@dataclass
class SnapshotPair:
    """One training datum: filtered velocity and deviatoric SFS at time t."""

    t: float
    u_bar: np.ndarray   # spectral, (3, m, m, m) complex
    tau_dev: np.ndarray  # physical, (6, m, m, m) real, trace-free

    def validate(self, grid: Grid, tol: float = 1e-12) -> None:
        if spectral.max_divergence(self.u_bar, grid) > tol:
            raise ValueError("filtered velocity is not divergence-free")
        trace = np.abs(self.tau_dev[0] + self.tau_dev[1] + self.tau_dev[2])
        scale = np.abs(self.tau_dev).max()
        if scale > 0 and trace.max() > 1e-13 * scale:
            raise ValueError("stored SFS is not deviatoric")


def make_pair(t: float, v_hat: np.ndarray, fine: Grid, coarse: Grid, spec: FilterSpec) -> SnapshotPair:
    u_bar, tau = discrete_sfs(v_hat, fine, coarse, spec)
    return SnapshotPair(t=t, u_bar=u_bar, tau_dev=tau)


def build_dataset(pairs, split_fraction: float) -> tuple[list, list]:
    """Chronological split: first ceil(fraction * n) pairs train, rest test."""
    pairs = sorted(pairs, key=lambda p: p.t)
    if len(pairs) < 2:
        raise ValueError("need at least two snapshot pairs")
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split fraction must be in (0, 1)")
    n_train = math.ceil(split_fraction * len(pairs))
    return pairs[:n_train], pairs[n_train:]
