"""Evaluation metrics: prediction errors, equivariance errors, spectra,
distributions, and velocity-gradient invariant statistics.

Apart from the error reductions, everything here returns plain arrays that
the pipeline serializes to CSV; nothing renders figures.  Norms written
||.|| are Frobenius norms accumulated over all grid points (off-diagonal
tensor components counted twice via the full 3x3 representation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.ndimage

from . import closures, octa, sim, spectral
from .spectral import Grid

KOLMOGOROV_CONSTANT = 1.6


def tensor_norm(field: np.ndarray) -> float:
    """Frobenius norm over every axis (grid points and tensor entries)."""
    return float(np.sqrt(np.sum(field * field)))


def apriori_tensor_error(closure, pairs, grid: Grid, delta: float) -> float:
    """Mean over snapshots of ||m(u_bar) - tau|| / ||tau||."""
    if not pairs:
        raise ValueError("empty snapshot set")
    total = 0.0
    for pair in pairs:
        tau = spectral.sym6_to_full(pair.tau_dev)
        norm = tensor_norm(tau)
        if norm == 0.0:
            raise ValueError("zero-norm SFS target")
        m = closures.stress_field(closure, pair.u_bar, grid, delta)
        total += tensor_norm(m - tau) / norm
    return total / len(pairs)


def aposteriori_solution_error(states, times, reference_pairs, grid: Grid):
    """Mean and per-time relative velocity errors against the filtered DNS.

    ``states`` align with ``times``; None entries (diverged trajectory) make
    the mean NaN while the partial series is still returned as rows (t, err).
    """
    series = []
    complete = True
    for state, t_state, pair in zip(states, times, reference_pairs):
        if state is None:
            complete = False
            continue
        ref = grid.inverse(pair.u_bar).real
        got = grid.inverse(state).real
        series.append((t_state, tensor_norm(got - ref) / tensor_norm(ref)))
    mean = float(np.mean([e for _, e in series])) if complete else float("nan")
    return mean, series


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def equivariance_error_prior(closure, u_hat, grid: Grid, delta: float):
    """Per-element ||g m(u) - m(g u)|| / ||m(g u)|| and its mean over G.

    The mean is NaN when every denominator vanishes (a model that outputs
    identically zero has no defined equivariance error).
    """
    m = closures.stress_field(closure, u_hat, grid, delta)
    m_leading = np.moveaxis(m, (-2, -1), (0, 1))
    values = np.empty(48)
    all_zero = True
    for g in octa.enumerate_group():
        lhs = octa.act_on_physical_field(g, m_leading)
        rhs = closures.stress_field(
            closure, octa.act_on_spectral_field(g, u_hat), grid, delta
        )
        rhs_leading = np.moveaxis(rhs, (-2, -1), (0, 1))
        num = tensor_norm(lhs - rhs_leading)
        den = tensor_norm(rhs_leading)
        if den > 0.0:
            all_zero = False
        values[g.flat_index - 1] = _ratio(num, den)
    mean = float("nan") if all_zero else float(values.mean())
    return values, mean


def equivariance_error_post(
    closure,
    u0_hat,
    grid: Grid,
    nu: float,
    delta: float,
    t_eval: float = 0.1,
    cfl: float = 0.35,
    forced_shell_max: int = 2,
    dealias_closure: bool = True,
):
    """Per-element ||g S_t(u0) - S_t(g u0)|| / ||S_t(g u0)|| at a fixed time.

    The base run's time-step sequence is replayed for every transformed
    initial condition so the trajectories are directly comparable.
    Returns (values, mean); instability yields NaNs.
    """
    term = closures.les_closure_term(closure, grid, delta, dealias=dealias_closure)
    base = sim.run_les(
        u0_hat, [0.0, t_eval], grid, nu, cfl=cfl,
        forced_shell_max=forced_shell_max, closure_stress=term,
    )
    if not base.stable:
        return np.full(48, np.nan), float("nan")
    base_phys = grid.inverse(base.states[-1]).real
    values = np.empty(48)
    for g in octa.enumerate_group():
        moved = sim.run_les(
            octa.act_on_spectral_field(g, u0_hat), [0.0, t_eval], grid, nu,
            cfl=cfl, forced_shell_max=forced_shell_max, closure_stress=term,
            dt_sequence=base.dts,
        )
        if not moved.stable:
            return np.full(48, np.nan), float("nan")
        got = grid.inverse(moved.states[-1]).real
        expected = octa.act_on_physical_field(g, base_phys)
        values[g.flat_index - 1] = _ratio(
            tensor_norm(expected - got), tensor_norm(got)
        )
    return values, float(values.mean())


# ---------------------------------------------------------------- spectra


@dataclass
class SpectrumResult:
    kappa: np.ndarray   # shell indices 0..max
    energy: np.ndarray  # shell energies

    def normalized(self, eps: float, nu: float, c_kol: float = KOLMOGOROV_CONSTANT):
        """Kolmogorov units: the model spectrum becomes kappa_tilde^(-5/3).

        eta = (nu^3/eps)^(1/4); E is scaled by 1/(C eps^(2/3) eta^(5/3)) so
        the Kolmogorov inertial-range curve passes through 1 at
        kappa_tilde = kappa eta = 1.
        """
        eta = (nu**3 / eps) ** 0.25
        kappa_tilde = self.kappa * eta
        e_tilde = self.energy / (c_kol * eps ** (2.0 / 3.0) * eta ** (5.0 / 3.0))
        return kappa_tilde, e_tilde


def energy_spectrum(u_hat, grid: Grid) -> SpectrumResult:
    """Shell energies E(kappa) = sum_{kappa <= ||k|| < kappa+1} ||u(k)||^2 / 2."""
    shells = spectral.shell_energies(u_hat, grid)
    return SpectrumResult(kappa=np.arange(shells.size), energy=shells)


def mean_spectrum(states, grid: Grid) -> SpectrumResult:
    """Time-averaged shell energies over a list of spectral states."""
    states = [s for s in states if s is not None]
    if not states:
        raise ValueError("no states to average")
    acc = None
    for state in states:
        shells = spectral.shell_energies(state, grid)
        acc = shells if acc is None else acc + shells
    acc /= len(states)
    return SpectrumResult(kappa=np.arange(acc.size), energy=acc)


# ----------------------------------------------------- pointwise statistics


def dissipation_coefficient(m_field, s_field) -> np.ndarray:
    """Pointwise double contraction m_ij S_ij (negative = forward transfer)."""
    return np.einsum("...ij,...ij->...", m_field, s_field)


def qr_invariants(a_field) -> tuple[np.ndarray, np.ndarray]:
    """q = -tr(A^2)/2 and r = -tr(A^3)/3 per point."""
    q = -0.5 * np.einsum("...ij,...ji->...", a_field, a_field)
    r = -(1.0 / 3.0) * np.einsum("...ij,...jk,...ki->...", a_field, a_field, a_field)
    return q, r


def gradient_time_scale(pairs, grid: Grid) -> float:
    """<1/||A||_F> averaged over grid points and snapshots."""
    total, count = 0.0, 0
    for pair in pairs:
        a = spectral.vgt_field(pair.u_bar, grid)
        norm = np.sqrt(np.einsum("...ij,...ij->...", a, a))
        good = norm > 0
        total += float(np.sum(1.0 / norm[good]))
        count += int(good.sum())
    if count == 0:
        raise ValueError("gradient field is identically zero")
    return total / count


def vieillefosse_curve(r_values: np.ndarray) -> np.ndarray:
    """q on the tail (r/2)^2 + (q/3)^3 = 0: q = -3 cbrt((r/2)^2)."""
    return -3.0 * np.cbrt((np.asarray(r_values) / 2.0) ** 2)


# ------------------------------------------------------------------- KDE


def _silverman_bandwidth(samples: np.ndarray, d: int) -> float:
    n = samples.size
    sigma = float(np.std(samples))
    if sigma == 0.0:
        raise ValueError("degenerate (zero variance) samples")
    return sigma * (4.0 / (n * (d + 2.0))) ** (1.0 / (d + 4.0))


def subsample(values: np.ndarray, cap: int = 2_000_000) -> np.ndarray:
    """Uniform-stride subsampling to at most ``cap`` points."""
    flat = np.asarray(values).ravel()
    if flat.size <= cap:
        return flat
    stride = int(np.ceil(flat.size / cap))
    return flat[::stride]


def kde_1d(samples: np.ndarray, n_points: int = 512, span: float = 5.0, window=None):
    """Gaussian KDE on [mean - span sigma, mean + span sigma] (or ``window``).

    Binned implementation: a fine histogram convolved with the Silverman
    kernel; mass outside the window is dropped, so the density integrates
    to the in-window sample fraction (within a couple of percent for
    turbulence-like data).  Returns (x, density).
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise ValueError("need at least two samples")
    bw = _silverman_bandwidth(samples, d=1)
    mu, sigma = float(np.mean(samples)), float(np.std(samples))
    lo, hi = window if window is not None else (mu - span * sigma, mu + span * sigma)
    stride = 8
    fine = stride * n_points
    counts, edges = np.histogram(samples, bins=fine, range=(lo, hi))
    width = edges[1] - edges[0]
    density = scipy.ndimage.gaussian_filter1d(
        counts.astype(float), sigma=bw / width, mode="constant"
    ) / (samples.size * width)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return (
        centers.reshape(n_points, stride).mean(axis=1),
        density.reshape(n_points, stride).mean(axis=1),
    )


def kde_2d(x: np.ndarray, y: np.ndarray, extent=(-10.0, 10.0), n_points: int = 256):
    """2-D Gaussian KDE on a fixed square window; returns (xc, yc, density)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two (x, y) samples")
    bw_x = _silverman_bandwidth(x, d=2)
    bw_y = _silverman_bandwidth(y, d=2)
    lo, hi = extent
    counts, ex, ey = np.histogram2d(
        x, y, bins=n_points, range=((lo, hi), (lo, hi))
    )
    wx, wy = ex[1] - ex[0], ey[1] - ey[0]
    density = scipy.ndimage.gaussian_filter(
        counts, sigma=(bw_x / wx, bw_y / wy), mode="constant"
    ) / (x.size * wx * wy)
    return (ex[:-1] + ex[1:]) / 2.0, (ey[:-1] + ey[1:]) / 2.0, density


def density_integral_1d(x: np.ndarray, density: np.ndarray) -> float:
    return float(scipy.integrate.trapezoid(density, x))


def density_integral_2d(xc, yc, density) -> float:
    return float(np.sum(density) * (xc[1] - xc[0]) * (yc[1] - yc[0]))
