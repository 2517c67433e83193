"""Time integration for DNS and LES: initialization, Wray RK3, forcing.

The DNS is warmed up, then sampled every ``sample_every`` steps.  A linear
shell forcing rescales the first two wavenumber shells to their initial
energies after every completed Runge-Kutta step (including warm-up), which
keeps the large scales statistically steady.  LES runs reuse the same
stepping and forcing, plus a closure stress supplied as a callback, and can
replay a recorded time-step sequence so that transformed initial conditions
follow bit-comparable trajectories.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .spectral import Grid

log = logging.getLogger(__name__)

# Wray's third-order low-storage Runge-Kutta scheme: stage increments
#   u <- u + dt (a_s F_s + b_s F_{s-1})
WRAY_A = (8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0)
WRAY_B = (0.0, -17.0 / 60.0, -5.0 / 12.0)


class SimulationDiverged(RuntimeError):
    """Raised when a field stops being finite; carries the failure time."""

    def __init__(self, time: float):
        super().__init__(f"simulation diverged at t = {time:.6g}")
        self.time = time


@dataclass
class SimConfig:
    """DNS run parameters (desk-scale defaults)."""

    dns_n: int = 64
    viscosity: float = 2e-3
    cfl: float = 0.35
    box_length: float = 2.0 * np.pi
    init_energy: float = 0.2
    forced_shell_max: int = 2
    warmup_time: float = 1.0
    sample_every: int = 12
    n_snapshots: int = 30
    seed: int = 0

    def validate(self) -> None:
        if self.dns_n <= 0 or self.dns_n % 2:
            raise ValueError("dns_n must be even and positive")
        for name in ("viscosity", "cfl", "box_length", "init_energy", "warmup_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.forced_shell_max < 1:
            raise ValueError("forced shells must be a prefix {1..s} with s >= 1")
        if self.sample_every < 1 or self.n_snapshots < 1:
            raise ValueError("sampling parameters must be positive")


def _zero_nyquist(u_hat: np.ndarray) -> None:
    # Nyquist rows stay empty: k = -n/2 has no +n/2 partner, so the Leray
    # projector and the group remaps are only clean without them.
    n = u_hat.shape[-1]
    for ax in range(u_hat.ndim - 3, u_hat.ndim):
        sl = [slice(None)] * u_hat.ndim
        sl[ax] = n // 2
        u_hat[tuple(sl)] = 0.0


def init_velocity(grid: Grid, seed: int, e0: float) -> np.ndarray:
    """Random divergence-free field with a -5/3 shell spectrum and energy e0.

    Procedure: complex Gaussian draw, conjugate symmetrization, Leray
    projection, per-shell rescale to kappa^(-5/3), global rescale to e0.
    """
    rng = np.random.default_rng(seed)
    shape = (3, grid.n, grid.n, grid.n)
    u_hat = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    u_hat = (u_hat + np.conj(spectral.mirror(u_hat))) / 2.0
    _zero_nyquist(u_hat)
    u_hat[:, 0, 0, 0] = 0.0
    u_hat = spectral.leray_project(u_hat, grid)

    shells = spectral.shell_energies(u_hat, grid)
    factors = np.ones(grid.max_shell + 1)
    kappa = np.arange(1, grid.max_shell + 1, dtype=np.float64)
    populated = shells[1:] > 0
    factors[1:][populated] = np.sqrt(
        kappa[populated] ** (-5.0 / 3.0) / shells[1:][populated]
    )
    u_hat *= factors[grid.shell]

    total = spectral.energy(u_hat)
    u_hat *= np.sqrt(e0 / total)
    return u_hat


def adaptive_dt(u_hat: np.ndarray, grid: Grid, nu: float, cfl: float) -> float:
    """dt = C min(h / max|u_i(x)|, h^2 / nu) with the max over physical space."""
    umax = float(np.abs(grid.inverse(u_hat).real).max())
    convective = grid.h / umax if umax > 0 else np.inf
    viscous = grid.h**2 / nu if nu > 0 else np.inf
    bound = min(convective, viscous)
    if not np.isfinite(bound):
        raise ValueError("time step unbounded: zero velocity and zero viscosity")
    return cfl * bound


def rk3_step(u_hat: np.ndarray, dt: float, rhs_fn) -> np.ndarray:
    """One Wray RK3 step of du/dt = rhs_fn(u)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = u_hat
    f_prev = None
    for a, b in zip(WRAY_A, WRAY_B):
        f = rhs_fn(u)
        u = u + dt * a * f if f_prev is None else u + dt * (a * f + b * f_prev)
        f_prev = f
    return u


def apply_forcing(u_hat: np.ndarray, grid: Grid, targets: dict[int, float]) -> np.ndarray:
    """Rescale each forced shell to its target energy; other modes untouched."""
    shells = spectral.shell_energies(u_hat, grid)
    out = u_hat.copy()
    for kappa, target in targets.items():
        current = shells[kappa]
        if current == 0.0:
            log.warning("forced shell %d has zero energy; leaving it unchanged", kappa)
            continue
        mask = grid.shell == kappa
        out[:, mask] *= np.sqrt(target / current)
    return out


def shell_targets(u_hat: np.ndarray, grid: Grid, forced_shell_max: int) -> dict[int, float]:
    """Energies of the forced shells 1..s of the given state."""
    shells = spectral.shell_energies(u_hat, grid)
    return {k: float(shells[k]) for k in range(1, forced_shell_max + 1)}


def _check_finite(u_hat: np.ndarray, t: float) -> float:
    e = spectral.energy(u_hat)
    if not np.isfinite(e):
        raise SimulationDiverged(t)
    return e


@dataclass
class DNSResult:
    """Timeseries rows (t, E, eps); snapshots go through the callback."""

    timeseries: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))


def run_dns(config: SimConfig, on_snapshot, progress=None) -> DNSResult:
    """Warm up, then integrate and emit n_snapshots states via on_snapshot(t, u).

    Warm-up time is reported as negative; the first snapshot is the
    post-warm-up state at t = 0.  Snapshot times are not evenly spaced
    because the time step adapts to the instantaneous velocity maximum.
    """
    config.validate()
    if progress is None:
        progress = sys.stderr
    grid = Grid(config.dns_n, config.box_length)
    nu = config.viscosity
    u_hat = init_velocity(grid, config.seed, config.init_energy)
    targets = shell_targets(u_hat, grid, config.forced_shell_max)

    rows = []
    step = 0

    def record(t):
        rows.append((t, spectral.energy(u_hat), spectral.dissipation(u_hat, grid, nu)))

    def advance(dt, t):
        nonlocal u_hat, step
        u_hat = rk3_step(u_hat, dt, lambda v: spectral.rhs(v, grid, nu))
        u_hat = apply_forcing(u_hat, grid, targets)
        e = _check_finite(u_hat, t)
        step += 1
        if progress is not None:
            print(f"step={step} t={t:.6f} dt={dt:.3e} E={e:.6e}", file=progress)

    record(-config.warmup_time)
    t = -config.warmup_time
    try:
        while t < 0.0:
            dt = min(adaptive_dt(u_hat, grid, nu, config.cfl), -t)
            t = 0.0 if dt >= -t else t + dt
            advance(dt, t)
            record(t)

        on_snapshot(0.0, u_hat)
        for _ in range(config.n_snapshots - 1):
            for _ in range(config.sample_every):
                dt = adaptive_dt(u_hat, grid, nu, config.cfl)
                t += dt
                advance(dt, t)
                record(t)
            on_snapshot(t, u_hat)
    except SimulationDiverged as exc:
        exc.timeseries = np.array(rows)  # partial record for diagnostics
        raise
    return DNSResult(timeseries=np.array(rows))


@dataclass
class LESResult:
    """States at the requested times; unfinished entries are None."""

    times: list[float]
    states: list[np.ndarray | None]
    dts: list[float]
    stable: bool = True
    diverged_at: float | None = None


def run_les(
    u0_hat: np.ndarray,
    target_times,
    grid: Grid,
    nu: float,
    cfl: float = 0.35,
    forced_shell_max: int = 2,
    closure_stress=None,
    dt_sequence=None,
    progress=None,
) -> LESResult:
    """Integrate the LES equations, landing exactly on each target time.

    ``closure_stress``, if given, maps the spectral velocity to a
    six-component spectral model stress added to the resolved stress.
    ``dt_sequence`` replays a previously recorded step sequence (clips to
    target times still apply and coincide by construction).
    """
    target_times = [float(t) for t in target_times]
    if sorted(target_times) != target_times:
        raise ValueError("target times must be increasing")
    u_hat = u0_hat.copy()
    targets = shell_targets(u_hat, grid, forced_shell_max)

    def rhs_fn(v):
        extra = closure_stress(v) if closure_stress is not None else None
        return spectral.rhs(v, grid, nu, extra_stress6=extra)

    result = LESResult(times=target_times, states=[None] * len(target_times), dts=[])
    result.states[0] = u_hat.copy()
    replay = iter(dt_sequence) if dt_sequence is not None else None
    t = target_times[0]
    step = 0
    try:
        for idx, t_target in enumerate(target_times[1:], start=1):
            while t < t_target:
                remaining = t_target - t
                if replay is not None:
                    dt = next(replay)
                else:
                    dt = min(adaptive_dt(u_hat, grid, nu, cfl), remaining)
                t = t_target if dt >= remaining else t + dt
                u_hat = rk3_step(u_hat, dt, rhs_fn)
                u_hat = apply_forcing(u_hat, grid, targets)
                e = _check_finite(u_hat, t)
                result.dts.append(dt)
                step += 1
                if progress is not None:
                    print(f"step={step} t={t:.6f} dt={dt:.3e} E={e:.6e}", file=progress)
            result.states[idx] = u_hat.copy()
    except SimulationDiverged as exc:
        result.stable = False
        result.diverged_at = exc.time
        log.warning("LES diverged at t = %.4g; keeping partial trajectory", exc.time)
    return result
