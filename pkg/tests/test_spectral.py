import numpy as np
import pytest

from symles import octa, spectral
from symles.spectral import Grid


def random_divfree(grid, seed, scale=1.0):
    # Nyquist rows zeroed: working states keep them empty (the projector
    # is not even in k there, so they would break conjugate symmetry)
    rng = np.random.default_rng(seed)
    n = grid.n
    u = rng.standard_normal((3, n, n, n)) * scale
    u_hat = grid.forward(u)
    for ax in (1, 2, 3):
        sl = [slice(None)] * 4
        sl[ax] = n // 2
        u_hat[tuple(sl)] = 0.0
    u_hat = spectral.leray_project(u_hat, grid)
    u_hat[:, 0, 0, 0] = 0.0
    return u_hat


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(7)
    with pytest.raises(ValueError):
        Grid(8, box_length=-1.0)


def test_transform_single_modes():
    grid = Grid(16)
    x = grid.points()
    u_hat = grid.forward(np.cos(x[0]))
    assert abs(u_hat[1, 0, 0] - 0.5) < 1e-14
    assert abs(u_hat[-1, 0, 0] - 0.5) < 1e-14
    u_hat[1, 0, 0] = 0
    u_hat[-1, 0, 0] = 0
    assert np.abs(u_hat).max() < 1e-14

    v_hat = grid.forward(np.sin(x[0]))
    assert abs(v_hat[1, 0, 0] - (-0.5j)) < 1e-14
    assert abs(v_hat[-1, 0, 0] - 0.5j) < 1e-14


def test_transform_roundtrip_and_zero():
    grid = Grid(12)
    assert np.all(grid.forward(np.zeros((grid.n,) * 3)) == 0)
    rng = np.random.default_rng(0)
    phys = rng.standard_normal((3, grid.n, grid.n, grid.n))
    back = grid.inverse(grid.forward(phys)).real
    assert np.abs(back - phys).max() <= 1e-13 * np.abs(phys).max()


def test_transform_shape_mismatch():
    grid = Grid(8)
    with pytest.raises(ValueError):
        grid.forward(np.zeros((4, 4, 4)))


def test_derivative():
    grid = Grid(16)
    x = grid.points()
    const = grid.forward(np.ones((grid.n,) * 3))
    assert np.abs(spectral.derivative(const, 0, grid)).max() == 0.0
    s_hat = grid.forward(np.sin(x[0]))
    d_phys = grid.inverse(spectral.derivative(s_hat, 0, grid)).real
    assert np.abs(d_phys - np.cos(x[0])).max() <= 1e-13
    # derivatives commute exactly (pointwise multiplication)
    rng = np.random.default_rng(1)
    f_hat = grid.forward(rng.standard_normal((grid.n,) * 3))
    d12 = spectral.derivative(spectral.derivative(f_hat, 0, grid), 1, grid)
    d21 = spectral.derivative(spectral.derivative(f_hat, 1, grid), 0, grid)
    assert np.abs(d12 - d21).max() <= 1e-15 * np.abs(d12).max()


def test_leray_projection():
    grid = Grid(16)
    u_hat = random_divfree(grid, 2)
    assert spectral.max_divergence(u_hat, grid) <= 1e-12
    # already divergence-free: unchanged
    again = spectral.leray_project(u_hat, grid)
    assert np.abs(again - u_hat).max() <= 1e-13 * np.abs(u_hat).max()
    # idempotent
    rng = np.random.default_rng(3)
    w_hat = grid.forward(rng.standard_normal((3,) + (grid.n,) * 3))
    p1 = spectral.leray_project(w_hat, grid)
    p2 = spectral.leray_project(p1, grid)
    assert np.abs(p2 - p1).max() <= 1e-13 * np.abs(p1).max()
    assert spectral.max_divergence(p1, grid) <= 1e-12
    # gradient fields are annihilated
    phi = grid.forward(rng.standard_normal((grid.n,) * 3))
    grad = np.stack([spectral.derivative(phi, j, grid) for j in range(3)])
    killed = spectral.leray_project(grad, grid)
    assert np.abs(killed).max() <= 1e-13 * np.abs(grad).max()
    # k = 0 mode is left unchanged
    w_hat[:, 0, 0, 0] = np.array([1.0, 2.0, 3.0])
    assert np.all(
        spectral.leray_project(w_hat, grid)[:, 0, 0, 0] == np.array([1.0, 2.0, 3.0])
    )


def test_dealias_rule_n9():
    field = np.ones((9, 9, 9))
    out = spectral.dealias_truncate(field)
    k = np.fft.fftfreq(9, d=1 / 9)
    for a in range(9):
        for b in range(9):
            for c in range(9):
                expect = 1.0 if max(abs(k[a]), abs(k[b]), abs(k[c])) < 3.0 else 0.0
                assert out[a, b, c] == expect
    assert np.array_equal(spectral.dealias_truncate(out), out)


def test_dealias_idempotent_even():
    rng = np.random.default_rng(4)
    field = rng.standard_normal((12, 12, 12))
    once = spectral.dealias_truncate(field)
    assert np.array_equal(spectral.dealias_truncate(once), once)


def test_nyquist_inside_dealiased_region():
    grid = Grid(16)
    field = np.ones((16, 16, 16))
    out = spectral.dealias_truncate(field)
    assert np.all(out[8, :, :] == 0) and np.all(out[:, 8, :] == 0)


def test_nonlinear_stress_zero():
    grid = Grid(8)
    assert np.all(
        spectral.numerical_stress(np.zeros((3, 8, 8, 8), complex), grid, 0.1) == 0
    )


def test_nonlinear_stress_single_mode_convolution():
    # u1 = cos(x1), u2 = cos(2 x2): product u1 u2 has coefficients 1/4 at
    # the four wavenumber combinations (+-1, +-2, 0)
    grid = Grid(16)
    x = grid.points()
    u = np.zeros((3,) + x.shape[1:])
    u[0] = np.cos(x[0])
    u[1] = np.cos(2.0 * x[1])
    sigma = spectral.nonlinear_stress(grid.forward(u), grid)
    s12 = sigma[3]  # component (0, 1)
    for k1 in (1, -1):
        for k2 in (2, -2):
            assert abs(s12[k1, k2, 0] - 0.25) < 1e-14
            s12[k1, k2, 0] = 0.0
    assert np.abs(s12).max() < 1e-14
    # sigma_11 = cos^2(x1) = 1/2 + cos(2 x1)/2
    s11 = sigma[0]
    assert abs(s11[0, 0, 0] - 0.5) < 1e-14
    assert abs(s11[2, 0, 0] - 0.25) < 1e-14


def test_viscous_stress_hand_case():
    # u = sin(x1) e_2: sigma_12 viscous part is -nu cos(x1)
    grid = Grid(16)
    nu = 0.3
    x = grid.points()
    u = np.zeros((3,) + x.shape[1:])
    u[1] = np.sin(x[0])
    sigma = spectral.numerical_stress(grid.forward(u), grid, nu)
    s12_phys = grid.inverse(sigma[3]).real
    # the nonlinear part of sigma_12 is u1 u2 = 0
    assert np.abs(s12_phys - (-nu * np.cos(x[0]))).max() < 1e-13


def test_rhs_zero_and_gradient_force():
    grid = Grid(8)
    zero = np.zeros((3, 8, 8, 8), complex)
    assert np.all(spectral.rhs(zero, grid, 0.0) == 0)
    rng = np.random.default_rng(5)
    phi = grid.forward(rng.standard_normal((8, 8, 8)))
    grad = np.stack([spectral.derivative(phi, j, grid) for j in range(3)])
    out = spectral.rhs(zero, grid, 0.0, f_hat=grad)
    assert np.abs(out).max() <= 1e-13 * np.abs(grad).max()


def test_rhs_divergence_free():
    grid = Grid(16)
    u_hat = random_divfree(grid, 6)
    tend = spectral.rhs(u_hat, grid, 1e-3)
    assert spectral.max_divergence(tend, grid) <= 1e-12


def test_rhs_energy_conservation_inviscid():
    # dealiased field: Re<u, rhs(u)> vanishes (discrete skew symmetry)
    grid = Grid(16)
    u_hat = random_divfree(grid, 7) * grid.dealias_mask
    u_hat = spectral.leray_project(u_hat, grid)
    tend = spectral.rhs(u_hat, grid, 0.0)
    inner = float(np.sum((np.conj(u_hat) * tend).real))
    assert abs(inner) <= 1e-11 * np.sum(np.abs(u_hat) ** 2)


def test_rhs_equivariance():
    grid = Grid(12)
    u_hat = random_divfree(grid, 8)
    base = spectral.rhs(u_hat, grid, 2e-3)
    scale = np.abs(base).max()
    for g in octa.enumerate_group():
        lhs = spectral.rhs(octa.act_on_spectral_field(g, u_hat), grid, 2e-3)
        rhs_ = octa.act_on_spectral_field(g, base)
        assert np.abs(lhs - rhs_).max() <= 1e-12 * scale


def test_conjugate_symmetry_preserved():
    grid = Grid(12)
    u_hat = random_divfree(grid, 9)
    assert spectral.conjugate_symmetry_error(u_hat) <= 1e-13
    tend = spectral.rhs(u_hat, grid, 1e-2)
    assert spectral.conjugate_symmetry_error(tend) <= 1e-13


def test_energy_and_shells():
    grid = Grid(16)
    u_hat = np.zeros((3, 16, 16, 16), complex)
    amp = 0.3
    u_hat[:, 1, 0, 0] = amp
    u_hat[:, -1, 0, 0] = amp
    assert abs(spectral.energy(u_hat) - 3 * amp**2) < 1e-15
    shells = spectral.shell_energies(u_hat, grid)
    assert abs(shells[1] - 3 * amp**2) < 1e-15
    assert np.all(shells[2:] == 0) and shells[0] == 0
    # shells partition all modes exactly once
    counts = np.bincount(grid.shell.ravel())
    assert counts.sum() == grid.n**3


def test_dissipation_single_mode():
    grid = Grid(16)
    nu = 2e-3
    u_hat = np.zeros((3, 16, 16, 16), complex)
    u_hat[0, 0, 2, 0] = 1.0 + 0.5j
    expect = nu * 4.0 * np.abs(u_hat[0, 0, 2, 0]) ** 2
    assert abs(spectral.dissipation(u_hat, grid, nu) - expect) < 1e-14


def test_vgt_field_matches_plain_inverse():
    grid = Grid(12)
    u_hat = random_divfree(grid, 10)
    a = spectral.vgt_field(u_hat, grid)
    for i in range(3):
        for j in range(3):
            direct = grid.inverse(grid.xi[j] * u_hat[i]).real
            assert np.abs(a[..., i, j] - direct).max() <= 1e-13
    # trace of A is the divergence: zero for projected fields
    assert np.abs(np.trace(a, axis1=-2, axis2=-1)).max() <= 1e-12 * np.abs(a).max()


def test_vgt_field_bitwise_mirror_equivariance():
    # the reflection-symmetric inverse makes the point reflection exact
    grid = Grid(12)
    u_hat = random_divfree(grid, 11) * grid.dealias_mask
    g43 = octa.element(43)
    a1 = spectral.vgt_field(octa.act_on_spectral_field(g43, u_hat), grid)
    a2 = octa.act_on_physical_field(
        g43, np.moveaxis(spectral.vgt_field(u_hat, grid), (-2, -1), (0, 1))
    )
    assert np.array_equal(a1, np.moveaxis(a2, (0, 1), (-2, -1)))


def test_sym6_roundtrip():
    rng = np.random.default_rng(12)
    full = rng.standard_normal((5, 3, 3))
    full = (full + np.swapaxes(full, -1, -2)) / 2
    assert np.array_equal(spectral.sym6_to_full(spectral.full_to_sym6(full)), full)
