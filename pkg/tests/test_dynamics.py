import numpy as np
import pytest

from qsoliton import dynamics
from qsoliton.dynamics import (
    LinearPropagator,
    NumericalError,
    SplitStepIntegrator,
    StabilityError,
    drift_coefficients,
    drift_rhs,
    evolve,
    fourier_matrix,
    from_frequency,
    kinetic_generator,
    moment_rhs,
    nonlinear_rk4,
    rk4_dense,
    step,
    to_frequency,
)
from qsoliton.fock import FockConfig, coherent_density, displaced_squeezed_thermal, moment_derivatives, moments_of
from qsoliton.lattice import GaussianFieldState, GridSpec, SimulationConfig, make_fundamental_soliton, total_photon_number

SMALL = GridSpec(16, 1.0)


def random_state(grid, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    n = grid.n_points
    mean = scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    c = 0.1 * a.conj().T @ a / n
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    m = 0.05 * (b + b.T)
    return GaussianFieldState(grid, 0.0, mean, c, m)


def test_frequency_transforms_match_explicit_matrix():
    s = random_state(SMALL)
    f = fourier_matrix(SMALL)
    assert np.allclose(f @ f.conj().T, np.eye(16), atol=1e-13)
    bf, cf, mf = to_frequency(SMALL, s.mean, s.c_norm, s.m_anom)
    assert np.allclose(bf, f @ s.mean, atol=1e-12)
    # c_qq' = <db_q^dag db_q'> picks up F^* on the left and F^T on the right.
    assert np.allclose(cf, f.conj() @ s.c_norm @ f.T, atol=1e-12)
    assert np.allclose(mf, f @ s.m_anom @ f.T, atol=1e-12)
    back = from_frequency(SMALL, bf, cf, mf)
    for x, y in zip(back, (s.mean, s.c_norm, s.m_anom)):
        assert np.allclose(x, y, atol=1e-12)


def test_fourier_kernel_sign():
    f = fourier_matrix(SMALL)
    k = 3
    q = 5
    expected = np.exp(1j * SMALL.omega[q] * SMALL.xi[k]) / 4.0
    assert f[q, k] == pytest.approx(expected, abs=1e-14)


def test_kinetic_generator_is_real_symmetric():
    h = kinetic_generator(SMALL)
    assert np.allclose(h, h.T, atol=1e-13)
    assert np.max(np.abs(h.imag)) < 1e-12


def test_drift_coefficients_dressing():
    s = random_state(SMALL, 1)
    co = drift_coefficients(s.mean, s.c_norm, s.m_anom, np.zeros((16, 16)), -0.3, 1.0)
    assert np.allclose(co.h_diag, 2 * -0.3 * (np.abs(s.mean) ** 2 + np.diagonal(s.c_norm).real))
    assert np.allclose(co.delta_diag, -0.3 * (s.mean**2 + np.diagonal(s.m_anom)))
    lin = drift_coefficients(s.mean, s.c_norm, s.m_anom, np.zeros((16, 16)), -0.3, 0.0)
    assert np.allclose(lin.h_diag.imag, 0)


def test_free_field_fourier_diagonal_c_is_stationary():
    cfg = SimulationConfig(nbar=0.0, n_points=16, dx=1.0)
    f = fourier_matrix(SMALL)
    occ = np.linspace(0.1, 1.0, 16)
    c = f.T @ np.diag(occ) @ f.conj()  # inverse of c_f = F^* C F^T
    s = GaussianFieldState(SMALL, 0.0, np.zeros(16), c, np.zeros((16, 16)))
    _, dc, dm = drift_rhs(s, cfg)
    assert np.max(np.abs(dc)) < 1e-12
    assert np.max(np.abs(dm)) < 1e-12


def test_thermal_relaxation_rate():
    cfg = SimulationConfig(nbar=0.0, gamma_td=0.2, n_th=0.05, n_points=16, dx=1.0)
    s = GaussianFieldState(SMALL, 0.0, np.zeros(16), 0.7 * np.eye(16), np.zeros((16, 16)))
    _, dc, _ = drift_rhs(s, cfg)
    assert np.allclose(dc, -2 * 0.2 * (0.7 - 0.05) * np.eye(16), atol=1e-12)


def test_drift_rhs_flags_non_finite_state():
    cfg = SimulationConfig(n_points=16, dx=1.0)
    z = np.zeros((16, 16))
    s = GaussianFieldState(SMALL, 0.0, np.full(16, np.inf), z, z)
    with pytest.raises(NumericalError):
        drift_rhs(s, cfg)


@pytest.mark.parametrize("closure_sigma", [1.0])
def test_one_site_rhs_matches_fock_oracle(closure_sigma):
    """Single site at nbar = 1 (g = -1): exact moment derivatives of the master equation."""
    g = -1.0
    fc = FockConfig(n_modes=1, cutoff=30, g=g, gamma=0.1, n_th=0.02)
    for rho in (coherent_density([0.8 + 0.3j], 30).rho,
                displaced_squeezed_thermal(0.7 - 0.2j, 0.25, 0.6, 0.05, 30).rho):
        mean, c, m = moments_of(rho, fc)
        exact = moment_derivatives(rho, fc)
        approx = moment_rhs(mean, c, m, np.zeros((1, 1)), g, 0.1, 0.02, closure_sigma)
        ref = max(1.0, float(abs(mean[0]) ** 2 + c[0, 0].real))
        for a, b in zip(approx, exact):
            # Coherent states are exactly closed; the squeezed one has a tiny third cumulant from truncation.
            assert np.max(np.abs(a - b)) / ref < 1e-6


def test_two_mode_rhs_matches_fock_oracle():
    fc = FockConfig(n_modes=2, cutoff=18, g=-0.4, hopping=0.3, gamma=0.05)
    rho = coherent_density([0.9, -0.4 + 0.5j], 18).rho
    mean, c, m = moments_of(rho, fc)
    exact = moment_derivatives(rho, fc)
    approx = moment_rhs(mean, c, m, fc.h_linear, fc.g, fc.gamma, fc.n_th, 1.0)
    for a, b in zip(approx, exact):
        assert np.max(np.abs(a - b)) < 1e-8


def test_nonlinear_kernel_matches_dense_rk4():
    s = random_state(SMALL, 2)
    b, c, m = nonlinear_rk4(np.array(s.mean), np.array(s.c_norm), np.array(s.m_anom), -0.05, 1.0, 0.01)
    ref = rk4_dense(s.mean, s.c_norm, s.m_anom, np.zeros((16, 16)), -0.05, 0.0, 0.0, 1.0, 0.01)
    for x, y in zip((b, c, m), ref):
        assert np.allclose(x, y, atol=1e-13)


def test_linear_propagator_matches_dense_integration():
    cfg = SimulationConfig(nbar=0.0, gamma_td=0.1, n_th=0.3, n_points=16, dx=1.0)
    s = random_state(SMALL, 3)
    tau = 0.2
    out = LinearPropagator(SMALL, cfg, tau)(np.array(s.mean), np.array(s.c_norm), np.array(s.m_anom))
    y = (s.mean, s.c_norm, s.m_anom)
    h = kinetic_generator(SMALL)
    for _ in range(400):
        y = rk4_dense(*y, h, 0.0, 0.1, 0.3, 1.0, tau / 400)
    for a, b in zip(out, y):
        assert np.allclose(a, b, atol=1e-11)


def test_free_pulse_disperses_symmetrically():
    grid = GridSpec(128, 0.25)
    cfg = SimulationConfig(nbar=0.0, n_points=128, dx=0.25, dt=0.01)
    mean = np.exp(-grid.xi**2)
    s = GaussianFieldState(grid, 0.0, mean, np.zeros((128, 128)), np.zeros((128, 128)))
    out = SplitStepIntegrator(cfg).advance(s, 100)
    dens = np.abs(out.mean) ** 2
    k = np.arange(1, 128)
    assert np.allclose(dens[k], dens[128 - k], atol=1e-12)
    assert dens[64] < 0.5  # the pulse broadened
    # Exact free propagation: the Gaussian amplitude peak is (1 + 4 t^2)^-1/4 at t = 1.
    assert dens[64] == pytest.approx(1 / np.sqrt(1 + 4.0), rel=1e-6)


def test_fused_advance_equals_repeated_steps():
    cfg = SimulationConfig(n_points=64, dx=0.25, dt=1e-3)
    s0 = make_fundamental_soliton(cfg.grid, cfg)
    integ = SplitStepIntegrator(cfg)
    a = integ.advance(s0, 5)
    b = s0
    for _ in range(5):
        b = step(b, cfg.dt, cfg)
    for x, y in zip((a.mean, a.c_norm, a.m_anom), (b.mean, b.c_norm, b.m_anom)):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12 * np.max(np.abs(y)))
    assert a.time == pytest.approx(5e-3)


def test_step_preserves_hermiticity_and_symmetry_exactly():
    cfg = SimulationConfig(n_points=64, dx=0.25)
    s = SplitStepIntegrator(cfg).advance(make_fundamental_soliton(cfg.grid, cfg), 20)
    assert np.array_equal(s.c_norm, s.c_norm.conj().T)
    assert np.array_equal(s.m_anom, s.m_anom.T)


def test_photon_number_conserved_over_one_dispersion_time():
    cfg = SimulationConfig()
    s0 = make_fundamental_soliton(cfg.grid, cfg)
    s1 = SplitStepIntegrator(cfg).advance(s0, 1000)
    n0, n1 = total_photon_number(s0), total_photon_number(s1)
    assert abs(n1 - n0) / n0 < 1e-6


def test_linear_limit_damped_closed_form_short():
    cfg = SimulationConfig(nbar=0.0, gamma_td=0.05, n_th=0.0, n_points=32, dx=0.5, dt=0.01)
    grid = cfg.grid
    s0 = random_state(grid, 4)
    s1 = SplitStepIntegrator(cfg).advance(s0, 100)
    t = 1.0
    b0, c0, m0 = to_frequency(grid, s0.mean, s0.c_norm, s0.m_anom)
    b1, c1, m1 = to_frequency(grid, s1.mean, s1.c_norm, s1.m_anom)
    assert np.allclose(np.abs(b1), np.exp(-0.05 * t) * np.abs(b0), atol=1e-10)
    assert np.allclose(np.diagonal(c1).real, np.exp(-0.1 * t) * np.diagonal(c0).real, atol=1e-10)


def test_stability_guard_aborts_on_energy_jump():
    cfg = SimulationConfig(n_points=64, dx=0.25)
    integ = SplitStepIntegrator(cfg)
    beta = np.ones(64, complex)
    with pytest.raises(StabilityError) as info:
        integ._guard(beta, np.zeros((64, 64)), np.zeros((64, 64)), 10.0, 0.5)
    assert info.value.time == 0.5


def test_symmetrization_abort_on_large_drift():
    c = np.eye(4, dtype=complex)
    c[0, 1] = 1e-3
    with pytest.raises(NumericalError):
        dynamics._symmetrize(c, np.zeros((4, 4), complex), 0.1)


def test_evolve_snapshots():
    cfg = SimulationConfig(n_points=64, dx=0.25, t_final=0.0)
    s0 = make_fundamental_soliton(cfg.grid, cfg)
    snaps = evolve(s0, cfg)
    assert len(snaps) == 1 and snaps[0] is s0
    cfg = cfg.replace(t_final=0.03, snapshot_interval=0.01)
    snaps = evolve(s0, cfg)
    assert [s.time for s in snaps] == pytest.approx([0.0, 0.01, 0.02, 0.03], abs=1e-15)
    with pytest.raises(ValueError):
        evolve(s0, cfg.replace(snapshot_interval=0.0105))


def test_evolution_is_deterministic():
    cfg = SimulationConfig(n_points=64, dx=0.25, t_final=0.02, snapshot_interval=0.01)
    s0 = make_fundamental_soliton(cfg.grid, cfg)
    a, b = evolve(s0, cfg)[-1], evolve(s0, cfg)[-1]
    assert np.array_equal(a.c_norm, b.c_norm) and np.array_equal(a.mean, b.mean)


def test_time_reversal_returns_initial_mean():
    """With gamma = 0 the generator is real: conjugating the state reverses the motion."""
    cfg = SimulationConfig(dt=1e-3)
    s0 = make_fundamental_soliton(cfg.grid, cfg)
    integ = SplitStepIntegrator(cfg)
    s1 = integ.advance(s0, 500)
    back = GaussianFieldState(s1.grid, 0.0, s1.mean.conj(), s1.c_norm.conj(), s1.m_anom.conj())
    s2 = integ.advance(back, 500)
    err = np.max(np.abs(s2.mean.conj() - s0.mean)) / np.max(np.abs(s0.mean))
    assert err < 1e-4


def _quadrature_covariance(c, m):
    """Symmetrized covariance of (x_1..x_n, p_1..p_n) with b = (x + i p)/sqrt(2)."""
    n = c.shape[0]
    # <{db_k, db_l^dag}>/2 = C_lk + delta/2 ; <db_k db_l> = M_kl
    g = c.T + 0.5 * np.eye(n)  # <db_k db_l^dag> symmetrized part
    xx = 0.5 * (2 * g.real + 2 * m.real)
    pp = 0.5 * (2 * g.real - 2 * m.real)
    xp = 0.5 * (2 * m.imag - 2 * g.imag)
    v = np.block([[xx, xp], [xp.T, pp]])
    return 0.5 * (v + v.T)


def test_linearized_dynamics_is_symplectic():
    """A pure initial state stays pure under the gamma = 0 linearized flow (Bogoliubov map)."""
    cfg = SimulationConfig(n_points=32, dx=0.5, n_th=0.0, closure="linearized", dt=1e-3)
    s0 = make_fundamental_soliton(cfg.grid, cfg)
    s1 = SplitStepIntegrator(cfg).advance(s0, 10_000)
    n = cfg.n_points
    assert np.max(np.abs(s1.c_norm - s1.c_norm.conj().T)) == 0.0
    v = _quadrature_covariance(s1.c_norm, s1.m_anom)
    omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    # Pure Gaussian state: (2 V Omega)^2 = -1.
    p = 2 * v @ omega
    scale = max(1.0, float(np.max(np.abs(p))) ** 2)
    assert np.max(np.abs(p @ p + np.eye(2 * n))) / scale < 1e-8
