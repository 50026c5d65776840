"""Time evolution of the Gaussian cumulants under dispersion, Kerr and loss.

The lattice Hamiltonian (units of t_d, hbar = 1) is

    H = sum_q omega_q^2 / 2 * bt_q^dag bt_q + g/2 sum_k b_k^dag b_k^dag b_k b_k,

with g = -1/(nbar dx), and loss enters through the standard thermal Lindblad
channel with amplitude rate gamma_td.  Fluctuations obey the Gaussian
(Hartree-Fock-Bogoliubov) closure: the effective single-particle generator
is h = h_kin + diag(2 g (|beta|^2 + sigma C_kk)) and the pairing field is
Delta_k = g (beta_k^2 + sigma M_kk), with sigma = 0 for the linearized
closure.

Integration is Strang split: the linear part (dispersion and loss) is
applied exactly in the frequency basis, the local nonlinear part with RK4.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterator

import numba
import numpy as np
import scipy.fft as sfft

from .lattice import GaussianFieldState, GridSpec, SimulationConfig, total_photon_number

log = logging.getLogger(__name__)

# Hermiticity/symmetry drift above this (relative) aborts the run.
SYMMETRY_ABORT = 1e-8
# Relative one-step photon-number jump at gamma = 0 treated as instability.
ENERGY_JUMP_ABORT = 1e-3

_workers = 1


def set_fft_workers(n: int) -> None:
    """Thread count for the per-step FFTs; results do not depend on it."""
    global _workers
    _workers = max(1, int(n))


class NumericalError(RuntimeError):
    def __init__(self, message: str, time: float | None = None):
        if time is not None:
            message = f"{message} (t = {time:.6g} t_d)"
        super().__init__(message)
        self.time = time


class StabilityError(NumericalError):
    pass


# ---------------------------------------------------------------------------
# Frequency-basis transforms.
#
# F[q, k] = exp(+i omega_q xi_k) / sqrt(n), rows in sorted q order.  Then
#   mean_f = F beta,  c_f = conj(F) C F^T,  m_f = F M F^T.
# F = S P IFFT with S the (-1)^q sign and P the fftshift permutation; the
# propagator only needs the unshifted ("natural") order since S and P cancel.


def fourier_matrix(grid: GridSpec) -> np.ndarray:
    return np.exp(1j * np.outer(grid.omega, grid.xi)) / np.sqrt(grid.n_points)


def _sign(grid: GridSpec) -> np.ndarray:
    return np.where(grid.q % 2 == 0, 1.0, -1.0)


def to_frequency(grid: GridSpec, mean, c_norm, m_anom):
    """(mean_f, c_f, m_f) in sorted frequency order."""
    s = _sign(grid)
    bf = s * np.fft.fftshift(sfft.ifft(mean, norm="ortho", workers=_workers))
    cf = sfft.fft(sfft.ifft(c_norm, axis=1, norm="ortho", workers=_workers), axis=0, norm="ortho", workers=_workers)
    cf = np.fft.fftshift(cf) * np.outer(s, s)
    mf = sfft.ifft2(m_anom, norm="ortho", workers=_workers)
    mf = np.fft.fftshift(mf) * np.outer(s, s)
    return bf, cf, mf


def from_frequency(grid: GridSpec, mean_f, c_f, m_f):
    """Inverse of :func:`to_frequency`."""
    s = _sign(grid)
    ss = np.outer(s, s)
    beta = sfft.fft(np.fft.ifftshift(s * mean_f), norm="ortho", workers=_workers)
    c = np.fft.ifftshift(c_f * ss)
    c = sfft.fft(sfft.ifft(c, axis=0, norm="ortho", workers=_workers), axis=1, norm="ortho", workers=_workers)
    m = sfft.fft2(np.fft.ifftshift(m_f * ss), norm="ortho", workers=_workers)
    return beta, c, m


def kinetic_generator(grid: GridSpec) -> np.ndarray:
    """Dense single-particle kinetic matrix F^dag diag(omega^2/2) F (real symmetric)."""
    f = fourier_matrix(grid)
    h = f.conj().T @ (0.5 * grid.omega[:, None] ** 2 * f)
    return np.real_if_close(0.5 * (h + h.conj().T), tol=1e6).astype(np.complex128)


# ---------------------------------------------------------------------------
# Dense right-hand side (any single-particle generator; used for small systems
# and as the reference the split-step integrator is checked against).


@dataclass(frozen=True)
class DriftCoefficients:
    h_linear: np.ndarray
    h_diag: np.ndarray
    delta_diag: np.ndarray
    g: float
    sigma: float


def drift_coefficients(mean, c_norm, m_anom, h_linear, g, sigma) -> DriftCoefficients:
    cd = np.diagonal(c_norm)
    md = np.diagonal(m_anom)
    h_diag = 2.0 * g * (np.abs(mean) ** 2 + sigma * cd.real)
    delta = g * (mean**2 + sigma * md)
    return DriftCoefficients(np.asarray(h_linear), h_diag, delta, g, sigma)


def moment_rhs(mean, c_norm, m_anom, h_linear, g, gamma, n_th, sigma):
    """Time derivatives (d mean, dC, dM) of the Gaussian cumulants."""
    mean = np.asarray(mean, dtype=np.complex128)
    c, m = np.asarray(c_norm), np.asarray(m_anom)
    n = mean.size
    co = drift_coefficients(mean, c, m, h_linear, g, sigma)
    cd, md = np.diagonal(c), np.diagonal(m)
    kerr = (np.abs(mean) ** 2 + 2.0 * sigma * cd) * mean + sigma * md * mean.conj()
    dmean = -1j * (h_linear @ mean) - 1j * g * kerr - gamma * mean

    h = h_linear + np.diag(co.h_diag)
    d = co.delta_diag
    dc = 1j * (h.conj() @ c - c @ h.T) + 1j * (d.conj()[:, None] * m - m.conj() * d[None, :])
    dc += -2.0 * gamma * c + 2.0 * gamma * n_th * np.eye(n)
    dm = -1j * (h @ m + m @ h.T) - 1j * (d[:, None] * c + c.conj() * d[None, :]) - 1j * np.diag(d)
    dm += -2.0 * gamma * m
    return dmean, dc, dm


def drift_rhs(state: GaussianFieldState, config: SimulationConfig):
    """Cumulant time derivatives for a state on the full spectral grid."""
    for name in ("mean", "c_norm", "m_anom"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise NumericalError(f"non-finite entries in {name}", state.time)
    h = kinetic_generator(state.grid)
    return moment_rhs(
        state.mean, state.c_norm, state.m_anom, h, config.g, config.gamma_td, config.n_th, config.sigma
    )


def rk4_dense(mean, c_norm, m_anom, h_linear, g, gamma, n_th, sigma, dt):
    """One classical RK4 step of :func:`moment_rhs`."""
    y = (np.asarray(mean, dtype=np.complex128), np.asarray(c_norm, dtype=np.complex128),
         np.asarray(m_anom, dtype=np.complex128))

    def f(v):
        return moment_rhs(*v, h_linear, g, gamma, n_th, sigma)

    k1 = f(y)
    k2 = f(tuple(a + 0.5 * dt * k for a, k in zip(y, k1)))
    k3 = f(tuple(a + 0.5 * dt * k for a, k in zip(y, k2)))
    k4 = f(tuple(a + dt * k for a, k in zip(y, k3)))
    return tuple(a + dt / 6.0 * (p + 2 * q + 2 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4))


# ---------------------------------------------------------------------------
# Local nonlinear substep.  The site variables (beta_k, C_kk, M_kk) form a
# closed system, and every off-diagonal pair (C_kl, M_kl) only sees the site
# fields h_k, h_l, Delta_k, Delta_l.  So the full-matrix RK4 step factorises
# into a per-site RK4 that records the stage fields, followed by an
# independent RK4 per matrix element.  This is the same update as RK4 on the
# coupled system, just without n^2-sized temporaries.


@numba.njit(cache=True, inline="always")
def _site_fields(b, c, m, g, sigma):
    h = 2.0 * g * (b.real * b.real + b.imag * b.imag + sigma * c.real)
    d = g * (b * b + sigma * m)
    return h, d


@numba.njit(cache=True, inline="always")
def _site_deriv(b, c, m, g, sigma):
    h, d = _site_fields(b, c, m, g, sigma)
    nb = b.real * b.real + b.imag * b.imag
    db = -1j * g * ((nb + 2.0 * sigma * c) * b + sigma * m * np.conj(b))
    dc = 1j * (np.conj(d) * m - np.conj(m) * d)
    dm = -2j * h * m - 1j * (d * c + np.conj(c) * d) - 1j * d
    return db, dc, dm, h, d


@numba.njit(cache=True)
def nonlinear_rk4(beta, c, m, g, sigma, dt):
    """RK4 step of the on-site Kerr part; returns new (beta, C, M)."""
    n = beta.size
    hs = np.empty((4, n))
    ds = np.empty((4, n), dtype=np.complex128)
    nb = np.empty_like(beta)
    nc = np.empty_like(c)
    nm = np.empty_like(m)
    sixth = dt / 6.0
    for k in range(n):
        b0, c0, m0 = beta[k], c[k, k], m[k, k]
        b1, c1, m1, h1, d1 = _site_deriv(b0, c0, m0, g, sigma)
        b2, c2, m2, h2, d2 = _site_deriv(b0 + 0.5 * dt * b1, c0 + 0.5 * dt * c1, m0 + 0.5 * dt * m1, g, sigma)
        b3, c3, m3, h3, d3 = _site_deriv(b0 + 0.5 * dt * b2, c0 + 0.5 * dt * c2, m0 + 0.5 * dt * m2, g, sigma)
        b4, c4, m4, h4, d4 = _site_deriv(b0 + dt * b3, c0 + dt * c3, m0 + dt * m3, g, sigma)
        hs[0, k], hs[1, k], hs[2, k], hs[3, k] = h1, h2, h3, h4
        ds[0, k], ds[1, k], ds[2, k], ds[3, k] = d1, d2, d3, d4
        nb[k] = b0 + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        nc[k, k] = c0 + sixth * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        nm[k, k] = m0 + sixth * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    half = (0.0, 0.5 * dt, 0.5 * dt, dt)
    for k in range(n):
        for l in range(k + 1, n):
            c0 = c[k, l]
            m0 = m[k, l]
            cs = c0
            ms = m0
            acc_c = 0.0j
            acc_m = 0.0j
            for s in range(4):
                w = 1.0 if (s == 0 or s == 3) else 2.0
                dk = ds[s, k]
                dl = ds[s, l]
                dcs = 1j * (hs[s, k] - hs[s, l]) * cs + 1j * (np.conj(dk) * ms - np.conj(ms) * dl)
                dms = -1j * (hs[s, k] + hs[s, l]) * ms - 1j * (dk * cs + np.conj(cs) * dl)
                acc_c += w * dcs
                acc_m += w * dms
                if s < 3:
                    cs = c0 + half[s + 1] * dcs
                    ms = m0 + half[s + 1] * dms
            vc = c0 + sixth * acc_c
            vm = m0 + sixth * acc_m
            nc[k, l] = vc
            nc[l, k] = np.conj(vc)
            nm[k, l] = vm
            nm[l, k] = vm
    return nb, nc, nm


# ---------------------------------------------------------------------------
# Exact linear propagator.


class LinearPropagator:
    """Exact dispersion + loss evolution over a fixed time ``tau``."""

    def __init__(self, grid: GridSpec, config: SimulationConfig, tau: float):
        self.grid = grid
        self.tau = tau
        self.n_th = config.n_th
        w = np.fft.ifftshift(grid.omega)  # natural FFT order
        ph = np.exp(-0.5j * w**2 * tau)
        decay = np.exp(-config.gamma_td * tau)
        self.mean_factor = ph * decay
        self.c_factor = np.outer(ph.conj(), ph) * decay**2
        self.m_factor = np.outer(ph, ph) * decay**2

    def __call__(self, beta, c, m):
        w = _workers
        bf = sfft.ifft(beta, norm="ortho", workers=w)
        beta = sfft.fft(bf * self.mean_factor, norm="ortho", overwrite_x=True, workers=w)
        cf = sfft.fft(sfft.ifft(c, axis=1, norm="ortho", workers=w), axis=0, norm="ortho", overwrite_x=True, workers=w)
        mf = sfft.ifft2(m, norm="ortho", workers=w)
        _apply_factors(cf, mf, self.c_factor, self.m_factor, self.n_th)
        c = sfft.fft(sfft.ifft(cf, axis=0, norm="ortho", overwrite_x=True, workers=w), axis=1, norm="ortho",
                     overwrite_x=True, workers=w)
        m = sfft.fft2(mf, norm="ortho", overwrite_x=True, workers=w)
        return beta, c, m


@numba.njit(cache=True)
def _apply_factors(cf, mf, c_factor, m_factor, n_th):
    # C relaxes toward n_th * I; the identity is invariant under the phases.
    n = cf.shape[0]
    for k in range(n):
        for l in range(n):
            if k == l:
                cf[k, l] = n_th + (cf[k, l] - n_th) * c_factor[k, l]
            else:
                cf[k, l] *= c_factor[k, l]
            mf[k, l] *= m_factor[k, l]


@numba.njit(cache=True)
def _symmetrize_inplace(c, m):
    """Project C onto Hermitian and M onto symmetric matrices in place.

    Returns the largest removed deviation relative to max(1, max |entry|);
    non-finite entries make the result NaN or inf.
    """
    n = c.shape[0]
    dev = 0.0
    scale = 1.0
    probe = 0.0
    for k in range(n):
        for l in range(k, n):
            a = c[k, l]
            b = c[l, k]
            x = m[k, l]
            y = m[l, k]
            probe += a.real + a.imag + x.real + x.imag
            dev = max(dev, abs(a - np.conj(b)), abs(x - y))
            scale = max(scale, abs(a), abs(x))
            u = 0.5 * (a + np.conj(b))
            v = 0.5 * (x + y)
            c[k, l] = u
            c[l, k] = np.conj(u)
            m[k, l] = v
            m[l, k] = v
    if not np.isfinite(probe):
        return np.nan
    return dev / scale


def _symmetrize(c, m, time):
    dev = _symmetrize_inplace(c, m)
    if not dev <= SYMMETRY_ABORT:
        if np.isnan(dev):
            raise NumericalError("non-finite state entries", time)
        raise NumericalError(f"Hermiticity/symmetry drift {dev:.3e} exceeds {SYMMETRY_ABORT:g}", time)
    if dev > 1e-12:
        log.debug("symmetrization removed relative drift %.3e at t=%.4f", dev, time)
    return c, m


class SplitStepIntegrator:
    """Strang split-step propagation of a GaussianFieldState.

    Consecutive half linear steps are fused, so ``advance(k)`` costs k
    nonlinear sub-steps and k + 1 linear transforms while producing the same
    result as k calls of :meth:`step`.
    """

    def __init__(self, config: SimulationConfig, dt: float | None = None, grid: GridSpec | None = None):
        self.config = config
        self.dt = config.dt if dt is None else float(dt)
        self.grid = config.grid if grid is None else grid
        self._half = LinearPropagator(self.grid, config, 0.5 * self.dt)
        self._full = LinearPropagator(self.grid, config, self.dt)
        self._check_energy = config.gamma_td == 0

    def _nonlinear(self, beta, c, m):
        return nonlinear_rk4(beta, c, m, self.config.g, self.config.sigma, self.dt)

    def _guard(self, beta, c, m, n_before, time):
        if not np.all(np.isfinite(beta)):
            raise NumericalError("non-finite mean field", time)
        if self._check_energy:
            n_after = float(np.vdot(beta, beta).real + np.trace(c).real)
            if not np.isfinite(n_after):
                raise NumericalError("non-finite state entries", time)
            if n_before > 0 and abs(n_after - n_before) > ENERGY_JUMP_ABORT * n_before:
                raise StabilityError(
                    f"one-step photon-number jump {abs(n_after - n_before) / n_before:.3e}; reduce dt", time
                )
            return n_after
        return n_before

    def advance(self, state: GaussianFieldState, n_steps: int) -> GaussianFieldState:
        if state.grid != self.grid:
            raise ValueError("state grid does not match the integrator grid")
        if n_steps == 0:
            return state
        beta = np.array(state.mean)
        c = np.array(state.c_norm)
        m = np.array(state.m_anom)
        t0 = state.time
        n_ph = total_photon_number(state)
        beta, c, m = self._half(beta, c, m)
        for i in range(n_steps):
            beta, c, m = self._nonlinear(beta, c, m)
            last = i == n_steps - 1
            beta, c, m = (self._half if last else self._full)(beta, c, m)
            t = t0 + (i + 1) * self.dt
            c, m = _symmetrize(c, m, t)
            n_ph = self._guard(beta, c, m, n_ph, t)
        return GaussianFieldState(self.grid, t0 + n_steps * self.dt, beta, c, m)

    def step(self, state: GaussianFieldState) -> GaussianFieldState:
        return self.advance(state, 1)


def step(state: GaussianFieldState, dt: float, config: SimulationConfig) -> GaussianFieldState:
    """One Strang step: half linear, full nonlinear (RK4), half linear."""
    return SplitStepIntegrator(config, dt, state.grid).step(state)


def _steps_between(interval: float, dt: float) -> int:
    k = round(interval / dt)
    if k < 1 or abs(k * dt - interval) > 1e-9 * max(1.0, interval):
        raise ValueError(f"snapshot interval {interval} is not a multiple of dt = {dt}")
    return k


def iter_evolve(
    state: GaussianFieldState,
    config: SimulationConfig,
    t_final: float | None = None,
    progress: Callable[[GaussianFieldState], None] | None = None,
) -> Iterator[GaussianFieldState]:
    """Yield the initial state and one snapshot every ``snapshot_interval``."""
    t_final = config.t_final if t_final is None else t_final
    per = _steps_between(config.snapshot_interval, config.dt)
    n_snap = round(t_final / config.snapshot_interval)
    if abs(n_snap * config.snapshot_interval - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be a multiple of snapshot_interval")
    integ = SplitStepIntegrator(config, grid=state.grid)
    if progress:
        progress(state)
    yield state
    t0 = state.time
    for j in range(1, n_snap + 1):
        state = integ.advance(state, per)
        # Snapshot times on an exact arithmetic progression.
        state = GaussianFieldState(state.grid, t0 + j * per * config.dt, state.mean, state.c_norm, state.m_anom)
        if progress:
            progress(state)
        yield state


def evolve(state: GaussianFieldState, config: SimulationConfig, progress=None) -> list[GaussianFieldState]:
    return list(iter_evolve(state, config, progress=progress))
