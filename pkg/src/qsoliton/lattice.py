"""Discretized field state, unit conventions and initial conditions.

All quantities are dimensionless: positions in units of the initial pulse
width x0, times in units of the dispersion time t_d = x0**2 / |omega2|,
frequencies in units of omega0 = 1/x0.  The lattice mode operators
b_k = sqrt(A dx) a(x_k) obey [b_k, b_l^dagger] = delta_kl, so photon numbers
are plain sums over modes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace
from functools import cached_property

import numpy as np
from scipy import constants

CLOSURES = ("linearized", "self-consistent")

# Half-open bin resolution offset, in units of omega0.
BIN_EPS = 1e-9


class PulseFitWarning(UserWarning):
    """The grid is too short to hold the fundamental soliton comfortably."""


class PulseDoesNotFitError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Periodic spatial grid centered on xi = 0."""

    n_points: int = 200
    dx: float = 0.1

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8 or self.n_points % 2:
            raise ValueError(f"n_points must be an even integer >= 8, got {self.n_points}")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")

    @property
    def length(self) -> float:
        return self.n_points * self.dx

    @cached_property
    def xi(self) -> np.ndarray:
        """Grid coordinates; index n/2 sits at xi = 0."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.dx

    @cached_property
    def q(self) -> np.ndarray:
        return np.arange(-self.n_points // 2, self.n_points // 2)

    @cached_property
    def omega(self) -> np.ndarray:
        """Sorted bin frequencies omega_q = 2 pi q / L, q = -n/2 ... n/2 - 1."""
        return 2.0 * np.pi * self.q / self.length

    @property
    def bin_spacing(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def center_bin(self) -> int:
        """Sorted index of the omega = 0 bin."""
        return self.n_points // 2

    def mirror_bin(self, index: int) -> int:
        """Sorted index of the bin at -omega (valid for index >= 1)."""
        return self.n_points - index


@dataclass(frozen=True)
class SimulationConfig:
    nbar: float = 1e9
    gamma_td: float = 0.0
    n_th: float = 1e-16
    closure: str = "self-consistent"
    dt: float = 1e-3
    t_final: float = 16.0
    snapshot_interval: float = 0.1
    n_points: int = 200
    dx: float = 0.1

    def __post_init__(self):
        if not self.nbar >= 0:
            raise ValueError(f"nbar must be nonnegative, got {self.nbar}")
        if not self.gamma_td >= 0:
            raise ValueError(f"gamma_td must be >= 0, got {self.gamma_td}")
        if not self.n_th >= 0:
            raise ValueError(f"n_th must be >= 0, got {self.n_th}")
        if self.closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}, got {self.closure!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= 0:
            raise ValueError(f"t_final must be >= 0, got {self.t_final}")
        if not self.snapshot_interval > 0:
            raise ValueError(f"snapshot_interval must be positive, got {self.snapshot_interval}")
        # Validates n_points/dx.
        GridSpec(self.n_points, self.dx)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n_points, self.dx)

    @property
    def g(self) -> float:
        """On-site Kerr coupling of the lattice Hamiltonian (focusing sign).

        nbar = 0 means no mean field; the coupling is then taken as zero.
        """
        if self.nbar == 0:
            return 0.0
        return -1.0 / (self.nbar * self.dx)

    @property
    def sigma(self) -> float:
        return 1.0 if self.closure == "self-consistent" else 0.0

    def replace(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianFieldState:
    """First and second cumulants of the lattice field.

    mean[k] = <b_k>, c_norm[k, l] = <db_k^dag db_l>, m_anom[k, l] = <db_k db_l>.
    Arrays are copied on construction and made read-only.
    """

    grid: GridSpec
    time: float
    mean: np.ndarray
    c_norm: np.ndarray
    m_anom: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "c_norm", _frozen(self.c_norm))
        object.__setattr__(self, "m_anom", _frozen(self.m_anom))
        if self.mean.shape != (n,) or self.c_norm.shape != (n, n) or self.m_anom.shape != (n, n):
            raise ValueError("state array shapes do not match the grid")

    @property
    def n_modes(self) -> int:
        return self.grid.n_points

    def check(self, psd_tol: float = 1e-10, sym_tol: float = 1e-12) -> None:
        """Raise ValueError if the cumulants are not physical."""
        for name in ("mean", "c_norm", "m_anom"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")
        c, m = self.c_norm, self.m_anom
        scale = max(1.0, float(np.max(np.abs(c))), float(np.max(np.abs(m))))
        if np.max(np.abs(c - c.conj().T)) > sym_tol * scale:
            raise ValueError("c_norm is not Hermitian")
        if np.max(np.abs(m - m.T)) > sym_tol * scale:
            raise ValueError("m_anom is not symmetric")
        lam = min_relative_eigenvalue(c)
        if lam < -psd_tol:
            raise ValueError(f"c_norm not positive semidefinite (relative eigenvalue {lam:.3e})")


def min_relative_eigenvalue(c_norm: np.ndarray) -> float:
    """Smallest eigenvalue of c_norm divided by trace/n (or by 1 if the trace is tiny)."""
    n = c_norm.shape[0]
    scale = max(float(np.trace(c_norm).real) / n, 1e-300)
    lam = np.linalg.eigvalsh(0.5 * (c_norm + c_norm.conj().T))[0]
    return float(lam / scale) if scale > 1e-12 else float(lam)


@dataclass(frozen=True)
class SpectralWindow:
    """Frequency interval (lo, hi) in units of omega0."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"window needs lo < hi, got ({self.lo}, {self.hi})")

    def bin_range(self, grid: GridSpec) -> tuple[int, int]:
        """Half-open sorted-index range [start, stop) of the resolved bins.

        A bin belongs to the window iff lo - eps <= omega_q < hi - eps.
        """
        w = grid.omega
        start = int(np.searchsorted(w, self.lo - BIN_EPS, side="left"))
        stop = int(np.searchsorted(w, self.hi - BIN_EPS, side="left"))
        if stop <= start:
            raise EmptyWindowError(f"window ({self.lo}, {self.hi}) contains no frequency bin")
        return start, stop

    def bins(self, grid: GridSpec) -> np.ndarray:
        start, stop = self.bin_range(grid)
        return np.arange(start, stop)

    @classmethod
    def from_bins(cls, grid: GridSpec, start: int, stop: int) -> "SpectralWindow":
        """Window whose edges sit half a bin outside bins start .. stop-1."""
        if not 0 <= start < stop <= grid.n_points:
            raise ValueError(f"invalid bin range [{start}, {stop})")
        half = 0.5 * grid.bin_spacing
        return cls(float(grid.omega[start] - half), float(grid.omega[stop - 1] + half))

    @classmethod
    def narrow(cls, omega: float, half_width: float) -> "SpectralWindow":
        return cls(omega - half_width, omega + half_width)

    def overlaps(self, other: "SpectralWindow", grid: GridSpec) -> bool:
        a0, a1 = self.bin_range(grid)
        b0, b1 = other.bin_range(grid)
        return a0 < b1 and b0 < a1


class EmptyWindowError(ValueError):
    pass


def make_fundamental_soliton(
    grid: GridSpec, config: SimulationConfig, strict: bool = True
) -> GaussianFieldState:
    """Displaced thermal state whose mean is the classical fundamental soliton.

    beta_k = sqrt(nbar dx) sech(xi_k), C = n_th * I, M = 0.  With
    u = beta / sqrt(nbar dx) the mean-field equation is
    i du/dtau = -1/2 u'' - |u|^2 u, which sech(xi) solves.

    A grid shorter than 10 x0 raises PulseDoesNotFitError, or only warns when
    ``strict`` is False.
    """
    if grid.length < 10.0:
        msg = f"grid length {grid.length:g} x0 is shorter than 10 x0; the soliton tails wrap"
        if strict:
            raise PulseDoesNotFitError(msg)
        warnings.warn(msg, PulseFitWarning, stacklevel=2)
    n = grid.n_points
    amp = math.sqrt(config.nbar * grid.dx)
    mean = amp / np.cosh(grid.xi)
    return GaussianFieldState(
        grid=grid,
        time=0.0,
        mean=mean.astype(np.complex128),
        c_norm=config.n_th * np.eye(n, dtype=np.complex128),
        m_anom=np.zeros((n, n), dtype=np.complex128),
    )


def coherent_state(grid: GridSpec, mean: np.ndarray, time: float = 0.0) -> GaussianFieldState:
    n = grid.n_points
    z = np.zeros((n, n), dtype=np.complex128)
    return GaussianFieldState(grid, time, np.asarray(mean, dtype=np.complex128), z, z)


def thermal_occupation(wavelength_um: float, temperature_k: float) -> float:
    """Bose occupation [exp(hbar omega_c / k_B T) - 1]^-1 at carrier wavelength lambda."""
    if not wavelength_um > 0:
        raise ValueError("wavelength must be positive")
    if not temperature_k > 0:
        raise ValueError("temperature must be positive")
    omega_c = 2.0 * np.pi * constants.c / (wavelength_um * 1e-6)
    x = constants.hbar * omega_c / (constants.k * temperature_k)
    # exp(-x) / (1 - exp(-x)) underflows cleanly to 0 instead of overflowing.
    return float(np.exp(-x) / -np.expm1(-x))


def kerr_coefficient(chi3: float, v_gr: float, k_c: float, eps_r: float, eps_0: float = constants.epsilon_0) -> float:
    """Kerr constant chi = 3 chi3 hbar (v_gr k_c)^2 / (4 eps_r^2 eps_0)."""
    if not eps_r > 0 or not eps_0 > 0:
        raise ValueError("permittivities must be positive")
    return 3.0 * chi3 * constants.hbar * (v_gr * k_c) ** 2 / (4.0 * eps_r**2 * eps_0)


def total_photon_number(state: GaussianFieldState) -> float:
    return float(np.sum(np.abs(state.mean) ** 2) + np.trace(state.c_norm).real)
