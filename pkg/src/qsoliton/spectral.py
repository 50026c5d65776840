"""Spectral photon-number statistics of Gaussian states.

A snapshot is rotated to the frequency bins bt_q = sum_k F[q, k] b_k with
F[q, k] = exp(+i omega_q xi_k)/sqrt(n).  For a Gaussian state all
normally-ordered fourth moments follow from Wick's theorem:

    Cov(q, q') = <:dn_q dn_q':>
               = 2 Re[beta_q beta_q'^* c_qq'] + 2 Re[beta_q^* beta_q'^* m_qq']
                 + |c_qq'|^2 + |m_qq'|^2

with c_qq' = <dbt_q^dag dbt_q'> and m_qq' = <dbt_q dbt_q'>.  Window
statistics are bin sums of n_q and Cov; prefix sums make every window
evaluation O(1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .dynamics import to_frequency
from .lattice import EmptyWindowError, GaussianFieldState, GridSpec, SpectralWindow


# Bins and windows holding less than this fraction of a snapshot's photons are
# below the resolution of prefix-sum differences in double precision; the
# optimizers and narrow-band maps treat them as unresolvable.
RESOLUTION_FLOOR = 1e-9


class UndefinedStatisticError(ValueError):
    """A coefficient's denominator vanishes (e.g. a vacuum window)."""


class OverlappingWindowsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralMoments:
    grid: GridSpec
    time: float
    mean_f: np.ndarray
    c_f: np.ndarray
    m_f: np.ndarray
    n_per_bin: np.ndarray
    cov_nn: np.ndarray

    @cached_property
    def total(self) -> float:
        return float(np.sum(self.n_per_bin))

    @property
    def photon_floor(self) -> float:
        return RESOLUTION_FLOOR * self.total

    def resolved_bins(self) -> np.ndarray:
        return self.n_per_bin >= self.photon_floor

    @cached_property
    def n_prefix(self) -> np.ndarray:
        """S[i] = sum_{q < i} n_q."""
        out = np.zeros(self.grid.n_points + 1)
        np.cumsum(self.n_per_bin, out=out[1:])
        return out

    @cached_property
    def cov_prefix(self) -> np.ndarray:
        """P[i, j] = sum_{q < i, q' < j} Cov(q, q')."""
        n = self.grid.n_points
        out = np.zeros((n + 1, n + 1))
        out[1:, 1:] = np.cumsum(np.cumsum(self.cov_nn, axis=0), axis=1)
        return out

    def narrow_eta11(self) -> np.ndarray:
        """Per-bin eta_11 = Cov(q,q) / (Cov(q,q) + n_q); NaN for unresolved bins or zero variance."""
        a = np.diagonal(self.cov_nn)
        v = a + self.n_per_bin
        ok = (v > 0) & self.resolved_bins()
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(ok, a / np.where(v > 0, v, 1.0), np.nan)


def to_spectral(state: GaussianFieldState) -> SpectralMoments:
    grid = state.grid
    bf, cf, mf = to_frequency(grid, state.mean, state.c_norm, state.m_anom)
    cf = 0.5 * (cf + cf.conj().T)
    mf = 0.5 * (mf + mf.T)
    n_q = np.abs(bf) ** 2 + np.diagonal(cf).real
    cov = wick_number_covariance(bf, cf, mf)
    for a in (bf, cf, mf, n_q, cov):
        a.setflags(write=False)
    return SpectralMoments(grid, state.time, bf, cf, mf, n_q, cov)


def wick_number_covariance(mean, c, m) -> np.ndarray:
    """Normally ordered number covariance matrix of a Gaussian state (any mode basis)."""
    cross_c = 2.0 * np.real(np.outer(mean, mean.conj()) * c)
    cross_m = 2.0 * np.real(np.outer(mean.conj(), mean.conj()) * m)
    cov = cross_c + cross_m + np.abs(c) ** 2 + np.abs(m) ** 2
    return 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# Window sums.  Windows are SpectralWindow objects or resolved [start, stop)
# index pairs.

Window = SpectralWindow | tuple


def _range(spec: SpectralMoments, w) -> tuple[int, int]:
    if isinstance(w, SpectralWindow):
        return w.bin_range(spec.grid)
    s, e = int(w[0]), int(w[1])
    if not 0 <= s < e <= spec.grid.n_points:
        raise EmptyWindowError(f"bin range [{s}, {e}) is empty or outside the grid")
    return s, e


def _n(spec, r):
    return spec.n_prefix[r[1]] - spec.n_prefix[r[0]]


def _cov(spec, r1, r2):
    p = spec.cov_prefix
    return p[r1[1], r2[1]] - p[r1[0], r2[1]] - p[r1[1], r2[0]] + p[r1[0], r2[0]]


def _disjoint(r1, r2) -> bool:
    return r1[1] <= r2[0] or r2[1] <= r1[0]


def window_photon_number(spec: SpectralMoments, w: Window) -> float:
    return float(_n(spec, _range(spec, w)))


def number_covariance(spec: SpectralMoments, w1: Window, w2: Window, ordering: str = "normal") -> float:
    """<:dN1 dN2:> (``normal``) or <dN1 dN2> (``full``, adds shot noise on the overlap)."""
    r1, r2 = _range(spec, w1), _range(spec, w2)
    val = _cov(spec, r1, r2)
    if ordering == "full":
        lo, hi = max(r1[0], r2[0]), min(r1[1], r2[1])
        if hi > lo:
            val += _n(spec, (lo, hi))
    elif ordering != "normal":
        raise ValueError("ordering must be 'normal' or 'full'")
    return float(val)


def direct_number_covariance(spec: SpectralMoments, w1: Window, w2: Window) -> float:
    """Normally ordered covariance by explicit double sum (no prefix sums)."""
    r1, r2 = _range(spec, w1), _range(spec, w2)
    return float(math.fsum(spec.cov_nn[r1[0]:r1[1], r2[0]:r2[1]].ravel()))


def _single(spec, w):
    r = _range(spec, w)
    return r, _n(spec, r), _cov(spec, r, r)


def eta_ii(spec: SpectralMoments, w: Window) -> float:
    """<:dN^2:> / <dN^2>; negative for sub-Poissonian light."""
    _, n, a = _single(spec, w)
    v = a + n
    if not v > 0:
        raise UndefinedStatisticError("photon-number variance vanishes in this window")
    return float(a / v)


def _pair(spec, w1, w2, allow_overlap=False):
    r1, n1, a1 = _single(spec, w1)
    r2, n2, a2 = _single(spec, w2)
    if not allow_overlap and not _disjoint(r1, r2):
        raise OverlappingWindowsError("windows must not overlap")
    c = _cov(spec, r1, r2)
    return n1, n2, a1, a2, c


def eta_12(spec: SpectralMoments, w1: Window, w2: Window, allow_overlap: bool = False) -> float:
    """Correlation coefficient of the photon-number fluctuations of two windows."""
    n1, n2, a1, a2, c = _pair(spec, w1, w2, allow_overlap)
    if allow_overlap:
        c = number_covariance(spec, w1, w2, "full")
    v1, v2 = a1 + n1, a2 + n2
    if not (v1 > 0 and v2 > 0):
        raise UndefinedStatisticError("zero photon-number variance")
    return float(c / math.sqrt(v1 * v2))


def eta_tilde_from_sums(n1, n2, a1, a2, c):
    """Generalized variance-correlation coefficient from window sums (vectorised)."""
    num = a1 * a2 - c * c
    den = np.abs(a1 * n2 + a2 * n1 + n1 * n2)
    return num, den


def tau_tilde_from_sums(n1, n2, a1, a2, c):
    """Numerator/denominator of the generalized photon-number correlation coefficient.

    With A_i = <:N_i^2:> = a_i + N_i^2 and B = <:N1 N2:> = c + N1 N2 the
    leading N^4 terms cancel analytically; the expanded form keeps the
    precision when N ~ 1e8.
    """
    num = n1 * n1 * a2 + n2 * n2 * a1 + a1 * a2 - 2.0 * n1 * n2 * c - c * c
    den = (a1 + n1 * n1) * n2 + (a2 + n2 * n2) * n1 + n1 * n2
    return num, den


def eta_tilde_12(spec: SpectralMoments, w1: Window, w2: Window) -> float:
    """(eta11 eta22 - eta12^2) / |1 - eta11 eta22|; negative values are nonclassical."""
    num, den = eta_tilde_from_sums(*_pair(spec, w1, w2))
    if not den > 0:
        raise UndefinedStatisticError("degenerate denominator")
    return float(num / den)


def tau_12(spec: SpectralMoments, w1: Window, w2: Window) -> float:
    n1, n2, a1, a2, c = _pair(spec, w1, w2)
    q1 = a1 + n1 * n1 + n1
    q2 = a2 + n2 * n2 + n2
    if not (q1 > 0 and q2 > 0):
        raise UndefinedStatisticError("vanishing second moments")
    return float((c + n1 * n2) / math.sqrt(q1 * q2))


def tau_tilde_12(spec: SpectralMoments, w1: Window, w2: Window) -> float:
    n1, n2, a1, a2, c = _pair(spec, w1, w2)
    for a, n in ((a1, n1), (a2, n2)):
        # <:N^2:> = <b^dag b^dag b b> summed; nonnegative for any state.
        if a + n * n < -1e-9 * max(1.0, n * n):
            raise UndefinedStatisticError("negative normally ordered second moment")
    num, den = tau_tilde_from_sums(n1, n2, a1, a2, c)
    if not den > 0:
        raise UndefinedStatisticError("degenerate denominator")
    return float(num / den)


def fano_factor(spec: SpectralMoments, w: Window) -> float:
    _, n, a = _single(spec, w)
    if not n > 0:
        raise UndefinedStatisticError("empty window")
    return float((a + n) / n)


def squeezing_db(fano: float) -> float:
    """Noise reduction -10 log10 F (positive for sub-Poissonian light)."""
    return -10.0 * math.log10(fano)


@dataclass(frozen=True)
class CorrelationReport:
    time: float
    windows: tuple
    photon_numbers: tuple
    eta_11: float
    fano: float
    squeezing_db: float
    eta_22: float | None = None
    eta_12: float | None = None
    eta_tilde_12: float | None = None
    tau_12: float | None = None
    tau_tilde_12: float | None = None


def correlation_report(spec: SpectralMoments, w1: Window, w2: Window | None = None) -> CorrelationReport:
    e11 = eta_ii(spec, w1)
    f = fano_factor(spec, w1)
    wins = (w1,) if w2 is None else (w1, w2)
    ns = tuple(window_photon_number(spec, w) for w in wins)
    if w2 is None:
        return CorrelationReport(spec.time, wins, ns, e11, f, squeezing_db(f))
    return CorrelationReport(
        spec.time, wins, ns, e11, f, squeezing_db(f),
        eta_22=eta_ii(spec, w2), eta_12=eta_12(spec, w1, w2), eta_tilde_12=eta_tilde_12(spec, w1, w2),
        tau_12=tau_12(spec, w1, w2), tau_tilde_12=tau_tilde_12(spec, w1, w2),
    )


def omega0_crossing(spec: SpectralMoments, half_width: float | None = None, tol: float = 1e-12) -> float:
    """Smallest frequency beyond which every narrow-band component is super-Poissonian.

    Narrow windows are (omega - half_width, omega + half_width), one bin on a
    grid whose bin spacing is 2 * half_width.  Returns 0 when no component is
    sub-Poissonian and inf when the outermost bins are still sub-Poissonian.
    """
    grid = spec.grid
    if half_width is None:
        half_width = 0.5 * grid.bin_spacing
    etas = []
    for w in grid.omega:
        win = SpectralWindow.narrow(float(w), half_width)
        try:
            resolved = window_photon_number(spec, win) >= spec.photon_floor
            etas.append(eta_ii(spec, win) if resolved else 0.0)
        except (UndefinedStatisticError, EmptyWindowError):
            etas.append(0.0)
    etas = np.asarray(etas)
    absw = np.abs(grid.omega)
    sub = etas < -tol
    if not np.any(sub):
        return 0.0
    if np.any(sub & (absw >= absw.max() - 1e-12)):
        return math.inf
    return float(absw[sub].max())


# ---------------------------------------------------------------------------
# Pairwise narrow-band maps and CSV emitters.


def narrow_pair_maps(spec: SpectralMoments) -> dict[str, np.ndarray]:
    """eta_12, eta_tilde_12 and tau_tilde_12 for every pair of single bins.

    Diagonal entries (a bin paired with itself) and pairs involving an
    unresolved bin are NaN.
    """
    n_q = spec.n_per_bin
    a = np.diagonal(spec.cov_nn)
    n1, n2 = n_q[:, None], n_q[None, :]
    a1, a2 = a[:, None], a[None, :]
    c = spec.cov_nn
    v1, v2 = a1 + n1, a2 + n2
    with np.errstate(invalid="ignore", divide="ignore"):
        eta12 = c / np.sqrt(v1 * v2)
        num, den = eta_tilde_from_sums(n1, n2, a1, a2, c)
        etat = num / den
        num, den = tau_tilde_from_sums(n1, n2, a1, a2, c)
        taut = num / den
    bad = ~spec.resolved_bins()
    for m in (eta12, etat, taut):
        np.fill_diagonal(m, np.nan)
        m[bad, :] = np.nan
        m[:, bad] = np.nan
    return {"eta_12": eta12, "eta_tilde_12": etat, "tau_tilde_12": taut}


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12e}"


def write_eta11_surface(path, spectra: Sequence[SpectralMoments]) -> None:
    """Rows are t/t_d, columns the narrow-bin frequencies omega/omega0."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        if not spectra:
            wr.writerow(["t/t_d"])
            return
        wr.writerow(["t/t_d"] + [f"omega/omega0={w:.6f}" for w in spectra[0].grid.omega])
        for sp in spectra:
            wr.writerow([_fmt(sp.time)] + [_fmt(v) for v in sp.narrow_eta11()])


def write_pair_map(path, spec: SpectralMoments, name: str) -> None:
    """Rows omega1/omega0, columns omega2/omega0 of one pairwise coefficient."""
    grid = spec.grid
    m = narrow_pair_maps(spec)[name]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"omega1/omega0 \\ omega2/omega0 ({name}, t/t_d={spec.time:.6f})"]
                    + [f"{w:.6f}" for w in grid.omega])
        for i, w in enumerate(grid.omega):
            wr.writerow([f"{w:.6f}"] + [_fmt(v) for v in m[i]])


REPORT_FIELDS = [
    "t/t_d", "lo1/omega0", "hi1/omega0", "lo2/omega0", "hi2/omega0", "N1", "N2",
    "eta_11", "eta_22", "eta_12", "eta_tilde_12", "tau_12", "tau_tilde_12", "fano_1", "squeezing_dB_1",
]


def write_window_reports(path, reports: Iterable[CorrelationReport]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_FIELDS)
        for r in reports:
            w1 = r.windows[0]
            w2 = r.windows[1] if len(r.windows) > 1 else None
            wr.writerow([
                _fmt(r.time), _fmt(w1.lo), _fmt(w1.hi),
                _fmt(w2.lo if w2 else None), _fmt(w2.hi if w2 else None),
                _fmt(r.photon_numbers[0]), _fmt(r.photon_numbers[1] if w2 else None),
                _fmt(r.eta_11), _fmt(r.eta_22), _fmt(r.eta_12), _fmt(r.eta_tilde_12),
                _fmt(r.tau_12), _fmt(r.tau_tilde_12), _fmt(r.fano), _fmt(r.squeezing_db),
            ])
