"""Exhaustive square-bandpass window searches over bin edges.

All searches work on sorted-bin index ranges [start, stop) and evaluate
candidates in O(1) from the prefix sums of a SpectralMoments.  Exact ties are
broken toward the lexicographically smallest (lo1, hi1, lo2, hi2), which for
index ranges means the smallest (start1, stop1, start2, stop2).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numba
import numpy as np

from .lattice import SpectralWindow
from .spectral import (
    SpectralMoments,
    eta_ii,
    eta_tilde_12,
    eta_tilde_from_sums,
    tau_tilde_12,
    tau_tilde_from_sums,
    window_photon_number,
)

OBJECTIVES = ("eta_tilde_12", "tau_tilde_12")

_PAIR_SUMS = {"eta_tilde_12": eta_tilde_from_sums, "tau_tilde_12": tau_tilde_from_sums}
_PAIR_FRESH = {"eta_tilde_12": eta_tilde_12, "tau_tilde_12": tau_tilde_12}


@dataclass(frozen=True)
class WindowSearchResult:
    objective: str
    value: float
    bins: tuple
    windows: tuple
    photon_fractions: tuple
    time: float
    candidates: int
    search_value: float = field(default=float("nan"))

    @property
    def center(self) -> float:
        """Mean of the window centers in omega0 units (the first window for pair searches)."""
        w = self.windows[0]
        return 0.5 * (w.lo + w.hi)


def _pair_values(objective, n1, n2, a1, a2, c, floor=0.0):
    num, den = _PAIR_SUMS[objective](n1, n2, a1, a2, c)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = num / den
    # Degenerate or unresolved pairs never win.
    return np.where((den > 0) & (n1 >= floor) & (n2 >= floor), val, np.inf)


def _result(spec, objective, bins, search_value, candidates, reference_total):
    wins = tuple(SpectralWindow.from_bins(spec.grid, s, e) for s, e in bins)
    ref = spec.total if reference_total is None else reference_total
    fr = tuple(window_photon_number(spec, b) / ref for b in bins)
    if objective == "eta_11":
        value = eta_ii(spec, bins[0])
    else:
        value = _PAIR_FRESH[objective](spec, bins[0], bins[1])
    return WindowSearchResult(objective, value, tuple(bins), wins, fr, spec.time, candidates, float(search_value))


def optimize_symmetric_single(spec: SpectralMoments, reference_total: float | None = None) -> WindowSearchResult:
    """Minimize eta_11 over centered windows (-Omega, Omega).

    Candidates are the bin ranges [c - j, c + j + 1) around the omega = 0 bin.
    ``reference_total`` sets the denominator of the photon fraction (default:
    the snapshot's total photon number).
    """
    n = spec.grid.n_points
    c = spec.grid.center_bin
    j = np.arange(0, min(c, n - c - 1) + 1)
    s, e = c - j, c + j + 1
    nn = spec.n_prefix[e] - spec.n_prefix[s]
    p = spec.cov_prefix
    a = p[e, e] - p[s, e] - p[e, s] + p[s, s]
    v = a + nn
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where((v > 0) & (nn >= spec.photon_floor), a / v, np.inf)
    k = int(np.argmin(vals))  # first minimum = smallest Omega
    return _result(spec, "eta_11", [(int(s[k]), int(e[k]))], vals[k], len(j), reference_total)


def optimize_symmetric_pair(spec: SpectralMoments, objective: str = "eta_tilde_12",
                            reference_total: float | None = None) -> WindowSearchResult:
    """Minimize the objective over mirror pairs (Omega1, Omega1') and (-Omega1', -Omega1).

    The first window is [s, e) with c < s < e <= n on the positive side; its
    mirror is [n - e + 1, n - s + 1).  The result lists the lower-frequency
    window first.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    n = spec.grid.n_points
    c = spec.grid.center_bin
    S, P = spec.n_prefix, spec.cov_prefix
    s, e = np.triu_indices(n + 1, k=1)
    keep = s >= c + 1
    s, e = s[keep], e[keep]
    ms, me = n - e + 1, n - s + 1
    n1 = S[e] - S[s]
    n2 = S[me] - S[ms]
    a1 = P[e, e] - P[s, e] - P[e, s] + P[s, s]
    a2 = P[me, me] - P[ms, me] - P[me, ms] + P[ms, ms]
    cx = P[me, e] - P[ms, e] - P[me, s] + P[ms, s]
    vals = _pair_values(objective, n1, n2, a1, a2, cx, spec.photon_floor)
    # Lexicographic tie-break on the lower window (ms, me), then (s, e).
    order = np.lexsort((e, s, me, ms))
    k = order[int(np.argmin(vals[order]))]
    bins = [(int(ms[k]), int(me[k])), (int(s[k]), int(e[k]))]
    return _result(spec, objective, bins, vals[k], len(vals), reference_total)


@numba.njit(cache=True)
def _pair_kernel(kind, n1, n2, a1, a2, c, floor):
    if n1 < floor or n2 < floor:
        return np.inf
    if kind == 0:
        num = a1 * a2 - c * c
        den = abs(a1 * n2 + a2 * n1 + n1 * n2)
    else:
        num = n1 * n1 * a2 + n2 * n2 * a1 + a1 * a2 - 2.0 * n1 * n2 * c - c * c
        den = (a1 + n1 * n1) * n2 + (a2 + n2 * n2) * n1 + n1 * n2
    if den > 0.0:
        return num / den
    return np.inf


@numba.njit(cache=True)
def _exhaustive_kernel(kind, S, P, edges, floor):
    """Scan s1 < e1 <= s2 < e2 over ``edges`` in lexicographic order; strict < keeps the first minimum."""
    m = edges.shape[0]
    best = np.inf
    bi = np.array([-1, -1, -1, -1])
    count = 0
    for i in range(m):
        s1 = edges[i]
        for j in range(i + 1, m):
            e1 = edges[j]
            n1 = S[e1] - S[s1]
            a1 = P[e1, e1] - P[s1, e1] - P[e1, s1] + P[s1, s1]
            for k in range(j, m):
                s2 = edges[k]
                n2_lo = S[s2]
                r_lo = P[e1, s2] - P[s1, s2]
                for l in range(k + 1, m):
                    e2 = edges[l]
                    n2 = S[e2] - n2_lo
                    a2 = P[e2, e2] - P[s2, e2] - P[e2, s2] + P[s2, s2]
                    c = P[e1, e2] - P[s1, e2] - r_lo
                    v = _pair_kernel(kind, n1, n2, a1, a2, c, floor)
                    count += 1
                    if v < best:
                        best = v
                        bi[0] = s1
                        bi[1] = e1
                        bi[2] = s2
                        bi[3] = e2
    return best, bi, count


def _exhaustive(spec, objective, edges):
    kind = OBJECTIVES.index(objective)
    best, bi, count = _exhaustive_kernel(kind, spec.n_prefix, spec.cov_prefix, edges.astype(np.int64), spec.photon_floor)
    if bi[0] < 0:
        return np.inf, None, int(count)
    return float(best), [(int(bi[0]), int(bi[1])), (int(bi[2]), int(bi[3]))], int(count)


def pair_value(spec: SpectralMoments, objective: str, b1, b2) -> float:
    """Prefix-sum objective of two index ranges (inf for degenerate pairs)."""
    S, P = spec.n_prefix, spec.cov_prefix
    (s1, e1), (s2, e2) = b1, b2
    n1, n2 = S[e1] - S[s1], S[e2] - S[s2]
    a1 = P[e1, e1] - P[s1, e1] - P[e1, s1] + P[s1, s1]
    a2 = P[e2, e2] - P[s2, e2] - P[e2, s2] + P[s2, s2]
    cx = P[e1, e2] - P[s1, e2] - P[e1, s2] + P[s1, s2]
    return float(_pair_values(objective, n1, n2, a1, a2, cx, spec.photon_floor))


def _refine(spec, objective, bins, value, radius):
    """Local search: move every endpoint by up to ``radius`` bins until no strict gain."""
    n = spec.grid.n_points
    evaluated = 0
    while True:
        (s1, e1), (s2, e2) = bins
        best, best_bins = value, bins
        offsets = range(-radius, radius + 1)
        for d in itertools.product(offsets, repeat=4):
            a, b, c, e = s1 + d[0], e1 + d[1], s2 + d[2], e2 + d[3]
            if not (0 <= a < b <= c < e <= n):
                continue
            evaluated += 1
            v = pair_value(spec, objective, (a, b), (c, e))
            if v < best or (v == best and (a, b, c, e) < tuple(itertools.chain(*best_bins))):
                best, best_bins = v, [(a, b), (c, e)]
        if best_bins == bins:
            return bins, value, evaluated
        bins, value = best_bins, best


def optimize_asymmetric_pair(spec: SpectralMoments, objective: str = "eta_tilde_12", coarsening: int = 2,
                             refine: int = 2, reference_total: float | None = None) -> WindowSearchResult:
    """Minimize the objective over all disjoint window pairs.

    The exhaustive stage uses bin edges on a lattice of spacing ``coarsening``
    (plus the outer edge n); coarsening=1 is the exact search.  The winner is
    then refined at full resolution by moving each endpoint within
    ``refine`` bins, repeated until no candidate improves.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if int(coarsening) != coarsening or coarsening < 1:
        raise ValueError("coarsening must be an integer >= 1")
    n = spec.grid.n_points
    edges = np.unique(np.append(np.arange(0, n + 1, int(coarsening)), n))
    best, bins, count = _exhaustive(spec, objective, edges)
    if bins is None:
        raise ValueError("no admissible window pair")
    if coarsening > 1 and refine > 0:
        bins, best, extra = _refine(spec, objective, bins, best, int(refine))
        count += extra
    return _result(spec, objective, bins, best, count, reference_total)
