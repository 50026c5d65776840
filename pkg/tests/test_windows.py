import itertools

import numpy as np
import pytest

from qsoliton.lattice import GaussianFieldState, GridSpec, SimulationConfig, make_fundamental_soliton
from qsoliton.spectral import eta_ii, eta_tilde_12, tau_tilde_12, to_spectral
from qsoliton.windows import (
    OBJECTIVES,
    optimize_asymmetric_pair,
    optimize_symmetric_pair,
    optimize_symmetric_single,
    pair_value,
)

from states import gaussian_state

FRESH = {"eta_tilde_12": eta_tilde_12, "tau_tilde_12": tau_tilde_12}


@pytest.fixture(scope="module")
def small_spec():
    grid = GridSpec(24, 0.5)
    return to_spectral(gaussian_state(11, grid, mean_scale=1.5))


@pytest.fixture(scope="module")
def soliton_spec():
    """Short evolution of a weakly quantum soliton: realistic, non-trivial correlations."""
    from qsoliton.dynamics import SplitStepIntegrator

    cfg = SimulationConfig(n_points=64, dx=0.25, nbar=1e4, dt=2e-3)
    s = SplitStepIntegrator(cfg).advance(make_fundamental_soliton(cfg.grid, cfg), 500)
    return to_spectral(s)


def test_symmetric_single_matches_brute_force(soliton_spec):
    sp = soliton_spec
    c, n = sp.grid.center_bin, sp.grid.n_points
    vals = {j: eta_ii(sp, (c - j, c + j + 1)) for j in range(0, min(c, n - c - 1) + 1)}
    j = min(vals, key=vals.get)
    r = optimize_symmetric_single(sp)
    assert r.bins == ((c - j, c + j + 1),)
    assert r.value == pytest.approx(vals[j], abs=1e-12)
    assert r.candidates == len(vals)
    w = r.windows[0]
    assert w.lo == pytest.approx(-w.hi)


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_symmetric_pair_matches_brute_force(soliton_spec, objective):
    sp = soliton_spec
    n, c = sp.grid.n_points, sp.grid.center_bin
    best = (np.inf, None)
    for s in range(c + 1, n):
        for e in range(s + 1, n + 1):
            lower = (n - e + 1, n - s + 1)
            v = FRESH[objective](sp, lower, (s, e))
            if v < best[0]:
                best = (v, (lower, (s, e)))
    r = optimize_symmetric_pair(sp, objective)
    assert r.value == pytest.approx(best[0], abs=1e-12)
    lo, hi = r.windows
    assert lo.lo == pytest.approx(-hi.hi) and lo.hi == pytest.approx(-hi.lo)
    assert r.photon_fractions[0] == pytest.approx(r.photon_fractions[1], rel=1e-9)


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_exact_asymmetric_search_matches_enumeration(small_spec, objective):
    sp = small_spec
    n = sp.grid.n_points
    r = optimize_asymmetric_pair(sp, objective, coarsening=1)
    best = np.inf
    count = 0
    for s1, e1, s2, e2 in itertools.combinations(range(n + 1), 4):
        best = min(best, FRESH[objective](sp, (s1, e1), (s2, e2)))
        count += 1
    # Adjacent windows (e1 == s2) as well.
    for s1, e1, e2 in itertools.combinations(range(n + 1), 3):
        best = min(best, FRESH[objective](sp, (s1, e1), (e1, e2)))
        count += 1
    assert r.candidates == count
    assert r.value == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_no_random_candidate_beats_exact_optimum(soliton_spec, objective):
    sp = soliton_spec
    n = sp.grid.n_points
    r = optimize_asymmetric_pair(sp, objective, coarsening=1)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        s1, e1, s2, e2 = np.sort(rng.choice(n + 1, 4, replace=False))
        v = FRESH[objective](sp, (s1, e1), (s2, e2))
        assert v >= r.value - 1e-12


def test_coarse_search_with_refinement_is_bracketed(soliton_spec):
    exact = optimize_asymmetric_pair(soliton_spec, "eta_tilde_12", coarsening=1)
    coarse = optimize_asymmetric_pair(soliton_spec, "eta_tilde_12", coarsening=4, refine=0)
    refined = optimize_asymmetric_pair(soliton_spec, "eta_tilde_12", coarsening=4, refine=2)
    assert exact.value <= refined.value <= coarse.value
    assert refined.candidates > coarse.candidates


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_reported_values_are_fresh_evaluations(soliton_spec, objective):
    for r in (optimize_symmetric_pair(soliton_spec, objective), optimize_asymmetric_pair(soliton_spec, objective, 2)):
        fresh = FRESH[objective](soliton_spec, *r.bins)
        assert r.value == fresh
        assert abs(r.search_value - fresh) <= 1e-12 * max(1.0, abs(fresh))
        assert pair_value(soliton_spec, objective, *r.bins) == pytest.approx(fresh, abs=1e-12)


def flat_coherent_spec(n=16):
    """A one-site coherent pulse has a flat spectrum, making every candidate tie at 0."""
    grid = GridSpec(n, 1.0)
    mean = np.zeros(n, complex)
    mean[grid.center_bin] = 3.0
    z = np.zeros((n, n), complex)
    return to_spectral(GaussianFieldState(grid, 0.0, mean, z, z))


@pytest.mark.parametrize("objective", OBJECTIVES)
def test_ties_break_to_lexicographically_smallest(objective):
    sp = flat_coherent_spec()
    n, c = 16, 8
    assert optimize_asymmetric_pair(sp, objective, coarsening=1).bins == ((0, 1), (1, 2))
    assert optimize_symmetric_pair(sp, objective).bins == ((1, 2), (n - 1, n))
    assert optimize_symmetric_single(sp).bins == ((c, c + 1),)


def test_photon_fractions_use_reference_total(soliton_spec):
    r = optimize_symmetric_single(soliton_spec)
    r2 = optimize_symmetric_single(soliton_spec, reference_total=2 * soliton_spec.total)
    assert r2.photon_fractions[0] == pytest.approx(0.5 * r.photon_fractions[0])


def test_validation(soliton_spec):
    with pytest.raises(ValueError):
        optimize_symmetric_pair(soliton_spec, "eta_11")
    with pytest.raises(ValueError):
        optimize_asymmetric_pair(soliton_spec, "bogus")
    with pytest.raises(ValueError):
        optimize_asymmetric_pair(soliton_spec, coarsening=0)
    with pytest.raises(ValueError):
        optimize_asymmetric_pair(soliton_spec, coarsening=1.5)


def test_unresolved_tail_windows_are_skipped():
    """Near-vacuum windows below the photon floor never win, however extreme their ratio."""
    cfg = SimulationConfig(n_points=64, dx=0.25, nbar=1e6, n_th=0.0)
    sp = to_spectral(make_fundamental_soliton(cfg.grid, cfg))
    r = optimize_asymmetric_pair(sp, "eta_tilde_12", coarsening=1)
    for b in r.bins:
        assert sp.n_prefix[b[1]] - sp.n_prefix[b[0]] >= sp.photon_floor
