"""Random physical Gaussian states shared by the spectral and optimizer tests."""

import math

import numpy as np
import scipy.linalg

from qsoliton.lattice import GaussianFieldState, GridSpec

GRID = GridSpec(32, 0.5)


def gaussian_state(seed, grid=GRID, mean_scale=2.0, thermal=0.2, squeeze=0.3):
    """Random physical Gaussian state: a Bogoliubov transform of a thermal state plus a mean."""
    rng = np.random.default_rng(seed)
    n = grid.n_points
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = squeeze * (a + a.conj().T) / (2 * math.sqrt(n))
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    k = squeeze * (b + b.T) / (2 * math.sqrt(n))
    # Symplectic map S = exp(J G) on (b, b^dag) from a Hermitian quadratic generator.
    gen = np.block([[-1j * h, -1j * k], [1j * k.conj(), 1j * h.conj()]])
    s = scipy.linalg.expm(gen)
    u, v = s[:n, :n], s[:n, n:]
    occ = thermal * rng.uniform(0.5, 1.5, size=n)
    # b' = u b + v b^dag acting on a diagonal thermal state.
    c = (u.conj() * occ) @ u.T + (v.conj() * (occ + 1)) @ v.T
    m = (u * occ) @ v.T + (v * (occ + 1)) @ u.T
    m = 0.5 * (m + m.T)
    mean = mean_scale * (rng.normal(size=n) + 1j * rng.normal(size=n))
    # c_norm[k, l] = <db_k^dag db_l> is the transpose of the matrix assembled above.
    return GaussianFieldState(grid, 0.0, mean, c.T, m)
