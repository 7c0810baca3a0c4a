"""Independent constructions of random Gaussian states for tests."""

import math

import numpy as np
from scipy.stats import unitary_group

# (x1, x2, p1, p2) -> (x1, p1, x2, p2)
_PERM = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=float)
OMEGA = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)


def _passive(u):
    return np.block([[u.real, -u.imag], [u.imag, u.real]])


def random_symplectic(rng, max_r=1.2):
    """Bloch-Messiah: passive . single-mode squeezers . passive."""
    u1 = unitary_group.rvs(2, random_state=rng)
    u2 = unitary_group.rvs(2, random_state=rng)
    r = rng.uniform(-max_r, max_r, size=2)
    sq = np.diag(np.exp(np.concatenate([r, -r])))
    s = _passive(u1) @ sq @ _passive(u2)
    return _PERM @ s @ _PERM.T


def random_physical_cov4(rng, max_r=1.2, max_nu=3.0):
    s = random_symplectic(rng, max_r)
    nu = rng.uniform(1.0, max_nu, size=2)
    d = np.diag([nu[0], nu[0], nu[1], nu[1]])
    m = s @ d @ s.T
    return 0.5 * (m + m.T), np.sort(nu)


def random_pure_cov4(rng, max_r=1.2):
    s = random_symplectic(rng, max_r)
    m = s @ s.T
    return 0.5 * (m + m.T)


def eig_route(m):
    """Symplectic spectrum as moduli of the eigenvalues of i*Omega*m."""
    w = np.sort(np.abs(np.linalg.eigvals(1j * OMEGA @ m)))
    return w[0], w[2]


def f_entropy(x):
    if x <= 1.0:
        return 0.0
    a, b = (x + 1) / 2, (x - 1) / 2
    return a * math.log2(a) - b * math.log2(b)
