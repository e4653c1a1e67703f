"""Independent reference implementations used as test oracles."""

import numpy as np
from functools import reduce

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
LOWER = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|: empties an occupied (|1>) site


def kron_all(ops):
    return reduce(np.kron, ops)


def jw_annihilator(site, n):
    """Dense Jordan-Wigner annihilator, site 0 = most significant qubit."""
    return kron_all([Z] * site + [LOWER] + [I2] * (n - site - 1))


def thirring_dense(n, m0, g):
    """Full 2^n x 2^n Thirring matrix assembled from fermion matrices."""
    a = [jw_annihilator(x, n) for x in range(n)]
    num = [op.conj().T @ op for op in a]
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for x in range(n - 1):
        hop = a[x].conj().T @ a[x + 1]
        H += -0.5 * (hop + hop.conj().T)
    for x in range(n):
        H += m0 * (-1) ** x * num[x]
    for x in range(n // 2):
        H += 2 * g * num[2 * x] @ num[2 * x + 1]
    return H


def sector_indices(n, k):
    return np.array([i for i in range(1 << n) if bin(i).count("1") == k])


def sector_spectrum(n, m0, g, k=None):
    """Eigenpairs of the dense oracle restricted to the k-particle sector."""
    k = n // 2 if k is None else k
    H = thirring_dense(n, m0, g)
    idx = sector_indices(n, k)
    w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
    return w, v, idx
