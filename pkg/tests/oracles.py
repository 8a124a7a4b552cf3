"""Independent oracles: brute-force routines used only to check the package.

These deliberately avoid the code paths under test (no calls into
svperturb, no LAPACK eigensolvers).
"""

import numpy as np


def jacobi_sym_eigvals(n_mat, sweeps=100, tol=1e-14):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(n_mat, dtype=float, copy=True)
    n = a.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                off = max(off, abs(a[p, q]))
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
        scale = max(1.0, np.max(np.abs(np.diag(a))))
        if off < tol * scale:
            break
    return np.sort(np.diag(a))[::-1]


def brute_force_singvals(a_mat):
    """Singular values via Jacobi on the Gram matrix A^T A."""
    a = np.asarray(a_mat, dtype=float)
    lam = jacobi_sym_eigvals(a.T @ a)
    return np.sqrt(np.clip(lam, 0.0, None))


def central_difference(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)
