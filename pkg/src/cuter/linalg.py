"""Dense symmetric eigendecomposition and the matrix norms built on it.

The production path wraps LAPACK (``np.linalg.eigh``) with a fixed
post-processing step (stable eigenvalue ordering, pinned eigenvector signs)
so repeated calls on the same matrix give identical bits in-process. A
self-contained cyclic Jacobi solver is kept alongside it as an independent
cross-check: it shares no code with LAPACK, so agreement between the two is
a meaningful correctness signal for tests. The Jacobi inner sweep is
JIT-compiled with numba; everything downstream (nuclear / spectral norms,
the nuclear-norm subgradient) uses the LAPACK path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .validation import check_square_matrix, check_symmetric

#: Relative off-diagonal Frobenius tolerance for Jacobi convergence.
JACOBI_TOL = 1e-12
#: Hard cap on Jacobi sweeps (quadratic convergence makes this generous).
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (ascending) and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]


@njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):  # pragma: no cover - compiled
    n = a.shape[0]
    # Per-entry skip threshold: leaving every off-diagonal entry below
    # tol/n keeps the total off-diagonal Frobenius norm below tol.
    entry_tol = tol / n if n > 0 else tol
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if np.sqrt(off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= entry_tol:
                    continue
                # Stable rotation angle (Golub & Van Loan 8.4).
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app = a[p, p]
                aqq = a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[p, k] = a[k, p]
                        a[k, q] = s * akp + c * akq
                        a[q, k] = a[k, q]
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return max_sweeps


def _pin_signs(v):
    """Make each eigenvector's first component of magnitude > 1e-12 positive."""
    n = v.shape[1]
    for k in range(n):
        col = v[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0.0:
            v[:, k] = -col
    return v


def sym_eigendecomposition(m):
    """Full eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Symmetric matrix with finite entries.

    Returns
    -------
    EigenDecomposition
        Eigenvalues ascending; eigenvector column k matches eigenvalue k.
        Each eigenvector's first component of magnitude > 1e-12 is made
        positive, which pins an otherwise arbitrary sign.
    """
    a = check_symmetric(m, "matrix")
    n = a.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    w, v = np.linalg.eigh(a)
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], _pin_signs(v[:, order]))


def jacobi_eigendecomposition(m):
    """Cyclic-Jacobi eigendecomposition; an independent oracle for tests.

    Same contract as :func:`sym_eigendecomposition` but computed with plain
    rotations instead of LAPACK, so the two implementations share nothing and
    can be checked against each other.
    """
    a = check_symmetric(m, "matrix").copy()
    n = a.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    v = np.eye(n)
    fro = float(np.sqrt((a * a).sum()))
    _jacobi_sweeps(a, v, JACOBI_TOL * fro, JACOBI_MAX_SWEEPS)
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], _pin_signs(v[:, order]))


def nuclear_norm(m):
    """Sum of absolute eigenvalues (= sum of singular values for symmetric m)."""
    dec = sym_eigendecomposition(m)
    return float(np.abs(dec.eigenvalues).sum())


def nuclear_norm_subgradient(m):
    """A subgradient of the nuclear norm at a symmetric matrix.

    Returns U sign(Lambda) U^T, with sign(lambda) taken as 0 for eigenvalues
    that are zero at working precision (relative to ||m||_F). At points where
    all eigenvalues are nonzero and simple this is the exact gradient.
    """
    a = check_symmetric(m, "matrix")
    dec = sym_eigendecomposition(a)
    fro = float(np.sqrt((a * a).sum()))
    cut = 1e-12 * max(1.0, fro)
    signs = np.where(np.abs(dec.eigenvalues) <= cut, 0.0, np.sign(dec.eigenvalues))
    g = (dec.eigenvectors * signs) @ dec.eigenvectors.T
    # Exact symmetry for downstream consumers that check it.
    return (g + g.T) / 2.0


def spectral_norm(m):
    """Largest absolute eigenvalue of a symmetric matrix."""
    dec = sym_eigendecomposition(m)
    if dec.n == 0:
        return 0.0
    return float(np.abs(dec.eigenvalues).max())


def inf_norm(m):
    """Maximum absolute row sum. Defined for any square matrix."""
    a = check_square_matrix(m, "matrix")
    if a.size == 0:
        return 0.0
    return float(np.abs(a).sum(axis=1).max())
