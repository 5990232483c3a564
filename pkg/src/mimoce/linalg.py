"""Dense complex Hermitian linear algebra.

Provides Cholesky factorization, Hermitian eigendecomposition and the
generalized eigenvalue decomposition (GEVD) of a Hermitian-definite matrix
pencil {A, B}, normalized so that X^H B X = I.  All routines operate on
plain complex ndarrays and are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a matrix required to be positive definite is not.

    Signals that the caller must regularize (e.g. diagonal loading) before
    retrying.
    """


class ConvergenceFailure(np.linalg.LinAlgError):
    """Raised when an eigenvalue iteration fails to converge."""


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (a + a^H) / 2."""
    return 0.5 * (a + a.conj().swapaxes(-1, -2))


@dataclass
class GevdResult:
    """Generalized eigenvalue decomposition of a pencil {A, B}.

    Attributes
    ----------
    eigenvalues : (n,) real ndarray
        Generalized eigenvalues sorted from large to small.
    X : (n, n) complex ndarray
        Generalized eigenvectors in the columns, normalized so that
        X^H B X = I and X^H A X = diag(eigenvalues).
    Q : (n, n) complex ndarray
        Q = X^{-H}, so that A = Q diag(eigenvalues) Q^H and B = Q Q^H.
    """

    eigenvalues: np.ndarray
    X: np.ndarray
    Q: np.ndarray


def cholesky(h: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^H = h for Hermitian positive definite h.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is non-positive or falls below the scale-aware
        threshold dim * eps * max(diag(h)).
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    try:
        lower = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    # np.linalg.cholesky only rejects pivots <= 0; additionally reject
    # pivots that are numerically indistinguishable from zero at the
    # matrix's own scale.
    pivot_floor = n * np.finfo(float).eps * max(np.abs(np.diag(h)).max(), 0.0)
    pivots = np.diag(lower).real ** 2
    if pivots.min() <= pivot_floor:
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} below tolerance {pivot_floor:.3e}"
        )
    return lower


def hermitian_eig(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with h = V diag(w) V^H and V unitary.
    """
    try:
        w, v = np.linalg.eigh(np.asarray(h, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure("eigenvalue iteration did not converge") from exc
    return w[::-1], v[:, ::-1]


def gevd(a: np.ndarray, b: np.ndarray) -> GevdResult:
    """Generalized eigenvalue decomposition of the pencil {a, b}.

    Solves a x = sigma b x for Hermitian a and Hermitian positive definite
    b by whitening with the Cholesky factor of b: with b = L L^H the
    whitened matrix L^{-1} a L^{-H} is eigendecomposed and the result is
    transformed back.  Eigenvalues are returned in descending order.

    Raises
    ------
    NotPositiveDefinite
        Propagated from the factorization of b.
    """
    a = np.asarray(a, dtype=complex)
    lower = cholesky(b)
    tmp = scipy.linalg.solve_triangular(lower, a, lower=True)
    whitened = scipy.linalg.solve_triangular(lower, tmp.conj().T, lower=True).conj().T
    w, u = hermitian_eig(hermitize(whitened))
    x = scipy.linalg.solve_triangular(lower.conj().T, u, lower=False)
    q = lower @ u
    return GevdResult(eigenvalues=w, X=x, Q=q)


def solve_hermitian(h: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Solve h x = m for Hermitian positive definite h via Cholesky."""
    lower = cholesky(h)
    return scipy.linalg.cho_solve((lower, True), np.asarray(m, dtype=complex))


def psd_factor(r: np.ndarray) -> np.ndarray:
    """Square factor F with F F^H = r for a Hermitian PSD matrix r.

    Eigenvalues within machine noise of zero (including the tiny negatives
    produced by quadrature or accumulation error) are clamped to exactly
    zero, so low-rank inputs yield genuinely low-rank factors.
    """
    r = np.asarray(r, dtype=complex)
    w, v = np.linalg.eigh(r)
    floor = r.shape[0] * np.finfo(float).eps * max(w[-1], 0.0)
    w = np.where(w > floor, w, 0.0)
    return v * np.sqrt(w)
