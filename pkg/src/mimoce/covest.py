"""Data-driven covariance estimation for the despread uplink signal.

Two second-order statistics can be estimated at a BS without any
cross-cell cooperation: the per-UE pilot-phase covariance of the despread
signal, and the combined covariance of all antenna samples (pilot and
data phases together).  Their difference isolates the serving UE's
channel covariance; this module implements both the direct subtraction
estimator and the rank-limited estimator built from the generalized
eigenvalue decomposition of the pencil {pilot covariance, combined
covariance}, which keeps only modes whose generalized eigenvalue exceeds
one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import GevdResult, NotPositiveDefinite, gevd, hermitize

# Eigenvalues this close to 1 carry no usable signal power and are never kept.
SIGMA_ONE_TOL = 1e-9

# Relative diagonal loading applied to the pencil's right-hand matrix when
# its Cholesky factorization fails.
GEVD_FALLBACK_LOADING = 1e-3


class DegeneratePilotCount(ValueError):
    """Raised when tau_p < 2: the covariance separation is undefined."""


@dataclass
class PilotCovEstimate:
    """Sample covariance of the despread pilot signal of one UE."""

    matrix: np.ndarray
    t_used: int
    loading: float = 0.0


@dataclass
class AllCovEstimate:
    """Sample covariance over all antenna samples of both phases."""

    matrix: np.ndarray
    t_used: int


@dataclass
class LowRankCovEstimate:
    """Rank-limited estimate of one UE's scaled channel covariance.

    scaled_matrix equals power * R_hat and is assembled as
    Q_r diag(lam) Q_r^H from the retained pencil modes.  sigma holds the
    retained generalized eigenvalues (all > 1), lam the mode weights
    (sigma - 1) / (tau_p - 1), and x the dual basis columns satisfying
    x_r^H q_s = delta_rs.
    """

    scaled_matrix: np.ndarray
    rank_requested: int
    rank_effective: int
    q: np.ndarray  # (N, rank_effective)
    x: np.ndarray  # (N, rank_effective)
    sigma: np.ndarray  # (rank_effective,)
    lam: np.ndarray  # (rank_effective,)


def _matrix_of(estimate) -> np.ndarray:
    return estimate.matrix if hasattr(estimate, "matrix") else np.asarray(estimate)


class AllCovAccumulator:
    """Streaming accumulator for the combined sample covariance.

    Feeds on batches of per-block antenna samples so that long runs never
    need to hold all received signals in memory; accumulation is a plain
    fold and therefore order-insensitive up to floating-point rounding.
    """

    def __init__(self, n_antennas: int):
        self._sum = np.zeros((n_antennas, n_antennas), dtype=complex)
        self._samples = 0
        self._blocks = 0

    def add(self, signals: np.ndarray) -> None:
        """Accumulate signals of shape (N, S) or (B, N, S)."""
        signals = np.asarray(signals, dtype=complex)
        if signals.ndim == 2:
            signals = signals[None]
        b, n, s = signals.shape
        flat = np.moveaxis(signals, 1, 0).reshape(n, b * s)
        self._sum += flat @ flat.conj().T
        self._samples += b * s
        self._blocks += b

    def estimate(self) -> AllCovEstimate:
        if self._samples == 0:
            raise ValueError("no samples accumulated")
        return AllCovEstimate(
            matrix=hermitize(self._sum / self._samples), t_used=self._blocks
        )


def estimate_pilot_cov(
    despread_vectors: np.ndarray, tau_p: int, loading_factor: float = 0.0
) -> PilotCovEstimate:
    """Time-averaged pilot-phase covariance from T despread vectors.

    Computes (1 / (T tau_p)) sum_t y_t y_t^H plus optional diagonal
    loading of loading_factor * trace / N.
    """
    y = np.asarray(despread_vectors, dtype=complex)
    if y.ndim != 2:
        raise ValueError("expected despread vectors of shape (T, N)")
    t_used, n = y.shape
    raw = hermitize(np.einsum("tn,tm->nm", y, y.conj())) / (t_used * tau_p)
    loading = float(loading_factor) * np.trace(raw).real / n
    matrix = raw + loading * np.eye(n)
    return PilotCovEstimate(matrix=matrix, t_used=t_used, loading=loading)


def estimate_all_cov(signals: np.ndarray) -> AllCovEstimate:
    """Combined covariance over all samples of T blocks, shape (T, N, S)."""
    signals = np.asarray(signals, dtype=complex)
    acc = AllCovAccumulator(signals.shape[-2])
    acc.add(signals)
    return acc.estimate()


def subtraction_estimator(
    pilot_cov, all_cov, tau_p: int, power: float
) -> np.ndarray:
    """Channel covariance estimate by direct subtraction.

    Returns (pilot_cov - all_cov) / ((tau_p - 1) * power), Hermitian by
    construction.  On sample inputs the result is generally not PSD and
    may be indefinite; use the GEVD estimator when a valid covariance is
    required.
    """
    if tau_p < 2:
        raise DegeneratePilotCount("tau_p must be >= 2")
    diff = _matrix_of(pilot_cov) - _matrix_of(all_cov)
    return hermitize(diff) / ((tau_p - 1) * power)


def gevd_lowrank_estimator(
    pilot_cov, all_cov, tau_p: int, power: float, rank: int
) -> LowRankCovEstimate:
    """Rank-limited covariance estimate from the GEVD of {pilot, combined}.

    Decomposes pilot_cov = Q Sigma Q^H and all_cov = Q Q^H, then keeps at
    most `rank` modes among those with generalized eigenvalue above one;
    the retained mode r contributes (sigma_r - 1)/(tau_p - 1) q_r q_r^H to
    power * R_hat.  If the combined covariance is not positive definite, a
    single diagonal-loading retry is attempted before giving up.
    """
    if tau_p < 2:
        raise DegeneratePilotCount("tau_p must be >= 2")
    a = _matrix_of(pilot_cov)
    b = _matrix_of(all_cov)
    n = a.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must be in [1, {n}], got {rank}")
    result = _gevd_with_loading(a, b)

    above_one = result.eigenvalues > 1.0 + SIGMA_ONE_TOL
    rank_effective = int(min(rank, above_one.sum()))
    sigma = result.eigenvalues[:rank_effective]
    lam = (sigma - 1.0) / (tau_p - 1.0)
    q = result.Q[:, :rank_effective]
    x = result.X[:, :rank_effective]
    scaled = (q * lam) @ q.conj().T
    return LowRankCovEstimate(
        scaled_matrix=scaled,
        rank_requested=rank,
        rank_effective=rank_effective,
        q=q,
        x=x,
        sigma=sigma,
        lam=lam,
    )


def _gevd_with_loading(a: np.ndarray, b: np.ndarray) -> GevdResult:
    try:
        return gevd(a, b)
    except NotPositiveDefinite:
        n = b.shape[0]
        loaded = b + GEVD_FALLBACK_LOADING * (np.trace(b).real / n) * np.eye(n)
        return gevd(a, loaded)
