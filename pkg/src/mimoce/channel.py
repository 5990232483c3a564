"""Multicell geometry, spatial covariance model and channel realizations.

A hexagonal network of base stations with uniform linear arrays serves
single-antenna terminals placed on a ring around each BS.  Each BS-to-UE
link has a low-rank spatial covariance matrix generated by the local
scattering model (multipath arriving uniformly from a narrow angular
interval around the nominal angle), and per-block channel vectors are
correlated Rayleigh fading draws from those covariances.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .linalg import psd_factor
from .seeding import complex_normal, ensure_rng


class UnsupportedLayout(ValueError):
    """Raised for cell counts other than 1 (isolated) or 7 (center + ring)."""


class InvalidSpread(ValueError):
    """Raised for a non-positive angular spread outside the single-path limit."""


@dataclass
class NetworkGeometry:
    """BS/UE positions and the derived large-scale link parameters.

    Attributes
    ----------
    cells : int
        Number of cells L.
    cell_radius : float
        Center-to-vertex hexagon radius in meters.
    bs_positions : (L, 2) ndarray
        BS coordinates, center cell at the origin.
    ue_positions : (L, K, 2) ndarray
        UE coordinates; UEs of cell l sit on a ring around BS l.
    nominal_angles : (L, L, K) ndarray
        nominal_angles[j, l, k] is the azimuth from BS j to UE (l, k).
    link_gains : (L, L, K) ndarray
        Large-scale channel gain of each BS-to-UE link, normalized so a
        serving link (UE on its own BS's ring) has gain 1.
    """

    cells: int
    cell_radius: float
    bs_positions: np.ndarray
    ue_positions: np.ndarray
    nominal_angles: np.ndarray
    link_gains: np.ndarray


def build_geometry(
    cells: int,
    ues_per_cell: int,
    cell_radius: float = 250.0,
    ring_radius: float = 140.0,
    pathloss_exponent: float = 3.76,
    rng: int | np.random.Generator | None = None,
) -> NetworkGeometry:
    """Place BSs on a hexagonal lattice and UEs on rings around them.

    Supports an isolated cell (cells=1) or a center cell with one full
    ring of neighbors (cells=7); adjacent BSs are sqrt(3)*cell_radius
    apart.  UEs are equally spaced in angle on the ring, with a seeded
    random rotation per cell.  Link gains follow the power law
    (distance / ring_radius)^(-pathloss_exponent), so serving links have
    gain exactly 1.
    """
    if cells not in (1, 7):
        raise UnsupportedLayout(f"cells must be 1 or 7, got {cells}")
    if ues_per_cell < 1:
        raise ValueError("ues_per_cell must be >= 1")
    rng = ensure_rng(rng)

    bs = np.zeros((cells, 2))
    if cells == 7:
        ring_angles = np.deg2rad(60.0 * np.arange(6))
        spacing = np.sqrt(3.0) * cell_radius
        bs[1:, 0] = spacing * np.cos(ring_angles)
        bs[1:, 1] = spacing * np.sin(ring_angles)

    ue = np.zeros((cells, ues_per_cell, 2))
    for cell in range(cells):
        rotation = rng.uniform(0.0, 2.0 * np.pi)
        angles = rotation + 2.0 * np.pi * np.arange(ues_per_cell) / ues_per_cell
        ue[cell, :, 0] = bs[cell, 0] + ring_radius * np.cos(angles)
        ue[cell, :, 1] = bs[cell, 1] + ring_radius * np.sin(angles)

    delta = ue[None, :, :, :] - bs[:, None, None, :]  # (L, L, K, 2)
    distances = np.hypot(delta[..., 0], delta[..., 1])
    nominal_angles = np.arctan2(delta[..., 1], delta[..., 0])
    link_gains = (distances / ring_radius) ** (-pathloss_exponent)

    return NetworkGeometry(
        cells=cells,
        cell_radius=cell_radius,
        bs_positions=bs,
        ue_positions=ue,
        nominal_angles=nominal_angles,
        link_gains=link_gains,
    )


def steering_vector(n_antennas: int, angle: float) -> np.ndarray:
    """ULA response to a plane wave from `angle`, half-wavelength spacing."""
    m = np.arange(n_antennas)
    return np.exp(1j * np.pi * m * np.sin(angle))


@lru_cache(maxsize=8)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def local_scattering_covariance(
    n_antennas: int,
    nominal_angle: float,
    half_spread: float,
    gain: float = 1.0,
    quad_points: int = 200,
    single_path: bool = False,
) -> np.ndarray:
    """Spatial covariance of a ULA link under the local scattering model.

    Multipath arrives uniformly from [nominal_angle - half_spread,
    nominal_angle + half_spread], giving entries

        R[m, n] = gain * mean over the interval of exp(i pi (m - n) sin t)

    evaluated by Gauss-Legendre quadrature.  The matrix is Hermitian
    Toeplitz and PSD, with all diagonal entries equal to `gain`.

    With single_path=True the zero-spread limit is returned instead: the
    rank-1 matrix gain * a a^H built from the steering vector.

    Raises
    ------
    InvalidSpread
        If half_spread <= 0 and the single-path limit was not requested.
    """
    if gain <= 0:
        raise ValueError("gain must be positive")
    if single_path:
        a = steering_vector(n_antennas, nominal_angle)
        return gain * np.outer(a, a.conj())
    if half_spread <= 0:
        raise InvalidSpread(
            "half_spread must be positive (pass single_path=True for the zero-spread limit)"
        )
    if half_spread >= np.pi / 2:
        raise InvalidSpread("half_spread must be below pi/2")

    nodes, weights = _gauss_legendre(quad_points)
    theta = nominal_angle + half_spread * nodes
    lags = np.arange(n_antennas)
    # First column of the Toeplitz matrix: entries for m - n = 0 .. N-1.
    # weights sum to 2, so weights/2 realizes the 1/(2*half_spread) average.
    column = np.exp(1j * np.pi * np.outer(lags, np.sin(theta))) @ (weights / 2.0)
    return gain * scipy.linalg.toeplitz(column)


def bs_covariances(
    geometry: NetworkGeometry,
    bs: int,
    n_antennas: int,
    half_spread: float,
    quad_points: int = 200,
) -> np.ndarray:
    """Covariances of every UE's channel toward one BS, shape (L, K, N, N)."""
    cells, ues = geometry.link_gains.shape[1:]
    out = np.empty((cells, ues, n_antennas, n_antennas), dtype=complex)
    for cell in range(cells):
        for k in range(ues):
            out[cell, k] = local_scattering_covariance(
                n_antennas,
                geometry.nominal_angles[bs, cell, k],
                half_spread,
                gain=geometry.link_gains[bs, cell, k],
                quad_points=quad_points,
            )
    return out


def covariance_factors(covariances: np.ndarray) -> np.ndarray:
    """Square factors F with F F^H = R for a stack of PSD matrices.

    Accepts shape (..., N, N); negative eigenvalues from quadrature noise
    are clamped to zero.
    """
    covariances = np.asarray(covariances, dtype=complex)
    n = covariances.shape[-1]
    flat = covariances.reshape(-1, n, n)
    factors = np.empty_like(flat)
    for i, r in enumerate(flat):
        factors[i] = psd_factor(r)
    return factors.reshape(covariances.shape)


def sample_channels(
    factors: np.ndarray,
    rng: int | np.random.Generator | None = None,
    blocks: int | None = None,
) -> np.ndarray:
    """Correlated Rayleigh fading draws h = F z with z ~ CN(0, I).

    Parameters
    ----------
    factors : (..., N, N) ndarray
        Precomputed covariance factors (see covariance_factors); one per
        link, independent draws per link and per block.
    blocks : int, optional
        If given, a leading block axis of that length is added.

    Returns
    -------
    (..., N) or (blocks, ..., N) ndarray of channel vectors.
    """
    rng = ensure_rng(rng)
    factors = np.asarray(factors, dtype=complex)
    lead = factors.shape[:-2]
    n = factors.shape[-1]
    squeeze = blocks is None
    b = 1 if blocks is None else blocks
    z = complex_normal(rng, (b, *lead, n))
    h = np.einsum("...nm,b...m->b...n", factors, z)
    return h[0] if squeeze else h


def dominant_eigenvalue_count(matrix: np.ndarray, rel_threshold: float = 0.01) -> int:
    """Number of eigenvalues above `rel_threshold` times the largest."""
    eigenvalues = np.linalg.eigvalsh(np.asarray(matrix, dtype=complex))
    return int((eigenvalues > rel_threshold * eigenvalues[-1]).sum())
