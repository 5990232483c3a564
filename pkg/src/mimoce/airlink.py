"""Pilot sequences, pilot allocation and uplink signal synthesis.

Each coherence block carries tau_p pilot samples followed by tau_u data
samples.  UEs transmit one of tau_p orthogonal unit-modulus pilot
sequences during the pilot phase (chosen per block at random, or fixed
cyclically) and unit-modulus random-phase data symbols afterwards.  The
BS-side receive signal superimposes all UEs' contributions plus spatially
correlated noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import psd_factor
from .seeding import complex_normal, ensure_rng


@dataclass
class PilotBook:
    """tau_p orthogonal unit-modulus pilot sequences, one per row.

    Row b satisfies s_b^H s_b = tau_p and s_b^H s_c = 0 for b != c.
    """

    tau_p: int
    sequences: np.ndarray  # (tau_p, tau_p)


@dataclass
class PilotAllocation:
    """Pilot index chosen by each UE in each block.

    indices[t, l, k] is the 0-based pilot index of UE (l, k) in block t.
    """

    mode: str  # "random" | "fixed_cyclic"
    indices: np.ndarray  # (T, L, K) integer


@dataclass
class BlockSignals:
    """Received baseband samples at one BS for one coherence block."""

    pilot_rx: np.ndarray  # (N, tau_p)
    data_rx: np.ndarray  # (N, tau_u)


def make_pilot_book(tau_p: int) -> PilotBook:
    """DFT pilot book: s_b(p) = exp(-2i pi b p / tau_p), 0-based b and p."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    b = np.arange(tau_p)
    sequences = np.exp(-2j * np.pi * np.outer(b, b) / tau_p)
    return PilotBook(tau_p=tau_p, sequences=sequences)


def allocate_pilots(
    blocks: int,
    cells: int,
    ues_per_cell: int,
    tau_p: int,
    mode: str = "random",
    rng: int | np.random.Generator | None = None,
) -> PilotAllocation:
    """Draw or assign pilot indices for every UE and block.

    random: each UE independently picks one of the tau_p pilots uniformly
    in every block.  fixed_cyclic: constant over blocks; pilots are
    assigned cyclically by UE order within a cell, and the cycle continues
    across cells without restarting.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    if mode == "random":
        rng = ensure_rng(rng)
        indices = rng.integers(0, tau_p, size=(blocks, cells, ues_per_cell))
    elif mode == "fixed_cyclic":
        flat = np.arange(cells * ues_per_cell) % tau_p
        per_block = flat.reshape(cells, ues_per_cell)
        indices = np.broadcast_to(per_block, (blocks, cells, ues_per_cell)).copy()
    else:
        raise ValueError(f"unknown allocation mode: {mode!r}")
    return PilotAllocation(mode=mode, indices=indices)


def make_noise_covariance(
    n_antennas: int,
    noise_power: float,
    jammer: tuple[np.ndarray, float] | None = None,
) -> np.ndarray:
    """Spatial noise covariance sigma^2 I, plus rho a a^H for a jammer.

    `jammer` is an optional (steering_vector, power) pair modelling a
    localized interferer that correlates the noise across antennas.
    """
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    r = noise_power * np.eye(n_antennas, dtype=complex)
    if jammer is not None:
        a, rho = jammer
        if rho < 0:
            raise ValueError("jammer power must be non-negative")
        r = r + rho * np.outer(a, np.conj(a))
    return r


def simulate_blocks(
    channels: np.ndarray,
    pilot_indices: np.ndarray,
    pilot_book: PilotBook,
    powers: np.ndarray,
    noise_factor: np.ndarray,
    rng: np.random.Generator,
    tau_u: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize received pilot- and data-phase signals for a batch of blocks.

    Parameters
    ----------
    channels : (B, L, K, N) ndarray
        Channel vectors from every UE to the BS, one set per block.
    pilot_indices : (B, L, K) integer ndarray
        Pilot chosen by each UE in each block.
    powers : (L, K) ndarray
        Per-UE transmit power, applied in both phases.
    noise_factor : (N, N) ndarray
        Square factor F with F F^H equal to the noise covariance; noise is
        drawn independently per sample.
    tau_u : int
        Data samples per block; 0 skips the data phase.

    Returns
    -------
    (pilot_rx, data_rx) with shapes (B, N, tau_p) and (B, N, tau_u).
    """
    b_blocks, cells, ues, n = channels.shape
    tau_p = pilot_book.tau_p
    amp = np.sqrt(powers)[None, :, :, None]  # (1, L, K, 1)
    weighted = (channels * amp).reshape(b_blocks, cells * ues, n)

    seq = pilot_book.sequences[pilot_indices.reshape(b_blocks, cells * ues)]
    pilot_rx = np.einsum("bun,bup->bnp", weighted, seq)
    pilot_rx += np.einsum(
        "nm,bmp->bnp", noise_factor, complex_normal(rng, (b_blocks, n, tau_p))
    )

    if tau_u > 0:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(b_blocks, cells * ues, tau_u))
        data_rx = np.einsum("bun,but->bnt", weighted, np.exp(1j * phases))
        data_rx += np.einsum(
            "nm,bmt->bnt", noise_factor, complex_normal(rng, (b_blocks, n, tau_u))
        )
    else:
        data_rx = np.zeros((b_blocks, n, 0), dtype=complex)
    return pilot_rx, data_rx


def simulate_block(
    channels: np.ndarray,
    pilot_indices: np.ndarray,
    pilot_book: PilotBook,
    powers: np.ndarray,
    noise_cov: np.ndarray,
    rng: int | np.random.Generator | None = None,
    tau_u: int = 0,
) -> BlockSignals:
    """Single-block convenience wrapper around simulate_blocks.

    Takes the noise covariance directly and factorizes it internally.
    """
    rng = ensure_rng(rng)
    noise_factor = psd_factor(np.asarray(noise_cov, dtype=complex))
    pilot_rx, data_rx = simulate_blocks(
        channels[None],
        np.asarray(pilot_indices)[None],
        pilot_book,
        np.asarray(powers, dtype=float),
        noise_factor,
        rng,
        tau_u,
    )
    return BlockSignals(pilot_rx=pilot_rx[0], data_rx=data_rx[0])


def despread(pilot_rx: np.ndarray, pilot_book: PilotBook, b: int) -> np.ndarray:
    """Correlate the pilot-phase signal with the conjugate of pilot b.

    Returns sum_p pilot_rx[:, p] * conj(s_b(p)); a UE that transmitted
    pilot b at power p contributes sqrt(p) * tau_p * h, while UEs on
    orthogonal pilots cancel exactly.
    """
    return np.asarray(pilot_rx) @ np.conj(pilot_book.sequences[b])


def despread_batch(
    pilot_rx: np.ndarray, pilot_book: PilotBook, b: np.ndarray
) -> np.ndarray:
    """Despread a batch (B, N, tau_p) with a per-block pilot index (B,)."""
    seq = pilot_book.sequences[np.asarray(b)]
    return np.einsum("bnp,bp->bn", pilot_rx, np.conj(seq))
