"""Monte-Carlo NMSE experiment driver.

One run builds a network, simulates T coherence blocks to feed the
sample-covariance estimators, constructs every configured channel
estimator, and evaluates NMSE on a disjoint set of freshly drawn
evaluation blocks.  Sweeps repeat this over a grid of T or tau_p values
and average across seeded Monte-Carlo runs; all randomness is derived
from the master seed with explicit keys, so results are reproducible and
independent of the worker-thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .airlink import (
    allocate_pilots,
    despread_batch,
    make_noise_covariance,
    make_pilot_book,
    simulate_blocks,
)
from .channel import (
    bs_covariances,
    build_geometry,
    covariance_factors,
    sample_channels,
    steering_vector,
)
from .config import ExperimentConfig, SystemConfig
from .covest import (
    AllCovAccumulator,
    estimate_pilot_cov,
    gevd_lowrank_estimator,
    subtraction_estimator,
)
from .estimators import (
    FILTER_FALLBACK_LOADING,
    approx_mmse_filter,
    improved_mmse_filter,
    ls_estimate,
    mmse_fixed_filter,
    mmse_optimal_filter,
)
from .linalg import NotPositiveDefinite, psd_factor
from .seeding import derive_rng

# Blocks simulated per vectorized batch; a fixed constant so that the
# per-run random streams are consumed identically on every machine.
BATCH_BLOCKS = 256

# Fresh evaluation blocks are drawn from dedicated streams, so estimation
# and evaluation data are disjoint by construction.
_STREAMS = {
    "geometry": 0,
    "est_alloc": 1,
    "est_channels": 2,
    "est_signals": 3,
    "eval_alloc": 4,
    "eval_channels": 5,
    "eval_signals_random": 6,
    "eval_signals_fixed": 7,
}

_DATA_DRIVEN = {"subt", "gevd", "gevd_impr"}
_RANDOM_ALLOC = {"mmse_random", "subt", "gevd", "gevd_impr"}
_FIXED_ALLOC = {"ls_fixed", "mmse_fixed"}


class ZeroTraceCovariance(ValueError):
    """Raised when the NMSE normalizer tr(R) is not positive."""


@dataclass
class NmseResult:
    """Aggregated NMSE of one estimator at one sweep point."""

    estimator: str
    sweep_variable: str
    sweep_value: int
    nmse: float
    nmse_db: float
    runs_aggregated: int
    fallback_count: int


@dataclass
class RunContribution:
    """Per-run NMSE of one estimator, before Monte-Carlo averaging."""

    estimator: str
    nmse: float
    fallbacks: int


def nmse(h_true: np.ndarray, h_hat: np.ndarray, covariance) -> float:
    """Squared estimation error of one realization, normalized by tr(R)."""
    matrix = covariance.matrix if hasattr(covariance, "matrix") else covariance
    trace = float(np.trace(np.asarray(matrix)).real)
    if trace <= 0:
        raise ZeroTraceCovariance("covariance trace must be positive")
    diff = np.asarray(h_hat) - np.asarray(h_true)
    return float(np.vdot(diff, diff).real) / trace


def _streams(run_seed) -> dict[str, np.random.Generator]:
    keys = tuple(run_seed) if isinstance(run_seed, (tuple, list)) else (run_seed,)
    return {name: derive_rng(*keys, i) for name, i in _STREAMS.items()}


def _loaded(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    return matrix + FILTER_FALLBACK_LOADING * (np.trace(matrix).real / n) * np.eye(n)


def _mmse_form_filter(pilot_matrix, target, power, kind):
    """MMSE-form filter sqrt(p) pilot^{-1} target with one loading retry."""
    try:
        return mmse_optimal_filter(pilot_matrix, target, power, kind=kind), 0
    except NotPositiveDefinite:
        return mmse_optimal_filter(_loaded(pilot_matrix), target, power, kind=kind), 1


class _RunState:
    """Everything derived once per (sweep value, run): network, statistics,
    sample covariances and the block-independent filters."""

    def __init__(self, config: ExperimentConfig, system: SystemConfig, rngs):
        self.config = config
        self.system = system
        self.rngs = rngs
        self.kinds = {spec.kind for spec in config.estimators}
        self.fallbacks = {spec.label: 0 for spec in config.estimators}
        self._impr_cache: dict[tuple, tuple[np.ndarray, bool]] = {}

        sysc = system
        self.power = sysc.uplink_power
        self.powers = np.full((sysc.cells, sysc.ues_per_cell), self.power)
        self.book = make_pilot_book(sysc.tau_p)

        geometry = build_geometry(
            sysc.cells,
            sysc.ues_per_cell,
            sysc.cell_radius,
            sysc.ring_radius,
            sysc.pathloss_exponent,
            rngs["geometry"],
        )
        self.covs = bs_covariances(
            geometry, 0, sysc.antennas, math.radians(sysc.half_spread_deg)
        )
        self.factors = covariance_factors(self.covs)
        self.center_traces = np.einsum("knn->k", self.covs[0]).real

        jammer = None
        if sysc.jammer_power > 0:
            a = steering_vector(sysc.antennas, math.radians(sysc.jammer_angle_deg))
            jammer = (a, sysc.jammer_power)
        self.r_nn = make_noise_covariance(sysc.antennas, sysc.noise_power, jammer)
        self.noise_factor = psd_factor(self.r_nn)

        # Network-wide second-order statistics at the center BS.
        self.total_cov = self.power * np.einsum("lkij->ij", self.covs)
        self.pilot_covs = None
        self.all_cov = None
        self.lowranks: dict[int, list] = {}
        if self.kinds & _DATA_DRIVEN:
            self._estimate_covariances()
        self._build_static_filters()

    def pilot_cov_true(self, k: int) -> np.ndarray:
        """Despread-signal covariance of center UE k under random allocation."""
        sysc = self.system
        return (
            self.total_cov
            + self.power * (sysc.tau_p - 1) * self.covs[0, k]
            + self.r_nn
        )

    def _estimate_covariances(self) -> None:
        sysc = self.system
        cells, ues, n = sysc.cells, sysc.ues_per_cell, sysc.antennas
        alloc = allocate_pilots(
            sysc.blocks, cells, ues, sysc.tau_p, "random", self.rngs["est_alloc"]
        )
        acc = AllCovAccumulator(n)
        despread_store: list[list[np.ndarray]] = [[] for _ in range(ues)]
        for start in range(0, sysc.blocks, BATCH_BLOCKS):
            stop = min(start + BATCH_BLOCKS, sysc.blocks)
            h = sample_channels(
                self.factors, self.rngs["est_channels"], blocks=stop - start
            )
            pilot_rx, data_rx = simulate_blocks(
                h,
                alloc.indices[start:stop],
                self.book,
                self.powers,
                self.noise_factor,
                self.rngs["est_signals"],
                sysc.tau_u,
            )
            acc.add(np.concatenate([pilot_rx, data_rx], axis=2))
            for k in range(ues):
                despread_store[k].append(
                    despread_batch(pilot_rx, self.book, alloc.indices[start:stop, 0, k])
                )
        self.all_cov = acc.estimate()
        self.pilot_covs = [
            estimate_pilot_cov(
                np.concatenate(despread_store[k]), sysc.tau_p, sysc.cov_loading
            )
            for k in range(ues)
        ]
        ranks = sorted(
            {
                spec.rank
                for spec in self.config.estimators
                if spec.kind in ("gevd", "gevd_impr")
            }
        )
        for rank in ranks:
            self.lowranks[rank] = [
                gevd_lowrank_estimator(
                    self.pilot_covs[k], self.all_cov, sysc.tau_p, self.power, rank
                )
                for k in range(ues)
            ]

    def _build_static_filters(self) -> None:
        sysc = self.system
        ues = sysc.ues_per_cell
        self.static_filters: dict[str, np.ndarray] = {}
        fixed_row = allocate_pilots(
            1, sysc.cells, ues, sysc.tau_p, "fixed_cyclic"
        ).indices[0]
        for spec in self.config.estimators:
            if spec.kind == "mmse_random":
                w = [
                    mmse_optimal_filter(
                        self.pilot_cov_true(k), self.covs[0, k], self.power
                    ).w
                    for k in range(ues)
                ]
            elif spec.kind == "subt":
                w = []
                for k in range(ues):
                    estimate = subtraction_estimator(
                        self.pilot_covs[k], self.all_cov, sysc.tau_p, self.power
                    )
                    filt, events = _mmse_form_filter(
                        self.pilot_covs[k].matrix, estimate, self.power, "subt"
                    )
                    self.fallbacks[spec.label] += events
                    w.append(filt.w)
            elif spec.kind == "gevd":
                w = [
                    approx_mmse_filter(self.lowranks[spec.rank][k], self.power).w
                    for k in range(ues)
                ]
            elif spec.kind == "mmse_fixed":
                w = []
                for k in range(ues):
                    shared = [
                        (self.covs[l, i], self.power)
                        for l in range(sysc.cells)
                        for i in range(ues)
                        if (l, i) != (0, k) and fixed_row[l, i] == fixed_row[0, k]
                    ]
                    w.append(
                        mmse_fixed_filter(
                            self.covs[0, k], self.power, shared, self.r_nn, sysc.tau_p
                        ).w
                    )
            else:
                continue  # ls_fixed needs no filter; gevd_impr is per block
            self.static_filters[spec.label] = np.stack(w)

    def improved_filter(self, rank: int, label: str, k: int, share_mask: tuple) -> np.ndarray:
        """Per-block improved filter, cached by the intra-cell sharing pattern."""
        key = (rank, k, share_mask)
        cached = self._impr_cache.get(key)
        if cached is None:
            # Only collisions with UE k matter, so a synthetic pilot row
            # reproducing the sharing pattern is sufficient.
            pilot_row = np.where(np.asarray(share_mask), 0, 1)
            try:
                filt = improved_mmse_filter(
                    self.pilot_covs[k],
                    self.lowranks[rank],
                    pilot_row,
                    k,
                    self.system.tau_p,
                    self.power,
                )
                cached = (filt.w, filt.clamped)
            except NotPositiveDefinite:
                cached = (approx_mmse_filter(self.lowranks[rank][k], self.power).w, True)
            self._impr_cache[key] = cached
        w, degraded = cached
        if degraded:
            self.fallbacks[label] += 1
        return w

    def evaluate(self, eval_blocks: int) -> dict[str, float]:
        """Mean NMSE per estimator over fresh held-out blocks."""
        sysc = self.system
        cells, ues = sysc.cells, sysc.ues_per_cell
        self._impr_cache = {}
        err = {spec.label: 0.0 for spec in self.config.estimators}

        need_random = bool(self.kinds & _RANDOM_ALLOC)
        need_fixed = bool(self.kinds & _FIXED_ALLOC)
        rand_alloc = (
            allocate_pilots(
                eval_blocks, cells, ues, sysc.tau_p, "random", self.rngs["eval_alloc"]
            )
            if need_random
            else None
        )
        fixed_alloc = allocate_pilots(eval_blocks, cells, ues, sysc.tau_p, "fixed_cyclic")

        for start in range(0, eval_blocks, BATCH_BLOCKS):
            stop = min(start + BATCH_BLOCKS, eval_blocks)
            h = sample_channels(
                self.factors, self.rngs["eval_channels"], blocks=stop - start
            )
            h_center = h[:, 0]  # (B, K, N)
            d_random = d_fixed = None
            if need_random:
                rows = rand_alloc.indices[start:stop]
                pilot_rx, _ = simulate_blocks(
                    h, rows, self.book, self.powers, self.noise_factor,
                    self.rngs["eval_signals_random"], 0,
                )
                d_random = np.stack(
                    [despread_batch(pilot_rx, self.book, rows[:, 0, k]) for k in range(ues)],
                    axis=1,
                )  # (B, K, N)
            if need_fixed:
                frows = fixed_alloc.indices[start:stop]
                pilot_rx, _ = simulate_blocks(
                    h, frows, self.book, self.powers, self.noise_factor,
                    self.rngs["eval_signals_fixed"], 0,
                )
                d_fixed = np.stack(
                    [despread_batch(pilot_rx, self.book, frows[:, 0, k]) for k in range(ues)],
                    axis=1,
                )

            for spec in self.config.estimators:
                if spec.kind == "ls_fixed":
                    h_hat = ls_estimate(d_fixed, self.power, sysc.tau_p)
                elif spec.kind == "gevd_impr":
                    h_hat = self._improved_estimates(
                        spec.rank, spec.label, rand_alloc.indices[start:stop], d_random
                    )
                else:
                    w = self.static_filters[spec.label]  # (K, N, N)
                    d = d_fixed if spec.kind in _FIXED_ALLOC else d_random
                    h_hat = np.einsum("knm,bkn->bkm", w.conj(), d)
                sq = np.abs(h_hat - h_center) ** 2
                err[spec.label] += float(
                    (sq.sum(axis=2) / self.center_traces[None, :]).sum()
                )
        total = eval_blocks * ues
        return {label: value / total for label, value in err.items()}

    def _improved_estimates(
        self, rank: int, label: str, rows: np.ndarray, d_random: np.ndarray
    ) -> np.ndarray:
        b_blocks, ues, n = d_random.shape
        h_hat = np.empty_like(d_random)
        for b in range(b_blocks):
            center_row = rows[b, 0]
            for k in range(ues):
                mask = tuple(bool(v) for v in center_row == center_row[k])
                w = self.improved_filter(rank, label, k, mask)
                h_hat[b, k] = w.conj().T @ d_random[b, k]
        return h_hat


def run_single(
    config: ExperimentConfig, sweep_value: int, run_seed
) -> list[RunContribution]:
    """Execute one Monte-Carlo run at one sweep point.

    Deterministic given (config, sweep_value, run_seed): the seed keys
    every random stream of the run (geometry, estimation blocks,
    evaluation blocks).
    """
    config.validate()
    system = config.system_for(sweep_value)
    state = _RunState(config, system, _streams(run_seed))
    per_label = state.evaluate(config.eval_blocks)
    return [
        RunContribution(
            estimator=spec.label,
            nmse=per_label[spec.label],
            fallbacks=state.fallbacks[spec.label],
        )
        for spec in config.estimators
    ]


def run_sweep(config: ExperimentConfig, workers: int = 1) -> list[NmseResult]:
    """Run the full sweep-values x estimators x Monte-Carlo-runs grid.

    Per-run results are averaged in a fixed order keyed by run index, so
    the aggregate is bitwise-identical regardless of `workers`.
    """
    config.validate()
    jobs = [
        (sweep_index, sweep_value, run_index)
        for sweep_index, sweep_value in enumerate(config.sweep.values)
        for run_index in range(config.monte_carlo_runs)
    ]

    def execute(job):
        sweep_index, sweep_value, run_index = job
        # Streams are keyed by run index only, so run r sees the same
        # geometry, training blocks and evaluation blocks at every sweep
        # point: sweep curves are paired comparisons, and a T-sweep
        # estimates from nested windows of one block stream.
        seed = (config.master_seed, run_index)
        return (sweep_index, run_index), run_single(config, sweep_value, seed)

    store: dict[tuple[int, int], list[RunContribution]] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for key, contribs in pool.map(execute, jobs):
                store[key] = contribs
    else:
        for job in jobs:
            key, contribs = execute(job)
            store[key] = contribs

    results = []
    for sweep_index, sweep_value in enumerate(config.sweep.values):
        for position, spec in enumerate(config.estimators):
            values = []
            fallbacks = 0
            for run_index in range(config.monte_carlo_runs):
                contribution = store[(sweep_index, run_index)][position]
                values.append(contribution.nmse)
                fallbacks += contribution.fallbacks
            mean = sum(values) / len(values)
            results.append(
                NmseResult(
                    estimator=spec.label,
                    sweep_variable=config.sweep.variable,
                    sweep_value=int(sweep_value),
                    nmse=mean,
                    nmse_db=10.0 * math.log10(mean) if mean > 0 else float("-inf"),
                    runs_aggregated=config.monte_carlo_runs,
                    fallback_count=fallbacks,
                )
            )
    return results
