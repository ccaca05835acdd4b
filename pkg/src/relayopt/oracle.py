"""Brute-force ground truth for desk-scale verification.

Exhaustive enumeration over every relay-permutation tuple and grid search
over discretized power allocations. Deliberately unscalable: the point is an
independent reference that the pairing rules and solvers are checked against
on small instances, not a usable solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .model import (
    _LN2,
    NetworkInstance,
    Pairing,
    PerNodePower,
    PowerConstraint,
    PowerMatrix,
    RelayStrategy,
    TotalPower,
    from_path_layout,
    path_snrs,
)


class BudgetExceeded(RuntimeError):
    """The requested enumeration is larger than the oracle budget allows."""


@dataclass(frozen=True)
class OracleBudget:
    """Caps on the size of exhaustive searches."""

    max_hops: int = 4
    max_channels: int = 4
    grid_steps: int = 64
    enumeration_cap: int = 1_000_000

    def __post_init__(self) -> None:
        if self.grid_steps < 2:
            raise ValueError("grid_steps must be >= 2")

    def check_pairings(self, num_hops: int, num_channels: int) -> int:
        if num_hops > self.max_hops or num_channels > self.max_channels:
            raise BudgetExceeded(
                f"instance ({num_hops} hops, {num_channels} channels) exceeds the "
                f"oracle limits ({self.max_hops}, {self.max_channels})")
        count = factorial(num_channels) ** (num_hops - 1)
        if count > self.enumeration_cap:
            raise BudgetExceeded(
                f"{count} pairings exceed the enumeration cap {self.enumeration_cap}")
        return count

    def check_grid(self, points: int) -> None:
        if points > self.enumeration_cap:
            raise BudgetExceeded(
                f"{points} grid points exceed the enumeration cap {self.enumeration_cap}")


def _iter_perm_tuples(num_hops: int, num_channels: int):
    """All relay-permutation tuples in lexicographic order."""
    perms = list(itertools.permutations(range(num_channels)))
    return itertools.product(perms, repeat=num_hops - 1)


def _path_indices(perm_tuple, num_channels: int) -> np.ndarray:
    """(M, N) channel-index matrix: column i walks path i hop by hop."""
    idx = np.empty((len(perm_tuple) + 1, num_channels), dtype=np.intp)
    idx[0] = np.arange(num_channels)
    for m, perm in enumerate(perm_tuple):
        idx[m + 1] = np.asarray(perm, dtype=np.intp)[idx[m]]
    return idx


def _rate_for_indices(snr_grid: np.ndarray, idx: np.ndarray,
                      strategy: RelayStrategy, spatial_reuse: float) -> float:
    hop_snrs = snr_grid[np.arange(idx.shape[0])[:, None], idx]
    snrs = path_snrs(strategy, hop_snrs)
    return float(np.log1p(snrs).sum() / _LN2 / spatial_reuse)


def best_pairing_exhaustive(inst: NetworkInstance, power: PowerMatrix,
                            strategy: RelayStrategy,
                            budget: OracleBudget = OracleBudget()) -> tuple[Pairing, float]:
    """Maximize the sum rate over every pairing for a fixed power allocation.

    Ties resolve to the lexicographically first relay-permutation tuple.
    """
    budget.check_pairings(inst.num_hops, inst.num_channels)
    snr_grid = inst.gains * power.values
    best_rate = -np.inf
    best: tuple = ()
    for combo in _iter_perm_tuples(inst.num_hops, inst.num_channels):
        rate = _rate_for_indices(snr_grid, _path_indices(combo, inst.num_channels),
                                 strategy, inst.spatial_reuse)
        if rate > best_rate:
            best_rate = rate
            best = combo
    return Pairing.from_relay_perms(best), best_rate


@lru_cache(maxsize=64)
def _compositions(parts: int, steps: int) -> np.ndarray:
    """All nonnegative integer vectors of the given length summing to steps.

    Stars-and-bars enumeration in lexicographic order; cached because grid
    searches reuse the same shapes heavily.
    """
    if parts == 1:
        out = np.array([[steps]], dtype=np.int64)
    else:
        bars = np.array(list(itertools.combinations(range(steps + parts - 1), parts - 1)),
                        dtype=np.int64)
        out = np.empty((bars.shape[0], parts), dtype=np.int64)
        out[:, 0] = bars[:, 0]
        out[:, 1:-1] = np.diff(bars, axis=1) - 1
        out[:, -1] = steps + parts - 2 - bars[:, -1]
    out.flags.writeable = False
    return out


def _grid_powers(inst: NetworkInstance, constraint: PowerConstraint, grid_steps: int,
                 budget: OracleBudget) -> np.ndarray:
    """Feasible power matrices on the discretization grid, shape (K, M, N).

    Grids at step s are subsets of grids at step 2s, so refining by doubling
    can only improve the grid optimum. Boundary points (zero power) included.
    """
    m, n = inst.num_hops, inst.num_channels
    if isinstance(constraint, TotalPower):
        combos = _compositions(m * n, grid_steps)
        budget.check_grid(combos.shape[0])
        return combos.reshape(-1, m, n) * (constraint.budget / grid_steps)
    budgets = constraint.as_array()
    if budgets.size != m:
        raise ValueError(f"expected {m} node budgets, got {budgets.size}")
    per_row = _compositions(n, grid_steps)
    k_row = per_row.shape[0]
    total = k_row ** m
    budget.check_grid(total)
    out = np.empty((total, m, n), dtype=float)
    row_idx = np.indices((k_row,) * m).reshape(m, -1)
    for row in range(m):
        out[:, row, :] = per_row[row_idx[row]] * (budgets[row] / grid_steps)
    return out


def best_power_grid(inst: NetworkInstance, pairing: Pairing, constraint: PowerConstraint,
                    strategy: RelayStrategy, grid_steps: int,
                    budget: OracleBudget = OracleBudget()) -> tuple[PowerMatrix, float]:
    """Maximize the rate over the discretized power set for one fixed pairing."""
    grid = _grid_powers(inst, constraint, grid_steps, budget)
    rate, powers = _best_on_grid(inst, pairing, grid, strategy)
    return PowerMatrix(from_path_layout(powers, pairing)), rate


def _best_on_grid(inst: NetworkInstance, pairing: Pairing, grid: np.ndarray,
                  strategy: RelayStrategy) -> tuple[float, np.ndarray]:
    idx = pairing.path_index_matrix()
    path_gains = inst.gains[np.arange(inst.num_hops)[:, None], idx]
    snrs = grid * path_gains[None, :, :]  # grid rows are already in path layout
    if strategy is RelayStrategy.DF:
        path_snr = snrs.min(axis=1)
    elif strategy is RelayStrategy.AF_APPROX:
        with np.errstate(divide="ignore"):
            path_snr = 1.0 / np.where(snrs > 0, 1.0 / np.where(snrs > 0, snrs, 1.0),
                                      np.inf).sum(axis=1)
    elif strategy is RelayStrategy.AF_EXACT:
        with np.errstate(divide="ignore", over="ignore"):
            inv = np.where(snrs > 0, 1.0 / np.where(snrs > 0, snrs, 1.0), np.inf)
            cascade = np.expm1(np.log1p(inv).sum(axis=1))
            path_snr = np.where(np.isfinite(cascade), 1.0 / cascade, 0.0)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    rates = np.log1p(path_snr).sum(axis=1) / _LN2 / inst.spatial_reuse
    k = int(np.argmax(rates))  # first maximizer: deterministic under ties
    return float(rates[k]), grid[k]


def best_joint_grid(inst: NetworkInstance, constraint: PowerConstraint,
                    strategy: RelayStrategy, grid_steps: int,
                    budget: OracleBudget = OracleBudget()
                    ) -> tuple[Pairing, PowerMatrix, float]:
    """Joint argmax over all pairings and all grid power allocations.

    Deterministic: pairings are scanned lexicographically, grid points in
    enumeration order, and only strict improvements replace the incumbent.
    """
    budget.check_pairings(inst.num_hops, inst.num_channels)
    grid = _grid_powers(inst, constraint, grid_steps, budget)
    best_rate = -np.inf
    best_pairing = None
    best_powers = None
    for combo in _iter_perm_tuples(inst.num_hops, inst.num_channels):
        pairing = Pairing.from_relay_perms(combo)
        rate, powers = _best_on_grid(inst, pairing, grid, strategy)
        if rate > best_rate:
            best_rate = rate
            best_pairing = pairing
            best_powers = from_path_layout(powers, pairing)
    return best_pairing, PowerMatrix(best_powers), best_rate


def df_min_enumeration_check(snrs: np.ndarray) -> bool:
    """Check that keeping sorted channels paired beats the middle-hop swap for
    DF over three hops and two channels.

    ``snrs`` is 3x2 with column 0 at least column 1 on every hop (the sorted
    labeling); violating that ordering is a domain error. Compares
    ``(1 + min path1)(1 + min path2)`` for the straight paths against the
    paths that swap the middle hop.
    """
    g = np.asarray(snrs, dtype=float)
    if g.shape != (3, 2):
        raise ValueError(f"expected a 3x2 SNR matrix, got shape {g.shape}")
    if (g < 0).any():
        raise ValueError("SNRs must be nonnegative")
    if (g[:, 0] < g[:, 1]).any():
        raise ValueError("column 0 must dominate column 1 on every hop")
    straight = (1.0 + g[:, 0].min()) * (1.0 + g[:, 1].min())
    swapped = (1.0 + min(g[0, 0], g[1, 1], g[2, 0])) * (1.0 + min(g[0, 1], g[1, 0], g[2, 1]))
    return bool(straight >= swapped)


def af_inverse_snr_product_gap(snrs: np.ndarray) -> float:
    """Sorted-minus-swapped product of inverse path SNRs for AF over three
    hops and two channels; nonpositive whenever column 0 dominates column 1.

    The product of ``(cascade amplification - 1)`` terms equals the product of
    inverse end-to-end path SNRs, so a nonpositive gap is exactly what makes
    the sorted pairing win after taking rates.
    """
    g = np.asarray(snrs, dtype=float)
    if g.shape != (3, 2):
        raise ValueError(f"expected a 3x2 SNR matrix, got shape {g.shape}")
    if (g <= 0).any():
        raise ValueError("SNRs must be positive")
    if (g[:, 0] < g[:, 1]).any():
        raise ValueError("column 0 must dominate column 1 on every hop")
    amp = 1.0 + 1.0 / g  # per-hop cascade amplification factors
    straight = (amp[0, 0] * amp[1, 0] * amp[2, 0] - 1.0) * (amp[0, 1] * amp[1, 1] * amp[2, 1] - 1.0)
    swapped = (amp[0, 0] * amp[1, 1] * amp[2, 0] - 1.0) * (amp[0, 1] * amp[1, 0] * amp[2, 1] - 1.0)
    return float(straight - swapped)
