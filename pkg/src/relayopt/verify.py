"""Seeded verification suites behind the ``relayopt verify`` command.

Each suite replays a claim against the brute-force oracles on many random
instances and reports pass counts plus a serialized counterexample when one
shows up. Suites are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NetworkInstance, PowerMatrix, RelayStrategy, TotalPower, PerNodePower, sum_rate
from .oracle import (
    OracleBudget,
    af_inverse_snr_product_gap,
    best_joint_grid,
    best_power_grid,
    df_min_enumeration_check,
)
from .pairing import sorted_gain_pairing, sorted_snr_pairing
from .power import DfSolverOptions, df_individual_solve, total_pa_solve
from . import oracle


@dataclass(frozen=True)
class SuiteOutcome:
    passed: int
    total: int
    counterexample: dict | None = None


def _gap_tolerant_equal(a: float, b: float, rel: float = 1e-9) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b), 1.0)


def verify_sorted_snr_optimal(instances: int, max_m: int, max_n: int,
                              seed: int) -> SuiteOutcome:
    """Sorted-SNR pairing attains the exhaustive maximum for fixed powers,
    under both the exact AF cascade SNR and DF, on every random instance."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    budget = OracleBudget()
    passed = 0
    for k in range(instances):
        m = int(rng.integers(2, max_m + 1))
        n = int(rng.integers(2, max_n + 1))
        inst = NetworkInstance(rng.exponential(1.0, size=(m, n)), spatial_reuse=3.0)
        power = PowerMatrix(rng.uniform(0.1, 2.0, size=(m, n)))
        ok = True
        for strategy in (RelayStrategy.AF_EXACT, RelayStrategy.DF):
            heuristic = sum_rate(inst, sorted_snr_pairing(inst, power), power, strategy)
            _, best = oracle.best_pairing_exhaustive(inst, power, strategy, budget)
            if not _gap_tolerant_equal(heuristic, best):
                ok = False
                break
        if ok:
            passed += 1
        else:
            return SuiteOutcome(passed, instances, {
                "instance": k, "gains": inst.gains.tolist(),
                "power": power.values.tolist(), "strategy": strategy.value,
                "heuristic_rate": heuristic, "exhaustive_rate": best})
    return SuiteOutcome(passed, instances)


def _draw_separated_gains(rng: np.random.Generator, m: int, n: int,
                          min_sep: float = 0.03) -> np.ndarray:
    """Gains whose per-hop order statistics are separated by at least
    ``min_sep`` relative, so a finite power grid cannot blur the gain order."""
    while True:
        gains = rng.exponential(1.0, size=(m, n))
        srt = np.sort(gains, axis=1)
        if (np.diff(srt, axis=1) >= min_sep * srt[:, 1:]).all():
            return gains


def verify_separation(instances: int, max_m: int, grid_steps: int,
                      seed: int) -> SuiteOutcome:
    """Joint grid search agrees with gain-sorted pairing followed by power
    optimization (DF, two channels, total and per-node budgets)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 52]))
    budget = OracleBudget()
    passed = 0
    for k in range(instances):
        m = int(rng.integers(2, max_m + 1))
        inst = NetworkInstance(_draw_separated_gains(rng, m, 2), spatial_reuse=3.0)
        if k % 2 == 0:
            constraint = TotalPower(float(rng.uniform(1.0, 4.0)) * 2 * m)
        else:
            constraint = PerNodePower(rng.uniform(2.0, 8.0, size=m))
        _, _, grid_rate = best_joint_grid(inst, constraint, RelayStrategy.DF,
                                          grid_steps, budget)
        pairing = sorted_gain_pairing(inst)
        _, sorted_grid_rate = best_power_grid(inst, pairing, constraint,
                                              RelayStrategy.DF, grid_steps, budget)
        if isinstance(constraint, TotalPower):
            cont = total_pa_solve(inst, pairing, constraint.budget, RelayStrategy.DF)
        else:
            cont = df_individual_solve(inst, pairing, constraint,
                                       DfSolverOptions(gap_tol=1e-7))
        sorted_wins = _gap_tolerant_equal(sorted_grid_rate, grid_rate, 1e-12)
        continuous_covers = cont.objective >= grid_rate - 1e-9
        if sorted_wins and continuous_covers:
            passed += 1
        else:
            return SuiteOutcome(passed, instances, {
                "instance": k, "gains": inst.gains.tolist(),
                "constraint": repr(constraint), "grid_rate": grid_rate,
                "sorted_grid_rate": sorted_grid_rate,
                "continuous_rate": cont.objective})
    return SuiteOutcome(passed, instances)


def _condition_sorted_draw(rng: np.random.Generator, draws: int) -> np.ndarray:
    """(draws, 3, 2) SNR matrices with column 0 dominating column 1 per hop."""
    snrs = rng.exponential(1.0, size=(draws, 3, 2))
    return np.sort(snrs, axis=2)[:, :, ::-1]


def verify_exchange_inequalities(draws: int, seed: int) -> SuiteOutcome:
    """Local-exchange inequalities behind the sorted pairing: the AF
    inverse-SNR product gap is nonpositive and the DF middle-hop swap never
    wins, over random dominated SNR draws."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 73]))
    snrs = _condition_sorted_draw(rng, draws)
    passed = 0
    for k in range(draws):
        gap = af_inverse_snr_product_gap(snrs[k])
        scale = max(1.0, float((1.0 + 1.0 / snrs[k]).prod()))
        af_ok = gap <= 1e-12 * scale
        df_ok = df_min_enumeration_check(snrs[k])
        if af_ok and df_ok:
            passed += 1
        else:
            return SuiteOutcome(passed, draws, {
                "draw": k, "snrs": snrs[k].tolist(), "af_gap": gap,
                "df_ok": bool(df_ok)})
    return SuiteOutcome(passed, draws)


def verify_upper_bound_concavity(draws: int, seed: int) -> SuiteOutcome:
    """Concavity of the AF harmonic path SNR in the powers: midpoint test on
    the rate and finite-difference curvature of the SNR along random
    directions."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 94]))
    passed = 0
    for k in range(draws):
        m = int(rng.integers(2, 5))
        gains = rng.exponential(1.0, size=m)

        def snr(p: np.ndarray) -> float:
            return 1.0 / float((1.0 / (p * gains)).sum())

        def rate(p: np.ndarray) -> float:
            return float(np.log1p(snr(p)))

        x = rng.uniform(0.2, 3.0, size=m)
        y = rng.uniform(0.2, 3.0, size=m)
        mid_ok = rate(0.5 * (x + y)) >= 0.5 * (rate(x) + rate(y)) - 1e-12

        v = rng.standard_normal(m)
        v /= np.linalg.norm(v)
        h = 1e-4 * float(x.min())
        curv = (snr(x + h * v) - 2.0 * snr(x) + snr(x - h * v)) / h**2
        curv_ok = curv <= 1e-6 * (1.0 + snr(x)) / float(x.min())
        if mid_ok and curv_ok:
            passed += 1
        else:
            return SuiteOutcome(passed, draws, {
                "draw": k, "gains": gains.tolist(), "x": x.tolist(),
                "y": y.tolist(), "v": v.tolist(), "midpoint_ok": bool(mid_ok),
                "curvature": float(curv)})
    return SuiteOutcome(passed, draws)
