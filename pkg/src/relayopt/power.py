"""Power-allocation solvers.

Four allocators cover the scheme matrix used in the experiments:

* :func:`uniform_pa` - equal power per channel (and per node under a shared
  budget); the no-optimization baseline.
* :func:`total_pa_solve` - shared-budget optimum: collapse each path to an
  equivalent scalar gain, water-fill the budget over paths, then split each
  path's power across its hops.
* :func:`df_individual_solve` - per-node budgets, DF relaying: projected
  subgradient iteration on the Lagrange multipliers of the epigraph form of
  the max-min-rate problem, with per-node water-level rescaling each sweep.
* :func:`af_individual_solve` - per-node budgets, AF relaying: projected
  gradient ascent on the concave harmonic-SNR upper bound of the AF rate,
  with exact Euclidean projection of each node's row onto its budget simplex.

All solvers return a :class:`SolverReport` whose power matrix satisfies the
constraints exactly (rows/total rescaled as the last step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

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
    sum_rate,
    to_path_layout,
)

_SUPPORTED = (RelayStrategy.DF, RelayStrategy.AF_APPROX)


@dataclass(frozen=True, eq=False)
class EquivalentGains:
    """Per-path scalar gains that make a multi-hop path look like one channel.

    DF: reciprocal of the summed reciprocal hop gains. AF: reciprocal-square of
    the summed reciprocal root hop gains (derived from the harmonic SNR bound).
    A path containing a dead hop gets equivalent gain 0.
    """

    values: np.ndarray
    strategy: RelayStrategy

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class DualState:
    """Multiplier state of the DF per-node-budget dual solver at one iteration.

    ``mu`` carries one column per path with column sums projected to 1;
    ``lam`` carries one nonnegative water-level multiplier per node. ``r`` are
    the per-path bottleneck rates of the current inner power solution, and the
    thetas are the subgradients used for the next multiplier update.
    """

    lam: np.ndarray
    mu: np.ndarray
    r: np.ndarray
    theta_mu: np.ndarray
    theta_lambda: np.ndarray
    iteration: int
    step_lambda: float
    step_mu: float


@dataclass(frozen=True, eq=False)
class SolverReport:
    """Outcome of one solver invocation.

    ``objective`` is the quantity the solver maximizes (DF rate, or the AF
    upper-bound rate for the AF solvers); ``exact_rate`` re-evaluates the
    returned powers under the exact AF cascade SNR where that differs.
    ``constraint_violation`` is relative to the binding budget and
    ``kkt_residual`` is the solver-specific optimality residual (see each
    solver's docstring).
    """

    power: PowerMatrix
    objective: float
    exact_rate: float
    dual_value: float | None
    iterations: int
    constraint_violation: float
    kkt_residual: float
    converged: bool
    dual_state: DualState | None = None
    history: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class DfSolverOptions:
    """Knobs for :func:`df_individual_solve`."""

    max_iter: int = 5000
    gap_tol: float = 1e-3          # stop once (dual - primal)/primal is certified below
    projection: str = "euclidean"  # "euclidean" or "normalize" (rescale by column sum)
    bisect_tol: float = 1e-12      # relative budget error of the inner water level
    refine_iter: int = 200         # certificate-refinement sweeps after the loop
    record_history: bool = False   # keep (primal, dual) per iteration on the report

    def __post_init__(self) -> None:
        if self.projection not in ("euclidean", "normalize"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class AfSolverOptions:
    """Knobs for :func:`af_individual_solve`."""

    max_iter: int = 2000
    gap_tol: float = 1e-8          # relative certified optimality gap to stop at
    armijo_sigma: float = 1e-4
    armijo_shrink: float = 0.5
    power_floor_rel: float = 1e-12  # iterates stay >= floor*budget to dodge 0/0
    refine_sweeps: int = 60        # node-multiplier certificate sweeps after the loop

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def uniform_pa(inst: NetworkInstance, constraint: PowerConstraint) -> PowerMatrix:
    """Spread each budget evenly: per node over its channels, and the shared
    budget additionally over the nodes."""
    m, n = inst.num_hops, inst.num_channels
    if isinstance(constraint, TotalPower):
        return PowerMatrix.uniform(m, n, constraint.budget / (m * n))
    budgets = constraint.as_array()
    if budgets.size != m:
        raise ValueError(f"expected {m} node budgets, got {budgets.size}")
    return PowerMatrix(np.repeat(budgets[:, None] / n, n, axis=1))


def equivalent_gains(inst: NetworkInstance, pairing: Pairing,
                     strategy: RelayStrategy) -> EquivalentGains:
    """Collapse each path's hop gains into one water-filling coefficient."""
    if strategy not in _SUPPORTED:
        raise ValueError(f"equivalent gains are defined for DF/AF_APPROX, not {strategy}")
    path_gains = to_path_layout(inst.gains, pairing)
    dead = (path_gains <= 0).any(axis=0)
    vals = np.zeros(pairing.num_channels)
    with np.errstate(divide="ignore"):
        if strategy is RelayStrategy.DF:
            vals[~dead] = 1.0 / (1.0 / path_gains[:, ~dead]).sum(axis=0)
        else:
            vals[~dead] = (1.0 / np.sqrt(path_gains[:, ~dead])).sum(axis=0) ** -2
    return EquivalentGains(vals, strategy)


def _waterfill(gains: np.ndarray, total: float, rel_tol: float = 1e-12,
               max_iter: int = 400) -> tuple[np.ndarray, float, int]:
    """Water-fill ``total`` over channels with the given gains.

    Bisects the water-level multiplier until the allocated power matches the
    budget to ``rel_tol``. Returns (powers, multiplier, iterations).
    """
    gains = np.asarray(gains, dtype=float)
    live = gains > 0
    if not live.any():
        raise ValueError("cannot water-fill: all equivalent gains are zero")
    g = gains[live]
    inv_g = 1.0 / g

    def allocated(lam: float) -> np.ndarray:
        return np.maximum(1.0 / lam - inv_g, 0.0)

    hi = float(g.max())          # zero power at and above the best gain
    lo = hi
    for _ in range(max_iter):
        if allocated(lo).sum() >= total:
            break
        lo *= 0.5
    iters = 0
    lam = lo
    for iters in range(1, max_iter + 1):
        lam = 0.5 * (lo + hi)
        excess = allocated(lam).sum() - total
        if abs(excess) <= rel_tol * total:
            break
        if excess > 0:
            lo = lam
        else:
            hi = lam
    powers = np.zeros_like(gains)
    powers[live] = allocated(lam)
    return powers, lam, iters


def waterfill_total(eq: EquivalentGains, total_power: float) -> np.ndarray:
    """Optimal per-path powers under one shared budget: ``[1/lam - 1/gain]+``
    with the water level chosen so the powers sum to the budget."""
    if not total_power > 0:
        raise ValueError(f"total power must be positive, got {total_power}")
    powers, _, _ = _waterfill(eq.values, total_power)
    return powers


def waterfill_kkt_residual(eq: EquivalentGains, powers: np.ndarray) -> float:
    """Largest violation of the water-filling optimality conditions.

    Active paths must sit exactly at the water level ``1/lam``; inactive paths
    must lie above it. The level is reconstructed from the active set.
    """
    gains = np.asarray(eq.values, dtype=float)
    powers = np.asarray(powers, dtype=float)
    active = powers > 0
    if not active.any():
        return 0.0
    with np.errstate(divide="ignore"):
        inv_gains = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    level = float(np.mean(powers[active] + inv_gains[active]))
    res = float(np.abs(powers[active] + inv_gains[active] - level).max())
    inactive = ~active
    if inactive.any():
        res = max(res, float(np.maximum(level - inv_gains[inactive], 0.0).max()))
    return res


def split_path_power(path_power: float, path_gains: np.ndarray,
                     strategy: RelayStrategy) -> np.ndarray:
    """Divide one path's power over its hops.

    DF: inversely proportional to the hop gain, which equalizes the received
    SNR on every hop of the path. AF: inversely proportional to the root hop
    gain. A dead hop voids the whole path.
    """
    if strategy not in _SUPPORTED:
        raise ValueError(f"path power splitting is defined for DF/AF_APPROX, not {strategy}")
    if path_power < 0:
        raise ValueError("path power must be nonnegative")
    gains = np.asarray(path_gains, dtype=float)
    if (gains <= 0).any():
        return np.zeros_like(gains)
    denom = gains if strategy is RelayStrategy.DF else np.sqrt(gains)
    weights = (1.0 / denom) / (1.0 / denom).sum()
    return path_power * weights


def total_pa_solve(inst: NetworkInstance, pairing: Pairing, total_power: float,
                   strategy: RelayStrategy) -> SolverReport:
    """Shared-budget allocation: equivalent gains, water-fill, split.

    Exact for DF; for AF it optimizes the harmonic-SNR upper bound, whose
    value is reported as the objective while ``exact_rate`` holds the cascade
    AF rate achieved by the same powers. ``kkt_residual`` is the water-filling
    residual over paths.
    """
    eq = equivalent_gains(inst, pairing, strategy)
    path_powers, _, iters = _waterfill(eq.values, total_power)
    path_powers *= total_power / path_powers.sum()
    path_gains = to_path_layout(inst.gains, pairing)
    split = np.zeros_like(path_gains)
    for i in range(pairing.num_channels):
        split[:, i] = split_path_power(path_powers[i], path_gains[:, i], strategy)
    power = PowerMatrix(from_path_layout(split, pairing))
    objective = sum_rate(inst, pairing, power, strategy)
    exact = objective if strategy is RelayStrategy.DF else \
        sum_rate(inst, pairing, power, RelayStrategy.AF_EXACT)
    violation = abs(power.values.sum() - total_power) / total_power
    return SolverReport(
        power=power,
        objective=objective,
        exact_rate=exact,
        dual_value=None,
        iterations=iters,
        constraint_violation=violation,
        kkt_residual=waterfill_kkt_residual(eq, path_powers),
        converged=True,
    )


def mu_column_project(column: np.ndarray) -> np.ndarray:
    """Rescale one nonnegative multiplier column onto the unit simplex face.

    An all-zero column (every entry clipped away) falls back to uniform.
    """
    col = np.asarray(column, dtype=float)
    if (col < 0).any():
        raise ValueError("multiplier column must be nonnegative before projection")
    total = col.sum()
    if total <= 0:
        return np.full(col.shape, 1.0 / col.size)
    return col / total


def _mu_project_normalize(mu: np.ndarray) -> np.ndarray:
    """Column-wise simplex rescaling of a clipped multiplier matrix."""
    mu = np.maximum(mu, 0.0)
    totals = mu.sum(axis=0)
    out = np.where(totals > 0, mu / np.where(totals > 0, totals, 1.0),
                   1.0 / mu.shape[0])
    return out


def _mu_project_euclidean(mu: np.ndarray) -> np.ndarray:
    """Euclidean projection of each column onto the unit simplex (sort-based)."""
    m, n = mu.shape
    srt = np.sort(mu, axis=0)[::-1, :]
    csum = np.cumsum(srt, axis=0) - 1.0
    ks = np.arange(1, m + 1)[:, None]
    cond = srt - csum / ks > 0
    rho = m - np.argmax(cond[::-1, :], axis=0) - 1   # last index with cond true
    theta = csum[rho, np.arange(n)] / (rho + 1)
    return np.maximum(mu - theta[None, :], 0.0)


def _rows_waterfill(weights: np.ndarray, gains: np.ndarray, budgets: np.ndarray,
                    rel_tol: float, lam_warm: np.ndarray | None = None,
                    max_iter: int = 200) -> np.ndarray:
    """Per-row water levels for weighted water-filling.

    For each row m, finds lam[m] such that sum_n [w/lam - 1/g]+ equals the row
    budget (rows whose weighted gains are all zero get lam 0 and no power).
    Bisection on all rows at once; ``lam_warm`` seeds the brackets, which pays
    off when the weights change slowly between calls.
    """
    with np.errstate(divide="ignore"):
        inv_g = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    cap = (weights * gains).max(axis=1)       # row m allocates nothing at lam >= cap
    dead_rows = cap <= 0

    def allocated(lam: np.ndarray) -> np.ndarray:
        return np.maximum(weights / lam[:, None] - inv_g, 0.0).sum(axis=1)

    if lam_warm is not None and (lam_warm > 0).all():
        hi = np.minimum(lam_warm * 4.0, np.where(dead_rows, 1.0, cap))
        lo = lam_warm * 0.25
    else:
        hi = np.where(dead_rows, 1.0, cap)
        lo = hi.copy()
    for _ in range(max_iter):
        short = (allocated(lo) < budgets) & ~dead_rows
        if not short.any():
            break
        lo[short] *= 0.5
    for _ in range(max_iter):
        over = (allocated(hi) > budgets) & ~dead_rows
        if not over.any():
            break
        hi[over] *= 2.0
    lam = lo.copy()
    done = dead_rows.copy()
    for _ in range(max_iter):
        lam = np.where(done, lam, 0.5 * (lo + hi))
        excess = allocated(lam) - budgets
        done = done | (np.abs(excess) <= rel_tol * budgets)
        if done.all():
            break
        go_up = (excess > 0) & ~done
        lo = np.where(go_up, lam, lo)
        hi = np.where(~go_up & ~done, lam, hi)
    return np.where(dead_rows, 0.0, lam)


def _df_primal_recover(powers: np.ndarray, gains: np.ndarray,
                       budgets: np.ndarray) -> tuple[float, np.ndarray]:
    """Feasible powers and their DF rate (bits, no reuse factor) from any iterate.

    Equalizes the hop SNRs along each path at the path's bottleneck (weakly
    lowers every row sum), then rescales each row up to its exact budget
    (weakly raises every bottleneck). Starting from a feasible allocation this
    never lowers the rate; starting from an infeasible one it restores
    feasibility. Rows left without power are filled uniformly.
    """
    bottleneck = (powers * gains).min(axis=0)
    equalized = np.where(gains > 0,
                         bottleneck[None, :] / np.where(gains > 0, gains, 1.0), 0.0)
    row_sums = equalized.sum(axis=1)
    n = gains.shape[1]
    out = np.where((row_sums > 0)[:, None],
                   equalized * (budgets / np.where(row_sums > 0, row_sums, 1.0))[:, None],
                   budgets[:, None] / n)
    rate = float(np.log1p((out * gains).min(axis=0)).sum() / _LN2)
    return rate, out


def df_individual_solve(inst: NetworkInstance, pairing: Pairing,
                        budgets: PerNodePower | np.ndarray,
                        opts: DfSolverOptions = DfSolverOptions()) -> SolverReport:
    """DF rate maximization under per-node budgets via the projected subgradient
    method on the dual multipliers.

    Each sweep: (1) per-node water levels are rescaled by bisection so the
    closed-form powers ``[mu/lam - 1/gain]+`` meet every node budget; (2) the
    node multipliers move along ``budget - allocated``, the rate multipliers
    move against the per-(hop, path) rates, and each rate-multiplier column is
    projected back onto the unit simplex. Diminishing steps ``c/sqrt(l)`` with
    ``c`` set from the first subgradient norm. Feasible primal candidates are
    recovered from each iterate and from window-averaged iterates by
    equalize-and-rescale (see :func:`_df_primal_recover`); the dual value of
    every multiplier iterate upper-bounds the optimum, so the reported gap is
    a true optimality certificate.

    After the loop (or once progress stalls), a certificate refinement stage
    tightens both bounds: the optimal rate multipliers are proportional to
    ``node multiplier / channel gain`` within each column, so candidate
    multipliers are reconstructed from the node water levels, re-evaluated,
    and iterated as a fixed point. Every candidate yields a valid dual bound
    and a feasible primal, hence the certificate only improves.

    ``kkt_residual`` is the largest relative spread of hop SNRs along any
    active path of the returned allocation (zero at the exact optimum).
    """
    budgets = budgets.as_array() if isinstance(budgets, PerNodePower) else \
        np.asarray(budgets, dtype=float)
    m, n = inst.num_hops, inst.num_channels
    if budgets.shape != (m,) or (budgets <= 0).any():
        raise ValueError("need one positive budget per transmitting node")
    gains = to_path_layout(inst.gains, pairing)
    fs = inst.spatial_reuse
    with np.errstate(divide="ignore"):
        inv_gains = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    project = _mu_project_euclidean if opts.projection == "euclidean" \
        else lambda mat: _mu_project_normalize(np.maximum(mat, 0.0))

    def inner_powers(mu: np.ndarray, lam_warm: np.ndarray | None
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
        lam = _rows_waterfill(mu, gains, budgets, opts.bisect_tol, lam_warm)
        powers = np.maximum(mu / np.where(lam > 0, lam, 1.0)[:, None] - inv_gains, 0.0)
        powers[lam <= 0] = 0.0
        rates = np.log1p(powers * gains) / _LN2
        theta_lam = budgets - powers.sum(axis=1)
        # Exact dual value: the powers maximize the Lagrangian at multipliers
        # (lam/ln2, mu), and the bisection keeps the correction term ~ 0.
        dual = float((mu * rates).sum() + (lam * theta_lam).sum() / _LN2)
        return lam, powers, rates, theta_lam, dual

    mu = np.full((m, n), 1.0 / m)
    lam = None
    best_primal = -np.inf
    best_powers = np.repeat(budgets[:, None] / n, n, axis=1)
    best_dual = np.inf
    history: list[tuple[float, float]] = []
    state = None
    step_base = None
    step_lam_base = None
    iters_used = 0
    avg_sum = np.zeros((m, n))
    avg_count = 0
    avg_restart = 64
    stall_gap = np.inf

    def track_primal(candidate: np.ndarray) -> None:
        nonlocal best_primal, best_powers
        rate, recovered = _df_primal_recover(candidate, gains, budgets)
        if rate > best_primal:
            best_primal = rate
            best_powers = recovered

    for it in range(1, opts.max_iter + 1):
        iters_used = it
        lam, powers, rates, theta_lam, dual = inner_powers(mu, lam)
        best_dual = min(best_dual, dual)
        track_primal(powers)
        avg_sum += powers
        avg_count += 1
        track_primal(avg_sum / avg_count)
        if it == avg_restart:      # tail windows shed the early bad iterates
            avg_sum[:] = 0.0
            avg_count = 0
            avg_restart *= 2
        if opts.record_history:
            history.append((best_primal / fs, best_dual / fs))

        gap = (best_dual - best_primal) / max(abs(best_primal), 1e-300)
        if gap <= opts.gap_tol:
            break
        if it % 500 == 0:          # hand a stalled loop to the refinement stage
            if gap > 0.97 * stall_gap:
                break
            stall_gap = gap

        theta_mu_norm = float(np.linalg.norm(rates))
        if step_base is None:
            step_base = 1.0 / max(theta_mu_norm, 1e-300)
            step_lam_base = 1.0 / max(float(np.linalg.norm(theta_lam)), 1e-300)
        nu_mu = step_base / np.sqrt(it)
        nu_lam = step_lam_base / np.sqrt(it)
        lam = np.maximum(lam - nu_lam * theta_lam, 0.0)
        mu = project(mu - nu_mu * rates)
        state = DualState(lam=lam, mu=mu, r=rates.min(axis=0), theta_mu=rates,
                          theta_lambda=theta_lam, iteration=it,
                          step_lambda=float(nu_lam), step_mu=float(nu_mu))

    # Certificate refinement: rebuild column-normalized multipliers from the
    # node water levels and iterate; each candidate is a valid dual bound.
    beta = lam if lam is not None and (lam > 0).all() else 1.0 / budgets
    lam_warm = None
    for _ in range(opts.refine_iter):
        raw = np.where(gains > 0, beta[:, None] / np.where(gains > 0, gains, 1.0), 0.0)
        mu_hat = _mu_project_normalize(raw)
        lam_hat, powers, _, _, dual = inner_powers(mu_hat, lam_warm)
        best_dual = min(best_dual, dual)
        track_primal(powers)
        gap = (best_dual - best_primal) / max(abs(best_primal), 1e-300)
        if gap <= min(opts.gap_tol * 0.25, 1e-7):
            break
        beta = np.where(lam_hat > 0, lam_hat, beta)
        lam_warm = lam_hat

    # Returned form: hop SNRs exactly equalized at each path's bottleneck.
    # Same bottlenecks, hence same rate; rows spend at most their budget
    # (nodes whose budget is not binding at the optimum keep the slack, which
    # buys no DF rate; the rate constraints use budgets as upper bounds).
    bottleneck = (best_powers * gains).min(axis=0)
    final = np.where(gains > 0,
                     bottleneck[None, :] / np.where(gains > 0, gains, 1.0), 0.0)
    power = PowerMatrix(from_path_layout(final, pairing))
    objective = sum_rate(inst, pairing, power, RelayStrategy.DF)
    dual_value = best_dual / fs
    gap = (best_dual - best_primal) / max(abs(best_primal), 1e-300)
    overspend = float(np.maximum(final.sum(axis=1) - budgets, 0.0).max() / budgets.max())
    return SolverReport(
        power=power,
        objective=objective,
        exact_rate=objective,
        dual_value=dual_value,
        iterations=iters_used,
        constraint_violation=overspend,
        kkt_residual=_active_path_snr_spread(final * gains),
        converged=gap <= opts.gap_tol,
        dual_state=state,
        history=tuple(history) if opts.record_history else None,
    )


def _active_path_snr_spread(path_snr_matrix: np.ndarray) -> float:
    """Largest relative max-min spread of hop SNRs over paths carrying power."""
    mins = path_snr_matrix.min(axis=0)
    active = mins > 0
    if not active.any():
        return 0.0
    sub = path_snr_matrix[:, active]
    return float(((sub.max(axis=0) - sub.min(axis=0)) / sub.mean(axis=0)).max())


def af_upper_rate(inst: NetworkInstance, pairing: Pairing, power: PowerMatrix) -> float:
    """AF sum rate under the harmonic-SNR upper bound; identical to
    :func:`relayopt.model.sum_rate` with ``AF_APPROX``."""
    return sum_rate(inst, pairing, power, RelayStrategy.AF_APPROX)


def _simplex_project_rows(matrix: np.ndarray, totals: np.ndarray,
                          floors: np.ndarray | None = None) -> np.ndarray:
    """Euclidean projection of each row onto {x >= floor, sum(x) = total}.

    Sort-based exact projection, O(N log N) per row. ``floors`` shifts the
    simplex so iterates keep a strictly positive margin.
    """
    m, n = matrix.shape
    if floors is None:
        floors = np.zeros(m)
    shifted = matrix - floors[:, None]
    masses = totals - n * floors
    srt = np.sort(shifted, axis=1)[:, ::-1]
    csum = np.cumsum(srt, axis=1) - masses[:, None]
    ks = np.arange(1, n + 1)
    cond = srt - csum / ks > 0
    rho = n - np.argmax(cond[:, ::-1], axis=1) - 1   # last index satisfying cond
    theta = csum[np.arange(m), rho] / (rho + 1)
    return np.maximum(shifted - theta[:, None], 0.0) + floors[:, None]


def _af_upper_parts(powers: np.ndarray, gains: np.ndarray,
                    fs: float) -> tuple[float, np.ndarray]:
    """Upper-bound rate and its gradient for path-layout powers/gains.

    Paths containing a dead channel contribute nothing and have zero gradient.
    A zero power zeroes its path's SNR; the gradient there takes its one-sided
    limit (the channel gain) so ascent can revive the channel.
    """
    live = (gains > 0).all(axis=0)
    k = gains.shape[1]
    snr = np.zeros(k)
    grad = np.zeros_like(powers)
    if live.any():
        p = powers[:, live]
        g = gains[:, live]
        pos = p > 0
        with np.errstate(divide="ignore"):
            hop_snr_inv = np.where(pos, 1.0 / np.where(pos, p * g, 1.0), np.inf)
        total_inv = hop_snr_inv.sum(axis=0)
        s = np.where(np.isfinite(total_inv), 1.0 / np.where(total_inv > 0, total_inv, np.inf), 0.0)
        snr[live] = s
        factor = (s ** 2 / (1.0 + s))[None, :]
        num = factor * np.where(pos, hop_snr_inv, 0.0)
        grad_live = np.where(pos, num / np.where(pos, p, 1.0), g)
        grad[:, live] = grad_live / (fs * _LN2)
    value = float(np.log1p(snr).sum() / _LN2 / fs)
    return value, grad


def _linearization_gap(powers: np.ndarray, grad: np.ndarray, value: float,
                       budgets: np.ndarray) -> float:
    """Certified optimality gap of a concave objective over row simplices.

    Maximizing the linearization over the feasible set (all of each node's
    budget on its best-gradient channel) upper-bounds the optimum, so
    ``sum_m (budget_m * max_n grad - <grad_m, P_m>)`` bounds ``f* - f(P)``.
    """
    return float((budgets * grad.max(axis=1) - (grad * powers).sum(axis=1)).sum())


class _AfDualCertificate:
    """Node-multiplier dual of the AF upper-bound problem in SNR coordinates.

    With received SNRs ``x = P * gain`` as variables, the cheapest powers that
    realize a path SNR ``s`` under node prices ``beta`` cost
    ``s * (sum_m sqrt(beta_m/gain))^2``, so the per-path inner maximization is
    a scalar water-fill and the dual value is closed-form. Any ``beta >= 0``
    yields a valid upper bound plus a feasible allocation (rows rescaled to
    their budgets), so sweeping coordinate-wise bisections on ``beta``
    tightens both sides of the certificate.
    """

    def __init__(self, gains: np.ndarray, budgets: np.ndarray, fs: float):
        self.gains = gains
        self.budgets = budgets
        self.fs = fs
        self.live = (gains > 0).all(axis=0)          # paths without a dead hop
        self.inv_gain = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), 0.0)

    def parts(self, beta: np.ndarray) -> tuple[float, np.ndarray]:
        """Dual value (rate units) and the inner-optimal SNR matrix.

        Dead paths are forced to zero SNR and contribute nothing.
        """
        root = np.sqrt(beta[:, None] * self.inv_gain)
        amp = root.sum(axis=0)                       # sum_m sqrt(beta/gain), per path
        cost = amp ** 2
        snr = np.zeros(self.gains.shape[1])
        ok = self.live & (cost > 0)
        snr[ok] = np.maximum(1.0 / (cost[ok] * _LN2) - 1.0, 0.0)
        terms = np.zeros_like(snr)
        terms[ok] = np.log1p(snr[ok]) / _LN2 - cost[ok] * snr[ok]
        dual = float(terms.sum() + beta @ self.budgets)
        x = np.zeros_like(self.gains)
        x[:, ok] = np.where(root[:, ok] > 0,
                            snr[ok][None, :] * amp[ok][None, :]
                            / np.where(root[:, ok] > 0, root[:, ok], 1.0), 0.0)
        return dual / self.fs, x

    def primal_powers(self, x: np.ndarray) -> np.ndarray:
        """Feasible powers from an SNR matrix: rows rescaled to exact budgets."""
        raw = x * self.inv_gain
        spend = raw.sum(axis=1)
        scale = np.where(spend > 0, self.budgets / np.where(spend > 0, spend, 1.0), 0.0)
        powers = raw * scale[:, None]
        dead = spend <= 0
        if dead.any():   # idle node: spread its budget uniformly
            powers[dead] = self.budgets[dead, None] / self.gains.shape[1]
        return powers

    def sweep(self, beta: np.ndarray) -> np.ndarray:
        """One Gauss-Seidel pass: per node, bisect its multiplier so the
        inner-optimal allocation spends exactly that node's budget."""
        root = np.sqrt(beta[:, None] * self.inv_gain)
        for m in range(beta.size):
            others = root.sum(axis=0) - root[m]
            inv_g_m = self.inv_gain[m]
            live = self.live & (inv_g_m > 0)
            if not live.any():
                continue
            oth = others[live]
            ivm = inv_g_m[live]

            def row_spend(b: float) -> float:
                r = np.sqrt(b * ivm)
                amp = oth + r
                snr = np.maximum(1.0 / (amp ** 2 * _LN2) - 1.0, 0.0)
                return float((snr * amp / r * ivm).sum())

            lo = hi = max(beta[m], 1e-300)
            for _ in range(80):
                if row_spend(lo) >= self.budgets[m] or lo < 1e-280:
                    break
                lo *= 0.5
            for _ in range(80):
                if row_spend(hi) <= self.budgets[m]:
                    break
                hi *= 2.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if row_spend(mid) > self.budgets[m]:
                    lo = mid
                else:
                    hi = mid
            beta[m] = 0.5 * (lo + hi)
            root[m] = np.sqrt(beta[m] * inv_g_m)
        return beta


def af_individual_solve(inst: NetworkInstance, pairing: Pairing,
                        budgets: PerNodePower | np.ndarray,
                        opts: AfSolverOptions = AfSolverOptions()) -> SolverReport:
    """Maximize the concave AF upper-bound rate under per-node budgets.

    Projected gradient ascent from the uniform (interior) point with Armijo
    backtracking; each step projects every node's row back onto its budget
    simplex, floored away from zero to keep the gradient finite. A final
    floor-free projection step is kept only when it does not lower the
    objective, which is where exact zeros may enter.

    ``dual_value`` is the linearization certificate ``objective + gap`` (a
    true upper bound on the optimum) and ``kkt_residual`` the relative
    certified gap; ``exact_rate`` evaluates the returned powers under the
    exact AF cascade SNR, a lower bound on the true AF optimum.
    """
    budgets = budgets.as_array() if isinstance(budgets, PerNodePower) else \
        np.asarray(budgets, dtype=float)
    m, n = inst.num_hops, inst.num_channels
    if budgets.shape != (m,) or (budgets <= 0).any():
        raise ValueError("need one positive budget per transmitting node")
    gains = to_path_layout(inst.gains, pairing)
    fs = inst.spatial_reuse
    floors = opts.power_floor_rel * budgets

    powers = np.repeat(budgets[:, None] / n, n, axis=1)
    value, grad = _af_upper_parts(powers, gains, fs)
    step = float(budgets.max()) / max(float(np.abs(grad).max()), 1e-300)

    converged = False
    iters_used = opts.max_iter
    bound = np.inf
    for it in range(1, opts.max_iter + 1):
        iters_used = it
        # The iterate is interior (floored), so the gradient certifies a bound.
        bound = min(bound, value + _linearization_gap(powers, grad, value, budgets))
        if (bound - value) / max(value, 1e-300) <= opts.gap_tol:
            converged = True
            break
        accepted = False
        for _ in range(80):
            cand = _simplex_project_rows(powers + step * grad, budgets, floors)
            improvement = float((grad * (cand - powers)).sum())
            if improvement <= 0:
                break
            cand_value, cand_grad = _af_upper_parts(cand, gains, fs)
            if cand_value >= value + opts.armijo_sigma * improvement:
                accepted = True
                break
            step *= opts.armijo_shrink
        if not accepted:
            break  # pinned against the floor or step underflow
        powers, value, grad = cand, cand_value, cand_grad
        step /= opts.armijo_shrink  # let the step grow back

    # Floor-free polish: admits exact zeros when the gradient pushes outward.
    polished = _simplex_project_rows(powers + step * grad, budgets)
    pol_value, _ = _af_upper_parts(polished, gains, fs)
    if pol_value >= value:
        powers, value = polished, pol_value

    # Certificate refinement: the node-multiplier dual gives closed-form upper
    # bounds and feasible allocations; sweeping it tightens both sides far
    # beyond where plain gradient ascent crawls (paths pinned near zero power
    # couple several nodes and have vanishing gradients).
    cert = _AfDualCertificate(gains, budgets, fs)
    beta = np.maximum(grad.max(axis=1) * gains.max(axis=1), 1e-12)
    for _ in range(opts.refine_sweeps):
        dual, x = cert.parts(beta)
        bound = min(bound, dual)
        cand = cert.primal_powers(x)
        cand_value, _ = _af_upper_parts(cand, gains, fs)
        if cand_value > value:
            powers, value = cand, cand_value
        if (bound - value) / max(value, 1e-300) <= min(opts.gap_tol * 0.25, 1e-9):
            break
        beta = cert.sweep(beta)

    rel_gap = (bound - value) / max(value, 1e-300)
    converged = converged or rel_gap <= opts.gap_tol

    power = PowerMatrix(from_path_layout(powers, pairing))
    exact = sum_rate(inst, pairing, power, RelayStrategy.AF_EXACT)
    violation = float(np.abs(powers.sum(axis=1) - budgets).max() / budgets.max())
    return SolverReport(
        power=power,
        objective=value,
        exact_rate=exact,
        dual_value=bound,
        iterations=iters_used,
        constraint_violation=violation,
        kkt_residual=max(rel_gap, 0.0),
        converged=converged,
    )
