"""Random frequency-selective channels and the Monte Carlo sweep harness.

Channels are L-tap Rayleigh-fading impulse responses per hop, equal-power
taps normalized to unit average total power, transformed to per-channel
frequency responses. Power budgets are calibrated through the average
per-channel received SNR under uniform allocation, so sweeps over taps,
channels, or hops keep the operating point comparable.

Every random draw derives from one master seed through per-(trial, hop)
seed sequences, so results are bit-identical regardless of execution order
or parallelism.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .model import (
    NetworkInstance,
    PerNodePower,
    PowerConstraint,
    PowerMatrix,
    RelayStrategy,
    TotalPower,
    sum_rate,
)
from .pairing import identity_pairing, sorted_gain_pairing
from .power import (
    AfSolverOptions,
    DfSolverOptions,
    af_individual_solve,
    af_upper_rate,
    df_individual_solve,
    total_pa_solve,
    uniform_pa,
)

SCHEMES = ("joint", "uniform_with_cp", "optpa_no_cp", "uniform_no_cp")
SWEEP_VARS = ("avg_snr_db", "num_taps", "num_channels", "num_hops")

# Schemes whose power allocation comes from a solver; under AF these also
# report the upper-bound objective next to the achieved exact rate.
_OPT_PA = ("joint", "optpa_no_cp")


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of the per-hop L-tap frequency-selective fading channel."""

    num_taps: int
    num_channels: int
    pathloss_exp: float = 2.0
    hop_distance: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self) -> None:
        if self.num_taps < 1:
            raise ValueError("need at least one channel tap")
        if self.num_taps > self.num_channels:
            raise ValueError(
                f"num_taps ({self.num_taps}) cannot exceed num_channels ({self.num_channels})")
        if self.pathloss_exp < 0:
            raise ValueError("pathloss exponent must be nonnegative")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")
        if not self.hop_distance > 0:
            raise ValueError("hop distance must be positive")


def _hop_rng(seed: int, trial: int, hop: int) -> np.random.Generator:
    # Counter-style stream derivation: one child stream per (trial, hop),
    # independent of how trials are scheduled across workers.
    return np.random.default_rng(np.random.SeedSequence([seed, trial, hop]))


def generate_instance(cfg: ChannelConfig, num_hops: int, seed: int, trial: int = 0,
                      spatial_reuse: float = 3.0) -> NetworkInstance:
    """Draw one network instance: i.i.d. complex Gaussian taps per hop with
    variance 1/L each, per-channel gains from the tap frequency response."""
    n, taps = cfg.num_channels, cfg.num_taps
    scale = np.sqrt(1.0 / (2 * taps))
    att = cfg.hop_distance ** (-cfg.pathloss_exp) / cfg.noise_var
    gains = np.empty((num_hops, n))
    for m in range(num_hops):
        rng = _hop_rng(seed, trial, m)
        g = rng.standard_normal(taps) * scale + 1j * rng.standard_normal(taps) * scale
        h = np.fft.fft(g, n=n)
        gains[m] = (h.real**2 + h.imag**2) * att
    return NetworkInstance(gains, spatial_reuse=spatial_reuse)


def budgets_from_avg_snr(snr_db: float, cfg: ChannelConfig, num_hops: int,
                         kind: str) -> PowerConstraint:
    """Invert the average-SNR calibration into power budgets.

    The average SNR is the mean per-channel received SNR under uniform
    allocation: ``P_t d^-alpha / (M N sigma^2)`` for a shared budget and
    ``P_mt d^-alpha / (N sigma^2)`` per node.
    """
    if not np.isfinite(snr_db):
        raise ValueError("average SNR (dB) must be finite")
    snr = 10.0 ** (snr_db / 10.0)
    base = snr * cfg.num_channels * cfg.noise_var * cfg.hop_distance ** cfg.pathloss_exp
    if kind == "total":
        return TotalPower(base * num_hops)
    if kind == "individual":
        return PerNodePower([base] * num_hops)
    raise ValueError(f"unknown constraint kind {kind!r} (expected 'total' or 'individual')")


@dataclass(frozen=True)
class SweepSpec:
    """One reproducible Monte Carlo experiment."""

    sweep_var: str
    values: tuple
    relaying: str                    # "af" or "df"
    constraint: str                  # "total" or "individual"
    schemes: tuple[str, ...] = SCHEMES
    trials: int = 200
    seed: int = 0
    num_hops: int = 4
    num_channels: int = 16
    num_taps: int = 4
    avg_snr_db: float = 12.0
    spatial_reuse: float = 3.0
    pathloss_exp: float = 2.0
    hop_distance: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.sweep_var not in SWEEP_VARS:
            raise ValueError(f"unknown sweep variable {self.sweep_var!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.relaying not in ("af", "df"):
            raise ValueError(f"unknown relaying {self.relaying!r}")
        if self.constraint not in ("total", "individual"):
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if not self.schemes:
            raise ValueError("need at least one scheme")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r} (expected subset of {SCHEMES})")
        self.resolve(self.values[0])  # fail fast on inconsistent fixed parameters

    def resolve(self, value) -> tuple[int, ChannelConfig, float]:
        """Concrete (num_hops, channel config, avg_snr_db) at one sweep value."""
        m = self.num_hops
        n = self.num_channels
        taps = self.num_taps
        snr_db = self.avg_snr_db
        if self.sweep_var == "avg_snr_db":
            snr_db = float(value)
        elif self.sweep_var == "num_taps":
            taps = int(value)
        elif self.sweep_var == "num_channels":
            n = int(value)
        else:
            m = int(value)
        if m < 2:
            raise ValueError("num_hops must be >= 2")
        cfg = ChannelConfig(num_taps=taps, num_channels=n,
                            pathloss_exp=self.pathloss_exp,
                            hop_distance=self.hop_distance,
                            noise_var=self.noise_var)
        return m, cfg, snr_db

    def config_hash(self) -> str:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SweepRow:
    """Aggregated result for one (scheme, sweep value) cell."""

    scheme: str
    relaying: str
    constraint: str
    sweep_var: str
    sweep_value: float
    mean_rate: float      # bits/s/Hz per subcarrier
    std_err: float
    trials: int
    failures: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    seed: int
    config_hash: str

    @property
    def total_failures(self) -> int:
        return sum(r.failures for r in self.rows)

    @property
    def failure_fraction(self) -> float:
        total = sum(r.trials + r.failures for r in self.rows)
        return self.total_failures / total if total else 0.0


def run_trial(spec: SweepSpec, value, trial: int) -> dict[str, tuple[float, float | None]]:
    """Rates of every scheme on one channel realization.

    Returns per scheme ``(exact_rate, upper_rate)`` per subcarrier; the upper
    bound is present only for AF schemes with optimized power. A failed solver
    maps to ``(nan, nan)``.
    """
    m, cfg, snr_db = spec.resolve(value)
    inst = generate_instance(cfg, m, spec.seed, trial, spec.spatial_reuse)
    constraint = budgets_from_avg_snr(snr_db, cfg, m, spec.constraint)
    af = spec.relaying == "af"
    n = cfg.num_channels
    out: dict[str, tuple[float, float | None]] = {}
    pairings = {}
    for scheme in spec.schemes:
        kind = "sorted" if scheme in ("joint", "uniform_with_cp") else "identity"
        if kind not in pairings:
            pairings[kind] = sorted_gain_pairing(inst) if kind == "sorted" \
                else identity_pairing(inst)
        pairing = pairings[kind]
        try:
            if scheme in _OPT_PA:
                if isinstance(constraint, TotalPower):
                    report = total_pa_solve(inst, pairing, constraint.budget,
                                            RelayStrategy.AF_APPROX if af else RelayStrategy.DF)
                elif af:
                    report = af_individual_solve(inst, pairing, constraint)
                else:
                    report = df_individual_solve(inst, pairing, constraint)
                if not report.converged:
                    raise ArithmeticError(f"{scheme} solver did not converge")
                out[scheme] = (report.exact_rate / n,
                               report.objective / n if af else None)
            else:
                power = uniform_pa(inst, constraint)
                exact = sum_rate(inst, pairing, power,
                                 RelayStrategy.AF_EXACT if af else RelayStrategy.DF)
                out[scheme] = (exact / n, None)
        except (ArithmeticError, ValueError):
            out[scheme] = (float("nan"), float("nan"))
    return out


def _trial_batch(args) -> list[dict]:
    spec, value, trials = args
    return [run_trial(spec, value, t) for t in trials]


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Run the full sweep and aggregate per-(scheme, value) statistics.

    Trials are independent; ``jobs > 1`` fans them out over processes without
    changing any result. Failed trials are excluded from the statistics and
    counted in the ``failures`` column.
    """
    rows: list[SweepRow] = []
    for value in spec.values:
        if jobs > 1:
            chunks = [list(range(spec.trials))[i::jobs] for i in range(jobs)]
            chunks = [c for c in chunks if c]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_trial_batch, [(spec, value, c) for c in chunks]))
            results: list[dict] = [None] * spec.trials  # type: ignore[list-item]
            for chunk, part in zip(chunks, parts):
                for t, res in zip(chunk, part):
                    results[t] = res
        else:
            results = [run_trial(spec, value, t) for t in range(spec.trials)]
        for scheme in spec.schemes:
            exact = np.array([r[scheme][0] for r in results])
            rows.append(_aggregate(scheme, spec, value, exact))
            if spec.relaying == "af" and scheme in _OPT_PA:
                upper = np.array([r[scheme][1] for r in results], dtype=float)
                rows.append(_aggregate(scheme + "_upper", spec, value, upper))
    return SweepResult(rows=tuple(rows), seed=spec.seed, config_hash=spec.config_hash())


def _aggregate(scheme: str, spec: SweepSpec, value, samples: np.ndarray) -> SweepRow:
    ok = samples[np.isfinite(samples)]
    failures = samples.size - ok.size
    mean = float(ok.mean()) if ok.size else float("nan")
    stderr = float(ok.std(ddof=1) / np.sqrt(ok.size)) if ok.size > 1 else 0.0
    return SweepRow(scheme=scheme, relaying=spec.relaying, constraint=spec.constraint,
                    sweep_var=spec.sweep_var, sweep_value=float(value),
                    mean_rate=mean, std_err=stderr, trials=ok.size, failures=failures)
