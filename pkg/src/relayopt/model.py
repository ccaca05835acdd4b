"""Core domain types and rate functions for multi-channel multi-hop relaying.

An ``M``-hop network carries data from a source through ``M - 1`` relays to a
destination over ``N`` parallel channels per hop. Each relay matches incoming
channels to outgoing channels (a :class:`Pairing`), which partitions the
``M x N`` channel grid into ``N`` disjoint source-destination paths. The
end-to-end SNR of a path depends on the relaying strategy; the system rate is
the sum of the per-path rates divided by the spatial reuse factor.

All types are immutable after construction and all functions are pure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_LN2 = float(np.log(2.0))


class RelayStrategy(enum.Enum):
    """Relay processing mode, which fixes the end-to-end SNR of a path.

    ``AF_EXACT``  : amplify-and-forward, exact cascade SNR
                    ``1 / (prod_m (1 + 1/g_m) - 1)``.
    ``AF_APPROX`` : amplify-and-forward, harmonic upper bound
                    ``1 / sum_m (1/g_m)`` (tight at high SNR).
    ``DF``        : decode-and-forward, bottleneck SNR ``min_m g_m``.
    """

    AF_EXACT = "af_exact"
    AF_APPROX = "af_approx"
    DF = "df"

    @classmethod
    def from_string(cls, name: str) -> "RelayStrategy":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown relay strategy {name!r} (expected one of: {valid})") from None


def _frozen_array(values, shape_name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{shape_name} must be a 2-D matrix, got ndim={arr.ndim}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Snapshot of an M-hop, N-channel relay network.

    ``gains[m, n]`` is the normalized channel gain of channel ``n`` over hop
    ``m``: squared channel magnitude divided by the receiver noise variance,
    i.e. the received SNR per watt of transmit power. ``spatial_reuse`` is the
    number of time slots separating spectrally reusable hops; every rate is
    divided by it.
    """

    gains: np.ndarray
    spatial_reuse: float = 3.0

    def __post_init__(self) -> None:
        gains = _frozen_array(self.gains, "gains")
        object.__setattr__(self, "gains", gains)
        m, n = gains.shape
        if m < 2:
            raise ValueError(f"need at least 2 hops, got {m}")
        if n < 1:
            raise ValueError("need at least 1 channel")
        if not np.isfinite(gains).all() or (gains < 0).any():
            raise ValueError("channel gains must be finite and nonnegative")
        if not (gains > 0).any(axis=1).all():
            raise ValueError("every hop needs at least one channel with positive gain")
        if not (np.isfinite(self.spatial_reuse) and self.spatial_reuse >= 2):
            raise ValueError(f"spatial reuse factor must be >= 2, got {self.spatial_reuse}")

    @property
    def num_hops(self) -> int:
        return self.gains.shape[0]

    @property
    def num_channels(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True, eq=False)
class PowerMatrix:
    """Transmit powers in watts, one entry per (hop, channel)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen_array(self.values, "power values")
        object.__setattr__(self, "values", values)
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("powers must be finite and nonnegative")

    @property
    def num_hops(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    @classmethod
    def uniform(cls, num_hops: int, num_channels: int, per_entry: float) -> "PowerMatrix":
        return cls(np.full((num_hops, num_channels), per_entry, dtype=float))


@dataclass(frozen=True)
class TotalPower:
    """One power budget shared by all transmitting nodes."""

    budget: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.budget) and self.budget > 0):
            raise ValueError(f"total power budget must be positive, got {self.budget}")


@dataclass(frozen=True)
class PerNodePower:
    """Separate power budget for each of the M transmitting nodes."""

    budgets: tuple[float, ...]

    def __init__(self, budgets: Iterable[float]) -> None:
        object.__setattr__(self, "budgets", tuple(float(b) for b in budgets))
        if len(self.budgets) < 2:
            raise ValueError("need one budget per transmitting node (at least 2)")
        if any(not (np.isfinite(b) and b > 0) for b in self.budgets):
            raise ValueError("all node budgets must be positive")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.budgets, dtype=float)


PowerConstraint = TotalPower | PerNodePower


@dataclass(frozen=True)
class Pairing:
    """Per-relay channel matchings and the source-destination paths they induce.

    ``relay_perms[r][k]`` is the outgoing channel (on hop ``r + 1``) that relay
    ``r`` pairs with incoming channel ``k`` (on hop ``r``); each is a bijection
    on ``range(N)``. ``paths[i][m]`` is the channel used by path ``i`` over hop
    ``m``; path ``i`` starts on channel ``i`` of the first hop, so the paths
    are pairwise disjoint and cover the whole (hop, channel) grid.

    Channel and hop indices are 0-based throughout.
    """

    relay_perms: tuple[tuple[int, ...], ...]
    paths: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.paths)
        if n == 0 or len(self.paths[0]) != len(self.relay_perms) + 1:
            raise ValueError("inconsistent pairing shape")
        ref = tuple(range(n))
        for perm in self.relay_perms:
            if tuple(sorted(perm)) != ref:
                raise ValueError(f"relay permutation {perm} is not a bijection on 0..{n - 1}")
        for m in range(self.num_hops):
            if tuple(sorted(p[m] for p in self.paths)) != ref:
                raise ValueError(f"paths are not disjoint on hop {m}")
        for i, path in enumerate(self.paths):
            if path[0] != i:
                raise ValueError("path order must follow first-hop channel index")
            for r, perm in enumerate(self.relay_perms):
                if perm[path[r]] != path[r + 1]:
                    raise ValueError("paths do not match relay permutations")

    @classmethod
    def from_relay_perms(cls, relay_perms: Sequence[Sequence[int]]) -> "Pairing":
        perms = tuple(tuple(int(x) for x in perm) for perm in relay_perms)
        if not perms:
            raise ValueError("need at least one relay permutation (M >= 2)")
        n = len(perms[0])
        paths = []
        for start in range(n):
            ch = start
            path = [ch]
            for perm in perms:
                ch = perm[ch]
                path.append(ch)
            paths.append(tuple(path))
        return cls(perms, tuple(paths))

    @classmethod
    def from_paths(cls, paths: Sequence[Sequence[int]]) -> "Pairing":
        ordered = sorted((tuple(int(c) for c in p) for p in paths), key=lambda p: p[0])
        num_hops = len(ordered[0])
        n = len(ordered)
        perms = []
        for r in range(num_hops - 1):
            perm = [0] * n
            for path in ordered:
                perm[path[r]] = path[r + 1]
            perms.append(tuple(perm))
        return cls(tuple(perms), tuple(ordered))

    @classmethod
    def identity(cls, num_hops: int, num_channels: int) -> "Pairing":
        perm = tuple(range(num_channels))
        return cls.from_relay_perms((perm,) * (num_hops - 1))

    @property
    def num_hops(self) -> int:
        return len(self.paths[0])

    @property
    def num_channels(self) -> int:
        return len(self.paths)

    def path_index_matrix(self) -> np.ndarray:
        """Channel indices as an (M, N) array; column i describes path i."""
        return np.asarray(self.paths, dtype=np.intp).T


def to_path_layout(values: np.ndarray, pairing: Pairing) -> np.ndarray:
    """Reindex an (M, N) per-(hop, channel) matrix so column i holds path i."""
    values = np.asarray(values)
    idx = pairing.path_index_matrix()
    if values.shape != idx.shape:
        raise ValueError(f"matrix shape {values.shape} does not match pairing {idx.shape}")
    return values[np.arange(idx.shape[0])[:, None], idx]


def from_path_layout(path_values: np.ndarray, pairing: Pairing) -> np.ndarray:
    """Inverse of :func:`to_path_layout`: scatter path columns back to channels."""
    path_values = np.asarray(path_values)
    idx = pairing.path_index_matrix()
    if path_values.shape != idx.shape:
        raise ValueError(f"matrix shape {path_values.shape} does not match pairing {idx.shape}")
    out = np.empty_like(path_values)
    out[np.arange(idx.shape[0])[:, None], idx] = path_values
    return out


def path_snrs(strategy: RelayStrategy, hop_snr_matrix: np.ndarray) -> np.ndarray:
    """End-to-end SNR of each path from its per-hop SNRs.

    ``hop_snr_matrix`` has shape (M, K); column k holds the M hop SNRs of one
    path. Any zero hop SNR makes the whole path SNR zero (limit convention, so
    channels cut off by power allocation are handled without special cases).
    """
    snrs = np.asarray(hop_snr_matrix, dtype=float)
    if snrs.ndim != 2:
        raise ValueError("expected an (M, K) matrix of hop SNRs")
    if (snrs < 0).any():
        raise ValueError("hop SNRs must be nonnegative")
    out = np.zeros(snrs.shape[1], dtype=float)
    live = (snrs > 0).all(axis=0)
    if not live.any():
        return out
    g = snrs[:, live]
    if strategy is RelayStrategy.DF:
        out[live] = g.min(axis=0)
    elif strategy is RelayStrategy.AF_APPROX:
        out[live] = 1.0 / (1.0 / g).sum(axis=0)
    elif strategy is RelayStrategy.AF_EXACT:
        # 1/(prod(1 + 1/g) - 1) via expm1/log1p keeps precision at high SNR
        # and degrades to 0 (not NaN) when a hop SNR underflows the product.
        with np.errstate(over="ignore"):
            cascade = np.expm1(np.log1p(1.0 / g).sum(axis=0))
            out[live] = np.where(np.isfinite(cascade), 1.0 / cascade, 0.0)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    return out


def path_snr(strategy: RelayStrategy, hop_snrs: Sequence[float]) -> float:
    """End-to-end SNR of a single path; see :func:`path_snrs`."""
    snrs = np.asarray(hop_snrs, dtype=float)
    if snrs.ndim != 1 or snrs.size == 0:
        raise ValueError("hop SNRs must be a non-empty 1-D sequence")
    return float(path_snrs(strategy, snrs[:, None])[0])


def path_hop_snrs(inst: NetworkInstance, pairing: Pairing, power: PowerMatrix) -> np.ndarray:
    """Per-hop SNRs in path layout: entry (m, i) is path i's SNR over hop m."""
    _check_dims(inst, pairing, power)
    return to_path_layout(inst.gains * power.values, pairing)


def path_rates(inst: NetworkInstance, pairing: Pairing, power: PowerMatrix,
               strategy: RelayStrategy) -> np.ndarray:
    """Per-path rates in bits/s/Hz, already divided by the spatial reuse factor."""
    snrs = path_snrs(strategy, path_hop_snrs(inst, pairing, power))
    return np.log1p(snrs) / _LN2 / inst.spatial_reuse


def sum_rate(inst: NetworkInstance, pairing: Pairing, power: PowerMatrix,
             strategy: RelayStrategy) -> float:
    """Total source-destination rate: sum of per-path rates over all N paths."""
    return float(path_rates(inst, pairing, power, strategy).sum())


def _check_dims(inst: NetworkInstance, pairing: Pairing, power: PowerMatrix) -> None:
    if pairing.num_hops != inst.num_hops or pairing.num_channels != inst.num_channels:
        raise ValueError(
            f"pairing shape ({pairing.num_hops}, {pairing.num_channels}) does not match "
            f"instance ({inst.num_hops}, {inst.num_channels})")
    if power.values.shape != inst.gains.shape:
        raise ValueError(
            f"power shape {power.values.shape} does not match instance {inst.gains.shape}")
