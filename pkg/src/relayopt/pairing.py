"""Channel-pairing schemes.

Matching the k-th strongest incoming channel of a relay with its k-th
strongest outgoing channel maximizes the sum rate: ranked by received SNR when
the power allocation is fixed, and ranked by normalized channel gain when the
power allocation is optimized jointly. The identity pairing (no matching) is
the baseline.
"""

from __future__ import annotations

import enum

import numpy as np

from .model import NetworkInstance, Pairing, PowerMatrix


class PairingScheme(enum.Enum):
    SORTED_SNR = "sorted_snr"    # needs the power allocation that fixes the SNRs
    SORTED_GAIN = "sorted_gain"
    IDENTITY = "identity"


def _rank_descending(values: np.ndarray) -> np.ndarray:
    # Stable sort on the negated values: ties keep ascending channel index,
    # so the lower-indexed channel wins the better rank.
    return np.argsort(-values, kind="stable")


def _sorted_pairing(metric: np.ndarray) -> Pairing:
    num_hops, n = metric.shape
    perms = []
    for m in range(num_hops - 1):
        incoming = _rank_descending(metric[m])
        outgoing = _rank_descending(metric[m + 1])
        perm = np.empty(n, dtype=int)
        perm[incoming] = outgoing
        perms.append(tuple(int(c) for c in perm))
    return Pairing.from_relay_perms(perms)


def sorted_snr_pairing(inst: NetworkInstance, power: PowerMatrix) -> Pairing:
    """Rank channels at each relay by received SNR under ``power`` and match by rank.

    Optimal for any fixed power allocation, for both AF and DF relaying.
    """
    if power.values.shape != inst.gains.shape:
        raise ValueError(
            f"power shape {power.values.shape} does not match instance {inst.gains.shape}")
    return _sorted_pairing(inst.gains * power.values)


def sorted_gain_pairing(inst: NetworkInstance) -> Pairing:
    """Rank channels at each relay by normalized channel gain and match by rank.

    Independent of any power allocation; combined with optimal power allocation
    over the resulting paths this attains the jointly optimal rate.
    """
    return _sorted_pairing(inst.gains)


def identity_pairing(inst: NetworkInstance) -> Pairing:
    """No pairing: path i uses channel i on every hop."""
    return Pairing.identity(inst.num_hops, inst.num_channels)


def make_pairing(scheme: PairingScheme, inst: NetworkInstance,
                 power: PowerMatrix | None = None) -> Pairing:
    if scheme is PairingScheme.SORTED_SNR:
        if power is None:
            raise ValueError("sorted-SNR pairing needs a power matrix")
        return sorted_snr_pairing(inst, power)
    if scheme is PairingScheme.SORTED_GAIN:
        return sorted_gain_pairing(inst)
    if scheme is PairingScheme.IDENTITY:
        return identity_pairing(inst)
    raise TypeError(f"unknown pairing scheme {scheme!r}")
