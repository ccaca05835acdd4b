"""Jointly optimal channel pairing and power allocation for multi-channel
multi-hop relay networks, with brute-force verification oracles and a Monte
Carlo experiment harness."""

from .model import (
    NetworkInstance,
    Pairing,
    PerNodePower,
    PowerConstraint,
    PowerMatrix,
    RelayStrategy,
    TotalPower,
    path_snr,
    sum_rate,
)
from .pairing import (
    PairingScheme,
    identity_pairing,
    make_pairing,
    sorted_gain_pairing,
    sorted_snr_pairing,
)
from .power import (
    AfSolverOptions,
    DfSolverOptions,
    EquivalentGains,
    SolverReport,
    af_individual_solve,
    af_upper_rate,
    df_individual_solve,
    equivalent_gains,
    split_path_power,
    total_pa_solve,
    uniform_pa,
    waterfill_total,
)

__all__ = [
    "AfSolverOptions",
    "DfSolverOptions",
    "EquivalentGains",
    "NetworkInstance",
    "Pairing",
    "PairingScheme",
    "PerNodePower",
    "PowerConstraint",
    "PowerMatrix",
    "RelayStrategy",
    "SolverReport",
    "TotalPower",
    "af_individual_solve",
    "af_upper_rate",
    "df_individual_solve",
    "equivalent_gains",
    "identity_pairing",
    "make_pairing",
    "path_snr",
    "sorted_gain_pairing",
    "sorted_snr_pairing",
    "split_path_power",
    "sum_rate",
    "total_pa_solve",
    "uniform_pa",
    "waterfill_total",
]

__version__ = "0.1.0"
