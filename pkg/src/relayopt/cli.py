"""Command-line front end: single-instance solve, Monte Carlo sweeps, and
brute-force verification suites, all reproducible from one seed.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage/config
error. Config files are JSON documents; command-line flags override file
values, and unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import secrets
import sys
from dataclasses import asdict

import numpy as np

from . import chanexp, oracle
from .model import (
    NetworkInstance,
    PerNodePower,
    PowerMatrix,
    RelayStrategy,
    TotalPower,
    path_hop_snrs,
    path_snrs,
    sum_rate,
)
from .oracle import BudgetExceeded, OracleBudget
from .pairing import identity_pairing, sorted_gain_pairing
from .power import (
    af_individual_solve,
    af_upper_rate,
    df_individual_solve,
    total_pa_solve,
    uniform_pa,
)

SWEEP_CSV_COLUMNS = ("scheme", "relaying", "constraint", "sweep_var", "sweep_value",
                     "mean_rate_bps_hz_per_subcarrier", "std_err", "trials",
                     "failures", "seed")


class ConfigError(Exception):
    """Invalid configuration or usage; maps to exit code 2."""


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def read_gains_file(path: str) -> np.ndarray:
    """Parse the plain-text gains format: header 'M N', then M rows of N
    nonnegative decimals."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            tokens = [line.split() for line in fh if line.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}") from exc
    if not tokens or len(tokens[0]) != 2:
        raise ConfigError(f"{path}: first line must be 'M N'")
    try:
        m, n = int(tokens[0][0]), int(tokens[0][1])
        rows = [[float(v) for v in row] for row in tokens[1:]]
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ConfigError(f"{path}: expected {m} rows of {n} values")
    gains = np.asarray(rows, dtype=float)
    if (gains < 0).any():
        raise ConfigError(f"{path}: gains must be nonnegative")
    return gains


def write_gains_file(path: str, gains: np.ndarray) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{gains.shape[0]} {gains.shape[1]}\n")
        for row in gains:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _load_config(path: str | None, allowed: set[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = secrets.randbelow(2**32)
        print(f"seed: {seed} (generated; pass --seed {seed} to reproduce)")
    return int(seed)


def _out_dir_override(path: str) -> str:
    base = os.environ.get("RELAYOPT_OUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


# ---------------------------------------------------------------- solve ----

_SOLVE_KEYS = {"gains_file", "generate", "hops", "channels", "taps", "scheme",
               "relaying", "constraint", "pt", "pmt", "fs", "avg_snr_db",
               "seed", "out"}


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, _SOLVE_KEYS)

    def pick(flag, key, default=None):
        return flag if flag is not None else cfg.get(key, default)

    scheme = pick(args.scheme, "scheme", "joint")
    relaying = pick(args.relaying, "relaying", "df")
    constraint_kind = pick(args.constraint, "constraint", "total")
    fs = float(pick(args.fs, "fs", 3.0))
    gains_file = pick(args.gains, "gains_file")
    if scheme not in chanexp.SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r} (expected one of {chanexp.SCHEMES})")
    if relaying not in ("af", "df"):
        raise ConfigError(f"unknown relaying {relaying!r}")
    if constraint_kind not in ("total", "individual"):
        raise ConfigError(f"unknown constraint {constraint_kind!r}")

    if gains_file:
        gains = read_gains_file(gains_file)
        try:
            inst = NetworkInstance(gains, spatial_reuse=fs)
        except ValueError as exc:
            raise ConfigError(f"{gains_file}: {exc}") from exc
    elif pick(args.generate, "generate", False):
        hops = int(pick(args.hops, "hops", 4))
        channels = int(pick(args.channels, "channels", 16))
        taps = int(pick(args.taps, "taps", 4))
        seed = _resolve_seed(pick(args.seed, "seed"))
        try:
            ccfg = chanexp.ChannelConfig(num_taps=taps, num_channels=channels)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        inst = chanexp.generate_instance(ccfg, hops, seed, spatial_reuse=fs)
    else:
        raise ConfigError("need --gains FILE or --generate")

    m, n = inst.num_hops, inst.num_channels
    pt = pick(args.pt, "pt")
    pmt = pick(args.pmt, "pmt")
    snr_db = pick(args.avg_snr_db, "avg_snr_db")
    if constraint_kind == "total":
        if pt is not None:
            constraint = TotalPower(float(pt))
        elif snr_db is not None:
            base = 10.0 ** (float(snr_db) / 10.0) * n
            constraint = TotalPower(base * m)
        else:
            raise ConfigError("total constraint needs --pt or --avg-snr-db")
    else:
        if pmt is not None:
            vals = [float(v) for v in str(pmt).split(",")]
            if len(vals) == 1:
                vals = vals * m
            if len(vals) != m:
                raise ConfigError(f"--pmt needs 1 or {m} comma-separated values")
            constraint = PerNodePower(vals)
        elif snr_db is not None:
            constraint = PerNodePower([10.0 ** (float(snr_db) / 10.0) * n] * m)
        else:
            raise ConfigError("individual constraint needs --pmt or --avg-snr-db")

    af = relaying == "af"
    pairing = sorted_gain_pairing(inst) if scheme in ("joint", "uniform_with_cp") \
        else identity_pairing(inst)
    upper = None
    if scheme in ("joint", "optpa_no_cp"):
        if isinstance(constraint, TotalPower):
            report = total_pa_solve(inst, pairing, constraint.budget,
                                    RelayStrategy.AF_APPROX if af else RelayStrategy.DF)
        elif af:
            report = af_individual_solve(inst, pairing, constraint)
        else:
            report = df_individual_solve(inst, pairing, constraint)
        if not report.converged:
            print("solver did not converge", file=sys.stderr)
            return 1
        power = report.power
        rate = report.exact_rate
        if af:
            upper = report.objective
    else:
        power = uniform_pa(inst, constraint)
        rate = sum_rate(inst, pairing, power,
                        RelayStrategy.AF_EXACT if af else RelayStrategy.DF)
        if af:
            upper = af_upper_rate(inst, pairing, power)

    hop_snrs = path_hop_snrs(inst, pairing, power)
    snrs = path_snrs(RelayStrategy.AF_EXACT if af else RelayStrategy.DF, hop_snrs)

    print(f"instance: {m} hops x {n} channels, reuse factor {_fmt(inst.spatial_reuse)}")
    print(f"scheme {scheme}, {relaying} relaying, {constraint_kind} constraint")
    for r, perm in enumerate(pairing.relay_perms):
        print(f"relay {r + 1} pairing (in->out, 1-based): "
              + " ".join(f"{i + 1}->{c + 1}" for i, c in enumerate(perm)))
    print("power matrix (hops x channels, W):")
    for row in power.values:
        print("  " + " ".join(_fmt(v) for v in row))
    print("paths (1-based channels), per-hop SNRs, end-to-end SNR:")
    for i, path in enumerate(pairing.paths):
        chain = "-".join(str(c + 1) for c in path)
        hops_str = " ".join(_fmt(v) for v in hop_snrs[:, i])
        print(f"  path {i + 1}: {chain} | {hops_str} | {_fmt(snrs[i])}")
    print(f"sum rate: {_fmt(rate)} bits/s/Hz ({_fmt(rate / n)} per subcarrier)")
    if upper is not None:
        print(f"upper-bound rate: {_fmt(upper)} bits/s/Hz")

    if args.out:
        out = _out_dir_override(args.out)
        with open(out, "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("record", "path", "channels", "end_to_end_snr",
                             "rate_bps_hz"))
            for i, path in enumerate(pairing.paths):
                chain = "-".join(str(c + 1) for c in path)
                prate = float(np.log1p(snrs[i]) / np.log(2) / inst.spatial_reuse)
                writer.writerow(("path", i + 1, chain, _fmt(snrs[i]), _fmt(prate)))
            writer.writerow(("total", "", "", "", _fmt(rate)))
        print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------- sweep ----

_SWEEP_KEYS = set(chanexp.SweepSpec.__dataclass_fields__) | {"out", "jobs"}


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, _SWEEP_KEYS)
    out = args.out or cfg.pop("out", None)
    jobs = args.jobs if args.jobs is not None else int(cfg.pop("jobs", 1))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trials is not None:
        cfg["trials"] = args.trials
    cfg.setdefault("seed", _resolve_seed(None))
    if not out:
        raise ConfigError("sweep needs an output CSV path (--out or config 'out')")
    try:
        spec = chanexp.SweepSpec(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep config: {exc}") from exc

    result = chanexp.run_sweep(spec, jobs=jobs)
    out = _out_dir_override(out)
    with open(out, "w", encoding="ascii", newline="") as fh:
        write_sweep_csv(fh, result)
    frac = result.failure_fraction
    print(f"wrote {out} ({len(result.rows)} rows, seed {result.seed}, "
          f"config {result.config_hash})")
    if frac > 0.01:
        print(f"failure fraction {frac:.3f} exceeds 1%", file=sys.stderr)
        return 1
    return 0


def write_sweep_csv(fh: io.TextIOBase, result: chanexp.SweepResult) -> None:
    """Locale-independent CSV: '.' decimals, '\\n' newlines, header always."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SWEEP_CSV_COLUMNS)
    for row in result.rows:
        writer.writerow((row.scheme, row.relaying, row.constraint, row.sweep_var,
                         _fmt(row.sweep_value), _fmt(row.mean_rate), _fmt(row.std_err),
                         row.trials, row.failures, result.seed))


# --------------------------------------------------------------- verify ----

_VERIFY_KEYS = {"suite", "instances", "draws", "max_m", "max_n", "grid_steps",
                "trials", "seed"}


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, _VERIFY_KEYS)
    suite = args.suite or cfg.get("suite")
    if suite not in ("prop3", "prop5", "lemma2", "concavity", "all"):
        raise ConfigError(f"unknown verify suite {suite!r}")
    seed = _resolve_seed(args.seed if args.seed is not None else cfg.get("seed", 0))
    instances = int(args.instances if args.instances is not None
                    else cfg.get("instances", 200))
    draws = int(args.draws if args.draws is not None else cfg.get("draws", 10000))
    max_m = int(args.max_m if args.max_m is not None else cfg.get("max_m", 4))
    max_n = int(args.max_n if args.max_n is not None else cfg.get("max_n", 3))
    grid_steps = int(args.grid_steps if args.grid_steps is not None
                     else cfg.get("grid_steps", 20))
    budget = OracleBudget()
    if max_m > budget.max_hops or max_n > budget.max_channels:
        raise ConfigError(
            f"requested sizes (M<={max_m}, N<={max_n}) exceed the oracle budget "
            f"({budget.max_hops}, {budget.max_channels})")

    from . import verify as suites

    runners = {
        "prop3": lambda: suites.verify_sorted_snr_optimal(instances, max_m, max_n, seed),
        "prop5": lambda: suites.verify_separation(instances, max_m, grid_steps, seed),
        "lemma2": lambda: suites.verify_exchange_inequalities(draws, seed),
        "concavity": lambda: suites.verify_upper_bound_concavity(draws, seed),
    }
    names = list(runners) if suite == "all" else [suite]
    failed = False
    for name in names:
        outcome = runners[name]()
        status = "ok" if outcome.passed == outcome.total else "FAIL"
        print(f"{name}: {outcome.passed}/{outcome.total} {status}")
        if outcome.passed != outcome.total:
            failed = True
            print(json.dumps({"suite": name, "seed": seed,
                              "counterexample": outcome.counterexample}, sort_keys=True))
    return 1 if failed else 0


# ----------------------------------------------------------------- main ----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relayopt",
        description="Channel pairing and power allocation for multi-channel "
                    "multi-hop relay networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one instance and report the allocation")
    p_solve.add_argument("--config", help="JSON config file")
    p_solve.add_argument("--gains", help="gains file ('M N' header, then M rows)")
    p_solve.add_argument("--generate", action="store_true", default=None,
                         help="draw a random instance instead of reading gains")
    p_solve.add_argument("--hops", type=int)
    p_solve.add_argument("--channels", type=int)
    p_solve.add_argument("--taps", type=int)
    p_solve.add_argument("--scheme", choices=chanexp.SCHEMES)
    p_solve.add_argument("--relaying", choices=("af", "df"))
    p_solve.add_argument("--constraint", choices=("total", "individual"))
    p_solve.add_argument("--pt", type=float, help="total power budget (W)")
    p_solve.add_argument("--pmt", help="per-node budgets (W), single value or comma list")
    p_solve.add_argument("--avg-snr-db", dest="avg_snr_db", type=float)
    p_solve.add_argument("--fs", type=float, help="spatial reuse factor")
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--out", help="CSV output path")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run a Monte Carlo sweep to CSV")
    p_sweep.add_argument("--config", help="JSON config file (SweepSpec fields)")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--trials", type=int)
    p_sweep.add_argument("--jobs", type=int, help="parallel trial workers")
    p_sweep.add_argument("--out", help="CSV output path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run brute-force verification suites")
    p_verify.add_argument("suite", nargs="?",
                          choices=("prop3", "prop5", "lemma2", "concavity", "all"))
    p_verify.add_argument("--config", help="JSON config file")
    p_verify.add_argument("--instances", type=int)
    p_verify.add_argument("--draws", type=int)
    p_verify.add_argument("--max-m", dest="max_m", type=int)
    p_verify.add_argument("--max-n", dest="max_n", type=int)
    p_verify.add_argument("--grid-steps", dest="grid_steps", type=int)
    p_verify.add_argument("--seed", type=int)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
