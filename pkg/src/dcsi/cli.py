"""Command line front end: config parsing, experiment presets and CSV output.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
Ranges use ``start:step:stop`` (inclusive) or comma lists::

    model = wyner
    K = 25
    mu = 0.5
    snr_db = 0:5:45
    policies = perfect,decaying,cluster,uniform

Presets: ``fig_rate_vs_snr``, ``fig_rate_vs_mu``, ``fig_amplitude_profile``
and ``scaling_report``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .allocation import PolicySpec, alloc_decaying_exp, alloc_decaying_wyner, alloc_full, \
    alloc_broadcast, total_bits_report
from .channel import MODELS
from .evaluator import SimConfig, amplitude_profile, estimate_mu_prime, parse_policy, \
    run_sweep, snr_to_power
from .quantizer import QUANTIZER_KINDS, QuantizerSpec

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "SWEEP_COLUMNS",
    "parse_config",
    "write_csv",
    "run_experiment",
    "main",
]

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("policy", "model", "K", "mu", "mu_prime", "snr_db", "avg_rate_per_user",
                 "stderr", "total_bits", "percent_of_full", "avg_precoder_distance",
                 "outage_trials", "trials", "seed")
PROFILE_COLUMNS = ("policy", "model", "K", "mu", "snr_db", "stream", "distance",
                   "precoder_log10_amplitude", "precoder_stderr", "channel_log10_amplitude",
                   "trials", "seed")
SCALING_COLUMNS = ("policy", "model", "mode", "snr_db", "mu", "mu_prime", "K", "total_bits",
                   "max_per_tx_bits", "interior_per_tx_bits", "fitted_degree", "loglog_slope")

PRESETS = ("fig_rate_vs_snr", "fig_rate_vs_mu", "fig_amplitude_profile", "scaling_report")

_PRESET_DEFAULTS = {
    "fig_rate_vs_snr": {"snr_db": "0:5:45"},
    "fig_rate_vs_mu": {"snr_db": "20", "mu_list": "0.1:0.1:1.0"},
    "fig_amplitude_profile": {"model": "expdecay", "mu": "0.4", "snr_db": "20",
                              "policies": "perfect,decaying"},
    "scaling_report": {"snr_db": "20", "K_list": "9,17,25,49"},
}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig
    preset: Optional[str] = None
    out_dir: str = "."
    threads: int = 1
    k_list: tuple = (9, 17, 25, 49)
    mu_prime_auto: bool = False


def _parse_range(text: str, key: str) -> tuple:
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            start, step, stop = parts
            if step <= 0 or stop < start:
                raise ConfigError(f"{key}: range needs step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + k * step, 12) for k in range(n))
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse range {text!r}") from None


def _parse_bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _num(text: str, key: str, kind=float):
    try:
        if kind is int:
            v = float(text)
            if v != int(v):
                raise ValueError
            return int(v)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {'an integer' if kind is int else 'a number'}, "
                          f"got {text!r}") from None


_KEYS = ("model", "K", "mu", "mu_list", "mu_prime", "snr_db", "policies", "trials", "seed",
         "quantizer", "rvq_max_bits", "scalar_clip_sigmas", "broadcast_c", "n_cluster",
         "enforce_sharing", "mode", "preset", "out", "threads", "K_list")


def _read_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse and validate a config document.

    ``overrides`` (string values keyed like the file) win over the file;
    preset defaults fill keys that neither sets.
    """
    pairs = _read_pairs(text)
    for k, v in (overrides or {}).items():
        if v is not None:
            if k not in _KEYS:
                raise ConfigError(f"unknown key {k!r}")
            pairs[k] = str(v)
    preset = pairs.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"preset must be one of {PRESETS}, got {preset!r}")
    for k, v in _PRESET_DEFAULTS.get(preset, {}).items():
        pairs.setdefault(k, v)

    model = pairs.get("model", "wyner")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    K = _num(pairs.get("K", "25"), "K", int)
    if K < 1:
        raise ConfigError("K must be a positive integer")
    mu = _num(pairs.get("mu", "0.5"), "mu")
    if not 0.0 < mu <= 1.0:
        raise ConfigError("mu must lie in (0,1]")
    mu_list = _parse_range(pairs["mu_list"], "mu_list") if "mu_list" in pairs else ()
    for m in mu_list:
        if not 0.0 < m <= 1.0:
            raise ConfigError("mu_list entries must lie in (0,1]")

    mu_prime, auto = None, False
    if "mu_prime" in pairs:
        if pairs["mu_prime"].lower() == "auto":
            auto = True
        else:
            mu_prime = _num(pairs["mu_prime"], "mu_prime")
            if not mu_prime > 0:
                raise ConfigError("mu_prime must be > 0")
            if any(mu_prime > m for m in (mu_list or (mu,))):
                raise ConfigError("mu_prime must not exceed mu")

    snr = _parse_range(pairs.get("snr_db", "20"), "snr_db")
    if not snr:
        raise ConfigError("snr_db must list at least one value")
    policies = tuple(p.strip() for p in pairs.get(
        "policies", "perfect,decaying,cluster,uniform").split(",") if p.strip())
    if not policies:
        raise ConfigError("policies must name at least one policy")
    mode = pairs.get("mode", "vector")
    if mode not in ("vector", "scalar"):
        raise ConfigError("mode must be 'vector' or 'scalar'")
    n_cluster = _num(pairs.get("n_cluster", "2"), "n_cluster", int)
    if n_cluster < 0:
        raise ConfigError("n_cluster must be >= 0")
    broadcast_c = _num(pairs.get("broadcast_c", "2.0"), "broadcast_c")
    if not broadcast_c > 0:
        raise ConfigError("broadcast_c must be > 0")
    for p in policies:
        try:
            parse_policy(p, model)
        except ValueError as exc:
            raise ConfigError(f"policies: {exc}") from None

    trials = _num(pairs.get("trials", "500"), "trials", int)
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    seed = _num(pairs.get("seed", "42"), "seed", int)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    kind = pairs.get("quantizer", "error_model")
    if kind not in QUANTIZER_KINDS:
        raise ConfigError(f"quantizer must be one of {QUANTIZER_KINDS}, got {kind!r}")
    rvq_max = _num(pairs.get("rvq_max_bits", "16"), "rvq_max_bits", int)
    if not 0 <= rvq_max <= 24:
        raise ConfigError("rvq_max_bits must lie in [0, 24]")
    clip = _num(pairs.get("scalar_clip_sigmas", "4.0"), "scalar_clip_sigmas")
    if not clip > 0:
        raise ConfigError("scalar_clip_sigmas must be > 0")
    if kind == "scalar" and mode != "scalar":
        raise ConfigError("quantizer=scalar requires mode=scalar")
    sharing = _parse_bool(pairs.get("enforce_sharing", "false"), "enforce_sharing")
    threads = _num(pairs.get("threads", "1"), "threads", int)
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    k_list = tuple(_num(k, "K_list", int) for k in pairs.get("K_list", "9,17,25,49").split(","))
    if len(k_list) < 2 or any(k < 1 for k in k_list):
        raise ConfigError("K_list needs at least two positive sizes")

    sim = SimConfig(model=model, K=K, mu=mu, mu_prime=mu_prime, snr_db_list=snr,
                    policies=policies, trials=trials, seed=seed,
                    quantizer=QuantizerSpec(kind, rvq_max, clip), enforce_sharing=sharing,
                    mode=mode, n_cluster=n_cluster, broadcast_c=broadcast_c, mu_list=mu_list)
    return ExperimentConfig(sim=sim, preset=preset, out_dir=pairs.get("out", "."),
                            threads=threads, k_list=k_list, mu_prime_auto=auto)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return f"{v:.10g}"
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def write_csv(records: Sequence, path, columns: Sequence[str] = SWEEP_COLUMNS) -> None:
    """Write records (dataclasses or dicts) under a fixed header.

    Floats carry 10 significant digits; missing values are empty.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for rec in records:
                get = rec.get if isinstance(rec, dict) else (lambda k, r=rec: getattr(r, k))
                w.writerow([_fmt(get(c)) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _summary(results) -> str:
    lines = [f"{'policy':<12} {'mu':>5} {'SNR':>6} {'rate':>8} {'stderr':>7} "
             f"{'bits':>8} {'%full':>7}"]
    for r in results:
        bits = "-" if r.total_bits is None else str(r.total_bits)
        frac = "-" if r.percent_of_full is None or math.isnan(r.percent_of_full) \
            else f"{100 * r.percent_of_full:.1f}"
        lines.append(f"{r.policy:<12} {r.mu:>5.2f} {r.snr_db:>6.1f} "
                     f"{r.avg_rate_per_user:>8.4f} {r.stderr:>7.4f} {bits:>8} {frac:>7}")
    return "\n".join(lines)


def _scaling_records(cfg: ExperimentConfig) -> list[dict]:
    sim = cfg.sim
    out = []
    for snr in sim.snr_db_list:
        P = snr_to_power(snr)
        mup = sim.mu_prime if sim.mu_prime is not None else sim.mu
        base = PolicySpec(kind="full", P=P, mu=sim.mu, mu_prime=mup, broadcast_c=sim.broadcast_c)
        builders = {
            ("full", "wyner", "vector"): lambda K: alloc_full(K, P, "wyner"),
            ("decaying_wyner", "wyner", "vector"): lambda K: alloc_decaying_wyner(base, K),
            ("decaying_wyner", "wyner", "scalar"):
                lambda K: alloc_decaying_wyner(replace(base, mode="scalar"), K),
            ("full", "expdecay", "vector"): lambda K: alloc_full(K, P, "expdecay"),
            ("decaying_exp", "expdecay", "vector"): lambda K: alloc_decaying_exp(base, K),
            ("decaying_exp", "expdecay", "scalar"):
                lambda K: alloc_decaying_exp(replace(base, mode="scalar"), K),
            ("broadcast", "expdecay", "vector"): lambda K: alloc_broadcast(base, K),
        }
        for (name, model, mode), build in builders.items():
            allocs = [build(K) for K in cfg.k_list]
            if any(a.total() == 0 for a in allocs):
                log.warning("%s/%s/%s has zero bits at %g dB; skipped", name, model, mode, snr)
                continue
            row = total_bits_report({name: allocs}, cfg.k_list)[0]
            for K, tot, mx, mid in zip(row.Ks, row.totals, row.max_per_tx, row.interior_per_tx):
                out.append(dict(policy=name, model=model, mode=mode, snr_db=float(snr),
                                mu=sim.mu, mu_prime=mup, K=K, total_bits=tot,
                                max_per_tx_bits=mx, interior_per_tx_bits=mid,
                                fitted_degree=row.degree, loglog_slope=row.slope))
    return out


def _profile_records(cfg: ExperimentConfig) -> list[dict]:
    sim = cfg.sim
    out = []
    for snr in sim.snr_db_list:
        for mu in sim.mus:
            for name in sim.policies:
                prof = amplitude_profile(sim, snr_to_power(snr), name, mu=mu)
                for d, pre, se, ch in zip(prof.distance, prof.precoder_log10,
                                          prof.precoder_stderr, prof.channel_log10):
                    out.append(dict(policy=name, model=sim.model, K=sim.K, mu=mu,
                                    snr_db=float(snr), stream=prof.stream + 1, distance=int(d),
                                    precoder_log10_amplitude=float(pre),
                                    precoder_stderr=float(se),
                                    channel_log10_amplitude=float(ch),
                                    trials=sim.trials, seed=sim.seed))
    return out


def run_experiment(cfg: ExperimentConfig, stdout=None) -> int:
    """Run the configured experiment, write its CSV and print a summary.

    Returns the process exit status.
    """
    stdout = stdout or sys.stdout
    sim = cfg.sim
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        if cfg.mu_prime_auto:
            mup = min(estimate_mu_prime(sim.model, sim.K, m, seed=sim.seed) for m in sim.mus)
            sim = replace(sim, mu_prime=mup)
            cfg = replace(cfg, sim=sim)
            print(f"estimated mu_prime = {mup:.4f}", file=stdout)
        name = cfg.preset or "sweep"
        path = os.path.join(cfg.out_dir, f"{name}.csv")
        if cfg.preset == "scaling_report":
            records = _scaling_records(cfg)
            write_csv(records, path, SCALING_COLUMNS)
            for r in records:
                print(f"{r['policy']:<15} {r['model']:<9} {r['mode']:<7} K={r['K']:<4} "
                      f"total={r['total_bits']:<9} per-TX(mid)={r['interior_per_tx_bits']:<7} "
                      f"degree={r['fitted_degree']}", file=stdout)
        elif cfg.preset == "fig_amplitude_profile":
            records = _profile_records(cfg)
            write_csv(records, path, PROFILE_COLUMNS)
            for r in records:
                print(f"{r['policy']:<10} d={r['distance']:<3} "
                      f"precoder={r['precoder_log10_amplitude']:.4f} "
                      f"channel={r['channel_log10_amplitude']:.4f}", file=stdout)
        else:
            results = run_sweep(sim, threads=cfg.threads)
            write_csv(results, path)
            print(_summary(results), file=stdout)
        print(f"wrote {path}", file=stdout)
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dcsi-sim",
        description="Distributed-CSI multicell ZF precoding: feedback allocation sweeps.")
    p.add_argument("--config", help="path of a key = value config file")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
            return 2
    overrides = {"preset": args.preset, "out": args.out, "seed": args.seed,
                 "trials": args.trials, "threads": args.threads}
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
