"""Monte Carlo evaluation of distributed-CSI zero forcing.

One trial draws a channel, quantizes it independently at every TX,
assembles the effective precoder from the TXs' local ZF rows and evaluates
the per-user rates with unit noise variance. Trials own their random
substreams and are reduced in trial-index order, so results do not depend
on how many workers run them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .allocation import (
    BitAllocation,
    PolicySpec,
    alloc_broadcast,
    alloc_decaying_exp,
    alloc_decaying_wyner,
    alloc_full,
    alloc_overlapping_cluster,
    alloc_uniform_budget,
    sharing_matrix,
)
from .channel import MODELS, RandomStream, gen_channel
from .numerics import SingularMatrixError, fit_decay_rate, invert_general
from .precoder import assemble_effective, precoder_distance, zf_local, zf_perfect
from .quantizer import QuantizerSpec, build_local_estimate

__all__ = [
    "PERFECT",
    "Policy",
    "parse_policy",
    "SimConfig",
    "TrialResult",
    "SweepResult",
    "AggregationError",
    "snr_to_power",
    "user_rates",
    "build_allocation",
    "run_trial",
    "run_sweep",
    "estimate_mg",
    "AmplitudeProfile",
    "amplitude_profile",
    "mean_inverse_magnitude",
    "estimate_mu_prime",
]

log = logging.getLogger(__name__)

PERFECT = "perfect"

_CHANNEL_KEY = 0
_QUANT_KEY = 1


class AggregationError(RuntimeError):
    """Every trial of a sweep cell was an outage."""


@dataclass(frozen=True)
class Policy:
    """A named policy of a sweep.

    ``template`` is None for perfect CSI; otherwise its ``P`` and ``mu``
    are replaced at each grid point.
    """

    name: str
    template: Optional[PolicySpec] = None

    @property
    def is_perfect(self) -> bool:
        return self.template is None


def parse_policy(name: str, model: str, mode: str = "vector", n_cluster: int = 2,
                 broadcast_c: float = 2.0, mu_prime: Optional[float] = None) -> Policy:
    """Map a policy name onto a :class:`Policy`.

    Recognised names: ``perfect``, ``full``, ``decaying`` (the model's
    decaying rule), ``decaying_wyner``, ``decaying_exp``, ``uniform``,
    ``cluster`` / ``overlapping_cluster``, ``broadcast`` and ``fixedN``
    (``N`` bits on every pair).
    """
    common = dict(mode=mode, n_cluster=n_cluster, broadcast_c=broadcast_c,
                  mu_prime=mu_prime, model=model)
    if name == PERFECT:
        return Policy(name)
    if name == "decaying":
        kind = "decaying_wyner" if model == "wyner" else "decaying_exp"
        return Policy(name, PolicySpec(kind=kind, **common))
    if name == "cluster":
        return Policy(name, PolicySpec(kind="overlapping_cluster", **common))
    if name.startswith("fixed") and name[5:].isdigit():
        return Policy(name, PolicySpec(kind="uniform", bits_per_pair=int(name[5:]), **common))
    if name in ("full", "decaying_wyner", "decaying_exp", "uniform",
                "overlapping_cluster", "broadcast"):
        return Policy(name, PolicySpec(kind=name, **common))
    raise ValueError(f"unknown policy {name!r}")


@dataclass(frozen=True)
class SimConfig:
    model: str = "wyner"
    K: int = 25
    mu: float = 0.5
    mu_prime: Optional[float] = None
    snr_db_list: tuple = (20.0,)
    policies: tuple = ("perfect", "decaying", "cluster", "uniform")
    trials: int = 500
    seed: int = 42
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)
    enforce_sharing: bool = False
    mode: str = "vector"
    n_cluster: int = 2
    broadcast_c: float = 2.0
    mu_list: tuple = ()

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.snr_db_list) == 0:
            raise ValueError("snr list must be nonempty")
        for m in self.mus:
            if not 0.0 < m <= 1.0:
                raise ValueError("mu must lie in (0,1]")
            if self.mu_prime is not None and self.mu_prime > m:
                raise ValueError("mu_prime must not exceed mu")

    @property
    def mus(self) -> tuple:
        return tuple(self.mu_list) if self.mu_list else (self.mu,)

    def policy_objects(self) -> list[Policy]:
        out = []
        for p in self.policies:
            if isinstance(p, Policy):
                out.append(p)
            elif isinstance(p, PolicySpec):
                out.append(Policy(p.kind, p))
            else:
                out.append(parse_policy(p, self.model, self.mode, self.n_cluster,
                                        self.broadcast_c, self.mu_prime))
        return out


@dataclass
class TrialResult:
    rates: Optional[np.ndarray]
    distance: float
    outage: bool


@dataclass
class SweepResult:
    policy: str
    model: str
    K: int
    mu: float
    mu_prime: float
    snr_db: float
    avg_rate_per_user: float
    stderr: float
    total_bits: Optional[int]
    percent_of_full: Optional[float]
    avg_precoder_distance: float
    outage_trials: int
    trials: int
    seed: int


def snr_to_power(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def user_rates(H, T) -> np.ndarray:
    """``log2(1 + SINR_i)`` per user with unit-variance noise."""
    H = np.asarray(H)
    T = np.asarray(getattr(T, "matrix", T))
    if H.shape[1] != T.shape[0] or H.shape[0] != T.shape[1]:
        raise ValueError(f"shape mismatch {H.shape} vs {T.shape}")
    G = np.abs(H @ T) ** 2
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    return np.log2(1.0 + signal / (1.0 + interference))


def build_allocation(template: PolicySpec, K: int, P: float, mu: float) -> BitAllocation:
    """Allocation of ``template`` at power ``P`` and attenuation ``mu``."""
    spec = replace(template, P=P, mu=mu)
    kind = spec.kind
    if kind == "full":
        return alloc_full(K, P, spec.model)
    if kind == "decaying_wyner":
        return alloc_decaying_wyner(spec, K)
    if kind == "decaying_exp":
        return alloc_decaying_exp(spec, K)
    if kind == "broadcast":
        return alloc_broadcast(spec, K)
    if spec.bits_per_pair is not None:
        budget = spec.bits_per_pair * K * K
    elif spec.budget is not None:
        budget = spec.budget
    else:
        ref = replace(spec, kind="decaying_wyner" if spec.model == "wyner" else "decaying_exp")
        budget = build_allocation(ref, K, P, mu).total()
    if kind == "uniform":
        return alloc_uniform_budget(K, budget)
    if kind == "overlapping_cluster":
        return alloc_overlapping_cluster(K, budget, spec.n_cluster)
    raise ValueError(f"unknown policy kind {kind!r}")


def _draw_channel(cfg: SimConfig, mu: float, trial_index: int) -> np.ndarray:
    stream = RandomStream(cfg.seed, trial_index).substream(_CHANNEL_KEY)
    return gen_channel(cfg.model, cfg.K, mu, stream)


def _effective_precoder(cfg: SimConfig, H: np.ndarray, P: float, mu: float,
                        alloc: BitAllocation, trial_index: int,
                        participation: Optional[np.ndarray]) -> np.ndarray:
    base = RandomStream(cfg.seed, trial_index)
    locals_ = []
    for j in range(cfg.K):
        est = build_local_estimate(H, j, alloc, cfg.quantizer,
                                   base.substream(_QUANT_KEY, j), model=cfg.model, mu=mu)
        flags = None if participation is None else participation[j]
        locals_.append(zf_local(est, P, flags))
    return assemble_effective(locals_, P).matrix


def run_trial(cfg: SimConfig, P: float, policy: Union[Policy, str], trial_index: int,
              mu: Optional[float] = None, alloc: Optional[BitAllocation] = None) -> TrialResult:
    """Run one Monte Carlo trial of ``policy`` at power ``P``.

    Singular local estimates mark the trial as an outage.
    """
    if isinstance(policy, str):
        policy = parse_policy(policy, cfg.model, cfg.mode, cfg.n_cluster,
                              cfg.broadcast_c, cfg.mu_prime)
    mu = cfg.mu if mu is None else mu
    H = _draw_channel(cfg, mu, trial_index)
    try:
        T_pcsi = zf_perfect(H, P)
    except SingularMatrixError:
        return TrialResult(None, math.nan, True)
    if policy.is_perfect:
        return TrialResult(user_rates(H, T_pcsi), 0.0, False)

    if alloc is None:
        alloc = build_allocation(policy.template, cfg.K, P, mu)
    participation = None
    if cfg.enforce_sharing:
        share = sharing_matrix(replace(policy.template, P=P, mu=mu), cfg.K)
        participation = share
    try:
        T = _effective_precoder(cfg, H, P, mu, alloc, trial_index, participation)
    except SingularMatrixError:
        return TrialResult(None, math.nan, True)
    return TrialResult(user_rates(H, T), precoder_distance(T, T_pcsi), False)


def _aggregate(results: Sequence[TrialResult]) -> tuple[float, float, float, int]:
    ok = [r for r in results if not r.outage]
    outages = len(results) - len(ok)
    if not ok:
        raise AggregationError("all trials of this cell were outages")
    per_trial = np.array([r.rates.mean() for r in ok])
    mean = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else 0.0
    dist = float(np.mean([r.distance for r in ok]))
    return mean, stderr, dist, outages


def run_sweep(cfg: SimConfig, threads: int = 1) -> list[SweepResult]:
    """Evaluate every ``(mu, snr, policy)`` cell of ``cfg``."""
    results = []
    policies = cfg.policy_objects()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for mu in cfg.mus:
            for snr in cfg.snr_db_list:
                P = snr_to_power(snr)
                full_total = alloc_full(cfg.K, P, cfg.model).total()
                for pol in policies:
                    alloc = None if pol.is_perfect else build_allocation(pol.template, cfg.K, P, mu)

                    def one(t, pol=pol, alloc=alloc, P=P, mu=mu):
                        return run_trial(cfg, P, pol, t, mu=mu, alloc=alloc)

                    idx = range(cfg.trials)
                    trials = list(pool.map(one, idx)) if pool else [one(t) for t in idx]
                    mean, stderr, dist, outages = _aggregate(trials)
                    if outages:
                        log.info("%s at %g dB, mu=%g: %d outage trials", pol.name, snr, mu, outages)
                    if alloc is None:
                        total, frac = None, None
                    else:
                        total = alloc.total()
                        frac = total / full_total if full_total > 0 else math.nan
                    if pol.is_perfect or pol.template.kind != "decaying_exp":
                        mup = cfg.mu_prime if cfg.mu_prime is not None else mu
                    else:
                        mup = pol.template.mu_prime if pol.template.mu_prime is not None else mu
                    results.append(SweepResult(
                        policy=pol.name, model=cfg.model, K=cfg.K, mu=mu, mu_prime=mup,
                        snr_db=float(snr), avg_rate_per_user=mean, stderr=stderr,
                        total_bits=total, percent_of_full=frac,
                        avg_precoder_distance=dist, outage_trials=outages,
                        trials=cfg.trials, seed=cfg.seed))
    finally:
        if pool is not None:
            pool.shutdown()
    return results


def estimate_mg(snr_db: Sequence[float], rates: Sequence[float]) -> float:
    """Slope of rate versus ``log2 P`` over the upper half of the SNR grid.

    Raises
    ------
    ValueError
        With fewer than 3 points or a grid narrower than 20 dB.
    """
    snr = np.asarray(snr_db, dtype=float)
    r = np.asarray(rates, dtype=float)
    if snr.size != r.size:
        raise ValueError("snr and rate lists differ in length")
    if snr.size < 3 or snr.max() - snr.min() < 20.0:
        raise ValueError("need at least 3 SNR points spanning at least 20 dB")
    order = np.argsort(snr)
    n_top = max(2, math.ceil(snr.size / 2))
    top = order[-n_top:]
    log2P = snr[top] / (10.0 * math.log10(2.0))
    return float(np.polyfit(log2P, r[top], 1)[0])


@dataclass
class AmplitudeProfile:
    distance: np.ndarray
    precoder_log10: np.ndarray
    precoder_stderr: np.ndarray
    channel_log10: np.ndarray
    stream: int


def amplitude_profile(cfg: SimConfig, P: float, policy: Union[Policy, str] = PERFECT,
                      mu: Optional[float] = None) -> AmplitudeProfile:
    """Mean log-amplitude of the middle stream's precoder against distance.

    For stream ``i = ceil(K/2)`` (1-based) and every distance ``d`` this
    returns the trial mean of ``log10(|T_ji| / sqrt P)`` averaged over the
    TXs ``j`` at distance ``d``, and ``log10`` of the trial mean of
    ``|H_ij|`` over the same pairs.
    """
    if isinstance(policy, str):
        policy = parse_policy(policy, cfg.model, cfg.mode, cfg.n_cluster,
                              cfg.broadcast_c, cfg.mu_prime)
    mu = cfg.mu if mu is None else mu
    K = cfg.K
    i = math.ceil(K / 2) - 1
    dist = np.abs(np.arange(K) - i)
    dmax = int(dist.max())
    alloc = None if policy.is_perfect else build_allocation(policy.template, K, P, mu)
    part = None
    if cfg.enforce_sharing and not policy.is_perfect:
        part = sharing_matrix(replace(policy.template, P=P, mu=mu), K)

    pre_rows, chan_sum, used = [], np.zeros(dmax + 1), 0
    for t in range(cfg.trials):
        H = _draw_channel(cfg, mu, t)
        try:
            if policy.is_perfect:
                T = zf_perfect(H, P)
            else:
                T = _effective_precoder(cfg, H, P, mu, alloc, t, part)
        except SingularMatrixError:
            continue
        with np.errstate(divide="ignore"):
            amp = np.log10(np.abs(T[:, i]) / math.sqrt(P))
        amp[~np.isfinite(amp)] = np.nan
        row = np.array([np.nanmean(amp[dist == d]) if np.any(np.isfinite(amp[dist == d]))
                        else np.nan for d in range(dmax + 1)])
        pre_rows.append(row)
        chan_sum += np.array([np.abs(H[i, dist == d]).mean() for d in range(dmax + 1)])
        used += 1
    if used == 0:
        raise AggregationError("every trial was an outage")
    pre = np.array(pre_rows)
    n = np.sum(np.isfinite(pre), axis=0)
    mean = np.nanmean(pre, axis=0)
    std = np.nanstd(pre, axis=0, ddof=1) if used > 1 else np.zeros(dmax + 1)
    stderr = np.where(n > 1, std / np.sqrt(np.maximum(n, 1)), 0.0)
    with np.errstate(divide="ignore"):
        chan = np.log10(chan_sum / used)
    return AmplitudeProfile(distance=np.arange(dmax + 1), precoder_log10=mean,
                            precoder_stderr=stderr, channel_log10=chan, stream=i)


def mean_inverse_magnitude(model: str, K: int, mu: float, trials: int, seed: int) -> np.ndarray:
    """Entrywise mean of ``|H^-1|`` over ``trials`` channel draws."""
    acc = np.zeros((K, K))
    n = 0
    for t in range(trials):
        H = gen_channel(model, K, mu, RandomStream(seed, t).substream(_CHANNEL_KEY))
        try:
            acc += np.abs(invert_general(H))
        except SingularMatrixError:
            continue
        n += 1
    if n == 0:
        raise AggregationError("no invertible draws")
    return acc / n


def estimate_mu_prime(model: str, K: int, mu: float, trials: int = 200, seed: int = 0) -> float:
    """Decay base of the channel inverse, from a fit on mean inverse magnitudes.

    The result is clipped to ``(0, mu]``.
    """
    fit = fit_decay_rate(mean_inverse_magnitude(model, K, mu, trials, seed))
    if fit.base is None:
        return mu
    return float(min(mu, max(fit.base, 1e-12)))
