"""Feedback-bit allocation policies, symbol-sharing sets and scaling reports.

A :class:`BitAllocation` holds ``bits[j, i]`` (bits TX ``j`` spends on
channel row ``i``) or, per coefficient, ``bits[j, i, k]``. Real-valued bit
formulas are rounded up before clamping at zero, so an allocation is never
weaker than the formula it comes from.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "POLICY_KINDS",
    "BitAllocation",
    "PolicySpec",
    "ceil_bits",
    "alloc_full",
    "alloc_decaying_wyner",
    "alloc_decaying_exp",
    "alloc_uniform_budget",
    "alloc_overlapping_cluster",
    "alloc_broadcast",
    "symbol_sharing_set",
    "sharing_matrix",
    "fit_scaling_degree",
    "ScalingRow",
    "total_bits_report",
    "write_allocation_csv",
]

POLICY_KINDS = ("full", "uniform", "decaying_wyner", "decaying_exp",
                "overlapping_cluster", "broadcast")

# values within this distance of an integer are float noise, not a fraction
_CEIL_SLACK = 1e-9


def ceil_bits(x):
    """``max(ceil(x), 0)`` as integers, tolerant to float noise at integers."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(np.ceil(x - _CEIL_SLACK), 0).astype(np.int64)
    return out if out.ndim else int(out)


def _distance(K: int) -> np.ndarray:
    return np.abs(np.subtract.outer(np.arange(K), np.arange(K)))


def _log2_gain(P: float, mu: float, d) -> np.ndarray:
    """``log2(P mu**(2d))`` computed in the log domain."""
    return math.log2(P) + 2.0 * np.asarray(d, dtype=float) * math.log2(mu)


@dataclass(frozen=True)
class BitAllocation:
    """Integer feedback-bit table.

    Attributes
    ----------
    granularity : str
        ``"per_vector"`` (``bits`` is ``K x K``) or ``"per_coefficient"``
        (``bits`` is ``K x K x K``).
    bits : ndarray
        Nonnegative integers indexed ``[j, i]`` or ``[j, i, k]``.
    policy : str
        Name of the policy that produced the table.
    """

    granularity: str
    bits: np.ndarray
    policy: str = ""

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if self.granularity not in ("per_vector", "per_coefficient"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        want = 2 if self.granularity == "per_vector" else 3
        if bits.ndim != want or len(set(bits.shape)) != 1:
            raise ValueError(f"{self.granularity} bits must be a cube/square of rank {want}")
        if not np.issubdtype(bits.dtype, np.integer):
            if not np.all(bits == np.round(bits)):
                raise ValueError("bits must be integers")
            bits = bits.astype(np.int64)
        if np.any(bits < 0):
            raise ValueError("bits must be nonnegative")
        bits = bits.astype(np.int64, copy=True)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def K(self) -> int:
        return self.bits.shape[0]

    def total(self) -> int:
        return int(self.bits.sum())

    def per_tx(self) -> np.ndarray:
        """Bits spent by each TX."""
        return self.bits.reshape(self.K, -1).sum(axis=1)

    def per_vector(self) -> np.ndarray:
        """``[j, i]`` totals, summing coefficients when per-coefficient."""
        if self.granularity == "per_vector":
            return self.bits
        return self.bits.sum(axis=2)

    def rows(self) -> Iterable[tuple]:
        """Yield ``(j, i, bits)`` or ``(j, i, k, bits)`` in row-major order."""
        for idx in np.ndindex(*self.bits.shape):
            yield (*idx, int(self.bits[idx]))


@dataclass(frozen=True)
class PolicySpec:
    """Parameters of one allocation policy.

    ``budget`` fixes ``B_max`` of the uniform and cluster policies; when it
    is None those policies are matched to the decaying policy's total at
    the same operating point. ``bits_per_pair`` is a shortcut for a uniform
    allocation with that many bits on every ``(j, i)`` pair.
    """

    kind: str
    mode: str = "vector"
    P: float = 100.0
    mu: float = 0.5
    mu_prime: Optional[float] = None
    n_cluster: int = 2
    broadcast_c: float = 2.0
    budget: Optional[int] = None
    bits_per_pair: Optional[int] = None
    model: str = "wyner"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"policy kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if self.mode not in ("vector", "scalar"):
            raise ValueError("mode must be 'vector' or 'scalar'")
        if not self.P > 0:
            raise ValueError("P must be > 0")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must lie in (0,1]")
        if self.mu_prime is not None:
            if not self.mu_prime > 0:
                raise ValueError("mu_prime must be > 0")
            if self.mu_prime > self.mu:
                raise ValueError("mu_prime must not exceed mu")
        if self.n_cluster < 0:
            raise ValueError("n_cluster must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")

    @property
    def mu_p(self) -> float:
        return self.mu if self.mu_prime is None else self.mu_prime


def alloc_full(K: int, P: float, model: str = "wyner") -> BitAllocation:
    """Full-CSI scaling: ``s * ceil(log2 P)`` bits on every pair.

    ``s`` is the number of nonzero entries of a row minus one: 2 for the
    Wyner model and ``K - 1`` for the exponentially decaying one.
    """
    if model == "wyner":
        s = 2
    elif model == "expdecay":
        s = K - 1
    else:
        raise ValueError(f"unknown channel model {model!r}")
    per_pair = s * ceil_bits(math.log2(P)) if P > 1 else 0
    return BitAllocation("per_vector", np.full((K, K), per_pair, dtype=np.int64), "full")


def alloc_decaying_wyner(spec: PolicySpec, K: int) -> BitAllocation:
    dist = _distance(K)
    if spec.mode == "vector":
        bits = ceil_bits(2.0 * _log2_gain(spec.P, spec.mu, dist))
        return BitAllocation("per_vector", bits, "decaying_wyner")
    # coefficient (i, k) on the tridiagonal support, seen from TX j
    j = np.arange(K)[:, None, None]
    i = np.arange(K)[None, :, None]
    k = np.arange(K)[None, None, :]
    val = (math.log2(spec.P)
           + 2.0 * (np.abs(i - j) + np.abs(k - j)) * math.log2(spec.mu))
    bits = ceil_bits(val) * (np.abs(i - k) <= 1)
    return BitAllocation("per_coefficient", bits, "decaying_wyner")


def alloc_decaying_exp(spec: PolicySpec, K: int) -> BitAllocation:
    """Decaying allocation for exponentially decaying channels.

    Per vector, row ``i`` at TX ``j`` gets
    ``max(ceil((K-1) log2(P/mu'^2 (mu'/mu)^(2|i-j|))), 0)`` bits; per
    coefficient, ``(i, k)`` gets
    ``max(ceil(log2(P/mu'^2 (mu'/mu)^(2|i-j|) mu^(2|k-j|))), 0)``.
    """
    mu, mup = spec.mu, spec.mu_p
    if mup > mu:
        raise ValueError("mu_prime must not exceed mu")
    base = math.log2(spec.P) - 2.0 * math.log2(mup)
    ratio = 2.0 * (math.log2(mup) - math.log2(mu))
    if spec.mode == "vector":
        bits = ceil_bits((K - 1) * (base + ratio * _distance(K)))
        return BitAllocation("per_vector", bits, "decaying_exp")
    j = np.arange(K)[:, None, None]
    i = np.arange(K)[None, :, None]
    k = np.arange(K)[None, None, :]
    val = base + ratio * np.abs(i - j) + 2.0 * np.abs(k - j) * math.log2(mu)
    return BitAllocation("per_coefficient", ceil_bits(val), "decaying_exp")


def _spread(K: int, B_max: int, funded: np.ndarray, policy: str) -> BitAllocation:
    if B_max < 0 or int(B_max) != B_max:
        raise ValueError("B_max must be a nonnegative integer")
    bits = np.zeros((K, K), dtype=np.int64)
    n = int(funded.sum())
    if n == 0:
        return BitAllocation("per_vector", bits, policy)
    q, r = divmod(int(B_max), n)
    flat = np.full(n, q, dtype=np.int64)
    flat[:r] += 1
    bits[funded] = flat  # boolean assignment runs in row-major order
    return BitAllocation("per_vector", bits, policy)


def alloc_uniform_budget(K: int, B_max: int) -> BitAllocation:
    """``floor(B_max / K^2)`` bits per pair, remainder one bit each row-major."""
    return _spread(K, B_max, np.ones((K, K), dtype=bool), "uniform")


def alloc_overlapping_cluster(K: int, B_max: int, n_cluster: int) -> BitAllocation:
    """Spread ``B_max`` over the pairs with ``|i - j| <= n_cluster`` only."""
    if n_cluster < 0:
        raise ValueError("n_cluster must be >= 0")
    return _spread(K, B_max, _distance(K) <= n_cluster, "overlapping_cluster")


def alloc_broadcast(spec: PolicySpec, K: int) -> BitAllocation:
    """Bits deliverable over the RX ``i`` to TX ``j`` link at its gain."""
    bits = ceil_bits(spec.broadcast_c * _log2_gain(spec.P, spec.mu, _distance(K)))
    return BitAllocation("per_vector", bits, "broadcast")


def symbol_sharing_set(spec: PolicySpec, i: int, K: int) -> set:
    """TXs that need user ``i``'s symbol: positive decaying bits, plus TX ``i``."""
    if not 0 <= i < K:
        raise IndexError(f"user {i} out of range for K={K}")
    d = np.abs(np.arange(K) - i)
    funded = ceil_bits(2.0 * _log2_gain(spec.P, spec.mu, d)) > 0
    return set(np.flatnonzero(funded).tolist()) | {i}


def sharing_matrix(spec: PolicySpec, K: int) -> np.ndarray:
    """Boolean ``[j, i]``: TX ``j`` takes part in stream ``i``."""
    out = np.zeros((K, K), dtype=bool)
    for i in range(K):
        out[sorted(symbol_sharing_set(spec, i, K)), i] = True
    return out


def fit_scaling_degree(Ks: Sequence[int], totals: Sequence[float],
                       degrees: Sequence[int] = (1, 2, 3)) -> tuple[int, float]:
    """Pick the polynomial degree best explaining ``totals`` against ``Ks``.

    For each candidate degree ``p`` the line ``log T = p log K + c`` is fitted
    in ``c`` only; the degree with the smallest squared residual wins. The
    free log-log slope is returned alongside.
    """
    x = np.log(np.asarray(Ks, dtype=float))
    y = np.log(np.asarray(totals, dtype=float))
    if len(x) < 2 or not np.all(np.isfinite(y)):
        raise ValueError("need at least two positive totals")
    resid = []
    for p in degrees:
        c = np.mean(y - p * x)
        resid.append(np.sum((y - p * x - c) ** 2))
    slope = float(np.polyfit(x, y, 1)[0])
    return int(degrees[int(np.argmin(resid))]), slope


@dataclass
class ScalingRow:
    policy: str
    Ks: list
    totals: list
    max_per_tx: list
    interior_per_tx: list
    degree: int
    slope: float
    extra: dict = field(default_factory=dict)


def total_bits_report(allocs: dict, Ks: Sequence[int]) -> list[ScalingRow]:
    """Summarise how each policy's bit totals grow with ``K``.

    Parameters
    ----------
    allocs : dict
        Policy name to a list of :class:`BitAllocation`, one per ``K``.
    Ks : sequence of int
        The network sizes, in the same order.
    """
    rows = []
    for name, seq in allocs.items():
        seq = list(seq)
        if len(seq) != len(Ks):
            raise ValueError(f"policy {name!r}: {len(seq)} allocations for {len(Ks)} sizes")
        totals = [a.total() for a in seq]
        per_tx = [a.per_tx() for a in seq]
        deg, slope = fit_scaling_degree(Ks, totals)
        rows.append(ScalingRow(
            policy=name, Ks=list(Ks), totals=totals,
            max_per_tx=[int(p.max()) for p in per_tx],
            interior_per_tx=[int(p[len(p) // 2]) for p in per_tx],
            degree=deg, slope=slope))
    return rows


def write_allocation_csv(allocs: Iterable[BitAllocation], path) -> None:
    """Write allocations as ``policy, j, i, [k], bits`` rows."""
    allocs = list(allocs)
    coeff = any(a.granularity == "per_coefficient" for a in allocs)
    header = ["policy", "j", "i"] + (["k"] if coeff else []) + ["bits"]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for a in allocs:
                for row in a.rows():
                    if coeff and a.granularity == "per_vector":
                        row = (*row[:2], "", row[2])
                    w.writerow([a.policy, *row])
    except OSError as exc:
        raise OSError(f"cannot write allocation table to {path}: {exc}") from exc
