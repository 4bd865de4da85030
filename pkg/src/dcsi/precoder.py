"""Distributed zero-forcing precoding.

Each TX inverts its own channel estimate, normalizes every column to power
``P`` and keeps only its own row; stacking those rows gives the precoder
that is actually transmitted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import invert_general, invert_tridiagonal_or_general

__all__ = [
    "EffectivePrecoder",
    "normalize_columns",
    "zf_local",
    "assemble_effective",
    "zf_perfect",
    "precoder_distance",
]


@dataclass(frozen=True)
class EffectivePrecoder:
    matrix: np.ndarray
    power_P: float


def normalize_columns(Hinv: np.ndarray, P: float) -> np.ndarray:
    """Scale every column of ``Hinv`` to squared norm ``P``."""
    norms = np.linalg.norm(Hinv, axis=0)
    return np.sqrt(P) * Hinv / norms


def zf_local(est, P: float, participation: Optional[Sequence[bool]] = None) -> np.ndarray:
    """Zero-forcing precoder computed by one TX from its own estimate.

    Parameters
    ----------
    est : LocalEstimate or array_like
        The TX's ``K x K`` channel estimate.
    P : float
        Per-stream power.
    participation : sequence of bool, optional
        ``participation[i]`` False zeroes column ``i`` (the TX does not hold
        symbol ``i``).

    Raises
    ------
    SingularMatrixError
        When the estimate cannot be inverted.
    """
    H = np.asarray(getattr(est, "matrix", est), dtype=complex)
    Hinv, _ = invert_tridiagonal_or_general(H)
    T = normalize_columns(Hinv, P)
    if participation is not None:
        flags = np.asarray(participation, dtype=bool)
        if flags.shape != (H.shape[0],):
            raise ValueError("participation needs one flag per stream")
        T[:, ~flags] = 0.0
    return T


def assemble_effective(locals_: Sequence[np.ndarray], P: float) -> EffectivePrecoder:
    """Row ``j`` of the result is row ``j`` of TX ``j``'s local precoder."""
    K = len(locals_)
    mats = [np.asarray(L) for L in locals_]
    if any(L.shape != (K, K) for L in mats):
        raise ValueError(f"expected {K} local precoders of shape ({K}, {K})")
    T = np.stack([mats[j][j] for j in range(K)])
    return EffectivePrecoder(matrix=T, power_P=P)


def zf_perfect(H, P: float) -> np.ndarray:
    """Centralized ZF with perfect CSI, per-stream power ``P``."""
    return normalize_columns(invert_general(H), P)


def precoder_distance(T, T_pcsi) -> float:
    """``sum_i ||t_i - t_i^PCSI||^2`` for one realization."""
    T = np.asarray(getattr(T, "matrix", T))
    T_pcsi = np.asarray(T_pcsi)
    if T.shape != T_pcsi.shape:
        raise ValueError(f"shape mismatch {T.shape} vs {T_pcsi.shape}")
    return float(np.sum(np.abs(T - T_pcsi) ** 2))
