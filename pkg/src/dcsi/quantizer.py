"""Limited-feedback channel estimates held by each transmitter.

Three quantizers turn a true channel row into the estimate a TX works with:

* random vector quantization (RVQ) of the row direction on its support,
* a statistical surrogate of RVQ for bit counts too large for an explicit
  codebook, with the same mean chordal error ``2**(-B/(M-1))``,
* per-coefficient uniform scalar quantization with known variances.

Vector quantizers act on the direction only and keep the true row norm.
The returned estimate is phase-aligned with the true row (the selected
codeword is rotated so that its inner product with the row is real and
positive), so quantization errors are pure direction errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import RandomSource, as_generator, crandn, entry_std, support_mask

__all__ = [
    "QUANTIZER_KINDS",
    "QuantizerSpec",
    "LocalEstimate",
    "chordal_sin2",
    "rvq_quantize",
    "error_model_quantize",
    "scalar_quantize",
    "build_local_estimate",
]

QUANTIZER_KINDS = ("rvq", "error_model", "scalar")

# largest codebook block searched at once
_RVQ_CHUNK = 1 << 16


@dataclass(frozen=True)
class QuantizerSpec:
    kind: str = "error_model"
    rvq_max_bits: int = 16
    scalar_clip_sigmas: float = 4.0

    def __post_init__(self):
        if self.kind not in QUANTIZER_KINDS:
            raise ValueError(f"quantizer kind must be one of {QUANTIZER_KINDS}, got {self.kind!r}")
        if int(self.rvq_max_bits) != self.rvq_max_bits or not 0 <= self.rvq_max_bits <= 24:
            raise ValueError("rvq_max_bits must be an integer in [0, 24]")
        if not self.scalar_clip_sigmas > 0:
            raise ValueError("scalar_clip_sigmas must be > 0")


@dataclass(frozen=True)
class LocalEstimate:
    tx_index: int
    matrix: np.ndarray
    bits_used: np.ndarray


def chordal_sin2(hhat, h) -> float:
    """``sin^2`` of the angle between two complex vectors."""
    hhat = np.asarray(hhat)
    h = np.asarray(h)
    num = abs(np.vdot(hhat, h)) ** 2
    den = np.vdot(hhat, hhat).real * np.vdot(h, h).real
    if den == 0:
        return 1.0
    return float(max(0.0, 1.0 - num / den))


def _support_index(h: np.ndarray, support) -> np.ndarray:
    idx = np.asarray(support)
    if idx.dtype == bool:
        if idx.shape != h.shape:
            raise ValueError("support mask does not match the vector length")
        idx = np.flatnonzero(idx)
    idx = idx.astype(int)
    if idx.size == 0:
        raise ValueError("support must be nonempty")
    if idx.size > h.size or idx.min() < 0 or idx.max() >= h.size:
        raise ValueError(f"support {idx.tolist()} exceeds vector length {h.size}")
    return idx


def _unit_rows(gen: np.random.Generator, n: int, M: int) -> np.ndarray:
    C = crandn(gen, (n, M))
    return C / np.linalg.norm(C, axis=1, keepdims=True)


def rvq_quantize(h, support, B: int, rng: RandomSource) -> np.ndarray:
    """Random vector quantization of ``h`` restricted to ``support``.

    A codebook of ``2**B`` isotropic unit vectors of dimension
    ``M = len(support)`` is drawn from ``rng``; the codeword with the largest
    ``|<c, h_s>|`` is phase-aligned to ``h_s``, scaled to ``||h_s||`` and
    embedded at the support indices. With ``B = 0`` the single codeword is
    returned as drawn, independent of ``h``.
    """
    h = np.asarray(h, dtype=complex).ravel()
    idx = _support_index(h, support)
    if int(B) != B or B < 0:
        raise ValueError("B must be a nonnegative integer")
    if B > 24:
        raise ValueError("RVQ codebooks are limited to 24 bits; use error_model_quantize")
    gen = as_generator(rng)
    hs = h[idx]
    M = idx.size
    norm = np.linalg.norm(hs)
    n_words = 1 << int(B)

    best, best_corr = None, -1.0
    for start in range(0, n_words, _RVQ_CHUNK):
        C = _unit_rows(gen, min(_RVQ_CHUNK, n_words - start), M)
        corr = np.abs(C.conj() @ hs)
        k = int(np.argmax(corr))
        if corr[k] > best_corr:
            best, best_corr = C[k], corr[k]

    if B > 0:
        ip = np.vdot(best, hs)
        if ip != 0:
            best = best * (ip / abs(ip))
    out = np.zeros_like(h)
    out[idx] = norm * best
    return out


def _rvq_mean_sin2(B: float, M: int) -> float:
    if M <= 1:
        return 0.0
    return min(1.0, 2.0 ** (-B / (M - 1)))


def _error_model_rows(Hs: np.ndarray, mask: np.ndarray, bits: np.ndarray,
                      gen: np.random.Generator) -> np.ndarray:
    """Vectorised error model over the rows of ``Hs`` (zero off ``mask``)."""
    n, K = Hs.shape
    M = mask.sum(axis=1)
    norms = np.linalg.norm(Hs, axis=1)
    g = crandn(gen, (n, K)) * mask
    x = gen.standard_exponential(n)
    bits = np.asarray(bits, dtype=float)

    out = np.empty_like(Hs)
    safe = np.where(norms > 0, norms, 1.0)
    u = Hs / safe[:, None]

    zero = bits <= 0
    if np.any(zero):
        gz = g[zero]
        gn = np.linalg.norm(gz, axis=1)
        out[zero] = norms[zero, None] * gz / np.where(gn > 0, gn, 1.0)[:, None]

    pos = ~zero
    if np.any(pos):
        up, gp, Mp = u[pos], g[pos], M[pos]
        # orthogonal complement direction on the support
        v = gp - np.sum(up.conj() * gp, axis=1)[:, None] * up
        vn = np.linalg.norm(v, axis=1)
        v = v / np.where(vn > 0, vn, 1.0)[:, None]
        s = np.zeros(len(up))
        multi = Mp > 1
        if np.any(multi):
            e = 1.0 / (Mp[multi] - 1)
            mean = np.minimum(1.0, 2.0 ** (-bits[pos][multi] * e))
            gam = np.array([math.gamma(1.0 + ei) for ei in e])
            s[multi] = np.minimum(1.0, mean * x[pos][multi] ** e / gam)
        out[pos] = norms[pos, None] * (np.sqrt(1.0 - s)[:, None] * up + np.sqrt(s)[:, None] * v)
    return out


def error_model_quantize(h, support, B: float, rng: RandomSource) -> np.ndarray:
    """Statistical stand-in for RVQ at any bit count.

    The estimate keeps ``||h_s||`` and the phase of ``h_s`` and leaves it at
    a chordal distance ``sin^2 = s`` with
    ``s = 2**(-B/(M-1)) X**(1/(M-1)) / Gamma(1 + 1/(M-1))``, ``X ~ Exp(1)``,
    clipped at 1, so that ``E[s] = 2**(-B/(M-1))``. ``B = 0`` returns an
    isotropic draw independent of ``h``.
    """
    h = np.asarray(h, dtype=complex).ravel()
    idx = _support_index(h, support)
    if B < 0:
        raise ValueError("B must be nonnegative")
    mask = np.zeros(h.size, dtype=bool)
    mask[idx] = True
    row = np.where(mask, h, 0.0)[None, :]
    return _error_model_rows(row, mask[None, :], np.array([B]), as_generator(rng))[0]


def _uniform_midrise(v, half_range, bits):
    bits = np.asarray(bits)
    levels = np.power(2.0, bits)
    step = 2.0 * half_range / levels
    k = np.floor((v + half_range) / step)
    k = np.clip(k, 0, levels - 1)
    q = -half_range + (k + 0.5) * step
    return np.where(bits > 0, q, 0.0)


def scalar_quantize(x, sigma, B, clip_sigmas: float = 4.0):
    """Uniform mid-rise scalar quantization of a complex coefficient.

    The real part gets ``ceil(B/2)`` bits and the imaginary part
    ``floor(B/2)``, each on ``[-c sigma/sqrt2, c sigma/sqrt2]`` with
    saturation outside. ``B = 0`` gives 0, the prior mean. Works
    elementwise on arrays.
    """
    x = np.asarray(x, dtype=complex)
    sigma = np.asarray(sigma, dtype=float)
    B = np.asarray(B)
    if np.any(B < 0):
        raise ValueError("B must be nonnegative")
    if np.any(sigma <= 0):
        raise ValueError("sigma must be > 0")
    half = clip_sigmas * sigma / np.sqrt(2.0)
    b_re = (B + 1) // 2
    b_im = B // 2
    out = _uniform_midrise(x.real, half, b_re) + 1j * _uniform_midrise(x.imag, half, b_im)
    if out.ndim == 0:
        return complex(out)
    return out


def build_local_estimate(H, j: int, alloc, spec: QuantizerSpec, rng: RandomSource, *,
                         model: str, mu: float) -> LocalEstimate:
    """Quantize every channel row as seen by TX ``j``.

    Per-vector allocations quantize row ``i`` on its model support with
    ``alloc.bits[j, i]`` bits, by RVQ when ``spec.kind == "rvq"`` and the
    count fits ``spec.rvq_max_bits``, otherwise by the error model.
    Per-coefficient allocations quantize each support coefficient with
    :func:`scalar_quantize` given its known standard deviation; a
    coefficient with no bits is replaced by an independent draw from its
    prior so the estimate stays generically invertible.
    """
    H = np.asarray(H, dtype=complex)
    K = H.shape[0]
    if not 0 <= j < K:
        raise IndexError(f"TX index {j} out of range for K={K}")
    gen = as_generator(rng)
    mask = support_mask(model, K)

    if alloc.granularity == "per_vector":
        if spec.kind == "scalar":
            raise ValueError("scalar quantization needs a per-coefficient allocation")
        bits = np.asarray(alloc.bits[j])
        est = np.zeros_like(H)
        use_rvq = (spec.kind == "rvq") & (bits <= spec.rvq_max_bits)
        for i in np.flatnonzero(use_rvq):
            est[i] = rvq_quantize(H[i], mask[i], int(bits[i]), gen)
        rest = np.flatnonzero(~use_rvq)
        if rest.size:
            est[rest] = _error_model_rows(H[rest] * mask[rest], mask[rest], bits[rest], gen)
    elif alloc.granularity == "per_coefficient":
        bits = np.asarray(alloc.bits[j])
        std = entry_std(model, K, mu)
        funded = mask & (bits > 0)
        est = np.zeros_like(H)
        est[funded] = scalar_quantize(H[funded], std[funded], bits[funded],
                                      spec.scalar_clip_sigmas)
        blind = mask & ~funded
        est[blind] = std[blind] * crandn(gen, int(blind.sum()))
    else:
        raise ValueError(f"unknown allocation granularity {alloc.granularity!r}")
    return LocalEstimate(tx_index=j, matrix=est, bits_used=np.array(alloc.bits[j]))
