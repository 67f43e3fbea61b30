"""Bit-level codec: support ranking, QAM mapping, and soft demapping.

A payload of ``b`` bits splits into two segments: the first ``b_I`` bits
select which K of the N positions are active (combinatorial number system,
lexicographic order), and the remaining ``b_S`` bits pick the K QAM values.
The receiver inverts both, using per-bit log-likelihood ratios for the
value segment.

Bit-to-integer convention throughout: big-endian, first bit is the most
significant.  This is load-bearing for interoperability and is exercised
by the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Soft values are clamped here to keep the zero-noise limit finite.
LLR_CLAMP = 50.0


class IllegalSupportError(Exception):
    """A decoded support whose rank has no payload preimage (rank >= 2^b_I)."""


@dataclass(frozen=True)
class CodeParams:
    """Full parameter tuple of one code configuration.

    Attributes
    ----------
    n : int
        Sparse-vector length (number of candidate positions).
    k : int
        Sparsity, the number of active positions.
    m : int
        Spread / transmission block length in symbols.
    m_mod : int
        QAM order (4 or 16 in v1).
    r : float
        Nominal sparsity factor of the codebook, in (0, 1].
    d : int
        Non-zeros per codeword column, ``round_half_up(r * m)``.
    l_cp : int
        Cyclic-prefix length in samples.
    b_i, b_s, b : int
        Derived bit budgets: index bits, symbol bits, and their sum.
    """

    n: int
    k: int
    m: int
    m_mod: int
    r: float
    d: int
    l_cp: int
    b_i: int
    b_s: int
    b: int

    @property
    def r_effective(self) -> float:
        """The sparsity factor actually realized after rounding, D/M."""
        return self.d / self.m

    @staticmethod
    def create(n: int, k: int, m: int, m_mod: int = 4, r: float = 1.0,
               l_cp: int = 3) -> "CodeParams":
        """Validate and derive a full parameter set."""
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= K <= N, got K={k}, N={n}")
        if m < 1:
            raise ValueError(f"need M >= 1, got {m}")
        if m_mod not in (4, 16):
            raise ValueError(f"modulation order must be 4 or 16, got {m_mod}")
        if not 0.0 < r <= 1.0:
            raise ValueError(f"sparsity factor must be in (0, 1], got {r}")
        if l_cp < 0:
            raise ValueError(f"cyclic prefix length must be >= 0, got {l_cp}")
        # Half-up rounding so D is deterministic when r*m lands on .5
        # (r=0.5, M=117 gives D=59).
        d = min(m, max(1, math.floor(r * m + 0.5)))
        b_i, b_s, b = compute_bit_budget(n, k, m_mod)
        return CodeParams(n=n, k=k, m=m, m_mod=m_mod, r=r, d=d, l_cp=l_cp,
                          b_i=b_i, b_s=b_s, b=b)


@dataclass(frozen=True)
class SparseMessage:
    """A sparse message in factored form: active positions plus their values."""

    support: tuple[int, ...]
    values: np.ndarray  # complex, one unit-energy symbol per support index


def compute_bit_budget(n: int, k: int, m_mod: int) -> tuple[int, int, int]:
    """Exact bit budgets (b_I, b_S, b) for an (N, K, M_mod) configuration.

    b_I is the floor of log2 of the binomial coefficient C(N, K), computed
    with exact integer arithmetic; b_S is K bits-per-symbol.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= K <= N, got K={k}, N={n}")
    q = m_mod.bit_length() - 1
    if m_mod != 1 << q or q < 1:
        raise ValueError(f"modulation order must be a power of two >= 2, got {m_mod}")
    b_i = math.comb(n, k).bit_length() - 1
    b_s = k * q
    return b_i, b_s, b_i + b_s


@lru_cache(maxsize=None)
def _comb(n: int, k: int) -> int:
    return math.comb(n, k)


def rank_to_support(rank: int, n: int, k: int) -> tuple[int, ...]:
    """Unrank: map an integer to the K-subset of [0, N) at that lexicographic rank.

    Bijective from [0, 2^b_I) onto the first 2^b_I subsets; exact inverse of
    :func:`support_to_rank`.
    """
    b_i = math.comb(n, k).bit_length() - 1
    if not 0 <= rank < (1 << b_i):
        raise ValueError(f"rank {rank} outside [0, 2^{b_i})")
    support = []
    r = rank
    v = 0
    for i in range(k):
        while True:
            count = _comb(n - 1 - v, k - 1 - i)
            if r < count:
                break
            r -= count
            v += 1
        support.append(v)
        v += 1
    return tuple(support)


def support_to_rank(support: tuple[int, ...], n: int, k: int) -> int:
    """Rank: lexicographic index of a K-subset of [0, N).

    Returns the exact rank for any valid support, including ranks at or
    above 2^b_I; callers decoding a packet must treat those as illegal
    (see :func:`decode_message`).
    """
    if len(support) != k:
        raise ValueError(f"support size {len(support)} != K={k}")
    prev = -1
    rank = 0
    for i, c in enumerate(support):
        c = int(c)
        if c <= prev or c >= n:
            raise ValueError(f"support must be strictly increasing in [0, {n}): {support}")
        for v in range(prev + 1, c):
            rank += _comb(n - 1 - v, k - 1 - i)
        prev = c
    return rank


@lru_cache(maxsize=None)
def constellation(m_mod: int) -> np.ndarray:
    """Gray-labeled unit-average-energy constellation, indexed by bit label.

    QPSK: label bits (b1, b0) map to ((1 - 2*b1) + 1j*(1 - 2*b0)) / sqrt(2).
    16-QAM: two bits per axis with reflected Gray levels
    (00, 01, 11, 10) -> (+3, +1, -1, -3), scaled by 1/sqrt(10); the first
    two label bits drive the real axis.
    """
    if m_mod == 4:
        levels = np.array([1.0, -1.0])  # per-axis, 1 bit: 0 -> +1, 1 -> -1
        bits_per_axis = 1
        scale = 1.0 / np.sqrt(2.0)
    elif m_mod == 16:
        levels = np.array([3.0, 1.0, -1.0, -3.0])  # Gray order 00,01,11,10
        bits_per_axis = 2
        scale = 1.0 / np.sqrt(10.0)
    else:
        raise ValueError(f"unsupported modulation order {m_mod}")
    gray = np.arange(len(levels)) ^ (np.arange(len(levels)) >> 1)
    level_of_bits = np.empty(len(levels))
    level_of_bits[gray] = levels
    points = np.empty(m_mod, dtype=np.complex128)
    axis_mask = (1 << bits_per_axis) - 1
    for label in range(m_mod):
        re = level_of_bits[(label >> bits_per_axis) & axis_mask]
        im = level_of_bits[label & axis_mask]
        points[label] = (re + 1j * im) * scale
    return points


def bits_to_int(bits: np.ndarray) -> int:
    """Big-endian bits to integer (first bit most significant)."""
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def int_to_bits(value: int, width: int) -> np.ndarray:
    """Integer to big-endian bit array of fixed width."""
    if value < 0 or value >> width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)],
                    dtype=np.uint8)


def qam_modulate(bits: np.ndarray, m_mod: int) -> np.ndarray:
    """Map a bit array onto Gray-QAM symbols, log2(m_mod) bits per symbol."""
    bits = np.asarray(bits, dtype=np.uint8)
    q = m_mod.bit_length() - 1
    if bits.ndim != 1 or bits.size % q != 0:
        raise ValueError(f"bit count {bits.size} not a multiple of {q}")
    points = constellation(m_mod)
    labels = bits.reshape(-1, q) @ (1 << np.arange(q - 1, -1, -1))
    return points[labels]


def llr_demodulate(est: np.ndarray | complex, noise_var: float | np.ndarray,
                   m_mod: int) -> np.ndarray:
    """Per-bit LLRs for one or more symbol estimates.

    For each bit position m,

        LLR_m = log( sum_{a: bit m = 1} exp(-|est - a|^2 / noise_var)
                   / sum_{a: bit m = 0} exp(-|est - a|^2 / noise_var) )

    computed stably in the log domain and clamped to +/-50.  Each estimate
    informs only its own symbol's bits.  A positive LLR means bit = 1 under
    the hard rule of :func:`hard_decide`.

    Parameters
    ----------
    est : complex or ndarray
        Symbol estimate(s).
    noise_var : float or ndarray
        Effective per-symbol noise variance(s), > 0; broadcast against est.
    m_mod : int
        Constellation order.

    Returns
    -------
    ndarray
        Shape (q,) for a scalar estimate, else (len(est), q).
    """
    scalar = np.isscalar(est) or np.asarray(est).ndim == 0
    est_arr = np.atleast_1d(np.asarray(est, dtype=np.complex128))
    nv = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), est_arr.shape)
    if np.any(nv <= 0):
        raise ValueError("noise variance must be > 0")
    points = constellation(m_mod)
    q = m_mod.bit_length() - 1
    # log-kernel per (estimate, alphabet point)
    logw = -np.abs(est_arr[:, None] - points[None, :]) ** 2 / nv[:, None]
    labels = np.arange(m_mod)
    llrs = np.empty((est_arr.size, q))
    for j in range(q):
        bit = (labels >> (q - 1 - j)) & 1
        llrs[:, j] = _logsumexp(logw[:, bit == 1]) - _logsumexp(logw[:, bit == 0])
    llrs = np.clip(llrs, -LLR_CLAMP, LLR_CLAMP)
    return llrs[0] if scalar else llrs


def _logsumexp(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp; returns -inf rows untouched (no NaN)."""
    peak = a.max(axis=1)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def hard_decide(llrs: np.ndarray) -> np.ndarray:
    """Hard bits from LLRs: 1 where the LLR is >= 0, else 0."""
    return (np.asarray(llrs) >= 0).astype(np.uint8)


def encode_message(payload: np.ndarray, params: CodeParams) -> SparseMessage:
    """Map a b-bit payload to a sparse message.

    The first b_I bits (big-endian) select the support; the remaining b_S
    bits become K QAM symbols assigned to the support positions in
    ascending index order.
    """
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape != (params.b,):
        raise ValueError(f"payload must be {params.b} bits, got {payload.shape}")
    rank = bits_to_int(payload[:params.b_i])
    support = rank_to_support(rank, params.n, params.k)
    values = qam_modulate(payload[params.b_i:], params.m_mod)
    return SparseMessage(support=support, values=values)


def decode_message(support: tuple[int, ...], values: np.ndarray,
                   noise_var: float | np.ndarray, params: CodeParams) -> np.ndarray:
    """Recover the b payload bits from a decoded support and value estimates.

    Raises
    ------
    IllegalSupportError
        If the support's rank is >= 2^b_I (no payload maps there); callers
        count the packet as a block error.
    """
    rank = support_to_rank(support, params.n, params.k)
    if rank >> params.b_i:
        raise IllegalSupportError(f"support rank {rank} >= 2^{params.b_i}")
    bits_i = int_to_bits(rank, params.b_i)
    llrs = llr_demodulate(np.asarray(values), noise_var, params.m_mod)
    bits_s = hard_decide(llrs).reshape(-1)
    return np.concatenate([bits_i, bits_s])
