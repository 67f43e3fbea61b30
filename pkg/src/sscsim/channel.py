"""OFDM-style block transmission over a circulant Rayleigh multipath channel.

One transmitted block goes: unitary IDFT, cyclic prefix, linear convolution
with the channel taps, CP removal, unitary DFT, additive noise.  Because the
prefix makes the channel act circulantly over the block, the whole chain
collapses to a per-bin multiplication by the channel's frequency response,
which is the fast path used in Monte Carlo runs; the literal time-domain
chain is kept for cross-checking.

SNR convention: unit average signal energy per used sample and unit total
channel power, so noise variance is 10^(-SNR_dB / 10).  This is recorded in
every output file, since error-rate curves are meaningless without it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import SparseCodebook, SparseColumns
from .numerics import RandomStream, dft, draw_gaussian


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw: time-domain taps plus their M-point spectrum.

    ``eigenvalues[i] = sum_l taps[l] * exp(-2j*pi*i*l / M)`` are the
    eigenvalues of the circulant time-domain channel matrix.
    """

    taps: np.ndarray         # (l_ch,) complex
    eigenvalues: np.ndarray  # (m,) complex
    master_seed: int = 0
    stream_id: int = 0

    @property
    def l_ch(self) -> int:
        return self.taps.size

    @property
    def m(self) -> int:
        return self.eigenvalues.size

    @staticmethod
    def from_taps(taps: np.ndarray, m: int, master_seed: int = 0,
                  stream_id: int = 0) -> "ChannelRealization":
        taps = np.asarray(taps, dtype=np.complex128)
        if not 1 <= taps.size <= m:
            raise ValueError(f"need 1 <= L_ch <= M, got L_ch={taps.size}, M={m}")
        return ChannelRealization(taps=taps, eigenvalues=np.fft.fft(taps, n=m),
                                  master_seed=master_seed, stream_id=stream_id)

    @staticmethod
    def identity(m: int) -> "ChannelRealization":
        """Single unit tap: the channel passes blocks through unchanged."""
        return ChannelRealization.from_taps(np.array([1.0 + 0.0j]), m)


@dataclass(frozen=True)
class ReceivedBlock:
    """Received length-M frequency-domain block plus its noise level."""

    y: np.ndarray
    noise_var: float
    channel: ChannelRealization


def draw_channel(l_ch: int, m: int, stream: RandomStream) -> ChannelRealization:
    """Draw i.i.d. Rayleigh taps with a uniform power-delay profile.

    Each tap is circular complex Gaussian with variance 1/L_ch, so the
    average total channel power is one.
    """
    if not 1 <= l_ch <= m:
        raise ValueError(f"need 1 <= L_ch <= M, got L_ch={l_ch}, M={m}")
    taps = draw_gaussian(stream, l_ch, 1.0 / l_ch)
    return ChannelRealization.from_taps(taps, m, master_seed=stream.master_seed,
                                        stream_id=stream.stream_id)


def transmit_time_domain(x: np.ndarray, ch: ChannelRealization, noise_var: float,
                         stream: RandomStream, l_cp: int) -> ReceivedBlock:
    """Literal transmit chain: IDFT, CP, tap convolution, CP removal, DFT, noise.

    Raises if the prefix is shorter than the channel memory rather than
    silently producing inter-symbol interference.
    """
    x = np.asarray(x, dtype=np.complex128)
    m = x.size
    if ch.m != m:
        raise ValueError(f"channel built for M={ch.m}, block has M={m}")
    if l_cp < ch.l_ch - 1:
        raise ValueError(f"cyclic prefix {l_cp} shorter than channel memory "
                         f"{ch.l_ch - 1}")
    x_t = dft(x, inverse=True)
    with_cp = np.concatenate([x_t[m - l_cp:], x_t]) if l_cp > 0 else x_t
    convolved = np.convolve(with_cp, ch.taps)
    kept = convolved[l_cp:l_cp + m]
    y = dft(kept) + draw_gaussian(stream, m, noise_var)
    return ReceivedBlock(y=y, noise_var=noise_var, channel=ch)


def transmit_frequency_domain(x: np.ndarray, ch: ChannelRealization, noise_var: float,
                              stream: RandomStream) -> ReceivedBlock:
    """Fast path via circulant diagonalization: y = eigenvalues * x + noise.

    With the same noise stream this matches :func:`transmit_time_domain`
    to within 1e-10.
    """
    x = np.asarray(x, dtype=np.complex128)
    if ch.m != x.size:
        raise ValueError(f"channel built for M={ch.m}, block has M={x.size}")
    y = ch.eigenvalues * x + draw_gaussian(stream, x.size, noise_var)
    return ReceivedBlock(y=y, noise_var=noise_var, channel=ch)


def effective_matrix(ch: ChannelRealization, codebook: SparseCodebook) -> SparseColumns:
    """Receiver-side measurement matrix: the codebook with each row i scaled
    by the channel's i-th frequency-domain eigenvalue.

    The sparsity pattern of the codebook is preserved exactly, which is what
    the decoder's sparse kernels rely on.
    """
    if ch.m != codebook.m:
        raise ValueError(f"channel M={ch.m} != codebook M={codebook.m}")
    vals = ch.eigenvalues[codebook.rows] * codebook.vals
    return SparseColumns(m=codebook.m, rows=codebook.rows, vals=vals)


def snr_to_noise_var(snr_db: float) -> float:
    """Noise variance for an SNR in dB under the unit-energy convention."""
    return float(10.0 ** (-snr_db / 10.0))
