"""Numerical substrate: unitary DFT, small Hermitian solves, seeded random streams.

Every stochastic operation in the package draws from a :class:`RandomStream`,
a thin wrapper over numpy's counter-based Philox generator keyed by
``(master_seed, stream_id)``.  Distinct stream ids give statistically
independent streams, and replaying a stream id always reproduces the same
draws, independent of anything drawn from other streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# RNG pinned for the whole package; recorded in output metadata.
RNG_NAME = "numpy-philox4x64"

# Maximum Gram dimension the solver accepts; sparsity K never exceeds this.
MAX_SOLVE_DIM = 16

# Condition-number threshold above which a candidate support is declared
# degenerate and pruned by the decoder.
DEGENERATE_COND = 1e12


class DegenerateSupportError(Exception):
    """Raised when a Gram matrix is singular or too ill-conditioned to solve."""


@dataclass(frozen=True)
class RandomStream:
    """A reproducible, splittable random stream.

    Parameters
    ----------
    master_seed : int
        Experiment-level seed shared by all streams of a run.
    stream_id : int
        Sub-stream selector, conventionally ``(purpose << 48) | index``
        (see :func:`derive_stream`).
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Return a fresh generator at the start of this stream.

        Each call restarts the stream, so two calls with the same state
        produce identical draw sequences.
        """
        key = (self.master_seed & _MASK64, self.stream_id & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def bits(self, n: int) -> np.ndarray:
        """Draw ``n`` uniform bits as a uint8 array."""
        if n < 0:
            raise ValueError(f"bit count must be >= 0, got {n}")
        return self.generator().integers(0, 2, size=n, dtype=np.uint8)


def derive_stream(master_seed: int, purpose: int, index: int = 0) -> RandomStream:
    """Build the stream for a (purpose, index) pair under one master seed.

    The stream id packs the purpose code into the top 16 bits and the index
    into the bottom 48, so distinct purposes and indices never collide.
    """
    if not 0 <= index < (1 << 48):
        raise ValueError(f"stream index out of range: {index}")
    if not 0 <= purpose < (1 << 16):
        raise ValueError(f"purpose code out of range: {purpose}")
    return RandomStream(master_seed, (purpose << 48) | index)


def dft(v: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary DFT (or inverse DFT) of a complex vector of any length.

    Forward followed by inverse returns the input, and the squared 2-norm
    is preserved (the transform matrix is unitary, scale 1/sqrt(M)).
    """
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("dft expects a non-empty 1-D vector")
    if inverse:
        return np.fft.ifft(v, norm="ortho")
    return np.fft.fft(v, norm="ortho")


def hermitian_solve(u: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve ``U z = c`` for a small Hermitian positive definite ``U``.

    Parameters
    ----------
    u : ndarray, shape (g, g)
        Hermitian positive definite matrix, g <= 16.
    c : ndarray, shape (g,)
        Right-hand side.

    Returns
    -------
    ndarray
        Solution ``z`` with residual ``||Uz - c|| <= 1e-10 * ||c||``.

    Raises
    ------
    DegenerateSupportError
        If the eigenvalue-based condition estimate exceeds 1e12 (or an
        eigenvalue is non-positive); callers prune the offending support.
    """
    u = np.asarray(u, dtype=np.complex128)
    c = np.asarray(c, dtype=np.complex128)
    g = u.shape[0]
    if u.shape != (g, g) or c.shape != (g,):
        raise ValueError(f"shape mismatch: U {u.shape}, c {c.shape}")
    if g > MAX_SOLVE_DIM:
        raise ValueError(f"solver limited to {MAX_SOLVE_DIM}x{MAX_SOLVE_DIM}, got {g}")
    w = np.linalg.eigvalsh(u)
    if w[0] <= 0.0 or w[-1] / w[0] > DEGENERATE_COND:
        raise DegenerateSupportError(f"condition estimate {w[-1] / max(w[0], 0.0):.3e}")
    z = np.linalg.solve(u, c)
    if not np.all(np.isfinite(z)):
        raise DegenerateSupportError("non-finite solution")
    return z


def draw_gaussian(stream: RandomStream, n: int, variance: float) -> np.ndarray:
    """Draw n i.i.d. circularly-symmetric complex Gaussians.

    Per-element variance is ``variance`` (real and imaginary parts carry
    ``variance / 2`` each).  Identical ``(master_seed, stream_id)`` give
    bit-identical vectors; ``variance = 0`` gives an exact zero vector.
    """
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if n < 0:
        raise ValueError(f"sample count must be >= 0, got {n}")
    z = stream.generator().standard_normal(2 * n)
    return (z[0::2] + 1j * z[1::2]) * np.sqrt(variance / 2.0)
