"""Codebook generation, sparsification, spreading, and on-disk container.

A dense codebook is an M x N matrix of equiprobable +/- sqrt(1/K) entries.
Its sparse counterpart keeps only D rows per column (chosen uniformly
without replacement) and rescales the survivors by sqrt(M/D), so every
column carries squared norm M/K in both variants.  That energy match is
what makes error-rate comparisons across sparsity factors fair.

Sparse storage is column-major: ``rows[k]`` holds the D sorted row indices
of column k and ``vals[k]`` the matching signed entries.  The same layout
carries the receiver-side measurement matrix (complex values).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .codec import CodeParams, SparseMessage
from .numerics import RNG_NAME, RandomStream

_MAGIC = b"SSCB"
_VERSION = 1
_KIND_DENSE = 0
_KIND_SPARSE = 1


class CodebookFormatError(ValueError):
    """Raised when a serialized codebook container is invalid or truncated."""


class MacCounter:
    """Running multiply-accumulate tally, the platform-independent cost metric."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


@dataclass(frozen=True)
class SparseColumns:
    """Column-sparse M x N matrix: D sorted row indices plus values per column."""

    m: int
    rows: np.ndarray  # (n, d) int32, sorted along axis 1
    vals: np.ndarray  # (n, d) float64 or complex128

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def densify(self) -> np.ndarray:
        """Materialize the full M x N matrix (tests and oracles only)."""
        dense = np.zeros((self.m, self.n), dtype=self.vals.dtype)
        for k in range(self.n):
            dense[self.rows[k], k] = self.vals[k]
        return dense


@dataclass(frozen=True)
class DenseCodebook:
    """Dense Bernoulli codebook: M x N entries, all +/- sqrt(1/K)."""

    k: int
    matrix: np.ndarray  # (m, n) float64
    master_seed: int = 0
    stream_id: int = 0

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SparseCodebook:
    """Sparse codebook: per-column index sets and +/- sqrt(1/(K*R)) values.

    ``r_nominal`` is the requested sparsity factor; the realized factor is
    ``d / m`` and is what the value scaling uses, so column energy is M/K
    exactly even when r*m needed rounding.
    """

    k: int
    r_nominal: float
    columns: SparseColumns
    master_seed: int = 0
    signs_stream_id: int = 0
    sampling_stream_id: int = 0

    @property
    def m(self) -> int:
        return self.columns.m

    @property
    def n(self) -> int:
        return self.columns.n

    @property
    def d(self) -> int:
        return self.columns.d

    @property
    def r_effective(self) -> float:
        return self.d / self.m

    @property
    def rows(self) -> np.ndarray:
        return self.columns.rows

    @property
    def vals(self) -> np.ndarray:
        return self.columns.vals

    def densify(self) -> np.ndarray:
        return self.columns.densify()


def generate_dense(params: CodeParams, stream: RandomStream) -> DenseCodebook:
    """Draw an M x N dense codebook of i.i.d. equiprobable +/- sqrt(1/K) signs."""
    rng = stream.generator()
    signs = 2.0 * rng.integers(0, 2, size=(params.m, params.n)) - 1.0
    return DenseCodebook(k=params.k, matrix=signs * math.sqrt(1.0 / params.k),
                         master_seed=stream.master_seed, stream_id=stream.stream_id)


def generate_sampling_matrix(m: int, n: int, d: int, stream: RandomStream) -> np.ndarray:
    """Per-column uniform D-subsets of rows, returned sorted, shape (n, d).

    Each column independently keeps D distinct rows chosen uniformly without
    replacement (the first D entries of a uniform random permutation).
    """
    if not 1 <= d <= m:
        raise ValueError(f"need 1 <= D <= M, got D={d}, M={m}")
    rng = stream.generator()
    scores = rng.random((m, n))
    picks = np.argsort(scores, axis=0, kind="stable")[:d]  # (d, n)
    return np.sort(picks.T.astype(np.int32), axis=1)


def sparsify(dense: DenseCodebook, sampling: np.ndarray, r: float) -> SparseCodebook:
    """Sample a dense codebook down to D rows per column, rescaled by sqrt(M/D).

    ``r`` is the nominal sparsity factor and must round to the sampling
    weight D; the realized factor D/M drives the scaling so kept entries
    have magnitude sqrt(1/(K * D/M)) and columns keep squared norm M/K.
    """
    sampling = np.asarray(sampling, dtype=np.int32)
    if sampling.ndim != 2 or sampling.shape[0] != dense.n:
        raise ValueError(f"sampling shape {sampling.shape} does not match N={dense.n}")
    d = sampling.shape[1]
    if d > dense.m:
        raise ValueError(f"sampling weight D={d} exceeds M={dense.m}")
    if min(dense.m, max(1, math.floor(r * dense.m + 0.5))) != d:
        raise ValueError(f"nominal R={r} does not round to D={d} at M={dense.m}")
    scale = math.sqrt(dense.m / d)
    vals = dense.matrix[sampling, np.arange(dense.n)[:, None]] * scale
    cols = SparseColumns(m=dense.m, rows=sampling, vals=vals)
    return SparseCodebook(k=dense.k, r_nominal=r, columns=cols,
                          master_seed=dense.master_seed,
                          signs_stream_id=dense.stream_id)


def build_codebook(params: CodeParams, signs_stream: RandomStream,
                   sampling_stream: RandomStream) -> SparseCodebook:
    """Generate the sparse codebook for a parameter set (D = M gives dense).

    Transmitter and receiver regenerate the identical codebook from the
    shared seed metadata.
    """
    dense = generate_dense(params, signs_stream)
    sampling = generate_sampling_matrix(params.m, params.n, params.d, sampling_stream)
    sparse = sparsify(dense, sampling, params.r)
    return SparseCodebook(k=sparse.k, r_nominal=sparse.r_nominal, columns=sparse.columns,
                          master_seed=signs_stream.master_seed,
                          signs_stream_id=signs_stream.stream_id,
                          sampling_stream_id=sampling_stream.stream_id)


def spread(codebook: DenseCodebook | SparseCodebook, msg: SparseMessage,
           macs: MacCounter | None = None) -> np.ndarray:
    """Spread a sparse message into the length-M transmit block, x = sum_k a_k s_k.

    The sparse path touches only K*D matrix entries; at D = M it matches the
    dense matrix-vector product exactly.
    """
    support = np.asarray(msg.support, dtype=np.intp)
    if support.size and (support.min() < 0 or support.max() >= codebook.n):
        raise IndexError(f"support {msg.support} out of range for N={codebook.n}")
    x = np.zeros(codebook.m, dtype=np.complex128)
    if isinstance(codebook, DenseCodebook):
        for pos, val in zip(support, msg.values):
            x += codebook.matrix[:, pos] * val
            if macs is not None:
                macs.add(codebook.m)
    else:
        for pos, val in zip(support, msg.values):
            x[codebook.rows[pos]] += codebook.vals[pos] * val
            if macs is not None:
                macs.add(codebook.d)
    return x


def _header_bytes(cb: DenseCodebook | SparseCodebook, body: bytes) -> bytes:
    if isinstance(cb, DenseCodebook):
        meta = {"kind": "dense", "m": cb.m, "n": cb.n, "k": cb.k,
                "master_seed": cb.master_seed, "signs_stream_id": cb.stream_id}
    else:
        meta = {"kind": "sparse", "m": cb.m, "n": cb.n, "k": cb.k, "d": cb.d,
                "r_nominal": cb.r_nominal, "master_seed": cb.master_seed,
                "signs_stream_id": cb.signs_stream_id,
                "sampling_stream_id": cb.sampling_stream_id}
    meta["rng"] = RNG_NAME
    meta["body_sha256"] = hashlib.sha256(body).hexdigest()
    return json.dumps(meta, sort_keys=True).encode()


def serialize_codebook(cb: DenseCodebook | SparseCodebook) -> bytes:
    """Pack a codebook into a self-describing binary container.

    Layout: magic "SSCB", version byte, kind byte, 4-byte little-endian
    header length, JSON header (dims, seeds, rng name, body checksum),
    then the raw little-endian array payload.
    """
    if isinstance(cb, DenseCodebook):
        kind = _KIND_DENSE
        body = cb.matrix.astype("<f8").tobytes()
    else:
        kind = _KIND_SPARSE
        body = cb.rows.astype("<i4").tobytes() + cb.vals.astype("<f8").tobytes()
    header = _header_bytes(cb, body)
    return (_MAGIC + bytes([_VERSION, kind])
            + len(header).to_bytes(4, "little") + header + body)


def deserialize_codebook(blob: bytes) -> DenseCodebook | SparseCodebook:
    """Inverse of :func:`serialize_codebook`; all-or-nothing.

    Raises :class:`CodebookFormatError` on bad magic, version, shape, length,
    or checksum; never returns a partially-reconstructed object.
    """
    if len(blob) < 10 or blob[:4] != _MAGIC:
        raise CodebookFormatError("bad magic")
    if blob[4] != _VERSION:
        raise CodebookFormatError(f"unsupported version {blob[4]}")
    kind = blob[5]
    hlen = int.from_bytes(blob[6:10], "little")
    if len(blob) < 10 + hlen:
        raise CodebookFormatError("truncated header")
    try:
        meta = json.loads(blob[10:10 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CodebookFormatError(f"unreadable header: {exc}") from exc
    body = blob[10 + hlen:]
    m, n = int(meta["m"]), int(meta["n"])
    if kind == _KIND_DENSE:
        expected = m * n * 8
    elif kind == _KIND_SPARSE:
        d = int(meta["d"])
        expected = n * d * 4 + n * d * 8
    else:
        raise CodebookFormatError(f"unknown kind byte {kind}")
    if len(body) != expected:
        raise CodebookFormatError(f"body length {len(body)} != expected {expected}")
    if hashlib.sha256(body).hexdigest() != meta.get("body_sha256"):
        raise CodebookFormatError("checksum mismatch")
    if kind == _KIND_DENSE:
        matrix = np.frombuffer(body, dtype="<f8").reshape(m, n).astype(np.float64)
        return DenseCodebook(k=int(meta["k"]), matrix=matrix,
                             master_seed=int(meta["master_seed"]),
                             stream_id=int(meta["signs_stream_id"]))
    rows = np.frombuffer(body[:n * d * 4], dtype="<i4").reshape(n, d).astype(np.int32)
    vals = np.frombuffer(body[n * d * 4:], dtype="<f8").reshape(n, d).astype(np.float64)
    cols = SparseColumns(m=m, rows=rows, vals=vals)
    return SparseCodebook(k=int(meta["k"]), r_nominal=float(meta["r_nominal"]),
                          columns=cols, master_seed=int(meta["master_seed"]),
                          signs_stream_id=int(meta["signs_stream_id"]),
                          sampling_stream_id=int(meta["sampling_stream_id"]))
