"""Support recovery: multipath matching pursuit over a column-sparse matrix.

The measurement matrix keeps the codebook's column sparsity (D non-zeros
per column), so the three kernels that dominate pursuit cost work on index
sets instead of full columns:

* correlation of a residual with every column touches N*D entries,
* the Gram matrix of a candidate support sums only over pairwise index-set
  intersections,
* the residual update scatters into K*D entries.

Each kernel is matched by a densified-matrix oracle in the tests, and a
MAC counter tallies exactly what is computed so the sparse-vs-dense cost
ratio can be read off directly.

Two reference decoders live alongside MMP: a plain OMP (the single-path
special case, kept as an independent implementation for cross-checks) and
an exhaustive minimum-residual search over all K-subsets for oracle tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .codebook import MacCounter, SparseColumns
from .numerics import DegenerateSupportError, hermitian_solve


class DecodeFailedError(Exception):
    """Every candidate path was pruned as degenerate; the packet is lost."""


@dataclass(frozen=True)
class MmpConfig:
    """Search width of the pursuit: child expansions per node and beam size."""

    k: int
    l: int = 2
    beam: int = 4

    def __post_init__(self) -> None:
        if self.k < 1 or self.l < 1 or self.beam < 1:
            raise ValueError(f"need k, l, beam >= 1, got {self}")


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of one decode.

    ``expanded`` counts candidate nodes that were actually evaluated
    (deduplicated children), ``pruned`` counts nodes discarded by the beam
    cut or as degenerate.  ``mac_count`` is the decoder's total
    multiply-accumulate tally; it is 0 for the exhaustive oracle.
    """

    support: tuple[int, ...]
    values: np.ndarray
    residual_norm: float
    expanded: int
    pruned: int
    mac_count: int


@dataclass
class PathNode:
    """One partial support path: selection order, cached Gram state, residual."""

    order: tuple[int, ...]
    gram: np.ndarray       # (g, g), laid out in selection order
    corr: np.ndarray       # (g,) correlation of y with the selected columns
    values: np.ndarray
    residual: np.ndarray
    residual_norm: float

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.order))


def correlate(phi: SparseColumns, r: np.ndarray,
              macs: MacCounter | None = None) -> np.ndarray:
    """Magnitude of the inner product of each column with r, length N.

    Column k touches only its D stored entries; total cost N*D MACs.
    """
    out = np.abs(np.sum(phi.vals.conj() * r[phi.rows], axis=1))
    if macs is not None:
        macs.add(phi.n * phi.d)
    return out


def _pair_dot(rows_a: np.ndarray, vals_a: np.ndarray,
              rows_b: np.ndarray, vals_b: np.ndarray) -> tuple[complex, int]:
    """sum over S_a intersect S_b of conj(vals_a) * vals_b, plus the hit count."""
    idx = np.searchsorted(rows_b, rows_a)
    idx_c = np.minimum(idx, rows_b.size - 1)
    hit = (idx < rows_b.size) & (rows_b[idx_c] == rows_a)
    if not hit.any():
        return 0.0 + 0.0j, 0
    return complex(np.sum(vals_a[hit].conj() * vals_b[idx_c[hit]])), int(hit.sum())


def sparse_gram(phi: SparseColumns, support: tuple[int, ...],
                macs: MacCounter | None = None) -> np.ndarray:
    """Hermitian Gram matrix of the selected columns via index-set intersections.

    Entry (a, b) sums conj(phi[i, a]) * phi[i, b] over i in the intersection
    of the two columns' index sets; disjoint sets give exact zeros.  The MAC
    tally is the ordered-pair intersection total, sum_{a,b} |S_a ∩ S_b|.
    """
    g = len(support)
    u = np.zeros((g, g), dtype=np.complex128)
    total = 0
    for a in range(g):
        va = phi.vals[support[a]]
        u[a, a] = np.sum(va.conj() * va).real
        total += va.size
        for b in range(a + 1, g):
            value, hits = _pair_dot(phi.rows[support[a]], va,
                                    phi.rows[support[b]], phi.vals[support[b]])
            u[a, b] = value
            u[b, a] = np.conj(value)
            total += 2 * hits
    if macs is not None:
        macs.add(total)
    return u


def _support_correlation(phi: SparseColumns, support: tuple[int, ...],
                         y: np.ndarray, macs: MacCounter | None = None) -> np.ndarray:
    """Complex correlations conj(phi_B)^T y restricted to the support columns."""
    sel = np.asarray(support, dtype=np.intp)
    out = np.sum(phi.vals[sel].conj() * y[phi.rows[sel]], axis=1)
    if macs is not None:
        macs.add(len(support) * phi.d)
    return out


def ls_estimate(phi: SparseColumns, support: tuple[int, ...], y: np.ndarray,
                macs: MacCounter | None = None) -> np.ndarray:
    """Least-squares values on a candidate support via sparse normal equations.

    Solves U s = c with U the sparse Gram and c the sparse correlation
    vector; the residual y - phi_B s is then orthogonal to the selected
    columns.  Degenerate supports raise and are pruned by the caller.
    """
    u = sparse_gram(phi, support, macs)
    c = _support_correlation(phi, support, y, macs)
    if macs is not None:
        macs.add(len(support) ** 3)
    return hermitian_solve(u, c)


def residual_update(y: np.ndarray, phi: SparseColumns, support: tuple[int, ...],
                    values: np.ndarray, macs: MacCounter | None = None) -> np.ndarray:
    """r = y - phi_B values, accumulating only the supports' stored entries."""
    r = y.astype(np.complex128, copy=True)
    for pos, val in zip(support, values):
        r[phi.rows[pos]] -= phi.vals[pos] * val
    if macs is not None:
        macs.add(len(support) * phi.d)
    return r


def _extend_path(path: PathNode, new_idx: int, phi: SparseColumns, y: np.ndarray,
                 macs: MacCounter) -> PathNode:
    """Child of a path: Gram and correlation grown by one column, fresh LS fit.

    The extended Gram reuses the parent's entries, so only the new column's
    intersections are computed; the resulting system is identical to the one
    :func:`ls_estimate` would assemble from scratch.
    """
    g = len(path.order)
    rows_new = phi.rows[new_idx]
    vals_new = phi.vals[new_idx]
    u = np.empty((g + 1, g + 1), dtype=np.complex128)
    u[:g, :g] = path.gram
    total = rows_new.size
    for a, pos in enumerate(path.order):
        value, hits = _pair_dot(phi.rows[pos], phi.vals[pos], rows_new, vals_new)
        u[a, g] = value
        u[g, a] = np.conj(value)
        total += 2 * hits
    u[g, g] = np.sum(vals_new.conj() * vals_new).real
    c = np.empty(g + 1, dtype=np.complex128)
    c[:g] = path.corr
    c[g] = np.sum(vals_new.conj() * y[rows_new])
    macs.add(total + rows_new.size + (g + 1) ** 3)
    order = path.order + (new_idx,)
    values = hermitian_solve(u, c)
    residual = residual_update(y, phi, order, values, macs)
    return PathNode(order=order, gram=u, corr=c, values=values,
                    residual=residual, residual_norm=float(np.linalg.norm(residual)))


def mmp_decode(y: np.ndarray, phi: SparseColumns, cfg: MmpConfig) -> DecodeResult:
    """Breadth-first multipath matching pursuit to depth K.

    At each depth every surviving path proposes its ``l`` best unused
    columns by residual correlation; children that reach the same support
    merge; each unique child gets a least-squares fit and a residual
    update, and the ``beam`` children with the smallest residual norms
    survive.  The depth-K path with the minimum residual norm wins.

    Fully deterministic: correlation ties pick the lowest column index and
    residual-norm ties pick the lexicographically smallest support.

    Raises
    ------
    DecodeFailedError
        If every candidate path was pruned as degenerate.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (phi.m,):
        raise ValueError(f"y has shape {y.shape}, expected ({phi.m},)")
    if cfg.k > phi.n:
        raise ValueError(f"sparsity {cfg.k} exceeds column count {phi.n}")
    macs = MacCounter()
    root = PathNode(order=(), gram=np.zeros((0, 0), dtype=np.complex128),
                    corr=np.zeros(0, dtype=np.complex128),
                    values=np.zeros(0, dtype=np.complex128),
                    residual=y, residual_norm=float(np.linalg.norm(y)))
    paths = [root]
    expanded = 0
    pruned = 0
    for _ in range(cfg.k):
        proposals: dict[tuple[int, ...], tuple[PathNode, int]] = {}
        for path in paths:
            mags = correlate(phi, path.residual, macs)
            if path.order:
                mags[list(path.order)] = -1.0
            ranked = np.argsort(-mags, kind="stable")
            picked = 0
            for idx in ranked:
                if picked == cfg.l:
                    break
                if mags[idx] < 0:
                    break
                key = tuple(sorted(path.order + (int(idx),)))
                proposals.setdefault(key, (path, int(idx)))
                picked += 1
        survivors = []
        for parent, idx in proposals.values():
            try:
                survivors.append(_extend_path(parent, idx, phi, y, macs))
            except DegenerateSupportError:
                pruned += 1
        expanded += len(survivors)
        if not survivors:
            raise DecodeFailedError(
                f"all paths degenerate at depth {len(paths[0].order) + 1}")
        survivors.sort(key=lambda p: (p.residual_norm, p.support))
        pruned += max(0, len(survivors) - cfg.beam)
        paths = survivors[:cfg.beam]
    best = paths[0]
    perm = np.argsort(best.order)
    return DecodeResult(support=best.support, values=best.values[perm],
                        residual_norm=best.residual_norm,
                        expanded=expanded, pruned=pruned, mac_count=macs.count)


def omp_decode(y: np.ndarray, phi: SparseColumns, k: int) -> DecodeResult:
    """Plain orthogonal matching pursuit, kept independent of the MMP code.

    Greedy single path on the densified matrix; selects the best-correlated
    unused column K times with a full least-squares refit each round.
    Matches ``mmp_decode`` with l = 1, beam = 1 on the same input.
    """
    y = np.asarray(y, dtype=np.complex128)
    dense = phi.densify()
    macs = MacCounter()
    support: list[int] = []
    values = np.zeros(0, dtype=np.complex128)
    residual = y
    for _ in range(k):
        corr = np.abs(dense.conj().T @ residual)
        macs.add(phi.m * phi.n)
        if support:
            corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        support.sort()
        cols = dense[:, support]
        gram = cols.conj().T @ cols
        rhs = cols.conj().T @ y
        macs.add(len(support) ** 2 * phi.m + len(support) * phi.m)
        try:
            values = hermitian_solve(gram, rhs)
        except DegenerateSupportError as exc:
            raise DecodeFailedError(str(exc)) from exc
        macs.add(len(support) ** 3)
        residual = y - cols @ values
        macs.add(len(support) * phi.m)
    return DecodeResult(support=tuple(support), values=values,
                        residual_norm=float(np.linalg.norm(residual)),
                        expanded=k, pruned=0, mac_count=macs.count)


def ml_decode_exhaustive(y: np.ndarray, phi: SparseColumns, k: int,
                         max_supports: int = 1_000_000) -> DecodeResult:
    """Exact minimum-residual support over every K-subset (test scale only).

    Brute-force oracle: densifies the matrix and solves a least-squares fit
    per subset, so it is limited to C(N, K) <= ``max_supports``.  Ties go to
    the lexicographically smallest support.
    """
    total = math.comb(phi.n, k)
    if total > max_supports:
        raise ValueError(f"C({phi.n},{k}) = {total} exceeds {max_supports}")
    y = np.asarray(y, dtype=np.complex128)
    dense = phi.densify()
    best: tuple[float, tuple[int, ...], np.ndarray] | None = None
    for sup in combinations(range(phi.n), k):
        cols = dense[:, sup]
        vals, *_ = np.linalg.lstsq(cols, y, rcond=None)
        rnorm = float(np.linalg.norm(y - cols @ vals))
        if best is None or rnorm < best[0]:
            best = (rnorm, sup, vals)
    assert best is not None
    return DecodeResult(support=best[1], values=best[2], residual_norm=best[0],
                        expanded=total, pruned=0, mac_count=0)
