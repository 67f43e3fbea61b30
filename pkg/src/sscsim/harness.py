"""Monte Carlo block-error-rate experiments: trials, sweeps, counters, CSV.

Every random quantity in a trial comes from a stream derived as
``(master_seed, purpose, trial_index)``, so a trial's outcome depends only
on the configuration and its absolute index.  Trials are scheduled in
fixed-size chunks and early stopping is decided at chunk boundaries in
index order, which makes sweep results (and the emitted CSV bytes)
identical at any worker count.

Schemes
-------
``ssc-sparse``
    Payload bits in both the support and the K QAM values; codebook
    sparsity as configured.
``ssc-dense``
    Same mapping with the sparsity factor forced to 1 (the dense-codebook
    reference).
``svc``
    Support-only baseline: non-zero values fixed to 1 and only the index
    bits carry payload.  Decoded with the same pursuit so the comparison
    isolates the codebook; outputs label it explicitly as an SVC-like
    baseline rather than a reimplementation of the original receiver.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass
from multiprocessing import Pool

import numpy as np
from scipy.stats import norm as _normal

from .channel import (ChannelRealization, draw_channel, effective_matrix,
                      snr_to_noise_var, transmit_frequency_domain)
from .codebook import MacCounter, SparseCodebook, build_codebook, spread
from .codec import (CodeParams, IllegalSupportError, SparseMessage, bits_to_int,
                    compute_bit_budget, decode_message, encode_message,
                    int_to_bits, rank_to_support, support_to_rank)
from .decoder import DecodeFailedError, MmpConfig, mmp_decode, sparse_gram
from .numerics import RNG_NAME, derive_stream

SCHEMES = ("ssc-sparse", "ssc-dense", "svc")

# Trials per scheduling unit; early stopping is evaluated at these
# boundaries so results do not depend on the worker count.
CHUNK_TRIALS = 512

# Effective noise variance is floored here before soft demapping so the
# zero-noise test hook stays finite (LLRs then saturate at the clamp).
_NOISE_FLOOR = 1e-12

# Stream purposes.
_P_PAYLOAD = 1
_P_CHANNEL = 2
_P_NOISE = 3
_P_CB_SIGNS = 4
_P_CB_SAMPLING = 5

CSV_COLUMNS = ("scheme", "N", "K", "M", "M_mod", "R", "D", "L", "beam",
               "L_ch", "L_CP", "snr_db", "trials", "block_errors", "bler",
               "ci_lo", "ci_hi", "encode_macs", "decode_macs", "seed")

SNR_DEFINITION = ("average received signal energy per used sample over noise "
                  "variance, with unit-power channel taps and unit-average "
                  "transmit energy: noise_var = 10^(-snr_db/10)")


class ConfigError(ValueError):
    """Invalid experiment configuration, surfaced before any trial runs."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a parameter set plus SNR / sparsity grids and stop rules."""

    params: CodeParams
    scheme: str = "ssc-sparse"
    snr_grid: tuple[float, ...] = (10.0,)
    r_grid: tuple[float, ...] | None = None
    max_trials: int = 10_000
    min_errors: int | None = 200
    seed: int = 12345
    mmp_l: int = 2
    mmp_beam: int = 4
    l_ch: int = 4
    workers: int = 1
    channel_profile: str = "rayleigh"  # "identity" is a test hook
    out: str | None = None

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if not self.snr_grid:
            raise ConfigError("snr_grid must not be empty")
        if self.r_grid is not None:
            if not self.r_grid:
                raise ConfigError("r_grid must not be empty when given")
            for r in self.r_grid:
                if not 0.0 < r <= 1.0:
                    raise ConfigError(f"sparsity factor {r} outside (0, 1]")
        if self.max_trials < 1:
            raise ConfigError(f"max_trials must be >= 1, got {self.max_trials}")
        if self.min_errors is not None and self.min_errors < 1:
            raise ConfigError(f"min_errors must be >= 1 or None, got {self.min_errors}")
        if self.mmp_l < 1 or self.mmp_beam < 1:
            raise ConfigError("mmp expansions and beam must be >= 1")
        if not 1 <= self.l_ch <= self.params.m:
            raise ConfigError(f"need 1 <= L_ch <= M, got L_ch={self.l_ch}")
        if self.params.l_cp < self.l_ch - 1:
            raise ConfigError(f"cyclic prefix {self.params.l_cp} shorter than "
                              f"channel memory {self.l_ch - 1}")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.channel_profile not in ("rayleigh", "identity"):
            raise ConfigError(f"unknown channel profile {self.channel_profile!r}")

    def point(self, snr_db: float, r: float | None = None) -> "PointConfig":
        """Narrow the experiment to one (R, SNR) grid point."""
        p = self.params
        if self.scheme == "ssc-dense":
            r = 1.0
        elif r is None:
            r = p.r
        if r != p.r:
            p = CodeParams.create(n=p.n, k=p.k, m=p.m, m_mod=p.m_mod, r=r,
                                  l_cp=p.l_cp)
        return PointConfig(params=p, scheme=self.scheme, snr_db=snr_db,
                           noise_var=snr_to_noise_var(snr_db), seed=self.seed,
                           mmp=MmpConfig(k=p.k, l=self.mmp_l, beam=self.mmp_beam),
                           l_ch=self.l_ch, channel_profile=self.channel_profile)


@dataclass(frozen=True)
class PointConfig:
    """Everything a single trial needs, fixed for one sweep point."""

    params: CodeParams
    scheme: str
    snr_db: float
    noise_var: float
    seed: int
    mmp: MmpConfig
    l_ch: int
    channel_profile: str

    @property
    def payload_bits(self) -> int:
        return self.params.b_i if self.scheme == "svc" else self.params.b


@dataclass(frozen=True)
class TrialRecord:
    """Per-packet outcome with its complexity counters."""

    trial_index: int
    block_error: bool
    illegal_support: bool
    decode_failed: bool
    encode_macs: int
    decode_macs: int


@dataclass(frozen=True)
class BlerPoint:
    """Aggregated statistics of one (scheme, R, SNR) sweep point."""

    scheme: str
    n: int
    k: int
    m: int
    m_mod: int
    r: float
    d: int
    l: int
    beam: int
    l_ch: int
    l_cp: int
    snr_db: float
    trials: int
    block_errors: int
    bler: float
    ci_lo: float
    ci_hi: float
    encode_macs: float
    decode_macs: float
    seed: int


_CODEBOOK_CACHE: dict[tuple, SparseCodebook] = {}


def codebook_for(point: PointConfig) -> SparseCodebook:
    """The shared transmit/receive codebook of a point, memoized per process.

    The dense sign pattern is keyed by (M, N) and the sampling pattern by
    (M, D), so an R sweep samples one common dense codebook at different
    densities, and every process regenerates identical matrices from the
    seed metadata alone.
    """
    p = point.params
    key = (point.seed, p.m, p.n, p.k, p.d)
    cb = _CODEBOOK_CACHE.get(key)
    if cb is None:
        signs = derive_stream(point.seed, _P_CB_SIGNS, (p.m << 20) | p.n)
        sampling = derive_stream(point.seed, _P_CB_SAMPLING, (p.m << 20) | p.d)
        cb = build_codebook(p, signs, sampling)
        _CODEBOOK_CACHE[key] = cb
    return cb


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    z = float(_normal.ppf(0.5 + confidence / 2.0))
    phat = errors / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _encode(point: PointConfig, payload: np.ndarray) -> SparseMessage:
    p = point.params
    if point.scheme == "svc":
        support = rank_to_support(bits_to_int(payload), p.n, p.k)
        return SparseMessage(support=support,
                             values=np.ones(p.k, dtype=np.complex128))
    return encode_message(payload, p)


def _demap(point: PointConfig, phi, result) -> np.ndarray:
    """Recovered payload bits from a decode result; may raise IllegalSupportError."""
    p = point.params
    if point.scheme == "svc":
        rank = support_to_rank(result.support, p.n, p.k)
        if rank >> p.b_i:
            raise IllegalSupportError(f"support rank {rank} >= 2^{p.b_i}")
        return int_to_bits(rank, p.b_i)
    # Post-projection noise on each value estimate is sigma^2 * [U^-1]_kk.
    u = sparse_gram(phi, result.support)
    scale = np.linalg.inv(u).diagonal().real
    nv = np.maximum(point.noise_var * scale, _NOISE_FLOOR)
    return decode_message(result.support, result.values, nv, p)


def run_trial(point: PointConfig, trial_index: int,
              codebook: SparseCodebook | None = None) -> TrialRecord:
    """One packet end to end: encode, spread, transmit, decode, demap.

    A block error is any difference between the recovered and transmitted
    payload bits; decoded supports without a payload preimage and decoder
    failures both count as errors.  Identical (seed, trial_index) give an
    identical record.
    """
    if codebook is None:
        codebook = codebook_for(point)
    p = point.params
    payload = derive_stream(point.seed, _P_PAYLOAD, trial_index).bits(point.payload_bits)
    msg = _encode(point, payload)
    enc = MacCounter()
    x = spread(codebook, msg, enc)
    if point.channel_profile == "identity":
        ch = ChannelRealization.identity(p.m)
    else:
        ch = draw_channel(point.l_ch, p.m,
                          derive_stream(point.seed, _P_CHANNEL, trial_index))
    block = transmit_frequency_domain(
        x, ch, point.noise_var, derive_stream(point.seed, _P_NOISE, trial_index))
    phi = effective_matrix(ch, codebook)
    illegal = failed = False
    decode_macs = 0
    error = False
    try:
        result = mmp_decode(block.y, phi, point.mmp)
        decode_macs = result.mac_count
        recovered = _demap(point, phi, result)
        error = not np.array_equal(recovered, payload)
    except DecodeFailedError:
        failed = True
        error = True
    except IllegalSupportError:
        illegal = True
        error = True
    return TrialRecord(trial_index=trial_index, block_error=error,
                       illegal_support=illegal, decode_failed=failed,
                       encode_macs=enc.count, decode_macs=decode_macs)


def _run_chunk(args: tuple[PointConfig, int, int]) -> tuple[int, int, int]:
    """Worker task: run a contiguous block of trials, return summed counters."""
    point, start, count = args
    codebook = codebook_for(point)
    errors = 0
    enc = 0
    dec = 0
    for t in range(start, start + count):
        rec = run_trial(point, t, codebook)
        errors += rec.block_error
        enc += rec.encode_macs
        dec += rec.decode_macs
    return errors, enc, dec


def _run_point(point: PointConfig, max_trials: int, min_errors: int | None,
               pool: Pool | None, window: int) -> tuple[int, int, int, int]:
    """Run one sweep point's trials; returns (trials, errors, enc_macs, dec_macs).

    Chunks are consumed strictly in index order and the stop rule fires at
    the first chunk boundary with at least ``min_errors`` cumulative errors,
    so the outcome is independent of the worker count.
    """
    tasks = [(point, start, min(CHUNK_TRIALS, max_trials - start))
             for start in range(0, max_trials, CHUNK_TRIALS)]
    trials = errors = enc = dec = 0
    if pool is None:
        for task in tasks:
            e, em, dm = _run_chunk(task)
            trials += task[2]
            errors += e
            enc += em
            dec += dm
            if min_errors is not None and errors >= min_errors:
                break
        return trials, errors, enc, dec
    pending: deque = deque()
    submitted = 0
    consumed = 0
    while consumed < len(tasks):
        while submitted < len(tasks) and len(pending) < window:
            pending.append(pool.apply_async(_run_chunk, (tasks[submitted],)))
            submitted += 1
        e, em, dm = pending.popleft().get()
        trials += tasks[consumed][2]
        errors += e
        enc += em
        dec += dm
        consumed += 1
        if min_errors is not None and errors >= min_errors:
            break
    while pending:  # drain already-dispatched work so the pool stays clean
        pending.popleft().get()
    return trials, errors, enc, dec


def run_sweep(config: ExperimentConfig) -> list[BlerPoint]:
    """Run the full (R, SNR) grid of an experiment and aggregate BLER points.

    Grid order is row-major over (r_grid, snr_grid); results are identical
    for any worker count.
    """
    config.validate()
    r_values = config.r_grid if config.r_grid is not None else (config.params.r,)
    points: list[BlerPoint] = []
    pool = Pool(config.workers) if config.workers > 1 else None
    try:
        for r in r_values:
            for snr_db in config.snr_grid:
                point = config.point(snr_db=snr_db, r=r)
                trials, errors, enc, dec = _run_point(
                    point, config.max_trials, config.min_errors, pool,
                    window=max(2, 2 * config.workers))
                ci_lo, ci_hi = wilson_interval(errors, trials)
                p = point.params
                points.append(BlerPoint(
                    scheme=config.scheme, n=p.n, k=p.k, m=p.m, m_mod=p.m_mod,
                    r=p.r, d=p.d, l=config.mmp_l, beam=config.mmp_beam,
                    l_ch=config.l_ch, l_cp=p.l_cp, snr_db=snr_db,
                    trials=trials, block_errors=errors,
                    bler=errors / trials, ci_lo=ci_lo, ci_hi=ci_hi,
                    encode_macs=enc / trials, decode_macs=dec / trials,
                    seed=config.seed))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return points


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(points: list[BlerPoint], path: str,
             config: ExperimentConfig | None = None) -> None:
    """Write sweep points as CSV plus a self-describing metadata sidecar.

    Column order is fixed; two runs of the same configuration produce
    byte-identical files (no timestamps anywhere).  The sidecar
    ``<path>.meta.json`` records the RNG, the SNR definition, and the
    configuration so every curve is reproducible from the file pair alone.
    """
    lines = [",".join(CSV_COLUMNS)]
    for pt in points:
        lines.append(",".join(_fmt(v) for v in (
            pt.scheme, pt.n, pt.k, pt.m, pt.m_mod, pt.r, pt.d, pt.l, pt.beam,
            pt.l_ch, pt.l_cp, pt.snr_db, pt.trials, pt.block_errors, pt.bler,
            pt.ci_lo, pt.ci_hi, pt.encode_macs, pt.decode_macs, pt.seed)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    from . import __version__
    meta = {
        "version": __version__,
        "rng": RNG_NAME,
        "snr_definition": SNR_DEFINITION,
        "channel_model": ("block-fading Rayleigh, i.i.d. taps, uniform power "
                          "delay profile, unit total power, perfect receiver "
                          "channel knowledge"),
        "svc_note": ("svc rows are an SVC-like baseline: support-only payload, "
                     "unit values, decoded by the same pursuit as the SSC rows"),
        "columns": list(CSV_COLUMNS),
        "effective_r": {repr(pt.r): pt.d / pt.m for pt in points},
        "config": asdict(config) if config is not None else None,
    }
    with open(path + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_csv(path: str) -> list[BlerPoint]:
    """Read back a CSV written by :func:`emit_csv`."""
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n") for line in fh]
    if not rows or rows[0] != ",".join(CSV_COLUMNS):
        raise ValueError(f"{path} is not a sweep CSV (bad header)")
    points = []
    for row in rows[1:]:
        if not row:
            continue
        f = row.split(",")
        points.append(BlerPoint(
            scheme=f[0], n=int(f[1]), k=int(f[2]), m=int(f[3]), m_mod=int(f[4]),
            r=float(f[5]), d=int(f[6]), l=int(f[7]), beam=int(f[8]),
            l_ch=int(f[9]), l_cp=int(f[10]), snr_db=float(f[11]),
            trials=int(f[12]), block_errors=int(f[13]), bler=float(f[14]),
            ci_lo=float(f[15]), ci_hi=float(f[16]), encode_macs=float(f[17]),
            decode_macs=float(f[18]), seed=int(f[19])))
    return points


def complexity_report(params: CodeParams, r_grid: tuple[float, ...],
                      seed: int = 12345, decode_trials: int = 100,
                      snr_db: float = 10.0, mmp_l: int = 2, mmp_beam: int = 4,
                      l_ch: int = 4) -> list[dict]:
    """Instrumented MAC counts per sparsity factor, relative to the dense code.

    Encode costs are closed-form (K*D per packet, ratio exactly D/M); decode
    costs are the mean counter over ``decode_trials`` reproducible trials.
    Wall-clock time is never used.
    """
    base = ExperimentConfig(params=params, scheme="ssc-sparse", snr_grid=(snr_db,),
                            seed=seed, mmp_l=mmp_l, mmp_beam=mmp_beam, l_ch=l_ch,
                            max_trials=decode_trials, min_errors=None)
    base.validate()

    def measure(r: float) -> tuple[int, float]:
        point = base.point(snr_db=snr_db, r=r)
        dec_total = 0
        cb = codebook_for(point)
        for t in range(decode_trials):
            dec_total += run_trial(point, t, cb).decode_macs
        return point.params.d, dec_total / decode_trials

    _, dense_decode = measure(1.0)
    dense_encode = params.k * params.m
    rows = []
    for r in r_grid:
        d, dec = measure(r)
        rows.append({
            "r": r, "d": d, "r_effective": d / params.m,
            "encode_macs": params.k * d,
            "decode_macs": dec,
            "encode_ratio": d / params.m,
            "decode_ratio": dec / dense_decode,
            "dense_encode_macs": dense_encode,
            "dense_decode_macs": dense_decode,
        })
    return rows


def encode_macs_vs_bits(k: int, m: int, r: float, n_grid: tuple[int, ...],
                        m_mod: int = 4) -> list[dict]:
    """Encoding cost and codebook storage as the index-bit budget grows.

    Sweeps N at fixed K: the per-packet encode cost stays K*D (independent
    of N) while the codebook storage grows as M*N dense cells versus N*D
    sparse cells.
    """
    d = min(m, max(1, math.floor(r * m + 0.5)))
    rows = []
    for n in n_grid:
        if n < k:
            raise ValueError(f"need N >= K, got N={n}, K={k}")
        b_i, _, _ = compute_bit_budget(n, k, m_mod)
        rows.append({
            "n": n, "b_i": b_i,
            "dense_encode_macs": k * m, "sparse_encode_macs": k * d,
            "dense_storage_cells": m * n, "sparse_storage_cells": n * d,
        })
    return rows
