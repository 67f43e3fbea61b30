"""Command-line front end: ``sscsim sweep | complexity | roundtrip-check``.

Configuration precedence, lowest to highest: built-in defaults, ``--config``
file, command-line flags, then the SSCSIM_SEED / SSCSIM_WORKERS environment
variables (those two only).  Any configuration problem exits with status 2
before a single trial runs.

The config file is flat ``key = value`` text; ``#`` starts a comment.
Recognized keys: scheme, n, k, m, m_mod, r, snr, trials, min_errors, seed,
workers, l, beam, l_ch, l_cp, out.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from .codebook import deserialize_codebook, serialize_codebook
from .codec import CodeParams
from .harness import (ConfigError, ExperimentConfig, codebook_for,
                      complexity_report, emit_csv, encode_macs_vs_bits,
                      run_sweep, run_trial)

_CONFIG_KEYS = ("scheme", "n", "k", "m", "m_mod", "r", "snr", "trials",
                "min_errors", "seed", "workers", "l", "beam", "l_ch", "l_cp",
                "out")


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """Grid syntax: ``lo:step:hi`` (inclusive), a comma list, or one value."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"SNR range must be lo:step:hi, got {text!r}")
        lo, step, hi = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError(f"SNR step must be > 0, got {step}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        if count < 1:
            raise ConfigError(f"empty SNR range {text!r}")
        return tuple(lo + i * step for i in range(count))
    return tuple(float(p) for p in text.split(","))


def parse_r_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.strip().split(","))


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                key = key.strip().lower()
                if key not in _CONFIG_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, config file, CLI flags, and env into one config."""
    raw = _read_config_file(args.config) if args.config else {}

    def pick(flag_value, key: str, cast, default):
        if flag_value is not None:
            return flag_value
        if key in raw:
            try:
                return cast(raw[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        return default

    n = pick(args.n, "n", int, None)
    k = pick(args.k, "k", int, None)
    m = pick(args.m, "m", int, None)
    if n is None or k is None or m is None:
        raise ConfigError("n, k, and m are required (flags or config file)")
    m_mod = pick(getattr(args, "m_mod", None), "m_mod", int, 4)
    r_list = pick(args.r, "r", parse_r_list, (0.5,))
    l_ch = pick(args.l_ch, "l_ch", int, 4)
    l_cp = pick(args.l_cp, "l_cp", int, l_ch - 1)
    seed = pick(args.seed, "seed", int, 12345)
    workers = pick(args.workers, "workers", int, 1)
    min_errors = pick(args.min_errors, "min_errors", int, 200)
    if min_errors is not None and min_errors <= 0:
        min_errors = None

    env_seed = os.environ.get("SSCSIM_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"SSCSIM_SEED: {exc}") from exc
    env_workers = os.environ.get("SSCSIM_WORKERS")
    if env_workers is not None:
        try:
            workers = int(env_workers)
        except ValueError as exc:
            raise ConfigError(f"SSCSIM_WORKERS: {exc}") from exc

    try:
        params = CodeParams.create(n=n, k=k, m=m, m_mod=m_mod, r=r_list[0],
                                   l_cp=l_cp)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    config = ExperimentConfig(
        params=params,
        scheme=pick(args.scheme, "scheme", str, "ssc-sparse"),
        snr_grid=pick(args.snr, "snr", parse_snr_grid, (10.0,)),
        r_grid=r_list,
        max_trials=pick(args.trials, "trials", int, 10_000),
        min_errors=min_errors,
        seed=seed,
        mmp_l=pick(args.l, "l", int, 2),
        mmp_beam=pick(args.beam, "beam", int, 4),
        l_ch=l_ch,
        workers=workers,
        out=pick(args.out, "out", str, None),
    )
    config.validate()
    return config


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _build_config(args)
    points = run_sweep(config)
    for pt in points:
        print(f"scheme={pt.scheme} R={pt.r:g} D={pt.d} snr={pt.snr_db:g} dB "
              f"trials={pt.trials} errors={pt.block_errors} "
              f"bler={pt.bler:.3e} ci=[{pt.ci_lo:.3e},{pt.ci_hi:.3e}]")
    if config.out:
        emit_csv(points, config.out, config)
        print(f"wrote {config.out} (+ .meta.json)")
    return 0


def _cmd_complexity(args: argparse.Namespace) -> int:
    config = _build_config(args)
    r_grid = config.r_grid if config.r_grid is not None else (config.params.r,)
    rows = complexity_report(config.params, r_grid, seed=config.seed,
                             mmp_l=config.mmp_l, mmp_beam=config.mmp_beam,
                             l_ch=config.l_ch)
    print("R,D,R_effective,encode_macs,decode_macs,encode_ratio,decode_ratio")
    for row in rows:
        print(f"{row['r']:g},{row['d']},{row['r_effective']:.6g},"
              f"{row['encode_macs']},{row['decode_macs']:.1f},"
              f"{row['encode_ratio']:.6g},{row['decode_ratio']:.4f}")
    if args.bits_sweep:
        n_grid = tuple(int(round(v)) for v in parse_snr_grid(args.bits_sweep))
        print("\nN,b_I,dense_encode_macs,sparse_encode_macs,"
              "dense_storage_cells,sparse_storage_cells")
        for row in encode_macs_vs_bits(config.params.k, config.params.m,
                                       r_grid[0], n_grid, config.params.m_mod):
            print(f"{row['n']},{row['b_i']},{row['dense_encode_macs']},"
                  f"{row['sparse_encode_macs']},{row['dense_storage_cells']},"
                  f"{row['sparse_storage_cells']}")
    if config.out:
        with open(config.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("R,D,R_effective,encode_macs,decode_macs,"
                     "encode_ratio,decode_ratio\n")
            for row in rows:
                fh.write(f"{row['r']!r},{row['d']},{row['r_effective']!r},"
                         f"{row['encode_macs']},{row['decode_macs']!r},"
                         f"{row['encode_ratio']!r},{row['decode_ratio']!r}\n")
        print(f"wrote {config.out}")
    return 0


def _cmd_roundtrip_check(args: argparse.Namespace) -> int:
    config = _build_config(args)
    point = config.point(snr_db=math.inf)  # zero noise
    point = point.__class__(**{**point.__dict__, "channel_profile": "identity"})
    codebook = codebook_for(point)
    p = point.params
    failures = 0

    trials = config.max_trials if args.trials is not None else 1000
    for t in range(trials):
        payload = derive_stream(config.seed, 1, t).bits(p.b)
        msg = encode_message(payload, p)
        x = spread(codebook, msg)
        block = transmit_frequency_domain(x, ChannelRealization.identity(p.m),
                                          0.0, derive_stream(config.seed, 3, t))
        phi_cols = codebook.columns
        result = mmp_decode(block.y, phi_cols, point.mmp)
        recovered = decode_message(result.support, result.values, 1e-12, p)
        if not np.array_equal(recovered, payload):
            failures += 1
    status = "PASS" if failures == 0 else "FAIL"
    print(f"codec roundtrip over {trials} noiseless packets: {status} "
          f"({failures} mismatches)")

    blob = serialize_codebook(codebook)
    restored = deserialize_codebook(blob)
    cb_ok = (np.array_equal(restored.rows, codebook.rows)
             and np.array_equal(restored.vals, codebook.vals))
    print(f"codebook serialize/deserialize: {'PASS' if cb_ok else 'FAIL'} "
          f"({len(blob)} bytes)")
    return 0 if failures == 0 and cb_ok else 1


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--n", type=int, help="sparse vector length N")
    sub.add_argument("--k", type=int, help="sparsity K")
    sub.add_argument("--m", type=int, help="transmission block length M")
    sub.add_argument("--m-mod", dest="m_mod", type=int, help="QAM order (4 or 16)")
    sub.add_argument("--snr", type=parse_snr_grid,
                     help="SNR grid in dB: lo:step:hi, comma list, or one value")
    sub.add_argument("--r", type=parse_r_list,
                     help="comma list of sparsity factors")
    sub.add_argument("--trials", type=int, help="max trials per point")
    sub.add_argument("--min-errors", dest="min_errors", type=int,
                     help="early-stop error count per point (<= 0 disables)")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--workers", type=int, help="parallel worker processes")
    sub.add_argument("--l", type=int, help="pursuit expansions per path")
    sub.add_argument("--beam", type=int, help="pursuit beam width")
    sub.add_argument("--l-ch", dest="l_ch", type=int, help="channel taps")
    sub.add_argument("--l-cp", dest="l_cp", type=int, help="cyclic prefix length")
    sub.add_argument("--out", help="output CSV path")
    sub.add_argument("--scheme", choices=("ssc-sparse", "ssc-dense", "svc"))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sscsim",
        description="Sparse superimposed coding link-level simulator")
    subs = parser.add_subparsers(dest="command", required=True)

    sweep = subs.add_parser("sweep", help="Monte Carlo BLER sweep over SNR and R")
    _add_common_flags(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    comp = subs.add_parser("complexity",
                           help="instrumented MAC-count report per sparsity factor")
    _add_common_flags(comp)
    comp.add_argument("--bits-sweep", dest="bits_sweep",
                      help="N grid (lo:step:hi) for the encode-vs-b_I table")
    comp.set_defaults(func=_cmd_complexity)

    rt = subs.add_parser("roundtrip-check",
                         help="noiseless encode/decode and codebook container checks")
    _add_common_flags(rt)
    rt.set_defaults(func=_cmd_roundtrip_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
