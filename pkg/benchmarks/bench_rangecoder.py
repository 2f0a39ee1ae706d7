"""Throughput of the compiled and pure-Python range coders.

    python3 benchmarks/bench_rangecoder.py [--symbols N] [--tables T] [--repeat R]

Both backends code the same stream; the script checks the payloads match
before timing anything.
"""
import argparse
import time

import numpy as np

from faircodec.entropycoder import decode_symbols, encode_symbols, get_backend, tables_from_pmfs


def make_stream(n, n_tables, alphabet, seed):
    rng = np.random.default_rng(seed)
    pmfs = rng.dirichlet(np.full(alphabet, 0.3), size=n_tables)
    tables = tables_from_pmfs(pmfs)
    idx = rng.integers(0, n_tables, n).astype(np.int32)
    cum = np.cumsum(pmfs, axis=1)
    sym = (rng.random(n)[:, None] > cum[idx]).sum(axis=1).clip(0, alphabet - 1)
    return sym.astype(np.int64), tables, idx


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--symbols", type=int, default=200_000)
    ap.add_argument("--tables", type=int, default=64)
    ap.add_argument("--alphabet", type=int, default=65)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    sym, tables, idx = make_stream(args.symbols, args.tables, args.alphabet, 0)
    backends = ["python"]
    try:
        get_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled backend not built; timing the pure-Python coder only")

    payloads = {b: encode_symbols(sym, tables, idx, backend=b) for b in backends}
    if len(set(payloads.values())) != 1:
        raise SystemExit("backends disagree on the payload")
    payload = payloads[backends[0]]
    print(f"{args.symbols} symbols, {args.tables} tables, alphabet {args.alphabet}: "
          f"{len(payload)} bytes ({8 * len(payload) / args.symbols:.3f} bits/symbol)")

    rows = {}
    for b in backends:
        enc = best_of(lambda: encode_symbols(sym, tables, idx, backend=b), args.repeat)
        dec = best_of(lambda: decode_symbols(payload, tables, len(sym), idx, backend=b), args.repeat)
        rows[b] = (enc, dec)
        print(f"{b:>7}: encode {args.symbols / enc / 1e6:8.3f} Msym/s   decode {args.symbols / dec / 1e6:8.3f} Msym/s")
    if len(rows) == 2:
        (ce, cd), (pe, pd) = rows["cython"], rows["python"]
        print(f"speedup: encode {pe / ce:.1f}x, decode {pd / cd:.1f}x")


if __name__ == "__main__":
    main()
