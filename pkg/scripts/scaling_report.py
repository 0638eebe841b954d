#!/usr/bin/env python3
"""Scaling experiment: how server-side search time responds to cohort shape.

Two sweeps, both holding the query fixed (alpha anchored records, n terms):

  records : r grows while alpha stays fixed -> search time should stay flat
  columns : l (SNPs per record) grows at fixed r -> search time should stay flat

Each grid point builds a fresh synthetic cohort, encrypts it, and reports the
median of several searches plus build time and encrypted-database size.

    python3 scripts/scaling_report.py --preset small --out scaling.csv
"""

import argparse
import random
import statistics
import sys
import time

from privgendb.crypto import SeededRng, keygen
from privgendb.encoding import Predicate, Query, encode_query, parse_gdb
from privgendb.engine import generate_token, search
from privgendb.index import TSet, build_egdb, build_inverted_index, egdb_to_bytes

GENOTYPES = ("AA", "AG", "GG", "CC", "CT", "TT")

PRESETS = {
    # (r sweep at l=10, l sweep at r=2000)
    "small": ((500, 1_000, 2_000), (50, 100, 200)),
    "default": ((2_000, 5_000, 10_000), (100, 500, 1_000)),
    "full": ((5_000, 10_000, 20_000, 40_000), (500, 1_000, 2_000)),
}


def anchored_cohort(r: int, l: int, alpha: int, shared: int, seed: int) -> str:
    """Cohort whose first alpha records share genotypes on the queried columns,
    so every anchored record costs the server the same amount of work."""
    rng = random.Random(seed)
    rows = ["ID," + ",".join(f"SNP_{i + 1}" for i in range(l)) + ",Phenotype"]
    for i in range(1, r + 1):
        anchored = i <= alpha
        genos = rng.choices(GENOTYPES, k=l - shared if anchored else l)
        if anchored:
            genos = ["AA"] * shared + genos
        rows.append(f"{i}," + ",".join(genos) + ("," + ("Cohort" if anchored else "Background")))
    return "\n".join(rows) + "\n"


def measure(r: int, l: int, alpha: int, n_terms: int, runs: int, seed: int) -> dict:
    gdb = parse_gdb(anchored_cohort(r, l, alpha, n_terms - 1, seed))
    keys = keygen(rng=SeededRng(seed))
    t0 = time.perf_counter()
    egdb = build_egdb(keys, build_inverted_index(gdb), SeededRng(seed + 1))
    build_s = time.perf_counter() - t0

    preds = [Predicate("phenotype", "Cohort")] + [
        Predicate("snp", "AA", snp=s) for s in range(1, n_terms)]
    eq = encode_query(Query(tuple(preds), "count"))
    inv_len = len(egdb.tset.retrieve(TSet.tag(keys.k_t, eq.sterm)))
    token = generate_token(eq, keys, inv_len)

    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        res = search(token, egdb)
        times.append(time.perf_counter() - t0)
        assert res.count == alpha, "anchored cohort must match exactly alpha records"
    return {
        "r": r, "l": l, "alpha": alpha, "n": n_terms,
        "build_s": build_s,
        "search_ms": statistics.median(times) * 1e3,
        "egdb_mb": len(egdb_to_bytes(egdb)) / 1e6,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=sorted(PRESETS), default="small")
    ap.add_argument("--alpha", type=int, default=100, help="records behind the anchor term")
    ap.add_argument("--terms", type=int, default=10, help="predicates per query")
    ap.add_argument("--runs", type=int, default=5, help="searches per grid point")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="scaling.csv")
    args = ap.parse_args(argv)

    r_sweep, l_sweep = PRESETS[args.preset]
    rows = []
    print(f"# sweep 1: records grow, l=10, alpha={args.alpha}, n={args.terms}")
    for r in r_sweep:
        row = measure(r, 10, args.alpha, args.terms, args.runs, args.seed)
        rows.append(("records", row))
        print(f"  r={r:>7,}: search {row['search_ms']:8.1f} ms   "
              f"build {row['build_s']:6.1f} s   egdb {row['egdb_mb']:7.2f} MB")
    print(f"# sweep 2: columns grow, r=2000, alpha={args.alpha}, n={args.terms}")
    for l in l_sweep:
        row = measure(2_000, l, args.alpha, args.terms, args.runs, args.seed + 1)
        rows.append(("columns", row))
        print(f"  l={l:>7,}: search {row['search_ms']:8.1f} ms   "
              f"build {row['build_s']:6.1f} s   egdb {row['egdb_mb']:7.2f} MB")

    for sweep in ("records", "columns"):
        ms = [row["search_ms"] for s, row in rows if s == sweep]
        spread = max(ms) / min(ms)
        print(f"# {sweep} sweep: search time spread x{spread:.2f} "
              f"({min(ms):.1f}-{max(ms):.1f} ms)")

    with open(args.out, "w", encoding="utf-8") as fh:
        cols = ("sweep", "r", "l", "alpha", "n", "build_s", "search_ms", "egdb_mb")
        fh.write(",".join(cols) + "\n")
        for sweep, row in rows:
            fh.write(f"{sweep},{row['r']},{row['l']},{row['alpha']},{row['n']},"
                     f"{row['build_s']:.3f},{row['search_ms']:.3f},{row['egdb_mb']:.3f}\n")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
