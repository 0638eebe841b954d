"""Command-line entry points: build, server, vetter, query, bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .crypto import SeededRng, SystemRng, keygen, load_keys, save_keys
from .encoding import GdbParseError, parse_gdb
from .evaluation import BenchCase, run_grid, write_report_csv
from .index import CorruptIndexError, build_egdb, build_inverted_index, serialize_egdb
from .services import ServiceError, parse_hostport, serve_data, serve_vetter, submit_query
from .wire import MSG_ANSWER, MSG_DENIED

log = logging.getLogger("privgendb.cli")


def _setup_logging():
    level_name = os.environ.get("PRIVGENDB_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _cmd_build(args) -> int:
    rng = SeededRng(args.seed) if args.seed is not None else SystemRng()
    if os.path.exists(args.keys):
        keys = load_keys(args.keys)
        log.info("loaded existing keys from %s", args.keys)
    else:
        keys = keygen(rng=rng)
        save_keys(keys, args.keys)
        print(f"generated new keys -> {args.keys}")
    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            gdb = parse_gdb(fh)
    except GdbParseError as exc:
        print(f"error: {args.input}: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    iinx = build_inverted_index(gdb)
    egdb = build_egdb(keys, iinx, rng, p_fp=args.fp)
    with open(args.egdb, "wb") as fh:
        size = serialize_egdb(egdb, fh)
    elapsed = time.perf_counter() - t0
    print(
        f"built {args.egdb}: {len(gdb.records)} records, {len(iinx)} keywords, "
        f"{egdb.params.n_entries} entries, {size} bytes, {elapsed:.2f}s"
    )
    return 0


def _cmd_server(args) -> int:
    try:
        serve_data(args.egdb, args.listen, idle_timeout=args.idle_timeout)
    except CorruptIndexError as exc:
        print(f"error: {args.egdb}: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_vetter(args) -> int:
    try:
        serve_vetter(args.keys, args.policy, args.server, args.listen, args.audit)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_query(args) -> int:
    try:
        mtype, body = submit_query(
            parse_hostport(args.vetter), args.user, args.type, args.where, args.kprime
        )
    except (OSError, ServiceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if mtype == MSG_DENIED:
        print(f"denied: {body.get('reason')}: {body.get('detail')}", file=sys.stderr)
        return 3
    if mtype != MSG_ANSWER:
        print(f"error: {body.get('error', 'unexpected reply')}", file=sys.stderr)
        return 2
    if "count" in body:
        print(f"count: {body['count']}")
        return 0
    ids = body.get("ids", [])
    if args.type == "match" and "id=" in args.where.replace(" ", "").lower():
        if ids:
            print(f"match: yes (id {ids[0]})")
        else:
            print("match: no")
        return 0
    if ids:
        print("ids: " + " ".join(str(i) for i in ids))
    else:
        print("ids: (none)")
    return 0


def _cmd_bench(args) -> int:
    with open(args.grid, "r", encoding="utf-8") as fh:
        grid = json.load(fh)
    cases = []
    for raw in grid.get("cases", []):
        cases.append(
            BenchCase(
                r=int(raw["r"]),
                snp_count=int(raw.get("snps", raw.get("l", 10))),
                alpha=int(raw["alpha"]),
                n_terms=int(raw["n"]),
                query_type=str(raw.get("gamma", "boolean")),
                seed=int(raw.get("seed", 0)),
                p_fp=float(raw.get("p_fp", 1e-6)),
                k_prime=raw.get("k_prime"),
            )
        )
    if not cases:
        print("error: grid file has no cases", file=sys.stderr)
        return 2

    def progress(rep):
        c = rep.case
        print(
            f"r={c.r} l={c.snp_count} alpha={c.alpha} n={c.n_terms} {c.query_type}: "
            f"build {rep.build_ms:.0f}ms tokgen {rep.tokgen_ms:.1f}ms "
            f"search {rep.search_ms:.1f}ms egdb {rep.egdb_bytes}B"
        )

    reports = run_grid(cases, runs=args.runs, progress=progress)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_report_csv(reports, fh)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="privgendb",
        description="Encrypted genomic cohort search: count, boolean, and match queries.",
    )
    ap.add_argument("--version", action="version", version=f"privgendb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="encrypt a cohort CSV into a searchable database")
    b.add_argument("--input", required=True, help="cohort CSV path")
    b.add_argument("--keys", required=True, help="key file (created if missing)")
    b.add_argument("--egdb", required=True, help="output encrypted database path")
    b.add_argument("--fp", type=float, default=1e-6, help="bloom false-positive target")
    b.add_argument("--seed", type=int, default=None, help="deterministic build seed")
    b.set_defaults(func=_cmd_build)

    s = sub.add_parser("server", help="serve an encrypted database (untrusted host)")
    s.add_argument("--egdb", required=True)
    s.add_argument("--listen", required=True, help="host:port to bind")
    s.add_argument("--idle-timeout", type=float, default=300.0)
    s.set_defaults(func=_cmd_server)

    v = sub.add_parser("vetter", help="run the trusted query gatekeeper")
    v.add_argument("--keys", required=True)
    v.add_argument("--policy", required=True)
    v.add_argument("--server", required=True, help="data server host:port")
    v.add_argument("--listen", required=True, help="host:port to bind")
    v.add_argument("--audit", default="privgendb-audit.log", help="audit log path")
    v.set_defaults(func=_cmd_vetter)

    q = sub.add_parser("query", help="submit a query through a vetter")
    q.add_argument("--vetter", required=True, help="vetter host:port")
    q.add_argument("--user", required=True)
    q.add_argument("--type", required=True, choices=("count", "boolean", "match"))
    q.add_argument("--where", required=True, help='e.g. "phenotype=Cancer B,SNP2!=CC"')
    q.add_argument("--kprime", type=int, default=None, help="match threshold k'")
    q.set_defaults(func=_cmd_query)

    be = sub.add_parser("bench", help="run a benchmark grid and write a CSV report")
    be.add_argument("--grid", required=True, help="JSON grid file")
    be.add_argument("--out", required=True, help="output CSV path")
    be.add_argument("--runs", type=int, default=5)
    be.set_defaults(func=_cmd_bench)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
