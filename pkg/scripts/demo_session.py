#!/usr/bin/env python3
"""End-to-end walkthrough on the bundled 7-record cohort.

Builds the encrypted database, starts a data server and a vetter on loopback
ports, then plays through the supported query types as two users — a
clinician (full access) and an analyst (counts only) — including a policy
denial and a look at what actually crosses the wire.

    python3 scripts/demo_session.py
"""

import json
import sys
import threading

from privgendb.crypto import SeededRng, keygen
from privgendb.encoding import encode_query, parse_query
from privgendb.engine import Policy
from privgendb.fixtures import load_demo_cohort
from privgendb.index import build_egdb, build_inverted_index
from privgendb.services import DataServer, Vetter, execute_search, submit_query
from privgendb.wire import MSG_ANSWER, MSG_DENIED


def show(label: str, reply) -> None:
    mtype, body = reply
    if mtype == MSG_ANSWER:
        print(f"  {label:<58} -> {body}")
    elif mtype == MSG_DENIED:
        print(f"  {label:<58} -> DENIED ({body['reason']}: {body['detail']})")
    else:
        print(f"  {label:<58} -> ERROR {body}")


def main() -> int:
    gdb = load_demo_cohort()
    keys = keygen(rng=SeededRng(7))
    egdb = build_egdb(keys, build_inverted_index(gdb), SeededRng(8))
    print(f"cohort: {len(gdb.records)} records, {egdb.params.n_entries} index entries")

    data = DataServer(("127.0.0.1", 0), egdb)
    threading.Thread(target=data.serve_forever, daemon=True).start()
    policy = Policy({"alice": "clinician", "bob": "analyst"}, threshold=1)
    vetter = Vetter(("127.0.0.1", 0), keys, policy, data.server_address)
    threading.Thread(target=vetter.serve_forever, daemon=True).start()
    addr = vetter.server_address
    print(f"data server on {data.server_address[1]}, vetter on {addr[1]}\n")

    print("clinician alice:")
    show("count: Cancer B and SNP2=CC and SNP4=AG",
         submit_query(addr, "alice", "count", "phenotype=Cancer B, SNP2=CC, SNP4=AG"))
    show("count: Cancer B and not SNP2=CC and SNP4=AG",
         submit_query(addr, "alice", "count", "phenotype=Cancer B, SNP2!=CC, SNP4=AG"))
    show("boolean ids: Cancer B and SNP2=CC and SNP4=AG",
         submit_query(addr, "alice", "boolean", "phenotype=Cancer B, SNP2=CC, SNP4=AG"))
    show("any-of (match k'=1): Cancer B, SNP2=CC or SNP4=AG",
         submit_query(addr, "alice", "match", "phenotype=Cancer B, SNP2=CC, SNP4=AG",
                      k_prime=1))
    show("patient 7 matches 2 of {SNP2=CC, SNP3=CT, SNP4=AG}?",
         submit_query(addr, "alice", "match", "id=7, SNP2=CC, SNP3=CT, SNP4=AG",
                      k_prime=2))

    print("\nanalyst bob:")
    show("count: SNP2=CC", submit_query(addr, "bob", "count", "SNP2=CC"))
    show("boolean ids: SNP2=CC (not permitted for analysts)",
         submit_query(addr, "bob", "boolean", "SNP2=CC"))

    print("\nwhat the data server sees for one boolean query:")
    eq = encode_query(parse_query("phenotype=Cancer B, SNP2=CC, SNP4=AG", "boolean"))
    frames = []
    execute_search(data.server_address, keys, eq,
                   on_frame=lambda d, t, b: frames.append((d, t, json.loads(b))))
    for direction, mtype, body in frames:
        desc = {k: (f"<{len(v)} b64 blobs/rows>" if isinstance(v, list) else
                    (v[:12] + "..." if isinstance(v, str) and len(v) > 15 else v))
                for k, v in body.items()}
        print(f"  {direction:<4} type={mtype} {desc}")

    vetter.shutdown(); vetter.server_close()
    data.shutdown(); data.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
