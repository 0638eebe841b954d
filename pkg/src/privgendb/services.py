"""Networked deployment: untrusted data server, trusted vetter, query client.

The data server holds only the encrypted database and executes the two-round
search protocol (anchor-tag init -> tuple count, then token batches ->
result). The vetter holds the keys and the policy: it admits or denies user
queries, drives the search, decrypts results, and applies release vetting.
Users speak plaintext to the vetter only.
"""

from __future__ import annotations

import logging
import secrets
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .crypto import GroupElement, KeySet, load_keys
from .encoding import QueryError, encode_query, parse_query
from .engine import (
    GAMMA_COUNT,
    GAMMA_MATCH,
    Policy,
    ResultSet,
    TamperingError,
    decrypt_ids,
    evaluate_tuple,
    generate_token,
    parse_policy,
    vet_count,
    vet_ids,
    vet_request,
)
from .index import CorruptIndexError, Egdb, TSet, load_egdb, parse_tuple
from .wire import (
    MSG_ANSWER,
    MSG_DENIED,
    MSG_ERROR,
    MSG_QUERY,
    MSG_RESULT,
    MSG_SEARCH_INIT,
    MSG_STERM_COUNT,
    MSG_XTOKENS,
    WireError,
    b64d,
    b64e,
    read_frame,
    send_frame,
)

log = logging.getLogger("privgendb.services")

DEFAULT_BATCH = 256


class ServiceError(Exception):
    """A peer reported an error or broke the protocol."""


def parse_hostport(text: str) -> "tuple[str, int]":
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"address must be host:port, got {text!r}")
    return host, int(port)


# --- data server -----------------------------------------------------------------

@dataclass
class _Session:
    gamma: int
    k_prime: "int | None"
    tuples: list  # [(y, enc_id), ...] in counter order
    next_counter: int = 1
    count: int = 0
    matched: list = field(default_factory=list)
    last_active: float = field(default_factory=time.monotonic)


class DataServer(socketserver.ThreadingTCPServer):
    """Serves the encrypted database; holds no keys and sees no plaintext."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, egdb: Egdb, idle_timeout: float = 300.0):
        self.egdb = egdb
        self.idle_timeout = idle_timeout
        self.sessions: dict = {}
        self.sessions_lock = threading.Lock()
        super().__init__(addr, _DataHandler)

    def purge_expired(self) -> None:
        deadline = time.monotonic() - self.idle_timeout
        with self.sessions_lock:
            stale = [sid for sid, s in self.sessions.items() if s.last_active < deadline]
            for sid in stale:
                del self.sessions[sid]
        if stale:
            log.info("expired %d idle session(s)", len(stale))


class _DataHandler(socketserver.StreamRequestHandler):
    timeout = 120

    def handle(self):
        srv: DataServer = self.server
        while True:
            try:
                mtype, obj, _ = read_frame(self.rfile)
            except WireError as exc:
                self._error(f"bad frame: {exc}")
                return
            if mtype == 0:
                return  # clean disconnect
            try:
                if mtype == MSG_SEARCH_INIT:
                    self._init(srv, obj)
                elif mtype == MSG_XTOKENS:
                    self._tokens(srv, obj)
                else:
                    self._error(f"unexpected message type {mtype}")
                    return
            except WireError as exc:
                self._error(str(exc))
                return
            except CorruptIndexError as exc:
                self._error(f"index corrupt: {exc}")
                return

    def _error(self, detail: str):
        log.warning("search protocol error: %s", detail)
        try:
            send_frame(self.connection, MSG_ERROR, {"error": detail})
        except OSError:
            pass

    def _init(self, srv: DataServer, obj: dict):
        srv.purge_expired()
        gamma = obj.get("gamma")
        if gamma not in (1, 2, 3):
            raise WireError(f"bad gamma {gamma!r}")
        k_prime = obj.get("k_prime")
        if gamma == GAMMA_MATCH:
            if not isinstance(k_prime, int) or k_prime < 1:
                raise WireError("match searches need integer k_prime >= 1")
        elif k_prime is not None:
            raise WireError("k_prime only applies to match searches")
        stag = b64d(obj.get("stag"))
        tuples = [parse_tuple(p) for p in srv.egdb.tset.retrieve(stag)]
        sid = secrets.token_hex(16)
        with srv.sessions_lock:
            srv.sessions[sid] = _Session(gamma, k_prime, tuples)
        send_frame(self.connection, MSG_STERM_COUNT, {"session": sid, "count": len(tuples)})

    def _tokens(self, srv: DataServer, obj: dict):
        srv.purge_expired()
        sid = obj.get("session")
        with srv.sessions_lock:
            sess = srv.sessions.get(sid)
            if sess is not None:
                sess.last_active = time.monotonic()
        if sess is None:
            raise WireError("unknown or expired session")
        start = obj.get("start")
        pos = obj.get("pos")
        neg = obj.get("neg")
        final = obj.get("final")
        if not isinstance(start, int) or start != sess.next_counter:
            raise WireError(f"out-of-order token batch (expected {sess.next_counter})")
        if not isinstance(pos, list) or not isinstance(neg, list) or len(pos) != len(neg):
            raise WireError("token arrays must be equal-length lists")
        if not isinstance(final, bool):
            raise WireError("final flag must be a boolean")
        if sess.gamma == GAMMA_MATCH and any(neg):
            raise WireError("match searches cannot carry negative tokens")
        bloom = srv.egdb.xfilter
        for i in range(len(pos)):
            idx = start - 1 + i  # 0-based tuple index for this counter
            if idx >= len(sess.tuples):
                continue  # counters beyond the stored chain are ignored
            ptoks = [self._element(t) for t in pos[i]]
            ntoks = [self._element(t) for t in neg[i]]
            y, enc_id = sess.tuples[idx]
            if evaluate_tuple(bloom, y, ptoks, ntoks, sess.gamma, sess.k_prime):
                if sess.gamma == GAMMA_COUNT:
                    sess.count += 1
                else:
                    sess.matched.append(enc_id)
        sess.next_counter += len(pos)
        if final:
            covered = sess.next_counter - 1
            if covered < len(sess.tuples):
                log.warning(
                    "token stream covered %d of %d tuples; excess tuples excluded",
                    covered, len(sess.tuples),
                )
            with srv.sessions_lock:
                srv.sessions.pop(sid, None)
            if sess.gamma == GAMMA_COUNT:
                send_frame(self.connection, MSG_RESULT,
                           {"session": sid, "count": sess.count})
            else:
                send_frame(self.connection, MSG_RESULT,
                           {"session": sid, "enc_ids": [b64e(e) for e in sess.matched]})

    @staticmethod
    def _element(text) -> GroupElement:
        try:
            return GroupElement.decode(b64d(text))
        except ValueError as exc:
            raise WireError(f"malformed group element: {exc}") from None


# --- vetter-side search client ------------------------------------------------------

def execute_search(server_addr, keys: KeySet, eq, batch: int = DEFAULT_BATCH,
                   on_frame=None, timeout: float = 60.0) -> ResultSet:
    """Drive the two-round protocol against a data server.

    ``on_frame(direction, msg_type, body_bytes)`` observes every frame; the
    transcript tests use it to audit exactly what a network eavesdropper (or
    the server itself) gets to see.
    """
    with socket.create_connection(server_addr, timeout=timeout) as sock:
        sock.settimeout(timeout)
        rd = sock.makefile("rb")

        def send(mtype, obj):
            raw = send_frame(sock, mtype, obj)
            if on_frame:
                on_frame("send", mtype, raw[5:])

        def recv():
            mtype, obj, body = read_frame(rd)
            if mtype == 0:
                raise ServiceError("server closed the connection")
            if on_frame:
                on_frame("recv", mtype, body)
            if mtype == MSG_ERROR:
                raise ServiceError(obj.get("error", "server error"))
            return mtype, obj

        init = {"stag": b64e(TSet.tag(keys.k_t, eq.sterm)), "gamma": eq.gamma}
        if eq.gamma == GAMMA_MATCH:
            init["k_prime"] = eq.k_prime
        send(MSG_SEARCH_INIT, init)
        mtype, obj = recv()
        if mtype != MSG_STERM_COUNT:
            raise ServiceError(f"expected tuple count, got message type {mtype}")
        sid = obj.get("session")
        inv_len = obj.get("count")
        if not isinstance(sid, str) or not isinstance(inv_len, int) or inv_len < 0:
            raise ServiceError("malformed tuple-count response")

        token = generate_token(eq, keys, inv_len)
        start = 1
        while True:
            hi = min(start - 1 + batch, token.counters)
            frame = {
                "session": sid,
                "start": start,
                "pos": [[b64e(e.encode()) for e in token.pos[c]] for c in range(start - 1, hi)],
                "neg": [[b64e(e.encode()) for e in token.neg[c]] for c in range(start - 1, hi)],
                "final": hi >= token.counters,
            }
            send(MSG_XTOKENS, frame)
            if frame["final"]:
                break
            start = hi + 1
        mtype, obj = recv()
        if mtype != MSG_RESULT:
            raise ServiceError(f"expected result, got message type {mtype}")
        if eq.gamma == GAMMA_COUNT:
            count = obj.get("count")
            if not isinstance(count, int) or count < 0:
                raise ServiceError("malformed count result")
            return ResultSet(eq.gamma, count=count)
        enc = obj.get("enc_ids")
        if not isinstance(enc, list):
            raise ServiceError("malformed id result")
        return ResultSet(eq.gamma, enc_ids=tuple(b64d(x) for x in enc))


# --- vetter ---------------------------------------------------------------------------

class Vetter(socketserver.ThreadingTCPServer):
    """Trusted gatekeeper: holds the keys, enforces policy, vets releases."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, keys: KeySet, policy: Policy, server_addr,
                 audit_path=None, batch: int = DEFAULT_BATCH):
        self.keys = keys
        self.policy = policy
        self.server_addr = server_addr
        self.audit_path = audit_path
        self.audit_lock = threading.Lock()
        self.batch = batch
        super().__init__(addr, _VetterHandler)

    def audit(self, user: str, query_type: str, where: str, outcome: str) -> None:
        line = (
            f"{datetime.now(timezone.utc).isoformat()} user={user!r} "
            f"type={query_type} where={where!r} outcome={outcome}\n"
        )
        if self.audit_path is None:
            log.info("audit: %s", line.strip())
            return
        with self.audit_lock:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(line)


class _VetterHandler(socketserver.StreamRequestHandler):
    timeout = 300

    def handle(self):
        while True:
            try:
                mtype, obj, _ = read_frame(self.rfile)
            except WireError as exc:
                self._send(MSG_ERROR, {"error": f"bad frame: {exc}"})
                return
            if mtype == 0:
                return
            if mtype != MSG_QUERY:
                self._send(MSG_ERROR, {"error": f"unexpected message type {mtype}"})
                return
            self._query(obj)

    def _send(self, mtype, obj):
        try:
            send_frame(self.connection, mtype, obj)
        except OSError:
            pass

    def _query(self, obj: dict):
        srv: Vetter = self.server
        user = obj.get("user", "")
        qtype = obj.get("type", "")
        where = obj.get("where", "")
        k_prime = obj.get("k_prime")
        if not isinstance(user, str) or not isinstance(qtype, str) or not isinstance(where, str):
            srv.audit(str(user), str(qtype), str(where), "denied:parse")
            self._send(MSG_DENIED, {"reason": "parse", "detail": "malformed query fields"})
            return
        ok, why = vet_request(user, qtype, srv.policy) if qtype in ("count", "boolean", "match") \
            else (False, f"unknown query type {qtype!r}")
        if not ok:
            srv.audit(user, qtype, where, "denied:auth")
            self._send(MSG_DENIED, {"reason": "auth", "detail": why})
            return
        try:
            query = parse_query(where, qtype, k_prime, user)
            eq = encode_query(query)
        except QueryError as exc:
            srv.audit(user, qtype, where, "denied:parse")
            self._send(MSG_DENIED, {"reason": "parse", "detail": str(exc)})
            return
        try:
            res = execute_search(srv.server_addr, srv.keys, eq, batch=srv.batch)
        except (OSError, WireError, ServiceError) as exc:
            srv.audit(user, qtype, where, "error:upstream")
            self._send(MSG_ERROR, {"error": f"data server unavailable: {exc}"})
            return
        if eq.gamma == GAMMA_COUNT:
            released = vet_count(res.count, srv.policy)
            if released is None:
                srv.audit(user, qtype, where, "denied:threshold")
                self._send(MSG_DENIED, {
                    "reason": "threshold",
                    "detail": f"count below release threshold {srv.policy.threshold}",
                })
                return
            srv.audit(user, qtype, where, f"answered:count={released}")
            self._send(MSG_ANSWER, {"count": released})
            return
        try:
            ids = decrypt_ids(res.enc_ids, eq.sterm, srv.keys)
        except TamperingError as exc:
            srv.audit(user, qtype, where, "error:tampering")
            self._send(MSG_ERROR, {"error": str(exc)})
            return
        ids = vet_ids(ids)
        srv.audit(user, qtype, where, f"answered:ids={len(ids)}")
        self._send(MSG_ANSWER, {"ids": ids})


# --- user-side client -------------------------------------------------------------------

def submit_query(vetter_addr, user: str, query_type: str, where: str,
                 k_prime: "int | None" = None, timeout: float = 300.0) -> "tuple[int, dict]":
    """Send one query to a vetter; returns (message type, body)."""
    obj = {"user": user, "type": query_type, "where": where}
    if k_prime is not None:
        obj["k_prime"] = k_prime
    with socket.create_connection(vetter_addr, timeout=timeout) as sock:
        sock.settimeout(timeout)
        send_frame(sock, MSG_QUERY, obj)
        rd = sock.makefile("rb")
        mtype, body, _ = read_frame(rd)
        if mtype == 0:
            raise ServiceError("vetter closed the connection")
        return mtype, body


# --- daemon entry points ------------------------------------------------------------------

def serve_data(egdb_path, listen: str, idle_timeout: float = 300.0) -> None:
    egdb = load_egdb(egdb_path)
    addr = parse_hostport(listen)
    with DataServer(addr, egdb, idle_timeout) as srv:
        log.info("data server on %s:%d (%d entries)", *srv.server_address,
                 egdb.params.n_entries)
        srv.serve_forever()


def serve_vetter(keys_path, policy_path, server: str, listen: str,
                 audit_path=None) -> None:
    keys = load_keys(keys_path)
    with open(policy_path, "r", encoding="utf-8") as fh:
        policy = parse_policy(fh.read())
    addr = parse_hostport(listen)
    with Vetter(addr, keys, policy, parse_hostport(server), audit_path) as srv:
        log.info("vetter on %s:%d (%d users)", *srv.server_address, len(policy.roles))
        srv.serve_forever()
