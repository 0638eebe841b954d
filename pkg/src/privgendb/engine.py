"""Query execution: trapdoor generation, encrypted search, result vetting.

The anchor keyword's tuple chain drives the search: for the c-th tuple the
server raises each supplied token to that tuple's blinding scalar y and tests
membership in the cross-tag filter. Positive tokens must all be present,
negative tokens must all be absent; threshold (match) queries instead count
hits among a single token list and compare against k'. The server never
learns which keywords are behind the tokens, only how many there are.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .crypto import (
    ORDER,
    AuthenticationError,
    GroupElement,
    KeySet,
    base_pow,
    group_pow,
    keyword_bytes,
    keyword_counter,
    prf_f,
    prf_fp,
    sym_decrypt,
)
from .encoding import GAMMA, EncodedQuery, Query, encode_query
from .index import BloomFilter, Egdb, TSet, parse_tuple

log = logging.getLogger("privgendb.engine")

GAMMA_BOOLEAN = GAMMA["boolean"]
GAMMA_COUNT = GAMMA["count"]
GAMMA_MATCH = GAMMA["match"]


class TamperingError(Exception):
    """A result ciphertext failed authentication; the server misbehaved."""


@dataclass(frozen=True, slots=True)
class SearchToken:
    """Per-counter token lists for one query; safe to hand to the server."""

    stag: bytes
    gamma: int
    k_prime: "int | None"
    pos: tuple  # pos[c-1] = tuple of GroupElements for counter c
    neg: tuple

    def __post_init__(self):
        if self.gamma not in (GAMMA_BOOLEAN, GAMMA_COUNT, GAMMA_MATCH):
            raise ValueError(f"bad gamma {self.gamma}")
        if len(self.pos) != len(self.neg):
            raise ValueError("positive/negative token lists must cover equal counters")
        if self.gamma == GAMMA_MATCH:
            if self.k_prime is None or self.k_prime < 1:
                raise ValueError("match tokens need k_prime >= 1")
            if any(n for n in map(len, self.neg)):
                raise ValueError("match tokens cannot carry negations")

    @property
    def counters(self) -> int:
        return len(self.pos)


@dataclass(frozen=True, slots=True)
class ResultSet:
    """Server's answer: a bare count for count queries, ciphertexts otherwise."""

    gamma: int
    count: "int | None" = None
    enc_ids: "tuple | None" = None

    def __post_init__(self):
        if self.gamma == GAMMA_COUNT:
            if self.count is None or self.enc_ids is not None:
                raise ValueError("count results carry a count and nothing else")
        elif self.enc_ids is None or self.count is not None:
            raise ValueError("id results carry ciphertexts and nothing else")


def generate_token(eq: EncodedQuery, keys: KeySet, inv_len: int) -> SearchToken:
    """Tokens for every (counter, cross-term) pair of an encoded query.

    ``inv_len`` is the anchor keyword's tuple count as reported by the server
    in round one; the token for counter c and cross-term keyword g is
    h^(z_c * x_g) where z_c blinds the counter and x_g fingerprints g.
    """
    if inv_len < 0:
        raise ValueError("inv_len must be non-negative")
    stag = TSet.tag(keys.k_t, eq.sterm)
    pos_x = [prf_fp(keys.k_x, keyword_bytes(kw)) for kw in eq.positive_xterms]
    neg_x = [prf_fp(keys.k_x, keyword_bytes(kw)) for kw in eq.negative_xterms]
    pos, neg = [], []
    for c in range(1, inv_len + 1):
        z = prf_fp(keys.k_z, keyword_counter(eq.sterm, c))
        pos.append(tuple(base_pow(z * x % ORDER) for x in pos_x))
        neg.append(tuple(base_pow(z * x % ORDER) for x in neg_x))
    return SearchToken(stag, eq.gamma, eq.k_prime, tuple(pos), tuple(neg))


def evaluate_tuple(bloom: BloomFilter, y: int, pos, neg, gamma: int,
                   k_prime: "int | None") -> bool:
    """Decide one tuple: raise each token to y and test filter membership."""
    if gamma == GAMMA_MATCH:
        need = k_prime
        left = len(pos)
        hits = 0
        for tok in pos:
            if group_pow(tok, y).encode() in bloom:
                hits += 1
                if hits >= need:
                    return True
            left -= 1
            if hits + left < need:
                return False
        return hits >= need
    for tok in pos:
        if group_pow(tok, y).encode() not in bloom:
            return False
    for tok in neg:
        if group_pow(tok, y).encode() in bloom:
            return False
    return True


def search(token: SearchToken, egdb: Egdb) -> ResultSet:
    """Run one query over the encrypted database (the untrusted-server role).

    An unknown anchor tag yields an empty result, indistinguishable from
    a keyword with no matches. Tuples beyond the token's counter coverage
    are excluded and logged as a protocol violation.
    """
    tuples = egdb.tset.retrieve(token.stag)
    if len(tuples) > token.counters:
        log.warning(
            "token covers %d counters but %d tuples are stored; excess excluded",
            token.counters, len(tuples),
        )
    bloom = egdb.xfilter
    matched = []
    count = 0
    for c, payload in enumerate(tuples[: token.counters]):
        y, enc_id = parse_tuple(payload)
        if evaluate_tuple(bloom, y, token.pos[c], token.neg[c], token.gamma, token.k_prime):
            if token.gamma == GAMMA_COUNT:
                count += 1
            else:
                matched.append(enc_id)
    if token.gamma == GAMMA_COUNT:
        return ResultSet(token.gamma, count=count)
    return ResultSet(token.gamma, enc_ids=tuple(matched))


def decrypt_ids(enc_ids, sterm: str, keys: KeySet) -> list:
    """Recover and sort the record ids behind a returned ciphertext list."""
    k_e = prf_f(keys.k_s, keyword_bytes(sterm))
    ids = set()
    for i, blob in enumerate(enc_ids):
        try:
            ids.add(sym_decrypt(k_e, blob))
        except AuthenticationError as exc:
            raise TamperingError(f"result ciphertext {i} failed authentication") from exc
    return sorted(ids)


def run_query(keys: KeySet, egdb: Egdb, query: Query, freq: "dict | None" = None):
    """Full in-process pipeline; returns a count or a sorted id list.

    Mirrors the networked flow exactly: round one retrieves the anchor
    chain length, round two generates tokens and searches.
    """
    eq = encode_query(query, freq)
    stag = TSet.tag(keys.k_t, eq.sterm)
    inv_len = len(egdb.tset.retrieve(stag))
    token = generate_token(eq, keys, inv_len)
    res = search(token, egdb)
    if eq.gamma == GAMMA_COUNT:
        return res.count
    return decrypt_ids(res.enc_ids, eq.sterm, keys)


# --- vetting -----------------------------------------------------------------------

ROLE_PERMISSIONS = {
    "analyst": frozenset({"count"}),
    "clinician": frozenset({"count", "boolean", "match"}),
}


@dataclass(frozen=True, slots=True)
class Policy:
    """Who may run what, plus the minimum count releasable to analysts."""

    roles: dict  # user name -> role
    threshold: int = 1

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        for user, role in self.roles.items():
            if role not in ROLE_PERMISSIONS:
                raise ValueError(f"unknown role {role!r} for user {user!r}")


def parse_policy(text: str) -> Policy:
    """Parse a policy file: `user <name> role <role>` lines plus `threshold <n>`."""
    roles = {}
    threshold = 1
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "user" and len(parts) == 4 and parts[2] == "role":
            roles[parts[1]] = parts[3]
        elif parts[0] == "threshold" and len(parts) == 2:
            try:
                threshold = int(parts[1])
            except ValueError:
                raise ValueError(f"policy line {lineno}: bad threshold {parts[1]!r}") from None
        else:
            raise ValueError(f"policy line {lineno}: cannot parse {raw.strip()!r}")
    return Policy(roles, threshold)


def vet_request(user: str, query_type: str, policy: Policy) -> "tuple[bool, str]":
    """Admission check before any token is generated."""
    role = policy.roles.get(user)
    if role is None:
        return False, f"unknown user {user!r}"
    if query_type not in ROLE_PERMISSIONS[role]:
        return False, f"role {role!r} may not run {query_type} queries"
    return True, ""


def vet_ids(ids) -> list:
    """Release vetting for id answers: deduplicate and sort ascending."""
    return sorted(set(ids))


def vet_count(count: int, policy: Policy) -> "int | None":
    """Release vetting for counts: None (withheld) below the policy threshold."""
    return count if count >= policy.threshold else None
