"""Encrypted index construction and on-disk format.

The server-visible database has two halves: a tuple set (label -> masked
payload) holding, per keyword, the chain of (blinding scalar, encrypted
record id) tuples addressed by per-counter labels, and a Bloom filter of
cross-tag group elements that lets conjunctions be tested without revealing
which keyword matched. Cross-tags themselves are discarded after insertion;
only the filter ships to the server.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .crypto import (
    ENC_ID_LEN,
    ORDER,
    KeySet,
    Rng,
    SystemRng,
    base_pow,
    batch_inverse,
    id_bytes,
    keyword_bytes,
    keyword_counter,
    prf_f,
    prf_fp,
)

_MASK64 = (1 << 64) - 1

Y_LEN = 32
TUPLE_LEN = Y_LEN + ENC_ID_LEN  # plaintext tuple body: y scalar || enc record id


class IndexBuildError(Exception):
    """Index construction hit an internal inconsistency (e.g. label collision)."""


class CorruptIndexError(Exception):
    """Stored index data failed a structural or checksum validation."""


# --- plaintext inverted index ---------------------------------------------------

def build_inverted_index(gdb) -> dict:
    """keyword -> ascending list of record IDs holding that keyword.

    Duplicate keywords within one record (e.g. the same metadata value in two
    columns) index the record once, matching ``record_keywords`` semantics.
    """
    from .encoding import ID_KEYWORD_PREFIX

    iinx: dict = {}
    snp_kw = [dict() for _ in range(64)]  # (column, genotype) -> cached keyword str
    for rec in sorted(gdb.records, key=lambda r: r.id):
        while len(snp_kw) < len(rec.genotypes):
            snp_kw.append(dict())
        kws = set()
        for i, g in enumerate(rec.genotypes):
            kw = snp_kw[i].get(g)
            if kw is None:
                kw = snp_kw[i].setdefault(g, f"{i + 1}{g}")
            kws.add(kw)
        kws.add(rec.phenotype)
        kws.update(v for _, v in rec.metadata)
        kws.add(f"{ID_KEYWORD_PREFIX}{rec.id}")
        rid = rec.id
        for kw in kws:
            lst = iinx.get(kw)
            if lst is None:
                lst = iinx.setdefault(kw, [])
            lst.append(rid)
    return iinx


def index_entry_count(iinx: dict) -> int:
    return sum(len(ids) for ids in iinx.values())


# --- Bloom filter ----------------------------------------------------------------

class BloomFilter:
    """Double-hashing Bloom filter over byte strings.

    Bit positions are ((h1 + i*h2) mod 2^64) mod m for i < k, with h1, h2
    drawn from one SHA-256 of the element (h2 forced odd). The mod-2^64 wrap
    is part of the definition so the vectorized and scalar paths agree.
    """

    __slots__ = ("m", "k", "bits")

    def __init__(self, m: int, k: int, bits: "np.ndarray | None" = None):
        if m < 8 or k < 1:
            raise ValueError(f"bad bloom geometry m={m} k={k}")
        self.m = m
        self.k = k
        nbytes = (m + 7) // 8
        if bits is None:
            bits = np.zeros(nbytes, dtype=np.uint8)
        elif len(bits) != nbytes:
            raise ValueError("bloom bit array length does not match m")
        self.bits = bits

    @classmethod
    def with_capacity(cls, n: int, p_fp: float) -> "BloomFilter":
        """Geometry for n elements at target false-positive rate p_fp."""
        if not (0.0 < p_fp < 1.0):
            raise ValueError(f"p_fp must be in (0,1), got {p_fp}")
        n = max(1, n)
        m = max(64, math.ceil(-n * math.log(p_fp) / math.log(2) ** 2))
        k = max(1, math.ceil(m / n * math.log(2)))
        return cls(m, k)

    @staticmethod
    def _hash_pair(data: bytes) -> "tuple[int, int]":
        d = hashlib.sha256(data).digest()
        return int.from_bytes(d[:8], "little"), int.from_bytes(d[8:16], "little") | 1

    def insert(self, data: bytes) -> None:
        h1, h2 = self._hash_pair(data)
        m, bits = self.m, self.bits
        for i in range(self.k):
            pos = ((h1 + i * h2) & _MASK64) % m
            bits[pos >> 3] |= 1 << (pos & 7)

    def insert_many(self, items) -> None:
        """Vectorized bulk insert; equivalent to insert() per item."""
        pairs = [self._hash_pair(it) for it in items]
        if not pairs:
            return
        h1 = np.array([p[0] for p in pairs], dtype=np.uint64)
        h2 = np.array([p[1] for p in pairs], dtype=np.uint64)
        steps = np.arange(self.k, dtype=np.uint64)
        pos = (h1[:, None] + steps[None, :] * h2[:, None]) % np.uint64(self.m)
        byte_idx = (pos >> np.uint64(3)).ravel()
        bit_val = np.left_shift(np.uint8(1), (pos & np.uint64(7)).ravel().astype(np.uint8))
        np.bitwise_or.at(self.bits, byte_idx, bit_val)

    def __contains__(self, data: bytes) -> bool:
        h1, h2 = self._hash_pair(data)
        m, bits = self.m, self.bits
        for i in range(self.k):
            pos = ((h1 + i * h2) & _MASK64) % m
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
        return True

    def to_bytes(self) -> bytes:
        return struct.pack("<QB", self.m, self.k) + self.bits.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BloomFilter":
        if len(blob) < 9:
            raise CorruptIndexError("bloom header truncated")
        m, k = struct.unpack_from("<QB", blob, 0)
        body = blob[9:]
        if len(body) != (m + 7) // 8:
            raise CorruptIndexError("bloom bit array truncated")
        return cls(m, k, np.frombuffer(body, dtype=np.uint8).copy())


# --- tuple set --------------------------------------------------------------------

def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


class TSet:
    """Oblivious label -> payload table addressed by per-keyword tags.

    Each keyword's tuples live at labels PRF(stag, counter) and are XOR-masked
    by an independently derived pad; a one-byte chain flag marks the last
    tuple, so retrieval needs no stored length. Without the stag, entries are
    indistinguishable from random.
    """

    __slots__ = ("table", "label_width", "payload_width")

    def __init__(self, table: dict, label_width: int, payload_width: int):
        self.table = table
        self.label_width = label_width
        self.payload_width = payload_width

    @staticmethod
    def tag(k_t: bytes, keyword: str) -> bytes:
        return prf_f(k_t, keyword_bytes(keyword))

    @staticmethod
    def _label(stag: bytes, c: int) -> bytes:
        return hmac.digest(stag, b"L" + c.to_bytes(8, "little"), "sha256")[: len(stag)]

    @staticmethod
    def _mask(stag: bytes, c: int, width: int) -> bytes:
        return hashlib.shake_256(b"M" + stag + c.to_bytes(8, "little")).digest(width)

    @classmethod
    def setup(cls, per_keyword, k_t: bytes, payload_len: int = TUPLE_LEN) -> "TSet":
        """Build from an iterable of (keyword, [payload bytes, ...]) pairs."""
        table: dict = {}
        label_width = len(k_t)
        stored_width = 1 + payload_len
        for keyword, payloads in per_keyword:
            if not payloads:
                continue
            stag = cls.tag(k_t, keyword)
            last = len(payloads)
            for c, payload in enumerate(payloads, 1):
                if len(payload) != payload_len:
                    raise IndexBuildError(
                        f"payload for {keyword!r} has {len(payload)} bytes, want {payload_len}"
                    )
                label = cls._label(stag, c)
                if label in table:
                    raise IndexBuildError("tuple-set label collision; rebuild with new keys")
                flag = b"\x01" if c == last else b"\x00"
                table[label] = _xor(flag + payload, cls._mask(stag, c, stored_width))
        return cls(table, label_width, stored_width)

    def retrieve(self, stag: bytes) -> list:
        """All payloads chained under stag, counter order; [] if none exist."""
        out = []
        c = 1
        while True:
            masked = self.table.get(self._label(stag, c))
            if masked is None:
                if c == 1:
                    return []
                raise CorruptIndexError(f"tuple chain truncated at counter {c}")
            body = _xor(masked, self._mask(stag, c, self.payload_width))
            flag = body[0]
            if flag not in (0, 1):
                raise CorruptIndexError(f"bad tuple flag byte {flag:#x} at counter {c}")
            out.append(body[1:])
            if flag == 1:
                return out
            c += 1

    def __len__(self):
        return len(self.table)


# --- encrypted database -------------------------------------------------------------

GROUP_P256 = 1
EGDB_MAGIC = b"PGDBEDB1"
EGDB_VERSION = 1


@dataclass(frozen=True, slots=True)
class EgdbParams:
    p_fp: float
    label_width: int
    payload_width: int
    n_entries: int
    group_id: int = GROUP_P256


@dataclass(slots=True)
class Egdb:
    tset: TSet
    xfilter: BloomFilter
    params: EgdbParams


_BLOOM_FLUSH = 1 << 18


def build_egdb(keys: KeySet, iinx: dict, rng: "Rng | None" = None,
               p_fp: float = 1e-6) -> Egdb:
    """Encrypt an inverted index into a server-ready database.

    Keywords are processed in sorted order so a seeded rng yields a
    byte-identical database. Cross-tags are inserted into the Bloom filter
    in batches and never retained.
    """
    rng = rng or SystemRng()
    n_entries = index_entry_count(iinx)
    bloom = BloomFilter.with_capacity(n_entries, p_fp)
    xid_cache: dict = {}
    pending: list = []

    def per_keyword():
        k_x, k_s, k_i, k_z = keys.k_x, keys.k_s, keys.k_i, keys.k_z
        for g in sorted(iinx):
            ids = iinx[g]
            if not ids:
                continue
            gb = keyword_bytes(g)
            x_g = prf_fp(k_x, gb)
            aes = AESGCM(prf_f(k_s, gb))
            z_inv = batch_inverse(
                prf_fp(k_z, keyword_counter(g, c)) for c in range(1, len(ids) + 1)
            )
            payloads = []
            for c, rid in enumerate(ids, 1):
                xid = xid_cache.get(rid)
                if xid is None:
                    xid = xid_cache.setdefault(rid, prf_fp(k_i, id_bytes(rid)))
                y = xid * z_inv[c - 1] % ORDER
                nonce = rng.bytes(12)  # same bytes sym_encrypt would produce
                enc_id = nonce + aes.encrypt(nonce, rid.to_bytes(8, "big"), None)
                pending.append(base_pow(x_g * xid % ORDER).encode())
                if len(pending) >= _BLOOM_FLUSH:
                    bloom.insert_many(pending)
                    pending.clear()
                payloads.append(y.to_bytes(Y_LEN, "big") + enc_id)
            yield g, payloads

    tset = TSet.setup(per_keyword(), keys.k_t)
    if pending:
        bloom.insert_many(pending)
        pending.clear()
    params = EgdbParams(p_fp, tset.label_width, tset.payload_width, len(tset))
    return Egdb(tset, bloom, params)


def parse_tuple(payload: bytes) -> "tuple[int, bytes]":
    """Split a retrieved tuple into (y scalar, encrypted record id)."""
    if len(payload) != TUPLE_LEN:
        raise CorruptIndexError(f"tuple body has {len(payload)} bytes, want {TUPLE_LEN}")
    y = int.from_bytes(payload[:Y_LEN], "big")
    if not (1 <= y < ORDER):
        raise CorruptIndexError("tuple blinding scalar out of range")
    return y, payload[Y_LEN:]


# --- serialization -------------------------------------------------------------------

def serialize_egdb(egdb: Egdb, fh) -> int:
    """Write the database to a binary file; returns bytes written.

    Layout (little-endian): magic, version u16, group id u8, bloom
    (m u64, k u8, bits), entry count u64, label width u8, payload width u16,
    p_fp f64, then (label || payload) pairs sorted by label, then CRC32 of
    everything before it.
    """
    crc = 0
    total = 0

    def put(chunk: bytes):
        nonlocal crc, total
        fh.write(chunk)
        crc = zlib.crc32(chunk, crc)
        total += len(chunk)

    p = egdb.params
    put(EGDB_MAGIC)
    put(struct.pack("<HB", EGDB_VERSION, p.group_id))
    put(egdb.xfilter.to_bytes())
    put(struct.pack("<QBHd", p.n_entries, p.label_width, p.payload_width, p.p_fp))
    for label in sorted(egdb.tset.table):
        put(label + egdb.tset.table[label])
    fh.write(struct.pack("<I", crc))
    return total + 4


def egdb_to_bytes(egdb: Egdb) -> bytes:
    import io

    buf = io.BytesIO()
    serialize_egdb(egdb, buf)
    return buf.getvalue()


def load_egdb(source) -> Egdb:
    """Parse a serialized database; raises CorruptIndexError on any damage."""
    if isinstance(source, (bytes, bytearray)):
        blob = bytes(source)
    else:
        with open(str(source), "rb") as fh:
            blob = fh.read()
    if len(blob) < len(EGDB_MAGIC) + 3 + 9 + 19 + 4:
        raise CorruptIndexError("encrypted database file truncated")
    if blob[: len(EGDB_MAGIC)] != EGDB_MAGIC:
        raise CorruptIndexError("not an encrypted database file (bad magic)")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CorruptIndexError("checksum mismatch; file is damaged")
    off = len(EGDB_MAGIC)
    version, group_id = struct.unpack_from("<HB", blob, off)
    off += 3
    if version != EGDB_VERSION:
        raise CorruptIndexError(f"unsupported database version {version}")
    if group_id != GROUP_P256:
        raise CorruptIndexError(f"unsupported group id {group_id}")
    m, k = struct.unpack_from("<QB", blob, off)
    bloom_bytes = (m + 7) // 8
    bloom = BloomFilter.from_bytes(blob[off : off + 9 + bloom_bytes])
    off += 9 + bloom_bytes
    n_entries, label_w, payload_w, p_fp = struct.unpack_from("<QBHd", blob, off)
    off += 19
    pair_w = label_w + payload_w
    body = memoryview(blob)[off : len(blob) - 4]
    if len(body) != n_entries * pair_w:
        raise CorruptIndexError("entry table length mismatch")
    table = {}
    for i in range(n_entries):
        base = i * pair_w
        table[bytes(body[base : base + label_w])] = bytes(
            body[base + label_w : base + pair_w]
        )
    if len(table) != n_entries:
        raise CorruptIndexError("duplicate labels in entry table")
    tset = TSet(table, label_w, payload_w)
    return Egdb(tset, bloom, EgdbParams(p_fp, label_w, payload_w, n_entries, group_id))
