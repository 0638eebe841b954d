"""Cryptographic primitives for the encrypted index.

Five independent symmetric keys drive the scheme: k_s derives per-keyword
record-encryption keys, k_x and k_i produce the exponents behind cross-tags,
k_z produces the per-counter blinding exponents, and k_t keys the tuple-set
labels. Group exponentiation lives on P-256 (prime order, cofactor 1); the
fixed-base path goes through OpenSSL, the variable-base path through the
Jacobian code in ``p256`` (each is validated against the other in tests).
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass
from typing import Iterable, Protocol

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import p256

ORDER = p256.N
SUPPORTED_LAMBDA_BITS = (128, 256)

_CURVE = ec.SECP256R1()
_NONCE_LEN = 12
_ID_LEN = 8
_TAG_LEN = 16
ENC_ID_LEN = _NONCE_LEN + _ID_LEN + _TAG_LEN  # fixed-width ciphertexts

MAX_RECORD_ID = 2**64 - 1


class AuthenticationError(Exception):
    """Ciphertext failed integrity verification."""


class Rng(Protocol):
    def bytes(self, n: int) -> bytes: ...


class SystemRng:
    """OS entropy; the default for anything that touches real keys."""

    def bytes(self, n: int) -> bytes:
        return os.urandom(n)


class SeededRng:
    """Deterministic byte stream for reproducible builds and tests.

    Draws SHAKE-256(seed || call_counter); the stream therefore depends on
    the sequence of request sizes, which is stable for a fixed code path.
    """

    def __init__(self, seed: int | bytes):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=False)
        self._seed = bytes(seed)
        self._calls = 0

    def bytes(self, n: int) -> bytes:
        ctr = self._calls.to_bytes(8, "big")
        self._calls += 1
        return hashlib.shake_256(self._seed + ctr).digest(n)


@dataclass(frozen=True, slots=True)
class GroupElement:
    """Point on P-256; ``point is None`` encodes the identity element."""

    point: "tuple[int, int] | None"

    def encode(self) -> bytes:
        return p256.encode_point(self.point)

    @classmethod
    def decode(cls, data: bytes) -> "GroupElement":
        return cls(p256.decode_point(data))

    def is_identity(self) -> bool:
        return self.point is None


IDENTITY = GroupElement(None)
ELEMENT_LEN = p256.ENCODED_LEN


@dataclass(frozen=True, slots=True)
class KeySet:
    """The owner's master secret: five independent lambda-bit keys."""

    k_s: bytes  # record-key derivation
    k_x: bytes  # cross-tag keyword exponents
    k_i: bytes  # cross-tag record exponents
    k_z: bytes  # counter blinding exponents
    k_t: bytes  # tuple-set label derivation
    lam: int = 128

    def __post_init__(self):
        if self.lam not in SUPPORTED_LAMBDA_BITS:
            raise ValueError(f"unsupported lambda {self.lam}")
        w = self.lam // 8
        for name in ("k_s", "k_x", "k_i", "k_z", "k_t"):
            if len(getattr(self, name)) != w:
                raise ValueError(f"{name} must be {w} bytes")


def keygen(lam: int = 128, rng: Rng | None = None) -> KeySet:
    if lam not in SUPPORTED_LAMBDA_BITS:
        raise ValueError(f"unsupported lambda {lam}")
    rng = rng or SystemRng()
    w = lam // 8
    return KeySet(rng.bytes(w), rng.bytes(w), rng.bytes(w), rng.bytes(w), rng.bytes(w), lam)


# --- PRFs -------------------------------------------------------------------

def prf_f(key: bytes, data: bytes) -> bytes:
    """Keyed PRF onto lambda-bit strings (HMAC-SHA256, truncated)."""
    return hmac.digest(key, data, "sha256")[: len(key)]


def prf_fp(key: bytes, data: bytes) -> int:
    """Keyed PRF onto the nonzero scalars mod the group order.

    A 512-bit HMAC reduced mod a 256-bit order keeps the bias below 2^-250;
    the zero-output retry is unreachable in practice but kept for totality.
    """
    d = hmac.digest(key, data, "sha512")
    while True:
        v = int.from_bytes(d, "big") % ORDER
        if v:
            return v
        d = hmac.digest(key, b"\x01" + d, "sha512")


def scalar_inverse(z: int) -> int:
    z %= ORDER
    if z == 0:
        raise ValueError("zero has no inverse")
    return pow(z, -1, ORDER)


def batch_inverse(zs) -> list:
    """Inverses of many scalars with one modular inversion (3 mults each).

    Classic prefix-product trick; worthwhile because the index build inverts
    one blinding scalar per entry and pow(z, -1, n) alone costs ~10x a mult.
    """
    zs = list(zs)
    if not zs:
        return []
    prefix = [0] * len(zs)
    acc = 1
    for i, z in enumerate(zs):
        z %= ORDER
        if z == 0:
            raise ValueError("zero has no inverse")
        prefix[i] = acc  # product of zs[:i]
        acc = acc * z % ORDER
    inv = pow(acc, -1, ORDER)
    out = [0] * len(zs)
    for i in range(len(zs) - 1, -1, -1):
        out[i] = inv * prefix[i] % ORDER
        inv = inv * zs[i] % ORDER
    return out


# --- group exponentiation ---------------------------------------------------

def base_pow(e: int) -> GroupElement:
    """h^e for the fixed generator h (OpenSSL fixed-base path)."""
    e %= ORDER
    if e == 0:
        return IDENTITY
    pub = ec.derive_private_key(e, _CURVE).public_key().public_numbers()
    return GroupElement((pub.x, pub.y))


def group_pow(elem: GroupElement, e: int) -> GroupElement:
    """elem^e for arbitrary elem (pure-Python variable-base path)."""
    return GroupElement(p256.mul(elem.point, e))


def _ecdh_x(point: "tuple[int, int]", e: int) -> int:
    """x-coordinate of e * point computed entirely inside OpenSSL."""
    peer = ec.EllipticCurvePublicNumbers(point[0], point[1], _CURVE).public_key()
    shared = ec.derive_private_key(e, _CURVE).exchange(ec.ECDH(), peer)
    return int.from_bytes(shared, "big")


def _affine_add(p1, p2):
    # textbook affine chord-and-tangent addition; test-path only
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2:
        if (y1 + y2) % p256.P == 0:
            return None
        lam = (3 * x1 * x1 + p256.A) * pow(2 * y1, -1, p256.P) % p256.P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p256.P) % p256.P
    x3 = (lam * lam - x1 - x2) % p256.P
    return x3, (lam * (x1 - x3) - y1) % p256.P


def group_pow_via_openssl(elem: GroupElement, e: int) -> GroupElement:
    """Independent route for elem^e used to cross-check ``group_pow``.

    ECDH exchanges yield the x-coordinates of e*elem and (e+1)*elem inside
    OpenSSL; the sign of y is the choice under which e*elem + elem lands on
    the second x (textbook affine addition, no shared ladder code). Too slow
    for the hot path; kept so tests have a second, disjoint implementation.
    """
    e %= ORDER
    if e == 0 or elem.is_identity():
        return IDENTITY
    if e == 1:
        return elem
    x, y = elem.point
    if e == ORDER - 1:
        return GroupElement((x, p256.P - y))  # the inverse of elem
    sx = _ecdh_x((x, y), e)
    sy = p256.sqrt_mod_p((sx * sx * sx + p256.A * sx + p256.B) % p256.P)
    if sy is None:
        raise ArithmeticError("ECDH x not on curve")
    next_x = _ecdh_x((x, y), e + 1)
    stepped = _affine_add((sx, sy), (x, y))
    if stepped is None or stepped[0] != next_x:
        sy = p256.P - sy
    return GroupElement((sx, sy))


# --- authenticated record-id encryption --------------------------------------

def sym_encrypt(key: bytes, record_id: int, rng: Rng | None = None) -> bytes:
    """AES-GCM over the 8-byte record id; output is nonce || ct || tag."""
    if not (1 <= record_id <= MAX_RECORD_ID):
        raise ValueError(f"record id out of range: {record_id}")
    rng = rng or SystemRng()
    nonce = rng.bytes(_NONCE_LEN)
    ct = AESGCM(key).encrypt(nonce, record_id.to_bytes(_ID_LEN, "big"), None)
    return nonce + ct


def sym_decrypt(key: bytes, blob: bytes) -> int:
    if len(blob) != ENC_ID_LEN:
        raise AuthenticationError(f"ciphertext must be {ENC_ID_LEN} bytes")
    try:
        pt = AESGCM(key).decrypt(blob[:_NONCE_LEN], blob[_NONCE_LEN:], None)
    except InvalidTag as exc:
        raise AuthenticationError("record-id ciphertext failed authentication") from exc
    return int.from_bytes(pt, "big")


# --- input framing ------------------------------------------------------------

def frame(*parts: bytes) -> bytes:
    """Length-prefixed concatenation; injective over tuples of byte strings."""
    out = bytearray()
    for part in parts:
        out += len(part).to_bytes(4, "little")
        out += part
    return bytes(out)


def keyword_bytes(keyword: str) -> bytes:
    return keyword.encode("utf-8")


def keyword_counter(keyword: str, counter: int) -> bytes:
    """PRF input for the (keyword, counter) pair; framing keeps it injective."""
    return frame(keyword.encode("utf-8"), counter.to_bytes(8, "little"))


def id_bytes(record_id: int) -> bytes:
    if not (1 <= record_id <= MAX_RECORD_ID):
        raise ValueError(f"record id out of range: {record_id}")
    return record_id.to_bytes(8, "big")


# --- key file I/O -------------------------------------------------------------

KEY_MAGIC = b"PGDBKEY1"


def save_keys(keys: KeySet, path) -> None:
    """Owner-only key file: magic then the five keys in fixed order."""
    blob = KEY_MAGIC + keys.k_s + keys.k_x + keys.k_i + keys.k_z + keys.k_t
    fd = os.open(str(path), os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.write(fd, blob)
    finally:
        os.close(fd)


def load_keys(path) -> KeySet:
    with open(str(path), "rb") as fh:
        blob = fh.read()
    if blob[: len(KEY_MAGIC)] != KEY_MAGIC:
        raise ValueError("not a key file (bad magic)")
    body = blob[len(KEY_MAGIC):]
    if len(body) % 5:
        raise ValueError("truncated key file")
    w = len(body) // 5
    if w * 8 not in SUPPORTED_LAMBDA_BITS:
        raise ValueError(f"key file has unsupported key width {w}")
    ks = [body[i * w : (i + 1) * w] for i in range(5)]
    return KeySet(*ks, lam=w * 8)
