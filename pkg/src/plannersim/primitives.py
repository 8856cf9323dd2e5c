"""Deterministic, seedable crypto primitives modeling (not securing) the real thing.

Real algorithms (Ed25519, X25519, AES-GCM, SHA-256) are used so that message
sizes are meaningful, but all key material is derived from explicit seeds so a
full simulation run is byte-reproducible.

Canonical encoding: fields serialized in order, each as a 4-byte big-endian
length followed by the raw bytes.
"""
from __future__ import annotations

import hashlib
import hmac as _hmac
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import MacFailure, SealCorrupted, WrongCodeIdentity

DIGEST_BYTES = 32
NONCE_BYTES = 16


# --- canonical encoding -----------------------------------------------------

def encode_fields(*fields: bytes) -> bytes:
    """Length-prefix each field (4-byte big-endian) and concatenate."""
    out = bytearray()
    for f in fields:
        out += struct.pack(">I", len(f))
        out += f
    return bytes(out)


def encode_int(value: int) -> bytes:
    return struct.pack(">q", value)


def encode_index_list(indices) -> bytes:
    """Client-index lists are sorted ascending and packed as 4-byte ints."""
    return b"".join(struct.pack(">I", i) for i in sorted(indices))


def hash_data(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _derive(*parts: bytes) -> bytes:
    return hashlib.sha256(encode_fields(*parts)).digest()


# --- key pairs and signatures -----------------------------------------------

@dataclass(frozen=True)
class KeyPair:
    """Signing (Ed25519) plus key-agreement (X25519) material, both seed-derived.

    public_key / secret_key are opaque 64-byte blobs: 32 bytes of signing key
    followed by 32 bytes of DH key.
    """

    public_key: bytes
    secret_key: bytes
    owner_id: str = ""


def keygen(seed: int, owner_id: str = "") -> KeyPair:
    sign_seed = _derive(b"sign-key", encode_int(seed))
    dh_seed = _derive(b"dh-key", encode_int(seed))
    sign_sk = Ed25519PrivateKey.from_private_bytes(sign_seed)
    dh_sk = X25519PrivateKey.from_private_bytes(dh_seed)
    pk = (
        sign_sk.public_key().public_bytes_raw()
        + dh_sk.public_key().public_bytes_raw()
    )
    return KeyPair(public_key=pk, secret_key=sign_seed + dh_seed, owner_id=owner_id)


def sign(secret_key: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret_key[:32]).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key[:32]).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# --- key agreement and authenticated encryption -----------------------------

def dh_shared(my_secret_key: bytes, peer_public_key: bytes) -> bytes:
    sk = X25519PrivateKey.from_private_bytes(my_secret_key[32:])
    pk = X25519PublicKey.from_public_bytes(peer_public_key[32:])
    return hash_data(sk.exchange(pk))


def aead_encrypt(key: bytes, nonce: bytes, plaintext: bytes) -> tuple[bytes, bytes]:
    blob = AESGCM(key).encrypt(nonce, plaintext, None)
    return blob[:-16], blob[-16:]


def aead_decrypt(key: bytes, nonce: bytes, ciphertext: bytes, mac: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(nonce, ciphertext + mac, None)
    except InvalidTag as exc:
        raise MacFailure("authenticated decryption failed") from exc


def mac_tag(key: bytes, message: bytes) -> bytes:
    return _hmac.new(key, message, hashlib.sha256).digest()


def mac_verify(key: bytes, message: bytes, tag: bytes) -> bool:
    return _hmac.compare_digest(mac_tag(key, message), tag)


# --- attestation quotes -----------------------------------------------------

@dataclass(frozen=True)
class Quote:
    code_id: bytes
    payload: bytes
    signature: bytes


def attest(code_id: bytes, payload: bytes, manufacturer_sk: bytes) -> Quote:
    sig = sign(manufacturer_sk, encode_fields(code_id, payload))
    return Quote(code_id=code_id, payload=payload, signature=sig)


def verify_quote(quote: Quote, expected_code_id: bytes, manufacturer_pk: bytes) -> bool:
    if quote.code_id != expected_code_id:
        return False
    return verify(
        manufacturer_pk, encode_fields(quote.code_id, quote.payload), quote.signature
    )


# --- sealing ----------------------------------------------------------------

@dataclass(frozen=True)
class SealedBlob:
    """Adversary-copyable sealed state: replaying an old blob is allowed here;
    staleness must be caught by the protocol layer."""

    code_id: bytes
    ciphertext: bytes
    tag: bytes


def _seal_key(code_id: bytes) -> bytes:
    return _derive(b"seal-key", code_id)


def seal(code_id: bytes, state_bytes: bytes) -> SealedBlob:
    nonce = _derive(b"seal-nonce", code_id, state_bytes)[:NONCE_BYTES]
    ct, tag = aead_encrypt(_seal_key(code_id), nonce, state_bytes)
    return SealedBlob(code_id=code_id, ciphertext=nonce + ct, tag=tag)


def unseal(code_id: bytes, blob: SealedBlob) -> bytes:
    if blob.code_id != code_id:
        raise WrongCodeIdentity("sealed blob bound to a different code identity")
    nonce, ct = blob.ciphertext[:NONCE_BYTES], blob.ciphertext[NONCE_BYTES:]
    try:
        return aead_decrypt(_seal_key(code_id), nonce, ct, blob.tag)
    except MacFailure as exc:
        raise SealCorrupted("sealed blob tampered") from exc


# --- seeded nonce source ----------------------------------------------------

class NonceSource:
    """Counter-based 16-byte nonce generator, confined to one owning party."""

    def __init__(self, seed: bytes):
        self._seed = seed
        self._counter = 0

    def next(self) -> bytes:
        n = _derive(b"nonce", self._seed, encode_int(self._counter))[:NONCE_BYTES]
        self._counter += 1
        return n


def derive_seed(master_seed: int, *labels) -> bytes:
    """Split a master seed into independent per-party / per-purpose seeds."""
    parts = [b"split", encode_int(master_seed)]
    for label in labels:
        parts.append(label if isinstance(label, bytes) else str(label).encode())
    return _derive(*parts)


def seed_to_int(seed: bytes) -> int:
    # Masked to 63 bits so derived seeds survive signed 64-bit encoding.
    return int.from_bytes(seed[:8], "big") & (2**63 - 1)
