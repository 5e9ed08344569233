"""Hashing, domain-separated hashing and Ed25519 signatures."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

DIGEST_SIZE = 32
KEY_SIZE = 32
SIGNATURE_SIZE = 64


class Digest(bytes):
    """A 32-byte SHA-256 value. ``str()`` gives lowercase hex."""

    def __new__(cls, value: bytes | bytearray | memoryview) -> "Digest":
        value = bytes(value)
        if len(value) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def fromhex(cls, text: str) -> "Digest":  # type: ignore[override]
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex()

    def __repr__(self) -> str:
        return f"Digest({self.hex()[:16]}…)"


ZERO_DIGEST = Digest(bytes(DIGEST_SIZE))


class Tag(IntEnum):
    LEAF = 0x00
    NODE = 0x01
    ATTESTATION = 0x02
    TREE_HEAD = 0x03
    SNAPSHOT = 0x04


def hash(data: bytes) -> Digest:  # noqa: A001 - mirrors the protocol's h(.)
    return Digest(hashlib.sha256(data).digest())


def hash_tagged(tag: int, parts: Iterable[bytes]) -> Digest:
    """SHA-256 over a one-byte domain tag followed by the concatenated parts."""
    try:
        tag = Tag(tag)
    except ValueError:
        raise ValueError(f"unknown hash tag {tag!r}") from None
    h = hashlib.sha256(bytes([tag]))
    for part in parts:
        h.update(part)
    return Digest(h.digest())


def _check_len(name: str, value: bytes, size: int) -> bytes:
    if not isinstance(value, (bytes, bytearray, memoryview)) or len(value) != size:
        got = len(value) if isinstance(value, (bytes, bytearray, memoryview)) else type(value).__name__
        raise ValueError(f"{name} must be {size} bytes, got {got}")
    return bytes(value)


@dataclass(frozen=True)
class KeyPair:
    seed: bytes = field(repr=False)
    verifying_key: bytes

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        seed = _check_len("seed", seed, KEY_SIZE)
        private = Ed25519PrivateKey.from_private_bytes(seed)
        public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return cls(seed=seed, verifying_key=public)

    @property
    def _private(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.seed)

    def sign(self, payload: bytes) -> bytes:
        return self._private.sign(bytes(payload))


def keygen(seed: Optional[bytes] = None) -> KeyPair:
    if seed is None:
        private = Ed25519PrivateKey.generate()
        seed = private.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
    return KeyPair.from_seed(seed)


def sign(key: KeyPair, payload: bytes) -> bytes:
    return key.sign(payload)


def verify(verifying_key: bytes, payload: bytes, sig: bytes) -> bool:
    """True iff ``sig`` is a valid signature of ``payload`` under ``verifying_key``.

    Mismatches return False; keys or signatures of the wrong length raise ValueError.
    """
    verifying_key = _check_len("verifying key", verifying_key, KEY_SIZE)
    sig = _check_len("signature", sig, SIGNATURE_SIZE)
    try:
        public = Ed25519PublicKey.from_public_bytes(verifying_key)
        public.verify(sig, bytes(payload))
    except InvalidSignature:
        return False
    except ValueError:
        # not a valid curve point
        return False
    return True


def check_verifying_key(value: bytes) -> bytes:
    return _check_len("verifying key", value, KEY_SIZE)


def check_signature(value: bytes) -> bytes:
    return _check_len("signature", value, SIGNATURE_SIZE)


def random_bytes(n: int) -> bytes:
    return os.urandom(n)
