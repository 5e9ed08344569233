"""Append-only Merkle tree with inclusion and consistency proofs.

Tree shape and proof algorithms follow RFC 6962 / RFC 9162: a tree of ``n``
leaves splits at the largest power of two strictly below ``n``; leaves and
interior nodes are hashed under distinct one-byte tags.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Sequence

from . import crypto
from .crypto import Digest, KeyPair, Tag
from .encoding import Writer, canonical_encode, u64
from .entries import LogEntry
from .errors import ProofRangeError


def _node(left: bytes, right: bytes) -> Digest:
    return crypto.hash_tagged(Tag.NODE, [left, right])


def _split(n: int) -> int:
    """Largest power of two strictly less than ``n`` (n >= 2)."""
    return 1 << ((n - 1).bit_length() - 1)


def leaf_hash(entry: LogEntry) -> Digest:
    return crypto.hash_tagged(Tag.LEAF, [canonical_encode(entry)])


def merkle_root(leaves: Sequence[bytes]) -> Digest:
    n = len(leaves)
    if n == 0:
        return crypto.hash(b"")
    if n == 1:
        return Digest(leaves[0])
    k = _split(n)
    return _node(merkle_root(leaves[:k]), merkle_root(leaves[k:]))


def inclusion_path(leaves: Sequence[bytes], index: int) -> list[Digest]:
    n = len(leaves)
    if not 0 <= index < n:
        raise ProofRangeError(f"leaf index {index} out of range for size {n}")
    if n == 1:
        return []
    k = _split(n)
    if index < k:
        return inclusion_path(leaves[:k], index) + [merkle_root(leaves[k:])]
    return inclusion_path(leaves[k:], index - k) + [merkle_root(leaves[:k])]


def _subproof(m: int, leaves: Sequence[bytes], complete: bool) -> list[Digest]:
    n = len(leaves)
    if m == n:
        return [] if complete else [merkle_root(leaves)]
    k = _split(n)
    if m <= k:
        return _subproof(m, leaves[:k], complete) + [merkle_root(leaves[k:])]
    return _subproof(m - k, leaves[k:], False) + [merkle_root(leaves[:k])]


def consistency_path(leaves: Sequence[bytes], old_size: int) -> list[Digest]:
    if not 0 < old_size <= len(leaves):
        raise ProofRangeError(f"old size {old_size} out of range for size {len(leaves)}")
    return _subproof(old_size, leaves, True)


def _hexlist(path: Sequence[bytes]) -> list[str]:
    return [bytes(p).hex() for p in path]


@dataclass(frozen=True)
class InclusionProof:
    index: int
    size: int
    path: tuple[Digest, ...]

    def write_canonical(self, w: Writer) -> None:
        w.u64(self.index).u64(self.size).list(self.path, Writer.bytes)

    def to_json(self) -> dict:
        return {"index": self.index, "size": self.size, "path": _hexlist(self.path)}

    @classmethod
    def from_json(cls, obj: dict) -> "InclusionProof":
        return cls(int(obj["index"]), int(obj["size"]), tuple(Digest.fromhex(p) for p in obj["path"]))


@dataclass(frozen=True)
class ConsistencyProof:
    old_size: int
    new_size: int
    path: tuple[Digest, ...]

    def write_canonical(self, w: Writer) -> None:
        w.u64(self.old_size).u64(self.new_size).list(self.path, Writer.bytes)

    def to_json(self) -> dict:
        return {"old_size": self.old_size, "new_size": self.new_size, "path": _hexlist(self.path)}

    @classmethod
    def from_json(cls, obj: dict) -> "ConsistencyProof":
        return cls(int(obj["old_size"]), int(obj["new_size"]), tuple(Digest.fromhex(p) for p in obj["path"]))


def verify_inclusion(leaf: bytes, proof: InclusionProof, root: bytes) -> bool:
    index, size = proof.index, proof.size
    if not 0 <= index < size:
        return False
    fn, sn = index, size - 1
    r = bytes(leaf)
    for p in proof.path:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            r = _node(p, r)
            while not fn & 1 and fn != 0:
                fn >>= 1
                sn >>= 1
        else:
            r = _node(r, p)
        fn >>= 1
        sn >>= 1
    return sn == 0 and r == bytes(root)


def verify_consistency(old_root: bytes, new_root: bytes, proof: ConsistencyProof) -> bool:
    first, second, path = proof.old_size, proof.new_size, list(proof.path)
    if first <= 0 or first > second:
        return False
    if first == second:
        return not path and bytes(old_root) == bytes(new_root)
    if first & (first - 1) == 0:
        path.insert(0, bytes(old_root))
    if not path:
        return False
    fn, sn = first - 1, second - 1
    while fn & 1:
        fn >>= 1
        sn >>= 1
    fr = sr = bytes(path[0])
    for c in path[1:]:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            fr = _node(c, fr)
            sr = _node(c, sr)
            while not fn & 1 and fn != 0:
                fn >>= 1
                sn >>= 1
        else:
            sr = _node(sr, c)
        fn >>= 1
        sn >>= 1
    return sn == 0 and fr == bytes(old_root) and sr == bytes(new_root)


@dataclass(frozen=True)
class TreeState:
    """Immutable value holding every leaf digest appended so far."""

    leaves: tuple[Digest, ...] = ()

    @property
    def size(self) -> int:
        return len(self.leaves)

    def root(self, size: int | None = None) -> Digest:
        size = self.size if size is None else size
        if not 0 <= size <= self.size:
            raise ProofRangeError(f"size {size} out of range for tree of {self.size}")
        return merkle_root(self.leaves[:size])

    def prove_inclusion(self, index: int, size: int | None = None) -> InclusionProof:
        size = self.size if size is None else size
        if not 0 < size <= self.size:
            raise ProofRangeError(f"size {size} out of range for tree of {self.size}")
        return InclusionProof(index, size, tuple(inclusion_path(self.leaves[:size], index)))

    def prove_consistency(self, old_size: int, new_size: int | None = None) -> ConsistencyProof:
        new_size = self.size if new_size is None else new_size
        if not 0 < new_size <= self.size:
            raise ProofRangeError(f"size {new_size} out of range for tree of {self.size}")
        path = consistency_path(self.leaves[:new_size], old_size)
        return ConsistencyProof(old_size, new_size, tuple(path))


def append(state: TreeState, entry: LogEntry) -> tuple[TreeState, int]:
    """Validate ``entry`` and return the extended tree and the entry's index."""
    entry.validate()
    return TreeState(state.leaves + (leaf_hash(entry),)), state.size


def root(state: TreeState) -> Digest:
    return state.root()


def prove_inclusion(state: TreeState, index: int) -> InclusionProof:
    return state.prove_inclusion(index)


def prove_consistency(state: TreeState, old_size: int) -> ConsistencyProof:
    return state.prove_consistency(old_size)


# -- signed tree heads ---------------------------------------------------------


def tree_head_payload(size: int, root_hash: bytes, timestamp: int) -> Digest:
    return crypto.hash_tagged(Tag.TREE_HEAD, [u64(size), bytes(root_hash), u64(timestamp)])


@dataclass(frozen=True)
class SignedTreeHead:
    size: int
    root: Digest
    timestamp: int
    log_key: bytes
    sig: bytes = field(repr=False)

    @classmethod
    def sign(cls, key: KeyPair, size: int, root_hash: Digest, timestamp: int) -> "SignedTreeHead":
        sig = key.sign(tree_head_payload(size, root_hash, timestamp))
        return cls(size, Digest(root_hash), timestamp, key.verifying_key, sig)

    def verify(self, log_key: bytes | None = None) -> bool:
        key = self.log_key if log_key is None else log_key
        if log_key is not None and bytes(log_key) != bytes(self.log_key):
            return False
        try:
            return crypto.verify(key, tree_head_payload(self.size, self.root, self.timestamp), self.sig)
        except ValueError:
            return False

    def write_canonical(self, w: Writer) -> None:
        w.u64(self.size).bytes(self.root).u64(self.timestamp).bytes(self.log_key).bytes(self.sig)

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "root": self.root.hex(),
            "timestamp": self.timestamp,
            "log_key": bytes(self.log_key).hex(),
            "sig": base64.b64encode(self.sig).decode("ascii"),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SignedTreeHead":
        return cls(
            size=int(obj["size"]),
            root=Digest.fromhex(obj["root"]),
            timestamp=int(obj["timestamp"]),
            log_key=crypto.check_verifying_key(bytes.fromhex(obj["log_key"])),
            sig=crypto.check_signature(base64.b64decode(obj["sig"], validate=True)),
        )
