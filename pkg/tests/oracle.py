"""Independent reference computations for the tests.

Uses only hashlib and struct. Nothing here imports the package under test, so
these functions can check it without sharing its code paths.
"""

from __future__ import annotations

import hashlib
import struct


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def lp(data: bytes) -> bytes:
    """4-byte big-endian length prefix."""
    return struct.pack(">I", len(data)) + data


def leaf(data: bytes) -> bytes:
    return sha256(b"\x00" + data)


def node(left: bytes, right: bytes) -> bytes:
    return sha256(b"\x01" + left + right)


class FullTree:
    """Materializes every node of the RFC 6962 tree over ``leaves``.

    ``nodes[(lo, hi)]`` is the hash of the subtree covering leaves ``lo..hi-1``.
    """

    def __init__(self, leaves: list[bytes]) -> None:
        self.leaves = list(leaves)
        self.nodes: dict[tuple[int, int], bytes] = {}
        self.children: dict[tuple[int, int], tuple[tuple[int, int], tuple[int, int]]] = {}
        if leaves:
            self._build(0, len(leaves))

    def _build(self, lo: int, hi: int) -> bytes:
        if hi - lo == 1:
            h = self.leaves[lo]
        else:
            k = 1
            while k * 2 < hi - lo:
                k *= 2
            left, right = (lo, lo + k), (lo + k, hi)
            self.children[(lo, hi)] = (left, right)
            h = node(self._build(*left), self._build(*right))
        self.nodes[(lo, hi)] = h
        return h

    @property
    def root(self) -> bytes:
        if not self.leaves:
            return sha256(b"")
        return self.nodes[(0, len(self.leaves))]

    def inclusion_path(self, index: int) -> list[bytes]:
        """Sibling hashes from the leaf up to the root, found by walking down."""
        path = []
        span = (0, len(self.leaves))
        while span in self.children:
            left, right = self.children[span]
            if index < left[1]:
                path.append(self.nodes[right])
                span = left
            else:
                path.append(self.nodes[left])
                span = right
        return list(reversed(path))

    def recompute_root_from_path(self, index: int, leaf_hash: bytes, path: list[bytes]) -> bytes:
        """Fold a path using the tree's known shape (not the proof's size arithmetic)."""
        spans = []
        span = (0, len(self.leaves))
        while span in self.children:
            left, right = self.children[span]
            went_left = index < left[1]
            spans.append(went_left)
            span = left if went_left else right
        h = leaf_hash
        for went_left, sibling in zip(reversed(spans), path):
            h = node(h, sibling) if went_left else node(sibling, h)
        return h


def pcr_set(files: list[tuple[str, bytes]], kernel: bytes, app: bytes) -> tuple[bytes, bytes, bytes]:
    body = struct.pack(">I", len(files))
    for path, content in files:
        body += lp(path.encode()) + lp(content)
    body += lp(kernel) + lp(app)
    return sha256(b"\x04" + body), sha256(b"\x04" + kernel), sha256(b"\x04" + app)


def commit_encoding(parent: bytes, message: str, key: bytes | None, sig: bytes | None, tree_hash: bytes) -> bytes:
    return lp(parent) + lp(message.encode()) + lp(key or b"") + lp(sig or b"") + lp(tree_hash)


def snapshot_hash(files: list[tuple[str, bytes]], commits: list[bytes]) -> bytes:
    """``commits`` are already-encoded commit records."""
    body = struct.pack(">I", len(files))
    for path, content in files:
        body += sha256(b"\x00" + lp(path.encode()) + lp(content))
    body += struct.pack(">I", len(commits))
    for c in commits:
        body += c
    return sha256(b"\x04" + body)


def consistency_path(tree: FullTree, old_size: int) -> list[bytes]:
    """RFC 6962 SUBPROOF, reading node hashes from the materialized tree."""

    def sub(m: int, span: tuple[int, int], complete: bool) -> list[bytes]:
        lo, hi = span
        if m == hi - lo:
            return [] if complete else [tree.nodes[span]]
        left, right = tree.children[span]
        k = left[1] - left[0]
        if m <= k:
            return sub(m, left, complete) + [tree.nodes[right]]
        return sub(m - k, right, False) + [tree.nodes[left]]

    return sub(old_size, (0, len(tree.leaves)), True)
