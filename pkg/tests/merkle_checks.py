"""Merkle proof checks shared by the unit and acceptance suites.

Each function raises AssertionError on the first discrepancy and returns the
number of cases it examined.
"""

from __future__ import annotations

import random

from abuild.crypto import Digest
from abuild.merkle import (
    ConsistencyProof,
    InclusionProof,
    TreeState,
    verify_consistency,
    verify_inclusion,
)

import oracle


def _flip(d: bytes, bit: int = 0) -> Digest:
    b = bytearray(d)
    b[bit // 8] ^= 1 << (bit % 8)
    return Digest(bytes(b))


def random_leaves(rng: random.Random, n: int) -> list[Digest]:
    return [Digest(rng.randbytes(32)) for _ in range(n)]


def check_equivalence(n: int, rng: random.Random) -> int:
    """Every proof in an ``n``-leaf tree verifies and matches the full-tree oracle."""
    leaves = random_leaves(rng, n)
    state = TreeState(tuple(leaves))
    ref = oracle.FullTree(leaves)
    assert state.root() == ref.root
    cases = 1
    for i in range(n):
        proof = state.prove_inclusion(i)
        assert list(proof.path) == ref.inclusion_path(i)
        assert ref.recompute_root_from_path(i, leaves[i], list(proof.path)) == ref.root
        assert verify_inclusion(leaves[i], proof, state.root())
        cases += 1
    for m in range(1, n + 1):
        proof = state.prove_consistency(m)
        sub = oracle.FullTree(leaves[:m])
        assert state.root(m) == sub.root
        assert list(proof.path) == oracle.consistency_path(ref, m)
        assert verify_consistency(sub.root, ref.root, proof)
        cases += 1
    return cases


def inclusion_tamperings(leaves: list[Digest], i: int):
    """Yield (leaf, proof, root) triples that each differ from the honest one in one element."""
    state = TreeState(tuple(leaves))
    n, root = len(leaves), state.root()
    proof = state.prove_inclusion(i)
    yield _flip(leaves[i]), proof, root
    for k in range(len(proof.path)):
        path = list(proof.path)
        path[k] = _flip(path[k])
        yield leaves[i], InclusionProof(i, n, tuple(path)), root
    for j in [*range(n + 1), 2**63]:
        if j != i:
            yield leaves[i], InclusionProof(j, n, proof.path), root
    yield leaves[i], proof, _flip(root)


def consistency_tamperings(leaves: list[Digest], m: int):
    """Yield (old_root, new_root, proof) triples with one element changed."""
    state = TreeState(tuple(leaves))
    n = len(leaves)
    old, new = state.root(m), state.root()
    proof = state.prove_consistency(m)
    yield _flip(old), new, proof
    yield old, _flip(new), proof
    for k in range(len(proof.path)):
        path = list(proof.path)
        path[k] = _flip(path[k])
        yield old, new, ConsistencyProof(m, n, tuple(path))
    # a log that rewrote one of the first m leaves after issuing the old head
    for j in range(m):
        forged = list(leaves)
        forged[j] = _flip(forged[j])
        forged_state = TreeState(tuple(forged))
        yield old, forged_state.root(), forged_state.prove_consistency(m)


def check_tamper_exhaustive(n: int, rng: random.Random) -> int:
    leaves = random_leaves(rng, n)
    cases = 0
    for i in range(n):
        for leaf, proof, root in inclusion_tamperings(leaves, i):
            assert not verify_inclusion(leaf, proof, root), (n, i, proof)
            cases += 1
    for m in range(1, n + 1):
        for old, new, proof in consistency_tamperings(leaves, m):
            assert not verify_consistency(old, new, proof), (n, m, proof)
            cases += 1
    return cases


def check_tamper_sampled(rng: random.Random, samples: int, lo: int = 17, hi: int = 64) -> int:
    cases = 0
    for _ in range(samples):
        n = rng.randint(lo, hi)
        leaves = random_leaves(rng, n)
        if rng.random() < 0.5:
            i = rng.randrange(n)
            choices = list(inclusion_tamperings(leaves, i))
            leaf, proof, root = rng.choice(choices)
            assert not verify_inclusion(leaf, proof, root), (n, i, proof)
        else:
            m = rng.randint(1, n)
            choices = list(consistency_tamperings(leaves, m))
            old, new, proof = rng.choice(choices)
            assert not verify_consistency(old, new, proof), (n, m, proof)
        cases += 1
    return cases
