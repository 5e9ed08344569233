"""Exhaustive and randomized exercise of the enclave client ratchet."""

from __future__ import annotations

import itertools
import random

from abuild import crypto
from abuild.client_state import Phase
from abuild.enclave import EnclaveHandle, VendorIdentity, verify_attestation
from abuild.errors import RatchetViolation, StateViolation
from abuild.measurement import EnclaveImage, measure_image

OPS = ("commit", "begin", "report", "attest")

# the only op accepted in each phase, and the phase it leads to
LEGAL = {
    Phase.BOOTED: ("commit", Phase.SOURCE_COMMITTED),
    Phase.SOURCE_COMMITTED: ("begin", Phase.BUILDING),
    Phase.BUILDING: ("report", Phase.ARTIFACT_REPORTED),
    Phase.ARTIFACT_REPORTED: ("attest", Phase.ATTESTED),
    Phase.ATTESTED: (None, Phase.ATTESTED),
}

_VENDOR = VendorIdentity("vendor-ratchet", crypto.keygen(bytes([7]) * 32))
_PCRS = measure_image(EnclaveImage("ratchet"))


def run_sequence(ops: tuple[str, ...], rng: random.Random) -> int:
    """Apply ``ops`` to a fresh enclave and check each outcome against the model.

    Returns the number of attestations produced (0 or 1).
    """
    handle = EnclaveHandle(_VENDOR, _PCRS, clock=lambda: 1)
    phase = Phase.BOOTED
    first_ct = None
    produced = 0
    for op in ops:
        ct, a, nonce = crypto.hash(rng.randbytes(8)), crypto.hash(rng.randbytes(8)), rng.randbytes(16)
        expected_op, next_phase = LEGAL[phase]
        try:
            if op == "commit":
                handle.commit_snapshot(ct)
            elif op == "begin":
                handle.begin_build()
            elif op == "report":
                handle.report_artifact(a)
            else:
                doc = handle.attest(nonce)
        except RatchetViolation:
            assert op == "commit" and phase is not Phase.BOOTED, (ops, op, phase)
            continue
        except StateViolation:
            assert op != "commit" and op != expected_op, (ops, op, phase)
            continue
        assert op == expected_op, (ops, op, phase)
        if op == "commit":
            first_ct = ct
        if op == "attest":
            produced += 1
            assert doc.commit_hash == first_ct
            assert verify_attestation(doc, {_VENDOR.vendor_name: _VENDOR.verifying_key}).commit_hash == first_ct
        phase = next_phase
        assert handle.client_state.phase is phase
    return produced


def enumerate_orderings(max_len: int = 6) -> int:
    """Every op sequence up to ``max_len``; covers each phase receiving each op."""
    rng = random.Random(0)
    count = 0
    for length in range(1, max_len + 1):
        for ops in itertools.product(OPS, repeat=length):
            run_sequence(ops, rng)
            count += 1
    return count


def randomized(samples: int, seed: int = 1) -> int:
    rng = random.Random(seed)
    attested = 0
    for _ in range(samples):
        ops = tuple(rng.choice(OPS) for _ in range(rng.randint(1, 12)))
        # bias towards reaching Attested so the commit_hash check runs often
        if rng.random() < 0.5:
            ops = ("commit", "begin") + ops
        attested += run_sequence(ops, rng)
    return attested
