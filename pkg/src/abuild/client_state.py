"""The Enclave Client's ratcheting state machine.

The source measurement (CT) is accepted exactly once, while the enclave is
still in the ``BOOTED`` phase, i.e. before any untrusted build step runs.
Every transition returns a new immutable state value.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .crypto import Digest
from .errors import RatchetViolation, StateViolation


class Phase(Enum):
    BOOTED = "Booted"
    SOURCE_COMMITTED = "SourceCommitted"
    BUILDING = "Building"
    ARTIFACT_REPORTED = "ArtifactReported"
    ATTESTED = "Attested"


@dataclass(frozen=True)
class EnclaveClientState:
    phase: Phase = Phase.BOOTED
    committed_ct: Optional[Digest] = None
    reported_a: Optional[Digest] = None
    auth_token: str = field(default_factory=lambda: secrets.token_urlsafe(24), repr=False)


def commit_snapshot(state: EnclaveClientState, ct: Digest) -> EnclaveClientState:
    if state.phase is not Phase.BOOTED:
        raise RatchetViolation(f"commit hash already sealed (phase {state.phase.value})")
    return replace(state, phase=Phase.SOURCE_COMMITTED, committed_ct=Digest(ct))


def begin_build(state: EnclaveClientState) -> EnclaveClientState:
    if state.phase is not Phase.SOURCE_COMMITTED:
        raise StateViolation(f"cannot start build in phase {state.phase.value}")
    return replace(state, phase=Phase.BUILDING)


def report_artifact(state: EnclaveClientState, a: Digest) -> EnclaveClientState:
    if state.phase is not Phase.BUILDING:
        raise StateViolation(f"cannot report artifact in phase {state.phase.value}")
    return replace(state, phase=Phase.ARTIFACT_REPORTED, reported_a=Digest(a))


def mark_attested(state: EnclaveClientState) -> EnclaveClientState:
    if state.phase is not Phase.ARTIFACT_REPORTED:
        raise StateViolation(f"cannot attest in phase {state.phase.value}")
    return replace(state, phase=Phase.ATTESTED)
