"""Transparency-log entry kinds: build attestations, revocation notices, source audits."""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Union

from . import crypto
from .crypto import Digest, KeyPair
from .encoding import Reader, Writer, canonical_decode, canonical_encode
from .enclave import AttestationDocument
from .errors import EncodingError, InvalidEntry


class EntryKind(IntEnum):
    BUILD_ATTESTATION = 0
    REVOCATION_NOTICE = 1
    SOURCE_AUDIT = 2

    @property
    def wire_name(self) -> str:
        return _KIND_NAMES[self]

    @classmethod
    def from_wire(cls, name: str) -> "EntryKind":
        for kind, wire in _KIND_NAMES.items():
            if wire == name:
                return kind
        raise EncodingError(f"unknown entry kind {name!r}")


_KIND_NAMES = {
    EntryKind.BUILD_ATTESTATION: "BuildAttestation",
    EntryKind.REVOCATION_NOTICE: "RevocationNotice",
    EntryKind.SOURCE_AUDIT: "SourceAudit",
}


class ScopeKind(IntEnum):
    VENDOR_FIRMWARE = 0
    PCR0 = 1
    LOG_INDEX = 2


@dataclass(frozen=True)
class ByVendorFirmware:
    vendor: str
    version: str


@dataclass(frozen=True)
class ByPcr0:
    digest: Digest


@dataclass(frozen=True)
class ByLogIndex:
    index: int


RevocationScope = Union[ByVendorFirmware, ByPcr0, ByLogIndex]


def _write_scope(w: Writer, scope: RevocationScope) -> None:
    if isinstance(scope, ByVendorFirmware):
        w.u64(ScopeKind.VENDOR_FIRMWARE).str(scope.vendor).str(scope.version)
    elif isinstance(scope, ByPcr0):
        w.u64(ScopeKind.PCR0).bytes(scope.digest)
    elif isinstance(scope, ByLogIndex):
        w.u64(ScopeKind.LOG_INDEX).u64(scope.index)
    else:
        raise EncodingError(f"unknown revocation scope {scope!r}")


def _read_scope(r: Reader) -> RevocationScope:
    kind = r.u64()
    if kind == ScopeKind.VENDOR_FIRMWARE:
        return ByVendorFirmware(r.str(), r.str())
    if kind == ScopeKind.PCR0:
        return ByPcr0(Digest(r.fixed(32)))
    if kind == ScopeKind.LOG_INDEX:
        return ByLogIndex(r.u64())
    raise EncodingError(f"unknown revocation scope kind {kind}")


@dataclass(frozen=True)
class RevocationNotice:
    scope: RevocationScope
    reason: str
    issuer_key: bytes
    issuer_sig: bytes = field(repr=False)

    @staticmethod
    def _payload(scope: RevocationScope, reason: str, issuer_key: bytes) -> bytes:
        w = Writer()
        _write_scope(w, scope)
        return w.str(reason).bytes(issuer_key).getvalue()

    @classmethod
    def issue(cls, key: KeyPair, scope: RevocationScope, reason: str) -> "RevocationNotice":
        sig = key.sign(cls._payload(scope, reason, key.verifying_key))
        return cls(scope, reason, key.verifying_key, sig)

    def signature_valid(self) -> bool:
        try:
            return crypto.verify(self.issuer_key, self._payload(self.scope, self.reason, self.issuer_key),
                                 self.issuer_sig)
        except ValueError:
            return False

    def write_canonical(self, w: Writer) -> None:
        _write_scope(w, self.scope)
        w.str(self.reason).bytes(self.issuer_key).bytes(self.issuer_sig)

    @classmethod
    def read_canonical(cls, r: Reader) -> "RevocationNotice":
        scope = _read_scope(r)
        return cls(scope, r.str(), r.fixed(crypto.KEY_SIZE), r.fixed(crypto.SIGNATURE_SIZE))


@dataclass(frozen=True)
class SourceAudit:
    """An auditor's statement about one source snapshot, signed via the log entry."""

    commit_hash: Digest
    auditor: str
    statement: str
    timestamp: int = 0

    def write_canonical(self, w: Writer) -> None:
        w.bytes(self.commit_hash).str(self.auditor).str(self.statement).u64(self.timestamp)

    @classmethod
    def read_canonical(cls, r: Reader) -> "SourceAudit":
        return cls(Digest(r.fixed(32)), r.str(), r.str(), r.u64())


_BODY_TYPES = {
    EntryKind.BUILD_ATTESTATION: AttestationDocument,
    EntryKind.REVOCATION_NOTICE: RevocationNotice,
    EntryKind.SOURCE_AUDIT: SourceAudit,
}


@dataclass(frozen=True)
class LogEntry:
    kind: EntryKind
    body: bytes
    submitter_key: Optional[bytes] = None
    submitter_sig: Optional[bytes] = field(default=None, repr=False)

    @classmethod
    def build_attestation(cls, doc: AttestationDocument) -> "LogEntry":
        return cls(EntryKind.BUILD_ATTESTATION, canonical_encode(doc))

    @classmethod
    def revocation(cls, notice: RevocationNotice) -> "LogEntry":
        return cls(EntryKind.REVOCATION_NOTICE, canonical_encode(notice))

    @classmethod
    def source_audit(cls, audit: SourceAudit, auditor_key: KeyPair) -> "LogEntry":
        body = canonical_encode(audit)
        return cls(EntryKind.SOURCE_AUDIT, body, auditor_key.verifying_key, auditor_key.sign(body))

    def decode_body(self):
        try:
            return canonical_decode(_BODY_TYPES[self.kind], self.body)
        except (EncodingError, ValueError) as exc:
            raise InvalidEntry(f"{self.kind.wire_name} body does not decode: {exc}") from exc

    def validate(self) -> None:
        record = self.decode_body()
        if (self.submitter_key is None) != (self.submitter_sig is None):
            raise InvalidEntry("submitter key and signature must be given together")
        if self.kind is EntryKind.SOURCE_AUDIT and self.submitter_sig is None:
            raise InvalidEntry("SourceAudit entries must be signed by the auditor")
        if self.submitter_sig is not None:
            try:
                ok = crypto.verify(self.submitter_key, self.body, self.submitter_sig)
            except ValueError as exc:
                raise InvalidEntry(str(exc)) from exc
            if not ok:
                raise InvalidEntry("submitter signature does not verify")
        if isinstance(record, RevocationNotice) and not record.signature_valid():
            raise InvalidEntry("revocation notice signature does not verify")

    def write_canonical(self, w: Writer) -> None:
        w.u64(self.kind).bytes(self.body)
        w.optional(self.submitter_key).optional(self.submitter_sig)

    @classmethod
    def read_canonical(cls, r: Reader) -> "LogEntry":
        kind_value = r.u64()
        try:
            kind = EntryKind(kind_value)
        except ValueError:
            raise EncodingError(f"unknown entry kind {kind_value}") from None
        body = r.bytes()
        key = r.optional_fixed(crypto.KEY_SIZE)
        sig = r.optional_fixed(crypto.SIGNATURE_SIZE)
        return cls(kind, body, key, sig)

    def to_bytes(self) -> bytes:
        return canonical_encode(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LogEntry":
        return canonical_decode(cls, data)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.wire_name,
            "body": self.body.hex(),
            "submitter_key": self.submitter_key.hex() if self.submitter_key else None,
            "submitter_sig": base64.b64encode(self.submitter_sig).decode("ascii") if self.submitter_sig else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LogEntry":
        try:
            key = obj.get("submitter_key")
            sig = obj.get("submitter_sig")
            return cls(
                kind=EntryKind.from_wire(obj["kind"]),
                body=bytes.fromhex(obj["body"]),
                submitter_key=crypto.check_verifying_key(bytes.fromhex(key)) if key else None,
                submitter_sig=crypto.check_signature(base64.b64decode(sig, validate=True)) if sig else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"bad log entry: {exc}") from exc
