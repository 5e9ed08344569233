import pytest

from abuild import crypto
from abuild.encoding import canonical_encode
from abuild.entries import (
    ByLogIndex,
    ByPcr0,
    ByVendorFirmware,
    EntryKind,
    LogEntry,
    RevocationNotice,
    SourceAudit,
)
from abuild.errors import EncodingError, InvalidEntry

KEY = crypto.keygen(bytes([3]) * 32)


@pytest.mark.parametrize("scope", [
    ByVendorFirmware("vendor-a", "1.0"),
    ByPcr0(crypto.hash(b"pcr0")),
    ByLogIndex(42),
])
def test_revocation_roundtrip(scope):
    notice = RevocationNotice.issue(KEY, scope, "compromised")
    assert notice.signature_valid()
    entry = LogEntry.revocation(notice)
    entry.validate()
    assert entry.decode_body() == notice
    assert LogEntry.from_bytes(entry.to_bytes()) == entry
    assert LogEntry.from_json(entry.to_json()) == entry


def test_revocation_with_forged_issuer_sig_is_invalid():
    notice = RevocationNotice.issue(KEY, ByLogIndex(1), "r")
    forged = RevocationNotice(ByLogIndex(2), notice.reason, notice.issuer_key, notice.issuer_sig)
    assert not forged.signature_valid()
    with pytest.raises(InvalidEntry):
        LogEntry.revocation(forged).validate()


def test_source_audit_requires_signature():
    audit = SourceAudit(crypto.hash(b"ct"), "auditor", "looks fine", 7)
    LogEntry.source_audit(audit, KEY).validate()
    with pytest.raises(InvalidEntry):
        LogEntry(EntryKind.SOURCE_AUDIT, canonical_encode(audit)).validate()
    with pytest.raises(InvalidEntry):
        LogEntry(EntryKind.SOURCE_AUDIT, canonical_encode(audit), KEY.verifying_key, bytes(64)).validate()


def test_key_without_signature_rejected():
    notice = RevocationNotice.issue(KEY, ByLogIndex(1), "r")
    with pytest.raises(InvalidEntry):
        LogEntry(EntryKind.REVOCATION_NOTICE, canonical_encode(notice), KEY.verifying_key).validate()


def test_undecodable_body():
    with pytest.raises(InvalidEntry):
        LogEntry(EntryKind.BUILD_ATTESTATION, b"garbage").validate()


def test_wire_names():
    assert [k.wire_name for k in EntryKind] == ["BuildAttestation", "RevocationNotice", "SourceAudit"]
    assert EntryKind.from_wire("SourceAudit") is EntryKind.SOURCE_AUDIT
    with pytest.raises(EncodingError):
        EntryKind.from_wire("Nope")


def test_unknown_kind_in_bytes():
    data = bytearray(LogEntry.revocation(RevocationNotice.issue(KEY, ByLogIndex(0), "r")).to_bytes())
    data[7] = 9
    with pytest.raises(EncodingError):
        LogEntry.from_bytes(bytes(data))
