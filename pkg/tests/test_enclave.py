from dataclasses import fields, replace

import pytest

from abuild import crypto
from abuild.client_state import Phase
from abuild.enclave import (
    AttestationDocument,
    VendorIdentity,
    attest,
    boot,
    verify_attestation,
)
from abuild.errors import BadSignature, StateViolation, UnknownVendor
from abuild.measurement import measure_image
from abuild.toy import toy_image, toy_vendor

import oracle

CT = crypto.hash(b"snapshot")
A = crypto.hash(b"artifact")
NONCE = bytes(range(16))


def attested(vendor=None, image=None, nonce=NONCE):
    vendor = vendor or toy_vendor("vendor-a")
    handle = boot(vendor, image or toy_image(), clock=lambda: 1234)
    handle.commit_snapshot(CT)
    handle.begin_build()
    handle.report_artifact(A)
    return handle, attest(handle, nonce)


def roots(*vendors):
    return {v.vendor_name: v.verifying_key for v in vendors}


def test_boot_twice_equal_pcrs_distinct_handles():
    v = toy_vendor("vendor-a")
    h1, h2 = boot(v, toy_image()), boot(v, toy_image())
    assert h1.pcrs == h2.pcrs == measure_image(toy_image())
    assert h1 is not h2 and h1.id != h2.id


def test_boot_modified_image_changes_pcr0():
    v = toy_vendor("vendor-a")
    assert boot(v, toy_image("backdoor")).pcrs.pcr0 != boot(v, toy_image()).pcrs.pcr0


def test_boot_initial_state():
    h = boot(toy_vendor("vendor-a"), toy_image())
    assert h.client_state.phase is Phase.BOOTED and h.client_state.committed_ct is None


def test_boot_rejects_invalid_image():
    image = replace(toy_image(), files=(("b", b""), ("a", b"")))
    with pytest.raises(ValueError):
        boot(toy_vendor("vendor-a"), image)


def test_round_trip_verification():
    v = toy_vendor("vendor-a")
    handle, doc = attested(v)
    verified = verify_attestation(doc, roots(v))
    assert verified.commit_hash == CT and verified.artifact_hash == A
    assert verified.pcrs == handle.pcrs == measure_image(toy_image())
    assert verified.nonce == NONCE and verified.timestamp == 1234
    assert handle.client_state.phase is Phase.ATTESTED


def test_nonce_is_in_signed_payload():
    _, doc = attested()
    assert NONCE in doc.signed_fields()
    assert doc.payload_digest() == oracle.sha256(b"\x02" + doc.signed_fields())


def test_attest_in_booted_state():
    h = boot(toy_vendor("vendor-a"), toy_image())
    with pytest.raises(StateViolation):
        attest(h, NONCE)


def test_attest_is_single_shot():
    handle, _ = attested()
    with pytest.raises(StateViolation):
        attest(handle, NONCE)


def test_destroyed_handle_rejects_calls():
    h = boot(toy_vendor("vendor-a"), toy_image())
    h.destroy()
    with pytest.raises(StateViolation):
        h.commit_snapshot(CT)


def test_bad_nonce_length():
    h = boot(toy_vendor("vendor-a"), toy_image())
    h.commit_snapshot(CT)
    h.begin_build()
    h.report_artifact(A)
    with pytest.raises(ValueError):
        h.attest(b"short")


def test_unknown_vendor():
    _, doc = attested()
    with pytest.raises(UnknownVendor):
        verify_attestation(doc, roots(toy_vendor("vendor-b")))


def test_mutated_artifact_hash_rejected():
    v = toy_vendor("vendor-a")
    _, doc = attested(v)
    with pytest.raises(BadSignature):
        verify_attestation(replace(doc, artifact_hash=crypto.hash(b"evil")), roots(v))


def _mutations(doc: AttestationDocument):
    yield replace(doc, firmware_version="9.9")
    yield replace(doc, pcrs=replace(doc.pcrs, pcr0=crypto.hash(b"x")))
    yield replace(doc, pcrs=replace(doc.pcrs, pcr1=crypto.hash(b"x")))
    yield replace(doc, pcrs=replace(doc.pcrs, pcr2=crypto.hash(b"x")))
    yield replace(doc, commit_hash=crypto.hash(b"x"))
    yield replace(doc, artifact_hash=crypto.hash(b"x"))
    yield replace(doc, nonce=bytes(16))
    yield replace(doc, timestamp=doc.timestamp + 1)
    yield replace(doc, sbom_digest=crypto.hash(b"sbom"))
    yield replace(doc, sig=bytes(64))


def test_every_field_mutation_invalidates():
    v = toy_vendor("vendor-a")
    _, doc = attested(v)
    mutated = list(_mutations(doc))
    # each signed field is touched at least once (vendor_name is covered by test_unknown_vendor)
    assert len(mutated) >= len(fields(AttestationDocument)) - 1
    for m in mutated:
        with pytest.raises(BadSignature):
            verify_attestation(m, roots(v))


def test_attacker_keys_cannot_forge():
    honest = toy_vendor("vendor-a")
    _, doc = attested(honest)
    attacker = VendorIdentity("vendor-a", crypto.keygen())
    forged = replace(doc, artifact_hash=crypto.hash(b"evil"))
    forged = replace(forged, sig=attacker.root_key.sign(forged.payload_digest()))
    with pytest.raises(BadSignature):
        verify_attestation(forged, roots(honest))
    # an attacker vendor with its own name is simply not trusted
    rogue = VendorIdentity("vendor-rogue", crypto.keygen())
    _, rogue_doc = attested(rogue)
    with pytest.raises(UnknownVendor):
        verify_attestation(rogue_doc, roots(honest))


def test_document_serialization_roundtrips():
    _, doc = attested()
    assert AttestationDocument.from_bytes(doc.to_bytes()) == doc
    assert AttestationDocument.from_json(doc.to_json()) == doc


def test_vendor_json_roundtrip():
    v = toy_vendor("vendor-c")
    assert VendorIdentity.from_json(v.to_json()) == v
    assert "signing_key" not in v.to_json(include_secret=False)


def test_vendor_name_required():
    with pytest.raises(ValueError):
        VendorIdentity("", crypto.keygen())
