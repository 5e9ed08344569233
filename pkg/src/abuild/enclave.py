"""Simulated TEE vendor: boots images, measures them and signs attestation documents."""

from __future__ import annotations

import base64
import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

from . import client_state as cs
from . import crypto
from .client_state import EnclaveClientState
from .crypto import Digest, KeyPair, Tag
from .encoding import Reader, Writer, canonical_decode, canonical_encode
from .errors import BadSignature, EncodingError, StateViolation, UnknownVendor
from .measurement import EnclaveImage, PcrSet, measure_image

NONCE_SIZE = 16


@dataclass(frozen=True)
class VendorIdentity:
    vendor_name: str
    root_key: KeyPair = field(repr=False)
    firmware_version: str = "1.0"

    def __post_init__(self) -> None:
        if not self.vendor_name:
            raise ValueError("vendor_name must be non-empty")

    @property
    def verifying_key(self) -> bytes:
        return self.root_key.verifying_key

    def to_json(self, include_secret: bool = True) -> dict:
        obj = {
            "vendor_name": self.vendor_name,
            "firmware_version": self.firmware_version,
            "verifying_key": self.verifying_key.hex(),
        }
        if include_secret:
            obj["signing_key"] = self.root_key.seed.hex()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "VendorIdentity":
        key = crypto.keygen(bytes.fromhex(obj["signing_key"]))
        return cls(obj["vendor_name"], key, obj.get("firmware_version", "1.0"))


@dataclass(frozen=True)
class AttestationDocument:
    vendor_name: str
    firmware_version: str
    pcrs: PcrSet
    commit_hash: Digest
    artifact_hash: Digest
    nonce: bytes
    timestamp: int
    sig: bytes = field(repr=False)
    # reserved for a reference to an SBOM; absent in every build this package runs
    sbom_digest: Optional[Digest] = None

    def _write_fields(self, w: Writer) -> None:
        w.str(self.vendor_name).str(self.firmware_version)
        w.record(self.pcrs)
        w.bytes(self.commit_hash).bytes(self.artifact_hash)
        w.bytes(self.nonce).u64(self.timestamp)
        w.optional(self.sbom_digest)

    def signed_fields(self) -> bytes:
        w = Writer()
        self._write_fields(w)
        return w.getvalue()

    def payload_digest(self) -> Digest:
        return crypto.hash_tagged(Tag.ATTESTATION, [self.signed_fields()])

    def write_canonical(self, w: Writer) -> None:
        self._write_fields(w)
        w.bytes(self.sig)

    @classmethod
    def read_canonical(cls, r: Reader) -> "AttestationDocument":
        vendor_name = r.str()
        firmware_version = r.str()
        pcrs = PcrSet.read_canonical(r)
        commit_hash = Digest(r.fixed(32))
        artifact_hash = Digest(r.fixed(32))
        nonce = r.fixed(NONCE_SIZE)
        timestamp = r.u64()
        sbom = r.optional_fixed(32)
        sig = r.fixed(crypto.SIGNATURE_SIZE)
        return cls(vendor_name, firmware_version, pcrs, commit_hash, artifact_hash, nonce,
                   timestamp, sig, Digest(sbom) if sbom else None)

    def to_bytes(self) -> bytes:
        return canonical_encode(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestationDocument":
        return canonical_decode(cls, data)

    def to_json(self) -> dict:
        return {
            "vendor_name": self.vendor_name,
            "firmware_version": self.firmware_version,
            "pcrs": self.pcrs.to_json(),
            "commit_hash": self.commit_hash.hex(),
            "artifact_hash": self.artifact_hash.hex(),
            "nonce": self.nonce.hex(),
            "timestamp": self.timestamp,
            "sbom_digest": self.sbom_digest.hex() if self.sbom_digest else None,
            "sig": base64.b64encode(self.sig).decode("ascii"),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttestationDocument":
        try:
            nonce = bytes.fromhex(obj["nonce"])
            if len(nonce) != NONCE_SIZE:
                raise ValueError("nonce must be 16 bytes")
            return cls(
                vendor_name=obj["vendor_name"],
                firmware_version=obj["firmware_version"],
                pcrs=PcrSet.from_json(obj["pcrs"]),
                commit_hash=Digest.fromhex(obj["commit_hash"]),
                artifact_hash=Digest.fromhex(obj["artifact_hash"]),
                nonce=nonce,
                timestamp=int(obj["timestamp"]),
                sig=crypto.check_signature(base64.b64decode(obj["sig"], validate=True)),
                sbom_digest=Digest.fromhex(obj["sbom_digest"]) if obj.get("sbom_digest") else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"bad attestation document: {exc}") from exc


@dataclass(frozen=True)
class VerifiedAttestation:
    vendor_name: str
    firmware_version: str
    pcrs: PcrSet
    commit_hash: Digest
    artifact_hash: Digest
    nonce: bytes
    timestamp: int


_handle_ids = itertools.count(1)


class EnclaveHandle:
    """One booted enclave. Measurements are frozen at boot; one attestation per lifetime."""

    def __init__(self, vendor: VendorIdentity, pcrs: PcrSet,
                 clock: Callable[[], float] = time.time) -> None:
        self.id = next(_handle_ids)
        self._vendor = vendor
        self._pcrs = pcrs
        self._clock = clock
        self._state = EnclaveClientState()
        self._destroyed = False

    @property
    def vendor(self) -> VendorIdentity:
        return self._vendor

    @property
    def pcrs(self) -> PcrSet:
        return self._pcrs

    @property
    def client_state(self) -> EnclaveClientState:
        return self._state

    @property
    def auth_token(self) -> str:
        return self._state.auth_token

    def _alive(self) -> None:
        if self._destroyed:
            raise StateViolation("enclave has been destroyed")

    def commit_snapshot(self, ct: Digest) -> None:
        self._alive()
        self._state = cs.commit_snapshot(self._state, ct)

    def begin_build(self) -> None:
        self._alive()
        self._state = cs.begin_build(self._state)

    def report_artifact(self, a: Digest) -> None:
        self._alive()
        self._state = cs.report_artifact(self._state, a)

    def attest(self, nonce: bytes) -> AttestationDocument:
        self._alive()
        if len(nonce) != NONCE_SIZE:
            raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
        state = cs.mark_attested(self._state)
        unsigned = AttestationDocument(
            vendor_name=self._vendor.vendor_name,
            firmware_version=self._vendor.firmware_version,
            pcrs=self._pcrs,
            commit_hash=self._state.committed_ct,
            artifact_hash=self._state.reported_a,
            nonce=bytes(nonce),
            timestamp=int(self._clock()),
            sig=bytes(crypto.SIGNATURE_SIZE),
        )
        sig = self._vendor.root_key.sign(unsigned.payload_digest())
        self._state = state
        return replace(unsigned, sig=sig)

    def destroy(self) -> None:
        self._destroyed = True

    @property
    def destroyed(self) -> bool:
        return self._destroyed


def boot(vendor: VendorIdentity, image: EnclaveImage,
         clock: Callable[[], float] = time.time) -> EnclaveHandle:
    return EnclaveHandle(vendor, measure_image(image), clock)


def attest(handle: EnclaveHandle, nonce: bytes) -> AttestationDocument:
    return handle.attest(nonce)


def verify_attestation(doc: AttestationDocument,
                       trusted_roots: Mapping[str, bytes]) -> VerifiedAttestation:
    key = trusted_roots.get(doc.vendor_name)
    if key is None:
        raise UnknownVendor(f"vendor {doc.vendor_name!r} is not trusted")
    try:
        ok = crypto.verify(key, doc.payload_digest(), doc.sig)
    except ValueError:
        ok = False
    if not ok:
        raise BadSignature(f"attestation signature invalid for vendor {doc.vendor_name!r}")
    return VerifiedAttestation(doc.vendor_name, doc.firmware_version, doc.pcrs,
                               doc.commit_hash, doc.artifact_hash, doc.nonce, doc.timestamp)

