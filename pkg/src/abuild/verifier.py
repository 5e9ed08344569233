"""Consumer-side checks on a certificate, its source, its log status and its peers."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import crypto, merkle
from .crypto import Digest
from .enclave import verify_attestation
from .entries import ByLogIndex, ByPcr0, ByVendorFirmware, EntryKind, RevocationNotice
from .errors import AbuildError, BadSignature, EncodingError, UnknownVendor
from .log_service import LogView, iter_entries
from .measurement import RepoSnapshot, artifact_hash, snapshot_hash
from .merkle import SignedTreeHead
from .pipeline import Certificate

CHECK_ATTESTATION = "attestation_signature"
CHECK_PCR0 = "pcr0_allowlist"
CHECK_FIRMWARE = "firmware_version"
CHECK_ARTIFACT = "artifact_hash"
CHECK_INCLUSION = "inclusion_proof"
CHECK_TREE_HEAD = "tree_head_signature"
CHECK_FRESHNESS = "log_freshness"
CHECK_WITNESS = "witness_confirmations"
CHECK_REVOCATION = "revocation"

CERTIFICATE_CHECKS = (
    CHECK_ATTESTATION, CHECK_PCR0, CHECK_FIRMWARE, CHECK_ARTIFACT, CHECK_INCLUSION,
    CHECK_TREE_HEAD, CHECK_FRESHNESS, CHECK_WITNESS, CHECK_REVOCATION,
)

CHECK_SOURCE_BINDING = "source_binding"
CHECK_REPOSITORY = "repository_reference"
CHECK_AGREEMENT = "agreement"
CHECK_ANYTRUST = "anytrust"


@dataclass(frozen=True)
class TrustPolicy:
    trusted_roots: dict[str, bytes]
    allowed_pcr0: frozenset[Digest]
    log_key: bytes
    min_firmware: dict[str, str] = field(default_factory=dict)
    witness_confirmations_required: int = 1
    anytrust_k: int = 1
    witness_keys: frozenset[bytes] = frozenset()
    revocation_keys: frozenset[bytes] = frozenset()

    def __post_init__(self) -> None:
        if self.anytrust_k < 1:
            raise ValueError("anytrust_k must be >= 1")
        if self.witness_confirmations_required < 0:
            raise ValueError("witness_confirmations_required must be >= 0")

    def to_json(self) -> dict:
        return {
            "trusted_roots": {name: key.hex() for name, key in sorted(self.trusted_roots.items())},
            "allowed_pcr0": sorted(d.hex() for d in self.allowed_pcr0),
            "min_firmware": dict(sorted(self.min_firmware.items())),
            "log_key": self.log_key.hex(),
            "witness_confirmations_required": self.witness_confirmations_required,
            "witness_keys": sorted(k.hex() for k in self.witness_keys),
            "revocation_keys": sorted(k.hex() for k in self.revocation_keys),
            "anytrust_k": self.anytrust_k,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrustPolicy":
        try:
            return cls(
                trusted_roots={name: crypto.check_verifying_key(bytes.fromhex(k))
                               for name, k in obj["trusted_roots"].items()},
                allowed_pcr0=frozenset(Digest.fromhex(d) for d in obj.get("allowed_pcr0", [])),
                log_key=crypto.check_verifying_key(bytes.fromhex(obj["log_key"])),
                min_firmware=dict(obj.get("min_firmware", {})),
                witness_confirmations_required=int(obj.get("witness_confirmations_required", 1)),
                anytrust_k=int(obj.get("anytrust_k", 1)),
                witness_keys=frozenset(bytes.fromhex(k) for k in obj.get("witness_keys", [])),
                revocation_keys=frozenset(bytes.fromhex(k) for k in obj.get("revocation_keys", [])),
            )
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise EncodingError(f"bad trust policy: {exc}") from exc

    @classmethod
    def load(cls, path: Path) -> "TrustPolicy":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise EncodingError(f"{path}: not JSON: {exc}") from exc

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    def may_revoke(self, notice: RevocationNotice) -> bool:
        if notice.issuer_key in self.revocation_keys:
            return True
        # a vendor may revoke its own firmware
        scope = notice.scope
        return (isinstance(scope, ByVendorFirmware)
                and self.trusted_roots.get(scope.vendor) == notice.issuer_key)


@dataclass
class Verdict:
    failures: list[tuple[str, str]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    members: list["Verdict"] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return not self.failures

    @property
    def failed_checks(self) -> list[str]:
        return [name for name, _ in self.failures]

    def fail(self, check: str, detail: str) -> None:
        self.failures.append((check, detail))

    def to_json(self) -> dict:
        obj = {
            "accepted": self.accepted,
            "failures": [{"check": c, "detail": d} for c, d in self.failures],
        }
        if self.skipped:
            obj["skipped"] = list(self.skipped)
        if self.members:
            obj["members"] = [m.to_json() for m in self.members]
        return obj


def _version_key(version: str) -> tuple:
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.split(r"[.\-+]", version))


def firmware_at_least(version: str, minimum: str) -> bool:
    return _version_key(version) >= _version_key(minimum)


def revocation_applies(notice: RevocationNotice, cert: Certificate) -> bool:
    scope = notice.scope
    doc = cert.attestation
    if isinstance(scope, ByVendorFirmware):
        return scope.vendor == doc.vendor_name and scope.version == doc.firmware_version
    if isinstance(scope, ByPcr0):
        return scope.digest == doc.pcrs.pcr0
    if isinstance(scope, ByLogIndex):
        return scope.index == cert.log_index
    return False


def _check_freshness(cert: Certificate, policy: TrustPolicy, log_view: LogView,
                     verdict: Verdict) -> Optional[SignedTreeHead]:
    head = cert.tree_head
    fresh = log_view.get_sth()
    if not fresh.verify(policy.log_key):
        verdict.fail(CHECK_FRESHNESS, "current tree head is not signed by the trusted log key")
        return None
    if fresh.size < head.size:
        verdict.fail(CHECK_FRESHNESS, f"log shrank from {head.size} to {fresh.size}")
        return None
    if head.size == 0:
        verdict.fail(CHECK_FRESHNESS, "certificate tree head is empty")
        return fresh
    if fresh.size == head.size:
        if fresh.root != head.root:
            verdict.fail(CHECK_FRESHNESS, "current root differs from the certificate's at the same size")
        return fresh
    proof = log_view.get_consistency(head.size, fresh.size)
    if not merkle.verify_consistency(head.root, fresh.root, proof):
        verdict.fail(CHECK_FRESHNESS, f"no consistency between size {head.size} and {fresh.size}")
    return fresh


def _count_witnesses(cert: Certificate, fresh: Optional[SignedTreeHead], policy: TrustPolicy,
                     log_view: LogView) -> int:
    heads = {(cert.tree_head.size, bytes(cert.tree_head.root))}
    if fresh is not None:
        heads.add((fresh.size, bytes(fresh.root)))
    confirmed: set[bytes] = set()
    for size, root in heads:
        for cos in log_view.get_cosignatures(size):
            if (cos.witness_key in policy.witness_keys and bytes(cos.root) == root
                    and cos.size == size and cos.verify()):
                confirmed.add(cos.witness_key)
    return len(confirmed)


def verify_certificate(cert: Certificate, artifact: bytes, policy: TrustPolicy,
                       log_view: Optional[LogView], skip: Iterable[str] = ()) -> Verdict:
    """Run every certificate check and record each failure independently."""
    skip = set(skip)
    verdict = Verdict(skipped=[c for c in CERTIFICATE_CHECKS if c in skip])
    doc = cert.attestation

    def run(name: str) -> bool:
        return name not in skip

    if run(CHECK_ATTESTATION):
        try:
            verify_attestation(doc, policy.trusted_roots)
        except (UnknownVendor, BadSignature) as exc:
            verdict.fail(CHECK_ATTESTATION, f"{type(exc).__name__}: {exc}")
    if run(CHECK_PCR0) and doc.pcrs.pcr0 not in policy.allowed_pcr0:
        verdict.fail(CHECK_PCR0, f"pcr0 {doc.pcrs.pcr0.hex()} is not an allowed image")
    if run(CHECK_FIRMWARE):
        minimum = policy.min_firmware.get(doc.vendor_name)
        if minimum is not None and not firmware_at_least(doc.firmware_version, minimum):
            verdict.fail(CHECK_FIRMWARE, f"firmware {doc.firmware_version} < required {minimum}")
    if run(CHECK_ARTIFACT):
        actual = artifact_hash(artifact)
        if actual != doc.artifact_hash:
            verdict.fail(CHECK_ARTIFACT, f"artifact hashes to {actual.hex()}, attested {doc.artifact_hash.hex()}")
    if run(CHECK_INCLUSION):
        proof = cert.inclusion
        if proof.index != cert.log_index or proof.size != cert.tree_head.size:
            verdict.fail(CHECK_INCLUSION, "proof coordinates do not match the certificate")
        elif not merkle.verify_inclusion(cert.leaf_hash(), proof, cert.tree_head.root):
            verdict.fail(CHECK_INCLUSION, "attestation leaf is not included under the tree head")
    if run(CHECK_TREE_HEAD) and not cert.tree_head.verify(policy.log_key):
        verdict.fail(CHECK_TREE_HEAD, "tree head is not signed by the trusted log key")

    log_checks = [c for c in (CHECK_FRESHNESS, CHECK_WITNESS, CHECK_REVOCATION) if run(c)]
    if not log_checks:
        return verdict
    if log_view is None:
        for c in log_checks:
            verdict.fail(c, "no log view available")
        return verdict
    try:
        fresh = _check_freshness(cert, policy, log_view, verdict) if run(CHECK_FRESHNESS) else log_view.get_sth()
        if run(CHECK_WITNESS) and policy.witness_confirmations_required > 0:
            count = _count_witnesses(cert, fresh, policy, log_view)
            if count < policy.witness_confirmations_required:
                verdict.fail(CHECK_WITNESS,
                             f"{count} witness confirmations, {policy.witness_confirmations_required} required")
        if run(CHECK_REVOCATION) and fresh is not None:
            for i, entry in enumerate(iter_entries(log_view, fresh.size)):
                if entry.kind is not EntryKind.REVOCATION_NOTICE:
                    continue
                notice = entry.decode_body()
                if (notice.signature_valid() and policy.may_revoke(notice)
                        and revocation_applies(notice, cert)):
                    verdict.fail(CHECK_REVOCATION, f"revoked by log entry {i}: {notice.reason}")
    except (AbuildError, OSError, ValueError) as exc:
        for c in log_checks:
            if c not in verdict.failed_checks:
                verdict.fail(c, f"log query failed: {exc}")
    return verdict


def verify_source_binding(cert: Certificate, snapshot: RepoSnapshot) -> bool:
    try:
        return snapshot_hash(snapshot) == cert.attestation.commit_hash
    except ValueError:
        return False


def compose_verify(certs: Sequence[Certificate], artifact: bytes, policy: TrustPolicy,
                   log_view: Optional[LogView], skip: Iterable[str] = ()) -> Verdict:
    """Anytrust acceptance: k certificates from distinct vendors agreeing on CT and A."""
    skip = list(skip)
    verdict = Verdict()
    verdict.members = [verify_certificate(c, artifact, policy, log_view, skip) for c in certs]
    if not certs:
        verdict.fail(CHECK_ANYTRUST, "no certificates")
        return verdict
    artifact_hashes = {c.attestation.artifact_hash for c in certs}
    commit_hashes = {c.attestation.commit_hash for c in certs}
    if len(artifact_hashes) > 1:
        verdict.fail(CHECK_AGREEMENT, f"certificates disagree on artifact hash ({len(artifact_hashes)} values)")
    if len(commit_hashes) > 1:
        verdict.fail(CHECK_AGREEMENT, f"certificates disagree on commit hash ({len(commit_hashes)} values)")
    vendors = {c.attestation.vendor_name for c, v in zip(certs, verdict.members) if v.accepted}
    if len(vendors) < policy.anytrust_k:
        verdict.fail(CHECK_ANYTRUST,
                     f"{len(vendors)} distinct vendors passed, {policy.anytrust_k} required")
    return verdict


@dataclass(frozen=True)
class RepositoryReference:
    """Log coordinates an artifact author publishes for their genuine build."""

    log_index: int
    leaf_hash: Digest

    @classmethod
    def from_certificate(cls, cert: Certificate) -> "RepositoryReference":
        return cls(cert.log_index, cert.leaf_hash())

    def to_json(self) -> dict:
        return {"log_index": self.log_index, "leaf_hash": self.leaf_hash.hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "RepositoryReference":
        return cls(int(obj["log_index"]), Digest.fromhex(obj["leaf_hash"]))


def verify_repository_claim(expected: RepositoryReference, presented: Certificate) -> bool:
    return expected.log_index == presented.log_index and expected.leaf_hash == presented.leaf_hash()
