"""Executable attack scenarios, one per attack category of the formal model.

Each scenario injects one tampering into an otherwise honest run and then
applies the consumer's verification procedure with a chosen set of
protections. A protection that is switched off means its checks are skipped.
The scenario is ``DETECTED`` iff a check owned by its governing protection
fails.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

from .enclave import NONCE_SIZE, boot
from .measurement import artifact_hash, snapshot_hash
from .pipeline import BuildRequest, BuildResult, Certificate, run_build
from .toy import ToyWorld, seeded_key, toy_image, toy_world
from .verifier import (
    CHECK_ARTIFACT,
    CHECK_ATTESTATION,
    CHECK_FIRMWARE,
    CHECK_FRESHNESS,
    CHECK_INCLUSION,
    CHECK_PCR0,
    CHECK_REPOSITORY,
    CHECK_REVOCATION,
    CHECK_SOURCE_BINDING,
    CHECK_TREE_HEAD,
    CHECK_WITNESS,
    RepositoryReference,
    verify_certificate,
    verify_repository_claim,
    verify_source_binding,
)


class AttackKind(Enum):
    CODE_MANIPULATION = "CodeManipulation"
    BUILD_ASSET_MANIPULATION = "BuildAssetManipulation"
    INFRASTRUCTURE_MANIPULATION = "InfrastructureManipulation"
    REPOSITORY_SPOOFING = "RepositorySpoofing"

    @classmethod
    def parse(cls, text: str) -> "AttackKind":
        key = text.replace("-", "").replace("_", "").lower()
        for kind in cls:
            if kind.value.lower() == key or kind.name.replace("_", "").lower() == key:
                return kind
        # short forms: code, build-asset, infrastructure, repository
        for kind in cls:
            if kind.value.lower().startswith(key):
                return kind
        raise ValueError(f"unknown attack kind {text!r}")


class Protection(Enum):
    COMMIT_VERIFY = "CommitVerify"
    LOG_VERIFY = "LogVerify"
    AT_VERIFY = "ATVerify"
    REPOSITORY_VERIFY = "RepositoryVerify"

    @classmethod
    def parse(cls, text: str) -> "Protection":
        key = text.replace("-", "").replace("_", "").lower()
        for p in cls:
            if p.value.lower() == key:
                return p
        raise ValueError(f"unknown protection {text!r}")


PROTECTION_CHECKS: dict[Protection, frozenset[str]] = {
    Protection.COMMIT_VERIFY: frozenset({CHECK_SOURCE_BINDING}),
    Protection.LOG_VERIFY: frozenset({CHECK_ARTIFACT, CHECK_INCLUSION, CHECK_TREE_HEAD, CHECK_FRESHNESS,
                                      CHECK_WITNESS, CHECK_REVOCATION}),
    Protection.AT_VERIFY: frozenset({CHECK_ATTESTATION, CHECK_PCR0, CHECK_FIRMWARE}),
    Protection.REPOSITORY_VERIFY: frozenset({CHECK_REPOSITORY}),
}

GOVERNING: dict[AttackKind, Protection] = {
    AttackKind.CODE_MANIPULATION: Protection.COMMIT_VERIFY,
    AttackKind.BUILD_ASSET_MANIPULATION: Protection.LOG_VERIFY,
    AttackKind.INFRASTRUCTURE_MANIPULATION: Protection.AT_VERIFY,
    AttackKind.REPOSITORY_SPOOFING: Protection.REPOSITORY_VERIFY,
}

ALL_PROTECTIONS = frozenset(Protection)


class Result(Enum):
    DETECTED = "Detected"
    UNDETECTED = "Undetected"


@dataclass(frozen=True)
class Scenario:
    kind: AttackKind
    protections: frozenset[Protection] = ALL_PROTECTIONS

    @property
    def governing(self) -> Protection:
        return GOVERNING[self.kind]

    def predicted(self) -> Result:
        """Protected runs detect, unprotected runs do not."""
        return Result.DETECTED if self.governing in self.protections else Result.UNDETECTED


@dataclass
class Outcome:
    scenario: Scenario
    result: Result
    evidence: list[str] = field(default_factory=list)
    details: list[tuple[str, str]] = field(default_factory=list)

    @property
    def matches_prediction(self) -> bool:
        return self.result is self.scenario.predicted()

    def to_json(self) -> dict:
        return {
            "kind": self.scenario.kind.value,
            "protections": sorted(p.value for p in self.scenario.protections),
            "governing": self.scenario.governing.value,
            "result": self.result.value,
            "predicted": self.scenario.predicted().value,
            "matches_prediction": self.matches_prediction,
            "evidence": self.evidence,
            "details": [{"check": c, "detail": d} for c, d in self.details],
        }


@dataclass
class Presented:
    """What reaches the consumer: artifact, certificate, and the source they audit."""

    artifact: bytes
    cert: Certificate
    audited_snapshot: object


def _honest_build(world: ToyWorld, snapshot=None, image=None) -> BuildResult:
    request = BuildRequest.create(snapshot or world.snapshot, world.vendors[0], image or world.image)
    return run_build(request, world.log)


def _code_manipulation(world: ToyWorld) -> Presented:
    published = world.snapshot
    # tamper with one file byte in transit; commit metadata left untouched
    files = tuple((p, c.replace(b"hello", b"hellO") if p == "src/hello.txt" else c) for p, c in published.files)
    ingested = replace(published, files=files)
    built = _honest_build(world, snapshot=ingested)
    return Presented(built.artifact, built.certificate, published)


def _build_asset_manipulation(world: ToyWorld) -> Presented:
    honest = _honest_build(world)
    swapped = honest.artifact + b"\n# side-loaded payload\n"
    # a compromised host runs a genuine enclave on the real source but the
    # untrusted build step reports the swapped asset; the host never publishes
    handle = boot(world.vendors[0], world.image)
    handle.commit_snapshot(snapshot_hash(world.snapshot))
    handle.begin_build()
    handle.report_artifact(artifact_hash(swapped))
    doc = handle.attest(os.urandom(NONCE_SIZE))
    handle.destroy()
    forged = replace(honest.certificate, attestation=doc)
    return Presented(swapped, forged, world.snapshot)


def _infrastructure_manipulation(world: ToyWorld) -> Presented:
    built = _honest_build(world, image=toy_image(variant=" +backdoor"))
    return Presented(built.artifact, built.certificate, world.snapshot)


def _repository_spoofing(world: ToyWorld) -> Presented:
    attacker = seeded_key("attacker")
    files = [(p, c.replace(b"hello", b"pwned") if p == "src/hello.txt" else c) for p, c in world.snapshot.files]
    clone = world.snapshot.with_commit("tweak greeting", attacker, files=files)
    built = _honest_build(world, snapshot=clone)
    return Presented(built.artifact, built.certificate, clone)


_ATTACKS = {
    AttackKind.CODE_MANIPULATION: _code_manipulation,
    AttackKind.BUILD_ASSET_MANIPULATION: _build_asset_manipulation,
    AttackKind.INFRASTRUCTURE_MANIPULATION: _infrastructure_manipulation,
    AttackKind.REPOSITORY_SPOOFING: _repository_spoofing,
}


def consumer_verify(world: ToyWorld, presented: Presented, reference: RepositoryReference,
                    protections: Iterable[Protection]) -> list[tuple[str, str]]:
    """Run the enabled protections' checks; return every (check, detail) failure."""
    enabled = set(protections)
    skip = set().union(*(PROTECTION_CHECKS[p] for p in Protection if p not in enabled))
    verdict = verify_certificate(presented.cert, presented.artifact, world.policy, world.log, skip=skip)
    failures = list(verdict.failures)
    if Protection.COMMIT_VERIFY in enabled and not verify_source_binding(presented.cert, presented.audited_snapshot):
        failures.append((CHECK_SOURCE_BINDING, "snapshot hash differs from the attested commit hash"))
    if Protection.REPOSITORY_VERIFY in enabled and not verify_repository_claim(reference, presented.cert):
        failures.append((CHECK_REPOSITORY, "log coordinates differ from the author's published reference"))
    return failures


def run_scenario(scenario: Scenario) -> Outcome:
    world = toy_world()
    # the artifact author's own build and its published log coordinates
    reference = RepositoryReference.from_certificate(_honest_build(world).certificate)
    presented = _ATTACKS[scenario.kind](world)
    world.witness.poll(world.log)
    failures = consumer_verify(world, presented, reference, scenario.protections)
    evidence = sorted({c for c, _ in failures})
    governing_checks = PROTECTION_CHECKS[scenario.governing]
    detected = any(c in governing_checks for c in evidence)
    return Outcome(scenario, Result.DETECTED if detected else Result.UNDETECTED, evidence, failures)
