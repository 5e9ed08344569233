"""Instance Manager side of a build: boot, measure source, run the sandbox, attest, publish."""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from . import merkle
from .crypto import Digest
from .enclave import NONCE_SIZE, AttestationDocument, EnclaveHandle, VendorIdentity, boot
from .entries import LogEntry
from .errors import (
    ArtifactMissing,
    BuildFileError,
    CommitSignatureInvalid,
    EncodingError,
    SandboxFailure,
)
from .log_service import LogClient
from .measurement import (
    EnclaveImage,
    RepoSnapshot,
    artifact_hash,
    read_tree,
    snapshot_hash,
    write_tree,
)
from .merkle import InclusionProof, SignedTreeHead
from .sandbox import SandboxDriver, SandboxResult, SubprocessSandbox

logger = logging.getLogger(__name__)

BUILD_FILE = "abuild.toml"
AUTH_TOKEN_VAR = "ABUILD_AUTH_TOKEN"
DEFAULT_ENV = {"PATH": "/usr/local/bin:/usr/bin:/bin"}
CERT_SUFFIX = ".cert.json"


@dataclass(frozen=True)
class BuildSpec:
    artifact: str
    steps: tuple[str, ...]


def parse_build_file(text: str) -> BuildSpec:
    """Parse ``artifact = "<path>"`` and ``steps = ["cmd", ...]``, one key per line."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in ("artifact", "steps"):
            raise BuildFileError(f"line {lineno}: expected 'artifact = ...' or 'steps = [...]'")
        if key in values:
            raise BuildFileError(f"line {lineno}: duplicate key {key!r}")
        if key == "artifact":
            if value.startswith('"'):
                try:
                    value = json.loads(value)
                except json.JSONDecodeError as exc:
                    raise BuildFileError(f"line {lineno}: bad quoted path: {exc}") from exc
            values[key] = value
        else:
            try:
                steps = json.loads(value)
            except json.JSONDecodeError as exc:
                raise BuildFileError(f"line {lineno}: steps must be a list of quoted strings") from exc
            if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
                raise BuildFileError(f"line {lineno}: steps must be a list of quoted strings")
            values[key] = tuple(steps)
    if not values.get("artifact"):
        raise BuildFileError("missing 'artifact'")
    return BuildSpec(str(values["artifact"]), tuple(values.get("steps", ())))


def read_build_spec(snapshot: RepoSnapshot) -> BuildSpec:
    try:
        text = snapshot.file(BUILD_FILE).decode("utf-8")
    except KeyError:
        raise BuildFileError(f"snapshot has no {BUILD_FILE}") from None
    except UnicodeDecodeError as exc:
        raise BuildFileError(f"{BUILD_FILE} is not UTF-8") from exc
    return parse_build_file(text)


@dataclass(frozen=True)
class BuildRequest:
    snapshot: RepoSnapshot
    instructions: tuple[str, ...]
    declared_artifact_path: str
    vendor: VendorIdentity
    image: EnclaveImage
    nonce: bytes
    env: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_ENV))

    def __post_init__(self) -> None:
        spec = read_build_spec(self.snapshot)
        if tuple(self.instructions) != spec.steps or self.declared_artifact_path != spec.artifact:
            raise BuildFileError(f"instructions must come from the snapshot's {BUILD_FILE}")
        if len(self.nonce) != NONCE_SIZE:
            raise ValueError(f"nonce must be {NONCE_SIZE} bytes")

    @classmethod
    def create(cls, snapshot: RepoSnapshot, vendor: VendorIdentity, image: EnclaveImage,
               nonce: Optional[bytes] = None, env: Optional[Mapping[str, str]] = None) -> "BuildRequest":
        spec = read_build_spec(snapshot)
        return cls(
            snapshot=snapshot,
            instructions=spec.steps,
            declared_artifact_path=spec.artifact,
            vendor=vendor,
            image=image,
            nonce=os.urandom(NONCE_SIZE) if nonce is None else nonce,
            env=dict(DEFAULT_ENV) if env is None else dict(env),
        )


@dataclass(frozen=True)
class Certificate:
    attestation: AttestationDocument
    log_index: int
    inclusion: InclusionProof
    tree_head: SignedTreeHead
    artifact_name: str

    def log_entry(self) -> LogEntry:
        return LogEntry.build_attestation(self.attestation)

    def leaf_hash(self) -> Digest:
        return merkle.leaf_hash(self.log_entry())

    def to_json(self) -> dict:
        return {
            "artifact_name": self.artifact_name,
            "attestation": self.attestation.to_json(),
            "log_index": self.log_index,
            "inclusion": self.inclusion.to_json(),
            "tree_head": self.tree_head.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Certificate":
        try:
            return cls(
                attestation=AttestationDocument.from_json(obj["attestation"]),
                log_index=int(obj["log_index"]),
                inclusion=InclusionProof.from_json(obj["inclusion"]),
                tree_head=SignedTreeHead.from_json(obj["tree_head"]),
                artifact_name=obj["artifact_name"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"bad certificate: {exc}") from exc

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Certificate":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise EncodingError(f"{path}: not JSON: {exc}") from exc
        return cls.from_json(obj)


@dataclass
class BuildResult:
    certificate: Certificate
    artifact: bytes
    sandbox: SandboxResult

    def write(self, out: Path) -> Path:
        """Write the artifact to ``out`` and the certificate next to it; return the cert path."""
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(self.artifact)
        cert_path = out.with_name(out.name + CERT_SUFFIX)
        self.certificate.save(cert_path)
        return cert_path


def verify_commit_signatures(snapshot: RepoSnapshot) -> None:
    for i, commit in enumerate(snapshot.commits):
        if not commit.signature_valid():
            raise CommitSignatureInvalid(f"commit {i} ({commit.message!r}) has an invalid author signature")


def _resolve_artifact(workspace: Path, declared: str) -> Path:
    root = workspace.resolve()
    target = (workspace / declared).resolve()
    if root not in target.parents:
        raise ArtifactMissing(f"artifact path escapes the workspace: {declared}")
    if not target.is_file():
        raise ArtifactMissing(f"declared artifact not produced: {declared}")
    return target


def run_build(
    request: BuildRequest,
    log: LogClient,
    driver: Optional[SandboxDriver] = None,
    clock: Callable[[], float] = time.time,
    on_boot: Optional[Callable[[EnclaveHandle], None]] = None,
) -> BuildResult:
    """Execute one attested build and publish its attestation to ``log``."""
    driver = driver or SubprocessSandbox()
    handle = boot(request.vendor, request.image, clock)
    if on_boot is not None:
        on_boot(handle)
    workspace = Path(tempfile.mkdtemp(prefix="abuild-ws-"))
    try:
        write_tree(workspace, request.snapshot.files)
        verify_commit_signatures(request.snapshot)
        # CT is measured from what was materialized, before any build step runs
        materialized = RepoSnapshot(read_tree(workspace), request.snapshot.commits)
        handle.commit_snapshot(snapshot_hash(materialized))
        handle.begin_build()

        env = {**request.env, AUTH_TOKEN_VAR: handle.auth_token}
        result = driver.execute(workspace, request.instructions, env)
        if result.exit_status != 0:
            raise SandboxFailure(f"build exited with status {result.exit_status}", result)

        artifact = _resolve_artifact(workspace, request.declared_artifact_path).read_bytes()
        handle.report_artifact(artifact_hash(artifact))
        doc = handle.attest(request.nonce)
    finally:
        handle.destroy()
        shutil.rmtree(workspace, ignore_errors=True)

    index, sth = log.append(LogEntry.build_attestation(doc))
    proof = log.get_inclusion(index, sth.size)
    cert = Certificate(doc, index, proof, sth, Path(request.declared_artifact_path).name)
    logger.info("published build attestation at index %d (tree size %d)", index, sth.size)
    return BuildResult(cert, artifact, result)
