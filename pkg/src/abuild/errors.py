"""Exception hierarchy shared across the build, log and verification layers."""

from __future__ import annotations


class AbuildError(Exception):
    """Base class for every error raised by this package."""


class EncodingError(AbuildError, ValueError):
    """Malformed canonical bytes or an out-of-schema value."""


class StateViolation(AbuildError):
    """An enclave client operation was called in the wrong phase."""


class RatchetViolation(StateViolation):
    """A second attempt to commit the source measurement."""


class UnknownVendor(AbuildError):
    pass


class BadSignature(AbuildError):
    pass


class InvalidEntry(AbuildError):
    """A log entry whose body does not decode for its kind, or whose signature is wrong."""


class ProofRangeError(AbuildError, IndexError):
    pass


class SandboxFailure(AbuildError):
    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class SandboxTimeout(SandboxFailure):
    pass


class CommitSignatureInvalid(AbuildError):
    pass


class ArtifactMissing(AbuildError):
    pass


class BuildFileError(AbuildError):
    """The snapshot's build file is absent or does not parse."""


class LogError(AbuildError):
    """Error response from a transparency log service."""

    def __init__(self, code: str, msg: str):
        super().__init__(f"{code}: {msg}")
        self.code = code
        self.msg = msg
