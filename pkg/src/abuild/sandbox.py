"""Execution backends for untrusted build instructions.

Only a subprocess driver ships here. It gives each build a fresh workspace, an
environment holding nothing but the variables passed in, and a timeout. It
does not isolate the kernel; stronger backends implement :class:`SandboxDriver`.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .errors import SandboxFailure, SandboxTimeout

DEFAULT_TIMEOUT = 300.0


@dataclass(frozen=True)
class CommandRecord:
    command: str
    exit_code: int
    stdout: str
    stderr: str


@dataclass
class SandboxResult:
    exit_status: int
    transcript: list[CommandRecord] = field(default_factory=list)

    @property
    def stdout(self) -> str:
        return "".join(rec.stdout for rec in self.transcript)

    def to_json(self) -> list[dict]:
        return [rec.__dict__ for rec in self.transcript]


class SandboxDriver(Protocol):
    def execute(self, workspace: Path, instructions: Sequence[str],
                env: Mapping[str, str]) -> SandboxResult: ...


class SubprocessSandbox:
    def __init__(self, timeout: float = DEFAULT_TIMEOUT, shell: str = "/bin/sh") -> None:
        self.timeout = timeout
        self.shell = shell

    def execute(self, workspace: Path, instructions: Sequence[str],
                env: Mapping[str, str]) -> SandboxResult:
        """Run commands in order and stop at the first nonzero exit."""
        result = SandboxResult(exit_status=0)
        for command in instructions:
            try:
                proc = subprocess.run(
                    [self.shell, "-c", command],
                    cwd=workspace,
                    env=dict(env),
                    capture_output=True,
                    timeout=self.timeout,
                    stdin=subprocess.DEVNULL,
                )
            except subprocess.TimeoutExpired as exc:
                result.transcript.append(CommandRecord(
                    command, -1, _text(exc.stdout), _text(exc.stderr)))
                result.exit_status = -1
                raise SandboxTimeout(f"command timed out after {self.timeout}s: {command}", result) from None
            except OSError as exc:
                raise SandboxFailure(f"cannot execute {command!r}: {exc}", result) from exc
            result.transcript.append(CommandRecord(
                command, proc.returncode, _text(proc.stdout), _text(proc.stderr)))
            if proc.returncode != 0:
                result.exit_status = proc.returncode
                if proc.returncode in (126, 127):
                    raise SandboxFailure(f"command not executable: {command}", result)
                break
        return result


def _text(data: bytes | str | None) -> str:
    if data is None:
        return ""
    if isinstance(data, str):
        return data
    return data.decode("utf-8", errors="replace")


def sandbox_execute(driver: SandboxDriver, workspace: Path, instructions: Sequence[str],
                    env: Mapping[str, str]) -> SandboxResult:
    return driver.execute(Path(workspace), instructions, env)
