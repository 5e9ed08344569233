"""Equivocation and crash-restart drivers shared by the unit and acceptance suites."""

from __future__ import annotations

import json
import os
import random
import signal
import subprocess
import sys
import time
from pathlib import Path

from abuild import crypto
from abuild.entries import LogEntry, SourceAudit
from abuild.log_service import Observation, RemoteLog, TransparencyLog, Witness
from abuild.toy import key_json

AUDITOR = crypto.keygen(bytes([9]) * 32)


def audit_entry(label: str) -> LogEntry:
    audit = SourceAudit(crypto.hash(label.encode()), "auditor", label, 0)
    return LogEntry.source_audit(audit, AUDITOR)


def equivocation_point(rng: random.Random, max_leaves: int = 32) -> tuple[Observation, tuple[int, int, int, int]]:
    """Run one randomized equivocation and return what the witness concluded.

    The honest log grows to ``m`` leaves; the witness sees its head. The log
    operator then rewrites leaf ``j < m`` and presents a head of size ``n >= m``
    (equal size or grown), with whatever consistency proof its forged tree yields.
    """
    key = crypto.keygen(rng.randbytes(32))
    n = rng.randint(1, max_leaves)
    m = rng.randint(1, n)
    j = rng.randrange(m)
    labels = [f"entry-{rng.getrandbits(64)}" for _ in range(n)]

    honest = TransparencyLog(key, clock=lambda: 1)
    for label in labels[:m]:
        honest.append(audit_entry(label))
    witness = Witness(crypto.keygen(rng.randbytes(32)), key.verifying_key)
    assert witness.poll(honest, cosign=False) is Observation.CONSISTENT

    forged = TransparencyLog(key, clock=lambda: 2)
    for i, label in enumerate(labels):
        forged.append(audit_entry(label + "-evil" if i == j else label))
    return witness.poll(forged, cosign=False), (n, m, j, witness.state.last_sth.size)


def equivocation_trials(count: int, seed: int = 0) -> list[tuple[Observation, tuple[int, int, int, int]]]:
    rng = random.Random(seed)
    return [equivocation_point(rng) for _ in range(count)]


class LogProcess:
    """``abuild serve-log`` in a child process that can be SIGKILLed."""

    def __init__(self, storage: Path, key_file: Path) -> None:
        self.storage, self.key_file = storage, key_file
        self.proc: subprocess.Popen | None = None
        self.address = ""

    def start(self) -> RemoteLog:
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "abuild", "serve-log", "--json",
             "--storage", str(self.storage), "--key", str(self.key_file), "--listen", "127.0.0.1:0"],
            stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
        )
        line = self.proc.stdout.readline()
        if not line:
            raise RuntimeError("serve-log exited before listening")
        self.address = json.loads(line)["listening"]
        return RemoteLog(self.address)

    def kill(self) -> None:
        if self.proc is not None:
            os.kill(self.proc.pid, signal.SIGKILL)
            self.proc.wait()
            self.proc.stdout.close()
            self.proc = None


def write_key_file(path: Path, seed: bytes) -> Path:
    path.write_text(json.dumps(key_json(crypto.keygen(seed))))
    return path


def crash_restart_trials(workdir: Path, crash_points: int, seed: int = 0) -> list[dict]:
    """Append random batches, SIGKILL at an append boundary, restart and compare.

    Returns one record per crash point with the acknowledged and recovered heads.
    """
    rng = random.Random(seed)
    key_file = write_key_file(workdir / "log-key.json", rng.randbytes(32))
    proc = LogProcess(workdir / "log.bin", key_file)
    results = []
    acked = None
    try:
        log = proc.start()
        for point in range(crash_points):
            for _ in range(rng.randint(0, 4)):
                _, acked = log.append(audit_entry(f"p{point}-{rng.getrandbits(48)}"))
            if acked is None:
                acked = log.get_sth()
            started = time.monotonic()
            proc.kill()
            log = proc.start()
            recovered = log.get_sth()
            results.append({
                "point": point,
                "acked_size": acked.size,
                "acked_root": acked.root.hex(),
                "recovered_size": recovered.size,
                "recovered_root": recovered.root.hex(),
                "restart_s": time.monotonic() - started,
            })
    finally:
        proc.kill()
    return results
