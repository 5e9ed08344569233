"""Persistent transparency log, its newline-delimited JSON wire protocol, and witnesses.

Storage is a single append-only file of length-prefixed canonical entries; the
Merkle tree is rebuilt from it on startup. A record that was only partially
written when the process died was never acknowledged and is cut off on load.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol

from . import crypto, merkle
from .crypto import Digest, KeyPair
from .entries import LogEntry
from .errors import BadSignature, EncodingError, InvalidEntry, LogError, ProofRangeError
from .merkle import ConsistencyProof, InclusionProof, SignedTreeHead, TreeState

logger = logging.getLogger(__name__)

_LEN = struct.Struct(">I")


class LogView(Protocol):
    """Read side of a transparency log, local or remote."""

    def get_sth(self) -> SignedTreeHead: ...
    def get_inclusion(self, index: int, size: int) -> InclusionProof: ...
    def get_consistency(self, old_size: int, new_size: int) -> ConsistencyProof: ...
    def get_entry(self, index: int) -> LogEntry: ...
    def get_entries(self, start: int, end: int) -> list[LogEntry]: ...
    def get_cosignatures(self, size: int) -> list["Cosignature"]: ...


class LogClient(LogView, Protocol):
    def append(self, entry: LogEntry) -> tuple[int, SignedTreeHead]: ...
    def add_cosignature(self, cosignature: "Cosignature") -> None: ...


@dataclass(frozen=True)
class Cosignature:
    """A witness's signature over a tree head it found consistent with its history."""

    witness_key: bytes
    size: int
    root: Digest
    timestamp: int
    sig: bytes = field(repr=False)

    @classmethod
    def sign(cls, key: KeyPair, sth: SignedTreeHead) -> "Cosignature":
        payload = merkle.tree_head_payload(sth.size, sth.root, sth.timestamp)
        return cls(key.verifying_key, sth.size, sth.root, sth.timestamp, key.sign(payload))

    def verify(self) -> bool:
        try:
            return crypto.verify(self.witness_key,
                                 merkle.tree_head_payload(self.size, self.root, self.timestamp), self.sig)
        except ValueError:
            return False

    def to_json(self) -> dict:
        return {
            "witness_key": self.witness_key.hex(),
            "size": self.size,
            "root": self.root.hex(),
            "timestamp": self.timestamp,
            "sig": base64.b64encode(self.sig).decode("ascii"),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Cosignature":
        return cls(
            witness_key=crypto.check_verifying_key(bytes.fromhex(obj["witness_key"])),
            size=int(obj["size"]),
            root=Digest.fromhex(obj["root"]),
            timestamp=int(obj["timestamp"]),
            sig=crypto.check_signature(base64.b64decode(obj["sig"], validate=True)),
        )


class LogStorage:
    """Append-only file of ``u32 length || canonical LogEntry`` records."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)

    def load(self) -> list[LogEntry]:
        data = self.path.read_bytes()
        entries: list[LogEntry] = []
        pos = 0
        while pos < len(data):
            if pos + 4 > len(data):
                break
            (n,) = _LEN.unpack_from(data, pos)
            if pos + 4 + n > len(data):
                break
            entries.append(LogEntry.from_bytes(data[pos + 4:pos + 4 + n]))
            pos += 4 + n
        if pos != len(data):
            logger.warning("discarding %d bytes of torn record at end of %s", len(data) - pos, self.path)
            with open(self.path, "r+b") as fh:
                fh.truncate(pos)
                fh.flush()
                os.fsync(fh.fileno())
        return entries

    def append(self, entry: LogEntry) -> None:
        record = entry.to_bytes()
        with open(self.path, "ab") as fh:
            fh.write(_LEN.pack(len(record)) + record)
            fh.flush()
            os.fsync(fh.fileno())

    @property
    def cosignature_path(self) -> Path:
        return self.path.with_name(self.path.name + ".cosig")

    def load_cosignatures(self) -> list[Cosignature]:
        if not self.cosignature_path.exists():
            return []
        out = []
        for line in self.cosignature_path.read_text(encoding="utf-8").splitlines():
            try:
                out.append(Cosignature.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError):
                # torn trailing line
                continue
        return out

    def append_cosignature(self, cosignature: Cosignature) -> None:
        with open(self.cosignature_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(cosignature.to_json(), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


class TransparencyLog:
    """In-process log. Appends are serialized by a lock; reads see immutable prefixes."""

    def __init__(self, key: KeyPair, storage: Optional[LogStorage] = None,
                 clock: Callable[[], float] = time.time) -> None:
        self.key = key
        self._storage = storage
        self._clock = clock
        self._lock = threading.Lock()
        self._entries: list[LogEntry] = []
        self._tree = TreeState()
        self._cosignatures: dict[tuple[int, bytes], list[Cosignature]] = {}
        if storage is not None:
            entries = storage.load()
            self._entries = entries
            self._tree = TreeState(tuple(merkle.leaf_hash(e) for e in entries))
            for cos in storage.load_cosignatures():
                self._cosignatures.setdefault((cos.size, bytes(cos.root)), []).append(cos)
        self._sth = self._sign_head(self._tree)

    @classmethod
    def open(cls, path: Path, key: KeyPair, **kwargs) -> "TransparencyLog":
        return cls(key, LogStorage(path), **kwargs)

    @property
    def log_key(self) -> bytes:
        return self.key.verifying_key

    @property
    def size(self) -> int:
        return self._tree.size

    @property
    def tree(self) -> TreeState:
        return self._tree

    def _sign_head(self, tree: TreeState) -> SignedTreeHead:
        return SignedTreeHead.sign(self.key, tree.size, tree.root(), int(self._clock()))

    def append(self, entry: LogEntry) -> tuple[int, SignedTreeHead]:
        with self._lock:
            tree, index = merkle.append(self._tree, entry)
            if self._storage is not None:
                self._storage.append(entry)
            self._entries.append(entry)
            self._tree = tree
            self._sth = self._sign_head(tree)
            return index, self._sth

    def get_sth(self) -> SignedTreeHead:
        return self._sth

    def get_inclusion(self, index: int, size: Optional[int] = None) -> InclusionProof:
        tree = self._tree
        return tree.prove_inclusion(index, tree.size if size is None else size)

    def get_consistency(self, old_size: int, new_size: Optional[int] = None) -> ConsistencyProof:
        tree = self._tree
        return tree.prove_consistency(old_size, tree.size if new_size is None else new_size)

    def get_entry(self, index: int) -> LogEntry:
        if not 0 <= index < len(self._entries):
            raise ProofRangeError(f"entry index {index} out of range for size {len(self._entries)}")
        return self._entries[index]

    def get_entries(self, start: int, end: int) -> list[LogEntry]:
        size = len(self._entries)
        if not 0 <= start <= end <= size:
            raise ProofRangeError(f"entry range [{start}, {end}) out of range for size {size}")
        return self._entries[start:end]

    def add_cosignature(self, cosignature: Cosignature) -> None:
        if not cosignature.verify():
            raise BadSignature("cosignature does not verify")
        tree = self._tree
        if cosignature.size > tree.size or tree.root(cosignature.size) != cosignature.root:
            raise InvalidEntry("cosignature does not match this log's tree")
        with self._lock:
            if self._storage is not None:
                self._storage.append_cosignature(cosignature)
            self._cosignatures.setdefault((cosignature.size, bytes(cosignature.root)), []).append(cosignature)

    def get_cosignatures(self, size: int) -> list[Cosignature]:
        tree = self._tree
        if not 0 <= size <= tree.size:
            raise ProofRangeError(f"size {size} out of range for tree of {tree.size}")
        return list(self._cosignatures.get((size, bytes(tree.root(size))), []))


# -- wire protocol ---------------------------------------------------------------

ERR_MALFORMED = "MALFORMED"
ERR_UNKNOWN_OP = "UNKNOWN_OP"
ERR_OUT_OF_RANGE = "OUT_OF_RANGE"
ERR_INVALID_ENTRY = "INVALID_ENTRY"
ERR_BAD_SIGNATURE = "BAD_SIGNATURE"
ERR_INTERNAL = "INTERNAL"


def _error(code: str, msg: str) -> dict:
    return {"ok": False, "code": code, "msg": msg}


def _int_field(req: dict, name: str, default: Optional[int] = None) -> int:
    value = req.get(name, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise EncodingError(f"field {name!r} must be an integer")
    return value


def handle_request(log: TransparencyLog, req: object) -> dict:
    """Dispatch one decoded request object and return the response object."""
    if not isinstance(req, dict) or not isinstance(req.get("op"), str):
        return _error(ERR_MALFORMED, "request must be a JSON object with an 'op' string")
    op = req["op"]
    try:
        if op == "APPEND":
            if not isinstance(req.get("entry"), dict):
                raise EncodingError("APPEND requires an 'entry' object")
            index, sth = log.append(LogEntry.from_json(req["entry"]))
            return {"ok": True, "index": index, "sth": sth.to_json()}
        if op == "GET_STH":
            return {"ok": True, "sth": log.get_sth().to_json()}
        if op == "GET_INCLUSION":
            proof = log.get_inclusion(_int_field(req, "index"), _int_field(req, "size", log.size))
            return {"ok": True, "proof": proof.to_json()}
        if op == "GET_CONSISTENCY":
            proof = log.get_consistency(_int_field(req, "old_size"), _int_field(req, "new_size", log.size))
            return {"ok": True, "proof": proof.to_json()}
        if op == "GET_ENTRY":
            return {"ok": True, "entry": log.get_entry(_int_field(req, "index")).to_json()}
        if op == "GET_ENTRIES":
            entries = log.get_entries(_int_field(req, "start"), _int_field(req, "end", log.size))
            return {"ok": True, "entries": [e.to_json() for e in entries]}
        if op == "ADD_COSIGNATURE":
            if not isinstance(req.get("cosignature"), dict):
                raise EncodingError("ADD_COSIGNATURE requires a 'cosignature' object")
            log.add_cosignature(Cosignature.from_json(req["cosignature"]))
            return {"ok": True}
        if op == "GET_COSIGNATURES":
            cosigs = log.get_cosignatures(_int_field(req, "size", log.size))
            return {"ok": True, "cosignatures": [c.to_json() for c in cosigs]}
    except ProofRangeError as exc:
        return _error(ERR_OUT_OF_RANGE, str(exc))
    except InvalidEntry as exc:
        return _error(ERR_INVALID_ENTRY, str(exc))
    except BadSignature as exc:
        return _error(ERR_BAD_SIGNATURE, str(exc))
    except (EncodingError, KeyError, TypeError, ValueError) as exc:
        return _error(ERR_MALFORMED, str(exc))
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("request failed")
        return _error(ERR_INTERNAL, str(exc))
    return _error(ERR_UNKNOWN_OP, f"unknown op {op!r}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        log: TransparencyLog = self.server.log  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                req = json.loads(line)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                resp = _error(ERR_MALFORMED, f"invalid JSON: {exc}")
            else:
                resp = handle_request(log, req)
            self.wfile.write(json.dumps(resp, sort_keys=True).encode("utf-8") + b"\n")
            self.wfile.flush()


class LogServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, log: TransparencyLog, address: tuple[str, int]) -> None:
        super().__init__(address, _Handler)
        self.log = log

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"


@dataclass
class LogServiceConfig:
    listen_address: str
    storage_path: Path
    log_key: KeyPair


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


def serve(config: LogServiceConfig) -> LogServer:
    """Open storage and bind the server; the caller runs ``serve_forever``."""
    log = TransparencyLog.open(config.storage_path, config.log_key)
    return LogServer(log, parse_address(config.listen_address))


class RemoteLog:
    """TCP client for a running log service. One connection per request."""

    def __init__(self, address: str, timeout: float = 10.0) -> None:
        self.address = address
        self._addr = parse_address(address)
        self.timeout = timeout

    def _call(self, req: dict) -> dict:
        with socket.create_connection(self._addr, timeout=self.timeout) as sock:
            sock.sendall(json.dumps(req).encode("utf-8") + b"\n")
            with sock.makefile("rb") as fh:
                line = fh.readline()
        if not line:
            raise LogError(ERR_INTERNAL, "connection closed without response")
        resp = json.loads(line)
        if not resp.get("ok"):
            raise LogError(resp.get("code", ERR_INTERNAL), resp.get("msg", ""))
        return resp

    def append(self, entry: LogEntry) -> tuple[int, SignedTreeHead]:
        resp = self._call({"op": "APPEND", "entry": entry.to_json()})
        return resp["index"], SignedTreeHead.from_json(resp["sth"])

    def get_sth(self) -> SignedTreeHead:
        return SignedTreeHead.from_json(self._call({"op": "GET_STH"})["sth"])

    def get_inclusion(self, index: int, size: int) -> InclusionProof:
        resp = self._call({"op": "GET_INCLUSION", "index": index, "size": size})
        return InclusionProof.from_json(resp["proof"])

    def get_consistency(self, old_size: int, new_size: int) -> ConsistencyProof:
        resp = self._call({"op": "GET_CONSISTENCY", "old_size": old_size, "new_size": new_size})
        return ConsistencyProof.from_json(resp["proof"])

    def get_entry(self, index: int) -> LogEntry:
        return LogEntry.from_json(self._call({"op": "GET_ENTRY", "index": index})["entry"])

    def get_entries(self, start: int, end: int) -> list[LogEntry]:
        resp = self._call({"op": "GET_ENTRIES", "start": start, "end": end})
        return [LogEntry.from_json(e) for e in resp["entries"]]

    def add_cosignature(self, cosignature: Cosignature) -> None:
        self._call({"op": "ADD_COSIGNATURE", "cosignature": cosignature.to_json()})

    def get_cosignatures(self, size: int) -> list[Cosignature]:
        resp = self._call({"op": "GET_COSIGNATURES", "size": size})
        return [Cosignature.from_json(c) for c in resp["cosignatures"]]


# -- witnesses --------------------------------------------------------------------


class Observation(Enum):
    CONSISTENT = "Consistent"
    SPLIT_VIEW = "SplitView"
    REGRESSION = "Regression"


@dataclass
class WitnessState:
    log_key: bytes
    last_sth: Optional[SignedTreeHead] = None

    def to_json(self) -> dict:
        return {"log_key": self.log_key.hex(),
                "last_sth": self.last_sth.to_json() if self.last_sth else None}

    @classmethod
    def from_json(cls, obj: dict) -> "WitnessState":
        last = obj.get("last_sth")
        return cls(bytes.fromhex(obj["log_key"]), SignedTreeHead.from_json(last) if last else None)


def witness_observe(state: WitnessState, sth: SignedTreeHead,
                    consistency: Optional[ConsistencyProof]) -> Observation:
    """Check ``sth`` against the last head this witness accepted.

    Advances ``state`` only on ``CONSISTENT``. ``consistency`` must prove the
    old head's size to ``sth.size``; it is ignored on first contact or when the
    sizes are equal.
    """
    if not sth.verify(state.log_key):
        raise BadSignature("tree head is not signed by the observed log")
    last = state.last_sth
    if last is not None and sth.size < last.size:
        return Observation.REGRESSION
    if last is None or last.size == 0:
        ok = True
    elif last.size == sth.size:
        ok = last.root == sth.root
    else:
        ok = (consistency is not None
              and consistency.old_size == last.size
              and consistency.new_size == sth.size
              and merkle.verify_consistency(last.root, sth.root, consistency))
    if not ok:
        return Observation.SPLIT_VIEW
    state.last_sth = sth
    return Observation.CONSISTENT


class Witness:
    """Polls a log, checks each new head for consistency and cosigns the good ones."""

    def __init__(self, key: KeyPair, log_key: bytes, state: Optional[WitnessState] = None) -> None:
        self.key = key
        self.state = state or WitnessState(log_key)

    @property
    def verifying_key(self) -> bytes:
        return self.key.verifying_key

    def observe(self, sth: SignedTreeHead, consistency: Optional[ConsistencyProof]) -> Observation:
        return witness_observe(self.state, sth, consistency)

    def poll(self, log: LogClient, cosign: bool = True) -> Observation:
        sth = log.get_sth()
        last = self.state.last_sth
        proof = None
        if last is not None and 0 < last.size < sth.size:
            proof = log.get_consistency(last.size, sth.size)
        result = self.observe(sth, proof)
        if result is Observation.CONSISTENT and cosign:
            log.add_cosignature(Cosignature.sign(self.key, sth))
        return result


def serve_in_thread(log: TransparencyLog, address: str = "127.0.0.1:0") -> LogServer:
    """Start a server on a daemon thread; used by tests and demos."""
    server = LogServer(log, parse_address(address))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def iter_entries(view: LogView, size: int, batch: int = 256) -> Iterable[LogEntry]:
    for start in range(0, size, batch):
        yield from view.get_entries(start, min(size, start + batch))
