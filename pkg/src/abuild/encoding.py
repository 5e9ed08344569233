"""Canonical byte encoding used by every hashed or signed record.

Layout rules:

* unsigned integers are 8 bytes, big-endian
* byte strings and UTF-8 text are prefixed with a 4-byte big-endian length
* lists carry a 4-byte element count followed by each element
* an absent optional value is written as a zero-length byte string

Records implement ``write_canonical(w)`` and, where they need to be parsed
back, a ``read_canonical(r)`` classmethod.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable, Optional, Protocol, TypeVar

from .errors import EncodingError

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")

T = TypeVar("T")


class Canonical(Protocol):
    def write_canonical(self, w: "Writer") -> None: ...


def u64(value: int) -> bytes:
    if not 0 <= value < 1 << 64:
        raise EncodingError(f"u64 out of range: {value}")
    return _U64.pack(value)


def u32(value: int) -> bytes:
    if not 0 <= value < 1 << 32:
        raise EncodingError(f"u32 out of range: {value}")
    return _U32.pack(value)


class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u64(self, value: int) -> "Writer":
        self._parts.append(u64(value))
        return self

    def bytes(self, value: bytes) -> "Writer":
        value = bytes(value)
        self._parts.append(u32(len(value)))
        self._parts.append(value)
        return self

    def str(self, value: str) -> "Writer":
        return self.bytes(value.encode("utf-8"))

    def optional(self, value: Optional[bytes]) -> "Writer":
        return self.bytes(b"" if value is None else value)

    def record(self, value: Canonical) -> "Writer":
        value.write_canonical(self)
        return self

    def list(self, items: Iterable[T], write_item: Callable[["Writer", T], object]) -> "Writer":
        items = list(items)
        self._parts.append(u32(len(items)))
        for item in items:
            write_item(self, item)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self._data = memoryview(bytes(data))
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise EncodingError("truncated canonical encoding")
        chunk = self._data[self._pos:end].tobytes()
        self._pos = end
        return chunk

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def bytes(self) -> bytes:
        return self._take(self.u32())

    def fixed(self, size: int) -> bytes:
        value = self.bytes()
        if len(value) != size:
            raise EncodingError(f"expected {size} bytes, got {len(value)}")
        return value

    def optional_fixed(self, size: int) -> Optional[bytes]:
        value = self.bytes()
        if not value:
            return None
        if len(value) != size:
            raise EncodingError(f"expected 0 or {size} bytes, got {len(value)}")
        return value

    def str(self) -> str:
        try:
            return self.bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError("invalid UTF-8 in text field") from exc

    def list(self, read_item: Callable[["Reader"], T]) -> list[T]:
        return [read_item(self) for _ in range(self.u32())]

    @property
    def exhausted(self) -> bool:
        return self._pos == len(self._data)

    def finish(self) -> None:
        if not self.exhausted:
            raise EncodingError(f"{len(self._data) - self._pos} trailing bytes")


def canonical_encode(value: Canonical) -> bytes:
    """Serialize a record in its fixed declared field order."""
    return Writer().record(value).getvalue()


def canonical_decode(cls: type[T], data: bytes) -> T:
    r = Reader(data)
    value = cls.read_canonical(r)  # type: ignore[attr-defined]
    r.finish()
    return value
