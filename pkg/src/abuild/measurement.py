"""Enclave image measurements (PCR0-2) and the repository snapshot hash CT."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath
from typing import Iterable, Optional, Sequence

from . import crypto
from .crypto import ZERO_DIGEST, Digest, KeyPair, Tag
from .encoding import Reader, Writer, canonical_encode, u32
from .errors import EncodingError

COMMITS_FILE = "commits.jsonl"
KERNEL_FILE = "kernel.bin"
APP_FILE = "app.bin"
ROOTFS_DIR = "rootfs"

FileEntry = tuple[str, bytes]


def _check_paths(files: Sequence[FileEntry]) -> None:
    prev: Optional[bytes] = None
    for path, _ in files:
        p = PurePosixPath(path)
        if not path or p.is_absolute() or ".." in p.parts or str(p) != path:
            raise ValueError(f"path must be relative and normalized: {path!r}")
        key = path.encode("utf-8")
        if prev is not None:
            if key == prev:
                raise ValueError(f"duplicate path {path!r}")
            if key < prev:
                raise ValueError(f"paths not sorted by byte value at {path!r}")
        prev = key


def sort_files(files: Iterable[FileEntry]) -> tuple[FileEntry, ...]:
    return tuple(sorted(((p, bytes(c)) for p, c in files), key=lambda fc: fc[0].encode("utf-8")))


@dataclass(frozen=True)
class EnclaveImage:
    name: str
    files: tuple[FileEntry, ...] = ()
    kernel_blob: bytes = b""
    app_blob: bytes = b""

    def validate(self) -> None:
        _check_paths(self.files)


@dataclass(frozen=True)
class PcrSet:
    pcr0: Digest
    pcr1: Digest
    pcr2: Digest

    def write_canonical(self, w: Writer) -> None:
        w.bytes(self.pcr0).bytes(self.pcr1).bytes(self.pcr2)

    @classmethod
    def read_canonical(cls, r: Reader) -> "PcrSet":
        return cls(*(Digest(r.fixed(32)) for _ in range(3)))

    def to_json(self) -> dict:
        return {"pcr0": self.pcr0.hex(), "pcr1": self.pcr1.hex(), "pcr2": self.pcr2.hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "PcrSet":
        return cls(Digest.fromhex(obj["pcr0"]), Digest.fromhex(obj["pcr1"]), Digest.fromhex(obj["pcr2"]))


def measure_image(image: EnclaveImage) -> PcrSet:
    image.validate()
    w = Writer()
    w.list(image.files, lambda w, fc: w.str(fc[0]).bytes(fc[1]))
    w.bytes(image.kernel_blob).bytes(image.app_blob)
    return PcrSet(
        pcr0=crypto.hash_tagged(Tag.SNAPSHOT, [w.getvalue()]),
        pcr1=crypto.hash_tagged(Tag.SNAPSHOT, [image.kernel_blob]),
        pcr2=crypto.hash_tagged(Tag.SNAPSHOT, [image.app_blob]),
    )


def _commit_payload(parent: bytes, message: str, tree_hash: bytes) -> bytes:
    return Writer().bytes(parent).str(message).bytes(tree_hash).getvalue()


@dataclass(frozen=True)
class CommitRecord:
    parent: Digest
    message: str
    tree_hash: Digest
    author_key: Optional[bytes] = None
    author_sig: Optional[bytes] = None

    def signing_payload(self) -> bytes:
        return _commit_payload(self.parent, self.message, self.tree_hash)

    @property
    def signed(self) -> bool:
        return self.author_sig is not None or self.author_key is not None

    def signature_valid(self) -> bool:
        """True for unsigned commits; otherwise whether the signature verifies."""
        if not self.signed:
            return True
        if self.author_key is None or self.author_sig is None:
            return False
        try:
            return crypto.verify(self.author_key, self.signing_payload(), self.author_sig)
        except ValueError:
            return False

    def commit_id(self) -> Digest:
        return crypto.hash(canonical_encode(self))

    def write_canonical(self, w: Writer) -> None:
        w.bytes(self.parent).str(self.message)
        w.optional(self.author_key).optional(self.author_sig)
        w.bytes(self.tree_hash)

    def to_json(self) -> dict:
        return {
            "parent": self.parent.hex(),
            "message": self.message,
            "author_key": self.author_key.hex() if self.author_key is not None else None,
            "author_sig": self.author_sig.hex() if self.author_sig is not None else None,
            "tree_hash": self.tree_hash.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CommitRecord":
        def opt(name: str) -> Optional[bytes]:
            value = obj.get(name)
            return bytes.fromhex(value) if value else None

        return cls(
            parent=Digest.fromhex(obj["parent"]),
            message=obj["message"],
            tree_hash=Digest.fromhex(obj["tree_hash"]),
            author_key=opt("author_key"),
            author_sig=opt("author_sig"),
        )


def make_commit(
    parent: Digest,
    message: str,
    tree_hash: Digest,
    author: Optional[KeyPair] = None,
) -> CommitRecord:
    if author is None:
        return CommitRecord(parent, message, tree_hash)
    sig = author.sign(_commit_payload(parent, message, tree_hash))
    return CommitRecord(parent, message, tree_hash, author.verifying_key, sig)


def _file_leaf(path: str, content: bytes) -> Digest:
    return crypto.hash_tagged(Tag.LEAF, [Writer().str(path).getvalue(), Writer().bytes(content).getvalue()])


def file_tree_hash(files: Sequence[FileEntry]) -> Digest:
    """Hash of a file tree alone, used as a commit's ``tree_hash``."""
    _check_paths(files)
    return crypto.hash_tagged(Tag.SNAPSHOT, [u32(len(files)), *(_file_leaf(p, c) for p, c in files)])


@dataclass(frozen=True)
class RepoSnapshot:
    files: tuple[FileEntry, ...]
    commits: tuple[CommitRecord, ...] = field(default=())

    def validate(self) -> None:
        _check_paths(self.files)
        if not self.commits:
            raise ValueError("snapshot has no commits")

    def file(self, path: str) -> bytes:
        for p, content in self.files:
            if p == path:
                return content
        raise KeyError(path)

    @property
    def head(self) -> CommitRecord:
        return self.commits[-1]

    def with_commit(self, message: str, author: Optional[KeyPair] = None, files=None) -> "RepoSnapshot":
        """Return a new snapshot with ``files`` (default: unchanged) and one more commit."""
        files = self.files if files is None else sort_files(files)
        parent = self.head.commit_id() if self.commits else ZERO_DIGEST
        commit = make_commit(parent, message, file_tree_hash(files), author)
        return replace(self, files=files, commits=self.commits + (commit,))


def new_snapshot(files: Iterable[FileEntry], message: str = "initial commit",
                 author: Optional[KeyPair] = None) -> RepoSnapshot:
    return RepoSnapshot(files=(), commits=()).with_commit(message, author, files=files)


def snapshot_hash(snapshot: RepoSnapshot) -> Digest:
    """CT: binds every file path and byte plus the full commit chain."""
    snapshot.validate()
    parts: list[bytes] = [u32(len(snapshot.files))]
    parts.extend(_file_leaf(p, c) for p, c in snapshot.files)
    parts.append(u32(len(snapshot.commits)))
    parts.extend(canonical_encode(c) for c in snapshot.commits)
    return crypto.hash_tagged(Tag.SNAPSHOT, parts)


def artifact_hash(artifact: bytes) -> Digest:
    return crypto.hash(artifact)


# -- filesystem loaders -------------------------------------------------------


def read_tree(root: Path, exclude: Iterable[str] = ()) -> tuple[FileEntry, ...]:
    root = Path(root)
    excluded = set(exclude)
    files: list[FileEntry] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            full = Path(dirpath, name)
            rel = full.relative_to(root).as_posix()
            if rel in excluded:
                continue
            if full.is_symlink() or not full.is_file():
                raise ValueError(f"not a regular file: {rel}")
            files.append((rel, full.read_bytes()))
    return sort_files(files)


def write_tree(root: Path, files: Iterable[FileEntry]) -> None:
    root = Path(root)
    for path, content in files:
        target = root / path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(content)


def load_commits(path: Path) -> tuple[CommitRecord, ...]:
    commits = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                commits.append(CommitRecord.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise EncodingError(f"{path}:{lineno}: bad commit record: {exc}") from exc
    return tuple(commits)


def load_snapshot(repo_dir: Path) -> RepoSnapshot:
    repo_dir = Path(repo_dir)
    files = read_tree(repo_dir, exclude=[COMMITS_FILE])
    commits_path = repo_dir / COMMITS_FILE
    commits = load_commits(commits_path) if commits_path.exists() else ()
    snapshot = RepoSnapshot(files=files, commits=commits)
    snapshot.validate()
    return snapshot


def write_snapshot(snapshot: RepoSnapshot, repo_dir: Path) -> None:
    repo_dir = Path(repo_dir)
    repo_dir.mkdir(parents=True, exist_ok=True)
    write_tree(repo_dir, snapshot.files)
    with open(repo_dir / COMMITS_FILE, "w", encoding="utf-8") as fh:
        for commit in snapshot.commits:
            fh.write(json.dumps(commit.to_json(), sort_keys=True) + "\n")


def load_image(image_dir: Path) -> EnclaveImage:
    """Image layout: ``kernel.bin``, ``app.bin`` and an optional ``rootfs/`` tree."""
    image_dir = Path(image_dir)
    if not image_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")
    kernel = image_dir / KERNEL_FILE
    app = image_dir / APP_FILE
    rootfs = image_dir / ROOTFS_DIR
    return EnclaveImage(
        name=image_dir.name,
        files=read_tree(rootfs) if rootfs.is_dir() else (),
        kernel_blob=kernel.read_bytes() if kernel.exists() else b"",
        app_blob=app.read_bytes() if app.exists() else b"",
    )


def write_image(image: EnclaveImage, image_dir: Path) -> None:
    image_dir = Path(image_dir)
    image_dir.mkdir(parents=True, exist_ok=True)
    (image_dir / KERNEL_FILE).write_bytes(image.kernel_blob)
    (image_dir / APP_FILE).write_bytes(image.app_blob)
    write_tree(image_dir / ROOTFS_DIR, image.files)
