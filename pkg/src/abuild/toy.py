"""A small deterministic project, enclave image and key set for demos and tests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import crypto
from .crypto import KeyPair
from .enclave import VendorIdentity
from .log_service import TransparencyLog, Witness
from .measurement import EnclaveImage, RepoSnapshot, measure_image, new_snapshot, sort_files, write_image, write_snapshot
from .verifier import TrustPolicy

VENDOR_NAMES = ("vendor-a", "vendor-b", "vendor-c")

TOY_BUILD_FILE = b'artifact = "out.bin"\nsteps = ["echo building toy project", "cat src/hello.txt > out.bin"]\n'
TOY_ARTIFACT = b"hello"


def seeded_key(label: str) -> KeyPair:
    return crypto.keygen(crypto.hash(b"abuild-toy:" + label.encode("utf-8")))


def toy_snapshot(developer: Optional[KeyPair] = None) -> RepoSnapshot:
    developer = developer or seeded_key("developer")
    files = sort_files([
        ("abuild.toml", TOY_BUILD_FILE),
        ("README.md", b"# toy\n\nPrints a greeting.\n"),
        ("src/hello.txt", TOY_ARTIFACT),
    ])
    snap = new_snapshot(files[:2], "initial commit", developer)
    return snap.with_commit("add greeting", developer, files=files)


def toy_image(variant: str = "") -> EnclaveImage:
    """The build image. A non-empty ``variant`` yields a modified (backdoored) image."""
    return EnclaveImage(
        name="toy-builder",
        files=sort_files([
            ("etc/os-release", b"NAME=toy-builder\nVERSION=1\n"),
            ("usr/bin/cc", b"#!/bin/sh\n# toy compiler\n"),
        ]),
        kernel_blob=b"toy-kernel 6.1",
        app_blob=b"enclave-client 1.0 + sandbox 1.0" + variant.encode("utf-8"),
    )


def toy_vendor(name: str, firmware: str = "1.0") -> VendorIdentity:
    return VendorIdentity(name, seeded_key(f"vendor:{name}"), firmware)


@dataclass
class ToyWorld:
    developer: KeyPair
    vendors: list[VendorIdentity]
    image: EnclaveImage
    snapshot: RepoSnapshot
    log: TransparencyLog
    witness: Witness
    revoker: KeyPair
    policy: TrustPolicy = field(init=False)

    def __post_init__(self) -> None:
        self.policy = make_policy(self.vendors, self.image, self.log.log_key,
                                  self.witness.verifying_key, self.revoker.verifying_key)


def make_policy(vendors, image: EnclaveImage, log_key: bytes, witness_key: Optional[bytes],
                revoker_key: Optional[bytes], anytrust_k: int = 1) -> TrustPolicy:
    return TrustPolicy(
        trusted_roots={v.vendor_name: v.verifying_key for v in vendors},
        allowed_pcr0=frozenset([measure_image(image).pcr0]),
        log_key=log_key,
        min_firmware={v.vendor_name: "1.0" for v in vendors},
        witness_confirmations_required=1 if witness_key else 0,
        anytrust_k=anytrust_k,
        witness_keys=frozenset([witness_key]) if witness_key else frozenset(),
        revocation_keys=frozenset([revoker_key]) if revoker_key else frozenset(),
    )


def toy_world() -> ToyWorld:
    """Fresh in-memory log; all keys are deterministic."""
    log_key = seeded_key("log")
    return ToyWorld(
        developer=seeded_key("developer"),
        vendors=[toy_vendor(n) for n in VENDOR_NAMES],
        image=toy_image(),
        snapshot=toy_snapshot(),
        log=TransparencyLog(log_key),
        witness=Witness(seeded_key("witness"), log_key.verifying_key),
        revoker=seeded_key("revoker"),
    )


def key_json(key: KeyPair) -> dict:
    return {"signing_key": key.seed.hex(), "verifying_key": key.verifying_key.hex()}


def write_toy(dest: Path) -> dict[str, Path]:
    """Write repo/, image/, keys/ and policy.json under ``dest``; return the paths."""
    dest = Path(dest)
    world = toy_world()
    paths = {
        "repo": dest / "repo",
        "image": dest / "image",
        "keys": dest / "keys",
        "policy": dest / "policy.json",
    }
    write_snapshot(world.snapshot, paths["repo"])
    write_image(world.image, paths["image"])
    paths["keys"].mkdir(parents=True, exist_ok=True)
    for vendor in world.vendors:
        (paths["keys"] / f"{vendor.vendor_name}.json").write_text(json.dumps(vendor.to_json(), indent=2) + "\n")
    for label, key in (("log", world.log.key), ("witness", world.witness.key),
                       ("revoker", world.revoker), ("developer", world.developer)):
        (paths["keys"] / f"{label}.json").write_text(json.dumps(key_json(key), indent=2) + "\n")
    world.policy.save(paths["policy"])
    return paths
