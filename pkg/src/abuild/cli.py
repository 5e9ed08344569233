"""``abuild`` command-line entry point.

Exit codes: 0 success or accept, 1 verification reject, 2 operational error,
3 attack-harness outcome differing from its predicted result.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import crypto
from .enclave import NONCE_SIZE, VendorIdentity
from .entries import ByLogIndex, ByPcr0, ByVendorFirmware, LogEntry, RevocationNotice
from .errors import AbuildError, SandboxFailure
from .harness import AttackKind, Protection, Scenario, run_scenario
from .log_service import LogServiceConfig, Observation, RemoteLog, Witness, WitnessState, serve
from .measurement import load_image, load_snapshot, measure_image, snapshot_hash
from .pipeline import CERT_SUFFIX, BuildRequest, Certificate, run_build
from .sandbox import SubprocessSandbox
from .toy import key_json, write_toy
from .verifier import TrustPolicy, compose_verify, verify_certificate, verify_source_binding

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_ERROR = 2
EXIT_MISMATCH = 3

logger = logging.getLogger("abuild")


class _Out:
    def __init__(self, as_json: bool) -> None:
        self.as_json = as_json

    def emit(self, obj: dict, text: str, error: bool = False) -> None:
        if self.as_json:
            print(json.dumps(obj, sort_keys=True), flush=True)
        else:
            print(text, file=sys.stderr if error else sys.stdout, flush=True)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AbuildError(f"{path}: not JSON: {exc}") from exc


def _load_key(path: str) -> crypto.KeyPair:
    obj = _load_json(path)
    try:
        return crypto.keygen(bytes.fromhex(obj["signing_key"]))
    except (KeyError, ValueError) as exc:
        raise AbuildError(f"{path}: not a key file: {exc}") from exc


def _log_address(args) -> str:
    address = args.log or os.environ.get("ABUILD_LOG")
    if not address:
        raise AbuildError("no log address: pass --log host:port or set ABUILD_LOG")
    return address


def cmd_keygen(args, out: _Out) -> int:
    key = crypto.keygen(bytes.fromhex(args.seed) if args.seed else None)
    if args.vendor:
        obj = VendorIdentity(args.vendor, key, args.firmware).to_json()
    else:
        obj = key_json(key)
    if args.out:
        Path(args.out).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
        os.chmod(args.out, 0o600)
    public = {k: v for k, v in obj.items() if k != "signing_key"}
    out.emit(public, key.verifying_key.hex())
    return EXIT_OK


def cmd_measure(args, out: _Out) -> int:
    pcrs = measure_image(load_image(Path(args.image_dir)))
    out.emit(pcrs.to_json(), "\n".join(f"{k} {v}" for k, v in pcrs.to_json().items()))
    return EXIT_OK


def cmd_snapshot_hash(args, out: _Out) -> int:
    ct = snapshot_hash(load_snapshot(Path(args.repo_dir)))
    out.emit({"commit_hash": ct.hex()}, ct.hex())
    return EXIT_OK


def cmd_serve_log(args, out: _Out) -> int:
    config = LogServiceConfig(args.listen, Path(args.storage), _load_key(args.key))
    server = serve(config)
    sth = server.log.get_sth()
    out.emit({"listening": server.address, "size": sth.size, "root": sth.root.hex()},
             f"listening on {server.address} (size {sth.size}, root {sth.root.hex()})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_build(args, out: _Out) -> int:
    snapshot = load_snapshot(Path(args.repo_dir))
    image = load_image(Path(args.image))
    vendor = VendorIdentity.from_json(_load_json(args.vendor_key))
    nonce = bytes.fromhex(args.nonce) if args.nonce else None
    if nonce is not None and len(nonce) != NONCE_SIZE:
        raise AbuildError(f"--nonce must be {NONCE_SIZE} bytes of hex")
    request = BuildRequest.create(snapshot, vendor, image, nonce)
    log = RemoteLog(_log_address(args))
    result = run_build(request, log, SubprocessSandbox(timeout=args.timeout))
    cert_path = result.write(Path(args.out))
    doc = result.certificate.attestation
    out.emit(
        {
            "artifact": str(args.out),
            "certificate": str(cert_path),
            "commit_hash": doc.commit_hash.hex(),
            "artifact_hash": doc.artifact_hash.hex(),
            "log_index": result.certificate.log_index,
            "transcript": result.sandbox.to_json(),
        },
        f"wrote {args.out} and {cert_path}\n"
        f"CT {doc.commit_hash.hex()}\nA  {doc.artifact_hash.hex()}\nlog index {result.certificate.log_index}",
    )
    return EXIT_OK


def _verdict_text(verdict) -> str:
    if verdict.accepted:
        return "ACCEPT"
    return "REJECT\n" + "\n".join(f"  {c}: {d}" for c, d in verdict.failures)


def cmd_verify(args, out: _Out) -> int:
    artifact = Path(args.artifact).read_bytes()
    cert = Certificate.load(Path(args.cert or args.artifact + CERT_SUFFIX))
    policy = TrustPolicy.load(Path(args.policy))
    verdict = verify_certificate(cert, artifact, policy, RemoteLog(_log_address(args)))
    if args.snapshot and not verify_source_binding(cert, load_snapshot(Path(args.snapshot))):
        verdict.fail("source_binding", "snapshot hash differs from the attested commit hash")
    out.emit(verdict.to_json(), _verdict_text(verdict))
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def cmd_compose_verify(args, out: _Out) -> int:
    artifact = Path(args.artifact).read_bytes()
    certs = [Certificate.load(Path(p)) for p in args.certs]
    policy = TrustPolicy.load(Path(args.policy))
    if args.k is not None:
        policy = TrustPolicy.from_json({**policy.to_json(), "anytrust_k": args.k})
    verdict = compose_verify(certs, artifact, policy, RemoteLog(_log_address(args)))
    out.emit(verdict.to_json(), _verdict_text(verdict))
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def _parse_protections(text: str) -> frozenset[Protection]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if len(items) == 1 and items[0].lower() in ("none", "-"):
        return frozenset()
    if len(items) == 1 and items[0].lower() == "all":
        return frozenset(Protection)
    return frozenset(Protection.parse(t) for t in items)


def cmd_attack(args, out: _Out) -> int:
    try:
        scenario = Scenario(AttackKind.parse(args.kind), _parse_protections(args.protections))
    except ValueError as exc:
        raise AbuildError(str(exc)) from exc
    outcome = run_scenario(scenario)
    obj = outcome.to_json()
    lines = [f"{obj['kind']} with {', '.join(obj['protections']) or 'no protections'}",
             f"result {obj['result']} (predicted {obj['predicted']}, governing {obj['governing']})"]
    lines += [f"  {check}: {detail}" for check, detail in outcome.details]
    out.emit(obj, "\n".join(lines))
    return EXIT_OK if outcome.matches_prediction else EXIT_MISMATCH


def cmd_witness(args, out: _Out) -> int:
    key = _load_key(args.key)
    log = RemoteLog(_log_address(args))
    state_path = Path(args.state) if args.state else None
    if state_path and state_path.exists():
        state = WitnessState.from_json(_load_json(str(state_path)))
    else:
        log_key = bytes.fromhex(args.log_key) if args.log_key else log.get_sth().log_key
        state = WitnessState(log_key)
    witness = Witness(key, state.log_key, state)
    result = witness.poll(log)
    if state_path:
        state_path.write_text(json.dumps(witness.state.to_json(), indent=2) + "\n", encoding="utf-8")
    last = witness.state.last_sth
    out.emit({"observation": result.value, "size": last.size if last else 0},
             f"{result.value} (size {last.size if last else 0})")
    return EXIT_OK if result is Observation.CONSISTENT else EXIT_REJECT


def cmd_revoke(args, out: _Out) -> int:
    key = _load_key(args.key)
    if args.vendor:
        if not args.firmware:
            raise AbuildError("--vendor requires --firmware")
        scope = ByVendorFirmware(args.vendor, args.firmware)
    elif args.pcr0:
        scope = ByPcr0(crypto.Digest.fromhex(args.pcr0))
    elif args.log_index is not None:
        scope = ByLogIndex(args.log_index)
    else:
        raise AbuildError("one of --vendor/--firmware, --pcr0 or --log-index is required")
    notice = RevocationNotice.issue(key, scope, args.reason)
    index, _ = RemoteLog(_log_address(args)).append(LogEntry.revocation(notice))
    out.emit({"log_index": index}, f"revocation notice published at index {index}")
    return EXIT_OK


def cmd_init_toy(args, out: _Out) -> int:
    paths = write_toy(Path(args.dest))
    out.emit({k: str(v) for k, v in paths.items()}, "\n".join(f"{k}: {v}" for k, v in paths.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="print a single machine-readable JSON document")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="abuild", parents=[common],
                                     description="Attested builds with a transparency log.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    p = add("keygen", cmd_keygen, "generate an Ed25519 key file")
    p.add_argument("--out", help="write the key file here (JSON, hex)")
    p.add_argument("--seed", help="32-byte hex seed for a deterministic key")
    p.add_argument("--vendor", help="write a vendor identity with this name")
    p.add_argument("--firmware", default="1.0", help="firmware version for --vendor")

    p = add("measure", cmd_measure, "print PCR0-2 of an enclave image directory")
    p.add_argument("image_dir")

    p = add("snapshot-hash", cmd_snapshot_hash, "print the commit hash CT of a repository directory")
    p.add_argument("repo_dir")

    p = add("serve-log", cmd_serve_log, "run a transparency log service")
    p.add_argument("--storage", required=True, help="append-only storage file")
    p.add_argument("--key", required=True, help="log signing key file")
    p.add_argument("--listen", default="127.0.0.1:7070", help="host:port (port 0 picks a free port)")

    p = add("build", cmd_build, "run an attested build and write <artifact> plus its certificate")
    p.add_argument("repo_dir")
    p.add_argument("--out", required=True, help="artifact output path")
    p.add_argument("--image", required=True, help="enclave image directory")
    p.add_argument("--vendor-key", required=True, help="vendor identity file")
    p.add_argument("--log", help="log service host:port (default $ABUILD_LOG)")
    p.add_argument("--nonce", help="16-byte hex nonce (default random)")
    p.add_argument("--timeout", type=float, default=300.0, help="per-command timeout in seconds")

    p = add("verify", cmd_verify, "verify an artifact against its certificate")
    p.add_argument("artifact")
    p.add_argument("--cert", help="certificate (default <artifact>.cert.json)")
    p.add_argument("--policy", required=True, help="trust policy JSON")
    p.add_argument("--log", help="log service host:port (default $ABUILD_LOG)")
    p.add_argument("--snapshot", help="also check the certificate against this source directory")

    p = add("compose-verify", cmd_compose_verify, "anytrust check across certificates from several vendors")
    p.add_argument("artifact")
    p.add_argument("--certs", nargs="+", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--log", help="log service host:port (default $ABUILD_LOG)")
    p.add_argument("-k", type=int, help="override the policy's anytrust_k")

    p = add("attack", cmd_attack, "run an adversary scenario and compare with the predicted outcome")
    p.add_argument("--kind", required=True, help=", ".join(k.value for k in AttackKind))
    p.add_argument("--protections", default="all",
                   help="comma-separated subset of " + ", ".join(p.value for p in Protection) + ", 'all' or 'none'")

    p = add("witness", cmd_witness, "observe the log once and cosign a consistent tree head")
    p.add_argument("--key", required=True, help="witness signing key file")
    p.add_argument("--state", help="witness state file (created if missing)")
    p.add_argument("--log", help="log service host:port (default $ABUILD_LOG)")
    p.add_argument("--log-key", help="expected log verifying key (hex) on first contact")

    p = add("revoke", cmd_revoke, "publish a signed revocation notice")
    p.add_argument("--key", required=True, help="issuer signing key file")
    p.add_argument("--vendor")
    p.add_argument("--firmware")
    p.add_argument("--pcr0")
    p.add_argument("--log-index", type=int)
    p.add_argument("--reason", required=True)
    p.add_argument("--log", help="log service host:port (default $ABUILD_LOG)")

    p = add("init-toy", cmd_init_toy, "write the bundled toy project, image, keys and policy")
    p.add_argument("dest")
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    as_json = getattr(args, "json", False)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    out = _Out(as_json)
    try:
        return args.func(args, out)
    except SandboxFailure as exc:
        transcript = exc.transcript.to_json() if exc.transcript else []
        out.emit({"error": "SandboxFailure", "msg": str(exc), "transcript": transcript}, f"error: {exc}", error=True)
        return EXIT_ERROR
    except (AbuildError, OSError, ValueError) as exc:
        out.emit({"error": type(exc).__name__, "msg": str(exc)}, f"error: {exc}", error=True)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
