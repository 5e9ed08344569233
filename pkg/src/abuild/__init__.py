"""Attested builds: a simulated TEE build pipeline, a transparency log and a verifier."""

from .crypto import Digest, KeyPair, hash, hash_tagged, keygen, sign, verify
from .enclave import AttestationDocument, VendorIdentity, attest, boot, verify_attestation
from .log_service import RemoteLog, TransparencyLog, Witness, witness_observe
from .measurement import EnclaveImage, PcrSet, RepoSnapshot, artifact_hash, measure_image, snapshot_hash
from .pipeline import BuildRequest, Certificate, run_build
from .verifier import TrustPolicy, Verdict, compose_verify, verify_certificate, verify_source_binding

__version__ = "0.1.0"
