import itertools

import pytest

from abuild import harness
from abuild.enclave import verify_attestation
from abuild.harness import (
    ALL_PROTECTIONS,
    GOVERNING,
    PROTECTION_CHECKS,
    AttackKind,
    Protection,
    Result,
    Scenario,
    run_scenario,
)
from abuild.toy import toy_world

KINDS = list(AttackKind)


def test_each_kind_has_one_governing_protection():
    assert set(GOVERNING) == set(AttackKind)
    assert len(set(GOVERNING.values())) == len(AttackKind)
    # protections own disjoint check sets
    for a, b in itertools.combinations(Protection, 2):
        assert not PROTECTION_CHECKS[a] & PROTECTION_CHECKS[b]


@pytest.mark.parametrize("text,kind", [
    ("CodeManipulation", AttackKind.CODE_MANIPULATION),
    ("code", AttackKind.CODE_MANIPULATION),
    ("build-asset", AttackKind.BUILD_ASSET_MANIPULATION),
    ("infrastructure", AttackKind.INFRASTRUCTURE_MANIPULATION),
    ("repository-spoofing", AttackKind.REPOSITORY_SPOOFING),
])
def test_parse_kind(text, kind):
    assert AttackKind.parse(text) is kind


def test_parse_errors():
    with pytest.raises(ValueError):
        AttackKind.parse("quantum")
    with pytest.raises(ValueError):
        Protection.parse("TrustMe")


@pytest.mark.parametrize("kind", KINDS)
def test_governing_enabled_detects(kind):
    outcome = run_scenario(Scenario(kind, ALL_PROTECTIONS))
    assert outcome.result is Result.DETECTED and outcome.matches_prediction
    assert set(outcome.evidence) & PROTECTION_CHECKS[GOVERNING[kind]]


@pytest.mark.parametrize("kind", KINDS)
def test_governing_alone_detects(kind):
    outcome = run_scenario(Scenario(kind, frozenset({GOVERNING[kind]})))
    assert outcome.result is Result.DETECTED
    assert set(outcome.evidence) <= PROTECTION_CHECKS[GOVERNING[kind]]


@pytest.mark.parametrize("kind", KINDS)
def test_governing_disabled_undetected(kind):
    outcome = run_scenario(Scenario(kind, ALL_PROTECTIONS - {GOVERNING[kind]}))
    assert outcome.result is Result.UNDETECTED and outcome.matches_prediction
    assert not set(outcome.evidence) & PROTECTION_CHECKS[GOVERNING[kind]]


@pytest.mark.parametrize("kind", KINDS)
def test_no_protections_nothing_fails(kind):
    outcome = run_scenario(Scenario(kind, frozenset()))
    assert outcome.result is Result.UNDETECTED and outcome.evidence == []


def test_expected_evidence():
    expected = {
        AttackKind.CODE_MANIPULATION: "source_binding",
        AttackKind.BUILD_ASSET_MANIPULATION: "inclusion_proof",
        AttackKind.INFRASTRUCTURE_MANIPULATION: "pcr0_allowlist",
        AttackKind.REPOSITORY_SPOOFING: "repository_reference",
    }
    for kind, check in expected.items():
        assert check in run_scenario(Scenario(kind, frozenset({GOVERNING[kind]}))).evidence


def test_scenarios_only_use_genuine_attestations():
    """Attacks work with documents a booted enclave really signed, never forged ones."""
    for kind in KINDS:
        world = toy_world()
        presented = harness._ATTACKS[kind](world)
        verify_attestation(presented.cert.attestation, world.policy.trusted_roots)


def test_outcome_json():
    obj = run_scenario(Scenario(AttackKind.CODE_MANIPULATION)).to_json()
    assert obj["kind"] == "CodeManipulation" and obj["result"] == "Detected"
    assert obj["governing"] == "CommitVerify" and obj["matches_prediction"] is True
