import dataclasses
from pathlib import Path

import pytest

from passert.canonical import CanonicalizationError, from_canonical
from passert.certificate import (
    Asset,
    Authority,
    CertificateError,
    EvidenceBlock,
    ModelRef,
    PAssert,
    PAssertCore,
    Process,
    SignatureBlock,
    Toe,
    build_toc,
    canonicalize,
    load_passert,
    save_passert,
    sign_passert,
    validate_structure,
    verify_passert,
)
from passert.properties import PrivacyProperty, ProtectionGoal, parse_property
from passert.signing import generate_signer, load_verifier
from passert.sts import ModelIndexes

GOLDEN = Path(__file__).parent / "data" / "golden"


@pytest.fixture(scope="module")
def signer():
    return generate_signer("test-ca", seed=bytes(reversed(range(32))))


def small_core(claim=None):
    toc = build_toc(
        "deposit-withdrawal-sim",
        "unit fixture",
        [
            {"name": "CreditAdd", "params": [{"name": "amount", "semantic_type": "money amount"}]},
            {"name": "DebitAdd", "params": []},
        ],
        [Asset("cheque-scan", "scan blob", "cheque scan")],
    )
    prop = claim or parse_property(
        'Confidentiality { measure = encryption, algo = DES, key = 112, ctx = "in transit" }'
    )
    return PAssertCore(
        toc=toc,
        toe=Toe(("CreditAdd",), ("cheque-scan",), "evaluated subset"),
        property=prop,
        asset_binding=("cheque-scan",),
        authority=Authority("certification-lab", "test-ca"),
        process=Process("model-based deferred testing v1", 1700000000),
    )


def small_evidence(card=2):
    from passert.testgen import (
        CATEGORY_FUNCTIONALITY,
        TYPE_EQUIVALENCE,
        CoverageMetrics,
        Expected,
        TestCase,
        TestEvidence,
        TestStep,
    )

    cases = tuple(
        TestCase(
            f"fn-{n:02d}",
            CATEGORY_FUNCTIONALITY,
            TYPE_EQUIVALENCE,
            (TestStep(0, "CreditAdd", {"amount": n}, Expected(result="ok")),),
        )
        for n in range(1, card + 1)
    )
    evidence = TestEvidence(
        category=CATEGORY_FUNCTIONALITY,
        type=TYPE_EQUIVALENCE,
        attributes={"card": card},
        cases=cases,
        results=(),
        metrics=CoverageMetrics(0.5, 0.25),
    )
    ref = ModelRef("mini", "WSCL", "0" * 64, ModelIndexes(2, 1, 1, 1.0))
    return EvidenceBlock(ref, (evidence,))


@pytest.fixture(scope="module")
def signed_cert(signer):
    return sign_passert(small_core(), small_evidence(), signer, extensions={"note": "fixture"})


# -- canonicalization ------------------------------------------------------------


def test_canonicalize_round_trip_fixpoint(signed_cert):
    once = canonicalize(signed_cert)
    assert canonicalize(from_canonical(once)) == once


def test_canonicalize_ignores_signature_block(signed_cert):
    unsigned = PAssert(signed_cert.core, signed_cert.evidence, signed_cert.extensions)
    assert canonicalize(signed_cert) == canonicalize(unsigned)


def test_canonicalize_rejects_bad_extension_values(signed_cert):
    bad = PAssert(signed_cert.core, signed_cert.evidence, {"oops": float("nan")})
    with pytest.raises(CanonicalizationError):
        canonicalize(bad)


# -- signing ----------------------------------------------------------------------


def test_sign_then_verify(signed_cert, signer):
    assert verify_passert(signed_cert, signer.public_verifier())


def test_verify_fails_after_attribute_change(signed_cert, signer):
    weaker = PrivacyProperty(
        ProtectionGoal.CONFIDENTIALITY,
        {**dict(signed_cert.core.property.attributes), "key": 56},
    )
    tampered = PAssert(
        dataclasses.replace(signed_cert.core, property=weaker),
        signed_cert.evidence,
        signed_cert.extensions,
        signed_cert.signature,
    )
    assert not verify_passert(tampered, signer.public_verifier())


def test_verify_fails_with_wrong_key(signed_cert):
    other = generate_signer("other-ca").public_verifier()
    assert not verify_passert(other and signed_cert, other)


def test_verify_fails_on_extension_change(signed_cert, signer):
    tampered = PAssert(
        signed_cert.core, signed_cert.evidence, {"note": "edited"}, signed_cert.signature
    )
    assert not verify_passert(tampered, signer.public_verifier())


def test_unsigned_certificate_never_verifies(signed_cert, signer):
    unsigned = PAssert(signed_cert.core, signed_cert.evidence, signed_cert.extensions)
    assert not verify_passert(unsigned, signer.public_verifier())


def _leaf_paths(value, prefix=()):
    if isinstance(value, dict):
        for k, v in value.items():
            yield from _leaf_paths(v, prefix + (k,))
    elif isinstance(value, list):
        for i, v in enumerate(value):
            yield from _leaf_paths(v, prefix + (i,))
    else:
        yield prefix, value


def _mutate_at(data, path, value):
    if not path:
        return value
    head, rest = path[0], path[1:]
    if isinstance(data, dict):
        return {k: (_mutate_at(v, rest, value) if k == head else v) for k, v in data.items()}
    return [(_mutate_at(v, rest, value) if i == head else v) for i, v in enumerate(data)]


def _mutant_value(value):
    if isinstance(value, bool):
        return not value
    if isinstance(value, int):
        return value + 1
    if isinstance(value, float):
        return value + 0.5
    if isinstance(value, str):
        return value + "x"
    return "mutant"


def test_every_single_field_mutant_fails_verification(signer):
    cert = sign_passert(small_core(), small_evidence(card=12), signer)
    verifier = signer.public_verifier()
    body = cert.body_dict()
    leaves = list(_leaf_paths(body))
    assert len(leaves) >= 100, f"corpus too small: {len(leaves)} leaves"
    failures = 0
    for path, value in leaves:
        mutated = _mutate_at(body, path, _mutant_value(value))
        mutant = PAssert.from_dict({**mutated, "signature": cert.signature.to_dict()})
        if not verify_passert(mutant, verifier):
            failures += 1
    assert failures == len(leaves)


# -- structural validation -----------------------------------------------------------


def test_reference_certificate_validates(signed_cert):
    assert validate_structure(signed_cert).ok


def test_unknown_toe_operation_rejected(signed_cert):
    bad_core = dataclasses.replace(
        signed_cert.core,
        toe=Toe(("Transfer",), ("cheque-scan",), "bogus"),
    )
    report = validate_structure(PAssert(bad_core, signed_cert.evidence))
    assert not report.ok
    assert "Transfer" in str(report) and "operation_refs" in str(report)


def test_asset_binding_outside_toe_rejected(signed_cert):
    bad_core = dataclasses.replace(signed_cert.core, asset_binding=("other-asset",))
    report = validate_structure(PAssert(bad_core, signed_cert.evidence))
    assert "asset_binding" in str(report)


def test_card_mismatch_rejected(signed_cert, signer):
    evidence = small_evidence()
    group = evidence.tests[0]
    group.attributes["card"] = group.attributes["card"] + 1  # declared 3, actual 2
    report = validate_structure(PAssert(signed_cert.core, evidence))
    assert not report.ok
    assert "card" in str(report)


def test_bad_model_level_rejected(signed_cert):
    bad_ref = dataclasses.replace(signed_cert.evidence.model, level="Sketch")
    report = validate_structure(
        PAssert(signed_cert.core, EvidenceBlock(bad_ref, signed_cert.evidence.tests))
    )
    assert "level" in str(report)


def test_invalid_property_rejected(signed_cert):
    bad_core = dataclasses.replace(
        signed_cert.core,
        property=PrivacyProperty(ProtectionGoal.CONFIDENTIALITY, {"algo": "DES"}),
    )
    report = validate_structure(PAssert(bad_core, signed_cert.evidence))
    assert "measure" in str(report)


def test_empty_service_id_and_duplicate_ops_rejected(signed_cert):
    toc = signed_cert.core.toc
    dup_ops = toc.operations + (toc.operations[0],)
    bad_core = dataclasses.replace(
        signed_cert.core, toc=dataclasses.replace(toc, service_id="", operations=dup_ops)
    )
    report = validate_structure(PAssert(bad_core, signed_cert.evidence))
    text = str(report)
    assert "service_id" in text and "unique" in text


# -- persistence ------------------------------------------------------------------


def test_save_load_round_trip_is_identity(tmp_path, signed_cert):
    path = tmp_path / "c.passert.json"
    first = save_passert(signed_cert, path)
    loaded = load_passert(path)
    assert save_passert(loaded, tmp_path / "c2.passert.json") == first
    assert loaded == signed_cert


def test_load_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.passert.json"
    path.write_text("{not json")
    with pytest.raises(CertificateError):
        load_passert(path)
    path.write_text('{"core": {}}')
    with pytest.raises(CertificateError):
        load_passert(path)
    path.write_text('["list", "not", "object"]')
    with pytest.raises(CertificateError):
        load_passert(path)


# -- golden corpus ------------------------------------------------------------------


@pytest.mark.parametrize("name", ["retention.passert.json", "confidentiality.passert.json"])
def test_golden_round_trip_identity(tmp_path, name):
    source = GOLDEN / name
    cert = load_passert(source)
    assert save_passert(cert, tmp_path / name) == source.read_bytes()


@pytest.mark.parametrize("name", ["retention.passert.json", "confidentiality.passert.json"])
def test_golden_signatures_verify(name):
    verifier = load_verifier(GOLDEN / "golden-ca.pub")
    cert = load_passert(GOLDEN / name)
    assert verify_passert(cert, verifier)
    assert validate_structure(cert).ok


def test_golden_extensions_preserved():
    cert = load_passert(GOLDEN / "confidentiality.passert.json")
    assert cert.extensions == {"jurisdiction": "EU", "review": "annual"}
