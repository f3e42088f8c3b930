"""Regenerate the golden certificate corpus under tests/data/golden/.

Everything is pinned (key seed, issue timestamp, suite seed), so reruns are
byte-identical. Run from the repository root:

    python tests/make_golden.py
"""

from pathlib import Path

from passert import (
    DepositWithdrawalService,
    RetentionConfig,
    execute_suite,
    generate_suite,
    load_sts,
    parse_property,
    save_passert,
    sign_passert,
)
from passert.certificate import (
    Asset,
    Authority,
    EvidenceBlock,
    ModelRef,
    PAssertCore,
    Process,
    Toe,
    build_toc,
)
from passert.cli import data_path
from passert.partitions import load_partitions
from passert.signing import generate_signer, save_verifier
from passert.sts import indexes
from passert.testgen import (
    CATEGORY_FUNCTIONALITY,
    TYPE_EQUIVALENCE,
    CoverageMetrics,
    Expected,
    TestCase,
    TestEvidence,
    TestStep,
)

GOLDEN_DIR = Path(__file__).parent / "data" / "golden"
KEY_SEED = bytes(range(32))
ISSUED_AT = 1700000000
SESSION_TOKEN = "tok-cert-harness"


def issuer():
    return generate_signer("golden-ca", seed=KEY_SEED)


def _toc(service_id, description):
    from passert.service import SERVICE_OPERATIONS

    return build_toc(
        service_id,
        description,
        SERVICE_OPERATIONS,
        [Asset("cheque-scan", "digitised cheque image attached to deposits", "cheque scan")],
    )


def retention_certificate():
    model_path = data_path("retention_test.sts")
    model = load_sts(model_path)
    partitions = load_partitions(data_path("retention_partitions.txt"))
    claim = parse_property(
        "Unlinkability { measure = retention, frequency = 1s, "
        "min_retention = 5s, max_retention = 50s }"
    )
    config = RetentionConfig(freq=1, min_retention=5, max_retention=50, default_rp=10)
    suite = generate_suite(model, partitions, claim, seed=2001)
    service = DepositWithdrawalService(config, sessions={SESSION_TOKEN: "certlab"})
    evidence = execute_suite(suite, service, test_model=model)
    assert evidence.all_passed
    core = PAssertCore(
        toc=_toc("deposit-withdrawal-sim", "golden fixture: retention-certified deposit service"),
        toe=Toe(("CreditAdd",), ("cheque-scan",), "retention enforcement on stored cheque scans"),
        property=claim,
        asset_binding=("cheque-scan",),
        authority=Authority("certification-lab", "golden-ca"),
        process=Process("model-based deferred testing v1", ISSUED_AT),
    )
    ref = ModelRef.of_model_text(
        model.name, model.level, Path(model_path).read_text(), indexes(model)
    )
    return sign_passert(core, EvidenceBlock(ref, (evidence,)), issuer())


def confidentiality_certificate():
    """Card-bearing functionality evidence for an encryption claim."""
    model_path = data_path("deposit_withdrawal.sts")
    model = load_sts(model_path)
    claim = parse_property(
        'Confidentiality { measure = encryption, algo = DES, key = 112, ctx = "in transit" }'
    )
    cases = tuple(
        TestCase(
            f"fn-{n:02d}",
            CATEGORY_FUNCTIONALITY,
            TYPE_EQUIVALENCE,
            (TestStep(0, "CreditAdd", {"amount": 10 * n, "token": SESSION_TOKEN}, Expected(result="ok")),),
        )
        for n in (1, 2, 3)
    )
    evidence = TestEvidence(
        category=CATEGORY_FUNCTIONALITY,
        type=TYPE_EQUIVALENCE,
        attributes={"card": len(cases)},
        cases=cases,
        results=(),
        metrics=CoverageMetrics(0.0, 0.0),
    )
    core = PAssertCore(
        toc=_toc("deposit-withdrawal-sim", "golden fixture: transport-encryption claim"),
        toe=Toe(("CreditAdd", "DebitAdd"), ("cheque-scan",), "messaging confidentiality"),
        property=claim,
        asset_binding=("cheque-scan",),
        authority=Authority("certification-lab", "golden-ca"),
        process=Process("model-based deferred testing v1", ISSUED_AT),
    )
    ref = ModelRef.of_model_text(
        model.name, model.level, Path(model_path).read_text(), indexes(model)
    )
    return sign_passert(
        core,
        EvidenceBlock(ref, (evidence,)),
        issuer(),
        extensions={"jurisdiction": "EU", "review": "annual"},
    )


def main():
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    save_verifier(issuer().public_verifier(), GOLDEN_DIR / "golden-ca.pub")
    for name, cert in (
        ("retention.passert.json", retention_certificate()),
        ("confidentiality.passert.json", confidentiality_certificate()),
    ):
        payload = save_passert(cert, GOLDEN_DIR / name)
        print(f"wrote {name} ({len(payload)} bytes)")


if __name__ == "__main__":
    main()
