"""Command-line front end: certify, verify, match, inspect, registry, keygen.

Exit codes: 0 success; 1 verification or certificate-parse failure; 2
certification failure (some test failed, no certificate written); 3 no
matching certificate; 64 unreadable or malformed input; 65 signing failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import certificate as cert_mod
from . import testgen
from .certificate import (
    Asset,
    Authority,
    EvidenceBlock,
    ModelRef,
    PAssert,
    PAssertCore,
    Process,
    Toe,
    build_toc,
    load_passert,
    save_passert,
    sign_passert,
    validate_structure,
    verify_passert,
)
from .partitions import load_partitions
from .properties import (
    DEFAULT_SCHEMAS,
    InvalidPropertyError,
    Ordering,
    PrivacyProperty,
    PropertyParseError,
    Requirement,
    canonical_form,
    compare,
    format_duration,
    matches,
    parse_property,
    parse_requirement,
    validate_property,
    validate_requirement,
)
from .registry import Registry
from .service import ServiceConfig, SubprocessService
from .signing import KeyFormatError, generate_signer, load_signer, load_verifier, save_signer, save_verifier
from .sts import indexes as model_indexes
from .sts import load_sts

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CERT_FAILED = 2
EXIT_NO_MATCH = 3
EXIT_UNREADABLE = 64
EXIT_SIGNING = 65

SCHEME = "model-based deferred testing v1"


def data_path(name: str) -> Path:
    return Path(str(resources.files("passert").joinpath("data", name)))


def _err(message: str) -> None:
    print(f"passert: {message}", file=sys.stderr)


@dataclass
class CertifyJob:
    model_path: Path
    partitions_path: Path
    claim: str
    config_path: Path
    key_path: Path
    out_path: Path | None = None
    seed: int = 0
    loop_cap: int = testgen.DEFAULT_LOOP_CAP
    endpoint: str = "inprocess"
    issued_at: int | None = None
    interior_samples: int = 1


def _parse_claim(claim: str) -> PrivacyProperty:
    if "{" in claim:
        return parse_property(claim)
    return parse_property(Path(claim).read_text(encoding="utf-8").strip())


def _build_service(endpoint: str, config: ServiceConfig):
    if endpoint == "inprocess":
        return config.build("correct"), None
    if endpoint.startswith("local:"):
        return config.build(endpoint.split(":", 1)[1]), None
    if endpoint.startswith("subprocess:"):
        client = SubprocessService(endpoint.split(":", 1)[1])
        return client, client
    raise ValueError(f"unknown endpoint {endpoint!r} (inprocess, local:<variant>, subprocess:<cmd>)")


def run_certify(job: CertifyJob) -> tuple[int, Path | None]:
    """The full certification pipeline; returns (exit code, certificate path)."""
    try:
        model_text = Path(job.model_path).read_text(encoding="utf-8")
        model = load_sts(job.model_path)
        partitions = load_partitions(job.partitions_path)
        config = ServiceConfig.load(job.config_path)
        claim = _parse_claim(job.claim)
        signer = load_signer(job.key_path)
    except (OSError, ValueError) as exc:
        _err(f"cannot read inputs: {exc}")
        return EXIT_UNREADABLE, None

    report = validate_property(claim, DEFAULT_SCHEMAS)
    if not report.ok:
        _err(f"claim property is invalid: {report}")
        return EXIT_UNREADABLE, None

    try:
        suite = testgen.generate_suite(
            model,
            partitions,
            claim,
            loop_bound=job.loop_cap,
            seed=job.seed,
            interior_samples=job.interior_samples,
        )
    except (testgen.GenerationError, ValueError) as exc:
        _err(f"suite generation failed: {exc}")
        return EXIT_UNREADABLE, None

    service, client = _build_service(job.endpoint, config)
    try:
        evidence = testgen.execute_suite(suite, service, test_model=model)
    except testgen.ExecutionError as exc:
        _err(f"suite execution failed: {exc}")
        return EXIT_CERT_FAILED, None
    finally:
        if client is not None:
            client.close()

    if not evidence.all_passed:
        _err(f"certification failed: {len(evidence.failures())} of {evidence.card} cases did not pass")
        for result in evidence.failures():
            where = ""
            if result.failure:
                step = result.failure.get("step")
                case = next(c for c in suite if c.id == result.case_id)
                label = _describe_step(case, step)
                where = f" at step {step} ({label}): {result.failure.get('reason')}"
            _err(f"  {result.case_id}: {result.verdict}{where}")
        return EXIT_CERT_FAILED, None

    evidence.attributes.update({"seed": job.seed, "loop_cap": job.loop_cap})
    toc = build_toc(
        config.service_id,
        config.description,
        _toc_operations(),
        [Asset("cheque-scan", "digitised cheque image attached to deposits", "cheque scan")],
    )
    mios = [op for op in model.operations() if op in {o["name"] for o in _toc_operations()}]
    core = PAssertCore(
        toc=toc,
        toe=Toe(
            operation_refs=tuple(mios),
            asset_refs=("cheque-scan",),
            rationale="retention enforcement on stored cheque scans",
        ),
        property=claim,
        asset_binding=("cheque-scan",),
        authority=Authority(issuer="certification-lab", key_id=signer.key_id),
        process=Process(scheme=SCHEME, issued_at=job.issued_at or int(time.time())),
    )
    model_ref = ModelRef.of_model_text(model.name, model.level, model_text, model_indexes(model))
    block = EvidenceBlock(model=model_ref, tests=(evidence,))
    try:
        cert = sign_passert(core, block, signer)
        out_path = job.out_path or Path(f"{config.service_id}{cert_mod.FILE_SUFFIX}")
        save_passert(cert, out_path)
    except (OSError, ValueError) as exc:
        _err(f"signing/writing certificate failed: {exc}")
        return EXIT_SIGNING, None
    print(
        f"certified {config.service_id}: {evidence.card} cases passed, "
        f"transition coverage {evidence.metrics.transition_coverage:.2f} -> {out_path}"
    )
    return EXIT_OK, out_path


def _describe_step(case, step_index):
    if step_index is None or step_index >= len(case.steps):
        return "unknown step"
    step = case.steps[step_index]
    stage = ""
    if step.expected.found is False and step.expected.result is not None:
        stage = "post-expiry probe, "
    elif step.expected.found is True:
        stage = "pre-expiry probe, "
    return f"{stage}{step.operation} after +{step.advance}s"


def _toc_operations():
    from .service import SERVICE_OPERATIONS

    return SERVICE_OPERATIONS


def run_verify(cert_path: str, pubkey_path: str) -> int:
    try:
        verifier = load_verifier(pubkey_path)
    except (OSError, KeyFormatError) as exc:
        _err(f"cannot read public key: {exc}")
        return EXIT_UNREADABLE
    try:
        cert = load_passert(cert_path)
    except OSError as exc:
        _err(f"cannot read certificate: {exc}")
        return EXIT_UNREADABLE
    except cert_mod.CertificateError as exc:
        _err(str(exc))
        return EXIT_INVALID
    if not verify_passert(cert, verifier):
        _err("signature verification failed")
        return EXIT_INVALID
    report = validate_structure(cert)
    if not report.ok:
        _err(f"structural validation failed: {report}")
        return EXIT_INVALID
    print(f"OK {cert.core.toc.service_id} ({canonical_form(cert.core.property)})")
    return EXIT_OK


def run_match(requirement: str, registry_dir: str, pubkey_path: str) -> int:
    try:
        text = requirement if "{" in requirement else Path(requirement).read_text(encoding="utf-8")
        req = parse_requirement(text.strip())
        verifier = load_verifier(pubkey_path)
    except (OSError, PropertyParseError, KeyFormatError) as exc:
        _err(f"cannot read requirement: {exc}")
        return EXIT_UNREADABLE
    report = validate_requirement(req, DEFAULT_SCHEMAS)
    if not report.ok:
        _err(f"requirement is invalid: {report}")
        return EXIT_UNREADABLE

    registry = Registry(registry_dir)
    candidates = []
    for service_id, path, cert in registry.entries():
        if cert is None:
            _err(f"warning: skipping unreadable certificate {path.name}")
            continue
        if not verify_passert(cert, verifier):
            _err(f"warning: skipping certificate with invalid signature {path.name}")
            continue
        try:
            if matches(req, cert.core.property, DEFAULT_SCHEMAS):
                candidates.append((cert.core.property, service_id, path))
        except InvalidPropertyError:
            _err(f"warning: skipping certificate with invalid property {path.name}")
    ranked = _rank_entries(req, candidates)
    for prop, service_id, path in ranked:
        print(f"{service_id}\t{canonical_form(prop)}\t{path}")
    return EXIT_OK if ranked else EXIT_NO_MATCH


def _rank_entries(req: Requirement, entries):
    remaining = list(entries)
    out = []
    while remaining:
        ready = [
            e
            for e in remaining
            if not any(
                other is not e and compare(e[0], other[0], DEFAULT_SCHEMAS) is Ordering.WEAKER
                for other in remaining
            )
        ]
        if not ready:
            ready = list(remaining)
        pick = min(ready, key=lambda e: (canonical_form(e[0]), e[1], str(e[2])))
        out.append(pick)
        remaining.remove(pick)
    return out


def run_inspect(cert_path: str) -> int:
    try:
        cert = load_passert(cert_path)
    except OSError as exc:
        _err(f"cannot read certificate: {exc}")
        return EXIT_UNREADABLE
    except cert_mod.CertificateError as exc:
        _err(str(exc))
        return EXIT_INVALID
    print(_inspect_text(cert, cert_path))
    return EXIT_OK


def _inspect_text(cert: PAssert, cert_path) -> str:
    core = cert.core
    attrs = dict(core.property.attributes)
    measure = attrs.pop("measure", "<unset>")
    mechanism = ", ".join(
        f"{k}={_render_attr(k, v)}" for k, v in sorted(attrs.items())
    ) or "<none>"
    lines = [
        f"P-ASSERT {cert_path}",
        f"service: {core.toc.service_id} -- {core.toc.description}",
        f"issued by {core.authority.issuer} (key {core.authority.key_id}) "
        f"at {core.process.issued_at} via {core.process.scheme!r}",
        "property:",
        f"  goal:      {core.property.goal.value}",
        f"  measure:   {measure}",
        f"  mechanism: {mechanism}",
        f"toc operations: {', '.join(o.name for o in core.toc.operations)}",
        f"toc assets: {', '.join(a.asset_id for a in core.toc.assets)}",
        f"toe: operations {', '.join(core.toe.operation_refs)}; assets {', '.join(core.toe.asset_refs)}",
        f"asset binding: {', '.join(core.asset_binding)}",
        f"model: {cert.evidence.model.name} ({cert.evidence.model.level}), "
        f"states={cert.evidence.model.indexes.state_count} "
        f"transitions={cert.evidence.model.indexes.transition_count}",
    ]
    for group in cert.evidence.tests:
        verdicts = [r.verdict for r in group.results]
        lines.append(
            f"evidence: {group.category} / {group.type}: card={group.card}, "
            f"pass={verdicts.count('pass')} fail={verdicts.count('fail')} "
            f"error={verdicts.count('error')}, "
            f"transition_coverage={group.metrics.transition_coverage:.2f}, "
            f"path_coverage={group.metrics.path_coverage:.2f}"
        )
    if cert.extensions:
        lines.append("extensions:")
        for key in sorted(cert.extensions):
            lines.append(f"  {key} = {cert.extensions[key]!r}")
    else:
        lines.append("extensions: none")
    if cert.signature:
        lines.append(f"signature: {cert.signature.algorithm} key={cert.signature.key_id}")
    else:
        lines.append("signature: none")
    return "\n".join(lines)


def _render_attr(name: str, value) -> str:
    schema = DEFAULT_SCHEMAS.get(name)
    if schema is not None and schema.value_kind == "duration" and isinstance(value, int):
        return format_duration(value)
    return str(value)


def run_keygen(key_path: str, pubkey_path: str, key_id: str) -> int:
    signer = generate_signer(key_id)
    try:
        save_signer(signer, key_path)
        save_verifier(signer.public_verifier(), pubkey_path)
    except OSError as exc:
        _err(f"cannot write key files: {exc}")
        return EXIT_UNREADABLE
    print(f"wrote {key_path} and {pubkey_path} (key id {key_id})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passert",
        description="Produce, verify, and match machine-readable privacy certificates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="generate, execute, and sign a certification run")
    p.add_argument("--model", default=str(data_path("retention_test.sts")))
    p.add_argument("--partitions", default=str(data_path("retention_partitions.txt")))
    p.add_argument("--claim", default=str(data_path("claim_retention.txt")),
                   help="property file or inline 'Goal { ... }' text")
    p.add_argument("--config", default=str(data_path("service_config.json")))
    p.add_argument("--key", required=True, help="issuer private key file")
    p.add_argument("--out", default=None, help="certificate output path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loop-cap", type=int, default=testgen.DEFAULT_LOOP_CAP)
    p.add_argument("--endpoint", default="inprocess",
                   help="inprocess | local:<variant> | subprocess:<command>")
    p.add_argument("--issued-at", type=int, default=None)

    p = sub.add_parser("verify", help="check a certificate's signature and structure")
    p.add_argument("certificate")
    p.add_argument("--pubkey", required=True)

    p = sub.add_parser("match", help="rank registry certificates against a requirement")
    p.add_argument("requirement", help="requirement file or inline 'Goal { ... }' text")
    p.add_argument("--registry", required=True)
    p.add_argument("--pubkey", required=True)

    p = sub.add_parser("inspect", help="human-readable certificate summary")
    p.add_argument("certificate")

    p = sub.add_parser("registry-add", help="copy a certificate into a registry")
    p.add_argument("certificate")
    p.add_argument("--registry", required=True)

    p = sub.add_parser("registry-list", help="list registry contents")
    p.add_argument("--registry", required=True)

    p = sub.add_parser("keygen", help="generate an issuer keypair")
    p.add_argument("--key", required=True)
    p.add_argument("--pubkey", required=True)
    p.add_argument("--key-id", default="passert-issuer")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "certify":
        job = CertifyJob(
            model_path=Path(args.model),
            partitions_path=Path(args.partitions),
            claim=args.claim,
            config_path=Path(args.config),
            key_path=Path(args.key),
            out_path=Path(args.out) if args.out else None,
            seed=args.seed,
            loop_cap=args.loop_cap,
            endpoint=args.endpoint,
            issued_at=args.issued_at,
        )
        code, _ = run_certify(job)
        return code
    if args.command == "verify":
        return run_verify(args.certificate, args.pubkey)
    if args.command == "match":
        return run_match(args.requirement, args.registry, args.pubkey)
    if args.command == "inspect":
        return run_inspect(args.certificate)
    if args.command == "registry-add":
        try:
            dest = Registry(args.registry).add(args.certificate)
        except OSError as exc:
            _err(f"cannot read certificate: {exc}")
            return EXIT_UNREADABLE
        except cert_mod.CertificateError as exc:
            _err(str(exc))
            return EXIT_INVALID
        print(str(dest))
        return EXIT_OK
    if args.command == "registry-list":
        registry = Registry(args.registry)
        for service_id, path, cert in registry.entries():
            summary = canonical_form(cert.core.property) if cert else "<unreadable>"
            print(f"{service_id}\t{summary}\t{path}")
        return EXIT_OK
    if args.command == "keygen":
        return run_keygen(args.key, args.pubkey, args.key_id)
    raise AssertionError(f"unhandled command {args.command}")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
