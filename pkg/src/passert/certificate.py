"""The P-ASSERT document model: core, evidence, extensions, detached signature.

The on-disk format (``.passert.json``) is canonical JSON; the signature covers
the canonical bytes of core + evidence + extensions jointly, so any
post-issuance change to any of the three parts invalidates it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .canonical import canonical_bytes, from_canonical
from .properties import (
    DEFAULT_SCHEMAS,
    PrivacyProperty,
    SchemaSet,
    ValidationReport,
    validate_property,
)
from .signing import Signer, Verifier
from .sts import LEVELS, ModelIndexes
from .testgen import TestEvidence

FILE_SUFFIX = ".passert.json"


class CertificateError(ValueError):
    """Malformed certificate document."""


@dataclass(frozen=True)
class ParamSig:
    name: str
    semantic_type: str


@dataclass(frozen=True)
class OperationSig:
    name: str
    params: tuple[ParamSig, ...]

    @classmethod
    def from_dict(cls, data: Mapping) -> "OperationSig":
        return cls(data["name"], tuple(ParamSig(p["name"], p["semantic_type"]) for p in data["params"]))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": [{"name": p.name, "semantic_type": p.semantic_type} for p in self.params],
        }


@dataclass(frozen=True)
class Asset:
    asset_id: str
    description: str
    data_category: str

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "description": self.description,
            "data_category": self.data_category,
        }


@dataclass(frozen=True)
class Toc:
    """Target of certification: the whole service being described."""

    service_id: str
    description: str
    operations: tuple[OperationSig, ...]
    assets: tuple[Asset, ...]

    def to_dict(self) -> dict:
        return {
            "service_id": self.service_id,
            "description": self.description,
            "operations": [o.to_dict() for o in self.operations],
            "assets": [a.to_dict() for a in self.assets],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Toc":
        return cls(
            data["service_id"],
            data.get("description", ""),
            tuple(OperationSig.from_dict(o) for o in data["operations"]),
            tuple(Asset(a["asset_id"], a["description"], a["data_category"]) for a in data["assets"]),
        )


@dataclass(frozen=True)
class Toe:
    """Target of evaluation: the evaluated subset of the TOC."""

    operation_refs: tuple[str, ...]
    asset_refs: tuple[str, ...]
    rationale: str

    def to_dict(self) -> dict:
        return {
            "operation_refs": list(self.operation_refs),
            "asset_refs": list(self.asset_refs),
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Toe":
        return cls(tuple(data["operation_refs"]), tuple(data["asset_refs"]), data.get("rationale", ""))


@dataclass(frozen=True)
class Authority:
    issuer: str
    key_id: str

    def to_dict(self) -> dict:
        return {"issuer": self.issuer, "key_id": self.key_id}


@dataclass(frozen=True)
class Process:
    scheme: str
    issued_at: int  # UTC seconds since epoch

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "issued_at": self.issued_at}


@dataclass(frozen=True)
class ModelRef:
    """Reference to the service model backing the evidence."""

    name: str
    level: str
    sha256: str
    indexes: ModelIndexes

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "level": self.level,
            "sha256": self.sha256,
            "indexes": self.indexes.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelRef":
        idx = data["indexes"]
        return cls(
            data["name"],
            data["level"],
            data["sha256"],
            ModelIndexes(
                idx["state_count"],
                idx["transition_count"],
                idx["max_branching"],
                idx["guarded_fraction"],
            ),
        )

    @classmethod
    def of_model_text(cls, name: str, level: str, text: str, indexes: ModelIndexes) -> "ModelRef":
        return cls(name, level, hashlib.sha256(text.encode("utf-8")).hexdigest(), indexes)


@dataclass(frozen=True)
class EvidenceBlock:
    model: ModelRef
    tests: tuple[TestEvidence, ...]

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "tests": [t.to_dict() for t in self.tests]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvidenceBlock":
        return cls(
            ModelRef.from_dict(data["model"]),
            tuple(TestEvidence.from_dict(t) for t in data["tests"]),
        )


@dataclass(frozen=True)
class PAssertCore:
    toc: Toc
    toe: Toe
    property: PrivacyProperty
    asset_binding: tuple[str, ...]
    authority: Authority
    process: Process

    def to_dict(self) -> dict:
        return {
            "toc": self.toc.to_dict(),
            "toe": self.toe.to_dict(),
            "property": self.property.to_dict(),
            "asset_binding": list(self.asset_binding),
            "authority": self.authority.to_dict(),
            "process": self.process.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PAssertCore":
        return cls(
            Toc.from_dict(data["toc"]),
            Toe.from_dict(data["toe"]),
            PrivacyProperty.from_dict(data["property"]),
            tuple(data["asset_binding"]),
            Authority(data["authority"]["issuer"], data["authority"]["key_id"]),
            Process(data["process"]["scheme"], data["process"]["issued_at"]),
        )


@dataclass(frozen=True)
class SignatureBlock:
    algorithm: str
    key_id: str
    signature: bytes

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "key_id": self.key_id, "signature": self.signature.hex()}


@dataclass(frozen=True)
class PAssert:
    core: PAssertCore
    evidence: EvidenceBlock
    extensions: Mapping[str, object] = field(default_factory=dict)
    signature: SignatureBlock | None = None

    def body_dict(self) -> dict:
        return {
            "core": self.core.to_dict(),
            "evidence": self.evidence.to_dict(),
            "extensions": dict(self.extensions),
        }

    def to_dict(self) -> dict:
        out = self.body_dict()
        if self.signature is not None:
            out["signature"] = self.signature.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "PAssert":
        try:
            signature = None
            if "signature" in data:
                sig = data["signature"]
                signature = SignatureBlock(sig["algorithm"], sig["key_id"], bytes.fromhex(sig["signature"]))
            return cls(
                PAssertCore.from_dict(data["core"]),
                EvidenceBlock.from_dict(data["evidence"]),
                dict(data.get("extensions", {})),
                signature,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CertificateError(f"malformed certificate: {exc}") from exc


def canonicalize(body: Mapping | PAssert) -> bytes:
    """Canonical signing bytes of a certificate body (signature excluded)."""
    if isinstance(body, PAssert):
        return canonical_bytes(body.body_dict())
    data = dict(body)
    data.pop("signature", None)
    return canonical_bytes(data)


def sign_passert(
    core: PAssertCore,
    evidence: EvidenceBlock,
    signer: Signer,
    extensions: Mapping[str, object] | None = None,
) -> PAssert:
    unsigned = PAssert(core, evidence, dict(extensions or {}))
    payload = canonicalize(unsigned)
    return PAssert(
        core,
        evidence,
        unsigned.extensions,
        SignatureBlock(signer.algorithm, signer.key_id, signer.sign(payload)),
    )


def verify_passert(cert: PAssert, verifier: Verifier) -> bool:
    """True iff the signature is present and covers the canonical body bytes."""
    if cert.signature is None:
        return False
    if cert.signature.algorithm != verifier.algorithm:
        return False
    return verifier.verify(canonicalize(cert), cert.signature.signature)


def validate_structure(cert: PAssert, schemas: SchemaSet = DEFAULT_SCHEMAS) -> ValidationReport:
    """Structural consistency of the document; an empty report means valid."""
    report = ValidationReport()
    toc = cert.core.toc
    if not toc.service_id:
        report.add("core.toc.service_id", "must be non-empty")
    op_names = [o.name for o in toc.operations]
    if len(op_names) != len(set(op_names)):
        report.add("core.toc.operations", "operation names must be unique")
    asset_ids = [a.asset_id for a in toc.assets]
    if len(asset_ids) != len(set(asset_ids)):
        report.add("core.toc.assets", "asset ids must be unique")
    for ref in cert.core.toe.operation_refs:
        if ref not in op_names:
            report.add("core.toe.operation_refs", f"unknown operation {ref!r}")
    for ref in cert.core.toe.asset_refs:
        if ref not in asset_ids:
            report.add("core.toe.asset_refs", f"unknown asset {ref!r}")
    for ref in cert.core.asset_binding:
        if ref not in cert.core.toe.asset_refs:
            report.add("core.asset_binding", f"asset {ref!r} is not part of the TOE")
    prop_report = validate_property(cert.core.property, schemas)
    for issue in prop_report.issues:
        report.add(f"core.property.{issue.location}", issue.message)
    if cert.evidence.model.level not in LEVELS:
        report.add("evidence.model.level", f"unknown level {cert.evidence.model.level!r}")
    for i, group in enumerate(cert.evidence.tests):
        declared = group.attributes.get("card")
        if declared != len(group.cases):
            report.add(
                f"evidence.tests[{i}].attributes.card",
                f"declared card={declared!r} but {len(group.cases)} cases present",
            )
        if group.results and len(group.results) != len(group.cases):
            report.add(
                f"evidence.tests[{i}].results",
                f"{len(group.results)} results for {len(group.cases)} cases",
            )
    return report


def save_passert(cert: PAssert, path: str | Path) -> bytes:
    payload = canonical_bytes(cert.to_dict())
    Path(path).write_bytes(payload)
    return payload


def load_passert(path: str | Path) -> PAssert:
    try:
        data = from_canonical(Path(path).read_bytes())
    except ValueError as exc:
        raise CertificateError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise CertificateError(f"{path}: certificate must be a JSON object")
    return PAssert.from_dict(data)


def build_toc(
    service_id: str,
    description: str,
    operations: Sequence[Mapping],
    assets: Sequence[Asset],
) -> Toc:
    ops = tuple(
        OperationSig(o["name"], tuple(ParamSig(p["name"], p["semantic_type"]) for p in o["params"]))
        for o in operations
    )
    return Toc(service_id, description, ops, tuple(assets))
