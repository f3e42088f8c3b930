"""Privacy properties: protection goals, typed attributes, and the partial order.

A property pairs a protection goal with an attribute map describing the
protection measure and its mechanism (``measure=retention, frequency=1s, ...``).
Attribute schemas declare how each attribute is typed and ordered, which is
what makes properties comparable and requirements matchable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping


class ProtectionGoal(Enum):
    TRANSPARENCY = "Transparency"
    UNLINKABILITY = "Unlinkability"
    INTERVENABILITY = "Intervenability"
    CONFIDENTIALITY = "Confidentiality"
    INTEGRITY = "Integrity"
    AVAILABILITY = "Availability"

    @classmethod
    def parse(cls, name: str) -> "ProtectionGoal":
        for goal in cls:
            if goal.value.lower() == name.strip().lower():
                return goal
        valid = ", ".join(g.value for g in cls)
        raise PropertyParseError(f"unknown protection goal {name!r}; valid goals: {valid}")


VALUE_KINDS = ("text", "integer", "duration", "enumeration")
ORDERINGS = ("higher_is_stronger", "lower_is_stronger", "exact_match", "unordered")

# Surface duration units, all normalized to integer seconds (1y = 365d).
_DURATION_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "y": 31536000}
_DURATION_RE = re.compile(r"^(\d+)([smhdy])$")
_INT_RE = re.compile(r"^-?\d+$")
_WORD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


class PropertyParseError(ValueError):
    """Raised on malformed property/requirement surface syntax."""


class InvalidPropertyError(ValueError):
    """Raised when an operation receives a property that fails validation."""

    def __init__(self, report: "ValidationReport"):
        super().__init__(f"invalid property: {report}")
        self.report = report


def parse_duration(text: str) -> int:
    """Parse ``1s``/``1d``/``1y`` style durations into integer seconds."""
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise PropertyParseError(f"malformed duration {text!r} (expected e.g. 30s, 1d, 1y)")
    return int(m.group(1)) * _DURATION_UNITS[m.group(2)]


def format_duration(seconds: int) -> str:
    """Canonical duration rendering: exact seconds."""
    return f"{seconds}s"


@dataclass(frozen=True)
class ValidationIssue:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, location: str, message: str) -> None:
        self.issues.append(ValidationIssue(location, message))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(str(i) for i in self.issues)


@dataclass(frozen=True)
class AttributeSchema:
    """Typing and ordering declaration for one property attribute."""

    attr_name: str
    value_kind: str
    ordering: str
    allowed_values: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.value_kind not in VALUE_KINDS:
            raise ValueError(f"unknown value kind {self.value_kind!r}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.value_kind == "enumeration" and not self.allowed_values:
            raise ValueError(f"enumeration schema {self.attr_name!r} needs allowed_values")

    @property
    def ordered(self) -> bool:
        return self.ordering in ("higher_is_stronger", "lower_is_stronger")


class SchemaSet:
    """Attribute schemas indexed by name. Names are unique within a set."""

    def __init__(self, schemas: Iterable[AttributeSchema]):
        self._by_name: dict[str, AttributeSchema] = {}
        for schema in schemas:
            if schema.attr_name in self._by_name:
                raise ValueError(f"duplicate schema for attribute {schema.attr_name!r}")
            self._by_name[schema.attr_name] = schema

    def get(self, name: str) -> AttributeSchema | None:
        return self._by_name.get(name)

    def __iter__(self):
        return iter(self._by_name.values())

    def __contains__(self, name: str) -> bool:
        return name in self._by_name


# Ordering directions reflect what "stronger" means for each mechanism knob:
# longer keys, tighter sweep periods, and wider supported retention ranges all
# dominate. Algorithms and measures only ever match exactly.
DEFAULT_SCHEMAS = SchemaSet(
    [
        AttributeSchema("measure", "text", "exact_match"),
        AttributeSchema("algo", "text", "exact_match"),
        AttributeSchema("key", "integer", "higher_is_stronger"),
        AttributeSchema("ctx", "text", "unordered"),
        AttributeSchema("k", "integer", "higher_is_stronger"),
        AttributeSchema("frequency", "duration", "lower_is_stronger"),
        AttributeSchema("min_retention", "duration", "lower_is_stronger"),
        AttributeSchema("max_retention", "duration", "higher_is_stronger"),
    ]
)


class Wildcard:
    """Requirement-side "any value" marker."""

    _instance: "Wildcard | None" = None

    def __new__(cls) -> "Wildcard":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "*"


WILDCARD = Wildcard()

AttrValue = int | str


@dataclass(frozen=True, eq=False)
class PrivacyProperty:
    """A protection goal plus the attribute map describing measure and mechanism."""

    goal: ProtectionGoal
    attributes: Mapping[str, AttrValue]

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", MappingProxyType(dict(self.attributes)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrivacyProperty):
            return NotImplemented
        return self.goal is other.goal and dict(self.attributes) == dict(other.attributes)

    @property
    def measure(self) -> AttrValue | None:
        return self.attributes.get("measure")

    def to_dict(self) -> dict:
        return {"goal": self.goal.value, "attributes": dict(sorted(self.attributes.items()))}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PrivacyProperty":
        return cls(ProtectionGoal.parse(data["goal"]), dict(data["attributes"]))


@dataclass(frozen=True, eq=False)
class Requirement:
    """Client-side constraints: attribute values or wildcards, per goal."""

    goal: ProtectionGoal
    constraints: Mapping[str, AttrValue | Wildcard]

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraints", MappingProxyType(dict(self.constraints)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Requirement):
            return NotImplemented
        return self.goal is other.goal and dict(self.constraints) == dict(other.constraints)


class Ordering(Enum):
    WEAKER = "weaker"
    EQUAL = "equal"
    STRONGER = "stronger"
    INCOMPARABLE = "incomparable"


def validate_property(prop: PrivacyProperty, schemas: SchemaSet = DEFAULT_SCHEMAS) -> ValidationReport:
    """Check every attribute against the schema set; an empty report means valid."""
    report = ValidationReport()
    if "measure" not in prop.attributes:
        report.add("attributes", "missing required attribute 'measure'")
    for name, value in prop.attributes.items():
        schema = schemas.get(name)
        if schema is None:
            report.add(name, "unknown attribute (no schema)")
            continue
        _check_value(name, value, schema, report)
    return report


def _check_value(name: str, value: object, schema: AttributeSchema, report: ValidationReport) -> None:
    kind = schema.value_kind
    if kind == "integer":
        if not isinstance(value, int) or isinstance(value, bool):
            report.add(name, f"expected integer, got {type(value).__name__}")
    elif kind == "duration":
        if not isinstance(value, int) or isinstance(value, bool):
            report.add(name, f"expected duration in seconds, got {type(value).__name__}")
        elif value < 0:
            report.add(name, f"negative duration ({value}s)")
    elif kind == "text":
        if not isinstance(value, str):
            report.add(name, f"expected text, got {type(value).__name__}")
    elif kind == "enumeration":
        if not isinstance(value, str) or value not in (schema.allowed_values or ()):
            allowed = ", ".join(schema.allowed_values or ())
            report.add(name, f"value {value!r} not in enumeration ({allowed})")


def validate_requirement(req: Requirement, schemas: SchemaSet = DEFAULT_SCHEMAS) -> ValidationReport:
    """Requirement constraints must name schema'd attributes and carry well-kinded values."""
    report = ValidationReport()
    for name, value in req.constraints.items():
        schema = schemas.get(name)
        if schema is None:
            report.add(name, "unknown attribute (no schema)")
            continue
        if isinstance(value, Wildcard):
            continue
        _check_value(name, value, schema, report)
    return report


def _require_valid(prop: PrivacyProperty, schemas: SchemaSet) -> None:
    report = validate_property(prop, schemas)
    if not report.ok:
        raise InvalidPropertyError(report)


def _dominates(weaker: AttrValue, stronger: AttrValue, schema: AttributeSchema) -> bool | None:
    """True if ``stronger`` dominates, False if not, None for a strict reverse/mismatch."""
    if schema.ordering == "higher_is_stronger":
        return weaker <= stronger  # type: ignore[operator]
    if schema.ordering == "lower_is_stronger":
        return weaker >= stronger  # type: ignore[operator]
    return weaker == stronger


def compare(pi: PrivacyProperty, pj: PrivacyProperty, schemas: SchemaSet = DEFAULT_SCHEMAS) -> Ordering:
    """Partial order over valid properties.

    ``pi`` is weaker than ``pj`` when both share goal and measure, pi's
    attribute set is a subset of pj's and every shared ordered attribute is
    dominated in pj (strictly somewhere, or pj carries strictly more
    attributes). Anything else that is not equality is incomparable.
    """
    _require_valid(pi, schemas)
    _require_valid(pj, schemas)
    if pi.goal is not pj.goal:
        return Ordering.INCOMPARABLE
    a, b = dict(pi.attributes), dict(pj.attributes)
    if a == b:
        return Ordering.EQUAL
    if pi.measure != pj.measure:
        return Ordering.INCOMPARABLE
    if _weaker_than(a, b, schemas):
        return Ordering.WEAKER
    if _weaker_than(b, a, schemas):
        return Ordering.STRONGER
    return Ordering.INCOMPARABLE


def _weaker_than(a: dict, b: dict, schemas: SchemaSet) -> bool:
    if not set(a) <= set(b):
        return False
    strict = len(a) < len(b)
    for name, value in a.items():
        schema = schemas.get(name)
        assert schema is not None  # both maps validated
        dominated = _dominates(value, b[name], schema)
        if not dominated:
            return False
        if schema.ordered and value != b[name]:
            strict = True
    return strict


def matches(req: Requirement, prop: PrivacyProperty, schemas: SchemaSet = DEFAULT_SCHEMAS) -> bool:
    """Does a certified property satisfy a requirement?

    Every constraint must be met by a present attribute: exact equality for
    exact_match/unordered attributes, domination along the schema direction
    otherwise. Wildcards only require presence. Attributes the requirement
    does not mention are ignored.
    """
    _require_valid(prop, schemas)
    if req.goal is not prop.goal:
        return False
    for name, constraint in req.constraints.items():
        if name not in prop.attributes:
            return False
        if isinstance(constraint, Wildcard):
            continue
        schema = schemas.get(name)
        if schema is None:
            return False
        if not _dominates(constraint, prop.attributes[name], schema):
            return False
    return True


def canonical_form(prop: PrivacyProperty, schemas: SchemaSet = DEFAULT_SCHEMAS) -> str:
    """Stable one-line rendering, used for display and deterministic tie-breaks."""
    parts = []
    for name in sorted(prop.attributes):
        value = prop.attributes[name]
        schema = schemas.get(name)
        if schema is not None and schema.value_kind == "duration" and isinstance(value, int):
            rendered = format_duration(value)
        elif isinstance(value, str) and not _WORD_RE.match(value):
            rendered = f'"{value}"'
        else:
            rendered = str(value)
        parts.append(f"{name} = {rendered}")
    return f"{prop.goal.value} {{ {', '.join(parts)} }}"


def rank_certified(
    req: Requirement,
    candidates: Iterable[PrivacyProperty],
    schemas: SchemaSet = DEFAULT_SCHEMAS,
) -> list[PrivacyProperty]:
    """Matching candidates, strongest first.

    Deterministic linear extension of the partial order: repeatedly emit, among
    candidates with no strictly stronger candidate remaining, the one with the
    lexicographically smallest canonical form.
    """
    remaining = [p for p in candidates if matches(req, p, schemas)]
    out: list[PrivacyProperty] = []
    while remaining:
        ready = [
            p
            for p in remaining
            if not any(
                q is not p and compare(p, q, schemas) is Ordering.WEAKER for q in remaining
            )
        ]
        if not ready:  # defensive; a partial order cannot cycle
            ready = list(remaining)
        pick = min(ready, key=lambda p: canonical_form(p, schemas))
        out.append(pick)
        remaining.remove(pick)
    return out


_PROPERTY_RE = re.compile(r"^\s*([A-Za-z]+)\s*\{(.*)\}\s*$", re.DOTALL)


def _parse_attr_text(body: str, allow_wildcard: bool) -> dict[str, AttrValue | Wildcard]:
    attrs: dict[str, AttrValue | Wildcard] = {}
    body = body.strip()
    if not body:
        return attrs
    for chunk in body.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise PropertyParseError(f"expected 'name = value', got {chunk!r}")
        name, _, raw = chunk.partition("=")
        name, raw = name.strip(), raw.strip()
        if not _WORD_RE.match(name):
            raise PropertyParseError(f"malformed attribute name {name!r}")
        if name in attrs:
            raise PropertyParseError(f"duplicate attribute {name!r}")
        attrs[name] = _parse_value(raw, allow_wildcard)
    return attrs


def _parse_value(raw: str, allow_wildcard: bool) -> AttrValue | Wildcard:
    if raw == "*":
        if not allow_wildcard:
            raise PropertyParseError("wildcard '*' is only allowed in requirements")
        return WILDCARD
    if not raw:
        raise PropertyParseError("empty attribute value")
    if _INT_RE.match(raw):
        return int(raw)
    if _DURATION_RE.match(raw):
        return parse_duration(raw)
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if _WORD_RE.match(raw):
        return raw
    raise PropertyParseError(f"malformed attribute value {raw!r}")


def parse_property(text: str) -> PrivacyProperty:
    """Parse ``Goal { key = value, ... }`` surface syntax."""
    m = _PROPERTY_RE.match(text)
    if not m:
        raise PropertyParseError(f"expected 'Goal {{ key = value, ... }}', got {text!r}")
    goal = ProtectionGoal.parse(m.group(1))
    attrs = _parse_attr_text(m.group(2), allow_wildcard=False)
    return PrivacyProperty(goal, attrs)  # type: ignore[arg-type]


def parse_requirement(text: str) -> Requirement:
    """Parse requirement surface syntax; ``*`` marks a wildcard constraint."""
    m = _PROPERTY_RE.match(text)
    if not m:
        raise PropertyParseError(f"expected 'Goal {{ key = value, ... }}', got {text!r}")
    goal = ProtectionGoal.parse(m.group(1))
    return Requirement(goal, _parse_attr_text(m.group(2), allow_wildcard=True))
