"""Input partition specs: per-parameter valid/invalid classes with samplers.

Declarative text format::

    expect-valid ok

    param amount kind=integer
      valid (0, 1000000]
      invalid [-1000000, 0] expect=err

    param scan kind=blob
      valid wellformed
      invalid corrupt expect=err

    param rp kind=duration
      valid [min_retention, max_retention]
      invalid below min_retention expect=error

    probe Test_Retention
      key chequeScanID from scan
      deadline ret from rp
      expect result=true

Interval bounds are integers, durations, or property attribute names resolved
against the certified property at generation time. ``below``/``above``
partitions sample exactly one step past the named edge. The ``probe`` block
names the certification-time operation, how its storage key and deadline
arguments derive from the stored parameter, and its pass result.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Mapping

from .properties import _DURATION_RE, _INT_RE, parse_duration
from .service import SCAN_MAGIC, scan_is_wellformed

VALID, INVALID = "valid", "invalid"


class PartitionSpecError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


Bound = int | str  # literal value or attribute name


def _parse_bound(text: str, lineno: int) -> Bound:
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    if _DURATION_RE.match(text):
        return parse_duration(text)
    if re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", text):
        return text
    raise PartitionSpecError(f"malformed bound {text!r}", lineno)


def _resolve_bound(bound: Bound, attrs: Mapping[str, object]) -> int:
    if isinstance(bound, int):
        return bound
    value = attrs.get(bound)
    if not isinstance(value, int):
        raise PartitionSpecError(f"bound attribute {bound!r} not set on the property", 0)
    return value


@dataclass(frozen=True)
class Partition:
    param: str
    role: str  # valid | invalid
    form: str  # interval | below | above | wellformed | corrupt | const
    low: Bound | None = None
    high: Bound | None = None
    low_closed: bool = True
    high_closed: bool = True
    const: str | None = None
    expect: str | None = None  # expected result when exercised as the invalid input

    @property
    def name(self) -> str:
        if self.form == "interval":
            lo = "[" if self.low_closed else "("
            hi = "]" if self.high_closed else ")"
            return f"{self.param}:{self.role}{lo}{self.low},{self.high}{hi}"
        if self.form in ("below", "above"):
            return f"{self.param}:{self.form}-{self.low if self.form == 'above' else self.high}"
        return f"{self.param}:{self.form}"

    def resolve(self, attrs: Mapping[str, object]) -> "ResolvedPartition":
        if self.form == "interval":
            lo = _resolve_bound(self.low, attrs) + (0 if self.low_closed else 1)
            hi = _resolve_bound(self.high, attrs) - (0 if self.high_closed else 1)
            if lo > hi:
                raise PartitionSpecError(f"empty interval for {self.name}", 0)
            return ResolvedPartition(self, lo=lo, hi=hi)
        if self.form == "below":
            edge = _resolve_bound(self.high, attrs)
            return ResolvedPartition(self, hi=edge - 1)
        if self.form == "above":
            edge = _resolve_bound(self.low, attrs)
            return ResolvedPartition(self, lo=edge + 1)
        return ResolvedPartition(self)


@dataclass(frozen=True)
class ResolvedPartition:
    spec: Partition
    lo: int | None = None  # effective closed bounds
    hi: int | None = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def role(self) -> str:
        return self.spec.role

    @property
    def expect(self) -> str | None:
        return self.spec.expect

    def contains(self, value: object) -> bool:
        form = self.spec.form
        if form == "interval":
            return isinstance(value, int) and self.lo <= value <= self.hi
        if form == "below":
            return isinstance(value, int) and value <= self.hi
        if form == "above":
            return isinstance(value, int) and value >= self.lo
        if form == "wellformed":
            return isinstance(value, str) and scan_is_wellformed(value)
        if form == "corrupt":
            return isinstance(value, str) and not scan_is_wellformed(value)
        return value == self.spec.const

    def sample(self, rng: Random) -> object:
        form = self.spec.form
        if form == "interval":
            return rng.randint(self.lo, self.hi)
        if form == "below":
            return self.hi  # one step past the edge
        if form == "above":
            return self.lo
        if form == "wellformed":
            return SCAN_MAGIC + "".join(rng.choice("0123456789abcdef") for _ in range(32))
        if form == "corrupt":
            return "BAD:" + "".join(rng.choice("0123456789abcdef") for _ in range(32))
        return self.spec.const

    def sample_points(self, rng: Random, interior: int) -> list[int]:
        """Stratified draws over an interval: both edges, midpoint, seeded interior."""
        assert self.spec.form == "interval"
        points = [self.lo, (self.lo + self.hi) // 2, self.hi]
        for _ in range(interior):
            points.append(rng.randint(self.lo, self.hi))
        seen: list[int] = []
        for p in points:
            if p not in seen:
                seen.append(p)
        return seen


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    partitions: tuple[Partition, ...]

    def valid(self) -> tuple[Partition, ...]:
        return tuple(p for p in self.partitions if p.role == VALID)

    def invalid(self) -> tuple[Partition, ...]:
        return tuple(p for p in self.partitions if p.role == INVALID)


@dataclass(frozen=True)
class ProbeSpec:
    operation: str
    key_arg: str
    key_source: str
    deadline_arg: str
    deadline_source: str
    expect_result: object


@dataclass(frozen=True)
class PartitionSpec:
    params: Mapping[str, ParamSpec]
    probe: ProbeSpec | None
    expect_valid: str

    def resolve(self, attrs: Mapping[str, object]) -> "ResolvedSpec":
        resolved = {
            name: tuple(p.resolve(attrs) for p in spec.partitions)
            for name, spec in self.params.items()
        }
        for name, parts in resolved.items():
            _check_disjoint(name, parts)
        return ResolvedSpec(self, resolved)


@dataclass(frozen=True)
class ResolvedSpec:
    spec: PartitionSpec
    by_param: Mapping[str, tuple[ResolvedPartition, ...]]

    @property
    def probe(self) -> ProbeSpec | None:
        return self.spec.probe

    @property
    def expect_valid(self) -> str:
        return self.spec.expect_valid

    def valid_for(self, param: str) -> ResolvedPartition:
        parts = [p for p in self.by_param.get(param, ()) if p.role == VALID]
        if not parts:
            raise PartitionSpecError(f"no valid partition declared for parameter {param!r}", 0)
        return parts[0]

    def invalid_for(self, param: str) -> tuple[ResolvedPartition, ...]:
        return tuple(p for p in self.by_param.get(param, ()) if p.role == INVALID)

    def params(self) -> tuple[str, ...]:
        return tuple(self.by_param)


def _numeric_range(p: ResolvedPartition) -> tuple[float, float] | None:
    if p.spec.form == "interval":
        return (p.lo, p.hi)
    if p.spec.form == "below":
        return (float("-inf"), p.hi)
    if p.spec.form == "above":
        return (p.lo, float("inf"))
    return None


def _check_disjoint(param: str, parts: tuple[ResolvedPartition, ...]) -> None:
    ranges = [(p.name, _numeric_range(p)) for p in parts]
    numeric = [(n, r) for n, r in ranges if r is not None]
    for i, (name_a, a) in enumerate(numeric):
        for name_b, b in numeric[i + 1 :]:
            if a[0] <= b[1] and b[0] <= a[1]:
                raise PartitionSpecError(
                    f"partitions for {param!r} overlap: {name_a} and {name_b}", 0
                )
    forms = [p.spec.form for p in parts]
    if forms.count("wellformed") > 1 or forms.count("corrupt") > 1:
        raise PartitionSpecError(f"duplicate blob partition for {param!r}", 0)


_INTERVAL_RE = re.compile(r"^([\[(])\s*([^,\])]+)\s*,\s*([^\])]+)\s*([\])])\s*$")


def parse_partitions(text: str) -> PartitionSpec:
    params: dict[str, ParamSpec] = {}
    probe: ProbeSpec | None = None
    expect_valid = "ok"
    current: dict | None = None  # accumulating param block
    probe_block: dict | None = None

    def finish_param():
        nonlocal current
        if current is not None:
            params[current["name"]] = ParamSpec(
                current["name"], current["kind"], tuple(current["partitions"])
            )
            current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "expect-valid":
            expect_valid = rest
            finish_param()
            probe_block = None
        elif head == "param":
            finish_param()
            probe_block = None
            m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s+kind=(\w+)$", rest)
            if not m:
                raise PartitionSpecError(f"malformed param header {rest!r}", lineno)
            if m.group(1) in params:
                raise PartitionSpecError(f"duplicate param {m.group(1)!r}", lineno)
            current = {"name": m.group(1), "kind": m.group(2), "partitions": []}
        elif head == "probe":
            finish_param()
            if probe is not None:
                raise PartitionSpecError("duplicate probe block", lineno)
            probe_block = {"operation": rest}
        elif head in (VALID, INVALID) and current is not None:
            current["partitions"].append(_parse_partition(current["name"], head, rest, lineno))
        elif probe_block is not None and head in ("key", "deadline", "expect"):
            _parse_probe_line(probe_block, head, rest, lineno)
            if {"key_arg", "deadline_arg", "expect_result"} <= set(probe_block):
                probe = ProbeSpec(
                    operation=probe_block["operation"],
                    key_arg=probe_block["key_arg"],
                    key_source=probe_block["key_source"],
                    deadline_arg=probe_block["deadline_arg"],
                    deadline_source=probe_block["deadline_source"],
                    expect_result=probe_block["expect_result"],
                )
        else:
            raise PartitionSpecError(f"unrecognized directive {line!r}", lineno)
    finish_param()
    return PartitionSpec(params, probe, expect_valid)


def _parse_partition(param: str, role: str, rest: str, lineno: int) -> Partition:
    expect = None
    m = re.search(r"\bexpect=(\S+)\s*$", rest)
    if m:
        expect = m.group(1)
        rest = rest[: m.start()].strip()
    if role == INVALID and expect is None:
        raise PartitionSpecError("invalid partitions must declare expect=<result>", lineno)
    if rest == "wellformed" or rest == "corrupt":
        return Partition(param, role, rest, expect=expect)
    if rest.startswith("const "):
        return Partition(param, role, "const", const=rest[6:].strip(), expect=expect)
    if rest.startswith("below "):
        return Partition(param, role, "below", high=_parse_bound(rest[6:], lineno), expect=expect)
    if rest.startswith("above "):
        return Partition(param, role, "above", low=_parse_bound(rest[6:], lineno), expect=expect)
    m = _INTERVAL_RE.match(rest)
    if m:
        return Partition(
            param,
            role,
            "interval",
            low=_parse_bound(m.group(2), lineno),
            high=_parse_bound(m.group(3), lineno),
            low_closed=m.group(1) == "[",
            high_closed=m.group(4) == "]",
            expect=expect,
        )
    raise PartitionSpecError(f"malformed partition {rest!r}", lineno)


def _parse_probe_line(block: dict, head: str, rest: str, lineno: int) -> None:
    if head in ("key", "deadline"):
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s+from\s+([A-Za-z_][A-Za-z0-9_]*)$", rest)
        if not m:
            raise PartitionSpecError(f"malformed probe {head} line {rest!r}", lineno)
        block[f"{head}_arg"] = m.group(1)
        block[f"{head}_source"] = m.group(2)
    else:
        m = re.match(r"^result=(\S+)$", rest)
        if not m:
            raise PartitionSpecError(f"malformed probe expect line {rest!r}", lineno)
        value = m.group(1)
        block["expect_result"] = {"true": True, "false": False}.get(value.lower(), value)


def load_partitions(path) -> PartitionSpec:
    return parse_partitions(Path(path).read_text(encoding="utf-8"))
