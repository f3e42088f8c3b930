"""Symbolic transition systems: parsing, pruning, indexes, path enumeration.

The ``.sts`` text format::

    model retention_test
    level WSCL
    initial 1
    states 1 2 3 4 5 6
    var amount : int

    1 -> 2 : ?CreditAdd(amount, token, scan, rp) [(amount, scan) != null]
    3 -> 4 : ?Test_Retention(chequeScanID, ret) {defer: frequency}
    5 -> 3 : loop

``?`` marks inputs, ``!`` outputs. ``loop`` declares an internal back-edge
whose traversals are bounded at enumeration time. ``{defer: expr}`` annotates
a deferred (clock-advancing) step; the expression is a duration literal or a
property attribute name resolved at generation time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .guards import Guard, GuardParseError, TrueGuard, parse_guard

LEVELS = ("WSDL", "WSCL", "Implementation")

VAR_KINDS = ("text", "int", "integer", "duration", "time", "blob", "bool")

INPUT, OUTPUT, INTERNAL = "?", "!", "internal"


class StsParseError(ValueError):
    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class StsError(ValueError):
    """Semantic errors on structurally valid models (e.g. pruning failures)."""


@dataclass(frozen=True)
class Transition:
    tid: str
    src: str
    dst: str
    direction: str
    operation: str | None
    params: tuple[str, ...] = ()
    guard: Guard = field(default_factory=TrueGuard)
    defer: str | None = None
    loop: bool = False

    def label(self) -> str:
        if self.direction == INTERNAL:
            return "loop" if self.loop else "skip"
        return f"{self.direction}{self.operation}({', '.join(self.params)})"


@dataclass(frozen=True)
class ModelIndexes:
    state_count: int
    transition_count: int
    max_branching: int
    guarded_fraction: float

    def to_dict(self) -> dict:
        return {
            "state_count": self.state_count,
            "transition_count": self.transition_count,
            "max_branching": self.max_branching,
            "guarded_fraction": self.guarded_fraction,
        }


@dataclass(frozen=True)
class Sts:
    name: str
    level: str
    initial: str
    states: tuple[str, ...]
    variables: Mapping[str, str]
    transitions: tuple[Transition, ...]

    def outgoing(self, state: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.src == state)

    def operations(self) -> tuple[str, ...]:
        seen: list[str] = []
        for t in self.transitions:
            if t.operation and t.operation not in seen:
                seen.append(t.operation)
        return tuple(seen)

    def input_transitions(self) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.direction == INPUT)


_TRANSITION_RE = re.compile(r"^(\S+)\s*->\s*(\S+)\s*:\s*(.*)$")
_OP_RE = re.compile(r"^([?!])\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*(.*)$")
_ANNOT_RE = re.compile(r"^(?:\[(?P<guard>.*?)\])?\s*(?:\{(?P<extra>[^}]*)\})?\s*$")


def parse_sts(text: str, name: str = "<string>") -> Sts:
    """Parse and validate a model; raises StsParseError with line/column info."""
    model_name = name
    level: str | None = None
    initial: str | None = None
    states: list[str] = []
    variables: dict[str, str] = {}
    raw_transitions: list[tuple[int, str, str, str]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "model":
            model_name = rest or model_name
        elif head == "level":
            if rest not in LEVELS:
                raise StsParseError(f"unknown level {rest!r} (one of {', '.join(LEVELS)})", lineno)
            level = rest
        elif head == "initial":
            if not rest:
                raise StsParseError("missing initial state id", lineno)
            initial = rest
        elif head == "states":
            for s in rest.split():
                if s in states:
                    raise StsParseError(f"duplicate state {s!r}", lineno)
                states.append(s)
        elif head == "var":
            m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(\w+)$", rest)
            if not m:
                raise StsParseError(f"malformed variable declaration {rest!r}", lineno)
            var, kind = m.groups()
            if kind not in VAR_KINDS:
                raise StsParseError(f"unknown variable kind {kind!r}", lineno)
            if var in variables:
                raise StsParseError(f"duplicate variable {var!r}", lineno)
            variables[var] = kind
        else:
            m = _TRANSITION_RE.match(line)
            if not m:
                raise StsParseError(f"unrecognized directive {line!r}", lineno)
            raw_transitions.append((lineno, m.group(1), m.group(2), m.group(3).strip()))

    if initial is None:
        raise StsParseError("no initial state", len(text.splitlines()) or 1)
    if level is None:
        level = "WSCL"

    transitions = [
        _parse_transition(f"t{i:02d}", lineno, src, dst, rest)
        for i, (lineno, src, dst, rest) in enumerate(raw_transitions, start=1)
    ]

    sts = Sts(model_name, level, initial, tuple(states), dict(variables), tuple(transitions))
    _validate(sts, {t.tid: lineno for t, (lineno, *_) in zip(transitions, raw_transitions)})
    return sts


def _parse_transition(tid: str, lineno: int, src: str, dst: str, rest: str) -> Transition:
    if rest == "loop" or rest.startswith("loop "):
        annot = _parse_annotations(rest[4:].strip(), lineno)
        return Transition(tid, src, dst, INTERNAL, None, (), annot[0], annot[1], loop=True)
    if rest == "skip" or rest.startswith("skip "):
        annot = _parse_annotations(rest[4:].strip(), lineno)
        return Transition(tid, src, dst, INTERNAL, None, (), annot[0], annot[1], loop=False)
    m = _OP_RE.match(rest)
    if not m:
        raise StsParseError(f"malformed transition body {rest!r}", lineno)
    direction, op, params_text, tail = m.groups()
    params = tuple(p.strip() for p in params_text.split(",") if p.strip())
    guard, defer = _parse_annotations(tail.strip(), lineno)
    return Transition(tid, src, dst, direction, op, params, guard, defer)


def _parse_annotations(tail: str, lineno: int) -> tuple[Guard, str | None]:
    m = _ANNOT_RE.match(tail)
    if not m:
        raise StsParseError(f"malformed transition annotations {tail!r}", lineno)
    guard: Guard = TrueGuard()
    if m.group("guard"):
        try:
            guard = parse_guard(m.group("guard"))
        except GuardParseError as exc:
            raise StsParseError(f"bad guard: {exc}", lineno, exc.pos + 1) from exc
    defer = None
    extra = (m.group("extra") or "").strip()
    if extra:
        dm = re.match(r"^defer\s*:\s*(\S+)$", extra)
        if not dm:
            raise StsParseError(f"unknown annotation {{{extra}}}", lineno)
        defer = dm.group(1)
    return guard, defer


def _validate(sts: Sts, line_of: Mapping[str, int]) -> None:
    if sts.initial not in sts.states:
        raise StsParseError(f"initial state {sts.initial!r} not declared", 1)
    seen: set[tuple] = set()
    for t in sts.transitions:
        lineno = line_of.get(t.tid, 1)
        for endpoint in (t.src, t.dst):
            if endpoint not in sts.states:
                raise StsParseError(f"unknown state {endpoint!r}", lineno)
        key = (t.src, t.dst, t.direction, t.operation)
        if key in seen:
            raise StsParseError(f"duplicate transition {t.label()} from {t.src} to {t.dst}", lineno)
        seen.add(key)
        kinds = dict(sts.variables)
        for p in t.params:
            if p not in kinds:
                raise StsParseError(f"undeclared parameter {p!r}", lineno)
        errors = t.guard.check_types(kinds)
        if errors:
            raise StsParseError(f"ill-typed guard: {errors[0]}", lineno)


def load_sts(path) -> Sts:
    from pathlib import Path

    p = Path(path)
    return parse_sts(p.read_text(encoding="utf-8"), name=p.stem)


def indexes(sts: Sts) -> ModelIndexes:
    """Quantitative quality indexes of a model."""
    total = len(sts.transitions)
    guarded = sum(1 for t in sts.transitions if not t.guard.trivial)
    branching = max((len(sts.outgoing(s)) for s in sts.states), default=0)
    return ModelIndexes(
        state_count=len(sts.states),
        transition_count=total,
        max_branching=branching,
        guarded_fraction=(guarded / total) if total else 0.0,
    )


def enumerate_paths(sts: Sts, loop_bound: int) -> list[tuple[Transition, ...]]:
    """All maximal paths from the initial state, deterministic order.

    Loop-tagged transitions may be traversed at most ``loop_bound`` times,
    every other transition at most ``loop_bound + 1`` times; a path ends where
    no traversal budget remains (at a sink, or with an exhausted loop edge).
    """
    if loop_bound < 0:
        raise ValueError("loop_bound must be >= 0")
    out: list[tuple[Transition, ...]] = []
    counts: dict[str, int] = {t.tid: 0 for t in sts.transitions}

    def limit(t: Transition) -> int:
        return loop_bound if t.loop else loop_bound + 1

    def walk(state: str, path: list[Transition]) -> None:
        nexts = [t for t in sts.outgoing(state) if counts[t.tid] < limit(t)]
        if not nexts:
            out.append(tuple(path))
            return
        for t in nexts:
            counts[t.tid] += 1
            path.append(t)
            walk(t.dst, path)
            path.pop()
            counts[t.tid] -= 1

    walk(sts.initial, [])
    return out


def prune_to_mios(sts: Sts, mios: Iterable[str]) -> Sts:
    """Restrict a model to its most important operations.

    Transitions of other operations become silent moves; chains of silent
    moves between retained junction states collapse into single ``skip``
    transitions, and everything unreachable afterwards is dropped.
    """
    mio_set = set(mios)
    if not mio_set:
        raise StsError("mios must be non-empty")
    removed = [t for t in sts.transitions if t.operation is not None and t.operation not in mio_set]
    if not removed:
        return sts
    retained = [t for t in sts.transitions if t.operation is not None and t.operation in mio_set]
    if not retained:
        raise StsError(f"no transition matches mios {sorted(mio_set)}")
    silent = [t for t in sts.transitions if t not in retained]

    junctions = {sts.initial}
    for t in retained:
        junctions.update((t.src, t.dst))

    # silent-closure between junctions, never crossing another junction
    skips: list[Transition] = []
    skip_seen: set[tuple[str, str]] = set()
    eps_out: dict[str, list[Transition]] = {}
    for t in silent:
        eps_out.setdefault(t.src, []).append(t)
    for start in sorted(junctions):
        frontier = [(start, False)]
        visited = {start}
        while frontier:
            state, looped = frontier.pop(0)
            for t in eps_out.get(state, ()):
                nxt = t.dst
                nxt_loop = looped or t.loop
                if nxt in junctions:
                    if nxt != start and (start, nxt) not in skip_seen:
                        skip_seen.add((start, nxt))
                        skips.append(
                            Transition(
                                f"s{len(skips) + 1:02d}",
                                start,
                                nxt,
                                INTERNAL,
                                None,
                                loop=nxt_loop,
                            )
                        )
                    continue
                if nxt not in visited:
                    visited.add(nxt)
                    frontier.append((nxt, nxt_loop))

    # keep only what the initial state still reaches
    kept = retained + skips
    reachable = {sts.initial}
    changed = True
    while changed:
        changed = False
        for t in kept:
            if t.src in reachable and t.dst not in reachable:
                reachable.add(t.dst)
                changed = True
    final = [t for t in kept if t.src in reachable]
    if not any(t.operation for t in final):
        raise StsError("pruning disconnected every retained transition from the initial state")
    order = {t.tid: i for i, t in enumerate(sts.transitions)}
    final.sort(key=lambda t: (t.operation is None, order.get(t.tid, len(order)), t.tid))
    states = tuple(s for s in sts.states if s in reachable)
    return replace(sts, states=states, transitions=tuple(final))
