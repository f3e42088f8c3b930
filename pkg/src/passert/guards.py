"""Guard expressions on transitions: parsing, type checking, evaluation.

Atoms: ``var CMP const``, ``var != null`` (also the ``(a, b) != null`` tuple
sugar), ``now() CMP var``, ``exists(var)`` / ``!exists(var)``; connectives
``&&``, ``||``, ``!``. The unicode spellings used in conversation diagrams
(``∧ ∨ ¬ ≠ ≤ ≥ ∃ ∄``) are accepted as aliases.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

CMP_OPS = ("<", "<=", "=", ">=", ">")

_NUMERIC_KINDS = ("int", "integer", "duration", "time")


class GuardParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (column {pos + 1})")
        self.pos = pos


class GuardEvalError(ValueError):
    """Unbound name or type mismatch during evaluation."""


class Guard:
    def eval(self, env: Mapping[str, object], now: int) -> bool:
        raise NotImplementedError

    def free_names(self) -> set[str]:
        raise NotImplementedError

    def uses_now(self) -> bool:
        return False

    def text(self) -> str:
        raise NotImplementedError

    def check_types(self, kinds: Mapping[str, str]) -> list[str]:
        return []

    @property
    def trivial(self) -> bool:
        return isinstance(self, TrueGuard)


@dataclass(frozen=True)
class TrueGuard(Guard):
    def eval(self, env, now):
        return True

    def free_names(self):
        return set()

    def text(self):
        return "true"


def _lookup(env: Mapping[str, object], name: str) -> object:
    if name not in env:
        raise GuardEvalError(f"unbound name {name!r}")
    return env[name]


def _numeric(value: object, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GuardEvalError(f"{what} is not numeric: {value!r}")
    return value


def _cmp(op: str, left: int, right: int) -> bool:
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == "=":
        return left == right
    if op == ">=":
        return left >= right
    return left > right


@dataclass(frozen=True)
class Compare(Guard):
    var: str
    op: str
    value: int | str

    def eval(self, env, now):
        bound = _lookup(env, self.var)
        if self.op == "=":
            if bound is None:
                return False
            if isinstance(self.value, str) != isinstance(bound, str):
                raise GuardEvalError(
                    f"type mismatch comparing {self.var}={bound!r} with {self.value!r}"
                )
            return bound == self.value
        return _cmp(self.op, _numeric(bound, self.var), _numeric(self.value, "constant"))

    def free_names(self):
        return {self.var}

    def text(self):
        return f"{self.var} {self.op} {self.value}"

    def check_types(self, kinds):
        errors = []
        kind = kinds.get(self.var)
        if kind is None:
            errors.append(f"unknown variable {self.var!r}")
            return errors
        if self.op != "=":
            if kind not in _NUMERIC_KINDS:
                errors.append(f"ordered comparison on non-numeric variable {self.var!r} ({kind})")
            if not isinstance(self.value, int):
                errors.append(f"ordered comparison against non-numeric constant {self.value!r}")
        elif isinstance(self.value, int) and kind not in _NUMERIC_KINDS:
            errors.append(f"numeric constant compared with {kind} variable {self.var!r}")
        return errors


@dataclass(frozen=True)
class NotNull(Guard):
    names: tuple[str, ...]

    def eval(self, env, now):
        return all(_lookup(env, n) is not None for n in self.names)

    def free_names(self):
        return set(self.names)

    def text(self):
        if len(self.names) == 1:
            return f"{self.names[0]} != null"
        return f"({', '.join(self.names)}) != null"

    def check_types(self, kinds):
        return [f"unknown variable {n!r}" for n in self.names if n not in kinds]


@dataclass(frozen=True)
class NowCompare(Guard):
    op: str
    var: str

    def eval(self, env, now):
        return _cmp(self.op, _numeric(now, "now()"), _numeric(_lookup(env, self.var), self.var))

    def free_names(self):
        return {self.var}

    def uses_now(self):
        return True

    def text(self):
        return f"now() {self.op} {self.var}"

    def check_types(self, kinds):
        kind = kinds.get(self.var)
        if kind is None:
            return [f"unknown variable {self.var!r}"]
        if kind != "time":
            return [f"now() compared with non-time variable {self.var!r} ({kind})"]
        return []


@dataclass(frozen=True)
class Exists(Guard):
    name: str
    positive: bool = True

    def eval(self, env, now):
        present = _lookup(env, self.name) is not None
        return present if self.positive else not present

    def free_names(self):
        return {self.name}

    def text(self):
        return f"exists({self.name})" if self.positive else f"!exists({self.name})"

    def check_types(self, kinds):
        return [] if self.name in kinds else [f"unknown variable {self.name!r}"]


@dataclass(frozen=True)
class And(Guard):
    parts: tuple[Guard, ...]

    def eval(self, env, now):
        return all(p.eval(env, now) for p in self.parts)

    def free_names(self):
        return set().union(*(p.free_names() for p in self.parts))

    def uses_now(self):
        return any(p.uses_now() for p in self.parts)

    def text(self):
        return " && ".join(_sub_text(p) for p in self.parts)

    def check_types(self, kinds):
        return [e for p in self.parts for e in p.check_types(kinds)]


@dataclass(frozen=True)
class Or(Guard):
    parts: tuple[Guard, ...]

    def eval(self, env, now):
        return any(p.eval(env, now) for p in self.parts)

    def free_names(self):
        return set().union(*(p.free_names() for p in self.parts))

    def uses_now(self):
        return any(p.uses_now() for p in self.parts)

    def text(self):
        return " || ".join(_sub_text(p) for p in self.parts)

    def check_types(self, kinds):
        return [e for p in self.parts for e in p.check_types(kinds)]


@dataclass(frozen=True)
class Not(Guard):
    part: Guard

    def eval(self, env, now):
        return not self.part.eval(env, now)

    def free_names(self):
        return self.part.free_names()

    def uses_now(self):
        return self.part.uses_now()

    def text(self):
        return f"!{_sub_text(self.part)}"

    def check_types(self, kinds):
        return self.part.check_types(kinds)


def _sub_text(g: Guard) -> str:
    if isinstance(g, (And, Or)):
        return f"({g.text()})"
    return g.text()


_ALIASES = {"∧": "&&", "∨": "||", "¬": "!", "≠": "!=", "≤": "<=", "≥": ">="}

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<exists>∃|∄)
      | (?P<op><=|>=|!=|==|&&|\|\||[<>=!(),])
      | (?P<duration>\d+[smhdy]\b)
      | (?P<int>-?\d+\b)
      | (?P<string>"[^"]*")
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    for alias, ascii_op in _ALIASES.items():
        text = text.replace(alias, f" {ascii_op} ")
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise GuardParseError(f"unexpected character {text[pos]!r}", pos)
        if m.group("exists"):
            tokens.append(("exists" if m.group("exists") == "∃" else "nexists", m.group(), pos))
        elif m.group("op"):
            op = "=" if m.group("op") == "==" else m.group("op")
            tokens.append(("op", op, pos))
        elif m.group("duration"):
            tokens.append(("duration", m.group().strip(), pos))
        elif m.group("int"):
            tokens.append(("int", m.group().strip(), pos))
        elif m.group("string"):
            tokens.append(("string", m.group().strip(), pos))
        else:
            tokens.append(("word", m.group().strip(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str, int]]):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> tuple[str, str, int]:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> tuple[str, str, int]:
        tok = self.take()
        if tok[0] != kind or (text is not None and tok[1] != text):
            want = text or kind
            raise GuardParseError(f"expected {want!r}, found {tok[1] or 'end of guard'!r}", tok[2])
        return tok

    def parse(self) -> Guard:
        guard = self.or_expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise GuardParseError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return guard

    def or_expr(self) -> Guard:
        parts = [self.and_expr()]
        while self.peek()[:2] == ("op", "||"):
            self.take()
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self) -> Guard:
        parts = [self.not_expr()]
        while self.peek()[:2] == ("op", "&&"):
            self.take()
            parts.append(self.not_expr())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def not_expr(self) -> Guard:
        if self.peek()[:2] == ("op", "!"):
            self.take()
            inner = self.not_expr()
            if isinstance(inner, Exists):  # normalize !exists(x) and ∄x
                return Exists(inner.name, positive=not inner.positive)
            return Not(inner)
        if self.peek()[0] == "nexists":
            self.take()
            return Exists(self._exists_operand(), positive=False)
        return self.atom()

    def _exists_operand(self) -> str:
        # both "exists(x)" and the bare "∃ x" spelling
        if self.peek()[:2] == ("op", "("):
            self.take()
            name = self.expect("word")[1]
            self.expect("op", ")")
            return name
        return self.expect("word")[1]

    def atom(self) -> Guard:
        kind, text, pos = self.peek()
        if kind == "exists":
            self.take()
            return Exists(self._exists_operand())
        if kind == "word" and text == "exists":
            self.take()
            return Exists(self._exists_operand())
        if kind == "word" and text == "now":
            self.take()
            self.expect("op", "(")
            self.expect("op", ")")
            op = self._cmp_op()
            var = self.expect("word")[1]
            return NowCompare(op, var)
        if kind == "word" and text == "true":
            self.take()
            return TrueGuard()
        if kind == "word":
            self.take()
            if self.peek()[:2] == ("op", "!="):
                self.take()
                self.expect("word", "null")
                return NotNull((text,))
            op = self._cmp_op()
            return Compare(text, op, self._constant())
        if kind == "op" and text == "(":
            saved = self.i
            tuple_guard = self._try_tuple_null()
            if tuple_guard is not None:
                return tuple_guard
            self.i = saved
            self.take()
            inner = self.or_expr()
            self.expect("op", ")")
            return inner
        raise GuardParseError(f"expected a guard atom, found {text or 'end of guard'!r}", pos)

    def _try_tuple_null(self) -> Guard | None:
        self.take()  # '('
        names = []
        while True:
            if self.peek()[0] != "word":
                return None
            names.append(self.take()[1])
            kind, text, _ = self.peek()
            if (kind, text) == ("op", ","):
                self.take()
                continue
            if (kind, text) == ("op", ")"):
                self.take()
                break
            return None
        if len(names) < 2 or self.peek()[:2] != ("op", "!="):
            return None
        self.take()
        self.expect("word", "null")
        return NotNull(tuple(names))

    def _cmp_op(self) -> str:
        kind, text, pos = self.take()
        if kind != "op" or text not in CMP_OPS:
            raise GuardParseError(f"expected a comparison operator, found {text!r}", pos)
        return text

    def _constant(self) -> int | str:
        kind, text, pos = self.take()
        if kind == "int":
            return int(text)
        if kind == "duration":
            from .properties import parse_duration

            return parse_duration(text)
        if kind == "string":
            return text[1:-1]
        if kind == "word":
            if text == "null":
                raise GuardParseError("null is only allowed in '!= null' atoms", pos)
            return text
        raise GuardParseError(f"expected a constant, found {text!r}", pos)


def parse_guard(text: str) -> Guard:
    """Parse a guard expression; raises GuardParseError with a column offset."""
    stripped = text.strip()
    if not stripped:
        return TrueGuard()
    return _Parser(_tokenize(stripped)).parse()


def eval_guard(guard: Guard, env: Mapping[str, object], now: int = 0) -> bool:
    """Evaluate a guard against bound names; missing bindings are errors, not False."""
    return guard.eval(env, now)
