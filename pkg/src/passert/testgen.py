"""Suite generation and deferred execution against the service under test.

Functionality cases follow each complete model path with all parameters drawn
from valid partitions; the deferment loop unrolls into pre-expiry probes (one
per sweep period, elided in the middle when the retention period is huge, but
always keeping the final pre-expiry instant) followed by one probe at the
first sweep boundary past the deadline. Robustness cases flip exactly one
parameter into an invalid partition; boundary cases pin both edges of the
deadline domain. One extra functionality case steers the deadline onto a
prime virtual timestamp so that a service sweeping on any coarser period than
the claimed one misses it and fails certification.

Generation is pure and deterministic in (model, partitions, property,
loop_bound, seed); execution owns one virtual timeline for the whole suite
and requires a freshly started service.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .canonical import canonical_bytes
from .guards import And, Compare, Exists, Guard, NowCompare
from .partitions import PartitionSpec, ResolvedSpec
from .properties import PrivacyProperty, parse_duration
from .sts import INPUT, INTERNAL, OUTPUT, Sts, Transition, enumerate_paths
from .service import scan_identifier

DEFAULT_LOOP_CAP = 10_000

# When the ideal unroll (one probe per sweep period until expiry) exceeds the
# loop cap, the schedule is elided to this many probes: a freq-spaced head
# plus the last instant before the deadline. Middle probes carry no extra
# fault-detection power and would bloat the evidence.
DEFAULT_ELIDED_PROBES = 128

CATEGORY_FUNCTIONALITY = "Functionality"
CATEGORY_ROBUSTNESS = "Robustness"
CATEGORY_PENETRATION = "Penetration"
CATEGORIES = (CATEGORY_FUNCTIONALITY, CATEGORY_ROBUSTNESS, CATEGORY_PENETRATION)

TYPE_EQUIVALENCE = "Input Partitioning.Equivalence Partitioning"
TYPE_BOUNDARY = "Input Partitioning.Boundary Value Analysis"
TYPES = (TYPE_EQUIVALENCE, TYPE_BOUNDARY)


class GenerationError(ValueError):
    """The model/partitions/property combination cannot produce a suite."""


class ExecutionError(RuntimeError):
    """The suite cannot be executed against the given service."""


@dataclass(frozen=True)
class Expected:
    """Closed predicate vocabulary: result equality and store found/not-found."""

    result: object = None  # str | bool | None
    found: bool | None = None

    def check(self, response: Mapping) -> tuple[bool, str]:
        if self.result is not None and response.get("result") != self.result:
            return False, f"expected result={self.result!r}, got {response.get('result')!r}"
        if self.found is not None and response.get("found") != self.found:
            state = "found" if response.get("found") else "not found"
            want = "found" if self.found else "not found"
            return False, f"expected stored item {want}, but it was {state}"
        return True, ""

    def to_dict(self) -> dict:
        out: dict = {}
        if self.result is not None:
            out["result"] = self.result
        if self.found is not None:
            out["found"] = self.found
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "Expected":
        return cls(result=data.get("result"), found=data.get("found"))


@dataclass(frozen=True)
class TestStep:
    __test__ = False  # domain type, not a pytest class

    advance: int
    operation: str
    args: Mapping[str, object]
    expected: Expected

    def to_dict(self) -> dict:
        return {
            "advance": self.advance,
            "operation": self.operation,
            "args": dict(self.args),
            "expected": self.expected.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TestStep":
        return cls(
            advance=data["advance"],
            operation=data["operation"],
            args=dict(data["args"]),
            expected=Expected.from_dict(data.get("expected", {})),
        )


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # domain type, not a pytest class

    id: str
    category: str
    type: str
    steps: tuple[TestStep, ...]
    provenance: tuple[str, ...] = ()
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a test case needs at least one step")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")

    @property
    def total_advance(self) -> int:
        return sum(s.advance for s in self.steps)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "category": self.category,
            "type": self.type,
            "steps": [s.to_dict() for s in self.steps],
            "provenance": list(self.provenance),
        }
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TestCase":
        return cls(
            id=data["id"],
            category=data["category"],
            type=data["type"],
            steps=tuple(TestStep.from_dict(s) for s in data["steps"]),
            provenance=tuple(data.get("provenance", ())),
            meta=dict(data.get("meta", {})),
        )


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    verdict: str  # pass | fail | error
    transcript: tuple[Mapping, ...]
    failure: Mapping | None = None

    def to_dict(self) -> dict:
        out: dict = {
            "case_id": self.case_id,
            "verdict": self.verdict,
            "transcript": [dict(t) for t in self.transcript],
        }
        if self.failure is not None:
            out["failure"] = dict(self.failure)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "CaseResult":
        return cls(
            case_id=data["case_id"],
            verdict=data["verdict"],
            transcript=tuple(data.get("transcript", ())),
            failure=data.get("failure"),
        )


@dataclass(frozen=True)
class CoverageMetrics:
    transition_coverage: float
    path_coverage: float

    def to_dict(self) -> dict:
        return {
            "transition_coverage": self.transition_coverage,
            "path_coverage": self.path_coverage,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CoverageMetrics":
        return cls(data["transition_coverage"], data["path_coverage"])


@dataclass
class TestEvidence:
    __test__ = False  # domain type, not a pytest class

    category: str
    type: str
    attributes: dict
    cases: tuple[TestCase, ...]
    results: tuple[CaseResult, ...]
    metrics: CoverageMetrics

    @property
    def card(self) -> int:
        return self.attributes.get("card", 0)

    @property
    def all_passed(self) -> bool:
        return all(r.verdict == "pass" for r in self.results) and len(self.results) == len(
            self.cases
        )

    def failures(self) -> list[CaseResult]:
        return [r for r in self.results if r.verdict != "pass"]

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "type": self.type,
            "attributes": dict(self.attributes),
            "cases": [c.to_dict() for c in self.cases],
            "results": [r.to_dict() for r in self.results],
            "metrics": self.metrics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TestEvidence":
        return cls(
            category=data["category"],
            type=data["type"],
            attributes=dict(data["attributes"]),
            cases=tuple(TestCase.from_dict(c) for c in data["cases"]),
            results=tuple(CaseResult.from_dict(r) for r in data.get("results", ())),
            metrics=CoverageMetrics.from_dict(data["metrics"]),
        )


def suite_to_bytes(cases: Sequence[TestCase]) -> bytes:
    """Canonical dump of a generated suite, for golden tests and determinism checks."""
    return canonical_bytes([c.to_dict() for c in cases])


# -- generation --------------------------------------------------------------


def _boundary_at_or_after(t: int, freq: int) -> int:
    return ((t + freq - 1) // freq) * freq


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _flatten_and(guard: Guard) -> list[Guard]:
    if isinstance(guard, And):
        out: list[Guard] = []
        for p in guard.parts:
            out.extend(_flatten_and(p))
        return out
    return [guard]


@dataclass
class _OutputShape:
    expected: Expected
    timing: str | None  # "after_deadline" | "before_deadline" | None
    deadline_var: str | None


def _analyze_output(t_out: Transition | None, resolved: ResolvedSpec, valid: bool) -> _OutputShape:
    probe = resolved.probe
    result: object = None
    found: bool | None = None
    timing: str | None = None
    deadline_var: str | None = None
    if t_out is not None:
        for atom in _flatten_and(t_out.guard):
            if isinstance(atom, Compare) and atom.op == "=" and atom.var == "result":
                result = atom.value
            elif isinstance(atom, Exists):
                found = atom.positive
            elif isinstance(atom, NowCompare):
                deadline_var = atom.var
                if atom.op in (">=", ">"):
                    timing = "after_deadline"
                elif atom.op in ("<", "<="):
                    timing = "before_deadline"
        if probe is not None and t_out.operation == probe.operation:
            result = probe.expect_result
    if result is None and valid:
        result = resolved.expect_valid
    return _OutputShape(Expected(result=result, found=found), timing, deadline_var)


def _probe_schedule(
    t_submit: int, ret: int, freq: int, budget: int, elide_to: int = DEFAULT_ELIDED_PROBES
) -> list[int]:
    """Pre-expiry probe instants.

    One probe per sweep period until the deadline when that fits the budget;
    otherwise a freq-spaced head elided down to ``elide_to`` probes. Either
    way the final probe lands on the last instant before the deadline, which
    is what catches premature deletion.
    """
    if budget < 1:
        return []
    tail = ret - 1
    if tail <= t_submit:
        return []
    span = ret - t_submit
    grid_count = max((span - 1) // freq, 0)
    grid_ends_at_tail = grid_count >= 1 and t_submit + grid_count * freq == tail
    ideal_len = grid_count + (0 if grid_ends_at_tail else 1)
    if ideal_len > budget:
        keep = max(min(budget, elide_to), 1)
        head = [t_submit + i * freq for i in range(1, keep)]
        return [p for p in head if p < tail] + [tail]
    points = [t_submit + i * freq for i in range(1, grid_count + 1)]
    if not grid_ends_at_tail:
        points.append(tail)
    return points


class _SuiteBuilder:
    def __init__(
        self,
        model: Sts,
        resolved: ResolvedSpec,
        prop: PrivacyProperty,
        loop_bound: int,
        rng: random.Random,
    ):
        self.model = model
        self.resolved = resolved
        self.prop = prop
        self.loop_bound = loop_bound
        self.rng = rng
        self.cursor = 0  # one virtual timeline across the whole suite
        self.cases: list[TestCase] = []
        self.counters: dict[str, int] = {}

    # helpers ------------------------------------------------------------

    def next_id(self, prefix: str) -> str:
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        return f"{prefix}-{self.counters[prefix]:02d}"

    def resolve_defer(self, expr: str | None) -> int:
        if expr is None:
            return 0
        try:
            return parse_duration(expr)
        except Exception:
            pass
        value = self.prop.attributes.get(expr)
        if not isinstance(value, int):
            raise GenerationError(
                f"deferment {expr!r} is neither a duration nor a property attribute"
            )
        return value

    @property
    def freq(self) -> int:
        freq = self.prop.attributes.get("frequency")
        if not isinstance(freq, int) or freq <= 0:
            raise GenerationError("property must carry a positive 'frequency' attribute")
        return freq

    def sample_args(self, params: Sequence[str], overrides: Mapping[str, object]) -> dict:
        args = {}
        for p in params:
            if p in overrides:
                args[p] = overrides[p]
            else:
                args[p] = self.resolved.valid_for(p).sample(self.rng)
        return args

    # case builders ------------------------------------------------------

    def functionality_case(self, path: Sequence[Transition], rp: int | None, meta: dict) -> None:
        probe = self.resolved.probe
        case_id = self.next_id("fn")
        steps: list[TestStep] = []
        t = self.cursor
        submit_time: int | None = None
        ret: int | None = None
        overrides: dict[str, object] = {}
        if probe is not None and rp is not None:
            overrides[probe.deadline_source] = rp
        samples: dict[str, object] = {}

        i = 0
        while i < len(path):
            tr = path[i]
            if tr.direction == INTERNAL:
                if tr.loop:
                    if submit_time is None or ret is None:
                        raise GenerationError("loop before any deadline-bearing submission")
                    last = steps[-1]
                    points = _probe_schedule(submit_time, ret, self.freq, self.loop_bound)
                    emitted_at = t
                    for point in points:
                        if point <= emitted_at:
                            continue
                        steps.append(
                            TestStep(point - t, last.operation, last.args, last.expected)
                        )
                        t = point
                i += 1
                continue
            if tr.direction != INPUT:
                raise GenerationError(f"unexpected bare output transition {tr.label()}")
            t_out = None
            if i + 1 < len(path) and path[i + 1].direction == OUTPUT:
                t_out = path[i + 1]
            shape = _analyze_output(t_out, self.resolved, valid=True)
            for p in tr.params:
                if probe is not None and p == probe.key_arg:
                    continue
                if probe is not None and p == probe.deadline_arg:
                    continue
                if p not in samples:
                    samples[p] = (
                        overrides[p] if p in overrides else self.resolved.valid_for(p).sample(self.rng)
                    )
            args = {p: samples[p] for p in tr.params if p in samples}
            if probe is not None and probe.key_arg in tr.params:
                args[probe.key_arg] = scan_identifier(str(samples[probe.key_source]))
            if probe is not None and probe.deadline_arg in tr.params:
                if ret is None:
                    raise GenerationError("probe scheduled before the stored submission")
                args[probe.deadline_arg] = ret

            advance = self.resolve_defer(tr.defer)
            if shape.timing == "after_deadline":
                if ret is None:
                    raise GenerationError("now()-guard before any deadline is known")
                target = max(_boundary_at_or_after(ret, self.freq), t)
                advance = target - t
            elif shape.timing == "before_deadline" and ret is not None:
                if t + advance >= ret:
                    raise GenerationError(
                        f"pre-expiry probe at {t + advance} is not before deadline {ret}"
                    )
            t += advance
            steps.append(TestStep(advance, tr.operation, args, shape.expected))
            if (
                probe is not None
                and submit_time is None
                and probe.deadline_source in tr.params
            ):
                submit_time = t
                ret = submit_time + int(samples[probe.deadline_source])
            i += 2 if t_out is not None else 1

        self._emit(
            TestCase(
                case_id,
                CATEGORY_FUNCTIONALITY,
                TYPE_EQUIVALENCE,
                tuple(steps),
                provenance=tuple(tr.tid for tr in path),
                meta=meta,
            ),
            t,
        )

    def boundary_case(self, rp: int, expect: str) -> None:
        """Single exchange pinning the deadline domain (edges and midpoint)."""
        exchange = self._first_exchange_with(self._deadline_param())
        t_in, t_out = exchange
        args = self.sample_args(
            [p for p in t_in.params if p not in (self._probe_only_params())],
            {self._deadline_param(): rp},
        )
        expected = Expected(result=expect)
        case = TestCase(
            self.next_id("bv"),
            CATEGORY_FUNCTIONALITY,
            TYPE_BOUNDARY,
            (TestStep(0, t_in.operation, args, expected),),
            provenance=(t_in.tid,) + ((t_out.tid,) if t_out else ()),
            meta={"rp": rp, "boundary": True},
        )
        self._emit(case, self.cursor)

    def robustness_case(self, param: str, partition, case_type: str) -> None:
        exchange = self._first_exchange_with(param)
        t_in, t_out = exchange
        bad_value = partition.sample(self.rng)
        args = self.sample_args(
            [p for p in t_in.params if p not in self._probe_only_params()],
            {param: bad_value},
        )
        expect = partition.expect or "err"
        steps = [TestStep(0, t_in.operation, args, Expected(result=expect))]
        provenance = [t_in.tid] + ([t_out.tid] if t_out else [])
        probe = self.resolved.probe
        t = self.cursor
        if probe is not None and param == probe.key_source:
            # rejected submissions must leave no trace in the store, any time
            probe_in = self._probe_input()
            rp_probe = self.resolved.valid_for(probe.deadline_source).sample(self.rng)
            advance = self.resolve_defer(probe_in.defer) or self.freq
            steps.append(
                TestStep(
                    advance,
                    probe_in.operation,
                    {
                        probe.key_arg: scan_identifier(str(bad_value)),
                        probe.deadline_arg: t + int(rp_probe),
                    },
                    Expected(found=False),
                )
            )
            provenance.append(probe_in.tid)
            t += advance
        case = TestCase(
            self.next_id("rb"),
            CATEGORY_ROBUSTNESS,
            case_type,
            tuple(steps),
            provenance=tuple(provenance),
            meta={"invalid_param": param, "invalid_partition": partition.name},
        )
        self._emit(case, t)

    # internals ----------------------------------------------------------

    def _emit(self, case: TestCase, end_time: int) -> None:
        assert end_time == self.cursor + case.total_advance
        self.cases.append(case)
        self.cursor = end_time

    def _deadline_param(self) -> str:
        probe = self.resolved.probe
        if probe is None:
            raise GenerationError("partition spec declares no probe/deadline")
        return probe.deadline_source

    def _probe_only_params(self) -> tuple[str, ...]:
        probe = self.resolved.probe
        if probe is None:
            return ()
        return (probe.key_arg, probe.deadline_arg)

    def _first_exchange_with(self, param: str) -> tuple[Transition, Transition | None]:
        for idx, tr in enumerate(self.model.transitions):
            if tr.direction == INPUT and param in tr.params:
                for nxt in self.model.transitions:
                    if nxt.direction == OUTPUT and nxt.src == tr.dst:
                        return tr, nxt
                return tr, None
        raise GenerationError(f"no input transition carries parameter {param!r}")

    def _probe_input(self) -> Transition:
        probe = self.resolved.probe
        assert probe is not None
        for tr in self.model.transitions:
            if tr.direction == INPUT and tr.operation == probe.operation:
                return tr
        raise GenerationError(f"model has no input transition for probe {probe.operation!r}")


def generate_suite(
    test_model: Sts,
    partitions: PartitionSpec,
    prop: PrivacyProperty,
    loop_bound: int = DEFAULT_LOOP_CAP,
    seed: int = 0,
    interior_samples: int = 1,
) -> list[TestCase]:
    """Deterministic certification suite for a test model and property claim."""
    if loop_bound < 1:
        raise GenerationError("loop_bound must be >= 1")
    rng = random.Random(seed)
    attrs = dict(prop.attributes)
    resolved = partitions.resolve(attrs)
    builder = _SuiteBuilder(test_model, resolved, prop, loop_bound, rng)

    paths = [
        p
        for p in enumerate_paths(test_model, 1)
        if p and not test_model.outgoing(p[-1].dst)
    ]
    if not paths:
        raise GenerationError("test model has no complete initial-to-sink path")

    probe = resolved.probe
    rp_points: list[int | None]
    if probe is not None:
        rp_points = list(
            resolved.valid_for(probe.deadline_source).sample_points(rng, interior_samples)
        )
    else:
        rp_points = [None]

    # (a) functionality: every complete path, deadline domain stratified
    for path in paths:
        for rp in rp_points:
            builder.functionality_case(path, rp, meta=({"rp": rp} if rp is not None else {}))

    # sweep-alignment guard: deadline steered onto a prime instant, so any
    # sweep period other than (a divisor of) the claimed one misses it
    loop_paths = [p for p in paths if any(tr.loop for tr in p)]
    if probe is not None and loop_paths:
        valid_rp = builder.resolved.valid_for(probe.deadline_source)
        base = builder.cursor + (valid_rp.lo + valid_rp.hi) // 2
        candidate = max(base, builder.cursor + valid_rp.lo)
        while not _is_prime(candidate):
            candidate += 1
        rp_prime = candidate - builder.cursor
        if rp_prime <= valid_rp.hi:
            builder.functionality_case(
                loop_paths[0], rp_prime, meta={"rp": rp_prime, "alignment_guard": True}
            )

    # (c) boundary cases at the deadline domain edges
    if probe is not None:
        valid_rp = resolved.valid_for(probe.deadline_source)
        for rp in (valid_rp.lo, (valid_rp.lo + valid_rp.hi) // 2, valid_rp.hi):
            builder.boundary_case(rp, resolved.expect_valid)

    # (b) robustness: exactly one parameter from an invalid partition per case
    for param in resolved.params():
        for partition in resolved.invalid_for(param):
            case_type = (
                TYPE_BOUNDARY if partition.spec.form in ("below", "above") else TYPE_EQUIVALENCE
            )
            builder.robustness_case(param, partition, case_type)

    return builder.cases


# -- execution ---------------------------------------------------------------


def execute_suite(
    cases: Sequence[TestCase],
    service,
    test_model: Sts | None = None,
    coverage_loop_bound: int = 1,
) -> TestEvidence:
    """Run a suite on one deterministic timeline; the service must be fresh.

    The controllable clock is driven through the service's ``advance_clock``
    surface. A case fails at its first violated expectation; invocation faults
    yield the distinct ``error`` verdict. Either way the case's remaining
    deferments still elapse, keeping later cases on schedule.
    """
    probe = service.invoke("advance_clock", {"d": 0})
    if probe.get("error") or probe.get("now") != 0:
        raise ExecutionError(f"service is not at virtual time 0: {probe}")
    now = 0
    results: list[CaseResult] = []
    for case in cases:
        planned_end = now + case.total_advance
        verdict = "pass"
        failure = None
        transcript: list[dict] = []
        for idx, step in enumerate(case.steps):
            if step.advance:
                tick = service.invoke("advance_clock", {"d": step.advance})
                if tick.get("error"):
                    verdict, failure = "error", {"step": idx, "reason": tick["error"]}
                    break
                now = tick["now"]
            response = service.invoke(step.operation, dict(step.args))
            transcript.append(
                {
                    "t": now,
                    "request": {"operation": step.operation, "args": dict(step.args)},
                    "response": response,
                }
            )
            if "error" in response:
                verdict, failure = "error", {"step": idx, "reason": response["error"]}
                break
            ok, reason = step.expected.check(response)
            if not ok:
                verdict, failure = "fail", {"step": idx, "reason": reason}
                break
        if now < planned_end:
            tick = service.invoke("advance_clock", {"d": planned_end - now})
            if tick.get("error"):
                raise ExecutionError(f"clock resync failed: {tick['error']}")
            now = planned_end
        results.append(CaseResult(case.id, verdict, tuple(transcript), failure))

    category, case_type = _summary_labels(cases)
    metrics = (
        compute_coverage(cases, test_model, coverage_loop_bound)
        if test_model is not None
        else CoverageMetrics(0.0, 0.0)
    )
    return TestEvidence(
        category=category,
        type=case_type,
        attributes={"card": len(cases)},
        cases=tuple(cases),
        results=tuple(results),
        metrics=metrics,
    )


def _summary_labels(cases: Sequence[TestCase]) -> tuple[str, str]:
    if not cases:
        return CATEGORY_FUNCTIONALITY, TYPE_EQUIVALENCE
    cat_counts = Counter(c.category for c in cases)
    category = max(CATEGORIES, key=lambda c: (cat_counts.get(c, 0), -CATEGORIES.index(c)))
    type_counts = Counter(c.type for c in cases if c.category == category)
    case_type = max(sorted(type_counts), key=lambda t: type_counts[t])
    return category, case_type


def compute_coverage(
    cases: Sequence[TestCase], test_model: Sts, loop_bound: int = 1
) -> CoverageMetrics:
    """How much of the test model the suite exercises."""
    total = len(test_model.transitions)
    exercised: set[str] = set()
    model_tids = {t.tid for t in test_model.transitions}
    for case in cases:
        exercised.update(tid for tid in case.provenance if tid in model_tids)
    transition_coverage = (len(exercised) / total) if total else 0.0

    bounded = enumerate_paths(test_model, loop_bound)
    path_keys = {tuple(t.tid for t in p) for p in bounded}
    seen_paths = {c.provenance for c in cases if c.provenance in path_keys}
    path_coverage = (len(seen_paths) / len(path_keys)) if path_keys else 0.0
    return CoverageMetrics(transition_coverage, path_coverage)
