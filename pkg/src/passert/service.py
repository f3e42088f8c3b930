"""Simulated deposit & withdrawal service with sticky retention on cheque scans.

Time is virtual: it only moves through ``advance_clock``, which runs the
retention sweeps for every period boundary crossed. Sweeps are computed
analytically (a deadline heap), so advancing a year costs the same as
advancing a second; a brute-force per-boundary simulation is used as the test
oracle against this implementation.

The service can also run as a subprocess speaking one canonical-JSON request
per stdin line and one response per stdout line
(``python -m passert.service --config cfg.json [--variant no_sweep]``).
"""

from __future__ import annotations

import argparse
import hashlib
import heapq
import json
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .canonical import canonical_bytes
from .properties import parse_duration

FAULT_VARIANTS = ("no_sweep", "early_delete", "ignore_min", "ignore_max", "stale_flag")

SCAN_MAGIC = "SCAN:"

RESULT_OK = "ok"
RESULT_ERR = "err"
RESULT_ERROR = "error"
RESULT_FAILURE = "failure"
RESULT_AUTH = "auth_error"

# Production surface (certification-time Test_Retention excluded on purpose).
SERVICE_OPERATIONS = [
    {
        "name": "Signon",
        "params": [
            {"name": "usr", "semantic_type": "user identifier"},
            {"name": "pwd", "semantic_type": "password"},
        ],
    },
    {
        "name": "CreditAdd",
        "params": [
            {"name": "amount", "semantic_type": "money amount"},
            {"name": "token", "semantic_type": "session token"},
            {"name": "scan", "semantic_type": "cheque scan attachment"},
            {"name": "rp", "semantic_type": "retention period (seconds)"},
        ],
    },
    {
        "name": "DebitAdd",
        "params": [
            {"name": "amount", "semantic_type": "money amount"},
            {"name": "token", "semantic_type": "session token"},
        ],
    },
]

_OP_METHODS = {
    "Signon": "signon",
    "CreditAdd": "credit_add",
    "DebitAdd": "debit_add",
    "advance_clock": "advance_clock_op",
    "Test_Retention": "test_retention",
    # lowercase wire aliases
    "signon": "signon",
    "credit_add": "credit_add",
    "debit_add": "debit_add",
    "test_retention": "test_retention",
}


def scan_identifier(scan: str) -> str:
    """Deterministic storage id for a scan blob, shared with the test generator."""
    return hashlib.sha256(scan.encode("utf-8")).hexdigest()[:16]


def scan_is_wellformed(scan: str) -> bool:
    return isinstance(scan, str) and scan.startswith(SCAN_MAGIC)


class VirtualClock:
    """Integer-second simulated time; only moves forward, only when told to."""

    def __init__(self, start: int = 0):
        self._now = int(start)

    @property
    def now(self) -> int:
        return self._now

    def advance(self, d: int) -> int:
        if d < 0:
            raise ValueError("cannot move the clock backwards")
        self._now += int(d)
        return self._now


@dataclass(frozen=True)
class RetentionConfig:
    freq: int
    min_retention: int
    max_retention: int
    default_rp: int

    def __post_init__(self) -> None:
        if self.freq <= 0:
            raise ValueError("freq must be positive")
        if not (0 < self.min_retention <= self.default_rp <= self.max_retention):
            raise ValueError("need 0 < min_retention <= default_rp <= max_retention")

    @classmethod
    def from_dict(cls, data: dict) -> "RetentionConfig":
        def dur(v):
            return parse_duration(v) if isinstance(v, str) else int(v)

        return cls(
            freq=dur(data["freq"]),
            min_retention=dur(data["min_retention"]),
            max_retention=dur(data["max_retention"]),
            default_rp=dur(data.get("default_rp", data["min_retention"])),
        )


@dataclass
class StoredScan:
    scan_id: str
    digest: str
    ret: int
    flagged: bool = False
    gen: int = 0


def _boundary_at_or_after(t: int, freq: int) -> int:
    return ((t + freq - 1) // freq) * freq


@dataclass
class RetentionStore:
    """Scan entries with absolute deadlines plus a deadline heap for sweeps."""

    entries: dict[str, StoredScan] = field(default_factory=dict)
    _events: list[tuple[int, int, str, int]] = field(default_factory=list)
    _seq: int = 0

    def put(self, entry: StoredScan, due_at: int | None) -> None:
        self._seq += 1
        entry.gen = self._seq
        self.entries[entry.scan_id] = entry
        if due_at is not None:
            heapq.heappush(self._events, (due_at, self._seq, entry.scan_id, entry.gen))

    def schedule(self, due_at: int, scan_id: str, gen: int) -> None:
        self._seq += 1
        heapq.heappush(self._events, (due_at, self._seq, scan_id, gen))

    def due(self, upto: int) -> Iterable[tuple[int, str]]:
        """Pending events at or before ``upto``; stale events (re-stored ids) are dropped."""
        while self._events and self._events[0][0] <= upto:
            due_at, _, scan_id, gen = heapq.heappop(self._events)
            entry = self.entries.get(scan_id)
            if entry is not None and entry.gen == gen:
                yield due_at, scan_id

    def snapshot(self) -> dict:
        return {
            sid: {"digest": e.digest, "ret": e.ret, "flagged": e.flagged}
            for sid, e in sorted(self.entries.items())
        }


class DepositWithdrawalService:
    """The system under certification, with optional seeded defects."""

    def __init__(
        self,
        config: RetentionConfig,
        users: dict[str, str] | None = None,
        sessions: dict[str, str] | None = None,
        variant: str = "correct",
        service_id: str = "deposit-withdrawal-sim",
    ):
        if variant != "correct" and variant not in FAULT_VARIANTS:
            raise ValueError(f"unknown variant {variant!r} (one of {', '.join(FAULT_VARIANTS)})")
        self.config = config
        self.variant = variant
        self.service_id = service_id
        self.clock = VirtualClock()
        self.store = RetentionStore()
        self._users = dict(users or {})
        self._sessions = dict(sessions or {})  # token -> user
        self._balances: dict[str, int] = {u: 0 for u in self._users}
        for user in self._sessions.values():
            self._balances.setdefault(user, 0)
        self._token_seq = 0

    # -- wire dispatch ---------------------------------------------------

    def invoke(self, operation: str, args: dict) -> dict:
        method = _OP_METHODS.get(operation)
        if method is None:
            return {"error": f"unknown operation {operation!r}"}
        try:
            return getattr(self, method)(**args)
        except TypeError as exc:
            return {"error": f"bad arguments for {operation}: {exc}"}

    # -- operations ------------------------------------------------------

    def signon(self, usr=None, pwd=None) -> dict:
        if usr is None or pwd is None or self._users.get(usr) != pwd:
            return {"result": RESULT_FAILURE}
        self._token_seq += 1
        token = f"tok-{self._token_seq:04d}"
        self._sessions[token] = usr
        return {"result": RESULT_OK, "token": token}

    def credit_add(self, amount=None, token=None, scan=None, rp=None) -> dict:
        user = self._sessions.get(token)
        if user is None:
            return {"result": RESULT_AUTH}
        if not isinstance(amount, int) or isinstance(amount, bool) or amount <= 0:
            return {"result": RESULT_ERR}
        if scan is None:
            self._balances[user] = self._balances.get(user, 0) + amount
            return {"result": RESULT_OK}
        if not scan_is_wellformed(scan):
            return {"result": RESULT_ERR}
        if rp is None:
            rp = self.config.default_rp
        if rp < self.config.min_retention and self.variant != "ignore_min":
            return {"result": RESULT_ERROR}
        if rp > self.config.max_retention and self.variant != "ignore_max":
            return {"result": RESULT_ERROR}
        ret = self.clock.now + rp
        scan_id = scan_identifier(scan)
        self.store.put(
            StoredScan(scan_id, hashlib.sha256(scan.encode()).hexdigest(), ret),
            self._deletion_boundary(ret),
        )
        self._balances[user] = self._balances.get(user, 0) + amount
        return {"result": RESULT_OK, "chequeScanID": scan_id}

    def debit_add(self, amount=None, token=None) -> dict:
        user = self._sessions.get(token)
        if user is None:
            return {"result": RESULT_AUTH}
        if not isinstance(amount, int) or isinstance(amount, bool) or amount <= 0:
            return {"result": RESULT_ERR}
        if self._balances.get(user, 0) < amount:
            return {"result": RESULT_ERR}
        self._balances[user] -= amount
        return {"result": RESULT_OK}

    def advance_clock_op(self, d=None) -> dict:
        report = self.advance_clock(int(d))
        return {
            "result": RESULT_OK,
            "now": self.clock.now,
            "sweeps": [{"time": t, "deleted": ids} for t, ids in report],
        }

    def advance_clock(self, d: int) -> list[tuple[int, list[str]]]:
        """Move time forward, running one sweep per period boundary crossed.

        Returns the effective sweeps: (sweep time, ids deleted then).
        """
        if d < 0:
            raise ValueError("duration must be non-negative")
        new_now = self.clock.now + d
        deleted: dict[int, list[str]] = {}
        if self.variant != "no_sweep":
            for due_at, scan_id in self.store.due(new_now):
                entry = self.store.entries[scan_id]
                if self.variant == "stale_flag" and not entry.flagged:
                    # two-sweep reading: flag now, delete one period later
                    entry.flagged = True
                    self.store.schedule(due_at + self.config.freq, scan_id, entry.gen)
                    continue
                del self.store.entries[scan_id]
                deleted.setdefault(due_at, []).append(scan_id)
        self.clock.advance(d)
        return [(t, sorted(ids)) for t, ids in sorted(deleted.items())]

    def _deletion_boundary(self, ret: int) -> int | None:
        freq = self.config.freq
        if self.variant == "no_sweep":
            return None
        if self.variant == "early_delete":
            # defect: flags entries whose deadline is still one period away
            boundary = _boundary_at_or_after(ret - freq, freq)
        else:
            boundary = _boundary_at_or_after(ret, freq)
        # the boundary at the storage instant has already swept
        first_upcoming = (self.clock.now // freq + 1) * freq
        return max(boundary, first_upcoming)

    def test_retention(self, chequeScanID=None, ret=None) -> dict:
        """Certification-time probe of the retention mechanism.

        True when the entry is present and not expired (or expired for less
        than one sweep period), or absent and expired; false otherwise.
        """
        now = self.clock.now
        found = chequeScanID in self.store.entries
        if found:
            result = now < ret or (now - ret) < self.config.freq
        else:
            result = now >= ret
        return {"result": result, "found": found}

    # -- introspection helpers -------------------------------------------

    def balance(self, user: str) -> int:
        return self._balances.get(user, 0)

    def stored_ids(self) -> list[str]:
        return sorted(self.store.entries)

    def snapshot_to_file(self, path) -> None:
        payload = {"now": self.clock.now, "entries": self.store.snapshot()}
        Path(path).write_bytes(canonical_bytes(payload))


def make_faulty(
    variant: str,
    config: RetentionConfig,
    users: dict[str, str] | None = None,
    sessions: dict[str, str] | None = None,
    service_id: str = "deposit-withdrawal-sim",
) -> DepositWithdrawalService:
    """A service instance with one seeded defect; surface identical to the correct one."""
    if variant not in FAULT_VARIANTS:
        raise ValueError(f"unknown variant {variant!r} (one of {', '.join(FAULT_VARIANTS)})")
    return DepositWithdrawalService(config, users, sessions, variant, service_id)


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class ServiceConfig:
    service_id: str
    description: str
    retention: RetentionConfig
    users: dict[str, str]
    sessions: dict[str, str]

    @classmethod
    def load(cls, path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        users = {u["usr"]: u["pwd"] for u in data.get("users", [])}
        sessions = {s["token"]: s["user"] for s in data.get("sessions", [])}
        return cls(
            service_id=data["service_id"],
            description=data.get("description", ""),
            retention=RetentionConfig.from_dict(data["retention"]),
            users=users,
            sessions=sessions,
        )

    def build(self, variant: str = "correct") -> DepositWithdrawalService:
        return DepositWithdrawalService(
            self.retention, self.users, self.sessions, variant, self.service_id
        )


# -- line protocol -----------------------------------------------------------


def serve_lines(service: DepositWithdrawalService, stdin: IO[str], stdout: IO[str]) -> None:
    """One canonical-JSON request per line in, one response per line out."""
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            op = request["op"]
            args = request.get("args", {})
        except (ValueError, KeyError) as exc:
            response: dict = {"error": f"malformed request: {exc}"}
        else:
            response = service.invoke(op, args)
        stdout.write(canonical_bytes(response).decode("utf-8") + "\n")
        stdout.flush()


class SubprocessService:
    """Client half of the line protocol; mirrors the in-process invoke()."""

    def __init__(self, command: str | list[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )

    def invoke(self, operation: str, args: dict) -> dict:
        assert self._proc.stdin and self._proc.stdout
        request = canonical_bytes({"op": operation, "args": args}).decode("utf-8")
        self._proc.stdin.write(request + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("service subprocess closed its output")
        return json.loads(line)

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="passert-service", description="Run the simulated service on stdin/stdout."
    )
    parser.add_argument("--config", required=True, help="service config JSON")
    parser.add_argument("--variant", default="correct", help="correct or a fault variant")
    args = parser.parse_args(argv)
    config = ServiceConfig.load(args.config)
    serve_lines(config.build(args.variant), sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
