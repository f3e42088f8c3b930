import json
import random
import sys

import pytest

from passert.canonical import from_canonical
from passert.service import (
    FAULT_VARIANTS,
    DepositWithdrawalService,
    RetentionConfig,
    ServiceConfig,
    SubprocessService,
    VirtualClock,
    make_faulty,
    scan_identifier,
)
from conftest import SESSION_TOKEN, write_scaled_config

GOOD_SCAN = "SCAN:feedfacefeedfacefeedfacefeedface"
BAD_SCAN = "BAD:feedfacefeedfacefeedfacefeedface"


# -- oracles ------------------------------------------------------------------


def oracle_test_retention(found: bool, now: int, ret: int, freq: int) -> bool:
    """Truth table: present and unexpired (or expired under one period), or
    absent and expired."""
    if found:
        return now < ret or (now - ret) < freq
    return now >= ret


def oracle_sweep(entries, freq, start, advance, variant, flagged=None):
    """Step every period boundary in (start, start+advance] and flag/delete.

    ``flagged`` carries two-sweep state across successive advances.
    """
    alive = dict(entries)
    flagged = set() if flagged is None else flagged
    deletions: list[tuple[int, str]] = []
    t = (start // freq) * freq
    while True:
        t += freq
        if t > start + advance:
            break
        if variant == "no_sweep":
            continue
        for scan_id in sorted(alive):
            ret = alive[scan_id]
            if variant == "stale_flag":
                if scan_id in flagged:
                    del alive[scan_id]
                    deletions.append((t, scan_id))
                elif ret <= t:
                    flagged.add(scan_id)
            else:
                expired = ret <= t + freq if variant == "early_delete" else ret <= t
                if expired:
                    del alive[scan_id]
                    deletions.append((t, scan_id))
    return alive, deletions, flagged


def sweep_variants():
    return ("correct", "no_sweep", "early_delete", "stale_flag")


# -- clock --------------------------------------------------------------------


def test_clock_monotonic():
    clock = VirtualClock()
    assert clock.now == 0
    assert clock.advance(5) == 5
    with pytest.raises(ValueError):
        clock.advance(-1)


def test_retention_config_invariants():
    with pytest.raises(ValueError):
        RetentionConfig(freq=0, min_retention=1, max_retention=2, default_rp=1)
    with pytest.raises(ValueError):
        RetentionConfig(freq=1, min_retention=10, max_retention=5, default_rp=7)
    with pytest.raises(ValueError):
        RetentionConfig(freq=1, min_retention=10, max_retention=50, default_rp=5)


# -- sign-on / debit ------------------------------------------------------------


def test_signon_flow(service_factory):
    svc = service_factory()
    ok = svc.invoke("Signon", {"usr": "certlab", "pwd": "cert-lab-secret"})
    assert ok["result"] == "ok" and ok["token"]
    assert svc.invoke("Signon", {"usr": "certlab", "pwd": "wrong"}) == {"result": "failure"}
    assert svc.invoke("Signon", {"usr": "certlab", "pwd": None}) == {"result": "failure"}


def test_debit_semantics(service_factory):
    svc = service_factory()
    token = svc.signon("certlab", "cert-lab-secret")["token"]
    assert svc.debit_add(10, token)["result"] == "err"  # empty balance
    assert svc.credit_add(50, token)["result"] == "ok"
    assert svc.debit_add(0, token)["result"] == "err"
    assert svc.debit_add(30, token)["result"] == "ok"
    assert svc.debit_add(30, token)["result"] == "err"  # only 20 left
    assert svc.debit_add(10, "bogus")["result"] == "auth_error"
    assert svc.balance("certlab") == 20


# -- credit / retention bounds ---------------------------------------------------


def test_credit_add_boundaries(service_factory, scaled_config):
    svc = service_factory()
    lo, hi = scaled_config.min_retention, scaled_config.max_retention
    assert svc.credit_add(5, SESSION_TOKEN, GOOD_SCAN, lo)["result"] == "ok"
    assert svc.credit_add(5, SESSION_TOKEN, "SCAN:other", hi)["result"] == "ok"
    assert svc.credit_add(5, SESSION_TOKEN, "SCAN:low", lo - 1)["result"] == "error"
    assert svc.credit_add(5, SESSION_TOKEN, "SCAN:high", hi + 1)["result"] == "error"


def test_credit_add_boundary_totality_exhaustive(service_factory, scaled_config):
    lo, hi = scaled_config.min_retention, scaled_config.max_retention
    for rp in list(range(lo - 3, lo + 4)) + list(range(hi - 3, hi + 4)):
        svc = service_factory()
        result = svc.credit_add(5, SESSION_TOKEN, GOOD_SCAN, rp)["result"]
        assert result == ("ok" if lo <= rp <= hi else "error"), rp


def test_credit_add_error_cases(service_factory):
    svc = service_factory()
    assert svc.credit_add(5, "nope", GOOD_SCAN, 100)["result"] == "auth_error"
    assert svc.credit_add(0, SESSION_TOKEN, GOOD_SCAN, 100)["result"] == "err"
    assert svc.credit_add(5, SESSION_TOKEN, BAD_SCAN, 100)["result"] == "err"
    assert svc.stored_ids() == []  # nothing leaked into the store


def test_credit_add_default_retention(service_factory, scaled_config):
    svc = service_factory()
    out = svc.credit_add(5, SESSION_TOKEN, GOOD_SCAN)
    assert out["result"] == "ok"
    entry = svc.store.entries[out["chequeScanID"]]
    assert entry.ret == scaled_config.default_rp


def test_credit_without_scan_is_plain_deposit(service_factory):
    svc = service_factory()
    assert svc.credit_add(5, SESSION_TOKEN) == {"result": "ok"}
    assert svc.stored_ids() == []


def test_scan_identifier_shared_derivation(service_factory):
    svc = service_factory()
    out = svc.credit_add(5, SESSION_TOKEN, GOOD_SCAN, 100)
    assert out["chequeScanID"] == scan_identifier(GOOD_SCAN)


# -- sweeps ----------------------------------------------------------------------


def test_sweep_deletes_at_deadline_boundary(service_factory):
    svc = service_factory()
    out = svc.credit_add(5, SESSION_TOKEN, GOOD_SCAN, 60)
    report = svc.advance_clock(100)
    assert report == [(60, [out["chequeScanID"]])]
    assert svc.stored_ids() == []


def test_advance_zero_runs_no_sweep(service_factory):
    svc = service_factory()
    svc.credit_add(5, SESSION_TOKEN, GOOD_SCAN, 60)
    assert svc.advance_clock(0) == []
    assert len(svc.stored_ids()) == 1


def test_two_entries_in_same_window_deleted_together(service_factory):
    svc = service_factory()
    a = svc.credit_add(5, SESSION_TOKEN, "SCAN:a", 60)["chequeScanID"]
    b = svc.credit_add(5, SESSION_TOKEN, "SCAN:b", 60)["chequeScanID"]
    report = svc.advance_clock(61)
    assert report == [(60, sorted([a, b]))]


@pytest.mark.parametrize("variant", sweep_variants())
def test_sweeps_match_bruteforce_oracle(variant):
    rng = random.Random(variant)
    for trial in range(40):
        freq = rng.choice([1, 3, 5])
        config = RetentionConfig(freq=freq, min_retention=2, max_retention=400, default_rp=5)
        svc = DepositWithdrawalService(config, sessions={SESSION_TOKEN: "u"}, variant=variant)
        start_skew = rng.randrange(0, 7)
        if start_skew:
            svc.advance_clock(start_skew)
        entries = {}
        for k in range(rng.randrange(1, 5)):
            rp = rng.randrange(2, 60)
            out = svc.credit_add(1, SESSION_TOKEN, f"SCAN:{variant}-{trial}-{k}", rp)
            entries[out["chequeScanID"]] = svc.clock.now + rp
        deletions = []
        t = svc.clock.now
        oracle_deletions = []
        remaining = dict(entries)
        flag_state: set[str] = set()
        total = 0
        for _ in range(3):
            d = rng.randrange(0, 80)
            report = svc.advance_clock(d)
            for when, ids in report:
                deletions.extend((when, i) for i in ids)
            remaining, dels, flag_state = oracle_sweep(
                remaining, freq, t + total, d, variant, flag_state
            )
            oracle_deletions.extend(dels)
            total += d
        assert sorted(deletions) == sorted(oracle_deletions), (variant, trial)
        assert svc.stored_ids() == sorted(remaining)


# -- test_retention ---------------------------------------------------------------


def test_retention_probe_truth_table(scaled_config):
    freq = scaled_config.freq
    ret = 300
    offsets = [-2 * freq, -freq, -1, 0, 1, freq - 1, freq, freq + 1, 2 * freq]
    for found in (True, False):
        for offset in offsets:
            now = ret + offset
            if now < 0:
                continue
            svc = DepositWithdrawalService(
                scaled_config, sessions={SESSION_TOKEN: "u"}, variant="no_sweep"
            )
            if found:
                svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, scaled_config.max_retention)
                scan_id = scan_identifier(GOOD_SCAN)
            else:
                scan_id = "absent-id"
            svc.advance_clock(now)
            out = svc.test_retention(scan_id, ret)
            assert out["found"] is found
            assert out["result"] is oracle_test_retention(found, now, ret, freq), (found, offset)


def test_retention_probe_examples(service_factory):
    svc = service_factory()
    out = svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 100)
    sid = out["chequeScanID"]
    ret = 100
    svc.advance_clock(50)
    assert svc.test_retention(sid, ret) == {"result": True, "found": True}
    svc.advance_clock(50)  # now == ret; sweep at 100 removed the entry
    assert svc.test_retention(sid, ret) == {"result": True, "found": False}
    # data that vanished early: absent while now < ret - freq
    assert svc.test_retention("never-stored", 500) == {"result": False, "found": False}


def test_retention_invariants_randomized(scaled_config):
    rng = random.Random(1234)
    trials = 0
    for freq in (1, 5):
        config = RetentionConfig(
            freq=freq,
            min_retention=scaled_config.min_retention,
            max_retention=scaled_config.max_retention,
            default_rp=scaled_config.default_rp,
        )
        for _ in range(150):
            rp = rng.randint(config.min_retention, config.max_retention)
            svc = DepositWithdrawalService(config, sessions={SESSION_TOKEN: "u"})
            sid = svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, rp)["chequeScanID"]
            ret = rp
            t_pre = rng.randrange(1, ret)
            svc.advance_clock(t_pre)
            assert sid in svc.store.entries, "present before the deadline"
            t_post = ret + freq + rng.randrange(0, 50)
            svc.advance_clock(t_post - t_pre)
            assert sid not in svc.store.entries, "absent once a full period has passed"
            trials += 1
    assert trials == 300


def test_determinism_same_sequence_same_transcript(service_factory):
    def run():
        svc = service_factory()
        log = []
        log.append(svc.invoke("CreditAdd", {"amount": 5, "token": SESSION_TOKEN, "scan": GOOD_SCAN, "rp": 90}))
        log.append(svc.invoke("advance_clock", {"d": 50}))
        log.append(svc.invoke("Test_Retention", {"chequeScanID": scan_identifier(GOOD_SCAN), "ret": 90}))
        log.append(svc.invoke("advance_clock", {"d": 50}))
        log.append(svc.invoke("Test_Retention", {"chequeScanID": scan_identifier(GOOD_SCAN), "ret": 90}))
        return log

    assert run() == run()


# -- fault variants ----------------------------------------------------------------


def test_make_faulty_unknown_variant(scaled_config):
    with pytest.raises(ValueError):
        make_faulty("slow_sweep", scaled_config)


def test_variant_surface_is_identical(scaled_config):
    for variant in FAULT_VARIANTS:
        svc = make_faulty(variant, scaled_config, sessions={SESSION_TOKEN: "u"})
        assert set(svc.invoke("CreditAdd", {"amount": 1, "token": SESSION_TOKEN})) == {"result"}


def test_no_sweep_never_deletes(scaled_config):
    svc = make_faulty("no_sweep", scaled_config, sessions={SESSION_TOKEN: "u"})
    svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 60)
    svc.advance_clock(100000)
    assert len(svc.stored_ids()) == 1


def test_early_delete_removes_one_period_early(scaled_config):
    svc = make_faulty("early_delete", scaled_config, sessions={SESSION_TOKEN: "u"})
    svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 60)
    svc.advance_clock(59)
    assert svc.stored_ids() == []


def test_stale_flag_deletes_one_period_late(scaled_config):
    svc = make_faulty("stale_flag", scaled_config, sessions={SESSION_TOKEN: "u"})
    sid = svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 60)["chequeScanID"]
    svc.advance_clock(60)
    assert svc.stored_ids() == [sid]  # flagged, still present
    svc.advance_clock(1)
    assert svc.stored_ids() == []


def test_ignore_bounds_variants(scaled_config):
    low = make_faulty("ignore_min", scaled_config, sessions={SESSION_TOKEN: "u"})
    assert low.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 10)["result"] == "ok"
    high = make_faulty("ignore_max", scaled_config, sessions={SESSION_TOKEN: "u"})
    assert high.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 10_000)["result"] == "ok"


# -- snapshot / config ---------------------------------------------------------------


def test_snapshot_to_file(tmp_path, service_factory):
    svc = service_factory()
    svc.credit_add(1, SESSION_TOKEN, GOOD_SCAN, 60)
    out = tmp_path / "store.json"
    svc.snapshot_to_file(out)
    data = from_canonical(out.read_bytes())
    assert data["now"] == 0
    assert list(data["entries"].values())[0]["ret"] == 60


def test_service_config_load(tmp_path):
    cfg_path = write_scaled_config(tmp_path / "svc.json")
    cfg = ServiceConfig.load(cfg_path)
    assert cfg.service_id == "deposit-withdrawal-sim"
    assert cfg.retention.min_retention == 60
    svc = cfg.build()
    assert svc.invoke("Signon", {"usr": "certlab", "pwd": "cert-lab-secret"})["result"] == "ok"
    with pytest.raises(ValueError):
        cfg.build("made_up_variant")


# -- wire protocol ---------------------------------------------------------------------


def test_invoke_unknown_operation(service_factory):
    assert "error" in service_factory().invoke("Transfer", {})
    assert "error" in service_factory().invoke("CreditAdd", {"bogus_arg": 1})


def test_subprocess_line_protocol(tmp_path):
    cfg_path = write_scaled_config(tmp_path / "svc.json")
    client = SubprocessService(
        [sys.executable, "-m", "passert.service", "--config", str(cfg_path)]
    )
    try:
        assert client.invoke("Signon", {"usr": "certlab", "pwd": "cert-lab-secret"})["result"] == "ok"
        out = client.invoke(
            "CreditAdd", {"amount": 5, "token": SESSION_TOKEN, "scan": GOOD_SCAN, "rp": 90}
        )
        assert out["result"] == "ok"
        tick = client.invoke("advance_clock", {"d": 95})
        assert tick["now"] == 95 and tick["sweeps"] == [{"time": 90, "deleted": [out["chequeScanID"]]}]
        probe = client.invoke("Test_Retention", {"chequeScanID": out["chequeScanID"], "ret": 90})
        assert probe == {"found": False, "result": True}
        assert "error" in client.invoke("Transfer", {})
    finally:
        client.close()


def test_subprocess_faulty_variant(tmp_path):
    cfg_path = write_scaled_config(tmp_path / "svc.json")
    client = SubprocessService(
        [sys.executable, "-m", "passert.service", "--config", str(cfg_path), "--variant", "no_sweep"]
    )
    try:
        out = client.invoke(
            "CreditAdd", {"amount": 5, "token": SESSION_TOKEN, "scan": GOOD_SCAN, "rp": 90}
        )
        client.invoke("advance_clock", {"d": 1000})
        probe = client.invoke("Test_Retention", {"chequeScanID": out["chequeScanID"], "ret": 90})
        assert probe["found"] is True
    finally:
        client.close()


def test_line_protocol_malformed_request(tmp_path):
    import io

    from passert.service import serve_lines

    cfg = ServiceConfig.load(write_scaled_config(tmp_path / "svc.json"))
    stdout = io.StringIO()
    serve_lines(cfg.build(), io.StringIO("this is not json\n{\"op\": \"Signon\"}\n"), stdout)
    lines = [json.loads(l) for l in stdout.getvalue().splitlines()]
    assert "error" in lines[0]
    assert lines[1] == {"result": "failure"}
