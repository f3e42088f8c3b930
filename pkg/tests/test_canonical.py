import math
import random

import pytest

from passert.canonical import CanonicalizationError, canonical_bytes, from_canonical
from passert.signing import (
    KeyFormatError,
    generate_signer,
    load_signer,
    load_verifier,
    save_signer,
    save_verifier,
)

SAMPLE = {
    "core": {"service": "deposit", "key": 112, "ratio": 0.5, "flag": True, "none": None},
    "list": [1, 2, {"nested": "x"}],
    "text": "üñïçødé",
}


def test_round_trip_fixpoint():
    once = canonical_bytes(SAMPLE)
    again = canonical_bytes(from_canonical(once))
    assert once == again


def test_key_order_insensitive():
    a = {"b": 1, "a": {"y": 2, "x": 3}}
    b = {"a": {"x": 3, "y": 2}, "b": 1}
    assert canonical_bytes(a) == canonical_bytes(b)


def test_no_insignificant_whitespace_and_sorted():
    data = canonical_bytes({"b": 1, "a": 2})
    assert data == b'{"a":2,"b":1}'


def test_any_leaf_change_changes_bytes():
    base = canonical_bytes(SAMPLE)

    def mutate(value, path):
        if isinstance(value, dict):
            return {k: (mutate(v, path + [k]) if k == path[0] else v) for k, v in value.items()}
        return value

    mutants = [
        {**SAMPLE, "text": SAMPLE["text"] + "!"},
        {**SAMPLE, "list": [1, 2, {"nested": "y"}]},
        {**SAMPLE, "core": {**SAMPLE["core"], "key": 113}},
        {**SAMPLE, "core": {**SAMPLE["core"], "flag": False}},
        {**SAMPLE, "core": {**SAMPLE["core"], "ratio": 0.25}},
    ]
    for mutant in mutants:
        assert canonical_bytes(mutant) != base


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_rejects_non_finite(bad):
    with pytest.raises(CanonicalizationError):
        canonical_bytes({"x": bad})


def test_rejects_non_string_keys_and_objects():
    with pytest.raises(CanonicalizationError):
        canonical_bytes({1: "x"})
    with pytest.raises(CanonicalizationError):
        canonical_bytes({"x": object()})
    with pytest.raises(CanonicalizationError):
        canonical_bytes({"x": b"bytes"})


def test_integers_have_no_leading_zeros():
    assert canonical_bytes({"n": 7}) == b'{"n":7}'
    assert canonical_bytes({"n": 1000000}) == b'{"n":1000000}'


# -- signatures ---------------------------------------------------------------


def test_sign_verify_round_trip():
    signer = generate_signer("ca-1")
    verifier = signer.public_verifier()
    payload = canonical_bytes(SAMPLE)
    sig = signer.sign(payload)
    assert verifier.verify(payload, sig)


def test_single_byte_mutations_break_verification():
    signer = generate_signer("ca-1", seed=bytes(range(32)))
    verifier = signer.public_verifier()
    payload = canonical_bytes(SAMPLE)
    sig = signer.sign(payload)
    rng = random.Random(99)
    positions = rng.sample(range(len(payload)), k=min(200, len(payload)))
    for pos in positions:
        mutated = bytearray(payload)
        mutated[pos] ^= 0x01
        assert not verifier.verify(bytes(mutated), sig)


def test_wrong_key_fails():
    payload = canonical_bytes(SAMPLE)
    sig = generate_signer("ca-1").sign(payload)
    other = generate_signer("ca-2").public_verifier()
    assert not other.verify(payload, sig)


def test_key_files_round_trip(tmp_path):
    signer = generate_signer("lab-ca-2026", seed=bytes(32))
    save_signer(signer, tmp_path / "ca.key")
    save_verifier(signer.public_verifier(), tmp_path / "ca.pub")
    loaded = load_signer(tmp_path / "ca.key")
    pub = load_verifier(tmp_path / "ca.pub")
    assert loaded.key_id == pub.key_id == "lab-ca-2026"
    payload = b"x" * 40
    assert pub.verify(payload, loaded.sign(payload))
    header = (tmp_path / "ca.key").read_bytes().split(b"\n", 1)[0]
    assert b"lab-ca-2026" in header and b"ed25519" in header


def test_key_file_format_errors(tmp_path):
    path = tmp_path / "bad.key"
    path.write_bytes(b"no header here")
    with pytest.raises(KeyFormatError):
        load_signer(path)
    path.write_bytes(b"passert-key rsa private x\n" + bytes(32))
    with pytest.raises(KeyFormatError):
        load_signer(path)
    path.write_bytes(b"passert-key ed25519 public x\n" + bytes(32))
    with pytest.raises(KeyFormatError):
        load_signer(path)  # role mismatch
    path.write_bytes(b"passert-key ed25519 private x\n" + bytes(31))
    with pytest.raises(KeyFormatError):
        load_signer(path)
