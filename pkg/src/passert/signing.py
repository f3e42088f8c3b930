"""Detached signatures over canonical certificate bytes.

The signer/verifier interface is pluggable; the bundled implementation is
Ed25519. Key files are a one-line header (algorithm, role, key id) followed by
the raw 32 key bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

_HEADER_PREFIX = b"passert-key"


class KeyFormatError(ValueError):
    """Raised for malformed key files or unknown algorithms."""


class Signer(Protocol):
    algorithm: str
    key_id: str

    def sign(self, data: bytes) -> bytes: ...


class Verifier(Protocol):
    algorithm: str
    key_id: str

    def verify(self, data: bytes, signature: bytes) -> bool: ...


@dataclass(frozen=True)
class Ed25519Signer:
    key_id: str
    _key: Ed25519PrivateKey

    algorithm = "ed25519"

    def sign(self, data: bytes) -> bytes:
        return self._key.sign(data)

    def public_verifier(self) -> "Ed25519Verifier":
        return Ed25519Verifier(self.key_id, self._key.public_key())

    def private_bytes(self) -> bytes:
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            NoEncryption,
            PrivateFormat,
        )

        return self._key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())


@dataclass(frozen=True)
class Ed25519Verifier:
    key_id: str
    _key: Ed25519PublicKey

    algorithm = "ed25519"

    def verify(self, data: bytes, signature: bytes) -> bool:
        try:
            self._key.verify(signature, data)
            return True
        except InvalidSignature:
            return False

    def public_bytes(self) -> bytes:
        from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

        return self._key.public_bytes(Encoding.Raw, PublicFormat.Raw)


def generate_signer(key_id: str, seed: bytes | None = None) -> Ed25519Signer:
    """Fresh keypair; a 32-byte seed makes the key deterministic (tests, fixtures)."""
    if seed is not None:
        key = Ed25519PrivateKey.from_private_bytes(seed)
    else:
        key = Ed25519PrivateKey.generate()
    return Ed25519Signer(key_id, key)


def _write_key_file(path: Path, role: str, key_id: str, raw: bytes) -> None:
    header = b" ".join((_HEADER_PREFIX, b"ed25519", role.encode(), key_id.encode())) + b"\n"
    path.write_bytes(header + raw)


def save_signer(signer: Ed25519Signer, path: str | Path) -> None:
    _write_key_file(Path(path), "private", signer.key_id, signer.private_bytes())


def save_verifier(verifier: Ed25519Verifier, path: str | Path) -> None:
    _write_key_file(Path(path), "public", verifier.key_id, verifier.public_bytes())


def _read_key_file(path: Path, expect_role: str) -> tuple[str, bytes]:
    blob = Path(path).read_bytes()
    header, sep, raw = blob.partition(b"\n")
    if not sep:
        raise KeyFormatError(f"{path}: missing key header line")
    fields = header.split()
    if len(fields) != 4 or fields[0] != _HEADER_PREFIX:
        raise KeyFormatError(f"{path}: malformed key header {header!r}")
    if fields[1] != b"ed25519":
        raise KeyFormatError(f"{path}: unsupported algorithm {fields[1]!r}")
    if fields[2].decode() != expect_role:
        raise KeyFormatError(f"{path}: expected a {expect_role} key, found {fields[2].decode()}")
    if len(raw) != 32:
        raise KeyFormatError(f"{path}: expected 32 raw key bytes, found {len(raw)}")
    return fields[3].decode(), raw


def load_signer(path: str | Path) -> Ed25519Signer:
    key_id, raw = _read_key_file(Path(path), "private")
    return Ed25519Signer(key_id, Ed25519PrivateKey.from_private_bytes(raw))


def load_verifier(path: str | Path) -> Ed25519Verifier:
    key_id, raw = _read_key_file(Path(path), "public")
    return Ed25519Verifier(key_id, Ed25519PublicKey.from_public_bytes(raw))
