"""File-based certificate registry: a directory of .passert.json plus an index."""

from __future__ import annotations

import json
from pathlib import Path

from .certificate import FILE_SUFFIX, CertificateError, PAssert, load_passert

INDEX_NAME = "index.json"


class Registry:
    """Certificates for discovery, indexed by service id.

    The index is advisory and rebuilt whenever it disagrees with the
    directory contents; the files themselves are the source of truth.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @property
    def index_path(self) -> Path:
        return self.root / INDEX_NAME

    def certificate_files(self) -> list[Path]:
        return sorted(p for p in self.root.glob(f"*{FILE_SUFFIX}") if p.is_file())

    def add(self, cert_path: str | Path) -> Path:
        cert = load_passert(cert_path)
        sig = cert.signature.signature.hex()[:12] if cert.signature else "unsigned"
        dest = self.root / f"{cert.core.toc.service_id}-{sig}{FILE_SUFFIX}"
        dest.write_bytes(Path(cert_path).read_bytes())
        self.rebuild_index()
        return dest

    def rebuild_index(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = {}
        for path in self.certificate_files():
            try:
                cert = load_passert(path)
            except CertificateError:
                continue
            index.setdefault(cert.core.toc.service_id, []).append(path.name)
        for names in index.values():
            names.sort()
        self.index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
        return index

    def index(self) -> dict[str, list[str]]:
        if self.index_path.exists():
            stored = json.loads(self.index_path.read_text())
            known = {name for names in stored.values() for name in names}
            present = {p.name for p in self.certificate_files()}
            if known == present:
                return stored
        return self.rebuild_index()

    def entries(self) -> list[tuple[str, Path, PAssert | None]]:
        """(service_id, path, certificate) per file; unparseable files carry None."""
        out: list[tuple[str, Path, PAssert | None]] = []
        for path in self.certificate_files():
            try:
                cert = load_passert(path)
                out.append((cert.core.toc.service_id, path, cert))
            except CertificateError:
                out.append(("<unreadable>", path, None))
        return out
