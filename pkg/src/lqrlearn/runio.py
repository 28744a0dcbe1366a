"""Run-directory bookkeeping: hashed artifacts and a JSON manifest.

Every command funnels its file output through one :class:`RunWriter` so the
manifest always lists exactly what was written, each with a SHA-256 content
hash.  Workers may compute in parallel, but writes happen sequentially on
the thread that owns the writer, in a deterministic order.
"""

import hashlib
import json
from pathlib import Path

from .config import canonical_json
from .errors import ConfigError


def sha256_text(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunWriter:
    """Single writer for one run directory; collects hashes for the manifest."""

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self.errors = []

    def path(self, name):
        return self.run_dir / name

    def write_text(self, name, text):
        path = self.run_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files[name] = sha256_text(text)
        return path

    def register(self, name):
        """Record a file another helper already wrote into the run directory."""
        self.files[name] = sha256_file(self.run_dir / name)

    def record_error(self, where, exc):
        self.errors.append({"where": where, "type": type(exc).__name__,
                            "message": str(exc)})

    def finalize(self, command, config_text, master_seed, extra=None):
        """Write manifest.json and return its path."""
        manifest = {
            "command": command,
            "config_sha256": sha256_text(config_text),
            "master_seed": int(master_seed),
            "files": dict(sorted(self.files.items())),
            "errors": self.errors,
        }
        if extra:
            manifest.update(extra)
        path = self.run_dir / "manifest.json"
        path.write_text(canonical_json(manifest))
        return path


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ConfigError(f"no run manifest at {path}")
    with open(path) as fh:
        return json.load(fh), path.parent
