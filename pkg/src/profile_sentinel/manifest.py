"""Run manifests and the single-seed fan-out used across pipeline stages.

A manifest records what a command ran with: argv, seeds, tool version,
sha256 digests of every input file (taken before execution), and the
output paths. Manifests contain no timestamps, so identical runs produce
identical manifests, and any successful run is reproducible from its
manifest alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

TOOL_VERSION = "0.1.0"


def derive_seed(master: int, stage: str) -> int:
    """Deterministic per-stage seed from the single user-facing seed."""
    digest = hashlib.blake2b(f"{master}:{stage}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1  # keep it positive


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    seed: int | None
    config_paths: list[str] = field(default_factory=list)
    input_digests: dict[str, str] = field(default_factory=dict)
    output_paths: list[str] = field(default_factory=list)
    status: str = "pending"
    error: str | None = None
    tool_version: str = TOOL_VERSION

    def record_input(self, path: str | Path) -> None:
        path = Path(path)
        if path.is_file():
            self.input_digests[str(path)] = file_digest(path)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "command": self.command,
            "argv": self.argv,
            "seed": self.seed,
            "config_paths": self.config_paths,
            "input_digests": self.input_digests,
            "output_paths": self.output_paths,
            "status": self.status,
            "error": self.error,
            "tool_version": self.tool_version,
        }
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
