"""Run manifests: config snapshot, master seed, and per-stage file checksums.

The manifest is written after every completed stage, so an interrupted run
leaves behind a record of which stages finished; a rerun skips stages whose
files still match their checksums.
"""

from __future__ import annotations

import datetime
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .errors import DataError

COMPLETE = "complete"
INCOMPLETE = "incomplete"


def file_checksum(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config: dict
    master_seed: int
    artifact_version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    status: str = INCOMPLETE
    stages: dict = field(default_factory=dict)

    def record(self, stage: str, path: str | Path) -> None:
        self.stages[stage] = {
            "path": str(path),
            "sha256": file_checksum(path),
            "status": COMPLETE,
        }

    def is_complete(self, stage: str, base: Path) -> bool:
        """True when the stage's file still exists and matches its checksum."""
        entry = self.stages.get(stage)
        if not entry or entry.get("status") != COMPLETE:
            return False
        path = base / entry["path"]
        return path.exists() and file_checksum(path) == entry["sha256"]

    def finish(self) -> None:
        self.finished = _now()
        self.status = COMPLETE

    def verify(self, base: Path) -> list[str]:
        """Names of stages whose files are missing or checksum-mismatched."""
        bad = []
        for stage, entry in self.stages.items():
            path = base / entry["path"]
            if not path.exists() or file_checksum(path) != entry["sha256"]:
                bad.append(stage)
        return bad

    def to_dict(self) -> dict:
        return {
            "artifact_version": self.artifact_version,
            "master_seed": self.master_seed,
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "config": self.config,
            "stages": self.stages,
        }

    def write(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)
        tmp.replace(path)

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict) or "master_seed" not in raw:
            raise DataError(f"{path}: not a run manifest")
        return cls(
            config=raw.get("config", {}),
            master_seed=raw["master_seed"],
            artifact_version=raw.get("artifact_version", "unknown"),
            started=raw.get("started", _now()),
            finished=raw.get("finished"),
            status=raw.get("status", INCOMPLETE),
            stages=raw.get("stages", {}),
        )
