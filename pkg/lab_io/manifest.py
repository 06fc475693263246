# lab_io/manifest.py
"""
Artifact writing for one run: CSV tables, snapshots, trajectory directories
and the JSON run manifest that lists each of them with its SHA-256.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from lab_io.snapshots import FLOAT_FORMAT, write_snapshot, write_trajectory
from lab_io.tolerances import tolerance_table
from spectral.fields import Trajectory, VectorField3

logger = logging.getLogger(__name__)

CODE_VERSION = "hwm-lab 0.3.0"
MANIFEST_FILE = "manifest.json"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_checksum(files: Dict[str, str]) -> str:
    """SHA-256 over the sorted "name:sha256" lines."""
    lines = "\n".join(f"{name}:{files[name]}" for name in sorted(files))
    return hashlib.sha256(lines.encode("utf-8")).hexdigest()


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    """Headers are "name[unit]" labels; floats use a fixed round-trip format."""
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    version: str = CODE_VERSION
    started: str = ""
    finished: str = ""
    tolerances: Dict[str, Any] = field(default_factory=tolerance_table)
    verdict: Dict[str, Any] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)

    @property
    def checksum(self) -> str:
        return manifest_checksum(self.files)

    def as_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["checksum"] = self.checksum
        return _jsonable(out)


class ArtifactWriter:
    """Owns one output directory; each artifact name is written exactly once."""

    def __init__(self, output_dir: str | Path, command: str, config: Dict[str, Any]):
        self.root = Path(output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command=command, config=config, started=_now())

    def _claim(self, name: str) -> Path:
        if name in self.manifest.files or any(f.startswith(f"{name}/") for f in self.manifest.files):
            raise FileExistsError(f"artifact {name!r} was already written in this run")
        return self.root / name

    def _record(self, path: Path) -> None:
        name = path.relative_to(self.root).as_posix()
        self.manifest.files[name] = sha256_file(path)

    def csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = write_csv(frame, self._claim(name))
        self._record(path)
        return path

    def snapshot(self, name: str, u: VectorField3) -> Path:
        path = write_snapshot(u, self._claim(name))
        self._record(path)
        return path

    def trajectory(self, name: str, traj: Trajectory) -> Path:
        directory = self._claim(name)
        for path in write_trajectory(traj, directory):
            self._record(path)
        return directory

    def json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self._claim(name)
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self._record(path)
        return path

    def finish(self, verdict: Optional[Dict[str, Any]] = None) -> Path:
        self.manifest.verdict = _jsonable(verdict or {})
        self.manifest.finished = _now()
        path = self.root / MANIFEST_FILE
        path.write_text(json.dumps(self.manifest.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"[IO] manifest {path} files={len(self.manifest.files)} checksum={self.manifest.checksum[:12]}")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def verify_manifest(path: str | Path) -> bool:
    """Recompute every listed checksum and the manifest checksum."""
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    root = path.parent
    files = payload.get("files", {})
    if any(sha256_file(root / name) != digest for name, digest in files.items()):
        return False
    return manifest_checksum(files) == payload.get("checksum")
