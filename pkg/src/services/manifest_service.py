import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from src import __version__

SCHEMA_VERSION = "1"
MANIFEST_SUFFIX = ".manifest.json"


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    started: str
    finished: Optional[str] = None
    version: str = __version__
    schema_version: str = SCHEMA_VERSION
    files: Dict[str, str] = field(default_factory=dict)
    reseeded: List[List[int]] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)


def manifest_name(command: str) -> str:
    return f"{command}{MANIFEST_SUFFIX}"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def finalize_manifest(manifest: RunManifest, files: Iterable[Path], out_dir: Path) -> Path:
    """Checksum the emitted files, stamp the end time and write the manifest atomically."""
    out_dir = Path(out_dir)
    manifest.files = {
        str(Path(path).resolve().relative_to(out_dir.resolve())): sha256_file(Path(path))
        for path in sorted(files, key=str)
    }
    manifest.finished = utc_now()

    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / manifest_name(manifest.command)
    fd, tmp_path = tempfile.mkstemp(prefix=".manifest-", suffix=".json", dir=out_dir)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(json.dumps(asdict(manifest), sort_keys=True, indent=2))
            f.write("\n")
        os.replace(tmp_path, target)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    return target


def load_manifest(path: Path) -> RunManifest:
    with open(path) as f:
        return RunManifest(**json.load(f))
