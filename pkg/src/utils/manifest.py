"""
Run manifests
Config echo, seed, wall-clock duration and SHA-256 checksums of the
artifacts a command wrote.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


def get_file_hash(file_path) -> Optional[str]:
    """
    Calculate SHA-256 hash of a file
    """
    try:
        with open(file_path, "rb") as f:
            file_hash = hashlib.sha256()
            for chunk in iter(lambda: f.read(4096), b""):
                file_hash.update(chunk)
        return file_hash.hexdigest()
    except OSError as e:
        logger.error(f"Error calculating hash for {file_path}: {e}")
        return None


@dataclass
class RunManifest:
    """What a single CLI invocation did"""
    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    duration_s: float = 0.0
    artifacts: Dict[str, Optional[str]] = field(default_factory=dict)

    def add_artifact(self, path) -> None:
        self.artifacts[str(path)] = get_file_hash(path)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def emit(self, path=None) -> None:
        """Write to ``path`` as JSON, or log at INFO when no path is given."""
        document = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is None:
            logger.info(f"Run manifest: {document}")
            return
        Path(path).write_text(document + "\n", encoding="utf-8")
