"""
Run manifest - provenance record written next to the CSV outputs
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from src.services import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    config_checksum: str
    seed: int
    config_path: str
    command: str = "run"
    tool_version: str = __version__
    status: str = "running"
    constellation: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def finalize(self, out_dir: Path) -> Path:
        self.status = "complete"
        self.finished_at = datetime.now(timezone.utc).isoformat()
        logger.info(f"Run complete: {len(self.outputs)} outputs in {out_dir}")
        return self.write(out_dir)
