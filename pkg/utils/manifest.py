"""
Манифест запуска: параметры, хэши входов и тайминги этапов
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

from utils.error_handler import InputFormatError, UsageError
from utils.monitoring import SystemMonitor

logger = logging.getLogger('dmriboot.manifest')

MANIFEST_NAME = 'manifest.json'


def file_digest(path, chunk_size=1 << 20):
    """SHA-256 содержимого файла."""
    digest = hashlib.sha256()
    try:
        with open(path, 'rb') as f:
            for block in iter(lambda: f.read(chunk_size), b''):
                digest.update(block)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e
    return digest.hexdigest()


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, 'item'):
        return value.item()
    return value


@dataclass
class RunManifest:
    """Описание одного запуска команды."""

    tool_version: str
    subcommand: str
    parameters: Dict
    seed: Optional[int] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    host: Dict = field(default_factory=SystemMonitor.get_host_info)
    timings: Dict[str, float] = field(default_factory=dict)
    report: Dict = field(default_factory=dict)

    def add_input(self, name, path):
        if path is not None:
            self.inputs[name] = file_digest(path)

    def to_dict(self):
        return _jsonable(asdict(self))

    def write(self, out_dir):
        """Записать manifest.json; прежний манифест в каталоге заменяется."""
        path = Path(out_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        logger.info(f"Manifest written to {path}")
        return path


def load_manifest(path):
    """Параметры запуска из манифеста (для повторного запуска через --config)."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise UsageError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputFormatError(f"manifest {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict) or not isinstance(data.get('parameters'), dict):
        raise InputFormatError(f"manifest {path} has no 'parameters' section")
    return data['parameters']
