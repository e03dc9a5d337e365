"""
Base Repository
Base class for file-backed repositories
"""
from abc import ABC
from pathlib import Path
from typing import Any

import orjson
from pydantic import BaseModel

from app.utils import LoggerMixin, OutputExists


def encode_line(record: BaseModel) -> bytes:
    """One JSON line with sorted keys; decimals as strings"""
    return orjson.dumps(record.model_dump(mode='json'), option=orjson.OPT_SORT_KEYS) + b"\n"


def decode_line(line: bytes) -> Any:
    return orjson.loads(line)


class BaseRepository(ABC, LoggerMixin):
    """
    Repository over a root directory

    Subclasses store their records as files under root.
    """

    def __init__(self, root: Path):
        """
        Initialize repository

        Args:
            root: Directory holding this repository's files
        """
        self.root = Path(root)

    def ensure_root(self) -> Path:
        """Create the root directory if needed"""
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root

    def path_for(self, name: str) -> Path:
        """Path of a file under root"""
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path_for(name).exists()

    def check_writable(self, path: Path, force: bool = False) -> None:
        """
        Refuse to replace an existing output

        Raises:
            OutputExists: path exists and force is not set
        """
        if path.exists() and not force:
            raise OutputExists(
                f"{path} already exists; pass --force to overwrite",
                details={"path": str(path)}
            )
