"""
Trace Repository
JSONL run traces: header line, one line per step, footer line
"""
import os
from pathlib import Path
from typing import Union

import orjson
from pydantic import BaseModel, ValidationError

from app.models import ResearchLog, RunFooter, RunHeader, StepRecord
from app.utils import TraceCorrupt
from .base import BaseRepository, decode_line, encode_line

TRACE_SUFFIX = '.jsonl'


class TraceRepository(BaseRepository):
    """
    Stores one trace file per run under root

    Every line is fsynced before append() returns, so a crash loses at
    most the step in flight.
    """

    def trace_path(self, run_id: str) -> Path:
        return self.path_for(f"{run_id}{TRACE_SUFFIX}")

    def create(self, header: RunHeader, force: bool = False) -> Path:
        """
        Start a trace file with its header line

        Raises:
            OutputExists: Trace exists and force is not set
        """
        self.ensure_root()
        path = self.trace_path(header.run_id)
        self.check_writable(path, force)
        with open(path, 'wb') as f:
            f.write(encode_line(header))
            f.flush()
            os.fsync(f.fileno())
        self.logger.debug("trace_created", run_id=header.run_id)
        return path

    def append(self, path: Path, record: Union[StepRecord, RunFooter]) -> None:
        """Append one record durably"""
        with open(path, 'ab') as f:
            f.write(encode_line(record))
            f.flush()
            os.fsync(f.fileno())

    def list_traces(self) -> list[Path]:
        """Trace files under root, sorted by name"""
        if not self.root.is_dir():
            return []
        return sorted(p for p in self.root.iterdir() if p.suffix == TRACE_SUFFIX and p.is_file())

    def load(self, path: Path) -> ResearchLog:
        """
        Parse a trace file

        A missing footer is allowed (the run was interrupted).

        Raises:
            TraceCorrupt: With the 1-based number of the first bad line
        """
        with open(path, 'rb') as f:
            lines = f.read().split(b"\n")
        if lines and lines[-1] == b"":
            lines.pop()
        if not lines:
            raise TraceCorrupt(f"{path} is empty", line_no=1)

        header = self._parse(lines[0], 1, RunHeader)
        records: list[StepRecord] = []
        footer = None

        for line_no, line in enumerate(lines[1:], start=2):
            if footer is not None:
                raise TraceCorrupt(f"{path}:{line_no}: record after footer", line_no=line_no)
            record_type = self._record_type(line, line_no)
            if record_type == 'footer':
                footer = self._parse(line, line_no, RunFooter)
                continue
            record = self._parse(line, line_no, StepRecord)
            if record.index != len(records):
                raise TraceCorrupt(
                    f"{path}:{line_no}: step index {record.index}, expected {len(records)}",
                    line_no=line_no
                )
            records.append(record)

        return ResearchLog(header=header, records=records, footer=footer)

    @staticmethod
    def _record_type(line: bytes, line_no: int) -> str:
        try:
            data = decode_line(line)
        except orjson.JSONDecodeError as e:
            raise TraceCorrupt(f"line {line_no}: invalid JSON: {e}", line_no=line_no) from e
        if not isinstance(data, dict):
            raise TraceCorrupt(f"line {line_no}: not a JSON object", line_no=line_no)
        return str(data.get('record_type', ''))

    @staticmethod
    def _parse(line: bytes, line_no: int, model: type[BaseModel]):
        try:
            return model.model_validate_json(line)
        except ValidationError as e:
            raise TraceCorrupt(f"line {line_no}: {e.error_count()} validation error(s)", line_no=line_no) from e
