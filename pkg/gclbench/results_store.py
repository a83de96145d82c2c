"""
Crash-safe store of sweep results: one JSON-lines file per grid cell.

A cell is identified by a 16-hex-digit SHA-256 over the experiment's
result-defining settings plus the cell coordinates, so a rerun recognises
finished cells and only computes the missing ones.
"""

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

logger = logging.getLogger(__name__)


class RunRecord(BaseModel):
    """Outcome of one (method, dataset, size, seed) cell."""

    method: str = Field(description="Embedding method")
    dataset: str = Field(description="Dataset name")
    train_size: int = Field(ge=0, description="Graphs used for pretraining and probe training")
    fraction: float = Field(description="Training fraction of the cell")
    seed: int = Field(description="Run seed")
    style: Optional[int] = Field(default=None, description="Synthetic style multiplier S")
    metric: Literal["accuracy", "roc-auc"] = Field(description="Probe metric")
    value: Optional[float] = Field(default=None, description="Probe metric value; None if the cell failed")
    std: Optional[float] = Field(default=None, description="Spread over probe repetitions, if any")
    wall_time: float = Field(default=0.0, ge=0, description="Seconds spent on the cell")
    config_hash: str = Field(description="Hash of the result-defining experiment settings")
    cell_key: str = Field(description="Hash of config_hash plus the cell coordinates")
    status: Literal["ok", "failed"] = "ok"
    error: Optional[str] = None
    details: Dict[str, Any] = Field(default_factory=dict, description="Method-specific extras")

    @model_validator(mode="after")
    def _value_in_range(self) -> "RunRecord":
        if self.status == "ok":
            if self.value is None:
                raise ValueError("a successful record needs a value")
            if not 0.0 <= self.value <= 1.0:
                raise ValueError(f"{self.metric} {self.value} outside [0, 1]")
        return self


def generate_cell_key(config_hash: str, cell: Dict[str, Any]) -> str:
    key_data = {"config": config_hash, "cell": cell}
    key_string = json.dumps(key_data, sort_keys=True)
    return hashlib.sha256(key_string.encode()).hexdigest()[:16]


class RunStore:
    """Record files live under <root>/records/<cell_key>.jsonl."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.records_dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, cell_key: str) -> Path:
        return self.records_dir / f"{cell_key}.jsonl"

    def get(self, cell_key: str) -> Optional[RunRecord]:
        """Completed record of a cell, or None."""
        path = self.path_for(cell_key)
        if not path.exists():
            logger.debug(f"💨 Cell MISS: {cell_key}")
            return None
        try:
            line = path.read_text(encoding="utf-8").strip().splitlines()[-1]
            record = RunRecord.model_validate_json(line)
        except (IndexError, ValueError) as e:
            logger.warning(f"⚠️ Ignoring unreadable record {path.name}: {e}")
            return None
        logger.info(f"🎯 Cell HIT: {cell_key} ({record.method}, size {record.train_size}, seed {record.seed})")
        return record

    def put(self, record: RunRecord) -> Path:
        """Write atomically: temp file in the same directory, then rename."""
        path = self.path_for(record.cell_key)
        fd, tmp = tempfile.mkstemp(dir=self.records_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(record.model_dump_json() + "\n")
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        logger.info(f"💾 Stored cell {record.cell_key} ({record.status})")
        return path

    def load_all(self) -> List[RunRecord]:
        """Every stored record, in a stable order."""
        records = []
        for path in sorted(self.records_dir.glob("*.jsonl")):
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    records.append(RunRecord.model_validate_json(line))
        return sorted(records, key=lambda r: (r.method, r.style or 0, r.train_size, r.fraction, r.seed, r.cell_key))

    def stats(self) -> Dict[str, Any]:
        records = self.load_all()
        return {
            "root": str(self.root),
            "total": len(records),
            "failed": sum(r.status == "failed" for r in records),
        }
