"""
@file logger.py
@brief Run-directory logging for Materium experiments: JSON artifacts, CSV training metrics, atomic writes.

@details
Creates a per-run directory structure and writes artifacts into it:
- resolved run configuration (`config.json`)
- per-epoch training metrics (`metrics.csv`, header `epoch,step,train_loss,val_loss,lr,grad_norm`)
- arbitrary JSON documents (evaluation reports, generation stats, tokenization stats)

Directory layout:
- <outputDir>/<runDetails>/
- <outputDir>/<runDetails>/<name>/   one sub-directory per named item (e.g. ordering strategy)

@note
- Artifacts are written through @ref atomic_write_text: data lands in a temp file in the target
  directory and is moved into place with `os.replace`, so an interrupted run never leaves a
  half-written artifact. Metric rows are the exception: they are appended one line at a time.
- Resident memory is reported through @ref log_rss when psutil is importable.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

logger = logging.getLogger(__name__)

try:
    import psutil
    _PROC = psutil.Process()
except Exception:
    _PROC = None

METRIC_COLUMNS = ["epoch", "step", "train_loss", "val_loss", "lr", "grad_norm"]

PathLike = Union[str, Path]


def log_rss(tag: str) -> Optional[float]:
    """
    @brief Log the resident set size of this process.
    @return RSS in MB, or None when psutil is unavailable
    """
    if _PROC is None:
        return None
    try:
        rss = _PROC.memory_info().rss / (1024 * 1024)
    except Exception:
        return None
    logger.info("[mem] %s: RSS=%.1f MB", tag, rss)
    return rss


def atomic_write_text(path: PathLike, text: str) -> None:
    """@brief Write @p text to @p path through a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: PathLike, data: Any, indent: int = 4) -> None:
    atomic_write_text(path, json.dumps(data, indent=indent, default=_json_default) + "\n")


def atomic_write_lines(path: PathLike, lines: Iterable[str]) -> None:
    atomic_write_text(path, "".join(line if line.endswith("\n") else line + "\n" for line in lines))


def _json_default(obj):
    # numpy scalars and arrays
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"object of type {type(obj).__name__} is not JSON serializable")


def read_metrics(path: PathLike) -> List[Dict[str, str]]:
    """@return the rows of a metrics CSV (empty list when the file does not exist yet)."""
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class Logger:
    """
    @class Logger
    @brief Owns one run directory and writes JSON artifacts and CSV metric rows into it.

    @details
    Sub-directories are created for every name in @p names (for instance one per ordering strategy in
    a comparison run). Metric rows are appended in place; only truncation on resume rewrites the CSV,
    and it does so atomically.
    """

    def __init__(self, runDetails: str, outputDir: PathLike = "outputs", names: Sequence[str] = ()) -> None:
        """
        @brief Construct a Logger and prepare the output directory tree.

        @param runDetails identifier of the run (sub-directory under @p outputDir)
        @param outputDir root directory for all runs
        @param names optional sub-directories to create under the run directory
        """
        self.runDetails = runDetails
        self.outputDir = Path(outputDir)
        self.runPath = self.outputDir / runDetails
        self.createDir(self.runPath)
        for name in names:
            self.createDir(self.runPath / name)

    def createDir(self, path: PathLike) -> Path:
        path = Path(path)
        if path.exists():
            logger.debug("directory '%s' already exists", path)
        else:
            path.mkdir(parents=True, exist_ok=True)
            logger.debug("directory '%s' created", path)
        return path

    def path(self, *parts: str) -> Path:
        return self.runPath.joinpath(*parts)

    def sub(self, name: str) -> "Logger":
        """@return a Logger rooted at the sub-directory @p name of this run."""
        return Logger(name, self.runPath)

    def log_config(self, config: Mapping[str, Any], filename: str = "config.json") -> Path:
        out = self.path(filename)
        atomic_write_json(out, dict(config))
        return out

    def log_json(self, filename: str, data: Any) -> Path:
        out = self.path(filename)
        atomic_write_json(out, data)
        return out

    def log_metrics(self, row: Mapping[str, Any], filename: str = "metrics.csv") -> Path:
        """
        @brief Append one row to the metrics CSV.
        @param row mapping with the keys of @ref METRIC_COLUMNS (missing keys are written empty)
        """
        out = self.path(filename)
        new = not out.exists() or out.stat().st_size == 0
        with open(out, "a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS, lineterminator="\n")
            if new:
                writer.writeheader()
            writer.writerow({k: _fmt(row.get(k)) for k in METRIC_COLUMNS})
        return out

    def truncate_metrics(self, max_epoch: int, filename: str = "metrics.csv") -> None:
        """@brief Drop rows beyond @p max_epoch (used when resuming from an earlier checkpoint)."""
        out = self.path(filename)
        rows = [r for r in read_metrics(out) if int(r["epoch"]) <= max_epoch]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        atomic_write_text(out, buf.getvalue())


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)
