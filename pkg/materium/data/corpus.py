"""
@file corpus.py
@brief Line-delimited JSON corpora: crystal records, token sequences and generated samples.

@details
Three UTF-8 JSONL formats share this module:
- crystal corpus   : one @ref CrystalRecord per line (@ref load_corpus / @ref save_corpus)
- token corpus     : `{"id": ..., "ids": [...], "conditions": {...}, "clamped": [...], "ordering": ...,
                     "coordsFirst": ...}` per line
- generated set    : crystal record fields (when the sample decoded) plus a `generation` block with
                     targets, seed, tokens and validity flags

Loading is strict: every malformed line is collected with its line number and reported together in
one @ref ParseError. All writers are atomic.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from ..core.elements import ElementTables, default_tables
from ..core.errors import DataError, EmptyCorpus, ParseError
from ..core.logger import atomic_write_lines
from .records import CrystalRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _read_lines(path: PathLike) -> List[Tuple[int, str]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file {path} does not exist")
    with open(path, encoding="utf-8") as f:
        return [(i, line) for i, line in enumerate(f, start=1) if line.strip()]


def _parse_chunk(chunk: Sequence[Tuple[int, str]], tables: ElementTables, source: str):
    records, issues, wrapped = [], [], []
    for lineno, line in chunk:
        try:
            data = json.loads(line)
            records.append(CrystalRecord.from_dict(data, tables, wrapped, (source, lineno)))
        except json.JSONDecodeError as exc:
            issues.append((lineno, f"invalid JSON: {exc.msg}"))
        except DataError as exc:
            issues.append((lineno, str(exc)))
    return records, issues, wrapped


def load_corpus(path: PathLike, tables: Optional[ElementTables] = None, workers: int = 1) -> List[CrystalRecord]:
    """
    @brief Strictly parse a crystal JSONL corpus.
    @param workers number of shards parsed concurrently; results keep input order
    @return list of CrystalRecord
    @throws ParseError(line, reason) listing every malformed line
    @throws EmptyCorpus if the file holds no records
    """
    tables = tables or default_tables()
    lines = _read_lines(path)
    if not lines:
        raise EmptyCorpus(f"{path}: corpus is empty")

    workers = max(1, int(workers))
    if workers == 1:
        parts = [_parse_chunk(lines, tables, str(path))]
    else:
        size = -(-len(lines) // workers)
        chunks = [lines[i:i + size] for i in range(0, len(lines), size)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _parse_chunk(c, tables, str(path)), chunks))

    records: List[CrystalRecord] = []
    issues: List[Tuple[int, str]] = []
    n_wrapped = 0
    for recs, errs, wrapped in parts:
        records.extend(recs)
        issues.extend(errs)
        n_wrapped += len(set(wrapped))
    if issues:
        line, reason = issues[0]
        raise ParseError(line, f"{path}: {reason}", issues)
    if n_wrapped:
        logger.warning("%d record(s) had coordinates wrapped into [0, 1)", n_wrapped)
    logger.info("loaded %d records from %s", len(records), path)
    return records


def save_corpus(records: Iterable[CrystalRecord], path: PathLike) -> None:
    """@brief Write records as JSONL (inverse of @ref load_corpus)."""
    atomic_write_lines(path, (json.dumps(r.to_dict()) for r in records))


# ---------- token corpus ----------

@dataclass(frozen=True)
class TokenRecord:
    """
    @class TokenRecord
    @brief One encoded material; @p ordering and @p coords_first record the layout it was encoded with.
    """

    id: str
    ids: Tuple[int, ...]
    conditions: Dict[str, Any] = field(default_factory=dict)
    clamped: Tuple[str, ...] = ()
    ordering: Optional[str] = None
    coords_first: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {"id": self.id, "ids": list(self.ids), "conditions": dict(self.conditions),
               "clamped": list(self.clamped)}
        if self.ordering is not None:
            out["ordering"] = self.ordering
        if self.coords_first is not None:
            out["coordsFirst"] = self.coords_first
        return out


def save_token_corpus(records: Iterable[TokenRecord], path: PathLike) -> None:
    atomic_write_lines(path, (json.dumps(r.to_dict()) for r in records))


def load_token_corpus(path: PathLike) -> List[TokenRecord]:
    """
    @throws ParseError listing malformed lines
    @throws EmptyCorpus if the file holds no records
    """
    lines = _read_lines(path)
    if not lines:
        raise EmptyCorpus(f"{path}: token corpus is empty")
    out, issues = [], []
    for lineno, line in lines:
        try:
            data = json.loads(line)
            ids = tuple(int(i) for i in data["ids"])
            coords_first = data.get("coordsFirst")
            out.append(TokenRecord(str(data["id"]), ids, dict(data.get("conditions") or {}),
                                   tuple(data.get("clamped") or ()), data.get("ordering"),
                                   None if coords_first is None else bool(coords_first)))
        except json.JSONDecodeError as exc:
            issues.append((lineno, f"invalid JSON: {exc.msg}"))
        except KeyError as exc:
            issues.append((lineno, f"{exc.args[0]}: missing field"))
        except (TypeError, ValueError) as exc:
            issues.append((lineno, f"ids: {exc}"))
    if issues:
        raise ParseError(issues[0][0], f"{path}: {issues[0][1]}", issues)
    return out


def token_corpus_layout(records: Sequence[TokenRecord]) -> Tuple[Optional[str], Optional[bool]]:
    """
    @brief The (ordering, coords_first) shared by every record; None entries when the file does not say.
    @throws DataError if records were encoded with different layouts
    """
    layouts = {(r.ordering, r.coords_first) for r in records}
    if len(layouts) > 1:
        raise DataError(f"token corpus mixes encoding layouts: {sorted(layouts, key=str)}")
    return next(iter(layouts)) if layouts else (None, None)


def is_token_corpus(path: PathLike) -> bool:
    """@brief True when the first non-empty line looks like a token record."""
    for _, line in _read_lines(path)[:1]:
        try:
            data = json.loads(line)
        except json.JSONDecodeError:
            return False
        return isinstance(data, dict) and "ids" in data and "sites" not in data
    return False


# ---------- generated samples ----------

@dataclass
class GeneratedSample:
    """
    @class GeneratedSample
    @brief One generation outcome: the tokens, the decoded record (None when decoding failed) and flags.
    """

    index: int
    seed: int
    targets: Dict[str, Any]
    tokens: Tuple[int, ...]
    record: Optional[CrystalRecord] = None
    grammar_valid: bool = False
    charge_neutral: bool = False
    error: Optional[str] = None
    wall_time: float = 0.0

    @property
    def crystal(self):
        return self.record.crystal if self.record is not None else None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = self.record.to_dict() if self.record is not None else {"id": f"gen-{self.index:06d}"}
        out["generation"] = {
            "index": self.index,
            "seed": self.seed,
            "targets": dict(self.targets),
            "tokens": list(self.tokens),
            "grammar_valid": self.grammar_valid,
            "charge_neutral": self.charge_neutral,
            "error": self.error,
            "wall_time": self.wall_time,
        }
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any], tables: Optional[ElementTables] = None) -> "GeneratedSample":
        data = dict(data)
        gen = data.pop("generation", None)
        if not isinstance(gen, dict):
            raise DataError("generation: missing field")
        record = CrystalRecord.from_dict(data, tables) if "sites" in data else None
        return cls(
            index=int(gen.get("index", 0)),
            seed=int(gen.get("seed", 0)),
            targets=dict(gen.get("targets") or {}),
            tokens=tuple(int(t) for t in gen.get("tokens") or ()),
            record=record,
            grammar_valid=bool(gen.get("grammar_valid", record is not None)),
            charge_neutral=bool(gen.get("charge_neutral", False)),
            error=gen.get("error"),
            wall_time=float(gen.get("wall_time") or 0.0),
        )


def save_generated(samples: Iterable[GeneratedSample], path: PathLike) -> None:
    atomic_write_lines(path, (json.dumps(s.to_dict()) for s in samples))


def load_generated(path: PathLike, tables: Optional[ElementTables] = None) -> List[GeneratedSample]:
    """
    @throws ParseError listing malformed lines
    @throws EmptyCorpus if the file holds no samples
    """
    tables = tables or default_tables()
    lines = _read_lines(path)
    if not lines:
        raise EmptyCorpus(f"{path}: generated set is empty")
    out, issues = [], []
    for lineno, line in lines:
        try:
            out.append(GeneratedSample.from_dict(json.loads(line), tables))
        except json.JSONDecodeError as exc:
            issues.append((lineno, f"invalid JSON: {exc.msg}"))
        except DataError as exc:
            issues.append((lineno, str(exc)))
    if issues:
        raise ParseError(issues[0][0], f"{path}: {issues[0][1]}", issues)
    return out
