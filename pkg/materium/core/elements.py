"""
@file elements.py
@brief Element data tables: atomic numbers, masses, allowed oxidation states and HHI scores.

@details
Tables are bundled as a versioned CSV asset (`materium/data/tables/elements.csv`) with a JSON sidecar
holding provenance. The header is fixed:

    symbol,atomic_number,mass_u,oxidation_states,hhi

`oxidation_states` is semicolon-joined in preference order; state 0 is implicit. `hhi` may be blank.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError, EmptyTable, UnknownElement

logger = logging.getLogger(__name__)

TABLES_DIR = Path(__file__).resolve().parent.parent / "data" / "tables"
DEFAULT_TABLE = TABLES_DIR / "elements.csv"
EXPECTED_COLUMNS = ["symbol", "atomic_number", "mass_u", "oxidation_states", "hhi"]
MAX_ATOMIC_NUMBER = 103


@dataclass(frozen=True)
class ElementInfo:
    symbol: str
    atomic_number: int
    mass_u: float
    oxidation_states: Tuple[int, ...]
    hhi: Optional[float] = None


@dataclass
class ElementTables:
    """
    @class ElementTables
    @brief Immutable lookup over the per-element data.
    """

    elements: Tuple[ElementInfo, ...]
    provenance: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.elements:
            raise EmptyTable("element table has no rows")
        self._by_symbol = {e.symbol: e for e in self.elements}
        self._by_number = {e.atomic_number: e for e in self.elements}
        if len(self._by_symbol) != len(self.elements):
            raise DataError("element symbols are not unique")

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._by_symbol

    def __len__(self) -> int:
        return len(self.elements)

    def info(self, element: Union[str, int]) -> ElementInfo:
        try:
            if isinstance(element, (int, np.integer)):
                return self._by_number[int(element)]
            return self._by_symbol[element]
        except KeyError:
            raise UnknownElement(f"unknown element {element!r}") from None

    def atomic_number(self, symbol: str) -> int:
        return self.info(symbol).atomic_number

    def symbol(self, number: int) -> str:
        return self.info(int(number)).symbol

    def mass(self, symbol: str) -> float:
        return self.info(symbol).mass_u

    def masses(self) -> Dict[str, float]:
        return {e.symbol: e.mass_u for e in self.elements}

    def hhi(self, symbol: str) -> float:
        value = self.info(symbol).hhi
        if value is None:
            raise UnknownElement(f"no HHI value tabulated for {symbol}")
        return value

    def hhi_table(self) -> Dict[str, float]:
        return {e.symbol: e.hhi for e in self.elements if e.hhi is not None}

    def oxidation_table(self) -> Dict[str, Tuple[int, ...]]:
        """@return symbol -> allowed (nonzero) oxidation states in preference order."""
        return {e.symbol: e.oxidation_states for e in self.elements}

    def allowed_states(self, symbol: str) -> Tuple[int, ...]:
        """@return allowed states including the neutral state 0."""
        return tuple(self.info(symbol).oxidation_states) + (0,)

    def subset(self, symbols) -> "ElementTables":
        keep = set(symbols)
        return ElementTables(tuple(e for e in self.elements if e.symbol in keep), dict(self.provenance))


def _parse_states(raw) -> Tuple[int, ...]:
    if raw is None or (isinstance(raw, float) and np.isnan(raw)):
        return ()
    text = str(raw).strip()
    if not text:
        return ()
    return tuple(int(s) for s in text.split(";"))


def load_element_tables(path: Union[str, Path, None] = None) -> ElementTables:
    """
    @brief Load element tables from CSV (and its `.meta.json` sidecar if present).
    @param path CSV path; defaults to the bundled table.
    @return ElementTables
    @throws EmptyTable if the CSV has no rows
    @throws DataError on a malformed header or values
    """
    path = Path(path) if path is not None else DEFAULT_TABLE
    frame = pd.read_csv(path, dtype={"symbol": str, "oxidation_states": str}, keep_default_na=False)
    if list(frame.columns) != EXPECTED_COLUMNS:
        raise DataError(f"{path}: header must be {','.join(EXPECTED_COLUMNS)}, got {','.join(frame.columns)}")
    if frame.empty:
        raise EmptyTable(f"{path}: no rows")

    rows = []
    for row in frame.itertuples(index=False):
        mass = float(row.mass_u)
        if mass <= 0:
            raise DataError(f"{path}: non-positive mass for {row.symbol}")
        hhi = None if str(row.hhi).strip() == "" else float(row.hhi)
        rows.append(ElementInfo(
            symbol=row.symbol.strip(),
            atomic_number=int(row.atomic_number),
            mass_u=mass,
            oxidation_states=_parse_states(row.oxidation_states),
            hhi=hhi,
        ))

    provenance: Dict[str, str] = {}
    meta_path = path.with_suffix(".meta.json")
    if meta_path.exists():
        with open(meta_path) as f:
            meta = json.load(f)
        provenance = {k: str(v) for k, v in meta.get("provenance", {}).items()}
        provenance["version"] = str(meta.get("version", ""))
    logger.debug("loaded %d elements from %s", len(rows), path)
    return ElementTables(tuple(rows), provenance)


@lru_cache(maxsize=1)
def default_tables() -> ElementTables:
    """@brief The bundled tables, loaded once per process."""
    return load_element_tables()
