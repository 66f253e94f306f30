"""
@file vocab.py
@brief Token vocabulary: special tokens, 1024 shared value bins and element|oxidation tokens.

@details
Layout (dense ids):
- 0..3        : [SOS], [EOS], [ATOMS], [LATTICE]
- 4..1027     : [BIN_0000] .. [BIN_1023]  (shared by x, y, z and all six lattice parameters)
- 1028..      : [El|±k] sorted by (atomic number, oxidation state); every element carries state 0

Serialized form is a versioned text file, one token per line as `index<TAB>token-name`, preceded by
a `#materium-vocab v1` header line.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.elements import ElementTables, default_tables
from ..core.errors import DataError, EmptyTable, UnknownElementOxi
from ..core.logger import atomic_write_text

logger = logging.getLogger(__name__)

N_BINS = 1024
SPECIALS = ("SOS", "EOS", "ATOMS", "LATTICE")
SOS, EOS, ATOMS, LATTICE = 0, 1, 2, 3
BIN_OFFSET = len(SPECIALS)
VOCAB_HEADER = "#materium-vocab v1"

# token classes
SPECIAL, BIN, ELEMENT = "special", "bin", "element"


def oxi_label(state: int) -> str:
    return "0" if state == 0 else f"{state:+d}"


def element_token_name(symbol: str, state: int) -> str:
    return f"[{symbol}|{oxi_label(state)}]"


def bin_token_name(index: int) -> str:
    return f"[BIN_{index:04d}]"


@dataclass(frozen=True)
class Vocabulary:
    """
    @class Vocabulary
    @brief Immutable bidirectional token map; shareable across threads.
    """

    names: Tuple[str, ...]
    element_oxi: Tuple[Tuple[str, int], ...]
    atomic_numbers: Tuple[int, ...]
    _index: Dict[str, int] = field(default_factory=dict, compare=False, repr=False)
    _elem_index: Dict[Tuple[str, int], int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})
        elem_offset = BIN_OFFSET + N_BINS
        object.__setattr__(self, "_elem_index",
                           {pair: elem_offset + k for k, pair in enumerate(self.element_oxi)})

        classes = np.empty(len(self.names), dtype=object)
        classes[:BIN_OFFSET] = SPECIAL
        classes[BIN_OFFSET:elem_offset] = BIN
        classes[elem_offset:] = ELEMENT
        object.__setattr__(self, "_classes", classes)
        masks = {cls: np.asarray(classes == cls) for cls in (SPECIAL, BIN, ELEMENT)}
        object.__setattr__(self, "_class_masks", masks)

    # ---------- sizes ----------

    @property
    def total_size(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    @property
    def elem_offset(self) -> int:
        return BIN_OFFSET + N_BINS

    # ---------- lookups ----------

    def special_id(self, name: str) -> int:
        return SPECIALS.index(name)

    def bin_id(self, index: int) -> int:
        if not 0 <= index < N_BINS:
            raise DataError(f"bin index {index} out of 0..{N_BINS - 1}")
        return BIN_OFFSET + int(index)

    def bin_index(self, token_id: int) -> int:
        return int(token_id) - BIN_OFFSET

    def element_id(self, symbol: str, state: int) -> int:
        try:
            return self._elem_index[(symbol, int(state))]
        except KeyError:
            raise UnknownElementOxi(f"{element_token_name(symbol, state)} not in vocabulary") from None

    def element_of(self, token_id: int) -> Tuple[str, int]:
        return self.element_oxi[int(token_id) - self.elem_offset]

    def atomic_number_of(self, token_id: int) -> int:
        return self.atomic_numbers[int(token_id) - self.elem_offset]

    def token_class(self, token_id: int) -> Optional[str]:
        if 0 <= token_id < len(self.names):
            return self._classes[token_id]
        return None

    def class_mask(self, cls: str) -> np.ndarray:
        """@return boolean mask over ids for one token class (read-only view)."""
        return self._class_masks[cls]

    def name(self, token_id: int) -> str:
        if 0 <= token_id < len(self.names):
            return self.names[token_id]
        return f"<invalid:{token_id}>"

    def id_of(self, name: str) -> int:
        return self._index[name]

    def describe(self, ids: Sequence[int]) -> List[str]:
        return [self.name(int(i)) for i in ids]

    # ---------- persistence ----------

    def to_text(self) -> str:
        lines = [VOCAB_HEADER]
        lines.extend(f"{i}\t{n}" for i, n in enumerate(self.names))
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: Union[str, Path]) -> None:
        atomic_write_text(path, self.to_text())

    @classmethod
    def from_text(cls, text: str, tables: Optional[ElementTables] = None) -> "Vocabulary":
        tables = tables or default_tables()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != VOCAB_HEADER:
            raise DataError(f"vocabulary file must start with {VOCAB_HEADER!r}")
        names: List[str] = []
        for ln in lines[1:]:
            idx, name = ln.split("\t")
            if int(idx) != len(names):
                raise DataError(f"vocabulary ids must be dense, got {idx} at row {len(names)}")
            names.append(name)
        pairs = []
        for name in names[BIN_OFFSET + N_BINS:]:
            symbol, state = name.strip("[]").split("|")
            pairs.append((symbol, int(state)))
        vocab = _assemble(pairs, tables)
        if vocab.names != tuple(names):
            raise DataError("vocabulary file does not follow the canonical layout")
        return vocab

    @classmethod
    def load(cls, path: Union[str, Path], tables: Optional[ElementTables] = None) -> "Vocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), tables)


def _assemble(pairs: Sequence[Tuple[str, int]], tables: ElementTables) -> Vocabulary:
    names = [f"[{s}]" for s in SPECIALS]
    names.extend(bin_token_name(i) for i in range(N_BINS))
    names.extend(element_token_name(s, k) for s, k in pairs)
    numbers = tuple(tables.atomic_number(s) for s, _ in pairs)
    return Vocabulary(tuple(names), tuple(pairs), numbers)


def build_vocab(oxidation_table: Mapping[str, Sequence[int]],
                tables: Optional[ElementTables] = None) -> Vocabulary:
    """
    @brief Deterministic vocabulary from an element -> allowed oxidation states table.
    @param oxidation_table symbol -> allowed nonzero states (0 is always added)
    @param tables element tables used to resolve atomic numbers (bundled by default)
    @throws EmptyTable if @p oxidation_table is empty
    """
    if not oxidation_table:
        raise EmptyTable("oxidation table is empty")
    tables = tables or default_tables()
    pairs = set()
    for symbol, states in oxidation_table.items():
        tables.info(symbol)
        pairs.add((symbol, 0))
        pairs.update((symbol, int(s)) for s in states)
    ordered = sorted(pairs, key=lambda p: (tables.atomic_number(p[0]), p[1]))
    vocab = _assemble(ordered, tables)
    logger.debug("built vocabulary with %d tokens (%d element tokens)", vocab.total_size, len(ordered))
    return vocab


def default_vocab(tables: Optional[ElementTables] = None) -> Vocabulary:
    tables = tables or default_tables()
    return build_vocab(tables.oxidation_table(), tables)
