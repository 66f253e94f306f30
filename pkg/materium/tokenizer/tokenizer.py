"""
@file tokenizer.py
@brief Bidirectional mapping between Crystal objects and token-id sequences.

@details
Sequence template (length 4N + 10):

    [SOS] [ATOMS] [El|oxi] [x] [y] [z] ... [LATTICE] [a] [b] [c] [alpha] [beta] [gamma] [EOS]

Crystals are Niggli-reduced before encoding, then sites are ordered by the chosen strategy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from ..core.crystal import Crystal, LatticeParams, Site, reduce_crystal
from ..core.elements import ElementTables, default_tables
from ..core.errors import DataError, GrammarError
from .grammar import EXPECT_ATOM, EXPECT_ATOM_OR_LATTICE, IN_ATOM, LATTICE_BINS, GrammarState
from .ordering import OrderingStrategy, order_sites
from .quantize import (LATTICE_NAMES, LatticeRanges, dequantize_frac, dequantize_lattice_param,
                       quantize_frac, quantize_lattice_param)
from .vocab import ATOMS, EOS, LATTICE, SOS, Vocabulary

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TokenSequence:
    """
    @class TokenSequence
    @brief Encoded material; @p clamped names the lattice parameters that fell outside their range.
    """

    ids: Tuple[int, ...]
    clamped: Tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.ids)


def sequence_length(n_sites: int) -> int:
    return 4 * n_sites + 10


def encode(c: Crystal, v: Vocabulary, s: OrderingStrategy, r: LatticeRanges, *,
           coords_first: bool = False, reduce: bool = True, key: str = "",
           tables: Optional[ElementTables] = None) -> TokenSequence:
    """
    @brief Encode a crystal into a grammar-conformant token sequence.
    @param key material identifier (stabilises the Random ordering per material)
    @param reduce apply Niggli reduction first (on by default)
    @throws UnknownElementOxi if an (element, oxidation) pair is missing from @p v
    @throws OutOfRange for a fractional coordinate outside [0, 1)
    """
    tables = tables or default_tables()
    crystal = reduce_crystal(c) if reduce else c
    ids: List[int] = [SOS, ATOMS]
    for site in order_sites(crystal.sites, s, tables, key):
        elem = v.element_id(site.element, site.oxidation_state)
        coords = [v.bin_id(quantize_frac(x)) for x in site.frac]
        ids.extend(coords + [elem] if coords_first else [elem] + coords)
    ids.append(LATTICE)
    clamped = []
    for name, value in zip(LATTICE_NAMES, crystal.lattice.as_tuple()):
        b, was_clamped = quantize_lattice_param(name, value, r)
        if was_clamped:
            clamped.append(name)
        ids.append(v.bin_id(b))
    ids.append(EOS)
    if clamped:
        logger.debug("clamped lattice parameters %s for %s", clamped, key or "<material>")
    return TokenSequence(tuple(ids), tuple(clamped))


def decode(t, v: Vocabulary, r: LatticeRanges, *, coords_first: bool = False) -> Crystal:
    """
    @brief Decode a token sequence back into a crystal with bin-centre values.
    @param t TokenSequence or any iterable of ids
    @throws GrammarError(position, expected) for any malformed sequence
    """
    ids = t.ids if isinstance(t, TokenSequence) else tuple(t)
    state = GrammarState(coords_first=coords_first)
    sites: List[Site] = []
    atom: List[int] = []
    lattice_bins: List[int] = []
    lattice_pos = 0

    for pos, raw in enumerate(ids):
        if state.done:
            raise GrammarError(pos, state.expected(), _name(raw, v))
        try:
            token = int(raw)
        except (TypeError, ValueError):
            raise GrammarError(pos, state.expected(), repr(raw)) from None
        before = state.phase
        state.advance(token, v)
        if token == LATTICE:
            lattice_pos = pos
        elif before in (EXPECT_ATOM, EXPECT_ATOM_OR_LATTICE):
            atom = [token]
        elif before == IN_ATOM:
            atom.append(token)
            if len(atom) == 4:
                sites.append(_site_from_atom(atom, v, coords_first))
        elif before == LATTICE_BINS:
            lattice_bins.append(v.bin_index(token))

    if not state.done:
        raise GrammarError(len(ids), state.expected(), "end of input")

    values = [dequantize_lattice_param(n, b, r) for n, b in zip(LATTICE_NAMES, lattice_bins)]
    try:
        lattice = LatticeParams(*values)
    except DataError as exc:
        raise GrammarError(lattice_pos, "lattice parameters describing a valid cell", str(exc)) from None
    return Crystal(lattice, tuple(sites))


def _name(raw, v: Vocabulary) -> str:
    try:
        return v.name(int(raw))
    except (TypeError, ValueError):
        return repr(raw)


def _site_from_atom(atom: Sequence[int], v: Vocabulary, coords_first: bool) -> Site:
    if coords_first:
        *coords, elem = atom
    else:
        elem, *coords = atom
    symbol, state = v.element_of(elem)
    frac = tuple(dequantize_frac(v.bin_index(b)) for b in coords)
    return Site(symbol, state, frac)


class CrystalTokenizer:
    """
    @class CrystalTokenizer
    @brief Bundles vocabulary, ordering strategy, ranges and atom layout for repeated encode/decode.
    """

    def __init__(self, vocab: Vocabulary, strategy: OrderingStrategy = OrderingStrategy("HighFirst"),
                 ranges: LatticeRanges = LatticeRanges(), coords_first: bool = False,
                 tables: Optional[ElementTables] = None) -> None:
        self.vocab = vocab
        self.strategy = strategy
        self.ranges = ranges
        self.coords_first = coords_first
        self.tables = tables or default_tables()

    def encode(self, c: Crystal, key: str = "") -> TokenSequence:
        return encode(c, self.vocab, self.strategy, self.ranges, coords_first=self.coords_first,
                      key=key, tables=self.tables)

    def decode(self, t) -> Crystal:
        return decode(t, self.vocab, self.ranges, coords_first=self.coords_first)

    def grammar(self, max_atoms: Optional[int] = None) -> GrammarState:
        return GrammarState(coords_first=self.coords_first, max_atoms=max_atoms)
