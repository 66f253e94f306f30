"""
@file grammar.py
@brief State machine for the material sequence grammar.

@details
    SOS · ATOMS · atom^N · LATTICE · bin^6 · EOS        (N ≥ 1)
    atom = elem|oxi · bin · bin · bin                    (default)
    atom = bin · bin · bin · elem|oxi                    (coords_first)

The same machine validates sequences in the decoder and builds the allowed-token mask in the
constrained sampler, so both always agree on what is legal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.errors import GrammarError
from .vocab import ATOMS, BIN, ELEMENT, EOS, LATTICE, SOS, Vocabulary

N_LATTICE = 6

EXPECT_SOS = "expect-SOS"
EXPECT_ATOMS = "expect-ATOMS"
EXPECT_ATOM = "expect-atom"
EXPECT_ATOM_OR_LATTICE = "expect-atom-or-LATTICE"
IN_ATOM = "in-atom"
LATTICE_BINS = "expect-lattice-bin"
EXPECT_EOS = "expect-EOS"
DONE = "done"


@dataclass
class GrammarState:
    """
    @class GrammarState
    @brief Tracks the sequence phase while tokens are consumed.

    @param coords_first atom layout `bin bin bin elem` instead of `elem bin bin bin`
    @param max_atoms when set, no new atom may start once this many are complete (sampler only)
    """

    coords_first: bool = False
    max_atoms: Optional[int] = None
    phase: str = EXPECT_SOS
    atom_pos: int = 0
    lattice_left: int = N_LATTICE
    n_atoms: int = 0
    position: int = 0

    def _atom_template(self):
        return (BIN, BIN, BIN, ELEMENT) if self.coords_first else (ELEMENT, BIN, BIN, BIN)

    @property
    def done(self) -> bool:
        return self.phase == DONE

    def expected(self) -> str:
        """@return human readable name of the legal token class(es) at the current position."""
        if self.phase == EXPECT_SOS:
            return "[SOS]"
        if self.phase == EXPECT_ATOMS:
            return "[ATOMS]"
        if self.phase == EXPECT_ATOM:
            return self._atom_template()[0]
        if self.phase == EXPECT_ATOM_OR_LATTICE:
            if self.max_atoms is not None and self.n_atoms >= self.max_atoms:
                return "[LATTICE]"
            return f"{self._atom_template()[0]} or [LATTICE]"
        if self.phase == IN_ATOM:
            return self._atom_template()[self.atom_pos]
        if self.phase == LATTICE_BINS:
            return BIN
        if self.phase == EXPECT_EOS:
            return "[EOS]"
        return "end of sequence"

    def allowed_mask(self, vocab: Vocabulary) -> np.ndarray:
        """@return boolean mask over the vocabulary admitting exactly the grammar-legal tokens."""
        mask = np.zeros(vocab.total_size, dtype=bool)
        phase = self.phase
        first = self._atom_template()[0]
        if phase == EXPECT_SOS:
            mask[SOS] = True
        elif phase == EXPECT_ATOMS:
            mask[ATOMS] = True
        elif phase == EXPECT_ATOM:
            mask |= vocab.class_mask(first)
        elif phase == EXPECT_ATOM_OR_LATTICE:
            if self.max_atoms is None or self.n_atoms < self.max_atoms:
                mask |= vocab.class_mask(first)
            mask[LATTICE] = True
        elif phase == IN_ATOM:
            mask |= vocab.class_mask(self._atom_template()[self.atom_pos])
        elif phase == LATTICE_BINS:
            mask |= vocab.class_mask(BIN)
        elif phase == EXPECT_EOS:
            mask[EOS] = True
        return mask

    def accepts(self, token_id: int, vocab: Vocabulary) -> bool:
        cls = vocab.token_class(int(token_id))
        if cls is None:
            return False
        return bool(self._legal(token_id, cls))

    def _legal(self, token_id: int, cls: str) -> bool:
        phase = self.phase
        first = self._atom_template()[0]
        if phase == EXPECT_SOS:
            return token_id == SOS
        if phase == EXPECT_ATOMS:
            return token_id == ATOMS
        if phase == EXPECT_ATOM:
            return cls == first
        if phase == EXPECT_ATOM_OR_LATTICE:
            if token_id == LATTICE:
                return True
            return cls == first and (self.max_atoms is None or self.n_atoms < self.max_atoms)
        if phase == IN_ATOM:
            return cls == self._atom_template()[self.atom_pos]
        if phase == LATTICE_BINS:
            return cls == BIN
        if phase == EXPECT_EOS:
            return token_id == EOS
        return False

    def advance(self, token_id: int, vocab: Vocabulary) -> None:
        """
        @brief Consume one token.
        @throws GrammarError(position, expected) if the token is not legal here
        """
        token_id = int(token_id)
        if not self.accepts(token_id, vocab):
            raise GrammarError(self.position, self.expected(), vocab.name(token_id))

        phase = self.phase
        if phase == EXPECT_SOS:
            self.phase = EXPECT_ATOMS
        elif phase == EXPECT_ATOMS:
            self.phase = EXPECT_ATOM
        elif phase in (EXPECT_ATOM, EXPECT_ATOM_OR_LATTICE):
            if token_id == LATTICE:
                self.phase = LATTICE_BINS
                self.lattice_left = N_LATTICE
            else:
                self.phase = IN_ATOM
                self.atom_pos = 1
        elif phase == IN_ATOM:
            self.atom_pos += 1
            if self.atom_pos == 4:
                self.n_atoms += 1
                self.atom_pos = 0
                self.phase = EXPECT_ATOM_OR_LATTICE
        elif phase == LATTICE_BINS:
            self.lattice_left -= 1
            if self.lattice_left == 0:
                self.phase = EXPECT_EOS
        elif phase == EXPECT_EOS:
            self.phase = DONE
        self.position += 1
