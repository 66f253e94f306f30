"""
@file oxidation.py
@brief Charge-balancing heuristic that assigns oxidation states to raw structures.

@details
Every distinct element whose state is unknown receives one state from its allowed set. Combinations
are searched to minimize |net charge|, counting the charge of sites whose state is already given;
ties go to the combination with the smallest total preference rank (position in the table's state
list, most common first). When no combination is neutral the unknown sites get state 0 and the given
states are left as they are.
"""

from __future__ import annotations

import itertools
import logging
from typing import Dict, List, Optional, Sequence

from ..core.elements import ElementTables, default_tables

logger = logging.getLogger(__name__)

MAX_COMBINATIONS = 200_000


def assign_oxidation_states(elements: Sequence[str], tables: Optional[ElementTables] = None,
                            given: Optional[Sequence[Optional[int]]] = None) -> List[int]:
    """
    @brief Pick charge-balancing oxidation states for a list of site elements.
    @param elements element symbol per site
    @param given optional state per site; None entries are searched, the others are kept as is
    @return one oxidation state per site
    """
    tables = tables or default_tables()
    given = list(given) if given is not None else [None] * len(elements)
    fixed_charge = sum(int(s) for s in given if s is not None)
    counts: Dict[str, int] = {}
    for e, s in zip(elements, given):
        if s is None:
            counts[e] = counts.get(e, 0) + 1
    symbols = sorted(counts)
    choices = [tables.info(s).oxidation_states or (0,) for s in symbols]

    n_combos = 1
    for c in choices:
        n_combos *= len(c)
    if n_combos > MAX_COMBINATIONS:
        logger.warning("oxidation search space too large (%d combinations); using neutral states", n_combos)
        return _fill(elements, given, {})

    best = None
    for combo in itertools.product(*(range(len(c)) for c in choices)):
        charge = fixed_charge + sum(choices[k][i] * counts[s] for k, (s, i) in enumerate(zip(symbols, combo)))
        key = (abs(charge), sum(combo))
        if best is None or key < best[0]:
            best = (key, combo)
        if key == (0, 0):
            break

    (charge, _), combo = best
    if charge != 0:
        logger.debug("no charge-neutral assignment for %s", "".join(symbols) or "given states")
        return _fill(elements, given, {})
    return _fill(elements, given, {s: choices[k][i] for k, (s, i) in enumerate(zip(symbols, combo))})


def _fill(elements: Sequence[str], given: Sequence[Optional[int]], state_of: Dict[str, int]) -> List[int]:
    return [int(s) if s is not None else state_of.get(e, 0) for e, s in zip(elements, given)]
