"""
@file toy.py
@brief Synthetic charge-neutral toy corpus for desk-scale training and tests.

@details
Compositions are drawn from a small palette of ions with fixed oxidation states (binary and ternary
ionic compounds) plus a few metals at state 0. Lattice lengths and angles lie inside the tokenizer's
fixed ranges. When a density range is requested, each cell is scaled so that its true density hits a
target drawn uniformly from that range. Every record carries its computed density, composition HHI
and reduced formula.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.crystal import Crystal, LatticeParams, Site, density
from ..core.elements import ElementTables, default_tables
from ..core.errors import ConfigError
from ..evals.hhi import hhi_of_crystal
from ..tokenizer.quantize import LatticeRanges
from .records import CrystalRecord, record_from_crystal

logger = logging.getLogger(__name__)

CATIONS: Tuple[Tuple[str, int], ...] = (
    ("Li", 1), ("Na", 1), ("K", 1), ("Mg", 2), ("Ca", 2), ("Sr", 2), ("Ba", 2), ("Zn", 2),
    ("Fe", 2), ("Fe", 3), ("Al", 3), ("Y", 3), ("Gd", 3), ("Ti", 4),
)
ANIONS: Tuple[Tuple[str, int], ...] = (("O", -2), ("S", -2), ("F", -1), ("Cl", -1), ("N", -3))
METALS: Tuple[str, ...] = ("Cu", "Fe", "Al", "W", "Mo")

ANGLE_RANGE = (75.0, 105.0)
MAX_TRIES = 200


@dataclass(frozen=True)
class ToySpec:
    """
    @class ToySpec
    @param n number of records
    @param seed RNG seed (the corpus is a pure function of the spec)
    @param max_sites upper bound on sites per cell
    @param density_range optional (low, high) g/cm³ targets
    """

    n: int = 32
    seed: int = 0
    max_sites: int = 8
    density_range: Optional[Tuple[float, float]] = None

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"toy corpus size must be >= 1, got {self.n}")
        if not 1 <= self.max_sites <= 20:
            raise ConfigError(f"max_sites must be in 1..20, got {self.max_sites}")
        if self.density_range is not None:
            lo, hi = self.density_range
            if not 0 < lo < hi:
                raise ConfigError(f"density_range must satisfy 0 < low < high, got {self.density_range}")


def _composition(rng: np.random.Generator, max_sites: int) -> List[Tuple[str, int]]:
    """@return one (element, state) entry per site."""
    for _ in range(MAX_TRIES):
        kind = rng.choice(3, p=[0.6, 0.25, 0.15])
        if kind == 0:
            (c, q), (a, p) = CATIONS[rng.integers(len(CATIONS))], ANIONS[rng.integers(len(ANIONS))]
            g = math.gcd(q, -p)
            nc, na = -p // g, q // g
            unit = nc + na
            if unit > max_sites:
                continue
            m = int(rng.integers(1, max_sites // unit + 1))
            return [(c, q)] * (nc * m) + [(a, p)] * (na * m)
        if kind == 1:
            i, j = rng.choice(len(CATIONS), size=2, replace=False)
            (c1, q1), (c2, q2) = CATIONS[i], CATIONS[j]
            if c1 == c2:
                continue
            a, p = ANIONS[rng.integers(len(ANIONS))]
            n1, n2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            charge = n1 * q1 + n2 * q2
            m = -p // math.gcd(charge, -p)
            total = m * (n1 + n2) + m * charge // -p
            if total > max_sites:
                continue
            return [(c1, q1)] * (m * n1) + [(c2, q2)] * (m * n2) + [(a, p)] * (m * charge // -p)
        metal = METALS[rng.integers(len(METALS))]
        return [(metal, 0)] * int(rng.integers(1, min(4, max_sites) + 1))
    return [(METALS[0], 0)]


def _lattice(rng: np.random.Generator, ranges: LatticeRanges) -> List[float]:
    lengths = []
    for name in ("a", "b", "c"):
        lo, hi = ranges.range_of(name)
        margin = 0.05 * (hi - lo)
        lengths.append(float(rng.uniform(lo + margin, hi - margin)))
    angles = [float(rng.uniform(*ANGLE_RANGE)) for _ in range(3)]
    return lengths + angles


def _inside(values: Sequence[float], ranges: LatticeRanges) -> bool:
    return all(lo <= v <= hi for v, (lo, hi) in zip(values, (ranges.a, ranges.b, ranges.c)))


def synth_toy_corpus(spec: ToySpec = ToySpec(), ranges: LatticeRanges = LatticeRanges(),
                     tables: Optional[ElementTables] = None) -> List[CrystalRecord]:
    """
    @brief Deterministic random charge-neutral crystals with true density and composition HHI.
    @throws ConfigError for an invalid @p spec
    """
    spec.validate()
    tables = tables or default_tables()
    rng = np.random.default_rng(spec.seed)
    records: List[CrystalRecord] = []
    while len(records) < spec.n:
        species = _composition(rng, spec.max_sites)
        frac = rng.random((len(species), 3))
        params = _lattice(rng, ranges)
        sites = tuple(Site(e, s, tuple(f)) for (e, s), f in zip(species, frac))
        crystal = Crystal(LatticeParams(*params), sites)

        if spec.density_range is not None:
            target = float(rng.uniform(*spec.density_range))
            scale = (density(crystal, tables) / target) ** (1.0 / 3.0)
            lengths = [v * scale for v in params[:3]]
            if not _inside(lengths, ranges):
                continue
            crystal = Crystal(LatticeParams(*lengths, *params[3:]), sites)

        props = {"density": density(crystal, tables), "hhi": hhi_of_crystal(crystal, tables)}
        records.append(record_from_crystal(f"toy-{spec.seed}-{len(records):06d}", crystal, props))
    logger.debug("synthesized %d toy records (seed %d)", len(records), spec.seed)
    return records
