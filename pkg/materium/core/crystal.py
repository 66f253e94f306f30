"""
@file crystal.py
@brief Geometry and chemistry of periodic crystals.

@details
Lattice conversions, cell volume, density, charge balance, Niggli reduction of a crystal and
canonical fingerprints used for uniqueness/novelty.

Conventions:
- Lattice matrix rows are the lattice vectors; l1 lies along x and l2 in the xy-plane.
- Cartesian positions are `frac @ L` (row-vector form of r_cart = L · r_frac).
- Fractional coordinates are wrapped into [0, 1); values within 1e-9 of 1.0 wrap to 0.0.

All functions are pure.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .elements import ElementTables, MAX_ATOMIC_NUMBER
from .errors import DataError, DegenerateCell, UnknownElement
from .niggli import metric_to_params, reduce_metric

LatticeMatrix = np.ndarray
Formula = List[Tuple[str, int]]

AMU_TO_G = 1.66053906660e-24
ANGSTROM3_TO_CM3 = 1e-24
WRAP_TOL = 1e-9


def wrap_frac(value: float) -> float:
    """@brief Reduce a coordinate mod 1 into [0, 1); values within 1e-9 of 1.0 become 0.0."""
    r = float(value) % 1.0
    if r >= 1.0 - WRAP_TOL:
        r = 0.0
    return r


def _cos_deg(angle: float) -> float:
    c = math.cos(math.radians(angle))
    return 0.0 if abs(c) < 1e-15 else c


@dataclass(frozen=True)
class LatticeParams:
    """
    @class LatticeParams
    @brief a, b, c in Å and alpha, beta, gamma in degrees.
    @throws DataError on non-positive lengths or angles outside (0, 180)
    @throws DegenerateCell if the angles do not admit a cell of positive volume
    """

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if not all(math.isfinite(v) for v in values):
            raise DataError(f"non-finite lattice parameter in {values}")
        if min(self.a, self.b, self.c) <= 0:
            raise DataError(f"lattice lengths must be positive, got {values[:3]}")
        for angle in (self.alpha, self.beta, self.gamma):
            if not 0.0 < angle < 180.0:
                raise DataError(f"lattice angles must be in (0, 180), got {values[3:]}")
        if gram_determinant(self.alpha, self.beta, self.gamma) <= 0.0:
            raise DegenerateCell(f"angles {values[3:]} give a cell of non-positive volume")

    def as_tuple(self) -> Tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.c, self.alpha, self.beta, self.gamma)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "LatticeParams":
        if len(values) != 6:
            raise DataError(f"lattice needs 6 numbers, got {len(values)}")
        return cls(*(float(v) for v in values))


def gram_determinant(alpha: float, beta: float, gamma: float) -> float:
    """@brief 1 − cos²α − cos²β − cos²γ + 2 cosα cosβ cosγ (squared volume of the unit-edge cell)."""
    ca, cb, cg = _cos_deg(alpha), _cos_deg(beta), _cos_deg(gamma)
    return 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg


@dataclass(frozen=True)
class Site:
    """
    @class Site
    @brief One atom: element symbol, signed oxidation state, fractional coordinates (wrapped on construction).
    """

    element: str
    oxidation_state: int
    frac: Tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.frac) != 3:
            raise DataError(f"site needs 3 fractional coordinates, got {len(self.frac)}")
        if not all(math.isfinite(float(v)) for v in self.frac):
            raise DataError(f"non-finite coordinate in {self.frac}")
        object.__setattr__(self, "frac", tuple(wrap_frac(v) for v in self.frac))
        object.__setattr__(self, "oxidation_state", int(self.oxidation_state))


@dataclass(frozen=True)
class Crystal:
    """
    @class Crystal
    @brief Lattice parameters plus an ordered list of sites (N ≥ 1).
    """

    lattice: LatticeParams
    sites: Tuple[Site, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        if len(self.sites) < 1:
            raise DataError("a crystal needs at least one site")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def elements(self) -> List[str]:
        return [s.element for s in self.sites]

    def frac_coords(self) -> np.ndarray:
        return np.array([s.frac for s in self.sites], dtype=float)


def validate_crystal(c: Crystal, tables: ElementTables) -> None:
    """
    @brief Check every site against the element tables.
    @throws UnknownElement for elements outside 1..103 or missing from the table
    @throws DataError for an oxidation state outside the element's allowed set
    """
    for idx, site in enumerate(c.sites):
        info = tables.info(site.element)
        if not 1 <= info.atomic_number <= MAX_ATOMIC_NUMBER:
            raise UnknownElement(f"site {idx}: atomic number {info.atomic_number} out of 1..{MAX_ATOMIC_NUMBER}")
        if site.oxidation_state != 0 and site.oxidation_state not in info.oxidation_states:
            raise DataError(f"site {idx}: oxidation state {site.oxidation_state:+d} not allowed for {site.element}")


# ---------- lattice geometry ----------

def lattice_matrix(p: LatticeParams) -> LatticeMatrix:
    """
    @brief Lattice matrix with rows l1, l2, l3 (l1 ∥ x, l2 in the xy-plane).
    @throws DegenerateCell if the parameters give a non-positive volume
    """
    ca, cb, cg = _cos_deg(p.alpha), _cos_deg(p.beta), _cos_deg(p.gamma)
    sg = math.sin(math.radians(p.gamma))
    cx = cb
    cy = (ca - cb * cg) / sg
    cz2 = 1.0 - cx * cx - cy * cy
    if cz2 <= 0.0:
        raise DegenerateCell(f"degenerate cell {p.as_tuple()}")
    return np.array([
        [p.a, 0.0, 0.0],
        [p.b * cg, p.b * sg, 0.0],
        [p.c * cx, p.c * cy, p.c * math.sqrt(cz2)],
    ])


def lattice_params(m: LatticeMatrix) -> LatticeParams:
    """@brief Extract the six parameters from a lattice matrix."""
    m = np.asarray(m, dtype=float)
    return LatticeParams(*metric_to_params(m @ m.T))


def cell_volume(m: LatticeMatrix) -> float:
    return float(abs(np.linalg.det(np.asarray(m, dtype=float))))


def frac_to_cart(m: LatticeMatrix, frac) -> np.ndarray:
    """@brief Cartesian position(s) in Å for one (3,) or many (N, 3) fractional coordinates."""
    return np.asarray(frac, dtype=float) @ np.asarray(m, dtype=float)


def cart_to_frac(m: LatticeMatrix, cart) -> np.ndarray:
    return np.asarray(cart, dtype=float) @ np.linalg.inv(np.asarray(m, dtype=float))


# ---------- chemistry ----------

def _mass_lookup(masses: Union[Mapping[str, float], ElementTables]):
    if isinstance(masses, ElementTables):
        return masses.mass

    def lookup(symbol: str) -> float:
        try:
            return float(masses[symbol])
        except KeyError:
            raise UnknownElement(f"no mass for element {symbol!r}") from None

    return lookup


def density(c: Crystal, masses: Union[Mapping[str, float], ElementTables]) -> float:
    """
    @brief Mass density in g/cm³: Σmᵢ·u / V.
    @throws UnknownElement if an element is missing from @p masses
    """
    lookup = _mass_lookup(masses)
    total_mass = sum(lookup(s.element) for s in c.sites)
    volume = cell_volume(lattice_matrix(c.lattice))
    return total_mass * AMU_TO_G / (volume * ANGSTROM3_TO_CM3)


def net_charge(c: Crystal) -> int:
    return int(sum(s.oxidation_state for s in c.sites))


def composition(c: Crystal) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for s in c.sites:
        counts[s.element] = counts.get(s.element, 0) + 1
    return counts


def reduced_formula(c: Crystal) -> Formula:
    """@brief Element counts divided by their GCD, sorted alphabetically by symbol."""
    return normalize_formula(composition(c).items())


def normalize_formula(pairs: Iterable[Tuple[str, int]]) -> Formula:
    """@brief Merge, reduce by GCD and sort a list of (element, count) pairs."""
    counts: Dict[str, int] = {}
    for element, count in pairs:
        counts[element] = counts.get(element, 0) + int(count)
    if not counts:
        return []
    g = reduce(math.gcd, counts.values())
    return sorted(((e, n // g) for e, n in counts.items()), key=lambda t: t[0])


_FORMULA_TOKEN = re.compile(r"([A-Z][a-z]?)(\d*)")


def parse_formula(text: str) -> Formula:
    """
    @brief Parse a compact formula such as `Fe1O1` or `Ba2Cu3O7Y` into (element, count) pairs.
    @note Counts default to 1; the result keeps the order written (not reduced).
    @throws DataError on anything that is not a sequence of element/count groups
    """
    text = text.strip()
    pos = 0
    pairs: Formula = []
    for match in _FORMULA_TOKEN.finditer(text):
        if match.start() != pos:
            break
        pairs.append((match.group(1), int(match.group(2)) if match.group(2) else 1))
        pos = match.end()
    if pos != len(text) or not pairs:
        raise DataError(f"cannot parse formula {text!r}")
    if any(n < 1 for _, n in pairs):
        raise DataError(f"formula counts must be >= 1 in {text!r}")
    return pairs


def formula_string(pairs: Iterable[Tuple[str, int]]) -> str:
    return "".join(f"{e}{n}" for e, n in pairs)


# ---------- reduction and fingerprints ----------

def niggli_reduce_with_transform(p: LatticeParams, tol: float = 1e-5,
                                 max_steps: int = 1000) -> Tuple[LatticeParams, np.ndarray]:
    """
    @brief Niggli-reduce a lattice and return the integer basis change.
    @return (reduced params, T) where the reduced basis rows are `T @ lattice_matrix(p)`
    @throws NonConvergence if the reduction exceeds @p max_steps
    """
    m = lattice_matrix(p)
    e = tol * cell_volume(m) ** (1.0 / 3.0)
    G, T = reduce_metric(m @ m.T, e, max_steps)
    return LatticeParams(*metric_to_params(G)), T


def niggli_reduce(p: LatticeParams, tol: float = 1e-5, max_steps: int = 1000) -> LatticeParams:
    """
    @brief Niggli-reduced lattice parameters (same lattice, a ≤ b ≤ c).
    @throws NonConvergence if the reduction exceeds @p max_steps (default 1000)
    """
    return niggli_reduce_with_transform(p, tol, max_steps)[0]


def reduce_crystal(c: Crystal, tol: float = 1e-5) -> Crystal:
    """
    @brief Express a crystal in its Niggli-reduced basis; sites are re-expressed and wrapped into [0, 1).
    @note Inputs are assumed primitive; no primitive-cell search happens here.
    """
    reduced, T = niggli_reduce_with_transform(c.lattice, tol)
    inv_t = np.rint(np.linalg.inv(T))
    frac = c.frac_coords() @ inv_t
    sites = tuple(Site(s.element, s.oxidation_state, tuple(f)) for s, f in zip(c.sites, frac))
    return Crystal(reduced, sites)


def _quantize_sites(elements: Sequence[str], frac: np.ndarray, site_tol: float):
    n_bins = max(1, int(round(1.0 / site_tol)))
    q = np.rint((frac % 1.0) / site_tol).astype(np.int64) % n_bins
    return sorted((e, int(x), int(y), int(z)) for e, (x, y, z) in zip(elements, q))


def canonical_fingerprint(c: Crystal, site_tol: float = 1e-2, param_tol: float = 1e-2) -> str:
    """
    @brief Deterministic hash identifying a structure up to site order, common translation and noise.

    @details
    Built from the Niggli-reduced lattice parameters quantized on a relative (log) grid of width
    @p param_tol, the composition, and the sorted quantized sites. Translation is removed by moving an
    anchor site to the origin; the anchor is chosen among the sites of the smallest element so that the
    resulting sorted site list is lexicographically smallest.

    @param site_tol quantization step for fractional coordinates
    @param param_tol relative quantization step for lattice parameters
    @return hex digest string
    """
    reduced = reduce_crystal(c)
    step = math.log1p(param_tol)
    params_q = tuple(int(round(math.log(v) / step)) for v in reduced.lattice.as_tuple())

    elements = reduced.elements()
    frac = reduced.frac_coords()
    anchor_element = min(elements)
    best = None
    for idx, e in enumerate(elements):
        if e != anchor_element:
            continue
        candidate = _quantize_sites(elements, frac - frac[idx], site_tol)
        if best is None or candidate < best:
            best = candidate

    comp = sorted(composition(reduced).items())
    text = repr((params_q, comp, best))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
