"""
@file records.py
@brief CrystalRecord: one corpus entry (structure + optional properties) and its JSON form.

@details
JSON schema of one line:

    {"id": "mp-19770",
     "lattice": [a, b, c, alpha, beta, gamma],
     "sites": [{"element": "Fe", "oxidation_state": 3, "frac": [0.0, 0.0, 0.0]}, ...],
     "properties": {"band_gap": 2.1, "magnetic_density": 0.05, "density": 5.2,
                    "space_group": 167, "hhi": 1500.0, "reduced_formula": "Fe2O3"}}

`oxidation_state` may be null on any site. Null states are filled by the charge-balancing heuristic,
which treats the states given on the other sites as fixed. Unknown top-level fields, unknown per-site
fields and unknown property keys are kept and written back unchanged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from ..core.crystal import Crystal, LatticeParams, Site, formula_string, reduced_formula, validate_crystal
from ..core.elements import ElementTables, default_tables
from ..core.errors import DataError
from ..tokenizer.oxidation import assign_oxidation_states

logger = logging.getLogger(__name__)

KNOWN_FIELDS = ("id", "lattice", "sites", "properties")
SITE_FIELDS = ("element", "oxidation_state", "frac")
NUMERIC_PROPERTIES = ("band_gap", "magnetic_density", "density", "hhi")


class RecordError(DataError):
    """@brief A record is malformed; @p field names the offending JSON field."""

    def __init__(self, field_name: str, reason: str) -> None:
        self.field = field_name
        super().__init__(f"{field_name}: {reason}")


@dataclass(frozen=True)
class CrystalRecord:
    """
    @class CrystalRecord
    @brief A crystal with identifier, properties and any extra fields carried through round trips.

    @details @p origin is the (file, line) the record was read from, when it came from a corpus file;
    it is used in error messages and never serialized.
    """

    id: str
    crystal: Crystal
    properties: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)
    site_extra: Tuple[Dict[str, Any], ...] = ()
    origin: Optional[Tuple[str, int]] = field(default=None, compare=False, repr=False)

    @property
    def lattice(self) -> LatticeParams:
        return self.crystal.lattice

    @property
    def sites(self) -> Tuple[Site, ...]:
        return self.crystal.sites

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "id": self.id,
            "lattice": list(self.crystal.lattice.as_tuple()),
            "sites": [self._site_dict(i, s) for i, s in enumerate(self.crystal.sites)],
            "properties": dict(self.properties),
        }
        out.update(self.extra)
        return out

    def _site_dict(self, i: int, site: Site) -> Dict[str, Any]:
        out: Dict[str, Any] = {"element": site.element, "oxidation_state": site.oxidation_state,
                               "frac": list(site.frac)}
        if i < len(self.site_extra):
            out.update(self.site_extra[i])
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any], tables: Optional[ElementTables] = None,
                  wrapped: Optional[List[str]] = None,
                  origin: Optional[Tuple[str, int]] = None) -> "CrystalRecord":
        """
        @brief Strictly parse one JSON object.
        @param wrapped if given, receives the id of the record when a coordinate had to be wrapped
        @param origin (file, line) the object was read from
        @throws RecordError naming the missing or malformed field
        """
        tables = tables or default_tables()
        if not isinstance(data, dict):
            raise RecordError("record", "expected a JSON object")
        if "id" not in data:
            raise RecordError("id", "missing field")
        rid = str(data["id"])
        if "lattice" not in data:
            raise RecordError("lattice", "missing field")
        if "sites" not in data:
            raise RecordError("sites", "missing field")

        lattice = _parse_lattice(data["lattice"])
        sites = _parse_sites(data["sites"], tables, rid, wrapped)
        try:
            crystal = Crystal(lattice, tuple(sites))
            validate_crystal(crystal, tables)
        except DataError as exc:
            raise RecordError("sites", str(exc)) from None

        properties = _parse_properties(data.get("properties") or {})
        extra = {k: v for k, v in data.items() if k not in KNOWN_FIELDS}
        site_extra = tuple({k: v for k, v in s.items() if k not in SITE_FIELDS} for s in data["sites"])
        if not any(site_extra):
            site_extra = ()
        return cls(rid, crystal, properties, extra, site_extra, origin)


def _parse_lattice(raw) -> LatticeParams:
    if isinstance(raw, dict):
        try:
            raw = [raw[k] for k in ("a", "b", "c", "alpha", "beta", "gamma")]
        except KeyError as exc:
            raise RecordError("lattice", f"missing {exc.args[0]!r}") from None
    if not isinstance(raw, (list, tuple)) or len(raw) != 6:
        raise RecordError("lattice", "expected 6 numbers")
    try:
        return LatticeParams.from_sequence([float(v) for v in raw])
    except (TypeError, ValueError):
        raise RecordError("lattice", f"non-numeric value in {raw!r}") from None
    except DataError as exc:
        raise RecordError("lattice", str(exc)) from None


def _parse_sites(raw, tables: ElementTables, rid: str, wrapped: Optional[List[str]]) -> List[Site]:
    if not isinstance(raw, list) or not raw:
        raise RecordError("sites", "expected a non-empty list")
    elements, states, fracs = [], [], []
    for i, site in enumerate(raw):
        if not isinstance(site, dict):
            raise RecordError(f"sites[{i}]", "expected an object")
        for key in ("element", "frac"):
            if key not in site:
                raise RecordError(f"sites[{i}].{key}", "missing field")
        element = str(site["element"])
        if element not in tables:
            raise RecordError(f"sites[{i}].element", f"unknown element {element!r}")
        frac = site["frac"]
        if not isinstance(frac, (list, tuple)) or len(frac) != 3:
            raise RecordError(f"sites[{i}].frac", "expected 3 numbers")
        try:
            frac = tuple(float(v) for v in frac)
        except (TypeError, ValueError):
            raise RecordError(f"sites[{i}].frac", f"non-numeric value in {frac!r}") from None
        if not all(math.isfinite(v) for v in frac):
            raise RecordError(f"sites[{i}].frac", "non-finite coordinate")
        if any(not 0.0 <= v < 1.0 for v in frac):
            logger.warning("record %s site %d: coordinate %s wrapped into [0, 1)", rid, i, frac)
            if wrapped is not None:
                wrapped.append(rid)
        state = site.get("oxidation_state")
        if state is not None:
            if (isinstance(state, bool) or not isinstance(state, (int, float)) or not math.isfinite(state)
                    or int(state) != state):
                raise RecordError(f"sites[{i}].oxidation_state", f"expected an integer or null, got {state!r}")
            state = int(state)
        elements.append(element)
        states.append(state)
        fracs.append(frac)

    if any(s is None for s in states):
        states = assign_oxidation_states(elements, tables, given=states)
    return [Site(e, s, f) for e, s, f in zip(elements, states, fracs)]


def _parse_properties(raw) -> Dict[str, Any]:
    if not isinstance(raw, dict):
        raise RecordError("properties", "expected an object")
    props = dict(raw)
    for key in NUMERIC_PROPERTIES:
        value = props.get(key)
        if value is None:
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise RecordError(f"properties.{key}", f"expected a finite number, got {value!r}")
    sg = props.get("space_group")
    if sg is not None:
        if isinstance(sg, bool) or not isinstance(sg, (int, float)) or int(sg) != sg or not 1 <= sg <= 230:
            raise RecordError("properties.space_group", f"expected an integer in 1..230, got {sg!r}")
    rf = props.get("reduced_formula")
    if rf is not None and not isinstance(rf, str):
        raise RecordError("properties.reduced_formula", f"expected a string, got {rf!r}")
    return props


def record_from_crystal(rid: str, crystal: Crystal, properties: Optional[Dict[str, Any]] = None,
                        **extra: Any) -> CrystalRecord:
    props = dict(properties or {})
    props.setdefault("reduced_formula", formula_string(reduced_formula(crystal)))
    return CrystalRecord(rid, crystal, props, dict(extra))
