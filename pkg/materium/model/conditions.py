"""
@file conditions.py
@brief Condition sets and their embedding into prefix vectors.

@details
Prefix layout, in schema order:
- one vector per scalar condition slot: value·w + b + label when present, nan + label when absent
- then one vector per formula pair: element_table[Z − 1] + stoich_table[count − 1],
  or a single formula NaN vector when no formula is given

The formula slot carries no label embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core.crystal import formula_string, parse_formula
from ..core.elements import ElementTables, default_tables
from ..core.errors import DataError, StoichOutOfTable, UnknownCondition, UnknownElement
from ..data.transforms import CONDITION_NAMES, transform_condition
from .baselayer import BaseLayer, Params, Shapes, accumulate, truncated_normal

FORMULA_KEYS = ("formula", "reduced_formula")


@dataclass(frozen=True)
class ConditionSet:
    """
    @class ConditionSet
    @brief Optional scalar conditions (already transformed) and an optional formula.

    @param values condition name -> transformed value; absent conditions are simply missing
    @param formula (element, count) pairs, counts ≥ 1
    @param raw untransformed targets, kept for annotating generated samples
    """

    values: Mapping[str, float] = field(default_factory=dict)
    formula: Optional[Tuple[Tuple[str, int], ...]] = None
    raw: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", dict(self.values))
        for name, v in self.values.items():
            if name not in CONDITION_NAMES:
                raise UnknownCondition(f"unknown condition {name!r}; expected one of {CONDITION_NAMES}")
            if not math.isfinite(float(v)):
                raise DataError(f"condition {name} must be finite, got {v!r}")
        if self.formula is not None:
            pairs = tuple((str(e), int(n)) for e, n in self.formula)
            if not pairs:
                raise DataError("formula condition must have at least one element")
            if any(n < 1 for _, n in pairs):
                raise DataError(f"formula counts must be >= 1, got {pairs}")
            object.__setattr__(self, "formula", pairs)

    @classmethod
    def from_raw(cls, raw: Mapping[str, Any]) -> "ConditionSet":
        """
        @brief Build from untransformed targets such as `{"density": 5.0, "formula": "Fe1O1"}`.
        @throws UnknownCondition for keys that are neither conditions nor a formula key
        @throws NegativeValue for negative log-transformed properties
        """
        values, formula, kept = {}, None, {}
        for key, value in raw.items():
            if value is None:
                continue
            if key in FORMULA_KEYS:
                pairs = parse_formula(value) if isinstance(value, str) else [tuple(p) for p in value]
                formula = tuple(pairs)
                kept["formula"] = formula_string(pairs)
                continue
            values[key] = transform_condition(key, value)
            kept[key] = value
        return cls(values, formula, kept)

    @classmethod
    def from_properties(cls, properties: Mapping[str, Any], use_formula: bool = True) -> "ConditionSet":
        """@brief Conditions of a corpus record; unknown property keys are ignored."""
        raw = {k: v for k, v in properties.items() if k in CONDITION_NAMES}
        if use_formula and properties.get("reduced_formula"):
            raw["formula"] = properties["reduced_formula"]
        return cls.from_raw(raw)

    @property
    def is_empty(self) -> bool:
        return not self.values and self.formula is None

    def present(self) -> List[str]:
        return [n for n in CONDITION_NAMES if n in self.values]

    def drop(self, names: Sequence[str] = (), formula: bool = False) -> "ConditionSet":
        """@return a copy without the named conditions (and without the formula if requested)."""
        values = {k: v for k, v in self.values.items() if k not in names}
        raw = {k: v for k, v in self.raw.items() if k not in names and not (formula and k == "formula")}
        return ConditionSet(values, None if formula else self.formula, raw)

    def targets(self) -> Dict[str, Any]:
        return dict(self.raw)


class ConditionEmbedding(BaseLayer):
    """
    @class ConditionEmbedding
    @brief Learned embedders for the scalar slots of a schema and for the formula.

    @details
    Parameter names: `cond.{name}.value_w`, `cond.{name}.value_b`, `cond.{name}.label`,
    `cond.{name}.nan` for every schema slot, and `formula.element`, `formula.stoich`, `formula.nan`
    when the formula is used.
    """

    def __init__(self, schema: Sequence[str], d_emb: int, use_formula: bool = True, n_elements: int = 103,
                 max_stoich: int = 20, tables: Optional[ElementTables] = None) -> None:
        super().__init__("")
        for name in schema:
            if name not in CONDITION_NAMES:
                raise UnknownCondition(f"unknown condition {name!r} in schema")
        self.schema = tuple(schema)
        self.d_emb = d_emb
        self.use_formula = use_formula
        self.n_elements = n_elements
        self.max_stoich = max_stoich
        self.tables = tables or default_tables()

    def param_shapes(self) -> Shapes:
        d = self.d_emb
        shapes: Shapes = {}
        for name in self.schema:
            for part in ("value_w", "value_b", "label", "nan"):
                shapes[f"cond.{name}.{part}"] = (d,)
        if self.use_formula:
            shapes["formula.element"] = (self.n_elements, d)
            shapes["formula.stoich"] = (self.max_stoich, d)
            shapes["formula.nan"] = (d,)
        return shapes

    def init_params(self, rng, std) -> Params:
        params = super().init_params(rng, std)
        for name in self.schema:
            params[f"cond.{name}.value_b"] = np.zeros(self.d_emb)
        return params

    def prefix_length(self, cs: ConditionSet) -> int:
        n = len(self.schema)
        if self.use_formula:
            n += len(cs.formula) if cs.formula else 1
        return n

    def _check(self, cs: ConditionSet) -> None:
        for name in cs.values:
            if name not in self.schema:
                raise UnknownCondition(f"condition {name!r} is not part of the model schema {self.schema}")
        if cs.formula and not self.use_formula:
            raise UnknownCondition("the model was built without a formula condition")

    def _formula_index(self, element: str, count: int) -> Tuple[int, int]:
        z = self.tables.atomic_number(element)
        if not 1 <= z <= self.n_elements:
            raise UnknownElement(f"element {element} (Z={z}) outside the formula table")
        if count > self.max_stoich:
            raise StoichOutOfTable(f"stoichiometric count {count} of {element} exceeds the table size {self.max_stoich}")
        return z - 1, count - 1

    def embed(self, params: Params, cs: ConditionSet):
        """
        @brief Prefix vectors for one condition set.
        @return (array (P, d_emb), slot descriptors for @ref backward_slots)
        @throws UnknownCondition, StoichOutOfTable, UnknownElement
        """
        self._check(cs)
        rows, slots = [], []
        for name in self.schema:
            label = params[f"cond.{name}.label"]
            if name in cs.values:
                v = float(cs.values[name])
                rows.append(v * params[f"cond.{name}.value_w"] + params[f"cond.{name}.value_b"] + label)
                slots.append(("value", name, v))
            else:
                rows.append(params[f"cond.{name}.nan"] + label)
                slots.append(("nan", name, None))
        if self.use_formula:
            if cs.formula:
                for element, count in cs.formula:
                    zi, ci = self._formula_index(element, count)
                    rows.append(params["formula.element"][zi] + params["formula.stoich"][ci])
                    slots.append(("pair", zi, ci))
            else:
                rows.append(params["formula.nan"].copy())
                slots.append(("formula_nan", None, None))
        if not rows:
            return np.zeros((0, self.d_emb)), slots
        return np.stack(rows), slots

    def backward_slots(self, dprefix: np.ndarray, slots, grads: Params) -> None:
        """@brief Accumulate gradients of the prefix rows into the condition parameters."""
        for row, (kind, a, b) in zip(dprefix, slots):
            if kind == "value":
                accumulate(grads, f"cond.{a}.value_w", b * row)
                accumulate(grads, f"cond.{a}.value_b", row)
                accumulate(grads, f"cond.{a}.label", row)
            elif kind == "nan":
                accumulate(grads, f"cond.{a}.nan", row)
                accumulate(grads, f"cond.{a}.label", row)
            elif kind == "pair":
                if "formula.element" not in grads:
                    grads["formula.element"] = np.zeros((self.n_elements, self.d_emb))
                if "formula.stoich" not in grads:
                    grads["formula.stoich"] = np.zeros((self.max_stoich, self.d_emb))
                grads["formula.element"][a] += row
                grads["formula.stoich"][b] += row
            else:
                accumulate(grads, "formula.nan", row)


def embed_conditions(cs: ConditionSet, params: Params, embedder: ConditionEmbedding) -> np.ndarray:
    """@brief Prefix vectors (P, d_emb) for @p cs in schema order."""
    return embedder.embed(params, cs)[0]
