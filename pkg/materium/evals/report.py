"""
@file report.py
@brief EvalReport and the Evaluator that fills it from a configured list of metrics.

@details
The report keeps every field of the metric set; a metric that could not be computed (no valid
samples, no targets of that kind) is stored as None and written as `null` in JSON and as an empty
cell in CSV, never as zero. Fields for externally computed stability and property validation results
exist as placeholders so external results can be merged in later.

@par Expected evalDetails schema (list of objects)
- `{"name": "Validity"}`, `{"name": "Uniqueness", "args": {"siteTol": 0.01, "paramTol": 0.01}}`,
  `{"name": "Novelty"}`, `{"name": "DensityAdherence"}`, `{"name": "FormulaMatch", "args": {"k": 3}}`,
  `{"name": "HHIAdherence", "args": {"mode": "fraction"}}`, `{"name": "HHIBimodality", "args": {"bins": 20}}`,
  `{"name": "SpaceGroupEcho"}`
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import AbstractSet, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.elements import ElementTables, default_tables
from ..core.errors import ConfigError
from ..core.logger import atomic_write_json, atomic_write_text
from ..data.corpus import GeneratedSample
from .baseeval import BaseEval
from .bimodality import HHIBimodality
from .density_adherence import DensityAdherence
from .formula_match import FormulaMatch
from .hhi import HHIAdherence
from .novelty import Novelty
from .space_group_echo import SpaceGroupEcho
from .uniqueness import Uniqueness
from .validity import Validity

logger = logging.getLogger(__name__)

EXTERNAL_FIELDS = ("e_above_hull", "rmsd_after_relaxation", "sun_rate", "band_gap_validation",
                   "magnetic_density_validation")

EVAL_NAMES = ("Validity", "Uniqueness", "Novelty", "DensityAdherence", "FormulaMatch", "HHIAdherence",
              "HHIBimodality", "SpaceGroupEcho")


@dataclass
class EvalReport:
    """
    @class EvalReport
    @brief Metrics of one generated set. Counts are ≤ n_total; fractions lie in [0, 1] or are None.
    """

    n_total: int = 0
    n_grammar_valid: int = 0
    n_charge_neutral: int = 0
    frac_valid: Optional[float] = None
    frac_charge_neutral: Optional[float] = None
    frac_unique: Optional[float] = None
    frac_novel: Optional[float] = None
    adherence: Dict[str, Optional[Dict[str, Any]]] = field(default_factory=lambda: {"density": None, "hhi": None})
    formula_match_rate: Optional[float] = None
    formula_top_k: Optional[Dict[str, Any]] = None
    space_group_echo: Optional[Dict[str, Any]] = None
    hhi_bimodality: Optional[Dict[str, Any]] = None
    wall_time: Optional[Dict[str, float]] = None
    external: Dict[str, Any] = field(default_factory=lambda: {k: None for k in EXTERNAL_FIELDS})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def flat(self) -> Dict[str, Any]:
        """@brief One entry per leaf metric, keys joined with '/'. Histograms are left out."""
        out: Dict[str, Any] = {}
        _flatten(self.to_dict(), "", out)
        return out

    def headline(self) -> Dict[str, Optional[float]]:
        """@brief Scalar metrics used in comparison tables."""
        out = {
            "frac_valid": self.frac_valid,
            "frac_charge_neutral": self.frac_charge_neutral,
            "frac_unique": self.frac_unique,
            "frac_novel": self.frac_novel,
            "formula_match_rate": self.formula_match_rate,
        }
        for name in ("density", "hhi"):
            groups = self.adherence.get(name) or {}
            maes = [g["mae"] for g in groups.values() if g.get("mae") is not None]
            out[f"{name}_mae"] = float(np.mean(maes)) if maes else None
        return out

    def save(self, json_path: Union[str, Path], csv_path: Union[str, Path, None] = None) -> None:
        atomic_write_json(json_path, self.to_dict())
        if csv_path is not None:
            frame = pd.DataFrame(sorted(self.flat().items()), columns=["metric", "value"])
            atomic_write_text(csv_path, frame.to_csv(index=False, lineterminator="\n"))


def _flatten(value: Any, prefix: str, out: Dict[str, Any]) -> None:
    if isinstance(value, dict):
        if not value and prefix:
            out[prefix] = None
        for k, v in value.items():
            if k == "histogram":
                continue
            _flatten(v, f"{prefix}/{k}" if prefix else str(k), out)
    elif isinstance(value, (list, tuple)):
        out[prefix] = ";".join(str(x) for x in value)
    else:
        out[prefix] = value


class Evaluator:
    """
    @class Evaluator
    @brief Builds the configured metric objects (by name, like a registry) and fills an EvalReport.
    """

    def __init__(self, evalDetails: Optional[Sequence[Dict[str, Any]]] = None,
                 training: AbstractSet[str] = frozenset(), tables: Optional[ElementTables] = None) -> None:
        self.tables = tables or default_tables()
        self.training = training
        details = list(evalDetails) if evalDetails is not None else [{"name": n} for n in EVAL_NAMES]
        self.evals: List[Tuple[str, BaseEval]] = []
        self.setUpEvals(details)

    def setUpEvals(self, details: Sequence[Dict[str, Any]]) -> None:
        names = [d["name"] for d in details]
        if "Validity" not in names:
            details = [{"name": "Validity"}] + list(details)
        for k in details:
            name, args = k["name"], k.get("args", {})
            if name == "Validity":
                self.evals.append((name, Validity()))
            elif name == "Uniqueness":
                self.evals.append((name, Uniqueness(args.get("siteTol", 1e-2), args.get("paramTol", 1e-2))))
            elif name == "Novelty":
                self.evals.append((name, Novelty(self.training, args.get("siteTol", 1e-2), args.get("paramTol", 1e-2))))
            elif name == "DensityAdherence":
                self.evals.append((name, DensityAdherence(self.tables)))
            elif name == "FormulaMatch":
                self.evals.append((name, FormulaMatch(args.get("k", 3))))
            elif name == "HHIAdherence":
                self.evals.append((name, HHIAdherence(self.tables, args.get("mode", "fraction"))))
            elif name == "HHIBimodality":
                self.evals.append((name, HHIBimodality(self.tables, args.get("mode", "fraction"), args.get("bins", 20))))
            elif name == "SpaceGroupEcho":
                self.evals.append((name, SpaceGroupEcho()))
            else:
                raise ConfigError(f"unknown evaluation {name!r}; expected one of {EVAL_NAMES}")

    def evaluate(self, samples: Sequence[GeneratedSample]) -> EvalReport:
        report = EvalReport()
        for name, ev in self.evals:
            value = ev.eval(samples)
            if name == "Validity":
                for key, v in value.items():
                    setattr(report, key, v)
            elif name == "Uniqueness":
                report.frac_unique = value
            elif name == "Novelty":
                report.frac_novel = value
            elif name == "DensityAdherence":
                report.adherence["density"] = value
            elif name == "HHIAdherence":
                report.adherence["hhi"] = value
            elif name == "FormulaMatch":
                report.formula_match_rate = value["match_rate"] if value else None
                report.formula_top_k = value["top_k"] if value else None
            elif name == "HHIBimodality":
                report.hhi_bimodality = value
            elif name == "SpaceGroupEcho":
                report.space_group_echo = value
        times = [s.wall_time for s in samples if s.wall_time]
        if times:
            report.wall_time = {"total": float(np.sum(times)), "mean": float(np.mean(times)),
                                "median": float(np.median(times))}
        logger.info("evaluated %d samples: %d grammar-valid, unique=%s, novel=%s", report.n_total,
                    report.n_grammar_valid, report.frac_unique, report.frac_novel)
        return report
