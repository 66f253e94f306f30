"""
@file stats.py
@brief Aggregate and compare evaluation reports across the named items of a run.

@details
Loads a run configuration, scans the evaluation reports written under the run directory for each
named item (one ordering strategy per item in a comparison run), and averages the headline metrics.

Directory conventions:
- Reports are expected under `<outputDir>/<runDetails>/<name>/report*.json`.
- Aggregated stats are written to `<resultsDir>/<runDetails>Stats.json` and `<runDetails>Stats.csv`.

@par Expected config schema (JSON at @p runConfig)
- @c runDetails      : run identifier (sub-directory of @c outputs/)
- @c orderingDetails : list of objects with a @c name field, one per compared item

@note
- Unreadable report files are skipped with a warning.
- An item without reports gets NaN for every metric.
- A metric that is None in a report (absent, e.g. no density targets) is left out of that item's mean.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from ..evals.report import EvalReport
from ..tokenizer.ordering import OrderingStrategy
from .logger import atomic_write_json, atomic_write_text

logger = logging.getLogger(__name__)

HEADLINE_METRICS = ("frac_valid", "frac_charge_neutral", "frac_unique", "frac_novel", "formula_match_rate",
                    "density_mae", "hhi_mae")


class Stats:
    """
    @class Stats
    @brief Compute and compare headline metrics across the items of one run.
    """

    def __init__(self, runConfig: Union[str, Path, Mapping[str, Any]], outputDir: Union[str, Path] = "outputs",
                 resultsDir: Union[str, Path] = "results") -> None:
        """
        @param runConfig path to a run configuration JSON file, or the parsed config
        @param outputDir root of the run directories
        @param resultsDir where the summary files are written
        """
        if isinstance(runConfig, Mapping):
            data = dict(runConfig)
        else:
            with open(runConfig, encoding="utf-8") as f:
                data = json.load(f)
        self.runDetails = data["runDetails"]
        self.names: List[str] = []
        for k in data.get("orderingDetails") or [{"name": "HighFirst"}]:
            name = str(OrderingStrategy.from_details(k))
            if name not in self.names:
                self.names.append(name)
        self.evals = list(HEADLINE_METRICS)
        self.outputDir = Path(outputDir)
        self.runPath = self.outputDir / self.runDetails
        self.resultsDir = Path(resultsDir)

    def reports(self, name: str) -> List[EvalReport]:
        out = []
        for path in sorted((self.runPath / name).glob("report*.json")):
            try:
                with open(path, encoding="utf-8") as f:
                    out.append(EvalReport.from_dict(json.load(f)))
            except (OSError, ValueError, TypeError) as exc:
                logger.warning("skipping '%s': %s", path, exc)
        return out

    def compute(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """
        @brief Average each headline metric per item and write the summary artifacts.
        @return {name: {metric: {"mean": ..., "std": ...}}}
        """
        means, stds = {}, {}
        for name in self.names:
            reports = self.reports(name)
            if not reports:
                logger.warning("no reports found for '%s' at %s", name, self.runPath / name)
            frame = pd.DataFrame([r.headline() for r in reports], columns=self.evals, dtype=float)
            means[name] = frame.mean(skipna=True).to_dict() if len(frame) else {k: math.nan for k in self.evals}
            stds[name] = frame.std(ddof=0, skipna=True).to_dict() if len(frame) else {k: math.nan for k in self.evals}

        df_mean = pd.DataFrame.from_dict(means, orient="index")[self.evals]
        df_std = pd.DataFrame.from_dict(stds, orient="index")[self.evals]
        logger.info("mean metrics:\n%s", df_mean.to_string())
        logger.info("std over reports:\n%s", df_std.to_string())

        summary = {name: {k: {"mean": _num(means[name][k]), "std": _num(stds[name][k])} for k in self.evals}
                   for name in self.names}
        atomic_write_json(self.resultsDir / f"{self.runDetails}Stats.json", summary)
        table = df_mean.add_suffix("_mean").join(df_std.add_suffix("_std"))
        table.index.name = "name"
        atomic_write_text(self.resultsDir / f"{self.runDetails}Stats.csv", table.to_csv(lineterminator="\n"))
        return summary

    def table(self, summary: Optional[Dict[str, Dict[str, Dict[str, float]]]] = None) -> pd.DataFrame:
        """@brief `mean±std` strings per item and metric, for printing."""
        summary = summary or self.compute()
        rows = {}
        for name, metrics in summary.items():
            rows[name] = {k: "nan" if v["mean"] is None or np.isnan(v["mean"]) else f"{v['mean']:.3f}±{v['std']:.3f}"
                          for k, v in metrics.items()}
        return pd.DataFrame.from_dict(rows, orient="index")[self.evals]


def _num(value: float) -> Optional[float]:
    value = float(value)
    return None if math.isnan(value) else value
