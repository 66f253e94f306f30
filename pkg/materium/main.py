"""
@file main.py
@brief Materium pipeline orchestrator driven by a JSON run configuration.

@details
A run config names the data, the ordering strategies, the model, the training and sampling settings
and the metrics:

    {
      "runDetails": "toy_run",
      "dataDetails": {"corpus": null, "toy": {"n": 32, "seed": 0}, "coordsFirst": false},
      "orderingDetails": [{"name": "HighFirst"}, {"name": "Random", "args": {"seed": 7}}],
      "modelDetails": {"preset": "tiny", "args": {"dropout_rate": 0.1}},
      "trainDetails": {"epochs": 5, "batch_size": 32},
      "sampleDetails": {"n_samples": 16, "conditions": {"density": [2.0, 4.0]}},
      "evalDetails": [{"name": "Validity"}, {"name": "Uniqueness"}, {"name": "DensityAdherence"}]
    }

`modelDetails.args`, `trainDetails` and `sampleDetails` hold the fields of ModelConfig, TrainConfig and
SampleConfig. Everything is validated when the object is built, before any compute.

Run directory layout (`<outputDir>/<runDetails>/`):
- `config.json` resolved configuration, `vocab.txt`
- `<ordering>/` `tokens.jsonl`, `tokenize_stats.json`, `metrics.csv`, `checkpoint_epoch<n>.npz`,
  `checkpoint.npz` (latest epoch), `generated.jsonl`, `generation_stats.json`, `report.json`, `report.csv`
"""

from __future__ import annotations

import copy
import json
import logging
from collections import Counter
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core.elements import ElementTables, default_tables
from .core.errors import ConfigError, DataError, ParseError
from .core.logger import Logger, log_rss
from .core.stats import Stats
from .data.corpus import (GeneratedSample, TokenRecord, load_corpus, load_generated, save_generated,
                          save_token_corpus)
from .data.records import CrystalRecord
from .data.split import split_corpus
from .data.transforms import CONDITION_NAMES
from .data.toy import ToySpec, synth_toy_corpus
from .evals.novelty import training_fingerprints
from .evals.report import EvalReport, Evaluator
from .model.checkpoint import Checkpoint, load_checkpoint
from .model.conditions import ConditionSet
from .model.transformer import DecoderTransformer, ModelConfig
from .sample.sampler import GenerationStats, SampleConfig, condition_sweep, generate_batch
from .tokenizer.ordering import OrderingStrategy
from .tokenizer.quantize import LatticeRanges
from .tokenizer.tokenizer import CrystalTokenizer
from .tokenizer.vocab import Vocabulary, default_vocab
from .train.trainer import TrainConfig, Trainer, TrainingExample, TrainState

logger = logging.getLogger(__name__)

PRESETS = ("full", "tiny")
RUN_KEYS = ("runDetails", "outputDir", "dataDetails", "orderingDetails", "modelDetails", "trainDetails",
            "sampleDetails", "evalDetails")


def tokenize_records(records: Sequence[CrystalRecord], tokenizer: CrystalTokenizer,
                     use_formula: bool = True) -> Tuple[List[TokenRecord], Dict[str, Any]]:
    """
    @brief Encode every record and summarize the encoding.
    @return (token records, stats with length histogram, clamp counts and vocabulary coverage)
    @throws ParseError naming the offending record id, with its file and line when known
    """
    out: List[TokenRecord] = []
    lengths: Counter = Counter()
    clamps: Counter = Counter()
    used = np.zeros(tokenizer.vocab.total_size, dtype=bool)
    for rec in records:
        try:
            seq = tokenizer.encode(rec.crystal, key=rec.id)
        except DataError as exc:
            line = rec.origin[1] if rec.origin else None
            where = f"{rec.origin[0]}: " if rec.origin else ""
            raise ParseError(line, f"{where}record {rec.id}: {exc}") from exc
        conditions = _condition_fields(rec.properties, use_formula)
        out.append(TokenRecord(rec.id, seq.ids, conditions, seq.clamped, str(tokenizer.strategy),
                               tokenizer.coords_first))
        lengths[len(seq)] += 1
        clamps.update(seq.clamped)
        used[list(seq.ids)] = True
    stats = {
        "n_records": len(out),
        "length_histogram": {str(k): v for k, v in sorted(lengths.items())},
        "max_length": max(lengths) if lengths else 0,
        "clamp_counts": dict(sorted(clamps.items())),
        "n_clamped_records": sum(1 for r in out if r.clamped),
        "vocab_size": tokenizer.vocab.total_size,
        "vocab_used": int(used.sum()),
        "vocab_coverage": float(used.mean()),
    }
    return out, stats


def _condition_fields(properties: Mapping[str, Any], use_formula: bool) -> Dict[str, Any]:
    raw = {k: properties[k] for k in CONDITION_NAMES if properties.get(k) is not None}
    if use_formula and properties.get("reduced_formula"):
        raw["formula"] = properties["reduced_formula"]
    return raw


def training_examples(token_records: Sequence[TokenRecord], schema: Sequence[str] = (),
                      use_formula: bool = True) -> List[TrainingExample]:
    """@brief TokenRecords to model inputs; conditions outside @p schema are left out."""
    out = []
    for tr in token_records:
        raw = {k: v for k, v in tr.conditions.items() if k in schema or (use_formula and k == "formula")}
        out.append(TrainingExample(tr.id, tuple(tr.ids), ConditionSet.from_raw(raw)))
    return out


class Materium:
    """
    @class Materium
    @brief Builds the configured pipeline objects and runs tokenize, train, generate and evaluate.
    """

    def __init__(self, runConfig: Union[str, Path, Mapping[str, Any]], outputDir: Optional[str] = None,
                 tables: Optional[ElementTables] = None) -> None:
        """
        @param runConfig path to a run config JSON file, or the parsed config
        @param outputDir overrides the config's `outputDir` (default "outputs")
        @throws ConfigError for any invalid setting
        """
        if isinstance(runConfig, Mapping):
            data = copy.deepcopy(dict(runConfig))
        else:
            with open(runConfig, encoding="utf-8") as f:
                data = json.load(f)
        unknown = set(data) - set(RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        if not data.get("runDetails"):
            raise ConfigError("runDetails is required")

        self.runDetails: str = data["runDetails"]
        self.outputDir = outputDir or data.get("outputDir") or "outputs"
        self.dataDetails: Dict[str, Any] = data.get("dataDetails") or {"toy": {}}
        self.orderingDetails: List[Dict[str, Any]] = data.get("orderingDetails") or [{"name": "HighFirst"}]
        self.modelDetails: Dict[str, Any] = data.get("modelDetails") or {"preset": "tiny"}
        self.trainDetails: Dict[str, Any] = data.get("trainDetails") or {}
        self.sampleDetails: Dict[str, Any] = dict(data.get("sampleDetails") or {})
        self.evalsDetails: Optional[List[Dict[str, Any]]] = data.get("evalDetails")

        self.tables = tables or default_tables()
        self.vocab: Vocabulary = default_vocab(self.tables)
        self.ranges = LatticeRanges.from_dict(self.dataDetails["ranges"]) if self.dataDetails.get("ranges") else LatticeRanges()
        self.coordsFirst = bool(self.dataDetails.get("coordsFirst", False))

        self.orderings: List[Tuple[str, OrderingStrategy]] = []
        self.setUpOrderings()
        self.modelConfig = self.setUpModel()
        self.trainConfig = TrainConfig.from_dict(self.trainDetails).validate()
        self.conditionTargets: Dict[str, List[Any]] = {
            k: v if isinstance(v, list) else [v] for k, v in (self.sampleDetails.pop("conditions", None) or {}).items()}
        self.sampleConfig = SampleConfig.from_dict(self.sampleDetails).validate()
        self.evaluator = Evaluator(self.evalsDetails, tables=self.tables)
        self.resultsDir = "results"

        self.logger = Logger(self.runDetails, self.outputDir, [name for name, _ in self.orderings])
        self.runPath = self.logger.runPath

    # ---------- setup ----------

    def setUpOrderings(self) -> None:
        for k in self.orderingDetails:
            strategy = OrderingStrategy.from_details(k)
            self.orderings.append((str(strategy), strategy))
        if len({n for n, _ in self.orderings}) != len(self.orderings):
            raise ConfigError("orderingDetails lists the same strategy twice")

    def setUpModel(self) -> ModelConfig:
        preset = self.modelDetails.get("preset", "tiny")
        if preset not in PRESETS:
            raise ConfigError(f"unknown model preset {preset!r}; expected one of {PRESETS}")
        args = dict(self.modelDetails.get("args") or {})
        factory = ModelConfig.full if preset == "full" else ModelConfig.tiny
        try:
            return factory(self.vocab.total_size, **args).validate()
        except TypeError as exc:
            raise ConfigError(f"modelDetails.args: {exc}") from None

    def setUpData(self) -> List[CrystalRecord]:
        """@brief Load the configured corpus, or synthesize the toy corpus."""
        corpus = self.dataDetails.get("corpus")
        if corpus:
            return load_corpus(corpus, self.tables, int(self.dataDetails.get("workers", 1)))
        toy = self.dataDetails.get("toy") or {}
        spec = ToySpec(n=int(toy.get("n", 32)), seed=int(toy.get("seed", 0)), max_sites=int(toy.get("maxSites", 8)),
                       density_range=tuple(toy["densityRange"]) if toy.get("densityRange") else None)
        return synth_toy_corpus(spec, self.ranges, self.tables)

    def setUpEvals(self, training: Sequence[CrystalRecord] = ()) -> Evaluator:
        fps = training_fingerprints([r.crystal for r in training]) if training else frozenset()
        self.evaluator = Evaluator(self.evalsDetails, fps, self.tables)
        return self.evaluator

    def tokenizer(self, strategy: OrderingStrategy) -> CrystalTokenizer:
        return CrystalTokenizer(self.vocab, strategy, self.ranges, self.coordsFirst, self.tables)

    def resolved(self) -> Dict[str, Any]:
        """@brief Fully resolved configuration (defaults filled in)."""
        sample = self.sampleConfig.to_dict()
        sample["conditions"] = self.conditionTargets
        return {
            "runDetails": self.runDetails,
            "outputDir": str(self.outputDir),
            "dataDetails": self.dataDetails,
            "orderingDetails": self.orderingDetails,
            "modelDetails": {"preset": self.modelDetails.get("preset", "tiny"), "args": self.modelConfig.to_dict()},
            "trainDetails": self.trainConfig.to_dict(),
            "sampleDetails": sample,
            "evalDetails": self.evalsDetails,
        }

    # ---------- stages ----------

    def tokenize(self, name: str, records: Sequence[CrystalRecord]) -> List[TokenRecord]:
        strategy = dict(self.orderings)[name]
        token_records, stats = tokenize_records(records, self.tokenizer(strategy), self.modelConfig.use_formula)
        log = self.logger.sub(name)
        save_token_corpus(token_records, log.path("tokens.jsonl"))
        log.log_json("tokenize_stats.json", stats)
        logger.info("[%s] tokenized %d records (max length %d, %d clamped)", name, stats["n_records"],
                    stats["max_length"], stats["n_clamped_records"])
        return token_records

    def train(self, name: str, token_records: Sequence[TokenRecord], resume: bool = False) -> TrainState:
        """@brief Split, train and checkpoint one model; @p resume continues from `<name>/checkpoint.npz`."""
        cfg = self.modelConfig
        examples = training_examples(token_records, cfg.condition_schema, cfg.use_formula)
        train, val = split_corpus(examples, self.trainConfig.train_frac, self.trainConfig.seed)
        model = DecoderTransformer(cfg, self.tables)
        trainer = Trainer(model, self.trainConfig, self.logger.sub(name), self.vocab.hash(), name,
                          self.coordsFirst, self.ranges)
        state = None
        ckpt = self.logger.path(name, "checkpoint.npz")
        if resume and ckpt.exists():
            state = trainer.resume(ckpt, self.vocab)
        logger.info("[%s] training on %d examples, validating on %d", name, len(train), len(val))
        state = trainer.fit(train, val, state)
        log_rss(f"{name} trained")
        return state

    def generate(self, name: str, ckpt: Optional[Checkpoint] = None) -> Tuple[List[GeneratedSample], GenerationStats]:
        ckpt = ckpt or load_checkpoint(self.logger.path(name, "checkpoint.npz"), self.vocab)
        model = ckpt.model(self.tables)
        tokenizer = CrystalTokenizer(self.vocab, ckpt.strategy, ckpt.ranges, ckpt.coords_first, self.tables)
        samples, stats = generate_batch(model, ckpt.params, condition_sweep(self.conditionTargets),
                                        self.sampleConfig, tokenizer)
        log = self.logger.sub(name)
        save_generated(samples, log.path("generated.jsonl"))
        log.log_json("generation_stats.json", stats.to_dict())
        return samples, stats

    def evaluate(self, name: str, samples: Optional[Sequence[GeneratedSample]] = None,
                 training: Sequence[CrystalRecord] = ()) -> EvalReport:
        if samples is None:
            samples = load_generated(self.logger.path(name, "generated.jsonl"), self.tables)
        evaluator = self.setUpEvals(training)
        report = evaluator.evaluate(samples)
        report.save(self.logger.path(name, "report.json"), self.logger.path(name, "report.csv"))
        return report

    def benchmark(self, resume: bool = False) -> Dict[str, Any]:
        """
        @brief Run every configured ordering end to end and aggregate the reports.
        @return the Stats summary ({ordering: {metric: {mean, std}}})
        """
        self.logger.log_config(self.resolved())
        self.vocab.save(self.logger.path("vocab.txt"))
        records = self.setUpData()
        for name, _ in self.orderings:
            logger.info("[%s] starting", name)
            token_records = self.tokenize(name, records)
            self.train(name, token_records, resume)
            samples, _ = self.generate(name)
            self.evaluate(name, samples, records)
        summary = Stats(self.resolved(), self.outputDir, self.resultsDir).compute()
        logger.info("Run Completed")
        return summary
