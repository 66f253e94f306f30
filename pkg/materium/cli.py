"""
@file cli.py
@brief `materium` command line: tokenize, train, generate, evaluate, inspect and compare.

@details
Every command first prints its fully resolved configuration as one JSON line, then runs. Settings come
from dataclass defaults, then an optional run config file (`--config`, same schema as `runs/*.json`),
then explicit flags.

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .core.errors import ConfigError, DataError, MateriumError
from .core.logger import Logger, atomic_write_json
from .core.elements import default_tables
from .data.corpus import (is_token_corpus, load_corpus, load_generated, load_token_corpus, save_generated,
                          save_token_corpus, token_corpus_layout)
from .evals.novelty import training_fingerprints
from .evals.report import Evaluator
from .main import Materium, tokenize_records, training_examples
from .model.checkpoint import load_checkpoint
from .model.transformer import DecoderTransformer, ModelConfig
from .sample.sampler import SampleConfig, condition_sweep, generate_batch
from .data.split import split_corpus
from .tokenizer.ordering import OrderingStrategy
from .tokenizer.tokenizer import CrystalTokenizer
from .tokenizer.vocab import Vocabulary, default_vocab
from .train.trainer import TrainConfig, Trainer

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------- config helpers ----------

def _read_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from None


def _overlay(base: Dict[str, Any], flags: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _echo(config: Dict[str, Any]) -> None:
    print(json.dumps(config, sort_keys=True, default=str), flush=True)


def _conditions(args) -> Dict[str, List[Any]]:
    """@return raw target lists from the condition flags (absent flags are absent conditions)."""
    out = {}
    for name in ("band_gap", "magnetic_density", "density", "space_group", "hhi", "formula"):
        values = getattr(args, name, None)
        if values:
            out[name] = list(values)
    return out


def _class_temperatures(items: Optional[Sequence[str]]) -> Optional[Dict[str, float]]:
    if not items:
        return None
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--class-temperature expects CLASS=VALUE, got {item!r}")
        try:
            out[key] = float(value)
        except ValueError:
            raise ConfigError(f"--class-temperature {item!r}: {value!r} is not a number") from None
    return out


def _logger_for(out: str) -> Logger:
    path = Path(out)
    return Logger(path.name, path.parent if str(path.parent) else ".")


def _token_layout(records, ordering_flag: Optional[str], coords_flag: Optional[bool]):
    """
    @brief The ordering and coordinate layout a token corpus was encoded with.
    @throws ConfigError when an explicit flag disagrees with the layout stored in the corpus
    """
    stored_ordering, stored_coords = token_corpus_layout(records)
    if stored_ordering is not None and ordering_flag is not None:
        if str(OrderingStrategy.parse(ordering_flag)) != stored_ordering:
            raise ConfigError(f"--ordering {ordering_flag} disagrees with the token corpus ({stored_ordering})")
    if stored_coords is not None and coords_flag is not None and coords_flag != stored_coords:
        raise ConfigError(f"--coords-first disagrees with the token corpus (coordsFirst={stored_coords})")
    if stored_ordering is None or stored_coords is None:
        logger.warning("token corpus does not record its encoding layout; using the command-line settings")
    ordering = stored_ordering or ordering_flag or "HighFirst"
    coords_first = stored_coords if stored_coords is not None else bool(coords_flag)
    return OrderingStrategy.parse(ordering), coords_first


# ---------- commands ----------

def cmd_tokenize(args) -> int:
    strategy = OrderingStrategy.parse(args.ordering)
    resolved = {"command": "tokenize", "corpus": args.corpus, "ordering": str(strategy), "out": args.out,
                "coordsFirst": args.coords_first, "useFormula": not args.no_formula, "workers": args.workers}
    _echo(resolved)
    tables = default_tables()
    vocab = default_vocab(tables)
    records = load_corpus(args.corpus, tables, args.workers)
    tokenizer = CrystalTokenizer(vocab, strategy, coords_first=args.coords_first, tables=tables)
    token_records, stats = tokenize_records(records, tokenizer, not args.no_formula)
    log = _logger_for(args.out)
    log.log_config(resolved)
    save_token_corpus(token_records, log.path("tokens.jsonl"))
    log.log_json("tokenize_stats.json", stats)
    vocab.save(log.path("vocab.txt"))
    logger.info("tokenized %d records into %s (lengths %s)", stats["n_records"], log.runPath,
                stats["length_histogram"])
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = _read_config(args.config)
    model_details = file_cfg.get("modelDetails") or {}
    preset = args.preset or model_details.get("preset", "tiny")
    model_args = _overlay(model_details.get("args") or {}, {"dropout_rate": args.dropout,
                                                             "max_seq_len": args.max_seq_len})
    train_cfg = TrainConfig.from_dict(_overlay(file_cfg.get("trainDetails") or {}, {
        "epochs": args.epochs, "batch_size": args.batch_size, "lr_init": args.lr, "seed": args.seed,
        "cond_dropout_p": args.cond_dropout, "train_frac": args.train_frac,
        "progress": False if args.no_progress else None,
    })).validate()
    tables = default_tables()
    vocab = default_vocab(tables)
    if preset not in ("full", "tiny"):
        raise ConfigError(f"unknown model preset {preset!r}")
    factory = ModelConfig.full if preset == "full" else ModelConfig.tiny
    try:
        model_cfg = factory(vocab.total_size, **model_args).validate()
    except TypeError as exc:
        raise ConfigError(f"model args: {exc}") from None
    token_records = None
    if is_token_corpus(args.data):
        token_records = load_token_corpus(args.data)
        strategy, coords_first = _token_layout(token_records, args.ordering, args.coords_first)
    else:
        strategy, coords_first = OrderingStrategy.parse(args.ordering or "HighFirst"), bool(args.coords_first)
    resolved = {"command": "train", "data": args.data, "out": args.out, "ordering": str(strategy),
                "coordsFirst": coords_first, "resume": args.resume,
                "modelDetails": {"preset": preset, "args": model_cfg.to_dict()},
                "trainDetails": train_cfg.to_dict()}
    _echo(resolved)

    if token_records is None:
        records = load_corpus(args.data, tables, args.workers)
        tokenizer = CrystalTokenizer(vocab, strategy, coords_first=coords_first, tables=tables)
        token_records, _ = tokenize_records(records, tokenizer, model_cfg.use_formula)
    examples = training_examples(token_records, model_cfg.condition_schema, model_cfg.use_formula)
    train, val = split_corpus(examples, train_cfg.train_frac, train_cfg.seed)

    log = _logger_for(args.out)
    log.log_config(resolved)
    vocab.save(log.path("vocab.txt"))
    trainer = Trainer(DecoderTransformer(model_cfg, tables), train_cfg, log, vocab.hash(), str(strategy),
                      coords_first)
    state = None
    if args.resume:
        state = trainer.resume(log.path("checkpoint.npz"), vocab)
    state = trainer.fit(train, val, state)
    metrics = trainer.evaluate(state.params, val)
    logger.info("finished after %d epochs: val_loss=%.4f val_accuracy=%.4f", state.epoch, metrics["loss"],
                metrics["accuracy"])
    return EXIT_OK


def cmd_generate(args) -> int:
    file_cfg = _read_config(args.config)
    sample_details = dict(file_cfg.get("sampleDetails") or {})
    targets = {k: v if isinstance(v, list) else [v] for k, v in (sample_details.pop("conditions", None) or {}).items()}
    targets.update(_conditions(args))
    cfg = SampleConfig.from_dict(_overlay(sample_details, {
        "n_samples": args.n, "temperature": args.temperature, "seed": args.seed, "workers": args.workers,
        "max_new_tokens": args.max_tokens, "constrain_grammar": False if args.unconstrained else None,
        "class_temperatures": _class_temperatures(args.class_temperature),
        "use_cache": False if args.no_cache else None, "progress": False if args.no_progress else None,
    })).validate()
    resolved = {"command": "generate", "checkpoint": args.checkpoint, "out": args.out, "conditions": targets,
                "sampleDetails": cfg.to_dict()}
    _echo(resolved)

    tables = default_tables()
    vocab = Vocabulary.load(args.vocab, tables) if args.vocab else default_vocab(tables)
    ckpt = load_checkpoint(args.checkpoint, vocab)
    model = ckpt.model(tables)
    sweep = condition_sweep(targets)
    tokenizer = CrystalTokenizer(vocab, ckpt.strategy, ckpt.ranges, ckpt.coords_first, tables)
    samples, stats = generate_batch(model, ckpt.params, sweep, cfg, tokenizer)
    save_generated(samples, args.out)
    stats_path = args.stats or str(Path(args.out).with_suffix(".stats.json"))
    atomic_write_json(stats_path, {"config": resolved, "stats": stats.to_dict()})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    file_cfg = _read_config(args.config)
    resolved = {"command": "evaluate", "generated": args.generated, "training": args.training, "out": args.out,
                "evalDetails": file_cfg.get("evalDetails")}
    _echo(resolved)
    tables = default_tables()
    samples = load_generated(args.generated, tables)
    fps = frozenset()
    if args.training:
        fps = training_fingerprints([r.crystal for r in load_corpus(args.training, tables, args.workers)])
    report = Evaluator(file_cfg.get("evalDetails"), fps, tables).evaluate(samples)
    out = Path(args.out)
    report.save(out / "report.json", out / "report.csv")
    logger.info("headline metrics: %s", report.headline())
    return EXIT_OK


def cmd_inspect(args) -> int:
    _echo({"command": "inspect", "file": args.file, "line": args.line})
    tables = default_tables()
    vocab = Vocabulary.load(args.vocab, tables) if args.vocab else default_vocab(tables)
    path = Path(args.file)
    if path.suffix == ".npz":
        ckpt = load_checkpoint(path)
        print(json.dumps({"config": ckpt.config.to_dict(), "ordering": ckpt.ordering,
                          "coords_first": ckpt.coords_first, "vocab_hash": ckpt.vocab_hash,
                          "train_state": {k: v for k, v in (ckpt.train_state or {}).items() if k != "rng"}},
                         indent=2))
        return EXIT_OK

    first = json.loads(path.read_text(encoding="utf-8").splitlines()[args.line - 1])
    if "generation" in first:
        sample = load_generated(path, tables)[args.line - 1]
        print(json.dumps(sample.to_dict()["generation"]["targets"]))
        print(" ".join(vocab.describe(sample.tokens)))
    elif is_token_corpus(path):
        rec = load_token_corpus(path)[args.line - 1]
        print(f"{rec.id} ({len(rec.ids)} tokens) {json.dumps(rec.conditions)}")
        print(" ".join(vocab.describe(rec.ids)))
    else:
        rec = load_corpus(path, tables)[args.line - 1]
        print(json.dumps(rec.to_dict(), indent=2))
        seq = CrystalTokenizer(vocab, OrderingStrategy.parse(args.ordering), tables=tables).encode(rec.crystal, rec.id)
        print(" ".join(vocab.describe(seq.ids)))
    return EXIT_OK


def cmd_compare(args) -> int:
    run = Materium(args.config, args.output_dir)
    _echo(dict(run.resolved(), command="compare"))
    summary = run.benchmark(resume=args.resume)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# ---------- parser ----------

def _add_conditions(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("conditions (several values produce a sweep)")
    g.add_argument("--band-gap", dest="band_gap", type=float, nargs="+")
    g.add_argument("--magnetic-density", dest="magnetic_density", type=float, nargs="+")
    g.add_argument("--density", type=float, nargs="+")
    g.add_argument("--space-group", dest="space_group", type=int, nargs="+")
    g.add_argument("--hhi", type=float, nargs="+")
    g.add_argument("--formula", nargs="+", help="reduced formula such as Fe1O1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="materium", description="Conditional crystal generation with a decoder-only transformer")
    parser.add_argument("--version", action="version", version=f"materium {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tokenize", help="encode a crystal corpus into token sequences")
    p.add_argument("corpus")
    p.add_argument("--ordering", default="HighFirst")
    p.add_argument("--out", required=True)
    p.add_argument("--coords-first", action="store_true")
    p.add_argument("--no-formula", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("train", help="train a model on a crystal or token corpus")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=["full", "tiny"])
    p.add_argument("--ordering", help="default HighFirst; a token corpus brings its own")
    p.add_argument("--coords-first", action="store_true", default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--max-seq-len", dest="max_seq_len", type=int)
    p.add_argument("--cond-dropout", dest="cond_dropout", type=float)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample crystals from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--vocab")
    p.add_argument("--n", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--class-temperature", dest="class_temperature", nargs="+", metavar="CLASS=T")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--unconstrained", action="store_true")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--stats")
    p.add_argument("--no-progress", action="store_true")
    _add_conditions(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="compute the metric report of a generated set")
    p.add_argument("generated")
    p.add_argument("--training")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="pretty-print a record, token sequence or checkpoint")
    p.add_argument("file")
    p.add_argument("--line", type=int, default=1)
    p.add_argument("--vocab")
    p.add_argument("--ordering", default="HighFirst")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("compare", help="run every ordering of a run config end to end and tabulate")
    p.add_argument("config")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_USAGE
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except MateriumError as exc:
        logger.error("runtime error: %s", exc)
        return EXIT_RUNTIME
    except Exception as exc:
        logger.exception("unexpected error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
