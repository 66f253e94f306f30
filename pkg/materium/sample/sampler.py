"""
@file sampler.py
@brief Autoregressive generation with temperature sampling and optional grammar-constrained decoding.

@details
Generation feeds [SOS] after the condition prefix and samples one token at a time until [EOS] or the
token budget. In constrained mode the grammar state machine masks every step, so the emitted sequence
is always grammar-valid; unconstrained mode samples from the full vocabulary and is kept to measure
the raw validity rate of a model.

Each sample owns its RNG (seed + index) and its KV cache, so a batch is embarrassingly parallel and
the result of sample i does not depend on the worker count.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax
from tqdm import tqdm

from ..core.crystal import density, net_charge
from ..core.errors import ConfigError, DataError, NoAllowedToken, SequenceTooLong, UnknownElement
from ..data.corpus import GeneratedSample
from ..data.records import record_from_crystal
from ..evals.hhi import hhi_of_crystal
from ..model.baselayer import Params
from ..model.conditions import ConditionSet
from ..model.transformer import DecoderTransformer
from ..tokenizer.grammar import LATTICE_BINS, GrammarState
from ..tokenizer.tokenizer import CrystalTokenizer, sequence_length
from ..tokenizer.vocab import BIN, ELEMENT, EOS, SOS, SPECIAL
from .kvcache import InferenceSession

logger = logging.getLogger(__name__)

GREEDY_TEMPERATURE = 1e-6
MAX_ATOMS = 20
MIN_SEQUENCE = sequence_length(1)
TEMPERATURE_CLASSES = ("special", "element", "coordinate", "lattice")


@dataclass
class SampleConfig:
    """
    @class SampleConfig
    @brief Generation settings; @p max_new_tokens counts the whole sequence from [SOS] to [EOS].

    @param class_temperatures optional per-class temperatures over special, element, coordinate and
           lattice tokens; classes not named use @p temperature
    """

    temperature: float = 1.0
    max_new_tokens: int = sequence_length(MAX_ATOMS)
    constrain_grammar: bool = True
    seed: int = 0
    n_samples: int = 1
    class_temperatures: Optional[Dict[str, float]] = None
    workers: int = 1
    use_cache: bool = True
    progress: bool = True

    def validate(self) -> "SampleConfig":
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.max_new_tokens < MIN_SEQUENCE:
            raise ConfigError(f"max_new_tokens must be >= {MIN_SEQUENCE}, got {self.max_new_tokens}")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        for key, value in (self.class_temperatures or {}).items():
            if key not in TEMPERATURE_CLASSES:
                raise ConfigError(f"unknown temperature class {key!r}; expected one of {TEMPERATURE_CLASSES}")
            if not value > 0:
                raise ConfigError(f"temperature for {key} must be > 0, got {value}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SampleConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sample config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class GenerationStats:
    n_samples: int = 0
    n_valid: int = 0
    n_charge_neutral: int = 0
    wall_time: float = 0.0
    tokens_per_sec: float = 0.0
    mean_sample_time: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def sample_next(logits: np.ndarray, temperature: Union[float, np.ndarray],
                allowed_mask: Optional[np.ndarray], rng: np.random.Generator) -> int:
    """
    @brief Draw from softmax(logits / temperature) restricted to @p allowed_mask.
    @param temperature scalar or per-token vector; entries below 1e-6 act greedily
    @param allowed_mask boolean mask over the vocabulary (None = all tokens)
    @throws NoAllowedToken if the mask admits nothing
    """
    logits = np.asarray(logits, dtype=np.float64)
    idx = np.arange(logits.shape[-1]) if allowed_mask is None else np.flatnonzero(allowed_mask)
    if idx.size == 0:
        raise NoAllowedToken("the allowed-token mask is empty")
    if idx.size == 1:
        return int(idx[0])
    temp = np.broadcast_to(np.asarray(temperature, dtype=np.float64), logits.shape)[idx]
    if np.all(temp < GREEDY_TEMPERATURE):
        return int(idx[np.argmax(logits[idx])])
    p = softmax(logits[idx] / np.maximum(temp, GREEDY_TEMPERATURE))
    return int(rng.choice(idx, p=p))


def grammar_mask(state: GrammarState, tokenizer: CrystalTokenizer) -> np.ndarray:
    """@brief Boolean mask admitting exactly the grammar-legal tokens in @p state."""
    return state.allowed_mask(tokenizer.vocab)


def temperature_vector(cfg: SampleConfig, tokenizer: CrystalTokenizer, lattice_phase: bool) -> Union[float, np.ndarray]:
    """
    @brief Per-token temperatures for one step; bins count as lattice tokens inside the lattice block.
    @return the scalar temperature when no class temperatures are configured
    """
    if not cfg.class_temperatures:
        return cfg.temperature
    vocab = tokenizer.vocab
    ct = cfg.class_temperatures
    temps = np.full(vocab.total_size, cfg.temperature)
    temps[vocab.class_mask(SPECIAL)] = ct.get("special", cfg.temperature)
    temps[vocab.class_mask(ELEMENT)] = ct.get("element", cfg.temperature)
    temps[vocab.class_mask(BIN)] = ct.get("lattice" if lattice_phase else "coordinate", cfg.temperature)
    return temps


def _budget(model: DecoderTransformer, cs: ConditionSet, cfg: SampleConfig) -> Tuple[int, int]:
    """@return (token budget, max atoms) fitting both @p cfg and the model context."""
    room = model.config.max_seq_len - model.prefix_length(cs)
    budget = min(cfg.max_new_tokens, room)
    if budget < MIN_SEQUENCE:
        raise SequenceTooLong(f"only {room} positions remain after the condition prefix; a material needs {MIN_SEQUENCE}")
    max_atoms = min(MAX_ATOMS, (budget - 10) // 4)
    return sequence_length(max_atoms) if cfg.constrain_grammar else budget, max_atoms


def generate_tokens(model: DecoderTransformer, params: Params, cs: ConditionSet, cfg: SampleConfig,
                    tokenizer: CrystalTokenizer, rng: np.random.Generator) -> Tuple[List[int], bool]:
    """
    @brief Sample one token sequence.
    @return (tokens starting with [SOS], whether the sequence is a complete grammar-valid material)
    """
    budget, max_atoms = _budget(model, cs, cfg)
    grammar = tokenizer.grammar(max_atoms if cfg.constrain_grammar else None)
    grammar.advance(SOS, tokenizer.vocab)
    tracking = True
    tokens = [SOS]
    session = InferenceSession(model, params, cs) if cfg.use_cache else None
    logits = session.feed([SOS]) if session else model.forward_logits(tokens, cs, params)[-1]

    while len(tokens) < budget:
        allowed = grammar_mask(grammar, tokenizer) if cfg.constrain_grammar else None
        temp = temperature_vector(cfg, tokenizer, tracking and grammar.phase == LATTICE_BINS)
        token = sample_next(logits, temp, allowed, rng)
        tokens.append(token)
        if tracking:
            if grammar.accepts(token, tokenizer.vocab):
                grammar.advance(token, tokenizer.vocab)
            else:
                tracking = False
        if token == EOS or len(tokens) >= budget:
            break
        logits = session.step(token) if session else model.forward_logits(tokens, cs, params)[-1]
    return tokens, tracking and grammar.done


def generate(model: DecoderTransformer, params: Params, cs: ConditionSet, cfg: SampleConfig,
             tokenizer: CrystalTokenizer, index: int = 0) -> GeneratedSample:
    """
    @brief Generate and decode one material with seed `cfg.seed + index`.
    @return a GeneratedSample; decoding failures are recorded on the sample, never raised
    """
    seed = cfg.seed + index
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tokens, complete = generate_tokens(model, params, cs, cfg, tokenizer, rng)
    sample = GeneratedSample(index=index, seed=seed, targets=cs.targets(), tokens=tuple(tokens))
    try:
        crystal = tokenizer.decode(tokens)
    except DataError as exc:
        sample.error = str(exc)
    else:
        properties = {"density": density(crystal, model.tables)}
        try:
            properties["hhi"] = hhi_of_crystal(crystal, model.tables)
        except UnknownElement:
            pass
        extra = {}
        if cs.raw.get("space_group") is not None:
            extra["space_group_target"] = cs.raw["space_group"]
        sample.record = record_from_crystal(f"gen-{index:06d}", crystal, properties, **extra)
        sample.grammar_valid = complete
        sample.charge_neutral = net_charge(crystal) == 0
    sample.wall_time = time.perf_counter() - t0
    return sample


def generate_batch(model: DecoderTransformer, params: Params, cs: Union[ConditionSet, Sequence[ConditionSet]],
                   cfg: SampleConfig, tokenizer: CrystalTokenizer) -> Tuple[List[GeneratedSample], GenerationStats]:
    """
    @brief Generate `cfg.n_samples` materials per condition set on `cfg.workers` threads.
    @param cs one condition set, or several (a sweep); sample indices run over all of them in order
    @return samples ordered by index, and aggregate stats
    """
    cfg.validate()
    targets = [cs] if isinstance(cs, ConditionSet) else list(cs)
    jobs = [(i, c) for i, c in enumerate(c for c in targets for _ in range(cfg.n_samples))]
    t0 = time.perf_counter()

    def run(job):
        return generate(model, params, job[1], cfg, tokenizer, job[0])

    bar = tqdm(total=len(jobs), desc="generate", disable=None if cfg.progress else True, leave=False)
    samples: List[GeneratedSample] = []
    if cfg.workers == 1:
        for job in jobs:
            samples.append(run(job))
            bar.update()
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for sample in pool.map(run, jobs):
                samples.append(sample)
                bar.update()
    bar.close()

    wall = time.perf_counter() - t0
    n_tokens = sum(len(s.tokens) for s in samples)
    stats = GenerationStats(
        n_samples=len(samples),
        n_valid=sum(1 for s in samples if s.grammar_valid),
        n_charge_neutral=sum(1 for s in samples if s.grammar_valid and s.charge_neutral),
        wall_time=wall,
        tokens_per_sec=n_tokens / wall if wall > 0 else 0.0,
        mean_sample_time=float(np.mean([s.wall_time for s in samples])) if samples else 0.0,
    )
    logger.info("generated %d samples: %d valid, %d charge neutral, %.1f tokens/s",
                stats.n_samples, stats.n_valid, stats.n_charge_neutral, stats.tokens_per_sec)
    return samples, stats


def condition_sweep(targets: Mapping[str, Sequence[Any]]) -> List[ConditionSet]:
    """
    @brief Cartesian product of raw target lists, e.g. `{"density": [2, 4], "formula": ["Fe1O1"]}`.
    @return one ConditionSet per combination, in product order; a single empty set for no targets
    """
    names = [k for k, values in targets.items() if values]
    combos = itertools.product(*(list(targets[k]) for k in names))
    return [ConditionSet.from_raw(dict(zip(names, combo))) for combo in combos]
