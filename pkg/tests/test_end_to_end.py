"""Desk-scale training runs. Each takes minutes on a CPU; run with `pytest -m slow`."""

import numpy as np
import pytest

from materium.data.toy import ToySpec, synth_toy_corpus
from materium.main import tokenize_records, training_examples
from materium.model.conditions import ConditionSet
from materium.model.transformer import DecoderTransformer, ModelConfig
from materium.sample.sampler import SampleConfig, condition_sweep, generate_batch
from materium.train.trainer import TrainConfig, Trainer

pytestmark = pytest.mark.slow


def tiny(vocab, **overrides):
    return ModelConfig.tiny(vocab.total_size, dropout_rate=0.0, **overrides)


@pytest.fixture(scope="module")
def overfit(vocab, tables, tokenizer):
    corpus = synth_toy_corpus(ToySpec(n=32, seed=0, max_sites=6), tables=tables)
    token_records, _ = tokenize_records(corpus, tokenizer)
    config = tiny(vocab)
    examples = training_examples(token_records, config.condition_schema, config.use_formula)
    trainer = Trainer(DecoderTransformer(config, tables), TrainConfig(batch_size=32, lr_init=4e-4,
                                                                       cond_dropout_p=0.0, progress=False))
    state = trainer.init_state()
    for step in range(2000):
        trainer.train_step(state, examples, step)
        if step % 100 == 99 and trainer.evaluate(state.params, examples)["accuracy"] > 0.995:
            break
    return trainer, state, examples


def test_tiny_model_memorizes_toy_corpus(overfit):
    trainer, state, examples = overfit
    assert trainer.evaluate(state.params, examples)["accuracy"] > 0.99


def test_training_improves_unconstrained_validity(overfit, tokenizer):
    trainer, state, examples = overfit
    cfg = SampleConfig(n_samples=30, constrain_grammar=False, temperature=0.5, progress=False, workers=4)
    cs = examples[0].conditions
    _, untrained = generate_batch(trainer.model, trainer.model.init_params(99), cs, cfg, tokenizer)
    _, trained = generate_batch(trainer.model, state.params, cs, cfg, tokenizer)
    assert trained.n_valid >= 3 * untrained.n_valid
    assert trained.n_valid > 15


def test_thousand_constrained_samples_are_valid(small_model, tokenizer):
    cfg = SampleConfig(n_samples=1000, progress=False, workers=4)
    samples, stats = generate_batch(small_model, small_model.init_params(0), ConditionSet.from_raw({"density": 4.0}),
                                    cfg, tokenizer)
    assert stats.n_valid == 1000
    assert all(len(s.tokens) == 4 * s.crystal.n_sites + 10 for s in samples)
    assert 0.0 <= stats.n_charge_neutral / stats.n_samples <= 1.0


def test_density_conditioning_orders_medians(vocab, tables, tokenizer):
    corpus = synth_toy_corpus(ToySpec(n=5000, seed=1, max_sites=4, density_range=(1.0, 8.0)), tables=tables)
    token_records, _ = tokenize_records(corpus, tokenizer)
    config = tiny(vocab, condition_schema=("density",), use_formula=False)
    examples = training_examples(token_records, config.condition_schema, config.use_formula)
    trainer = Trainer(DecoderTransformer(config, tables),
                      TrainConfig(batch_size=32, epochs=4, lr_init=1e-3, cond_dropout_p=0.5, progress=False))
    state = trainer.fit(examples)

    sweep = condition_sweep({"density": [2.0, 4.0, 6.0]})
    samples, _ = generate_batch(trainer.model, state.params, sweep, SampleConfig(n_samples=100, workers=4,
                                                                                  progress=False), tokenizer)
    medians = []
    for target in (2.0, 4.0, 6.0):
        values = [s.record.properties["density"] for s in samples if s.targets["density"] == target and s.record]
        medians.append(float(np.median(values)))
        assert abs(medians[-1] - target) <= 0.2 * target
    assert medians[0] < medians[1] < medians[2]
