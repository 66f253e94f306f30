import numpy as np
import pytest

from materium.core.crystal import Crystal, LatticeParams, Site
from materium.core.elements import default_tables
from materium.data.toy import ToySpec, synth_toy_corpus
from materium.model.transformer import DecoderTransformer, ModelConfig
from materium.tokenizer.ordering import OrderingStrategy
from materium.tokenizer.tokenizer import CrystalTokenizer
from materium.tokenizer.vocab import default_vocab


@pytest.fixture(scope="session")
def tables():
    return default_tables()


@pytest.fixture(scope="session")
def vocab(tables):
    return default_vocab(tables)


@pytest.fixture(scope="session")
def tokenizer(vocab, tables):
    return CrystalTokenizer(vocab, OrderingStrategy("HighFirst"), tables=tables)


@pytest.fixture(scope="session")
def toy_corpus(tables):
    return synth_toy_corpus(ToySpec(n=32, seed=0, max_sites=6), tables=tables)


@pytest.fixture
def small_config(vocab):
    """Two layers, width 32: fast enough for sampler and trainer tests."""
    return ModelConfig.tiny(vocab.total_size, n_layers=2, n_heads=4, d_emb=32, d_ffn_hidden=64,
                            dropout_rate=0.0, max_seq_len=128)


@pytest.fixture
def small_model(small_config, tables):
    return DecoderTransformer(small_config, tables)


@pytest.fixture
def fe_o():
    """Rock-salt-like FeO in a cubic 4.3 Å cell."""
    return Crystal(LatticeParams(4.3, 4.3, 4.3, 90.0, 90.0, 90.0),
                   (Site("Fe", 2, (0.0, 0.0, 0.0)), Site("O", -2, (0.5, 0.5, 0.5))))


def random_crystal(rng, tables, n_sites=None):
    """Random in-range crystal with element|oxidation pairs drawn from the bundled table."""
    symbols = [e.symbol for e in tables.elements if e.atomic_number <= 83]
    n = int(n_sites if n_sites is not None else rng.integers(1, 9))
    sites = []
    for _ in range(n):
        symbol = symbols[rng.integers(len(symbols))]
        states = tables.allowed_states(symbol)
        sites.append(Site(symbol, int(states[rng.integers(len(states))]), tuple(rng.random(3))))
    lengths = rng.uniform(3.0, 8.0, 3)
    angles = rng.uniform(80.0, 100.0, 3)
    return Crystal(LatticeParams(*lengths, *angles), tuple(sites))
