import numpy as np
import pytest

from conftest import random_crystal
from materium.core.crystal import Crystal, LatticeParams, Site, reduce_crystal
from materium.core.errors import ConfigError, EmptyTable, GrammarError, OutOfRange, UnknownElementOxi
from materium.tokenizer.grammar import GrammarState
from materium.tokenizer.ordering import OrderingStrategy, order_sites
from materium.tokenizer.oxidation import assign_oxidation_states
from materium.tokenizer.quantize import (LATTICE_NAMES, LatticeRanges, dequantize_frac, quantize_frac,
                                         quantize_lattice_param)
from materium.tokenizer.tokenizer import CrystalTokenizer, decode, encode, sequence_length
from materium.tokenizer.vocab import ATOMS, BIN, ELEMENT, EOS, LATTICE, SOS, Vocabulary, build_vocab

RANGES = LatticeRanges()


# ---------- vocabulary ----------

def test_build_vocab_layout(tables):
    v = build_vocab({"H": (-1, 1)}, tables)
    assert v.total_size == 4 + 1024 + 3
    assert v.special_id("SOS") == SOS == 0
    assert v.bin_id(1023) == 1027
    assert v.element_id("H", -1) < v.element_id("H", 0) < v.element_id("H", 1)
    assert v.name(v.element_id("H", 1)) == "[H|+1]"
    with pytest.raises(UnknownElementOxi):
        v.element_id("H", 2)
    with pytest.raises(EmptyTable):
        build_vocab({}, tables)


def test_vocab_text_round_trip(vocab, tables, tmp_path):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    loaded = Vocabulary.load(path, tables)
    assert loaded.names == vocab.names
    assert loaded.hash() == vocab.hash()


def test_vocab_is_deterministic(vocab, tables):
    assert build_vocab(tables.oxidation_table(), tables).hash() == vocab.hash()
    assert vocab.total_size == 1288


# ---------- ordering ----------

def test_orderings(tables):
    fe = Site("Fe", 2, (0.1, 0.0, 0.0))
    h = Site("H", 1, (0.9, 0.0, 0.0))
    assert [s.element for s in order_sites([fe, h], OrderingStrategy("LowFirst"), tables)] == ["H", "Fe"]
    assert [s.element for s in order_sites([h, fe], OrderingStrategy("HighFirst"), tables)] == ["Fe", "H"]
    o = Site("O", -2, (0.2, 0.0, 0.0))
    h2 = Site("H", 1, (0.5, 0.0, 0.0))
    assert [s.element for s in order_sites([h2, o], OrderingStrategy("XYZ"), tables)] == ["O", "H"]


def test_random_ordering_is_stable_per_material(tables):
    sites = [Site("O", -2, (0.1 * i, 0, 0)) for i in range(8)]
    s = OrderingStrategy("Random", 3)
    first = order_sites(sites, s, tables, "mp-1")
    assert order_sites(sites, s, tables, "mp-1") == first
    assert sorted(first, key=lambda x: x.frac) == sorted(sites, key=lambda x: x.frac)


def test_ordering_parse():
    assert OrderingStrategy.parse("Random(7)") == OrderingStrategy("Random", 7)
    assert str(OrderingStrategy.parse("Random:7")) == "Random(7)"
    with pytest.raises(ConfigError):
        OrderingStrategy.parse("Random")
    with pytest.raises(ConfigError):
        OrderingStrategy("Alphabetical")


# ---------- quantization ----------

def test_quantize_frac():
    assert quantize_frac(0.0) == 0
    assert quantize_frac(0.5) == 512
    assert quantize_frac(0.9999) == 1023
    with pytest.raises(OutOfRange):
        quantize_frac(1.0)
    with pytest.raises(OutOfRange):
        quantize_frac(-0.1)


def test_dequantize_frac():
    assert dequantize_frac(0) == 0.00048828125
    assert dequantize_frac(512) == 0.50048828125
    with pytest.raises(OutOfRange):
        dequantize_frac(1024)


def test_quantize_lattice_param():
    assert quantize_lattice_param("a", 2.0, RANGES) == (0, False)
    assert quantize_lattice_param("a", 6.0, RANGES) == (512, False)
    assert quantize_lattice_param("c", 25.0, RANGES) == (1023, True)
    assert quantize_lattice_param("alpha", 50.0, RANGES) == (0, True)


def test_ranges_validated():
    with pytest.raises(ConfigError):
        LatticeRanges(a=(5.0, 5.0))


# ---------- encode / decode ----------

def test_sequence_length_law(vocab, tables):
    rng = np.random.default_rng(0)
    for n in range(1, 21):
        c = random_crystal(rng, tables, n)
        seq = encode(c, vocab, OrderingStrategy("HighFirst"), RANGES, tables=tables)
        assert len(seq) == sequence_length(n) == 4 * n + 10


def test_encode_minimal_cell(vocab, tables):
    c = Crystal(LatticeParams(2.0, 2.0, 2.0, 90.0, 90.0, 90.0), (Site("H", 1, (0.0, 0.0, 0.0)),))
    ids = encode(c, vocab, OrderingStrategy("HighFirst"), RANGES, reduce=False, tables=tables).ids
    bin0 = vocab.bin_id(0)
    angle = vocab.bin_id(512)
    assert ids == (SOS, ATOMS, vocab.element_id("H", 1), bin0, bin0, bin0, LATTICE,
                   bin0, bin0, bin0, angle, angle, angle, EOS)


def test_encode_records_clamping(vocab, tables):
    c = Crystal(LatticeParams(3.0, 3.0, 25.0, 90.0, 90.0, 90.0), (Site("H", 1, (0.0, 0.0, 0.0)),))
    seq = encode(c, vocab, OrderingStrategy("HighFirst"), RANGES, tables=tables)
    assert seq.clamped == ("c",)


def test_encode_unknown_pair(vocab, tables):
    c = Crystal(LatticeParams(3, 3, 3, 90, 90, 90), (Site("O", 5, (0, 0, 0)),))
    with pytest.raises(UnknownElementOxi):
        encode(c, vocab, OrderingStrategy("HighFirst"), RANGES, tables=tables)


def _check_round_trip(c, tokenizer, tables):
    decoded = tokenizer.decode(tokenizer.encode(c, "x"))
    reduced = reduce_crystal(c)
    expected = order_sites(reduced.sites, tokenizer.strategy, tables, "x")
    assert [(s.element, s.oxidation_state) for s in decoded.sites] == \
           [(s.element, s.oxidation_state) for s in expected]
    err = np.abs(decoded.frac_coords() - np.array([s.frac for s in expected]))
    err = np.minimum(err, 1.0 - err)
    assert err.max() <= 1.0 / 2048 + 1e-12
    for name, got, want in zip(LATTICE_NAMES, decoded.lattice.as_tuple(), reduced.lattice.as_tuple()):
        lo, hi = RANGES.range_of(name)
        if lo <= want <= hi:
            assert abs(got - want) <= (hi - lo) / 2048 + 1e-9


@pytest.mark.parametrize("n_crystals", [300, pytest.param(10_000, marks=pytest.mark.slow)])
def test_round_trip_random_crystals(n_crystals, tokenizer, tables):
    rng = np.random.default_rng(1)
    for _ in range(n_crystals):
        _check_round_trip(random_crystal(rng, tables), tokenizer, tables)


@pytest.mark.parametrize("ordering", ["LowFirst", "XYZ", "Random(5)"])
def test_round_trip_other_orderings(ordering, vocab, tables):
    tok = CrystalTokenizer(vocab, OrderingStrategy.parse(ordering), tables=tables)
    rng = np.random.default_rng(2)
    for _ in range(50):
        _check_round_trip(random_crystal(rng, tables), tok, tables)


def test_round_trip_coords_first(vocab, tables):
    tok = CrystalTokenizer(vocab, OrderingStrategy("HighFirst"), coords_first=True, tables=tables)
    rng = np.random.default_rng(3)
    c = random_crystal(rng, tables, 3)
    ids = tok.encode(c).ids
    assert vocab.token_class(ids[2]) == BIN and vocab.token_class(ids[5]) == ELEMENT
    _check_round_trip(c, tok, tables)
    with pytest.raises(GrammarError):
        decode(ids, vocab, RANGES)


def test_decode_missing_lattice(tokenizer, fe_o):
    ids = list(tokenizer.encode(fe_o).ids)
    start = ids.index(LATTICE)
    with pytest.raises(GrammarError) as info:
        tokenizer.decode(ids[:start] + [EOS])
    assert info.value.position == start


def test_decode_element_where_bin_expected(tokenizer, vocab, fe_o):
    ids = list(tokenizer.encode(fe_o).ids)
    ids[3] = vocab.element_id("O", -2)
    with pytest.raises(GrammarError) as info:
        tokenizer.decode(ids)
    assert info.value.position == 3
    assert info.value.expected == BIN


def test_decode_rejects_empty_and_truncated(tokenizer, fe_o):
    with pytest.raises(GrammarError):
        tokenizer.decode([SOS, ATOMS, LATTICE])
    ids = tokenizer.encode(fe_o).ids
    with pytest.raises(GrammarError) as info:
        tokenizer.decode(ids[:-3])
    assert info.value.position == len(ids) - 3
    with pytest.raises(GrammarError):
        tokenizer.decode(list(ids) + [EOS])


@pytest.mark.parametrize("n_streams", [5_000, pytest.param(100_000, marks=pytest.mark.slow)])
def test_grammar_fuzz(n_streams, tokenizer, vocab, fe_o):
    rng = np.random.default_rng(4)
    valid = list(tokenizer.encode(fe_o).ids)
    n_ok = 0
    for i in range(n_streams):
        if i % 2:
            ids = list(rng.integers(-2, vocab.total_size + 2, size=rng.integers(0, 40)))
        else:
            ids = list(valid)
            for _ in range(rng.integers(1, 4)):
                ids[rng.integers(len(ids))] = int(rng.integers(0, vocab.total_size))
        try:
            tokenizer.decode(ids)
            n_ok += 1
        except GrammarError as exc:
            assert 0 <= exc.position <= len(ids)
    assert n_ok > 0


# ---------- grammar state ----------

def test_grammar_masks(vocab):
    g = GrammarState()
    mask = g.allowed_mask(vocab)
    assert mask.sum() == 1 and mask[SOS]
    for t in (SOS, ATOMS, vocab.element_id("Fe", 2)):
        g.advance(t, vocab)
    assert np.array_equal(g.allowed_mask(vocab), vocab.class_mask(BIN))
    for _ in range(3):
        g.advance(vocab.bin_id(0), vocab)
    mask = g.allowed_mask(vocab)
    assert mask[LATTICE] and mask[vocab.element_id("O", -2)] and not mask[EOS]
    g.advance(LATTICE, vocab)
    for _ in range(6):
        g.advance(vocab.bin_id(1), vocab)
    mask = g.allowed_mask(vocab)
    assert mask.sum() == 1 and mask[EOS]


def test_grammar_max_atoms(vocab):
    g = GrammarState(max_atoms=1)
    for t in (SOS, ATOMS, vocab.element_id("Fe", 2), vocab.bin_id(0), vocab.bin_id(0), vocab.bin_id(0)):
        g.advance(t, vocab)
    mask = g.allowed_mask(vocab)
    assert mask.sum() == 1 and mask[LATTICE]


# ---------- oxidation assignment ----------

def test_assign_oxidation_states(tables):
    assert assign_oxidation_states(["Na", "Cl"], tables) == [1, -1]
    states = assign_oxidation_states(["Fe", "Fe", "O", "O", "O"], tables)
    assert states == [3, 3, -2, -2, -2]
    assert sum(assign_oxidation_states(["Ti", "O", "O"], tables)) == 0


def test_assign_oxidation_states_unbalanced(tables):
    assert assign_oxidation_states(["Na", "Na"], tables) == [0, 0]


def test_assign_oxidation_states_keeps_given(tables):
    elements = ["Fe", "Fe", "Fe", "O", "O", "O", "O"]
    given = [3, 3, None, None, None, None, None]
    assert assign_oxidation_states(elements, tables, given) == [3, 3, 2, -2, -2, -2, -2]
    # no neutral completion: given states stay, unknown ones become 0
    assert assign_oxidation_states(["Fe", "O"], tables, [3, None]) == [3, 0]
