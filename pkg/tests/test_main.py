import json

import pytest

from materium.core.errors import ConfigError, ParseError, UnknownElementOxi
from materium.core.stats import Stats
from materium.data.corpus import load_corpus
from materium.data.records import record_from_crystal
from materium.evals.report import EvalReport
from materium.main import Materium, tokenize_records, training_examples
from materium.tokenizer.ordering import OrderingStrategy
from materium.tokenizer.tokenizer import CrystalTokenizer
from materium.tokenizer.vocab import build_vocab


def run_config(tmp_path, **overrides):
    cfg = {
        "runDetails": "toy",
        "outputDir": str(tmp_path / "outputs"),
        "dataDetails": {"toy": {"n": 16, "seed": 0, "maxSites": 3}},
        "orderingDetails": [{"name": "HighFirst"}],
        "modelDetails": {"preset": "tiny", "args": {"n_layers": 1, "n_heads": 2, "d_emb": 16,
                                                    "d_ffn_hidden": 32, "dropout_rate": 0.0}},
        "trainDetails": {"epochs": 1, "batch_size": 8, "progress": False},
        "sampleDetails": {"n_samples": 2, "progress": False, "conditions": {"density": 3.0}},
        "evalDetails": [{"name": "Validity"}, {"name": "Uniqueness"}, {"name": "Novelty"},
                        {"name": "DensityAdherence"}],
    }
    cfg.update(overrides)
    return cfg


# ---------- helpers ----------

def test_tokenize_records_stats(toy_corpus, tokenizer):
    token_records, stats = tokenize_records(toy_corpus[:8], tokenizer)
    assert stats["n_records"] == 8
    assert sum(stats["length_histogram"].values()) == 8
    assert stats["max_length"] == max(len(t.ids) for t in token_records)
    assert 0 < stats["vocab_coverage"] < 1
    assert all(t.conditions["formula"] == r.properties["reduced_formula"] for t, r in zip(token_records, toy_corpus))


def test_tokenize_records_carry_layout(toy_corpus, vocab, tables):
    tokenizer = CrystalTokenizer(vocab, OrderingStrategy.parse("LowFirst"), coords_first=True, tables=tables)
    token_records, _ = tokenize_records(toy_corpus[:2], tokenizer)
    assert {(t.ordering, t.coords_first) for t in token_records} == {("LowFirst", True)}


def test_tokenize_records_error_names_file_and_line(tmp_path, fe_o, tables):
    nacl = {"id": "nacl", "lattice": [5.69, 5.69, 5.69, 90, 90, 90],
            "sites": [{"element": "Na", "oxidation_state": 1, "frac": [0, 0, 0]},
                      {"element": "Cl", "oxidation_state": -1, "frac": [0.5, 0.5, 0.5]}]}
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps(nacl) + "\n" + json.dumps(record_from_crystal("feo", fe_o).to_dict()) + "\n",
                    encoding="utf-8")
    records = load_corpus(path, tables)
    tokenizer = CrystalTokenizer(build_vocab({"Na": (1,), "Cl": (-1,)}, tables), tables=tables)
    with pytest.raises(ParseError) as info:
        tokenize_records(records, tokenizer)
    assert info.value.line == 2
    assert str(path) in str(info.value) and "record feo" in str(info.value)
    assert isinstance(info.value.__cause__, UnknownElementOxi)


def test_tokenize_records_without_formula(toy_corpus, tokenizer):
    token_records, _ = tokenize_records(toy_corpus[:2], tokenizer, use_formula=False)
    assert all("formula" not in t.conditions for t in token_records)


def test_training_examples_keep_schema_conditions(toy_corpus, tokenizer):
    token_records, _ = tokenize_records(toy_corpus[:4], tokenizer)
    examples = training_examples(token_records, schema=("hhi",), use_formula=False)
    for ex in examples:
        assert set(ex.conditions.present()) <= {"hhi"}
        assert ex.conditions.formula is None


# ---------- configuration ----------

def test_resolved_config_fills_defaults(tmp_path):
    run = Materium(run_config(tmp_path))
    resolved = run.resolved()
    assert resolved["trainDetails"]["lr_init"] == 4e-4
    assert resolved["modelDetails"]["args"]["d_emb"] == 16
    assert resolved["sampleDetails"]["conditions"] == {"density": [3.0]}
    assert (tmp_path / "outputs" / "toy" / "HighFirst").is_dir()


def test_random_ordering_directory_carries_seed(tmp_path):
    run = Materium(run_config(tmp_path, orderingDetails=[{"name": "Random", "args": {"seed": 7}},
                                                         {"name": "XYZ"}]))
    assert [n for n, _ in run.orderings] == ["Random(7)", "XYZ"]
    assert Stats(run.resolved(), run.outputDir).names == ["Random(7)", "XYZ"]


@pytest.mark.parametrize("overrides", [
    {"runDetails": ""},
    {"algoDetails": []},
    {"orderingDetails": [{"name": "HighFirst"}, {"name": "HighFirst"}]},
    {"orderingDetails": [{"name": "Random"}]},
    {"modelDetails": {"preset": "huge"}},
    {"modelDetails": {"preset": "tiny", "args": {"d_emb": 30, "n_heads": 4}}},
    {"modelDetails": {"preset": "tiny", "args": {"width": 3}}},
    {"trainDetails": {"lr_init": -1.0}},
    {"sampleDetails": {"temperature": 0.0}},
    {"evalDetails": [{"name": "Stability"}]},
])
def test_invalid_run_config(tmp_path, overrides):
    with pytest.raises(ConfigError):
        Materium(run_config(tmp_path, **overrides))


def test_run_config_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(run_config(tmp_path)), encoding="utf-8")
    assert Materium(str(path)).runDetails == "toy"


# ---------- end to end ----------

def test_benchmark_writes_every_artifact(tmp_path):
    run = Materium(run_config(tmp_path))
    run.resultsDir = str(tmp_path / "results")
    summary = run.benchmark()

    root = tmp_path / "outputs" / "toy"
    assert json.loads((root / "config.json").read_text())["runDetails"] == "toy"
    assert (root / "vocab.txt").exists()
    for name in ("tokens.jsonl", "tokenize_stats.json", "metrics.csv", "checkpoint_epoch1.npz", "checkpoint.npz",
                 "generated.jsonl",
                 "generation_stats.json", "report.json", "report.csv"):
        assert (root / "HighFirst" / name).exists(), name

    report = EvalReport.from_dict(json.loads((root / "HighFirst" / "report.json").read_text()))
    assert report.n_total == 2
    assert report.n_grammar_valid == 2
    assert summary["HighFirst"]["frac_valid"]["mean"] == 1.0
    assert summary["HighFirst"]["formula_match_rate"]["mean"] is None
    assert (tmp_path / "results" / "toyStats.json").exists()
    assert (tmp_path / "results" / "toyStats.csv").exists()


# ---------- stats ----------

def write_report(path, **fields):
    path.parent.mkdir(parents=True, exist_ok=True)
    EvalReport(**fields).save(path)


def test_stats_averages_reports(tmp_path):
    cfg = {"runDetails": "cmp", "orderingDetails": [{"name": "HighFirst"}, {"name": "LowFirst"}, {"name": "XYZ"}]}
    runs = tmp_path / "outputs" / "cmp"
    write_report(runs / "HighFirst" / "report.json", frac_valid=1.0, frac_unique=0.5)
    write_report(runs / "LowFirst" / "report.json", frac_valid=0.5)
    write_report(runs / "LowFirst" / "report2.json", frac_valid=1.0)
    (runs / "XYZ").mkdir()
    (runs / "LowFirst" / "report3.json").write_text("{broken", encoding="utf-8")

    stats = Stats(cfg, tmp_path / "outputs", tmp_path / "results")
    summary = stats.compute()
    assert summary["HighFirst"]["frac_valid"] == {"mean": 1.0, "std": 0.0}
    assert summary["HighFirst"]["frac_unique"]["mean"] == 0.5
    assert summary["LowFirst"]["frac_valid"]["mean"] == 0.75
    assert summary["LowFirst"]["frac_valid"]["std"] == pytest.approx(0.25)
    assert summary["LowFirst"]["frac_unique"]["mean"] is None
    assert summary["XYZ"]["frac_valid"]["mean"] is None

    saved = json.loads((tmp_path / "results" / "cmpStats.json").read_text())
    assert saved == summary
    header = (tmp_path / "results" / "cmpStats.csv").read_text().splitlines()[0]
    assert header.startswith("name,frac_valid_mean")
    assert stats.table(summary).loc["HighFirst", "frac_valid"] == "1.000±0.000"
