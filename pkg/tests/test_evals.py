import json

import numpy as np
import pytest

from materium.core.crystal import Crystal, LatticeParams, Site, density
from materium.core.errors import ConfigError, TooFewSamples, UnknownElement
from materium.data.corpus import GeneratedSample
from materium.data.records import record_from_crystal
from materium.evals.baseeval import adherence_summary, grouped_adherence
from materium.evals.bimodality import BIMODALITY_THRESHOLD, bimodality_coefficient, bimodality_summary
from materium.evals.density_adherence import density_adherence
from materium.evals.formula_match import formula_match_rate, top_k_formulas
from materium.evals.hhi import HHIAdherence, hhi_of_crystal
from materium.evals.novelty import novelty, training_fingerprints
from materium.evals.report import EvalReport, Evaluator
from materium.evals.space_group_echo import SpaceGroupEcho
from materium.evals.uniqueness import uniqueness


def cubic(a, *sites):
    return Crystal(LatticeParams(a, a, a, 90.0, 90.0, 90.0), tuple(Site(*s) for s in sites))


NACL = cubic(5.6, ("Na", 1, (0.0, 0.0, 0.0)), ("Cl", -1, (0.5, 0.5, 0.5)))
MGO = cubic(4.2, ("Mg", 2, (0.0, 0.0, 0.0)), ("O", -2, (0.5, 0.5, 0.5)))


def sample(i, crystal, targets=None, **extra):
    record = record_from_crystal(f"gen-{i:06d}", crystal, **extra) if crystal is not None else None
    return GeneratedSample(i, i, dict(targets or {}), (0, 1), record, grammar_valid=crystal is not None,
                           charge_neutral=crystal is not None, error=None if crystal is not None else "bad")


# ---------- uniqueness and novelty ----------

def test_uniqueness(fe_o):
    assert uniqueness([fe_o, fe_o]) == 0.5
    assert uniqueness([fe_o, NACL, MGO, fe_o]) == 0.75
    assert uniqueness([]) is None


def test_uniqueness_ignores_site_order_and_translation(fe_o):
    swapped = cubic(4.3, ("O", -2, (0.0, 0.0, 0.0)), ("Fe", 2, (0.5, 0.5, 0.5)))
    assert uniqueness([fe_o, swapped]) == 0.5


def test_novelty(fe_o):
    train = training_fingerprints([fe_o, NACL])
    assert novelty([fe_o, MGO], train) == 0.5
    assert novelty([fe_o], set()) == 1.0
    assert novelty([], train) is None


# ---------- adherence ----------

def test_adherence_summary():
    s = adherence_summary([1.0, 2.0, 3.0], 2.0)
    assert s["n"] == 3 and s["mean"] == 2.0 and s["median"] == 2.0
    assert s["mae"] == pytest.approx(2 / 3)
    assert s["q05"] <= s["q25"] <= s["q75"] <= s["q95"]
    assert adherence_summary([], 2.0)["mae"] is None


def test_grouped_adherence_orders_targets():
    groups = grouped_adherence([(5.0, 4.0), (2.0, 2.5), (5.0, 6.0)])
    assert list(groups) == ["2.0", "5.0"]
    assert groups["5.0"]["mae"] == 1.0 and groups["5.0"]["n"] == 2
    assert grouped_adherence([]) is None


def test_density_adherence(fe_o, tables):
    d = density(fe_o, tables)
    out = density_adherence([(fe_o, 4.0), (fe_o, 4.0)], tables)
    assert out["4.0"]["mae"] == pytest.approx(abs(d - 4.0))
    assert out["4.0"]["mean"] == pytest.approx(d)
    assert density_adherence([], tables) is None


# ---------- formulas ----------

def test_formula_match_rate(fe_o):
    pairs = [(fe_o, "Fe1O1")] + [(NACL, "Fe1O1")] * 4
    assert formula_match_rate(pairs) == 0.2
    assert formula_match_rate([(fe_o, "Fe2O2"), (fe_o, [("O", 1), ("Fe", 1)])]) == 1.0
    assert formula_match_rate([]) is None


def test_top_k_formulas(fe_o):
    pairs = [(fe_o, "FeO")] + [(NACL, "FeO")] * 4
    top = top_k_formulas(pairs, k=3)["Fe1O1"]
    assert top["top"] == [["Cl1Na1", 4], ["Fe1O1", 1]]
    assert top["n"] == 5
    assert not top["in_top_1"] and top["in_top_2"] and top["in_top_3"]


# ---------- HHI ----------

def test_hhi_of_crystal(fe_o, tables):
    assert hhi_of_crystal(fe_o, tables) == pytest.approx(1450.0)
    assert hhi_of_crystal(fe_o, tables, mode="max") == 2400.0
    assert hhi_of_crystal(fe_o, {"Fe": 1000, "O": 0}) == 500.0
    with pytest.raises(UnknownElement):
        hhi_of_crystal(fe_o, {"Fe": 1000})
    with pytest.raises(ConfigError):
        hhi_of_crystal(fe_o, tables, mode="min")


def test_hhi_adherence_skips_untabulated_elements(fe_o, tables):
    water = cubic(3.0, ("H", 1, (0.0, 0.0, 0.0)), ("H", 1, (0.5, 0.0, 0.0)), ("O", -2, (0.0, 0.5, 0.0)))
    samples = [sample(0, fe_o, {"hhi": 1000}), sample(1, water, {"hhi": 1000}), sample(2, None, {"hhi": 1000})]
    out = HHIAdherence(tables).eval(samples)
    assert out["1.0"]["n"] == 1
    assert out["1.0"]["mean"] == pytest.approx(1.45)
    assert out["1.0"]["mae"] == pytest.approx(0.45)


# ---------- bimodality ----------

def test_bimodality_needs_ten_values():
    with pytest.raises(TooFewSamples):
        bimodality_summary(np.arange(9.0))


def test_two_clusters_are_bimodal():
    out = bimodality_summary([0.0] * 10 + [1.0] * 10, bins=4)
    assert out["bimodal"] and out["coefficient"] > BIMODALITY_THRESHOLD
    assert sum(c for _, c in out["histogram"]) == 20
    assert len(out["histogram"]) == 5


def test_normal_values_are_not_bimodal():
    values = np.random.default_rng(0).normal(size=2000)
    assert bimodality_coefficient(values) < BIMODALITY_THRESHOLD
    assert not bimodality_summary(values)["bimodal"]


def test_constant_values_have_no_coefficient():
    out = bimodality_summary([3.0] * 12)
    assert out["coefficient"] is None and not out["bimodal"]


# ---------- space group echo ----------

def test_space_group_echo(fe_o):
    samples = [sample(0, fe_o, {"space_group": 225}, space_group_target=225),
               sample(1, fe_o, {"space_group": 225}),
               sample(2, fe_o, {"space_group": 62}, space_group_target=62),
               sample(3, fe_o)]
    out = SpaceGroupEcho().eval(samples)
    assert out["echo_rate"] == pytest.approx(2 / 3)
    assert out["per_target"] == {"62": 1, "225": 2}
    assert SpaceGroupEcho().eval([sample(0, fe_o)]) is None


# ---------- report ----------

def test_evaluator_fills_report(fe_o, tables):
    samples = [sample(0, fe_o, {"density": 4.0, "formula": "FeO"}),
               sample(1, fe_o, {"density": 4.0, "formula": "FeO"}),
               sample(2, NACL, {"density": 4.0, "formula": "FeO"}),
               sample(3, None, {"density": 4.0, "formula": "FeO"})]
    report = Evaluator(training=training_fingerprints([NACL]), tables=tables).evaluate(samples)
    assert (report.n_total, report.n_grammar_valid, report.n_charge_neutral) == (4, 3, 3)
    assert report.frac_valid == 0.75
    assert report.frac_unique == pytest.approx(2 / 3)
    assert report.frac_novel == pytest.approx(2 / 3)
    assert report.formula_match_rate == pytest.approx(2 / 3)
    assert report.adherence["density"]["4.0"]["n"] == 3
    assert report.adherence["hhi"] is None
    assert report.hhi_bimodality is None
    assert report.space_group_echo is None


def test_empty_valid_set_reports_none():
    report = Evaluator().evaluate([sample(0, None), sample(1, None)])
    assert report.frac_valid == 0.0
    assert report.frac_unique is None and report.frac_novel is None
    assert report.formula_match_rate is None
    headline = report.headline()
    assert headline["density_mae"] is None and headline["frac_unique"] is None


def test_report_save_writes_nulls(tmp_path):
    report = Evaluator().evaluate([sample(0, None)])
    report.save(tmp_path / "report.json", tmp_path / "report.csv")
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["frac_unique"] is None and data["external"]["e_above_hull"] is None
    rows = dict(line.split(",", 1) for line in (tmp_path / "report.csv").read_text().splitlines()[1:])
    assert rows["frac_unique"] == "" and rows["n_total"] == "1"
    assert EvalReport.from_dict(data) == report


def test_evaluator_rejects_unknown_metric():
    with pytest.raises(ConfigError):
        Evaluator([{"name": "Stability"}])


def test_evaluator_always_counts_validity(fe_o):
    report = Evaluator([{"name": "Uniqueness"}]).evaluate([sample(0, fe_o)])
    assert report.n_total == 1 and report.frac_unique == 1.0
