import math
import os
from pathlib import Path

import pytest

import duck

SOURCE_DIR = Path(os.environ.get("DUCK_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def cancer_text():
    return (SOURCE_DIR / "kb" / "cancer.duck").read_text()


def test_chaining_bounds():
    lo, hi = duck.prc_bounds((0.2, 0.8), 0.8, 0.2, 0.2)
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert hi == pytest.approx(0.625, abs=1e-12)
    rc_lo, rc_hi = duck.rc_bounds((0.2, 0.8), 0.8, 0.2, 0.2)
    assert rc_lo <= lo + 1e-12 and hi <= rc_hi + 1e-12


def test_chaining_under_independence():
    lo, hi = duck.prci_forward((0.8, 1.0), (0.7, 0.8), (0.2, 0.3))
    assert (round(lo, 2), round(hi, 2)) == (0.6, 0.8)
    lo, hi = duck.prci_update((0.6, 0.8), 0.4, (0.8, 0.9))
    assert hi == pytest.approx(2 / 3, abs=1e-12)


def test_invalid_interval_raises():
    with pytest.raises(duck.DuckError):
        duck.prc_bounds((0.9, 0.1), 1.0, 0.5, 0.5)


def test_cancer_saturation():
    kb = duck.KnowledgeBase.from_text(cancer_text())
    result = kb.saturate()
    assert result.status == "fixpoint"
    assert result.derived > 0
    lo, hi = result.kb.query("P(D | A)")
    assert math.isclose(lo, 0.68, abs_tol=1e-9) and math.isclose(hi, 0.68, abs_tol=1e-9)
    lo, hi = result.kb.query("P(E | A)")
    assert math.isclose(lo, 0.64, abs_tol=1e-9) and math.isclose(hi, 0.64, abs_tol=1e-9)
    assert "I11a" in result.kb.trace("P(D | A)")


def test_restricted_rules_and_limits():
    kb = duck.KnowledgeBase.from_text(cancer_text())
    assert kb.saturate(max_rounds=2).status == "round-limit"
    result = kb.saturate(rules=["I7"])
    assert result.kb.query("P(D | A)") == (0.0, 1.0)


def test_contradiction_is_reported():
    kb = duck.KnowledgeBase()
    kb.add_rule("A", "B", 0.6)
    kb.add_rule("A", "C & B", (0.7, 0.9))
    result = kb.saturate()
    assert result.status == "inconsistent"
    assert result.inconsistency
    with pytest.raises(duck.DuckError):
        kb.add_rule("A", "B", 0.7)


def test_text_round_trip():
    text = "rule  B&A->C:[0.20,.8]\nbirule A<->B:[.5,1]/[0.25,0.5]\nquery P( C|A )\n"
    canonical = duck.normalize(text)
    assert canonical.splitlines()[0] == "rule A & B -> C : [0.2, 0.8]"
    assert duck.normalize(canonical) == canonical
    with pytest.raises(duck.DuckError, match="interval-order"):
        duck.normalize("rule A -> B : [0.9, 0.1]\n")


def test_estimate_range_brackets_the_calculus():
    kb = duck.KnowledgeBase()
    kb.add_birule("A", "B", (0.2, 0.8), 0.8)
    kb.add_birule("B", "C", 0.2, 0.2)
    report = kb.estimate_range("P(C | A)", budget=5000, workers=1)
    assert report.feasible_found
    assert report.achieved_min >= -1e-6
    assert report.achieved_max <= 0.625 + 1e-6
    assert report.achieved_max >= 0.6
    assert sum(report.max_witness) == pytest.approx(1.0)
    again = kb.estimate_range("P(C | A)", budget=5000, workers=1)
    assert again.achieved_max == report.achieved_max
