import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sftcurate.config import ActiveSite, LengthBounds, PipelineConfig
from sftcurate.curation import CandidateRecord, partition
from sftcurate.errors import EmptyTable, MissingScore, OrientationMismatch, UnannotatedRecord
from sftcurate.config import MissingScorePolicy
from sftcurate.report import (
    Constraints,
    compare_distributions,
    compliance_metrics,
    dominance_fraction,
    max_id_histogram,
    parse_machine,
    render_pipeline_report,
    table_rows,
)
from sftcurate.scorers import Orientation, ScoreTable, StubScorer
from sftcurate.seqcore import ProteinSeq
from sftcurate.stages import PipelineReport, StageReport

EDGES = PipelineConfig().bin_edges


def _report(rows):
    rep = PipelineReport()
    for name, n, k in rows:
        rep.add(StageReport(name, n, k))
    return rep


def test_single_row_render():
    text, machine = render_pipeline_report(_report([("start_token", 60000, 10)]))
    row = next(line for line in text.splitlines() if line.startswith("Starting Token"))
    assert row.split()[-2:] == ["60000", "0.017"]
    kv = parse_machine(machine)
    assert kv["stage.start_token.input"] == "60000"
    assert kv["stage.start_token.removed"] == "10"
    assert kv["final_retained"] == "59990"


def test_empty_run_render():
    text, machine = render_pipeline_report(PipelineReport())
    lines = text.splitlines()
    assert lines[0].split() == ["Stage", "Input", "#", "Filtered", "%"]
    assert lines[-1].split() == ["Final", "Retained", "0"]
    assert parse_machine(machine)["final_retained"] == "0"


def test_three_stage_sequence():
    rep = _report([("start_token", 60000, 10), ("length", 59990, 4000), ("active_site", 55990, 990)])
    rows = table_rows(rep)
    assert [r.input_count for r in rows] == [60000, 59990, 55990]
    assert [round(r.pct, 2) for r in rows] == [0.02, 6.67, 1.77]
    text, _ = render_pipeline_report(rep)
    assert "Final Retained" in text and text.rstrip().endswith("55000")


def test_combined_row_sums_subrows():
    rep = _report([("start_token", 100, 0), ("length", 100, 0), ("active_site", 100, 0),
                   ("max_id", 100, 0), ("partition", 100, 4), ("dedup", 96, 6),
                   ("sampling", 90, 40), ("plddt", 50, 5)])
    rows = table_rows(rep)
    combined = next(r for r in rows if r.title.startswith("Max ID +"))
    subs = [r for r in rows if r.indent]
    assert combined.removed_count == sum(r.removed_count for r in subs) == 10
    assert combined.input_count == 100


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=8, max_size=8), st.integers(0, 5000))
def test_machine_form_carries_exact_integers(removals, start):
    rep = PipelineReport()
    n = start
    names = ["start_token", "length", "active_site", "max_id", "partition", "dedup", "sampling", "plddt"]
    for name, k in zip(names, removals):
        k = min(k, n)
        rep.add(StageReport(name, n, k))
        n -= k
    _, machine = render_pipeline_report(rep)
    kv = parse_machine(machine)
    for s in rep.stages:
        assert int(kv[f"stage.{s.stage_name}.input"]) == s.input_count
        assert int(kv[f"stage.{s.stage_name}.removed"]) == s.removed_count
        pct = float(kv[f"stage.{s.stage_name}.removed_pct"])
        assert pct == pytest.approx(s.removed_pct, abs=1e-6)
    assert int(kv["final_retained"]) == n
    assert kv["complete"] == "true"


def test_stage_report_invariants():
    with pytest.raises(ValueError):
        StageReport("x", 5, 6)
    rep = _report([("start_token", 10, 2)])
    with pytest.raises(ValueError):
        rep.add(StageReport("length", 9, 0))


def _ref():
    return ProteinSeq("ref", "M" + "ACDEFGHILNPQRSTVWY" * 2 + "K" + "ACDEFGHILNPQRSTVWY" * 2)


def test_compliance_independent_constraints():
    ref = _ref()
    site = ActiveSite("ref", 38, "K")
    good = ref.residues
    mutated = good[:37] + "A" + good[38:]
    pool = [ProteinSeq("a", good), ProteinSeq("b", mutated), ProteinSeq("c", good[:60])]
    cons = Constraints(LengthBounds.explicit(70, 80), site, ref, 0.8)
    table = ScoreTable("plddt", {"a": 0.9, "b": 0.9, "c": 0.5})
    rep = compliance_metrics(pool, cons, table)
    assert rep.count == 3
    assert rep.length_compliance_pct == pytest.approx(200 / 3)
    assert rep.active_site_rate_pct == pytest.approx(200 / 3)
    assert rep.plddt_pass_pct == pytest.approx(200 / 3)
    assert "length" in rep.constraints


def test_compliance_errors_and_missing_policy():
    cons = Constraints(LengthBounds.explicit(1, 10), plddt_threshold=0.8)
    with pytest.raises(EmptyTable):
        compliance_metrics([], cons)
    pool = [ProteinSeq("a", "MKW"), ProteinSeq("z", "MKW")]
    table = ScoreTable("plddt", {"a": 0.9})
    rep = compliance_metrics(pool, cons, table)
    assert rep.plddt_pass_pct == 50.0 and rep.missing_scores == 1
    strict = Constraints(LengthBounds.explicit(1, 10), plddt_threshold=0.8,
                         missing_score=MissingScorePolicy.HARD_FAIL)
    with pytest.raises(MissingScore):
        compliance_metrics(pool, strict, table)


def test_histogram_examples():
    h = max_id_histogram([1.0] * 7, EDGES)
    assert h.counts == (0, 0, 0, 0, 0, 7) and h.total == 7
    h = max_id_histogram([0.45, 0.55, 0.65, 0.75, 0.85, 0.95] * 10 + [0.1], EDGES)
    assert h.counts == (10,) * 6 and h.below_range == 1
    assert h.mass_below(0.70) == 31
    with pytest.raises(UnannotatedRecord):
        max_id_histogram([CandidateRecord("x", ProteinSeq("x", "M"))], EDGES)
    assert "0.90-1.00" in h.render()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=0, max_size=60))
def test_histogram_agrees_with_partition(values):
    recs = [CandidateRecord(f"r{i}", ProteinSeq(f"r{i}", "M"), max_id=v) for i, v in enumerate(values)]
    h = max_id_histogram(recs, EDGES)
    part, _ = partition(recs, PipelineConfig())
    assert h.counts == tuple(len(b) for b in part.bins)
    assert h.below_range == len(part.below_range)
    assert sum(h.counts) + h.below_range == len(values)


def _pairs_dominance(a, b, higher=True):
    wins = ties = 0
    for x, y in itertools.product(a, b):
        if y == x:
            ties += 1
        elif (y > x) == higher:
            wins += 1
    return (wins + 0.5 * ties) / (len(a) * len(b))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=25),
       st.lists(st.integers(-5, 5), min_size=1, max_size=25), st.booleans())
def test_dominance_matches_pairwise_count(a, b, higher):
    o = Orientation.HIGHER_IS_BETTER if higher else Orientation.LOWER_IS_BETTER
    got = dominance_fraction(np.array(a, float), np.array(b, float), o)
    assert got == pytest.approx(_pairs_dominance(a, b, higher), abs=1e-12)


def test_compare_examples():
    a = StubScorer(seed=1).table(f"s{i}" for i in range(500))
    same = compare_distributions(a, a)
    assert same.mean_shift == 0 and same.median_shift == 0 and same.dominance == 0.5
    # a shift wider than the value range puts every b above every a
    b = ScoreTable("custom", {k: v + 2.0 for k, v in a.entries.items()})
    up = compare_distributions(a, b)
    assert up.mean_shift == pytest.approx(2.0) and up.dominance == 1.0
    small = compare_distributions(a, ScoreTable("custom", {k: v + 0.25 for k, v in a.entries.items()}))
    assert small.mean_shift == pytest.approx(0.25) and 0.5 < small.dominance < 1.0
    lo = ScoreTable("docking", a.entries, Orientation.LOWER_IS_BETTER)
    with pytest.raises(OrientationMismatch):
        compare_distributions(a, lo)
    with pytest.raises(EmptyTable):
        compare_distributions(ScoreTable("custom", {}), a)


def test_compare_known_offset():
    a = StubScorer(seed=2, name="custom").table(f"a{i}" for i in range(2000))
    b = StubScorer(seed=2, lo=0.1, hi=1.1, name="custom").table(f"a{i}" for i in range(2000))
    cmp_ = compare_distributions(a, b)
    assert abs(cmp_.mean_shift - 0.1) <= 0.01
