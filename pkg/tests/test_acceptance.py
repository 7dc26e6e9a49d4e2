"""Acceptance criteria, each at its stated tolerance; one PASS/FAIL line per criterion."""

import dataclasses
import itertools
import random
import time

import numpy as np
import pytest

from sftcurate import cli
from sftcurate.align import (
    AlignParams,
    SearchMode,
    build_reference_set,
    global_align,
    local_align,
    max_identity,
    pairwise_identity,
)
from sftcurate.config import PipelineConfig, SamplingPlan
from sftcurate.curation import (
    PartitionedPool,
    annotate_max_id,
    ingest,
    rank_key,
    run_pipeline,
    sample,
)
from sftcurate.report import Constraints, compliance_metrics, max_id_histogram
from sftcurate.scorers import ScoreTable, StubScorer, load_score_table, write_score_table
from sftcurate.seqcore import (
    AMINO_ACIDS,
    NucleotideSeq,
    ProteinSeq,
    parse_fasta,
    reverse_translate,
    translate,
    write_fasta,
)
from sftcurate.synthgen import (
    DefectProfile,
    generate_candidate_pool,
    generate_reference_set,
    mutate_to_identity,
)

from oracles import brute_global, brute_local, simple_sub

TARGETS = (0.45, 0.55, 0.65, 0.75, 0.85, 0.95)
CFG = PipelineConfig()
BOUNDS = CFG.length.window()


def _family(n, seed, **kw):
    return generate_reference_set(n, 363.6, 57.9, 82, seed, length_bounds=BOUNDS, **kw)


# 1 ---------------------------------------------------------------------------


def test_c01_alignment_oracle_equivalence(acceptance_log):
    p = AlignParams.simple(2, -1, -2, -1)
    sub = simple_sub(2, -1)
    rng = random.Random(1)
    pairs = [("".join(rng.choice("ACDW") for _ in range(rng.randint(1, 6))),
              "".join(rng.choice("ACDW") for _ in range(rng.randint(1, 6)))) for _ in range(200)]
    global_align("A", "A", p)  # load compiled kernels before timing
    local_align("A", "A", p)
    t0 = time.perf_counter()
    bad = 0
    for a, b in pairs:
        bad += global_align(a, b, p).score != brute_global(a, b, sub, -2, -1)
        bad += local_align(a, b, p).score != brute_local(a, b, sub, -2, -1)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    acceptance_log(1, ok, f"{400 - bad}/400 scores equal brute force, {dt:.2f}s (< 10s)")
    assert ok


# 2 ---------------------------------------------------------------------------


def test_c02_identity_recovery(acceptance_log):
    refs = _family(50, 21)
    rs = build_reference_set(refs)
    rng = np.random.default_rng(22)
    t0 = time.perf_counter()
    worst = 0.0
    for t in TARGETS:
        for _ in range(50):
            parent = refs[int(rng.integers(len(refs)))]
            m = mutate_to_identity(parent, t, protect=(0, 81), seed=rng)
            worst = max(worst, abs(max_identity(m, rs).max_id - t))
    dt = time.perf_counter() - t0
    ok = worst <= 0.02 and dt < 60
    acceptance_log(2, ok, f"max |max_id - target| = {worst:.4f} over 300 mutants (<= 0.02), {dt:.1f}s (< 60s)")
    assert ok


# 3 ---------------------------------------------------------------------------


def test_c03_prefilter_soundness(acceptance_log):
    refs = _family(2000, 0)
    rs = build_reference_set(refs, 5)
    seqs, _ = generate_candidate_pool(refs, DefectProfile(), 500, 0, active_site_pos=82,
                                      length_bounds=BOUNDS)
    prots = [translate(s) for s in seqs]
    t0 = time.perf_counter()
    from sftcurate.align import batch_max_identity
    exact = batch_max_identity(prots, rs, SearchMode.exact(), threads=4)
    pref = batch_max_identity(prots, rs, SearchMode.prefiltered(32), threads=4)
    dt = time.perf_counter() - t0
    agree = sum(e.max_id == f.max_id for e, f in zip(exact, pref))
    exceed = sum(f.max_id > e.max_id for e, f in zip(exact, pref))
    ok = agree >= 0.99 * 500 and exceed == 0 and dt < 300
    acceptance_log(3, ok, f"prefilter == exact on {agree}/500 ({agree / 5:.1f}%, need >= 99%), "
                          f"{exceed} exceed exact, {dt:.1f}s (< 300s)")
    assert ok


# 4, 5, 6 share one defective corpus ------------------------------------------

RATES = (0.005, 0.07, 0.02)


@pytest.fixture(scope="module")
def corpus10k():
    cfg = dataclasses.replace(CFG, sampling=SamplingPlan.novelty(3000))
    refs = _family(200, 40)
    seqs, labels = generate_candidate_pool(refs, DefectProfile(*RATES), 10_000, 41,
                                           active_site_pos=82, length_bounds=BOUNDS)
    records, ing = ingest(seqs)
    t0 = time.perf_counter()
    pool, report = run_pipeline(cfg, records, build_reference_set(refs, cfg.kmer),
                                StubScorer(cfg.seed, cfg.stub_lo, cfg.stub_hi))
    report.ingestion = ing
    return dict(cfg=cfg, refs=refs, seqs=seqs, labels={l.id: l for l in labels}, records=records,
                pool=pool, report=report, seconds=time.perf_counter() - t0)


def test_c04_table1_shape(acceptance_log, corpus10k):
    rep, labels, records = corpus10k["report"], corpus10k["labels"], corpus10k["records"]
    # ground truth: the labelled defect share among the records entering each stage
    truth_flag = {"start_token": "bad_start", "length": "bad_length", "active_site": "mutated_active_site"}
    details, ok = [], True
    for stage, flag in truth_flag.items():
        entering = [r for r in records if stage in r.stage_flags]
        truth = 100 * sum(getattr(labels[r.id], flag) for r in entering) / len(entering)
        got = rep.get(stage).removed_pct
        ok &= abs(got - truth) <= 1.0
        details.append(f"{stage} {got:.2f}% vs {truth:.2f}%")
    prev = rep.ingestion.output_count
    conserved = True
    for s in rep.stages:
        conserved &= s.input_count == prev
        prev = s.output_count
    ok &= conserved and rep.complete
    acceptance_log(4, ok, "; ".join(details) + f"; conservation {'exact' if conserved else 'BROKEN'}"
                          f" ({corpus10k['seconds']:.0f}s)")
    assert ok


def test_c05_table2_shape(acceptance_log, corpus10k):
    cfg, refs = corpus10k["cfg"], corpus10k["refs"]
    scorer = StubScorer(cfg.seed, cfg.stub_lo, cfg.stub_hi)
    cons = Constraints(cfg.length, cfg.active_site, refs[0], cfg.plddt_threshold, align=cfg.align)
    raw = [r.protein for r in corpus10k["records"]]
    lengths_only = dataclasses.replace(cons, active_site=None, plddt_threshold=None)
    defective = compliance_metrics(raw, lengths_only)
    curated = compliance_metrics(corpus10k["pool"], cons, scorer)
    ok = abs(defective.length_compliance_pct - 93.0) <= 1.0 and \
        (curated.length_compliance_pct, curated.active_site_rate_pct, curated.plddt_pass_pct) == (100, 100, 100)
    acceptance_log(5, ok, f"defective corpus length compliance {defective.length_compliance_pct:.2f}% "
                          f"(93 +- 1); curated {curated.length_compliance_pct:.0f}/"
                          f"{curated.active_site_rate_pct:.0f}/{curated.plddt_pass_pct:.0f}")
    assert ok


def _fresh_partition(records, edges):
    """Post-dedup bins rebuilt from stage flags, as fresh copies for re-sampling."""
    bins = [[] for _ in range(len(edges) - 1)]
    for r in records:
        if r.stage_flags.get("dedup") == "P":
            flags = {k: v for k, v in r.stage_flags.items() if k in ("start_token", "length",
                     "active_site", "max_id", "partition", "dedup")}
            bins[r.bin].append(dataclasses.replace(r, stage_flags=flags))
    return PartitionedPool(tuple(edges), [sorted(b, key=rank_key) for b in bins], [])


def test_c06_novelty_vs_functionality(acceptance_log, corpus10k):
    edges = corpus10k["cfg"].bin_edges
    total = 1200
    nov, _ = sample(_fresh_partition(corpus10k["records"], edges), SamplingPlan.novelty(total))
    fun, _ = sample(_fresh_partition(corpus10k["records"], edges), SamplingPlan.functionality(total))
    hn, hf = max_id_histogram(nov, edges), max_id_histogram(fun, edges)
    mn, mf = hn.mass_below(0.70), hf.mass_below(0.70)
    ok = mn > mf
    acceptance_log(6, ok, f"mass below 0.70: Novelty {mn}/{hn.total} > Functionality {mf}/{hf.total}")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_c07_dedup_soundness(acceptance_log):
    cfg = dataclasses.replace(CFG, sampling=SamplingPlan.novelty(50))
    prof = DefectProfile(identity_targets=(0.99, 0.97, 0.95, 0.75, 0.55))
    checked_bins = checked_pairs = violations = removed = 0
    for seed in range(20):
        refs = _family(4, 700 + seed)
        seqs, _ = generate_candidate_pool(refs, prof, 120, seed, active_site_pos=82,
                                          length_bounds=BOUNDS)
        records, _ = ingest(seqs)
        run_pipeline(cfg, records, build_reference_set(refs), StubScorer(seed))
        removed += sum(r.stage_flags.get("dedup") == "F" for r in records)
        bins = {}
        for r in records:
            if r.stage_flags.get("dedup") == "P":
                bins.setdefault(r.bin, []).append(r)
        for members in bins.values():
            if len(members) > 100:
                continue
            checked_bins += 1
            for u, v in itertools.combinations(members, 2):
                checked_pairs += 1
                violations += pairwise_identity(u.protein, v.protein, cfg.align) >= cfg.dedup_threshold
    ok = violations == 0 and checked_bins > 0
    acceptance_log(7, ok, f"{violations} kept pairs >= {cfg.dedup_threshold} across 20 runs "
                          f"({checked_bins} bins, {checked_pairs} pairs checked, {removed} duplicates removed)")
    assert ok


# 8 ---------------------------------------------------------------------------


def test_c08_determinism_across_threads(acceptance_log, tmp_path):
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text("[synth]\nn_refs = 60\npool_size = 600\n[sampling]\ntotal_target = 240\n")
    assert cli.main(["synth", "--config", str(cfgfile), "--out-dir", str(tmp_path)]) == 0
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        rc = cli.main(["filter", "--config", str(cfgfile), "--candidates", str(tmp_path / "candidates.fna"),
                       "--refs", str(tmp_path / "references.faa"), "--stub-scores",
                       "--threads", str(threads), "--out-dir", str(out)])
        assert rc == 0
        outs.append(out)
    names = ("curated.faa", "curated.fna", "curated.tsv", "report.kv", "report.txt")
    same = [n for n in names if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    ok = len(same) == len(names)
    acceptance_log(8, ok, f"{len(same)}/{len(names)} output files byte-identical for --threads 1 vs 4")
    assert ok


# 9 ---------------------------------------------------------------------------


def test_c09_throughput(acceptance_log):
    refs = generate_reference_set(5000, 360, 30, 82, 90, length_bounds=(300, 420))
    seqs, _ = generate_candidate_pool(refs, DefectProfile(), 1000, 91, active_site_pos=82,
                                      length_bounds=(300, 420))
    records, _ = ingest(seqs)
    t0 = time.perf_counter()
    rs = build_reference_set(refs, 5)
    annotate_max_id(records, rs, SearchMode.prefiltered(32), CFG.align, threads=4)
    dt = time.perf_counter() - t0
    ok = dt < 300 and all(r.max_id is not None for r in records)
    acceptance_log(9, ok, f"1000 candidates x 5000 references annotated in {dt:.1f}s (< 300s, "
                          f"index build included)")
    assert ok


# 10 --------------------------------------------------------------------------


def test_c10_round_trips(acceptance_log, tmp_path):
    rng = np.random.default_rng(100)
    aa = np.array(list(AMINO_ACIDS))
    prots = [ProteinSeq(f"p{i}", "".join(rng.choice(aa, int(rng.integers(1, 400)))))
             for i in range(1000)]
    write_fasta(prots, tmp_path / "p.faa")
    fasta_p = parse_fasta(tmp_path / "p.faa") == prots
    dnas = [reverse_translate(p, rng) for p in prots]
    write_fasta(dnas, tmp_path / "d.fna")
    fasta_d = parse_fasta(tmp_path / "d.fna") == dnas
    codons = all(translate(d).residues == p.residues for d, p in zip(dnas, prots))
    table = ScoreTable("custom", {f"s{i}": round(float(v), 4) for i, v in enumerate(rng.normal(0, 5, 1000))})
    write_score_table(table, tmp_path / "s.tsv")
    scores = load_score_table(tmp_path / "s.tsv", "custom") == table
    ok = fasta_p and fasta_d and codons and scores
    acceptance_log(10, ok, f"protein FASTA {fasta_p}, nucleotide FASTA {fasta_d}, "
                           f"translate(reverse_translate) on 1000 proteins {codons}, score table {scores}")
    assert ok
