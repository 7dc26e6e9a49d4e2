"""Synthesize a defective corpus, curate it with both sampling plans, and print
the attrition table and max-ID histograms side by side."""

from __future__ import annotations

import argparse
import dataclasses
import time

from sftcurate.align import build_reference_set
from sftcurate.config import PipelineConfig, SamplingPlan, SynthSettings
from sftcurate.curation import ingest, run_pipeline
from sftcurate.report import max_id_histogram, render_table1
from sftcurate.scorers import StubScorer
from sftcurate.synthgen import DefectProfile, generate_candidate_pool, generate_reference_set


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pool", type=int, default=10_000)
    ap.add_argument("--refs", type=int, default=200)
    ap.add_argument("--total", type=int, default=2000, help="sampling target per plan")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    base = PipelineConfig(seed=args.seed)
    sy = SynthSettings()
    bounds = base.length.window()
    refs = generate_reference_set(args.refs, sy.ref_length_mean, sy.ref_length_sd,
                                  base.active_site.position, args.seed, length_bounds=bounds)
    profile = DefectProfile(sy.rate_bad_start, sy.rate_bad_length, sy.rate_mutated_active_site)
    seqs, _ = generate_candidate_pool(refs, profile, args.pool, args.seed + 1,
                                      active_site_pos=base.active_site.position, length_bounds=bounds)
    rs = build_reference_set(refs, base.kmer)
    for plan in (SamplingPlan.novelty(args.total), SamplingPlan.functionality(args.total)):
        cfg = dataclasses.replace(base, sampling=plan)
        records, ing = ingest(seqs)
        t0 = time.perf_counter()
        pool, report = run_pipeline(cfg, records, rs, StubScorer(cfg.seed, cfg.stub_lo, cfg.stub_hi),
                                    threads=args.threads)
        report.ingestion = ing
        print(f"== {plan.strategy.value} ({time.perf_counter() - t0:.1f}s)")
        print(render_table1(report))
        print(max_id_histogram(pool, cfg.bin_edges).render())


if __name__ == "__main__":
    main()
