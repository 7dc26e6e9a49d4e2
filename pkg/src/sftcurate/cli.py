"""Command-line entry point: prep-ref, synth, filter, eval.

Exit codes:
  0   workflow completed
  2   bad configuration or usage
  3   file system error
  4   malformed or invalid input data
  5   resume manifest does not match the current config or inputs
  10  filter halted after sampling, waiting for an external pLDDT table
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .align import ReferenceSet, SearchMode, batch_max_identity
from .config import PipelineConfig, config_from_ini, load_config
from .curation import (
    CandidateRecord,
    format_sidecar,
    ingest,
    record_from_dict,
    record_to_dict,
    report_from_dict,
    report_to_dict,
    resolve_site_reference,
    resume_pipeline,
    run_pipeline,
)
from .errors import ConfigError, CurationError, ManifestMismatch, StageError
from .report import (
    Constraints,
    compare_distributions,
    compliance_metrics,
    machine_lines,
    max_id_histogram,
    render_machine,
    render_table1,
)
from .scorers import StubScorer, load_score_table
from .seqcore import NucleotideSeq, ProteinSeq, format_fasta, parse_fasta, translate
from .stages import STAGES, StageReport
from .synthgen import DefectProfile, generate_candidate_pool, generate_reference_set, write_labels

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INPUT = 4
EXIT_MANIFEST = 5
EXIT_AWAITING_SCORES = 10

MANIFEST = "manifest.json"
STATE = "state.json"
CONFIG_COPY = "config.ini"
EXPORT = "to_score.faa"


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


# ----------------------------------------------------------------------------- prep-ref


def cmd_prep_ref(args) -> int:
    records = parse_fasta(args.input, alphabet="protein")
    kept: List[ProteinSeq] = []
    seen = set()
    short = long_ = dup = 0
    for r in records:
        n = len(r.residues)
        if n < args.min_len:
            short += 1
        elif n > args.max_len:
            long_ += 1
        elif r.residues in seen:
            dup += 1
        else:
            seen.add(r.residues)
            kept.append(r)
    _write(Path(args.out), format_fasta(kept))
    lines = [f"prep_ref.input={len(records)}", f"prep_ref.too_short={short}",
             f"prep_ref.too_long={long_}", f"prep_ref.duplicate={dup}",
             f"prep_ref.retained={len(kept)}",
             f"prep_ref.bounds={args.min_len}-{args.max_len}"]
    text = render_machine(lines)
    if args.report:
        _write(Path(args.report), text)
    sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------------- synth


def synth_outputs(cfg: PipelineConfig):
    """(references, candidates, labels) fully determined by the config."""
    sy = cfg.synth
    lo, hi = cfg.length.window()
    refs = generate_reference_set(sy.n_refs, sy.ref_length_mean, sy.ref_length_sd,
                                  cfg.active_site.position, [cfg.seed, 0x5EED, 1],
                                  length_bounds=(lo, hi), divergence=sy.divergence)
    profile = DefectProfile(sy.rate_bad_start, sy.rate_bad_length, sy.rate_mutated_active_site,
                            tuple(sy.identity_targets))
    cands, labels = generate_candidate_pool(refs, profile, sy.pool_size, cfg.seed,
                                            active_site_pos=cfg.active_site.position,
                                            length_bounds=(lo, hi))
    return refs, cands, labels


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    if args.pool_size is not None:
        cfg = cfg.with_overrides(synth=replace(cfg.synth, pool_size=args.pool_size))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    refs, cands, labels = synth_outputs(cfg)
    _write(out / "references.faa", format_fasta(refs))
    _write(out / "candidates.fna", format_fasta(cands))
    write_labels(labels, out / "labels.tsv")
    print(f"wrote {len(refs)} references and {len(cands)} candidates to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------- filter


@dataclass
class RunManifest:
    config_sha256: str
    inputs: Dict[str, str]
    seed: int
    stages_done: List[str]
    outputs: Dict[str, str]
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d["config_sha256"], d["inputs"], d["seed"], d["stages_done"], d["outputs"],
                   d.get("version", __version__))

    def check(self, cfg: PipelineConfig, inputs: Dict[str, str]) -> None:
        if cfg.digest() != self.config_sha256:
            raise ManifestMismatch("config differs from the one recorded for this run")
        for name, digest in inputs.items():
            if self.inputs.get(name) != digest:
                raise ManifestMismatch(f"input {name} differs from the one recorded for this run")


def _read_candidates(path):
    rejects: list = []
    records = parse_fasta(path, rejects=rejects)
    pool, ing = ingest(records)
    notes = dict(ing.notes)
    if rejects:
        notes["InvalidSequence"] = len(rejects)
    ing = StageReport("ingestion", ing.input_count + len(rejects),
                      ing.removed_count + len(rejects), notes)
    return pool, ing


def _scorer(args, cfg: PipelineConfig):
    if getattr(args, "scores", None):
        return load_score_table(args.scores, "plddt")
    if getattr(args, "stub_scores", False):
        return StubScorer(cfg.seed, cfg.stub_lo, cfg.stub_hi)
    return None


def _finish(out: Path, cfg: PipelineConfig, pool: List[CandidateRecord], report,
            manifest: RunManifest) -> None:
    _write(out / "curated.faa", format_fasta([r.protein for r in pool]))
    outputs = {"curated_protein": "curated.faa"}
    if pool and all(r.dna is not None for r in pool):
        _write(out / "curated.fna", format_fasta([r.dna for r in pool]))
        outputs["curated_dna"] = "curated.fna"
    _write(out / "curated.tsv", format_sidecar(pool, cfg.bin_edges))
    table = render_table1(report)
    _write(out / "report.txt", table)
    _write(out / "report.kv", render_machine(machine_lines(report)))
    outputs.update(sidecar="curated.tsv", report_text="report.txt", report_machine="report.kv")
    manifest.stages_done = [s.stage_name for s in report.stages]
    manifest.outputs.update(outputs)
    _write(out / MANIFEST, manifest.to_json())
    sys.stdout.write(table)


def cmd_filter(args) -> int:
    out = Path(args.out_dir)
    if args.resume:
        return _resume(args, out)
    if not args.candidates or not args.refs:
        raise ConfigError("filter needs --candidates and --refs (or --resume)")
    cfg = _load_cfg(args)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {"candidates": sha256_file(args.candidates), "refs": sha256_file(args.refs)}
    pool, ing = _read_candidates(args.candidates)
    refs = ReferenceSet(parse_fasta(args.refs, alphabet="protein"), cfg.kmer)
    scorer = _scorer(args, cfg)
    pool, report = run_pipeline(cfg, pool, refs, scorer, threads=args.threads)
    report.ingestion = ing
    _write(out / CONFIG_COPY, cfg.to_ini())
    manifest = RunManifest(cfg.digest(), inputs, cfg.seed, [], {"config": CONFIG_COPY})
    if scorer is None:
        _write(out / EXPORT, format_fasta([r.protein for r in pool]))
        state = {"records": [record_to_dict(r) for r in pool], "report": report_to_dict(report)}
        _write(out / STATE, json.dumps(state, indent=1, sort_keys=True) + "\n")
        manifest.stages_done = [s.stage_name for s in report.stages]
        manifest.outputs.update(export=EXPORT, state=STATE)
        _write(out / MANIFEST, manifest.to_json())
        _write(out / "report.txt", render_table1(report))
        _write(out / "report.kv", render_machine(machine_lines(report)))
        print(f"awaiting scores: score {out / EXPORT} and rerun with --resume --scores TABLE")
        return EXIT_AWAITING_SCORES
    _finish(out, cfg, pool, report, manifest)
    return EXIT_OK


def _resume(args, out: Path) -> int:
    mpath = out / MANIFEST
    if not mpath.exists():
        raise ManifestMismatch(f"no manifest in {out}")
    manifest = RunManifest.load(mpath)
    if manifest.stages_done != list(STAGES[:-1]):
        raise ManifestMismatch(f"run in {out} is not waiting for scores")
    if args.config:
        cfg = _load_cfg(args)
    else:
        cfg = config_from_ini((out / CONFIG_COPY).read_text(encoding="utf-8"))
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
    inputs = {}
    if args.candidates:
        inputs["candidates"] = sha256_file(args.candidates)
    if args.refs:
        inputs["refs"] = sha256_file(args.refs)
    manifest.check(cfg, inputs)
    scorer = _scorer(args, cfg)
    if scorer is None:
        raise ConfigError("--resume needs --scores or --stub-scores")
    state = json.loads((out / STATE).read_text(encoding="utf-8"))
    pool = [record_from_dict(d) for d in state["records"]]
    report = report_from_dict(state["report"])
    pool, report = resume_pipeline(cfg, pool, report, scorer)
    _finish(out, cfg, pool, report, manifest)
    return EXIT_OK


# ----------------------------------------------------------------------------- eval


def _proteins(path) -> List[ProteinSeq]:
    out = []
    for r in parse_fasta(path):
        out.append(translate(r) if isinstance(r, NucleotideSeq) else r)
    return out


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    sections: List[List[str]] = []
    text: List[str] = []
    refs = ReferenceSet(parse_fasta(args.refs, alphabet="protein"), cfg.kmer) if args.refs else None
    if args.histogram and refs is None:
        raise ConfigError("a max-ID histogram needs --refs")

    if args.pool:
        pool = _proteins(args.pool)
        scores: Optional[object] = None
        if args.plddt:
            scores = load_score_table(args.plddt, "plddt")
        elif args.stub_scores:
            scores = StubScorer(cfg.seed, cfg.stub_lo, cfg.stub_hi)
        cons = Constraints(
            length=cfg.length,
            active_site=cfg.active_site if refs is not None else None,
            site_reference=resolve_site_reference(cfg, refs) if refs is not None else None,
            plddt_threshold=cfg.plddt_threshold if scores is not None else None,
            missing_score=cfg.missing_score,
            align=cfg.align,
        )
        comp = compliance_metrics(pool, cons, scores)
        sections.append(comp.lines())
        text.append(comp.render())
        if args.histogram:
            mode = SearchMode.exact() if cfg.top_m is None else SearchMode.prefiltered(cfg.top_m)
            res = batch_max_identity(pool, refs, mode, cfg.align, threads=args.threads)
            hist = max_id_histogram([r.max_id for r in res], cfg.bin_edges)
            sections.append(hist.lines())
            text.append("Max ID histogram\n" + hist.render())
    elif args.histogram:
        raise ConfigError("a max-ID histogram needs --pool")

    for i, (pa, pb) in enumerate(args.compare or []):
        ta = load_score_table(pa, args.score_kind)
        tb = load_score_table(pb, args.score_kind)
        cmp_ = compare_distributions(ta, tb, Path(pa).stem, Path(pb).stem)
        sections.append(cmp_.lines(f"compare.{i}"))
        text.append(cmp_.render())

    if not sections:
        raise ConfigError("eval needs --pool and/or --compare")
    doc = render_machine(*sections)
    if args.out:
        _write(Path(args.out), doc)
    sys.stdout.write("\n".join(text))
    return EXIT_OK


# ----------------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads (output is unaffected)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sftcurate", description="Curate generated protein sequences.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prep-ref", parents=[common], help="length-filter and deduplicate references")
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.add_argument("--min-len", type=int, default=200)
    s.add_argument("--max-len", type=int, default=600)
    s.add_argument("--report", help="write the count report here as well")
    s.set_defaults(func=cmd_prep_ref)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--pool-size", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("filter", parents=[common], help="run the curation pipeline")
    s.add_argument("--candidates")
    s.add_argument("--refs")
    s.add_argument("--scores", help="pLDDT table (id<TAB>score)")
    s.add_argument("--stub-scores", action="store_true", help="use the deterministic stub scorer")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--resume", action="store_true", help="continue a run that awaits scores")
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("eval", parents=[common], help="compliance, histogram and score comparisons")
    s.add_argument("--pool", help="FASTA of sequences to evaluate")
    s.add_argument("--refs", help="reference FASTA (needed for active-site and histogram)")
    s.add_argument("--plddt", help="pLDDT table for the pool")
    s.add_argument("--stub-scores", action="store_true")
    s.add_argument("--histogram", action="store_true")
    s.add_argument("--compare", nargs=2, action="append", metavar=("A", "B"),
                   help="score tables to compare (repeatable)")
    s.add_argument("--score-kind", default="custom",
                   choices=["plddt", "stability", "docking", "custom"])
    s.add_argument("--out", help="machine-readable report path")
    s.set_defaults(func=cmd_eval)
    return p


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, ManifestMismatch):
        return EXIT_MANIFEST
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (CurationError, ValueError)):
        return EXIT_INPUT
    raise exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (CurationError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
