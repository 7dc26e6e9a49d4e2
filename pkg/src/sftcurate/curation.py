"""The ordered filter chain with per-stage bookkeeping.

Stages run in a fixed order (see ``stages.STAGES``). Each stage function takes
a pool and returns the surviving pool plus a StageReport; ``run_pipeline``
chains them and can stop before the structure stage when no scores exist yet.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .align import (
    AlignParams,
    ReferenceSet,
    SearchMode,
    alignment_score,
    dedup_keep_mask,
    global_align,
    map_ordered,
    max_identity,
)
from .config import BelowRangePolicy, MissingScorePolicy, PipelineConfig, SamplingPlan, Strategy
from .errors import (
    ActiveSitePositionOutOfRange,
    CurationError,
    MissingScore,
    StageError,
    UnannotatedRecord,
)
from .seqcore import NucleotideSeq, ProteinSeq, StopPolicy, translate
from .stages import STAGES, PipelineReport, StageReport

PASS, FAIL = "P", "F"


@dataclass
class CandidateRecord:
    id: str
    protein: ProteinSeq
    dna: Optional[NucleotideSeq] = None
    max_id: Optional[float] = None
    nearest_ref_id: Optional[str] = None
    align_score: Optional[float] = None
    bin: Optional[int] = None  # index into the pool's bins; -1 is the below-range bin
    stage_flags: Dict[str, str] = field(default_factory=dict)
    external_scores: Dict[str, float] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.protein.residues)

    def flag(self, stage: str, ok: bool) -> None:
        if stage in self.stage_flags:
            raise ValueError(f"{self.id}: stage {stage} flagged twice")
        self.stage_flags[stage] = PASS if ok else FAIL


Pool = List[CandidateRecord]


def ingest(records: Sequence[Union[NucleotideSeq, ProteinSeq]],
           stop_policy: StopPolicy = StopPolicy.REJECT_INTERNAL_STOP) -> Tuple[Pool, StageReport]:
    """Wrap raw records; nucleotide records that fail translation are counted as removed."""
    pool: Pool = []
    notes: Dict[str, int] = {}
    for rec in records:
        if isinstance(rec, NucleotideSeq):
            try:
                protein = translate(rec, stop_policy)
            except CurationError as exc:
                key = type(exc).__name__
                notes[key] = notes.get(key, 0) + 1
                continue
            pool.append(CandidateRecord(rec.id, protein, dna=rec))
        else:
            pool.append(CandidateRecord(rec.id, rec))
    return pool, StageReport("ingestion", len(records), len(records) - len(pool), notes)


def _split(pool: Pool, stage: str, keep) -> Tuple[Pool, StageReport]:
    out = []
    for rec in pool:
        ok = bool(keep(rec))
        rec.flag(stage, ok)
        if ok:
            out.append(rec)
    return out, StageReport(stage, len(pool), len(pool) - len(out))


def filter_start_token(pool: Pool, cfg: PipelineConfig) -> Tuple[Pool, StageReport]:
    def keep(rec):
        if rec.dna is not None:
            return rec.dna.bases.startswith(cfg.start_codon)
        return rec.protein.residues.startswith("M")
    return _split(pool, "start_token", keep)


def filter_length(pool: Pool, cfg: PipelineConfig) -> Tuple[Pool, StageReport]:
    return _split(pool, "length", lambda rec: cfg.length.contains(rec.length))


def active_site_ok(protein: ProteinSeq, ref: ProteinSeq, position: int, residue: str,
                   p: AlignParams) -> bool:
    """Does the candidate hold ``residue`` in the column consuming ref ``position`` (1-based)?"""
    aln = global_align(protein, ref, p)
    seen = 0
    for x, y in zip(aln.aligned_a, aln.aligned_b):
        if y != "-":
            seen += 1
            if seen == position:
                return x == residue
    raise ActiveSitePositionOutOfRange(f"position {position} beyond reference length {seen}")


def resolve_site_reference(cfg: PipelineConfig, refs: ReferenceSet) -> ProteinSeq:
    rid = cfg.active_site.reference_id
    ref = refs.get(rid) if rid else refs.records[0]
    if not 1 <= cfg.active_site.position <= len(ref.residues):
        raise ActiveSitePositionOutOfRange(
            f"active site {cfg.active_site.position} outside reference {ref.id} "
            f"of length {len(ref.residues)}")
    return ref


def filter_active_site(pool: Pool, cfg: PipelineConfig, ref: ProteinSeq,
                       threads: int = 1) -> Tuple[Pool, StageReport]:
    pos, res = cfg.active_site.position, cfg.active_site.residue
    if not 1 <= pos <= len(ref.residues):
        raise ActiveSitePositionOutOfRange(f"active site {pos} outside reference {ref.id}")
    ok = iter(map_ordered(lambda rec: active_site_ok(rec.protein, ref, pos, res, cfg.align),
                          pool, threads))
    return _split(pool, "active_site", lambda rec: next(ok))


def search_mode(cfg: PipelineConfig) -> SearchMode:
    return SearchMode.exact() if cfg.top_m is None else SearchMode.prefiltered(cfg.top_m)


def annotate_max_id(pool: Pool, refs: ReferenceSet, mode: SearchMode,
                    p: AlignParams, threads: int = 1) -> Tuple[Pool, StageReport]:
    results = map_ordered(lambda rec: max_identity(rec.protein, refs, mode, p), pool, threads)
    for rec, res in zip(pool, results):
        rec.max_id = res.max_id
        rec.nearest_ref_id = res.nearest_ref_id
        rec.flag("max_id", True)
    return pool, StageReport("max_id", len(pool), 0)


# ----------------------------------------------------------------------------- partitioning


def bin_index(max_id: float, edges: Sequence[float]) -> int:
    """Half-open bins [e_i, e_i+1) with a closed top bin; -1 below the lowest edge."""
    if max_id < edges[0]:
        return -1
    if max_id >= edges[-1]:
        return len(edges) - 2
    return bisect_right(edges, max_id) - 1


def bin_label(idx: int, edges: Sequence[float]) -> str:
    if idx < 0:
        return f"<{edges[0]:.2f}"
    return f"{edges[idx]:.2f}-{edges[idx + 1]:.2f}"


@dataclass
class PartitionedPool:
    edges: Tuple[float, ...]
    bins: List[Pool]
    below_range: Pool
    keep_below: bool = False

    def groups(self) -> List[Tuple[int, Pool]]:
        """(bin index, records) in ascending bin order; below-range first when kept."""
        out = [(-1, self.below_range)] if self.keep_below else []
        return out + list(enumerate(self.bins))

    def records(self) -> Pool:
        return [r for _, g in self.groups() for r in g]


def partition(pool: Pool, cfg: PipelineConfig) -> Tuple[PartitionedPool, StageReport]:
    edges = tuple(cfg.bin_edges)
    bins: List[Pool] = [[] for _ in range(len(edges) - 1)]
    below: Pool = []
    keep_below = cfg.below_range_policy is BelowRangePolicy.KEEP_AS_EXTRA_BIN
    for rec in pool:
        if rec.max_id is None:
            raise UnannotatedRecord(f"{rec.id} has no max ID")
        idx = bin_index(rec.max_id, edges)
        rec.bin = idx
        rec.flag("partition", idx >= 0 or keep_below)
        (below if idx < 0 else bins[idx]).append(rec)
    removed = 0 if keep_below else len(below)
    return PartitionedPool(edges, bins, below, keep_below), StageReport("partition", len(pool), removed)


def rank_key(rec: CandidateRecord):
    return (-rec.align_score, rec.id)


def score_alignment(pool: Pool, refs: ReferenceSet, cfg: PipelineConfig, threads: int = 1) -> None:
    scores = map_ordered(lambda rec: alignment_score(rec.protein, refs, rec.nearest_ref_id,
                                                     cfg.w_global, cfg.w_local, cfg.align),
                         pool, threads)
    for rec, s in zip(pool, scores):
        rec.align_score = s


def rank_and_dedup(records: Pool, threshold: float, p: AlignParams) -> Tuple[Pool, Pool]:
    """Sort by alignment score (desc, id asc) and greedily drop near-duplicates.

    Returns (kept, removed), both in rank order.
    """
    for rec in records:
        if rec.align_score is None:
            raise UnannotatedRecord(f"{rec.id} has no alignment score")
    ranked = sorted(records, key=rank_key)
    mask = dedup_keep_mask([r.protein for r in ranked], threshold, p)
    kept = [r for r, k in zip(ranked, mask) if k]
    dropped = [r for r, k in zip(ranked, mask) if not k]
    return kept, dropped


def dedup_partitions(part: PartitionedPool, refs: ReferenceSet, cfg: PipelineConfig,
                     threads: int = 1) -> Tuple[PartitionedPool, StageReport]:
    grouped = part.groups()
    everyone = [r for _, g in grouped for r in g]
    score_alignment(everyone, refs, cfg, threads)
    results = map_ordered(lambda g: rank_and_dedup(g[1], cfg.dedup_threshold, cfg.align),
                          grouped, threads)
    bins = [list(b) for b in part.bins]
    below = list(part.below_range)
    for (idx, _), (kept, dropped) in zip(grouped, results):
        for r in kept:
            r.flag("dedup", True)
        for r in dropped:
            r.flag("dedup", False)
        if idx < 0:
            below = kept
        else:
            bins[idx] = kept
    out = PartitionedPool(part.edges, bins, below, part.keep_below)
    return out, StageReport("dedup", len(everyone), len(everyone) - len(out.records()))


# ----------------------------------------------------------------------------- sampling


def _water_fill(quota: List[int], avail: Sequence[int], order: Sequence[int], leftover: int) -> None:
    """Hand ``leftover`` units to bins with spare capacity, round-robin in ``order``."""
    while leftover > 0:
        open_bins = [i for i in order if quota[i] < avail[i]]
        if not open_bins:
            return
        share, extra = divmod(leftover, len(open_bins))
        for rank, i in enumerate(open_bins):
            want = share + (1 if rank < extra else 0)
            give = min(want, avail[i] - quota[i])
            quota[i] += give
            leftover -= give


def _uniform(total: int, bins: Sequence[int]) -> Dict[int, int]:
    """Split ``total`` over ``bins`` (given in descending order), remainder to the first."""
    if not bins:
        return {}
    share, extra = divmod(total, len(bins))
    return {b: share + (1 if rank < extra else 0) for rank, b in enumerate(bins)}


def allocate_quotas(plan: SamplingPlan, avail: Sequence[int],
                    lower_edges: Sequence[float]) -> List[int]:
    """Per-group draw counts, never exceeding availability.

    ``avail`` and ``lower_edges`` are in ascending bin order; the last group is
    the top bin. Functionality and Novelty plans redistribute unused quota to
    bins with spare records, visiting bins from the top down; Custom plans do not.
    """
    n = len(avail)
    quota = [0] * n
    if n == 0:
        return quota
    desc = list(range(n - 1, -1, -1))
    if plan.strategy is Strategy.CUSTOM:
        wanted = dict(plan.quotas)
        for i in range(n):
            quota[i] = min(wanted.get(round(lower_edges[i], 2), 0), avail[i])
        return quota
    total = plan.total_target
    if plan.strategy is Strategy.FUNCTIONALITY:
        top = total if n == 1 else min(total, math.ceil(plan.top_share * total - 1e-9))
        target = _uniform(total - top, desc[1:])
        target[n - 1] = top
    else:
        target = _uniform(total, desc)
    for i in range(n):
        quota[i] = min(target.get(i, 0), avail[i])
    _water_fill(quota, avail, desc, total - sum(quota))
    return quota


def sample(part: PartitionedPool, plan: SamplingPlan) -> Tuple[Pool, StageReport]:
    """Take the top-ranked ``quota`` records from each group (groups are already ranked)."""
    grouped = part.groups()
    avail = [len(g) for _, g in grouped]
    lower = [0.0 if idx < 0 else part.edges[idx] for idx, _ in grouped]
    quota = allocate_quotas(plan, avail, lower)
    out: Pool = []
    for (_, g), q in zip(grouped, quota):
        for j, rec in enumerate(g):
            rec.flag("sampling", j < q)
        out.extend(g[:q])
    return out, StageReport("sampling", sum(avail), sum(avail) - len(out))


# ----------------------------------------------------------------------------- structure


def filter_plddt(pool: Pool, scorer, cfg: PipelineConfig) -> Tuple[Pool, StageReport]:
    """``scorer`` is a ScoreTable or StubScorer (anything with ``get`` and ``passes``)."""
    out: Pool = []
    missing = 0
    for rec in pool:
        value = scorer.get(rec.id)
        if value is None:
            if cfg.missing_score is MissingScorePolicy.HARD_FAIL:
                raise MissingScore(f"no pLDDT score for {rec.id!r}")
            missing += 1
            rec.flag("plddt", False)
            continue
        rec.external_scores["plddt"] = float(value)
        ok = scorer.passes(float(value), cfg.plddt_threshold)
        rec.flag("plddt", ok)
        if ok:
            out.append(rec)
    notes = {"missing_score": missing} if missing else {}
    return out, StageReport("plddt", len(pool), len(pool) - len(out), notes)


# ----------------------------------------------------------------------------- driver


def _as_refs(refs, cfg: PipelineConfig) -> ReferenceSet:
    return refs if isinstance(refs, ReferenceSet) else ReferenceSet(list(refs), cfg.kmer)


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrapped with the stage name
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig, candidates: Sequence, refs, scorer=None,
                 threads: int = 1) -> Tuple[Pool, PipelineReport]:
    """Run every stage; with ``scorer`` None, stop after sampling (report incomplete).

    ``candidates`` holds CandidateRecords or raw sequence records, which are
    ingested first (ingestion is reported separately from the eight stages).
    """
    cfg.validate()
    report = PipelineReport()
    if candidates and all(isinstance(c, CandidateRecord) for c in candidates):
        pool = list(candidates)
    else:
        pool, report.ingestion = ingest(list(candidates))
    refs = _as_refs(refs, cfg)
    site_ref = _stage("active_site", resolve_site_reference, cfg, refs)

    pool, rep = _stage("start_token", filter_start_token, pool, cfg)
    report.add(rep)
    pool, rep = _stage("length", filter_length, pool, cfg)
    report.add(rep)
    pool, rep = _stage("active_site", filter_active_site, pool, cfg, site_ref, threads)
    report.add(rep)
    pool, rep = _stage("max_id", annotate_max_id, pool, refs, search_mode(cfg), cfg.align, threads)
    report.add(rep)
    part, rep = _stage("partition", partition, pool, cfg)
    report.add(rep)
    part, rep = _stage("dedup", dedup_partitions, part, refs, cfg, threads)
    report.add(rep)
    pool, rep = _stage("sampling", sample, part, cfg.sampling)
    report.add(rep)
    if scorer is None:
        return pool, report
    return resume_pipeline(cfg, pool, report, scorer)


def resume_pipeline(cfg: PipelineConfig, pool: Pool, report: PipelineReport,
                    scorer) -> Tuple[Pool, PipelineReport]:
    """Apply the structure stage to a pool that stopped after sampling."""
    done = [s.stage_name for s in report.stages]
    if done != list(STAGES[:-1]):
        raise ValueError(f"cannot resume: completed stages are {done}")
    pool, rep = _stage("plddt", filter_plddt, pool, scorer, cfg)
    report.add(rep)
    return pool, report


# ----------------------------------------------------------------------------- outputs

SIDECAR_COLUMNS = ("id", "length", "max_id", "nearest_ref_id", "align_score", "bin", "stage_flags")


def _fmt(x: Optional[float]) -> str:
    return "NA" if x is None else f"{x:.4f}"


def format_sidecar(pool: Pool, edges: Sequence[float]) -> str:
    lines = ["\t".join(SIDECAR_COLUMNS)]
    for rec in pool:
        flags = ";".join(f"{k}={v}" for k, v in rec.stage_flags.items())
        lines.append("\t".join([
            rec.id, str(rec.length), _fmt(rec.max_id), rec.nearest_ref_id or "NA",
            _fmt(rec.align_score), "NA" if rec.bin is None else bin_label(rec.bin, edges), flags,
        ]))
    return "\n".join(lines) + "\n"


def write_sidecar(pool: Pool, edges: Sequence[float], path) -> None:
    Path(path).write_bytes(format_sidecar(pool, edges).encode("utf-8"))


def record_to_dict(rec: CandidateRecord) -> dict:
    return {
        "id": rec.id,
        "protein": rec.protein.residues,
        "dna": rec.dna.bases if rec.dna is not None else None,
        "max_id": rec.max_id,
        "nearest_ref_id": rec.nearest_ref_id,
        "align_score": rec.align_score,
        "bin": rec.bin,
        "stage_flags": [[k, v] for k, v in rec.stage_flags.items()],  # ordered
        "external_scores": dict(rec.external_scores),
    }


def record_from_dict(d: dict) -> CandidateRecord:
    return CandidateRecord(
        id=d["id"],
        protein=ProteinSeq(d["id"], d["protein"]),
        dna=NucleotideSeq(d["id"], d["dna"]) if d.get("dna") else None,
        max_id=d.get("max_id"),
        nearest_ref_id=d.get("nearest_ref_id"),
        align_score=d.get("align_score"),
        bin=d.get("bin"),
        stage_flags={k: v for k, v in d.get("stage_flags", [])},
        external_scores=dict(d.get("external_scores", {})),
    )


def report_to_dict(report: PipelineReport) -> dict:
    def one(s: StageReport) -> dict:
        return {"stage": s.stage_name, "input": s.input_count, "removed": s.removed_count,
                "notes": dict(s.notes)}
    return {"ingestion": one(report.ingestion) if report.ingestion else None,
            "stages": [one(s) for s in report.stages]}


def report_from_dict(d: dict) -> PipelineReport:
    def one(x: dict) -> StageReport:
        return StageReport(x["stage"], x["input"], x["removed"], dict(x.get("notes", {})))
    rep = PipelineReport(ingestion=one(d["ingestion"]) if d.get("ingestion") else None)
    for s in d["stages"]:
        rep.add(one(s))
    return rep
