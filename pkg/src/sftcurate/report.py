"""Stage attrition tables, compliance rates, max-ID histograms and score comparisons.

Text renderings are for people; the machine form is a line-oriented
``key=value`` document with a versioned header, built from the same objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .align import DEFAULT_PARAMS, AlignParams
from .config import ActiveSite, LengthBounds, MissingScorePolicy
from .curation import CandidateRecord, active_site_ok, bin_index, bin_label
from .errors import EmptyTable, MissingScore, OrientationMismatch, UnannotatedRecord
from .scorers import Orientation, ScoreTable, Summary, summarize
from .seqcore import ProteinSeq
from .stages import PipelineReport, StageReport

MACHINE_HEADER = "# sftcurate-report v1"
PCT_DECIMALS = 3
COMBINED_TITLE = "Max ID + Alignment Score"
COMBINED_STAGES = ("max_id", "partition", "dedup")


# ----------------------------------------------------------------------------- stage table


@dataclass(frozen=True)
class TableRow:
    title: str
    input_count: Optional[int]
    removed_count: Optional[int]
    indent: int = 0

    @property
    def pct(self) -> Optional[float]:
        if self.input_count is None or self.removed_count is None:
            return None
        return 100.0 * self.removed_count / self.input_count if self.input_count else 0.0


def table_rows(report: PipelineReport) -> List[TableRow]:
    """Rows in display order; max-ID annotation, the below-range cut and dedup are
    folded into one combined row, followed by their individual sub-rows."""
    rows: List[TableRow] = []
    if report.ingestion is not None:
        s = report.ingestion
        rows.append(TableRow(s.title, s.input_count, s.removed_count))
    stages = list(report.stages)
    i = 0
    while i < len(stages):
        s = stages[i]
        if s.stage_name == COMBINED_STAGES[0]:
            group = [stages[j] for j in range(i, len(stages))
                     if stages[j].stage_name in COMBINED_STAGES]
            removed = sum(g.removed_count for g in group)
            rows.append(TableRow(COMBINED_TITLE, s.input_count, removed))
            for g in group[1:]:
                rows.append(TableRow(g.title, g.input_count, g.removed_count, indent=2))
            i += len(group)
            continue
        rows.append(TableRow(s.title, s.input_count, s.removed_count))
        i += 1
    return rows


def render_table1(report: PipelineReport) -> str:
    """Stage | Input # | Filtered % with a closing Final Retained row."""
    rows = table_rows(report)
    width = max([len("Final Retained"), len("Stage")] + [len(r.title) + r.indent for r in rows])
    lines = [f"{'Stage':<{width}}  {'Input #':>10}  {'Filtered %':>10}",
             "-" * (width + 24)]
    for r in rows:
        pct = "" if r.pct is None else f"{r.pct:.{PCT_DECIMALS}f}"
        title = " " * r.indent + r.title
        lines.append(f"{title:<{width}}  {r.input_count:>10d}  {pct:>10}")
    lines.append("-" * (width + 24))
    lines.append(f"{'Final Retained':<{width}}  {report.final_count:>10d}")
    return "\n".join(lines) + "\n"


def _stage_lines(s: StageReport, prefix: str) -> List[str]:
    out = [f"{prefix}.input={s.input_count}",
           f"{prefix}.removed={s.removed_count}",
           f"{prefix}.output={s.output_count}",
           f"{prefix}.removed_pct={s.removed_pct:.6f}"]
    out += [f"{prefix}.note.{k}={v}" for k, v in sorted(s.notes.items())]
    return out


def machine_lines(report: PipelineReport) -> List[str]:
    lines = []
    if report.ingestion is not None:
        lines += _stage_lines(report.ingestion, "ingestion")
    lines.append("stages=" + ",".join(s.stage_name for s in report.stages))
    for s in report.stages:
        lines += _stage_lines(s, f"stage.{s.stage_name}")
    lines.append(f"complete={'true' if report.complete else 'false'}")
    lines.append(f"final_retained={report.final_count}")
    return lines


def render_machine(*sections: Sequence[str]) -> str:
    return "\n".join([MACHINE_HEADER] + [line for sec in sections for line in sec]) + "\n"


def render_pipeline_report(report: PipelineReport) -> Tuple[str, str]:
    """(text table, machine-readable document)."""
    return render_table1(report), render_machine(machine_lines(report))


def parse_machine(text: str) -> Dict[str, str]:
    lines = text.splitlines()
    if not lines or lines[0] != MACHINE_HEADER:
        raise ValueError("not a sftcurate report")
    out = {}
    for line in lines[1:]:
        if line and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k] = v
    return out


# ----------------------------------------------------------------------------- compliance


@dataclass(frozen=True)
class Constraints:
    length: LengthBounds
    active_site: Optional[ActiveSite] = None
    site_reference: Optional[ProteinSeq] = None
    plddt_threshold: Optional[float] = None
    missing_score: MissingScorePolicy = MissingScorePolicy.COUNT_AS_REMOVED
    align: AlignParams = DEFAULT_PARAMS

    def describe(self) -> Dict[str, str]:
        lo, hi = self.length.window()
        out = {"length": f"{lo:g} <= L <= {hi:g}"}
        if self.active_site is not None and self.site_reference is not None:
            out["active_site"] = (f"{self.active_site.residue}{self.active_site.position} "
                                  f"of {self.site_reference.id}")
        if self.plddt_threshold is not None:
            out["plddt"] = f"pLDDT >= {self.plddt_threshold:g}"
        return out


@dataclass(frozen=True)
class ComplianceReport:
    count: int
    length_compliance_pct: float
    active_site_rate_pct: Optional[float]
    plddt_pass_pct: Optional[float]
    constraints: Dict[str, str] = field(default_factory=dict)
    missing_scores: int = 0

    def __post_init__(self) -> None:
        for v in (self.length_compliance_pct, self.active_site_rate_pct, self.plddt_pass_pct):
            if v is not None and not 0.0 <= v <= 100.0:
                raise ValueError("percentages must lie in [0, 100]")

    def lines(self) -> List[str]:
        out = [f"compliance.count={self.count}",
               f"compliance.length_pct={self.length_compliance_pct:.4f}"]
        if self.active_site_rate_pct is not None:
            out.append(f"compliance.active_site_pct={self.active_site_rate_pct:.4f}")
        if self.plddt_pass_pct is not None:
            out.append(f"compliance.plddt_pct={self.plddt_pass_pct:.4f}")
            out.append(f"compliance.missing_scores={self.missing_scores}")
        out += [f"compliance.constraint.{k}={v}" for k, v in self.constraints.items()]
        return out

    def render(self) -> str:
        rows = [("Sequence length", self.length_compliance_pct, self.constraints.get("length")),
                ("Active site", self.active_site_rate_pct, self.constraints.get("active_site")),
                ("pLDDT", self.plddt_pass_pct, self.constraints.get("plddt"))]
        lines = [f"Compliance over {self.count} sequences"]
        for name, pct, cons in rows:
            if pct is not None:
                lines.append(f"  {name:<16} {pct:7.2f}%   ({cons})")
        return "\n".join(lines) + "\n"


def _protein(x) -> ProteinSeq:
    return x.protein if isinstance(x, CandidateRecord) else x


def compliance_metrics(pool: Sequence, constraints: Constraints,
                       scores=None) -> ComplianceReport:
    """Share of ``pool`` meeting each constraint, each evaluated on its own."""
    if not pool:
        raise EmptyTable("compliance needs a non-empty pool")
    proteins = [_protein(x) for x in pool]
    n = len(proteins)
    n_len = sum(constraints.length.contains(len(p.residues)) for p in proteins)
    site_pct = None
    site, ref = constraints.active_site, constraints.site_reference
    if site is not None and ref is not None:
        ok = sum(active_site_ok(p, ref, site.position, site.residue, constraints.align)
                 for p in proteins)
        site_pct = 100.0 * ok / n
    plddt_pct = None
    missing = 0
    if scores is not None and constraints.plddt_threshold is not None:
        passed = 0
        for p in proteins:
            v = scores.get(p.id)
            if v is None:
                if constraints.missing_score is MissingScorePolicy.HARD_FAIL:
                    raise MissingScore(f"no pLDDT score for {p.id!r}")
                missing += 1
                continue
            passed += scores.passes(float(v), constraints.plddt_threshold)
        plddt_pct = 100.0 * passed / n
    return ComplianceReport(n, 100.0 * n_len / n, site_pct, plddt_pct,
                            constraints.describe(), missing)


# ----------------------------------------------------------------------------- histogram


@dataclass(frozen=True)
class MaxIdHistogram:
    edges: Tuple[float, ...]
    counts: Tuple[int, ...]
    below_range: int
    total: int

    def __post_init__(self) -> None:
        if sum(self.counts) + self.below_range != self.total:
            raise ValueError("histogram counts do not sum to the total")

    def mass_below(self, edge: float) -> int:
        """Records whose bin lies entirely below ``edge`` (below-range included)."""
        return self.below_range + sum(c for i, c in enumerate(self.counts)
                                      if self.edges[i + 1] <= edge + 1e-12)

    def lines(self, prefix: str = "histogram") -> List[str]:
        out = [f"{prefix}.total={self.total}", f"{prefix}.below_range={self.below_range}"]
        out += [f"{prefix}.bin.{bin_label(i, self.edges)}={c}" for i, c in enumerate(self.counts)]
        return out

    def render(self, width: int = 40) -> str:
        peak = max(self.counts + (self.below_range, 1))
        labels = [bin_label(-1, self.edges)] + [bin_label(i, self.edges) for i in range(len(self.counts))]
        values = (self.below_range,) + self.counts
        lines = []
        for lab, c in zip(labels, values):
            bar = "#" * round(width * c / peak)
            lines.append(f"{lab:>9} {c:>7d} {bar}")
        lines.append(f"{'total':>9} {self.total:>7d}")
        return "\n".join(lines) + "\n"


def max_id_histogram(pool: Sequence, edges: Sequence[float]) -> MaxIdHistogram:
    """Counts per bin using the same rule as partitioning; accepts records or floats."""
    edges = tuple(edges)
    counts = [0] * (len(edges) - 1)
    below = 0
    for x in pool:
        v = x.max_id if isinstance(x, CandidateRecord) else x
        if v is None:
            rid = x.id if isinstance(x, CandidateRecord) else "?"
            raise UnannotatedRecord(f"{rid} has no max ID")
        i = bin_index(float(v), edges)
        if i < 0:
            below += 1
        else:
            counts[i] += 1
    return MaxIdHistogram(edges, tuple(counts), below, len(pool))


# ----------------------------------------------------------------------------- distributions


@dataclass(frozen=True)
class DistributionComparison:
    name_a: str
    name_b: str
    summary_a: Summary
    summary_b: Summary
    mean_shift: float
    median_shift: float
    dominance: float  # P(b better than a), ties count one half

    def lines(self, prefix: str = "compare") -> List[str]:
        out = []
        for tag, s in (("a", self.summary_a), ("b", self.summary_b)):
            out.append(f"{prefix}.{tag}.name={self.name_a if tag == 'a' else self.name_b}")
            out += [f"{prefix}.{tag}.count={s.count}", f"{prefix}.{tag}.mean={s.mean:.6f}",
                    f"{prefix}.{tag}.median={s.median:.6f}", f"{prefix}.{tag}.stddev={s.stddev:.6f}",
                    f"{prefix}.{tag}.min={s.min:.6f}", f"{prefix}.{tag}.max={s.max:.6f}"]
        out += [f"{prefix}.mean_shift={self.mean_shift:.6f}",
                f"{prefix}.median_shift={self.median_shift:.6f}",
                f"{prefix}.dominance={self.dominance:.6f}"]
        return out

    def render(self) -> str:
        a, b = self.summary_a, self.summary_b
        lines = [f"{'':<8}{'count':>8}{'mean':>12}{'median':>12}{'stddev':>12}{'min':>12}{'max':>12}"]
        for name, s in ((self.name_a, a), (self.name_b, b)):
            lines.append(f"{name[:8]:<8}{s.count:>8d}{s.mean:>12.4f}{s.median:>12.4f}"
                         f"{s.stddev:>12.4f}{s.min:>12.4f}{s.max:>12.4f}")
        lines.append(f"mean shift {self.mean_shift:+.4f}  median shift {self.median_shift:+.4f}  "
                     f"P(b better) {self.dominance:.4f}")
        return "\n".join(lines) + "\n"


def dominance_fraction(a: np.ndarray, b: np.ndarray, orientation: Orientation) -> float:
    """Exact P(b better than a) over all pairs via sorting, ties split evenly."""
    sa = np.sort(a)
    lt = np.searchsorted(sa, b, side="left")
    le = np.searchsorted(sa, b, side="right")
    ties = int((le - lt).sum())
    if orientation is Orientation.HIGHER_IS_BETTER:
        wins = int(lt.sum())  # a strictly below b
    else:
        wins = int((sa.size - le).sum())  # a strictly above b
    return (wins + 0.5 * ties) / (sa.size * b.size)


def compare_distributions(a: ScoreTable, b: ScoreTable, name_a: str = "a",
                          name_b: str = "b") -> DistributionComparison:
    if len(a) == 0 or len(b) == 0:
        raise EmptyTable("cannot compare an empty table")
    if a.orientation is not b.orientation:
        raise OrientationMismatch(f"{a.name} and {b.name} have different orientations")
    va = np.fromiter(a.entries.values(), dtype=float, count=len(a))
    vb = np.fromiter(b.entries.values(), dtype=float, count=len(b))
    sa, sb = summarize(a), summarize(b)
    return DistributionComparison(name_a, name_b, sa, sb, sb.mean - sa.mean, sb.median - sa.median,
                                  dominance_fraction(va, vb, a.orientation))
