"""External per-sequence scores: TSV tables, a deterministic stub, summaries."""

from __future__ import annotations

import enum
import hashlib
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from .errors import DuplicateId, EmptyTable, NonNumericScore


class Orientation(enum.Enum):
    HIGHER_IS_BETTER = "higher"
    LOWER_IS_BETTER = "lower"


# Rosetta energies and docking scores are both "more negative is better".
DEFAULT_ORIENTATION = {
    "plddt": Orientation.HIGHER_IS_BETTER,
    "stability": Orientation.LOWER_IS_BETTER,
    "docking": Orientation.LOWER_IS_BETTER,
    "custom": Orientation.HIGHER_IS_BETTER,
}


@dataclass(frozen=True)
class ScoreTable:
    name: str
    entries: Mapping[str, float]
    orientation: Orientation = Orientation.HIGHER_IS_BETTER

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(self.entries))
        if self.name == "plddt":
            bad = [k for k, v in self.entries.items() if not 0.0 <= v <= 1.0]
            if bad:
                raise ValueError(f"pLDDT values outside [0, 1] for {bad[:3]}")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, rid: str) -> Optional[float]:
        return self.entries.get(rid)

    def passes(self, value: float, threshold: float) -> bool:
        if self.orientation is Orientation.HIGHER_IS_BETTER:
            return value >= threshold
        return value <= threshold


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_score_table(path, kind: str = "custom",
                     orientation: Optional[Orientation] = None) -> ScoreTable:
    """Read a two-column ``id<TAB>score`` file; a non-numeric first row is the header.

    pLDDT tables given on a 0-100 scale (any value above 1) are divided by 100.
    """
    if kind not in DEFAULT_ORIENTATION:
        raise ValueError(f"unknown score kind {kind!r}")
    text = Path(path).read_text(encoding="utf-8")
    entries: Dict[str, float] = {}
    lines = text.splitlines()
    start = 1 if lines and not _is_number(lines[0].split("\t")[-1]) else 0
    for lineno, line in enumerate(lines[start:], start + 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise NonNumericScore(f"{path}:{lineno}: expected id<TAB>score")
        rid, raw = parts[0].strip(), parts[1].strip()
        try:
            value = float(raw)
        except ValueError:
            raise NonNumericScore(f"{path}:{lineno}: {raw!r} is not a number") from None
        if not math.isfinite(value):
            raise NonNumericScore(f"{path}:{lineno}: non-finite score {raw!r}")
        if rid in entries:
            raise DuplicateId(f"{path}:{lineno}: duplicate id {rid!r}")
        entries[rid] = value
    if not entries:
        raise EmptyTable(f"{path}: no score rows")
    if kind == "plddt" and max(entries.values()) > 1.0:
        entries = {k: v / 100.0 for k, v in entries.items()}
    return ScoreTable(kind, entries, orientation or DEFAULT_ORIENTATION[kind])


def format_score_table(table: ScoreTable) -> str:
    rows = ["id\tscore"] + [f"{rid}\t{v:.4f}" for rid, v in table.entries.items()]
    return "\n".join(rows) + "\n"


def write_score_table(table: ScoreTable, path) -> None:
    """Scores are rendered with 4 decimals; tables holding 4-decimal values round-trip."""
    Path(path).write_bytes(format_score_table(table).encode("utf-8"))


@dataclass(frozen=True)
class StubScorer:
    """Stand-in for a structure predictor: a pure hash of (seed, id) into [lo, hi]."""

    seed: int = 0
    lo: float = 0.0
    hi: float = 1.0
    name: str = "plddt"
    orientation: Orientation = Orientation.HIGHER_IS_BETTER

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError("stub range must have lo <= hi")

    def get(self, rid: str) -> float:
        return stub_score(self, rid)

    def passes(self, value: float, threshold: float) -> bool:
        if self.orientation is Orientation.HIGHER_IS_BETTER:
            return value >= threshold
        return value <= threshold

    def table(self, ids: Iterable[str]) -> ScoreTable:
        return ScoreTable(self.name, {rid: round(self.get(rid), 4) for rid in ids}, self.orientation)


def stub_score(scorer: StubScorer, rid: str) -> float:
    digest = hashlib.blake2b(f"{scorer.seed}\x1f{rid}".encode("utf-8"), digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2.0 ** 64
    return scorer.lo + (scorer.hi - scorer.lo) * u


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    median: float
    stddev: float
    min: float
    max: float


def summarize(table) -> Summary:
    """Count, mean, median, population standard deviation, min and max."""
    values = list(table.entries.values()) if isinstance(table, ScoreTable) else list(table)
    if not values:
        raise EmptyTable("cannot summarize an empty table")
    return Summary(
        count=len(values),
        mean=statistics.fmean(values),
        median=statistics.median(values),
        stddev=statistics.pstdev(values),
        min=min(values),
        max=max(values),
    )
