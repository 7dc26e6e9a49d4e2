"""Stage names and per-stage attrition records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

STAGES = (
    "start_token",
    "length",
    "active_site",
    "max_id",
    "partition",
    "dedup",
    "sampling",
    "plddt",
)

STAGE_TITLES = {
    "ingestion": "Ingestion (parse/translate)",
    "start_token": "Starting Token (M/ATG)",
    "length": "Sequence Length",
    "active_site": "Active Site Conservation",
    "max_id": "Max ID annotation",
    "partition": "Max ID below lowest bin",
    "dedup": "Near-duplicate removal",
    "sampling": "Sampling Strategy",
    "plddt": "Structural Integrity",
}


@dataclass
class StageReport:
    stage_name: str
    input_count: int
    removed_count: int
    notes: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.removed_count <= self.input_count:
            raise ValueError(f"{self.stage_name}: removed {self.removed_count} of {self.input_count}")

    @property
    def output_count(self) -> int:
        return self.input_count - self.removed_count

    @property
    def removed_fraction(self) -> float:
        return self.removed_count / self.input_count if self.input_count else 0.0

    @property
    def removed_pct(self) -> float:
        return 100.0 * self.removed_fraction

    @property
    def title(self) -> str:
        return STAGE_TITLES.get(self.stage_name, self.stage_name)


@dataclass
class PipelineReport:
    stages: List[StageReport] = field(default_factory=list)
    ingestion: Optional[StageReport] = None

    def add(self, rep: StageReport) -> None:
        if self.stages and self.stages[-1].output_count != rep.input_count:
            raise ValueError(f"stage {rep.stage_name} input does not match previous output")
        self.stages.append(rep)

    def get(self, name: str) -> Optional[StageReport]:
        for s in self.stages:
            if s.stage_name == name:
                return s
        return None

    @property
    def final_count(self) -> int:
        if self.stages:
            return self.stages[-1].output_count
        return self.ingestion.output_count if self.ingestion else 0

    @property
    def complete(self) -> bool:
        return [s.stage_name for s in self.stages] == list(STAGES)
