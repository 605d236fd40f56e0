from pydantic import BaseModel, Field, model_validator
from typing import List, Optional


class ErrorStat(BaseModel):
    label: str
    unit: str
    mean: float
    std: float = 0.0
    min: Optional[float] = None
    max: Optional[float] = None
    count: int = 0

    def format_mean_std(self, digits: int = 4) -> str:
        """Reconstruction-table cell, e.g. '0.4755 ± 0.4470 (mm)'."""
        return f"{self.mean:.{digits}f} ± {self.std:.{digits}f} ({self.unit})"

    def format_range(self, digits: int = 3) -> str:
        """Pose-error cell, e.g. '-3.183 [-9, -1]'."""
        if self.min is None or self.max is None:
            return f"{self.mean:.{digits}f}"
        return f"{self.mean:.{digits}f} [{self.min:g}, {self.max:g}]"


class ErrorTable(BaseModel):
    title: str
    object_label: str = "unknown"
    rows: List[ErrorStat] = Field(default_factory=list)

    def row(self, label: str) -> ErrorStat:
        for stat in self.rows:
            if stat.label == label:
                return stat
        raise KeyError(label)

    def to_markdown(self, with_range: bool = False) -> str:
        lines = [f"| {self.title} | {self.object_label} |", "|---|---|"]
        for stat in self.rows:
            cell = stat.format_range() if with_range else stat.format_mean_std()
            lines.append(f"| {stat.label} | {cell} |")
        return "\n".join(lines)


class BenchReport(BaseModel):
    wall_times_ms: List[float]
    median_ms: float
    max_ms: float
    n_samples: int
    warmup: int = 0
    instances: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_order(self):
        if self.median_ms > self.max_ms:
            raise ValueError("median cannot exceed max")
        if self.n_samples != len(self.wall_times_ms):
            raise ValueError("n_samples must match the number of wall times")
        return self


class TrainingReport(BaseModel):
    object_label: str = "unknown"
    n_primitives: int
    n_columns: int
    iterations: int
    converged: bool
    objective_trace: List[float]
    train: ErrorTable
    # Held-out columns encoded against the fixed dictionary
    test: Optional[ErrorTable] = None
    # Held-out columns regenerated from their endpoint frames
    test_generation: Optional[ErrorTable] = None
