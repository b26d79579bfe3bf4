from typing import Any, TypedDict

CSV_HEADER = ("experiment", "N", "stat", "value", "stderr", "seed", "wall_ms")


class ReportRow(TypedDict):
    experiment: str
    N: int  # 0 marks rows aggregated across N (fitted slopes)
    stat: str
    value: float
    stderr: float | None
    seed: int
    wall_ms: float | None


class ReportMetadata(TypedDict):
    schema_version: int
    code_version: str
    experiment: str
    config: dict[str, Any]
    master_seed: int
    jitter: dict[str, float]
    wall_ms: dict[str, float]
    notes: list[str]
