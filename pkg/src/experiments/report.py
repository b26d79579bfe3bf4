import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from src.core.config import Config
from src.schemas.reports import CSV_HEADER, ReportMetadata, ReportRow

logger = logging.getLogger(__name__)


def _format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    # shortest round-trip repr, stable across platforms
    return repr(value)


@dataclass
class ExperimentReport:
    """Long-format rows plus a metadata block for the JSON sidecar."""

    experiment: str
    config: dict
    master_seed: int
    record_timing: bool = False
    rows: list[ReportRow] = field(default_factory=list)
    jitter: dict[str, float] = field(default_factory=dict)
    wall_ms: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(
        self,
        N: int,
        stat: str,
        value: float,
        stderr: float | None = None,
        seed: int | None = None,
        wall_ms: float | None = None,
    ):
        self.rows.append(
            ReportRow(
                experiment=self.experiment,
                N=int(N),
                stat=stat,
                value=float(value),
                stderr=None if stderr is None else float(stderr),
                seed=self.master_seed if seed is None else int(seed),
                wall_ms=wall_ms if self.record_timing else None,
            )
        )

    def get(self, stat: str, N: int | None = None) -> ReportRow:
        for row in self.rows:
            if row["stat"] == stat and (N is None or row["N"] == N):
                return row
        raise KeyError(f"no row {stat!r} for N={N}")

    def values(self, stat: str) -> dict[int, float]:
        return {row["N"]: row["value"] for row in self.rows if row["stat"] == stat}

    def metadata(self) -> ReportMetadata:
        return ReportMetadata(
            schema_version=Config.SCHEMA_VERSION,
            code_version=Config.CODE_VERSION,
            experiment=self.experiment,
            config=self.config,
            master_seed=self.master_seed,
            jitter=self.jitter,
            wall_ms=self.wall_ms,
            notes=self.notes,
        )

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([_format_number(row[key]) if key not in ("experiment", "stat") else row[key] for key in CSV_HEADER])
        return buffer.getvalue()


def write_report(report: ExperimentReport, output: str | Path) -> tuple[Path, Path]:
    """Write <output>.csv and the <output>.json metadata sidecar."""
    base = Path(output)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    json_path = base.with_suffix(".json")

    csv_path.write_text(report.to_csv(), encoding="utf-8")
    json_path.write_text(json.dumps(report.metadata(), indent=2, sort_keys=True, default=str), encoding="utf-8")
    logger.info(
        "Report written",
        extra={"csv": str(csv_path), "json": str(json_path), "rows": len(report.rows)},
    )
    return csv_path, json_path
