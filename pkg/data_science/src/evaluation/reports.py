"""
Protocol tables and their on-disk form.

A table is written as report.json (the full nested structure, sorted keys)
and report.csv (one row per run, for external plotting). Neither file holds
timestamps, so identical runs give byte-identical reports.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd

from data_science.src.errors import DataError
from data_science.src.evaluation.metrics import MetricsReport
from data_science.src.utils import json_snapshot

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
FRAME_COLUMNS = ["protocol", "dataset", "label", "seed", "f1"]


@dataclass
class ProtocolTable:
    """Rows of one protocol run on one dataset, plus the config that produced them."""
    protocol: str
    dataset_tag: str
    rows: List[MetricsReport]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.config = json_snapshot(self.config)

    def row(self, label: str) -> MetricsReport:
        for report in self.rows:
            if report.label == label:
                return report
        raise KeyError(f"No row labelled '{label}' in {self.protocol} table")

    @property
    def labels(self) -> List[str]:
        return [report.label for report in self.rows]

    @property
    def seeds(self) -> List[int]:
        return sorted({seed for report in self.rows for seed in report.seeds})

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "dataset_tag": self.dataset_tag,
                "rows": [report.to_dict() for report in self.rows], "config": self.config}

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolTable":
        return cls(protocol=data["protocol"], dataset_tag=data["dataset_tag"],
                   rows=[MetricsReport.from_dict(row) for row in data["rows"]], config=data.get("config", {}))

    def to_frame(self) -> pd.DataFrame:
        """Flat per-run table: protocol, dataset, label, seed, f1."""
        records = [{"protocol": self.protocol, "dataset": self.dataset_tag, "label": report.label,
                    "seed": seed, "f1": score}
                   for report in self.rows for seed, score in zip(report.seeds, report.per_run_f1)]
        return pd.DataFrame(records, columns=FRAME_COLUMNS)

    def summary_frame(self) -> pd.DataFrame:
        """One line per row: mean F1 and 95% CI half-width."""
        return pd.DataFrame([{"label": report.label, "mean_f1": report.mean_f1,
                              "ci95_halfwidth": report.ci95_halfwidth, "runs": len(report.per_run_f1)}
                             for report in self.rows])


def report_name(table: ProtocolTable) -> str:
    """File stem encoding protocol, dataset tag and seeds, e.g. 'alpha_sweep-synthetic-seeds0_1_2'."""
    return f"{table.protocol}-{table.dataset_tag}-seeds{'_'.join(str(s) for s in table.seeds)}"


def write_report(table: ProtocolTable, out_dir: str | Path, stem: Optional[str] = None) -> Tuple[Path, Path]:
    """
    Write a table as JSON plus flat CSV.

    Args:
        table (ProtocolTable): Table to write
        out_dir (str | Path): Target directory (created if missing)
        stem (str, optional): File stem. Defaults to report_name(table).

    Returns:
        Tuple[Path, Path]: (json path, csv path)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or report_name(table)
    json_path, csv_path = out_dir / f"{stem}.json", out_dir / f"{stem}.csv"
    json_path.write_text(json.dumps(table.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    table.to_frame().to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
    return json_path, csv_path


def load_report(path: str | Path) -> ProtocolTable:
    """
    Reload a table written by write_report.

    Raises:
        DataError: Missing or malformed file
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Report not found: {path}")
    try:
        return ProtocolTable.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"Malformed report {path}: {e}", cause=e)
