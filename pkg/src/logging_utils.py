"""
Logging setup and report writers.
Reports are written as canonical JSON; sweeps additionally as CSV.
"""

import csv
import logging
from pathlib import Path
from typing import Optional

from pydantic import BaseModel

from .config import Config
from .json_utils import canonical_json
from .schemas import ConvergenceReport


# Configure standard logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["experiment", "lambda", "probe_id", "probe_kind", "error", "grid_fingerprint", "seconds"]


def setup_logging(level: str = "INFO"):
    """Set the root log level (the format is fixed at import)."""
    logging.getLogger().setLevel(getattr(logging, level.upper(), logging.INFO))


class ReportWriter:
    """Abstract base for report writers."""

    suffix = ""

    def __init__(self, output_dir: str | Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(exist_ok=True, parents=True)

    def path_for(self, name: str) -> Path:
        return self.output_dir / f"{name}{self.suffix}"

    def write_report(self, report: BaseModel, name: str) -> str:
        """Write a report and return the file path."""
        raise NotImplementedError


class JSONReportWriter(ReportWriter):
    """Write pydantic reports as canonical (sorted-key) JSON."""

    suffix = ".json"

    def write_report(self, report: BaseModel, name: str) -> str:
        output_file = self.path_for(name)
        data = report.model_dump(mode="json", by_alias=True)
        with open(output_file, "w", encoding="utf-8") as f:
            f.write(canonical_json(data, indent=2))
            f.write("\n")

        logger.info(f"Report written to {output_file}")
        return str(output_file)


class CSVSweepWriter(ReportWriter):
    """Write sweep records, one row per (lambda, probe)."""

    suffix = ".csv"

    def write_report(self, report: BaseModel, name: str) -> str:
        if not isinstance(report, ConvergenceReport):
            raise TypeError(f"CSVSweepWriter writes ConvergenceReport, got {type(report).__name__}")
        output_file = self.path_for(name)
        with open(output_file, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for record in report.records:
                row = record.model_dump(by_alias=True)
                row["error"] = repr(row["error"])
                writer.writerow(row)

        logger.info(f"Sweep CSV written to {output_file}")
        return str(output_file)


def create_report_writer(kind: str = "json", config: Optional[Config] = None,
                         output_dir: Optional[str | Path] = None) -> ReportWriter:
    """
    Factory function to create a report writer.

    Args:
        kind: "json" or "csv"
        config: Configuration (uses default if not provided)
        output_dir: Overrides config.logging.output_dir

    Returns:
        ReportWriter instance
    """
    if output_dir is None:
        if config is None:
            from .config import get_config
            config = get_config()
        output_dir = config.logging.output_dir

    if kind == "json":
        return JSONReportWriter(output_dir)
    elif kind == "csv":
        return CSVSweepWriter(output_dir)
    else:
        raise ValueError(f"Unknown report format: {kind}")


def save_report(report: BaseModel, name: str, config: Optional[Config] = None,
                output_dir: Optional[str | Path] = None) -> list[str]:
    """
    Convenience function to save a report.

    Sweep reports get both JSON and CSV; everything else JSON only.

    Returns:
        Paths of the written files
    """
    kinds = ["json", "csv"] if isinstance(report, ConvergenceReport) else ["json"]
    return [create_report_writer(kind, config, output_dir).write_report(report, name) for kind in kinds]
