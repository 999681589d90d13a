#!/usr/bin/env python3
"""
Collect fitted convergence orders from sweep reports into one CSV.
"""

import argparse
import csv
import json
from pathlib import Path

FIELDS = ["experiment", "model", "probe_id", "fitted_order", "residual", "points", "smallest_lambda_error", "note"]


def load_reports(runs_dir: Path) -> list[dict]:
    """Load every ConvergenceReport JSON below runs_dir (manifests are skipped)."""
    reports = []
    for path in sorted(runs_dir.rglob("*.json")):
        if path.name.endswith("_manifest.json"):
            continue
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            print(f"Error loading {path}: {e}")
            continue
        if "fits" in data and "records" in data:
            reports.append(data)
    return reports


def fit_rows(report: dict) -> list[dict]:
    rows = []
    for fit in report["fits"]:
        errors = [r["error"] for r in report["records"] if r["probe_id"] == fit["probe_id"]]
        rows.append({
            "experiment": report["experiment"],
            "model": report["model"],
            "probe_id": fit["probe_id"],
            "fitted_order": fit.get("fitted_order"),
            "residual": fit.get("residual"),
            "points": fit["points"],
            "smallest_lambda_error": errors[-1] if errors else None,
            "note": fit.get("note", ""),
        })
    return rows


def main():
    parser = argparse.ArgumentParser(description="Export fitted orders of all sweep reports to CSV")
    parser.add_argument("runs_dir", type=Path, help="Directory containing sweep reports")
    parser.add_argument("--csv", type=Path, default=Path("fits.csv"), help="Output CSV")
    args = parser.parse_args()

    if not args.runs_dir.exists():
        print(f"Error: {args.runs_dir} does not exist")
        return

    reports = load_reports(args.runs_dir)
    rows = [row for report in reports for row in fit_rows(report)]
    with open(args.csv, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"Exported {len(rows)} fit(s) from {len(reports)} report(s) to {args.csv}")


if __name__ == "__main__":
    main()
