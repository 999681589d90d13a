#!/usr/bin/env python3
"""
Batch Sweep Runner

Runs several lambda sweeps sequentially from a batch file, one `fwcl sweep`
subprocess per entry, and logs progress to logs/batch_runs/.

Usage:
    python scripts/run_batch_sweeps.py --batch configs/batch/acceptance.yaml

Example batch config:
    sweeps:
      - name: "Reduced resolvent, Lorentzian"
        sweep: configs/sweeps/reduced_resolvent.yaml
        config: configs/ci.yaml
        args: --jobs 4
"""

import argparse
import subprocess
import sys
import time
from datetime import datetime
from pathlib import Path

import yaml


class SweepBatchRunner:
    """Runs a batch of sweeps sequentially."""

    def __init__(self, batch_file: Path, dry_run: bool = False):
        self.batch_file = batch_file
        self.dry_run = dry_run
        self.start_time = None
        self.results = []

        with open(batch_file, "r") as f:
            self.config = yaml.safe_load(f) or {}

        self.sweeps = self.config.get("sweeps", [])
        self.default_config = self.config.get("config")

        self.log_dir = Path("logs/batch_runs")
        self.log_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_file = self.log_dir / f"{batch_file.stem}_{timestamp}.log"

    def log(self, message: str):
        """Log message to both console and file."""
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        full_message = f"[{timestamp}] {message}"
        print(full_message)
        with open(self.log_file, "a") as f:
            f.write(full_message + "\n")

    def validate_sweeps(self) -> bool:
        """Check that every entry names an existing sweep file (and config, if given)."""
        if not self.sweeps:
            self.log("ERROR: No sweeps found in batch configuration")
            return False

        for i, entry in enumerate(self.sweeps):
            if "sweep" not in entry:
                self.log(f"ERROR: Entry {i+1} missing 'sweep' field")
                return False
            if not Path(entry["sweep"]).exists():
                self.log(f"ERROR: Sweep config not found: {entry['sweep']}")
                return False
            config = entry.get("config", self.default_config)
            if config and not Path(config).exists():
                self.log(f"ERROR: Config not found: {config}")
                return False
        return True

    def command_for(self, entry: dict) -> list[str]:
        cmd = [sys.executable, "-m", "src.app", "sweep", entry["sweep"]]
        config = entry.get("config", self.default_config)
        if config:
            cmd += ["--config", config]
        if entry.get("args"):
            cmd += str(entry["args"]).split()
        return cmd

    def run_sweep(self, entry: dict, num: int, total: int) -> bool:
        """Run a single sweep; exit code 0 is success, 1 numerical failure, 2 config error."""
        name = entry.get("name", Path(entry["sweep"]).stem)
        cmd = self.command_for(entry)

        self.log("=" * 80)
        self.log(f"Starting sweep {num}/{total}: {name}")
        self.log(f"  Command: {' '.join(cmd)}")
        self.log("=" * 80)

        if self.dry_run:
            self.log("DRY RUN: not executed")
            return True

        start = time.time()
        try:
            result = subprocess.run(cmd, cwd=Path.cwd())
        except OSError as e:
            duration = time.time() - start
            self.log(f"Sweep crashed: {e}")
            self.results.append({"name": name, "status": "error", "duration": duration, "error": str(e)})
            return False

        duration = time.time() - start
        if result.returncode == 0:
            self.log(f"Sweep completed in {duration:.1f}s")
            self.results.append({"name": name, "status": "success", "duration": duration})
            return True

        kind = "config error" if result.returncode == 2 else "numerical failure"
        self.log(f"Sweep failed ({kind}, return code {result.returncode})")
        self.results.append({
            "name": name,
            "status": "failed",
            "duration": duration,
            "error": f"Return code {result.returncode} ({kind})",
        })
        return False

    def run_all(self, continue_on_error: bool = False) -> bool:
        """Run all sweeps in the batch."""
        self.start_time = time.time()

        self.log("=" * 80)
        self.log("BATCH SWEEP RUN")
        self.log(f"Batch file: {self.batch_file}")
        self.log(f"Total sweeps: {len(self.sweeps)}")
        self.log(f"Continue on error: {continue_on_error}")
        self.log(f"Dry run: {self.dry_run}")
        self.log(f"Log file: {self.log_file}")
        self.log("=" * 80)

        if not self.validate_sweeps():
            self.log("ERROR: Validation failed. Aborting.")
            return False

        ok = True
        total = len(self.sweeps)
        for i, entry in enumerate(self.sweeps, 1):
            if not self.run_sweep(entry, i, total):
                ok = False
                if not continue_on_error:
                    self.log("ERROR: Sweep failed; stopping (use --continue-on-error to keep going)")
                    break

        self.print_summary()
        return ok

    def print_summary(self):
        total_duration = time.time() - self.start_time
        success_count = sum(1 for r in self.results if r["status"] == "success")

        self.log("")
        self.log("=" * 80)
        self.log("BATCH SWEEP SUMMARY")
        self.log("=" * 80)
        self.log(f"Sweeps run: {len(self.results)}")
        self.log(f"Successful: {success_count}")
        self.log(f"Failed: {len(self.results) - success_count}")
        self.log(f"Total time: {total_duration:.1f}s")
        for i, result in enumerate(self.results, 1):
            self.log(f"  {i}. {result['name']}: {result['status']} ({result['duration']:.1f}s)")
            if "error" in result:
                self.log(f"     Error: {result['error']}")
        self.log("=" * 80)
        self.log(f"Log saved to: {self.log_file}")


def main():
    parser = argparse.ArgumentParser(description="Run several lambda sweeps sequentially from a batch file")
    parser.add_argument("--batch", type=str, required=True, help="Path to batch YAML file")
    parser.add_argument("--dry-run", action="store_true", help="Print the commands without running them")
    parser.add_argument("--continue-on-error", action="store_true", help="Keep going after a failed sweep")
    args = parser.parse_args()

    batch_file = Path(args.batch)
    if not batch_file.exists():
        print(f"ERROR: Batch file not found: {batch_file}")
        sys.exit(2)

    runner = SweepBatchRunner(batch_file, dry_run=args.dry_run)
    success = runner.run_all(continue_on_error=args.continue_on_error)
    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
