"""
Experiment Builder
Orchestrates optimization runs, seed ensembles, verification suites and data export
"""

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import RunConfig
from src.core import CboError, RngStream, tool_error, tool_success
from src.diagnostics import StepRecord, check_conditions, initial_data_statistics
from src.dynamics import StopCriteria, Trajectory, init_uniform, run
from src.gibbs import summarize
from src.settings import get_output_dir
from src.verify import VerificationReport, VerifyConfig, default_config, log_gap_curve, verify_theorem

CSV_FLOAT_FORMAT = "%.17g"


@dataclass
class RunSummary:
    seed: int
    run_seed: int
    steps: int
    stop_reason: str
    final_time: float
    final_diameter: float
    final_consensus: List[float]
    final_value: float
    distance_to_minimizer: Optional[float]
    success: Optional[bool]
    wall_time: float

    def to_dict(self, include_wall_time: bool = True) -> Dict[str, Any]:
        data = {"kind": "summary"}
        data.update(asdict(self))
        if not include_wall_time:
            data.pop("wall_time")
        return data


def _summarize_trajectory(config: RunConfig, seed_index: int, rng: RngStream,
                          trajectory: Trajectory) -> RunSummary:
    L = config.build_objective()
    final = trajectory.final
    g = summarize(final, L.evaluate(final.positions), config.beta)
    last = trajectory.records[-1]
    distance = L.distance_to_minimizer(g.consensus_point)
    return RunSummary(
        seed=seed_index,
        run_seed=rng.seed,
        steps=trajectory.steps,
        stop_reason=trajectory.stop_reason,
        final_time=final.time,
        final_diameter=last.diameter,
        final_consensus=[float(v) for v in g.consensus_point],
        final_value=L(g.consensus_point),
        distance_to_minimizer=distance,
        success=None if distance is None else bool(distance <= config.success_radius),
        wall_time=trajectory.wall_time,
    )


def execute_seed(config: RunConfig, seed_index: int, keep_trajectory: bool = False) -> Dict[str, Any]:
    """
    Run one seed of a config; safe to call in a worker process.

    The run draws its noise from RngStream(seed, seed_index). The initial
    ensemble comes from the same stream unless init_seed is set, in which case
    every seed starts from the ensemble drawn by RngStream(init_seed, 0).
    """
    try:
        p = config.params()
        L = config.build_objective()
        low, high = config.init_box()
        rng = RngStream(config.seed, seed_index)
        init_rng = RngStream(config.init_seed, 0) if config.init_seed is not None else rng
        init = init_uniform(p, low, high, init_rng)
        stop = StopCriteria(
            max_steps=config.max_steps,
            diameter_tol=config.diameter_tol,
            wall_limit=config.wall_limit,
        )
        stride = config.record_stride if keep_trajectory else config.max_steps + 1
        trajectory = run(init, p, L, stop, rng, record_stride=stride,
                         snapshot_times=config.snapshot_times if keep_trajectory else None)
        payload = {"summary": _summarize_trajectory(config, seed_index, rng, trajectory)}
        if keep_trajectory:
            payload["trajectory"] = trajectory
        return tool_success("run", payload)
    except CboError as e:
        return tool_error(f"seed {seed_index}: {e}")
    except Exception as e:
        return tool_error(f"seed {seed_index}: {type(e).__name__}: {e}")


def _execute_seed_job(args):
    return execute_seed(*args)


class ExperimentBuilder:
    """
    Orchestrator for one run config: single runs, seed ensembles, condition
    checks, verification suites and log-gap tables.
    """

    def __init__(self, config: Optional[RunConfig] = None, output_dir: Optional[str] = None,
                 quiet: bool = False):
        self.config = config
        self.output_dir = output_dir or get_output_dir()
        self.quiet = quiet

        # Execution tracking
        self.execution_log = []
        self.artifacts = {}
        self.jsonl_path = None

    def log(self, message: str, level: str = "INFO"):
        """Log a message with timestamp."""
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        log_entry = f"[{timestamp}] [{level}] {message}"
        self.execution_log.append(log_entry)
        if not self.quiet:
            print(message)

    def banner(self, title: str):
        self.log("\n" + "=" * 60)
        self.log(title)
        self.log("=" * 60)

    def _require_config(self) -> RunConfig:
        if self.config is None:
            raise ValueError("this operation needs a run config")
        return self.config

    # -----------------------------------------------------------------------
    # Writers
    # -----------------------------------------------------------------------

    def _prepare(self, path: str) -> str:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        return path

    def write_table(self, frame: pd.DataFrame, path: str, label: str) -> str:
        frame.to_csv(self._prepare(path), index=False, float_format=CSV_FLOAT_FORMAT)
        self.artifacts[label] = path
        self.log(f"💾 {label} written to: {path}")
        return path

    def write_jsonl(self, objects: Sequence[Dict[str, Any]], path: str, label: str) -> str:
        with open(self._prepare(path), "w", encoding="utf-8") as f:
            for obj in objects:
                f.write(json.dumps(obj) + "\n")
        self.artifacts[label] = path
        self.jsonl_path = path
        self.log(f"💾 {label} written to: {path}")
        return path

    def append_log_object(self, path: str):
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps({"kind": "log", "entries": self.execution_log}) + "\n")

    def save_results(self, results: Dict[str, Any], name: str) -> str:
        """Save a results dictionary, with the execution log, to a JSON file."""
        os.makedirs(self.output_dir, exist_ok=True)
        output_file = os.path.join(self.output_dir, f"{name}_results.json")
        results = dict(results)
        results["execution_log"] = self.execution_log
        with open(output_file, "w") as f:
            json.dump(results, f, indent=2, default=str)
        self.log(f"💾 Results saved to: {output_file}")
        return output_file

    @staticmethod
    def trajectory_frame(records: Sequence[StepRecord], dim: int) -> pd.DataFrame:
        return pd.DataFrame([r.csv_row() for r in records], columns=StepRecord.csv_columns(dim))

    @staticmethod
    def snapshot_frame(snapshots, dim: int) -> pd.DataFrame:
        rows = []
        for t, positions in snapshots:
            for i, x in enumerate(positions):
                rows.append([t, i] + [float(v) for v in x])
        columns = ["time", "particle"] + [f"x_{l}" for l in range(1, dim + 1)]
        return pd.DataFrame(rows, columns=columns)

    # -----------------------------------------------------------------------
    # Single run
    # -----------------------------------------------------------------------

    def run_single(self) -> Dict[str, Any]:
        """Run seed 0 of the config and export its trajectory and summary."""
        config = self._require_config()
        start_time = datetime.now()
        results = {"command": "run", "config": config.to_dict()}

        self.banner("CONSENSUS RUN")
        self.log(f"🔄 {config.objective} d={config.dim} N={config.n_particles} scheme={config.scheme} "
                 f"lambda={config.lam:g} sigma={config.sigma:g} beta={config.beta:g} h={config.h:g} "
                 f"seed={config.seed}")

        outcome = execute_seed(config, 0, keep_trajectory=True)
        if outcome["status"] != "success":
            self.log(f"❌ Run failed: {outcome['error_message']}", "ERROR")
            results.update(status="error", error=outcome["error_message"])
            return results

        summary: RunSummary = outcome["run"]["summary"]
        trajectory: Trajectory = outcome["run"]["trajectory"]
        paths = config.output_paths(self.output_dir)

        try:
            self.write_table(self.trajectory_frame(trajectory.records, config.dim), paths["csv"], "trajectory")
            objects = [r.to_dict() for r in trajectory.records]
            objects.append(summary.to_dict(include_wall_time=False))
            self.write_jsonl(objects, paths["jsonl"], "records")
            if trajectory.snapshots:
                self.write_table(self.snapshot_frame(trajectory.snapshots, config.dim),
                                 paths["snapshots"], "snapshots")
            elif config.snapshot_times:
                self.log("⚠️ No snapshot time fell inside the run", "WARNING")
        except OSError as e:
            self.log(f"❌ Could not write outputs: {e}", "ERROR")
            results.update(status="error", error=str(e), error_kind="io")
            return results

        self.log(f"\n📊 Stopped after {summary.steps} steps (t = {summary.final_time:g}): {summary.stop_reason}")
        self.log(f"   final diameter       {summary.final_diameter:.6g}")
        self.log(f"   consensus point      {np.array2string(np.array(summary.final_consensus), precision=6)}")
        self.log(f"   L(consensus)         {summary.final_value:.6g}")
        if summary.distance_to_minimizer is not None:
            self.log(f"   distance to minimizer {summary.distance_to_minimizer:.6g}")

        results.update(
            status="success",
            summary=summary.to_dict(),
            artifacts=dict(self.artifacts),
            execution_time_seconds=(datetime.now() - start_time).total_seconds(),
        )
        self.log("\n✅ Run completed successfully!")
        return results

    # -----------------------------------------------------------------------
    # Seed ensemble
    # -----------------------------------------------------------------------

    def _execute_seeds(self, n_seeds: int, jobs: int) -> List[Dict[str, Any]]:
        config = self._require_config()
        tasks = [(config, k, False) for k in range(n_seeds)]
        if jobs > 1 and n_seeds > 1:
            self.log(f"🔄 Running {n_seeds} seeds on {jobs} worker processes...")
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(_execute_seed_job, tasks))
        self.log(f"🔄 Running {n_seeds} seeds...")
        return [_execute_seed_job(task) for task in tasks]

    @staticmethod
    def aggregate(summaries: Sequence[RunSummary], n_seeds: int) -> Dict[str, Any]:
        """Aggregate statistics over the seeds that completed."""
        data: Dict[str, Any] = {
            "kind": "aggregate",
            "n_seeds": n_seeds,
            "n_completed": len(summaries),
            "n_failed": n_seeds - len(summaries),
        }
        if not summaries:
            return data
        values = np.array([s.final_value for s in summaries])
        steps = np.array([s.steps for s in summaries])
        data.update(
            median_final_value=float(np.median(values)),
            min_final_value=float(values.min()),
            mean_steps=float(steps.mean()),
            median_steps=float(np.median(steps)),
            consensus_rate=float(np.mean([s.stop_reason == "diameter_tol" for s in summaries])),
        )
        flags = [s.success for s in summaries]
        data["success_rate"] = None if any(f is None for f in flags) else float(np.mean(flags))
        return data

    def run_ensemble(self, n_seeds: int, jobs: Optional[int] = None) -> Dict[str, Any]:
        """Run seeds 0..n_seeds-1 and export per-seed summaries plus an aggregate row."""
        config = self._require_config()
        if n_seeds < 1:
            raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
        jobs = config.jobs if jobs is None else jobs
        start_time = datetime.now()
        results = {"command": "ensemble", "config": config.to_dict(), "n_seeds": n_seeds}

        self.banner(f"SEED ENSEMBLE ({n_seeds} seeds)")
        outcomes = self._execute_seeds(n_seeds, jobs)

        summaries: List[RunSummary] = []
        failures = []
        for k, outcome in enumerate(outcomes):
            if outcome["status"] == "success":
                summaries.append(outcome["run"]["summary"])
            else:
                failures.append({"seed": k, "error": outcome["error_message"]})
                self.log(f"❌ {outcome['error_message']}", "ERROR")

        aggregate = self.aggregate(summaries, n_seeds)
        results["aggregate"] = aggregate
        results["failures"] = failures

        paths = config.output_paths(self.output_dir)
        csv_path = config.out_csv or paths["csv"].replace(".csv", "_ensemble.csv")
        jsonl_path = config.out_jsonl or paths["jsonl"].replace(".jsonl", "_ensemble.jsonl")
        try:
            rows = []
            for s in summaries:
                row = s.to_dict(include_wall_time=False)
                row.pop("kind")
                consensus = row.pop("final_consensus")
                for l, v in enumerate(consensus, start=1):
                    row[f"cons_{l}"] = v
                rows.append(row)
            self.write_table(pd.DataFrame(rows), csv_path, "ensemble table")
            objects = [s.to_dict(include_wall_time=False) for s in summaries]
            objects += [{"kind": "failure", **f} for f in failures]
            objects.append(aggregate)
            self.write_jsonl(objects, jsonl_path, "ensemble records")
        except OSError as e:
            self.log(f"❌ Could not write outputs: {e}", "ERROR")
            results.update(status="error", error=str(e), error_kind="io")
            return results

        self.log(f"\n📊 {aggregate['n_completed']}/{n_seeds} seeds completed")
        if summaries:
            self.log(f"   median L(consensus)  {aggregate['median_final_value']:.6g}")
            self.log(f"   mean steps           {aggregate['mean_steps']:.1f}")
            self.log(f"   reached diameter tol {aggregate['consensus_rate']:.0%}")
            if aggregate["success_rate"] is not None:
                self.log(f"   within radius {config.success_radius:g} of minimizer: {aggregate['success_rate']:.0%}")

        results["summaries"] = [s.to_dict() for s in summaries]
        results["artifacts"] = dict(self.artifacts)
        results["execution_time_seconds"] = (datetime.now() - start_time).total_seconds()
        if not summaries:
            self.log("\n❌ Every seed failed", "ERROR")
            results["status"] = "error"
            results["error"] = "all seeds failed"
        elif failures:
            results["status"] = "partial"
            self.log(f"\n⚠️ Ensemble completed with {len(failures)} failed seed(s)", "WARNING")
        else:
            results["status"] = "success"
            self.log("\n✅ Ensemble completed successfully!")
        return results

    # -----------------------------------------------------------------------
    # Conditions
    # -----------------------------------------------------------------------

    def check_conditions(self) -> Dict[str, Any]:
        """Scheme hypotheses plus the convergence-to-minimum feasibility estimate."""
        config = self._require_config()
        self.banner("PARAMETER CONDITIONS")
        p = config.params()
        L = config.build_objective()
        low, high = config.init_box()
        stats_seed = config.init_seed if config.init_seed is not None else config.seed
        self.log(f"🔄 Estimating initial-data statistics from {config.init_draws} draws...")
        stats = initial_data_statistics(p, L, low, high, RngStream(stats_seed, 0), draws=config.init_draws)
        report = check_conditions(p, L, stats)
        for line in report.lines():
            self.log(line)
        return {"command": "conditions", "status": "success", "report": report.to_dict()}

    # -----------------------------------------------------------------------
    # Verification
    # -----------------------------------------------------------------------

    def run_verification(
        self,
        theorems: Sequence[str],
        overrides: Optional[Dict[str, Any]] = None,
        jsonl_path: Optional[str] = None
    ) -> Dict[str, Any]:
        """Run each verification id with its default setup plus overrides."""
        overrides = overrides or {}
        start_time = datetime.now()
        self.banner("VERIFICATION SUITE")

        reports: List[VerificationReport] = []
        errors = []
        for theorem in theorems:
            config = replace(default_config(theorem), **overrides)
            self.log(f"🔄 {theorem}...")
            try:
                report = verify_theorem(theorem, config)
            except (CboError, ValueError) as e:
                self.log(f"❌ {theorem} raised: {e}", "ERROR")
                errors.append({"theorem": theorem, "error": str(e), "traceback": traceback.format_exc()})
                continue
            marker = {"pass": "✅", "fail": "❌", "skip": "⚠️"}[report.verdict]
            self.log(f"{marker} {report.line()}")
            reports.append(report)

        counts = {v: sum(r.verdict == v for r in reports) for v in ("pass", "fail", "skip")}
        path = jsonl_path or os.path.join(self.output_dir, "verification.jsonl")
        try:
            self.write_jsonl([r.to_dict() for r in reports], path, "verification reports")
        except OSError as e:
            self.log(f"❌ Could not write outputs: {e}", "ERROR")
            return {"command": "verify", "status": "error", "error": str(e), "error_kind": "io"}

        self.log(f"\n📊 {counts['pass']} passed, {counts['fail']} failed, {counts['skip']} skipped")
        failed = counts["fail"] > 0 or bool(errors)
        return {
            "command": "verify",
            "status": "error" if failed else "success",
            "counts": counts,
            "reports": [r.to_dict() for r in reports],
            "errors": errors,
            "artifacts": dict(self.artifacts),
            "execution_time_seconds": (datetime.now() - start_time).total_seconds(),
        }

    # -----------------------------------------------------------------------
    # Log-gap tables
    # -----------------------------------------------------------------------

    def log_gap_table(
        self,
        base: VerifyConfig,
        sigmas: Sequence[float],
        runs: int,
        csv_path: Optional[str] = None
    ) -> Dict[str, Any]:
        """Mean log pairwise gap against time for each sigma, in one tidy CSV."""
        self.banner(f"LOG-GAP CURVES ({base.scheme})")
        frames = []
        for sigma in sigmas:
            self.log(f"🔄 sigma = {sigma:g}, {runs} runs")
            frames.append(log_gap_curve(replace(base, sigma=float(sigma)), runs))
        table = pd.concat(frames, ignore_index=True)
        path = csv_path or os.path.join(self.output_dir, f"log_gap_{base.scheme}.csv")
        try:
            self.write_table(table, path, "log-gap table")
        except OSError as e:
            self.log(f"❌ Could not write outputs: {e}", "ERROR")
            return {"command": "gap", "status": "error", "error": str(e), "error_kind": "io"}
        return {"command": "gap", "status": "success", "rows": len(table), "artifacts": dict(self.artifacts)}

