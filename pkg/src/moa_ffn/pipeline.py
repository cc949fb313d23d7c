"""
Run pipeline: one output directory per command, with its config echo, log
and artifacts.

Layout of ``<out>/<command>[-<name>]/``::

    config.cfg        normalised config echo
    run.log           the only file carrying timestamps
    metrics.jsonl     training loss streams (train)
    checkpoints/      final weights (train)
    reports/*.csv     ablation, witness, bench and grad-check tables
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import logging

import pandas as pd

from .activations import ActivationKind, ActivationTag
from .base import (
    ConfigError,
    DataError,
    Flavor,
    MoAError,
    NumericError,
    TheoremAssertionError,
)
from .bench import bench_variants, write_bench_reports
from .config import AblationGrid, RunConfig, build_model_config, build_train_config
from .data import ByteCorpus
from .expressivity.fitting import FitBudget
from .expressivity.report import WitnessSuite
from .ffn import FFNConfig, FFNVariant, gradient_check
from .parallel import run_jobs
from .train import CellJob, expand_lr_grid, run_ablation, run_training

GRADCHECK_TOLERANCE = 1e-5

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_THEOREM = 4


def exit_code_for(error: BaseException) -> int:
    """Stable exit code of a failure class."""
    if isinstance(error, (ConfigError, DataError)):
        return EXIT_CONFIG
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    if isinstance(error, TheoremAssertionError):
        return EXIT_THEOREM
    return EXIT_FAILURE


def _train_seed(job: CellJob) -> Dict[str, Any]:
    metrics = run_training(job.model_cfg, job.train_cfg, seed=job.seed, metrics_path=job.metrics_path)
    return {"seed": job.seed, "val_loss": metrics.val_loss, "initial_loss": metrics.initial_loss}


class RunPipeline:
    """Owns one run directory and turns a command into a results summary."""

    def __init__(self, out_dir: str, command: str, name: Optional[str] = None):
        """
        Initialize the pipeline.

        Args:
            out_dir: Root output directory
            command: Sub-command being run; names the run directory
            name: Optional suffix for the run directory
        """
        self.command = command
        suffix = f"-{name}" if name else ""
        self.run_dir = Path(out_dir) / f"{command}{suffix}"
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.reports_dir = self.run_dir / "reports"
        self._setup_logging()

    def _setup_logging(self) -> None:
        """Setup logging configuration."""
        logging.basicConfig(
            level=logging.INFO,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            handlers=[
                logging.FileHandler(self.run_dir / "run.log"),
                logging.StreamHandler(),
            ],
            force=True,
        )
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def _new_results(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "status": "running",
            "run_dir": str(self.run_dir),
            "files_created": [],
            "errors": [],
            "exit_code": EXIT_OK,
        }

    def _fail(self, results: Dict[str, Any], stage: str, error: BaseException) -> Dict[str, Any]:
        message = f"{stage} failed: {error}"
        self.logger.error(message)
        results["errors"].append(message)
        results["status"] = "failed"
        results["stage"] = stage
        results["exit_code"] = exit_code_for(error)
        return results

    def _finish(self, results: Dict[str, Any]) -> Dict[str, Any]:
        if results["status"] == "running":
            results["status"] = "completed"
        self.logger.info(
            f"{self.command} {results['status']}: {len(results['files_created'])} file(s) written"
        )
        return results

    def write_config_echo(self, config: RunConfig, results: Dict[str, Any]) -> Path:
        path = self.run_dir / "config.cfg"
        path.write_text(config.render())
        results["files_created"].append(str(path))
        return path

    def _write_table(self, table: pd.DataFrame, filename: str, results: Dict[str, Any]) -> Path:
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        path = self.reports_dir / filename
        table.to_csv(path, index=False)
        results["files_created"].append(str(path))
        return path

    # -- commands ------------------------------------------------------------

    def run_train(self, config: RunConfig) -> Dict[str, Any]:
        """Train one model per seed in ``train.seeds``; a single seed also saves its weights."""
        results = self._new_results()
        stage = "config"
        try:
            self.write_config_echo(config, results)
            model_cfg = build_model_config(config)
            train_cfg = build_train_config(config)

            stage = "data"
            corpus = ByteCorpus.from_path(train_cfg.corpus_path, train_cfg.holdout_fraction)

            stage = "train"
            seeds = train_cfg.seeds
            if len(seeds) == 1:
                metrics_path = self.run_dir / "metrics.jsonl"
                checkpoint = self.run_dir / "checkpoints" / "final.ckpt"
                metrics = run_training(
                    model_cfg,
                    train_cfg,
                    seed=seeds[0],
                    corpus=corpus,
                    metrics_path=metrics_path,
                    checkpoint_path=checkpoint,
                )
                results["files_created"] += [str(metrics_path), str(checkpoint)]
                results["val_loss"] = metrics.val_loss
                results["eval_rows"] = len(metrics.eval_records)
            else:
                jobs = [
                    CellJob("train", seed, model_cfg, train_cfg, str(self.run_dir / f"metrics-seed{seed}.jsonl"))
                    for seed in seeds
                ]
                outcomes = run_jobs(_train_seed, jobs, workers=config.jobs)
                for job, outcome in zip(jobs, outcomes):
                    if isinstance(outcome, BaseException):
                        raise outcome
                    results["files_created"].append(job.metrics_path)
                results["val_loss"] = [o["val_loss"] for o in outcomes]
        except (MoAError, OSError) as e:
            return self._fail(results, stage, e)
        return self._finish(results)

    def run_ablate(self, config: RunConfig, grid: AblationGrid) -> Dict[str, Any]:
        """Train every grid cell per seed and write the comparison tables."""
        results = self._new_results()
        stage = "config"
        try:
            self.write_config_echo(config, results)
            model_cfg = build_model_config(config)
            train_cfg = build_train_config(config)
            cells, baseline = grid.cells, grid.baseline
            if grid.lr_grid:
                base_lr = next(c.max_lr for c in cells if c.name == baseline)
                nearest = min(grid.lr_grid, key=lambda lr: abs(lr - base_lr))
                cells = expand_lr_grid(cells, grid.lr_grid)
                baseline = f"{baseline}@{nearest:g}"

            stage = "data"
            ByteCorpus.from_path(train_cfg.corpus_path, train_cfg.holdout_fraction)

            stage = "ablate"
            outcome = run_ablation(
                cells,
                model_cfg,
                train_cfg,
                baseline,
                jobs=config.jobs,
                metrics_dir=self.run_dir / "metrics",
            )
            self._write_table(outcome.table, "ablation.csv", results)
            self._write_table(outcome.tuned, "ablation_tuned.csv", results)
            results["errors"].extend(outcome.errors)
        except (MoAError, OSError) as e:
            return self._fail(results, stage, e)
        return self._finish(results)

    def run_witness(
        self,
        config: RunConfig,
        suite: str = "all",
        budget: str = "quick",
        tamper: Optional[Dict[ActivationTag, ActivationKind]] = None,
    ) -> Dict[str, Any]:
        """
        Run the witness suite and write its CSV.

        Hard-assertion failures give exit code 4 after the CSV is written; a
        hard fit cell that raised NumericError gives exit code 3 instead.
        """
        results = self._new_results()
        stage = "config"
        try:
            self.write_config_echo(config, results)
            grid = config.to_grid_spec()
            fit_budget: FitBudget = (
                config.to_fit_budget() if budget == "full" else FitBudget.quick(config.seed)
            )

            stage = "witness"
            runner = WitnessSuite(suite, fit_budget, grid, config.jobs, tamper, config.seed)
            report = runner.run()
            self.reports_dir.mkdir(parents=True, exist_ok=True)
            path = report.write_csv(self.reports_dir / "witness_report.csv")
            results["files_created"].append(str(path))
            results["rows"] = len(report.rows)
            numeric = [e for e in report.fit_errors if isinstance(e, NumericError)]
            if numeric:
                raise NumericError("witness fit diverged", where="; ".join(str(e) for e in numeric))
            if report.violations:
                raise TheoremAssertionError("witness assertions failed", report.violations)
        except (MoAError, OSError) as e:
            return self._fail(results, stage, e)
        return self._finish(results)

    def run_bench(self, config: RunConfig, flavor: str = "type2") -> Dict[str, Any]:
        """Time every variant of one flavour against its baseline, sequentially."""
        results = self._new_results()
        stage = "config"
        try:
            self.write_config_echo(config, results)
            model_cfg = build_model_config(config)
            if flavor not in [f.value for f in Flavor]:
                raise ConfigError(f"unknown flavor '{flavor}'", key="flavor")
            flavor_enum = Flavor(flavor)

            stage = "bench"
            reports = bench_variants(
                model_cfg,
                flavor_enum,
                steps=int(config.get("bench.steps")),
                warmup=int(config.get("bench.warmup")),
                batch_size=int(config.get("bench.batch_size")),
                seed=config.seed,
            )
            self.reports_dir.mkdir(parents=True, exist_ok=True)
            for path in write_bench_reports(reports, self.reports_dir):
                results["files_created"].append(str(path))
        except (MoAError, OSError) as e:
            return self._fail(results, stage, e)
        return self._finish(results)

    def run_gradcheck(
        self,
        config: RunConfig,
        d_model: int = 8,
        points: int = 20,
        variants: Optional[Sequence[FFNVariant]] = None,
    ) -> Dict[str, Any]:
        """Finite-difference check of every FFN variant; any error above 1e-5 gives exit code 3."""
        results = self._new_results()
        stage = "config"
        try:
            self.write_config_echo(config, results)
            template = config.to_ffn_config()

            stage = "grad-check"
            rows: List[Dict[str, Any]] = []
            failures: List[str] = []
            for variant in variants or list(FFNVariant):
                ffn = FFNConfig(
                    d_model=d_model,
                    variant=variant,
                    gate=template.gate,
                    seed=config.seed,
                )
                check = gradient_check(ffn, points=points)
                worst = max(check.errors, key=check.errors.get)
                passed = check.max_error <= GRADCHECK_TOLERANCE
                rows.append(
                    {
                        "variant": variant.value,
                        "flavor": variant.flavor.value,
                        "gate": ffn.gate.value if variant.is_moa else "",
                        "max_rel_error": check.max_error,
                        "worst_param": worst,
                        "passed": passed,
                    }
                )
                self.logger.info(f"{variant.value}: max relative error {check.max_error:.3e}")
                if not passed:
                    failures.append(f"{variant.value} ({worst}: {check.max_error:.3e})")
            self._write_table(pd.DataFrame(rows), "gradcheck.csv", results)
            if failures:
                raise NumericError("gradient check above tolerance", where=", ".join(failures))
        except (MoAError, OSError) as e:
            return self._fail(results, stage, e)
        return self._finish(results)
