"""
The witness suite: exact constructions, inclusion embeddings, jump
profiles and lower-bound fits, collected into one CSV report.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd

from ..activations import GELU, RELU, TANH, ActivationKind, ActivationTag, kind_from_name
from ..base import ConfigError
from ..parallel import run_jobs
from .fitting import ClassFitter, FitBudget
from .jumps import (
    adaptive_ridge_bound,
    jump_profile,
    quadratic_fit_residual,
    step_function_floor,
)
from .sobolev import GridSpec, sobolev_distance
from .targets import ProfileTag, ProfileTarget, WitnessTag, WitnessTarget
from .theory import (
    TheoryFamily,
    TheoryNetwork,
    exact_construct,
    fixed_as_la,
    fixed_pair_as_qd_la,
    la_as_moa,
    param_shapes,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "suite",
    "target",
    "family",
    "width",
    "lam",
    "value_gap",
    "gradient_gap",
    "total",
    "bound",
    "bound_kind",
    "floor",
    "passed",
    "note",
]

EXACT_TOLERANCE = 1e-12
JUMP_TOLERANCE = 1e-6
CONSTANT_JUMP_TOLERANCE = 1e-9
FLOOR_SLACK = 0.9
FIT_EXACT_TOLERANCE = 1e-6
INCLUSION_POINTS = 100
JUMP_SAMPLES = 101
JUMP_EPSILON = 1e-3


class Suite(Enum):
    ALL = "all"
    THEOREM1 = "theorem1"
    THEOREM2 = "theorem2"


class Check(Enum):
    """How a row's total is judged."""

    AT_MOST = "at_most"
    AT_LEAST = "at_least"
    REPORT = "report"


@dataclass
class WitnessRow:
    suite: str
    target: str
    family: str
    width: Optional[int]
    lam: Optional[float]
    value_gap: float
    gradient_gap: float
    bound: Optional[float]
    bound_kind: str
    check: Check = Check.REPORT
    floor: Optional[float] = None
    note: str = ""

    @property
    def total(self) -> float:
        return self.value_gap + self.gradient_gap

    @property
    def passed(self) -> Optional[bool]:
        if self.check is not Check.REPORT and math.isnan(self.total):
            return False
        if self.check is Check.AT_MOST:
            return bool(self.total <= self.bound)
        if self.check is Check.AT_LEAST:
            return bool(self.total >= self.floor)
        return None

    def as_dict(self) -> Dict[str, object]:
        return {
            "suite": self.suite,
            "target": self.target,
            "family": self.family,
            "width": self.width,
            "lam": self.lam,
            "value_gap": self.value_gap,
            "gradient_gap": self.gradient_gap,
            "total": self.total,
            "bound": self.bound,
            "bound_kind": self.bound_kind,
            "floor": self.floor,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass
class WitnessReport:
    rows: List[WitnessRow] = field(default_factory=list)
    # errors raised by fit cells that carry a hard check
    fit_errors: List[BaseException] = field(default_factory=list)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([row.as_dict() for row in self.rows], columns=REPORT_COLUMNS)

    @property
    def violations(self) -> List[str]:
        out = []
        for row in self.rows:
            if row.passed is False:
                limit = row.bound if row.check is Check.AT_MOST else row.floor
                relation = "<=" if row.check is Check.AT_MOST else ">="
                out.append(
                    f"{row.suite} {row.target} vs {row.family} (width {row.width}): "
                    f"total {row.total:.6g} violates {row.bound_kind} {relation} {limit:.6g}"
                    + (f" [{row.note}]" if row.note else "")
                )
        return out

    @property
    def passed(self) -> bool:
        return not self.violations

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table().to_csv(path, index=False)
        return path


def parse_tamper(spec: Optional[str]) -> Dict[ActivationTag, ActivationKind]:
    """``"relu2=relu"`` makes every ReLU2 branch evaluate as ReLU."""
    if not spec:
        return {}
    out: Dict[ActivationTag, ActivationKind] = {}
    for item in spec.split(","):
        left, sep, right = item.partition("=")
        if not sep:
            raise ConfigError(f"tamper entry '{item}' must look like kind=kind", key="tamper")
        out[kind_from_name(left.strip()).tag] = kind_from_name(right.strip())
    return out


# --------------------------------------------------------------------------
# fit rows run in worker processes
# --------------------------------------------------------------------------


@dataclass
class FitJob:
    suite: str
    target: Union[WitnessTarget, ProfileTarget]
    family: TheoryFamily
    width: int
    kinds: Tuple[ActivationKind, ...]
    budget: FitBudget
    grid: GridSpec
    check: Check
    bound: Optional[float]
    bound_kind: str
    floor: Optional[float] = None
    note: str = ""


def run_fit_job(job: FitJob) -> WitnessRow:
    result = ClassFitter(job.budget, job.grid).fit(job.target, job.family, job.width, job.kinds)
    residual = result.residual
    return WitnessRow(
        suite=job.suite,
        target=job.target.label,
        family=result.network.label,
        width=job.width,
        lam=job.target.lam if _has_lam(job.target) else None,
        value_gap=residual.sup_value_gap,
        gradient_gap=residual.sup_gradient_gap,
        bound=job.bound,
        bound_kind=job.bound_kind,
        check=job.check,
        floor=job.floor,
        note=job.note,
    )


def _has_lam(target: object) -> bool:
    if isinstance(target, WitnessTarget):
        return target.tag in (WitnessTag.TMOA_I, WitnessTag.TMOA_II)
    return isinstance(target, ProfileTarget) and target.tag is ProfileTag.B


def _failed_fit_row(job: FitJob, error: BaseException) -> WitnessRow:
    row = WitnessRow(
        suite=job.suite,
        target=job.target.label,
        family=job.family.value,
        width=job.width,
        lam=job.target.lam if _has_lam(job.target) else None,
        value_gap=math.nan,
        gradient_gap=math.nan,
        bound=job.bound,
        bound_kind=job.bound_kind,
        check=job.check,
        floor=job.floor,
        note=f"fit failed: {error}",
    )
    return row


class WitnessSuite:
    """Builds and runs the rows of the witness report."""

    def __init__(
        self,
        suite: Union[str, Suite] = Suite.ALL,
        budget: Union[str, FitBudget] = "quick",
        grid: Optional[GridSpec] = None,
        jobs: int = 1,
        tamper: Optional[Dict[ActivationTag, ActivationKind]] = None,
        seed: int = 0,
    ):
        self.suite = Suite(suite) if isinstance(suite, str) else suite
        if isinstance(budget, str):
            if budget not in ("quick", "full"):
                raise ConfigError(f"budget must be 'quick' or 'full', got '{budget}'", key="budget")
            self.full = budget == "full"
            budget = FitBudget(seed=seed) if self.full else FitBudget.quick(seed)
        else:
            self.full = budget.restarts >= FitBudget().restarts and budget.steps >= FitBudget().steps
        self.budget = budget
        self.grid = grid or GridSpec()
        self.jobs = jobs
        self.tamper = dict(tamper or {})
        self.seed = seed
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def _wants(self, theorem: str) -> bool:
        return self.suite is Suite.ALL or self.suite.value == theorem

    def run(self) -> WitnessReport:
        report = WitnessReport()
        fit_jobs: List[FitJob] = []
        if self._wants("theorem1"):
            report.rows.extend(self.exactness("theorem1"))
            report.rows.extend(self.inclusion_type_one())
            report.rows.extend(self.step_lemma())
            report.rows.extend(self.jumps_type_one())
            fit_jobs.extend(self.floor_jobs())
        if self._wants("theorem2"):
            report.rows.extend(self.exactness("theorem2"))
            report.rows.extend(self.inclusion_type_two())
            report.rows.extend(self.jumps_type_two())
            fit_jobs.extend(self.type_two_jobs())

        self.logger.info(f"Running {len(fit_jobs)} fit cells on {self.jobs} worker(s)")
        outcomes = run_jobs(run_fit_job, fit_jobs, workers=self.jobs)
        for job, outcome in zip(fit_jobs, outcomes):
            if isinstance(outcome, BaseException):
                self.logger.error(f"Fit {job.family.value} vs {job.target.label} failed: {outcome}")
                report.rows.append(_failed_fit_row(job, outcome))
                if job.check is not Check.REPORT:
                    report.fit_errors.append(outcome)
            else:
                report.rows.append(outcome)
        for message in report.violations:
            self.logger.error(f"Witness violation: {message}")
        return report

    # -- exactness ---------------------------------------------------------

    def exactness(self, suite: str) -> List[WitnessRow]:
        lams = (1.0, 2.0, 3.0)
        if suite == "theorem1":
            targets = [WitnessTarget(WitnessTag.TLA_I)]
            targets += [WitnessTarget(WitnessTag.TMOA_I, lam=lam) for lam in lams]
            targets.append(WitnessTarget(WitnessTag.ADAPTIVE_RIDGE, u=(1.0, 0.0), w=(0.0, 1.0)))
        else:
            targets = [WitnessTarget(WitnessTag.TLA_II)]
            targets += [WitnessTarget(WitnessTag.TMOA_II, lam=lam) for lam in lams]
        rows = []
        for target in targets:
            network = exact_construct(target, coded_as=self.tamper)
            est = sobolev_distance(network, target, self.grid.with_dim(target.dim))
            rows.append(
                WitnessRow(
                    suite=suite,
                    target=target.label,
                    family=network.label,
                    width=1,
                    lam=target.lam if _has_lam(target) else None,
                    value_gap=est.sup_value_gap,
                    gradient_gap=est.sup_gradient_gap,
                    bound=EXACT_TOLERANCE,
                    bound_kind="exact_construction",
                    check=Check.AT_MOST,
                )
            )
        return rows

    # -- inclusions --------------------------------------------------------

    def _random_network(
        self, family: TheoryFamily, width: int, kinds: Tuple[ActivationKind, ...], salt: int
    ) -> TheoryNetwork:
        rng = np.random.default_rng([self.seed, 11, salt])
        params = {
            name: rng.normal(0.0, 1.0, size=shape)
            for name, shape in param_shapes(family, 2, width).items()
        }
        return TheoryNetwork(family, 2, params, kinds)

    def _agreement_row(
        self, suite: str, source: TheoryNetwork, embedded: TheoryNetwork, note: str
    ) -> WitnessRow:
        rng = np.random.default_rng([self.seed, 13])
        points = rng.uniform(-1.0, 1.0, size=(INCLUSION_POINTS, 2))
        v1, g1 = source.evaluate(points)
        v2, g2 = embedded.evaluate(points)
        return WitnessRow(
            suite=suite,
            target=source.label,
            family=embedded.label,
            width=source.width,
            lam=None,
            value_gap=float(np.max(np.abs(v1 - v2))),
            gradient_gap=float(np.max(np.linalg.norm(g1 - g2, axis=1))),
            bound=EXACT_TOLERANCE,
            bound_kind="inclusion",
            check=Check.AT_MOST,
            note=note,
        )

    def inclusion_type_one(self) -> List[WitnessRow]:
        rows = []
        for salt, sigma in enumerate((RELU, GELU, TANH)):
            fixed = self._random_network(TheoryFamily.FIXED_I, 3, (sigma,), salt)
            rows.append(self._agreement_row("theorem1", fixed, fixed_as_la(fixed), "one-hot coefficients"))
        la = self._random_network(TheoryFamily.LA_I, 3, (), 10)
        rho = 0.5 / float(np.max(np.abs(la.params["alpha"])))
        rows.append(self._agreement_row("theorem1", la, la_as_moa(la, rho), f"bias-only gates, rho={rho:.6g}"))
        return rows

    def inclusion_type_two(self) -> List[WitnessRow]:
        rows = []
        for salt, pair in enumerate(((RELU, TANH), (TANH, RELU))):
            fixed = self._random_network(TheoryFamily.FIXED_II, 3, pair, 20 + salt)
            rows.append(self._agreement_row("theorem2", fixed, fixed_pair_as_qd_la(fixed), "one-hot pair"))
        la = self._random_network(TheoryFamily.QDLA_II, 3, (), 30)
        rho = 0.5 / float(np.max(np.abs(la.params["alpha"])))
        rows.append(self._agreement_row("theorem2", la, la_as_moa(la, rho), f"bias-only gates, rho={rho:.6g}"))
        return rows

    # -- jumps -------------------------------------------------------------

    def step_lemma(self) -> List[WitnessRow]:
        rows = []
        for m in (1, 2, 4):
            bound = 1.0 / (m + 1)
            error = step_function_floor(m)
            rows.append(
                WitnessRow(
                    suite="theorem1",
                    target="2t on [0,1]",
                    family=f"step({m} breaks)",
                    width=m,
                    lam=None,
                    value_gap=error,
                    gradient_gap=0.0,
                    bound=bound,
                    bound_kind="step_floor",
                    check=Check.AT_LEAST,
                    floor=bound * (1.0 - 1e-9),
                    note="equal partition attains the floor",
                )
            )
        return rows

    def _jump_row(
        self,
        suite: str,
        target: str,
        family: str,
        lam: Optional[float],
        value: float,
        bound: Optional[float],
        kind: str,
        check: Check,
        floor: Optional[float] = None,
        note: str = "",
    ) -> WitnessRow:
        return WitnessRow(suite, target, family, None, lam, value, 0.0, bound, kind, check, floor, note)

    def jumps_type_one(self) -> List[WitnessRow]:
        x1 = np.linspace(-1.0, 1.0, JUMP_SAMPLES)
        rows = []
        for lam in (1.0, 2.0):
            target = WitnessTarget(WitnessTag.TMOA_I, lam=lam)
            profile = jump_profile(target, x1, JUMP_EPSILON)
            rows.append(
                self._jump_row(
                    "theorem1", target.label, "jump_profile", lam,
                    profile.max_error(np.tanh(lam * x1)), JUMP_TOLERANCE,
                    "jump_vs_tanh", Check.AT_MOST,
                )
            )
            rows.append(
                self._jump_row(
                    "theorem1", target.label, "jump_profile", lam, profile.oscillation,
                    2.0 * math.tanh(lam), "jump_oscillation", Check.AT_LEAST,
                    floor=2.0 * math.tanh(lam) * (1.0 - 1e-6),
                )
            )

        la = self.ridge_on_axis_network()
        profile = jump_profile(la, x1, JUMP_EPSILON)
        rows.append(
            self._jump_row(
                "theorem1", "LA network, one ridge on x2=0", la.label, None,
                profile.oscillation, CONSTANT_JUMP_TOLERANCE, "jump_oscillation",
                Check.AT_MOST, note="constant jump amplitude",
            )
        )

        ridge = WitnessTarget(WitnessTag.ADAPTIVE_RIDGE, u=(1.0, 0.0), w=(0.0, 1.0))
        bound = adaptive_ridge_bound(ridge)
        rows.append(
            self._jump_row(
                "theorem1", ridge.label, "LA_I", None, bound.osc, bound.quarter_osc,
                "quarter_oscillation", Check.REPORT,
                note="value_gap holds the gate oscillation; bound is reported only",
            )
        )
        return rows

    def ridge_on_axis_network(self, width: int = 3) -> TheoryNetwork:
        """Random LA network whose only x2-dependent ridge is {x2 = 0}."""
        rng = np.random.default_rng([self.seed, 17])
        W = rng.normal(0.0, 1.0, size=(width, 3))
        W[0] = (0.0, abs(W[0, 1]) + 0.5, 0.0)
        W[1:, 1] = 0.0
        # kinks of the x1-only rows sit outside the square
        W[1:, 2] = np.sign(W[1:, 2]) * (np.abs(W[1:, 0]) + 1.5)
        params = {
            "a": rng.normal(0.0, 1.0, size=width),
            "W": W,
            "alpha": rng.normal(0.0, 1.0, size=param_shapes(TheoryFamily.LA_I, 2, width)["alpha"]),
        }
        return TheoryNetwork(TheoryFamily.LA_I, 2, params)

    def jumps_type_two(self) -> List[WitnessRow]:
        x1 = np.linspace(-1.0, 1.0, JUMP_SAMPLES)
        rows = []
        for lam in (1.0, 2.0):
            target = WitnessTarget(WitnessTag.TMOA_II, lam=lam)
            profile = jump_profile(target, x1, JUMP_EPSILON)
            reference = np.maximum(x1, 0.0) * np.tanh(lam * x1)
            rows.append(
                self._jump_row(
                    "theorem2", target.label, "jump_profile", lam,
                    profile.max_error(reference), JUMP_TOLERANCE, "jump_vs_profile",
                    Check.AT_MOST,
                )
            )
            rows.append(
                self._jump_row(
                    "theorem2", target.label, "quadratic_fit", lam,
                    quadratic_fit_residual(profile), None, "quadratic_residual",
                    Check.REPORT, note="non-polynomial jump on (0,1]",
                )
            )
        positive = np.linspace(0.0, 1.0, JUMP_SAMPLES)[1:]
        target = WitnessTarget(WitnessTag.TLA_II)
        profile = jump_profile(target, positive, JUMP_EPSILON)
        rows.append(
            self._jump_row(
                "theorem2", target.label, "quadratic_fit", None,
                quadratic_fit_residual(profile), None, "quadratic_residual",
                Check.REPORT, note="non-polynomial jump on (0,1]",
            )
        )
        return rows

    # -- fits --------------------------------------------------------------

    def floor_jobs(self) -> List[FitJob]:
        jobs = []
        tla = WitnessTarget(WitnessTag.TLA_I)
        for sigma in (RELU, GELU):
            for m in (1, 2, 4):
                bound = 1.0 / (m + 1)
                jobs.append(
                    FitJob(
                        "theorem1", tla, TheoryFamily.FIXED_I, m, (sigma,), self.budget, self.grid,
                        Check.AT_LEAST, bound, "fixed_vs_la_floor", floor=FLOOR_SLACK * bound,
                    )
                )
        for lam in (1.0, 2.0):
            target = WitnessTarget(WitnessTag.TMOA_I, lam=lam)
            bound = 0.5 * math.tanh(lam)
            for m in (1, 2, 4):
                jobs.append(
                    FitJob(
                        "theorem1", target, TheoryFamily.LA_I, m, (), self.budget, self.grid,
                        Check.AT_LEAST, bound, "la_vs_moa_floor", floor=FLOOR_SLACK * bound,
                    )
                )
        jobs.append(
            FitJob(
                "theorem1", tla, TheoryFamily.LA_I, 1, (), self.budget, self.grid,
                Check.AT_MOST if self.full else Check.REPORT,
                FIT_EXACT_TOLERANCE, "representable_fit",
                note="" if self.full else "reduced budget; reported only",
            )
        )
        return jobs

    def type_two_jobs(self) -> List[FitJob]:
        note = "no quantitative floor; reported only"
        jobs = []
        tla = WitnessTarget(WitnessTag.TLA_II)
        for m in (1, 2):
            jobs.append(
                FitJob("theorem2", tla, TheoryFamily.FIXED_II, m, (RELU, RELU), self.budget,
                       self.grid, Check.REPORT, None, "none", note=note)
            )
        jobs.append(
            FitJob("theorem2", WitnessTarget(WitnessTag.TMOA_II, lam=1.0), TheoryFamily.QDLA_II, 1,
                   (), self.budget, self.grid, Check.REPORT, None, "none", note=note)
        )
        for m in (1, 2):
            jobs.append(
                FitJob("theorem2", ProfileTarget(ProfileTag.A), TheoryFamily.RIDGE_1D, m, (RELU,),
                       self.budget, self.grid, Check.REPORT, None, "none", note=note)
            )
            jobs.append(
                FitJob("theorem2", ProfileTarget(ProfileTag.B, lam=1.0), TheoryFamily.DICT_RIDGE_1D, m,
                       (), self.budget, self.grid, Check.REPORT, None, "none", note=note)
            )
        return jobs


def run_witness_suite(
    suite: Union[str, Suite] = Suite.ALL,
    budget: Union[str, FitBudget] = "quick",
    grid: Optional[GridSpec] = None,
    jobs: int = 1,
    tamper: Optional[Dict[ActivationTag, ActivationKind]] = None,
    seed: int = 0,
) -> WitnessReport:
    """Run the selected witness rows and return the report (violations are not raised)."""
    return WitnessSuite(suite, budget, grid, jobs, tamper, seed).run()
