"""
Heavy-traffic scaling experiments.

For each scale r and replication, the simulator runs from r-indexed
initial jobs drawn from Theta up to r times the last checkpoint; the
scaled snapshots (1/r) mu^r(r t) are then compared against the fluid
path, which is solved once.

Replications run concurrently: a trio nursery starts one task per
(r, replication), and each task runs its simulation in a worker
thread bounded by a trio.CapacityLimiter. Results are keyed, so their
assembly does not depend on completion order.
"""

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import trio

from remshare.errors import HarnessError, RemshareError, SimulationError
from remshare.fluid import FluidConfig, FluidPath, FluidSolver
from remshare.measure import AtomicMeasure, bl_distance
from remshare.model import HEAVY_TRAFFIC_TOLERANCE, SystemParameters
from remshare.persist import format_number, table_text, write_atomic, write_json
from remshare.simulator import (
    Job,
    SimConfig,
    Simulator,
    scaled_population,
    scaled_snapshot,
    snapshot_measure,
)

INITIAL_MODES = ("iid", "quantile")
METRICS = ("bl_distance", "workload_abs_err", "z_abs_err")
REPORT_HEADER = ("r", "replication", "checkpoint") + METRICS

_BALANCE_TOLERANCE = 1e-6


def seed_for(master: int, r: int, replication: int) -> int:
    """A 64-bit seed for one replication, mixed from the triple.

        >>> seed_for(7, 20, 3) == seed_for(7, 20, 3)
        True
        >>> seed_for(7, 20, 3) != seed_for(8, 20, 3)
        True
    """

    state = np.random.SeedSequence([int(master), int(r), int(replication)]).generate_state(
        1, np.uint64
    )
    return int(state[0])


def initial_jobs_from_theta(
    theta: AtomicMeasure, r: int, seed: int, mode: str = "iid"
) -> List[Job]:
    """round(r <1, Theta>) initial jobs whose requirements follow Theta / <1, Theta>.

        >>> [job.requirement for job in initial_jobs_from_theta(AtomicMeasure([(1, 1)]), 3, 0)]
        [1.0, 1.0, 1.0]
        >>> theta = AtomicMeasure([(1, 0.5), (3, 0.5)])
        >>> [job.requirement for job in initial_jobs_from_theta(theta, 4, 0, mode="quantile")]
        [1.0, 1.0, 3.0, 3.0]

    Arguments:
        theta {AtomicMeasure} -- The limit initial measure Theta.
        r {int} -- The scale.
        seed {int} -- Seeds the i.i.d. draws.

    Keyword Arguments:
        mode {str} --   'iid' draws requirements independently, 'quantile' places them
                        at the midpoint quantiles of Theta. (default: {'iid'})

    Raises:
        HarnessError: Theta is empty, r < 1 or the mode is unknown.

    Returns:
        List[Job] -- The jobs, ids 0, 1, ...
    """

    mass = theta.total_mass()

    if not mass > 0:
        raise HarnessError("Theta must carry positive mass")

    if r < 1:
        raise HarnessError("Scale r must be at least 1, got {}".format(r))

    count = int(round(r * mass))
    probabilities = theta.masses / mass

    if mode == "iid":
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
        requirements = rng.choice(theta.locations, size=count, p=probabilities)

    elif mode == "quantile":
        cumulative = np.cumsum(probabilities)
        levels = (np.arange(count) + 0.5) / count
        indices = np.minimum(np.searchsorted(cumulative, levels), theta.locations.size - 1)
        requirements = theta.locations[indices]

    else:
        raise HarnessError(
            "Unknown initial mode {!r}; expected one of {}".format(mode, INITIAL_MODES)
        )

    return [Job(i, 0.0, float(nu), initial=True) for i, nu in enumerate(requirements)]


@dataclass
class ScalingExperiment:
    """One heavy-traffic scaling study."""

    params: SystemParameters
    theta: AtomicMeasure
    r_values: Sequence[int]
    checkpoints: Sequence[float]
    replications: int = 1
    seed: int = 0
    fluid: FluidConfig = field(default_factory=FluidConfig)
    sim: SimConfig = field(default_factory=lambda: SimConfig(horizon=1.0))
    mode: str = "iid"
    workers: int = 1
    perturbation: float = 0.0
    heavy_traffic: bool = True

    def __post_init__(self):
        self.r_values = [int(r) for r in self.r_values]
        self.checkpoints = sorted(set(float(t) for t in self.checkpoints))

        if not self.r_values or any(r < 1 for r in self.r_values):
            raise HarnessError("Scales r must be positive integers, got {}".format(self.r_values))

        if any(b <= a for a, b in zip(self.r_values, self.r_values[1:])):
            raise HarnessError("Scales r must increase strictly, got {}".format(self.r_values))

        if not self.checkpoints or self.checkpoints[0] < 0:
            raise HarnessError("Checkpoints must be nonnegative and nonempty")

        if self.replications < 1:
            raise HarnessError("Need at least one replication per scale")

        if self.workers < 1:
            raise HarnessError("Need at least one worker")

        if self.mode not in INITIAL_MODES:
            raise HarnessError(
                "Unknown initial mode {!r}; expected one of {}".format(self.mode, INITIAL_MODES)
            )

        if not self.theta.total_mass() > 0:
            raise HarnessError("Theta must carry positive mass")

        if self.heavy_traffic and abs(self.params.rho - 1) > HEAVY_TRAFFIC_TOLERANCE:
            raise HarnessError(
                "Scaling experiments run at rho = 1 unless overridden; got rho = {!r}".format(
                    self.params.rho
                )
            )

        if self.perturbation and self.perturbation >= self.r_values[0]:
            raise HarnessError(
                "Perturbation c={} leaves no arrivals at r={}".format(
                    self.perturbation, self.r_values[0]
                )
            )

    @property
    def horizon(self) -> float:
        return self.checkpoints[-1]


@dataclass
class Cell:
    """The comparison at one (r, replication, checkpoint)."""

    bl_distance: float
    workload_abs_err: float
    z_abs_err: float

    def values(self) -> Tuple[float, float, float]:
        return (self.bl_distance, self.workload_abs_err, self.z_abs_err)


class ConvergenceReport:
    """Per-cell comparisons, failures and their summaries."""

    def __init__(self, experiment: ScalingExperiment):
        self.experiment = experiment
        self.cells = {}  # type: Dict[Tuple[int, int, float], Cell]
        self.failures = []  # type: List[dict]
        self.runtime = None  # type: Optional[float]

    def rows(self) -> List[list]:
        return [list(key) + list(self.cells[key].values()) for key in sorted(self.cells)]

    def completed(self, r: int) -> int:
        """How many replications at scale r finished."""

        return len(set(rep for (scale, rep, _) in self.cells if scale == r))

    def medians(self, metric: str = "bl_distance") -> Dict[float, Dict[int, float]]:
        """Per checkpoint, the median of a metric over completed replications of each r."""

        if metric not in METRICS:
            raise HarnessError("Unknown metric {!r}; expected one of {}".format(metric, METRICS))

        result = {}

        for checkpoint in self.experiment.checkpoints:
            per_r = {}

            for r in self.experiment.r_values:
                values = [
                    getattr(cell, metric)
                    for (scale, _, t), cell in self.cells.items()
                    if scale == r and t == checkpoint
                ]

                if values:
                    per_r[r] = float(np.median(values))

            result[checkpoint] = per_r

        return result

    def verdict(self) -> bool:
        """Whether the median distance is nonincreasing in r at every checkpoint."""

        for per_r in self.medians("bl_distance").values():
            if len(per_r) < len(self.experiment.r_values):
                return False

            series = [per_r[r] for r in self.experiment.r_values]

            if any(b > a for a, b in zip(series, series[1:])):
                return False

        return True

    def summary(self) -> dict:
        exp = self.experiment

        medians = {
            metric: {
                format_number(t): {str(r): value for r, value in per_r.items()}
                for t, per_r in self.medians(metric).items()
            }
            for metric in METRICS
        }

        return {
            "r_values": list(exp.r_values),
            "checkpoints": list(exp.checkpoints),
            "replications": exp.replications,
            "seed": exp.seed,
            "seeds": {
                str(r): [seed_for(exp.seed, r, rep) for rep in range(exp.replications)]
                for r in exp.r_values
            },
            "completed": {str(r): self.completed(r) for r in exp.r_values},
            "medians": medians,
            "verdict": self.verdict(),
            "failures": self.failures,
            "runtime": self.runtime,
        }

    def table(self, fmt: str = "csv") -> str:
        return table_text(REPORT_HEADER, self.rows(), fmt)

    def write(self, output_dir: str, fmt: str = "csv") -> List[str]:
        """Writes the report table and summary.json; returns their paths."""

        table_path = "{}/report.{}".format(output_dir, fmt)
        summary_path = "{}/summary.json".format(output_dir)

        write_atomic(table_path, self.table(fmt))
        write_json(summary_path, self.summary())
        return [table_path, summary_path]


class ScalingRunner:
    """Runs a ScalingExperiment into a ConvergenceReport."""

    def __init__(self, experiment: ScalingExperiment, logger: Optional[logging.Logger] = None):
        self.experiment = experiment
        self.logger = logger or logging.getLogger(__name__)
        self.fluid_path = None  # type: Optional[FluidPath]

    def solve_fluid(self) -> FluidPath:
        """The fluid path from Theta up to the last checkpoint.

        Raises:
            HarnessError: A checkpoint is not on the fluid grid.
        """

        exp = self.experiment
        cfg = dataclasses.replace(exp.fluid, horizon=exp.horizon)
        path = FluidSolver(exp.params, cfg, self.logger).solve_direct(exp.theta)

        for checkpoint in exp.checkpoints:
            steps = checkpoint / cfg.dt

            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise HarnessError(
                    "Checkpoint {} is not a multiple of the fluid step {}".format(checkpoint, cfg.dt)
                )

        self.fluid_path = path
        return path

    def _checkpoint_measures(self, r: int, rep: int) -> Dict[float, Tuple[AtomicMeasure, float]]:
        """The scaled measure and population at each checkpoint of one replication."""

        exp = self.experiment
        seed = seed_for(exp.seed, r, rep)
        params = exp.params.for_scale(r, exp.perturbation)
        jobs = initial_jobs_from_theta(exp.theta, r, seed, exp.mode)
        horizon = r * exp.horizon

        cfg = dataclasses.replace(
            exp.sim,
            horizon=horizon if horizon > 0 else 1.0,
            seed=seed,
            snapshot_times=tuple(r * t for t in exp.checkpoints),
        )
        simulator = Simulator(params, cfg, self.logger)

        if horizon == 0:
            state = simulator.initial_state(jobs)
            measure = snapshot_measure(state, cfg.depart_threshold)
            scaled = measure if r == 1 else measure.scale_mass(1.0 / r)
            return {0.0: (scaled, state.population / r)}

        trace = simulator.run(jobs)
        result = {}

        for t in exp.checkpoints:
            snapshot = trace.snapshot_at(r * t)
            expected = (
                snapshot.initial_workload
                + snapshot.arrived_work
                - snapshot.busy_time
                - snapshot.discarded_work
            )

            if abs(snapshot.workload - expected) > _BALANCE_TOLERANCE * max(1.0, expected):
                raise SimulationError(
                    "Workload {} does not balance {} at t={}".format(
                        snapshot.workload, expected, snapshot.time
                    )
                )

            result[t] = (scaled_snapshot(trace, r, t), scaled_population(trace, r, t))

        return result

    def run_replication(self, r: int, rep: int) -> Dict[Tuple[int, int, float], Cell]:
        """Simulates one replication and compares it with the fluid path."""

        path = self.fluid_path or self.solve_fluid()
        cells = {}

        for t, (scaled, population) in sorted(self._checkpoint_measures(r, rep).items()):
            fluid = path.at(t)
            cells[(r, rep, t)] = Cell(
                bl_distance(scaled, fluid),
                abs(scaled.workload() - fluid.workload()),
                abs(population - fluid.total_mass()),
            )

        self.logger.info("replication r=%d #%d done", r, rep)
        return cells

    async def _replicate(self, r: int, rep: int, limiter: trio.CapacityLimiter, report):
        try:
            cells = await trio.to_thread.run_sync(self.run_replication, r, rep, limiter=limiter)

        except RemshareError as err:
            self.logger.warning("replication r=%d #%d failed: %s", r, rep, err)
            report.failures.append(
                {
                    "r": r,
                    "replication": rep,
                    "error": type(err).__name__,
                    "message": str(err),
                }
            )

        else:
            report.cells.update(cells)

    async def _run_all(self, report: ConvergenceReport):
        limiter = trio.CapacityLimiter(self.experiment.workers)

        async with trio.open_nursery() as nursery:
            for r in self.experiment.r_values:
                for rep in range(self.experiment.replications):
                    nursery.start_soon(self._replicate, r, rep, limiter, report)

    def run(self) -> ConvergenceReport:
        """Runs every replication.

        Raises:
            FloorViolationError: The fluid path cannot reach the last checkpoint.
            HarnessError: Checkpoints are not aligned with the fluid grid.

        Returns:
            ConvergenceReport -- Cells of completed replications and the failures.
        """

        exp = self.experiment
        began = time.perf_counter()
        report = ConvergenceReport(exp)

        self.logger.info(
            "scaling test: r=%s, %d replications, checkpoints %s",
            exp.r_values, exp.replications, exp.checkpoints,
        )
        self.solve_fluid()
        trio.run(self._run_all, report)

        report.failures.sort(key=lambda failure: (failure["r"], failure["replication"]))
        report.runtime = time.perf_counter() - began

        self.logger.info("scaling test done in %.2fs, verdict %s", report.runtime, report.verdict())
        return report


def run_scaling(exp: ScalingExperiment, logger: Optional[logging.Logger] = None) -> ConvergenceReport:
    return ScalingRunner(exp, logger).run()
