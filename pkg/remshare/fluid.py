"""
The fluid limit, solved numerically.

A fluid path is transported along characteristics: every atom at x
moves with velocity -w(x) / <w, mu(t)>, and fresh mass alpha * dt,
distributed like nu by a quadrature, is injected at the end of each
grid step. FluidSolver integrates this directly; PicardSolver builds
the same path as the fixed point of the frozen-denominator map,
window by window.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from remshare.errors import FloorViolationError, FluidError, NonConvergenceError
from remshare.measure import AtomicMeasure, measure_rows, path_distance
from remshare.model import (
    TEST_PANEL,
    SystemParameters,
    TestFunction,
    bin_mean_atoms,
    quantile_atoms,
)
from remshare.persist import write_table

DEFAULT_FLOOR_FRACTION = 1e-3

PATH_HEADER = ("time", "location", "mass")
WORKLOAD_HEADER = ("time", "workload")


@dataclass
class FluidConfig:
    """Grid, quadrature and safety controls of the fluid solvers."""

    dt: float = 1e-3
    horizon: float = 1.0
    quadrature: int = 200
    prune: float = 1e-9
    floor: Optional[float] = None
    coarsen: float = 1e-2
    mean_correction: bool = True
    transport: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise FluidError("Fluid step dt must be positive, got {}".format(self.dt))

        if not self.horizon >= 0:
            raise FluidError("Fluid horizon must be nonnegative, got {}".format(self.horizon))

        if int(self.quadrature) != self.quadrature or self.quadrature < 1:
            raise FluidError("Quadrature size must be a positive integer, got {}".format(self.quadrature))

        if not self.prune >= 0:
            raise FluidError("Prune threshold must be nonnegative, got {}".format(self.prune))

        if self.floor is not None and not self.floor > 0:
            raise FluidError("The floor must be positive, got {}".format(self.floor))

        if not self.coarsen >= 0:
            raise FluidError("Coarsening width must be nonnegative, got {}".format(self.coarsen))

        self.quadrature = int(self.quadrature)

    def steps(self) -> int:
        """The number of grid steps covering the horizon.

            >>> FluidConfig(dt=0.25, horizon=1.0).steps()
            4

        Raises:
            FluidError: dt does not divide the horizon.
        """

        count = int(round(self.horizon / self.dt))

        if abs(count * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise FluidError(
                "Fluid step {} does not divide the horizon {}".format(self.dt, self.horizon)
            )

        return count

    def grid(self) -> np.ndarray:
        return self.dt * np.arange(self.steps() + 1)


@dataclass
class PicardConfig:
    """Window and stopping controls of the Picard construction."""

    window: Optional[float] = None
    zeta: float = 0.5
    max_iterations: int = 50
    tolerance: float = 1e-8

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise FluidError("Contraction target zeta must lie in (0, 1), got {}".format(self.zeta))

        if self.window is not None and not self.window > 0:
            raise FluidError("Picard window must be positive, got {}".format(self.window))

        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise FluidError(
                "max_iterations must be a nonnegative integer, got {}".format(self.max_iterations)
            )

        if not self.tolerance > 0:
            raise FluidError("Picard tolerance must be positive, got {}".format(self.tolerance))

        self.max_iterations = int(self.max_iterations)


class FluidPath:
    """
    A grid of times with one measure per time.

        >>> path = FluidPath([0.0, 0.5], [AtomicMeasure([(2, 1)]), AtomicMeasure([(1.5, 1)])])
        >>> path.workload_series().tolist()
        [2.0, 1.5]
        >>> path.at(0.5)
        AtomicMeasure([(1.5, 1.0)])
    """

    def __init__(self, times: Sequence[float], measures: Sequence[AtomicMeasure]):
        self.times = np.asarray(times, dtype=float)
        self.measures = list(measures)

        if self.times.ndim != 1 or self.times.size == 0:
            raise FluidError("A fluid path needs at least one grid time")

        if self.times.size != len(self.measures):
            raise FluidError(
                "Got {} grid times but {} measures".format(self.times.size, len(self.measures))
            )

        if np.any(np.diff(self.times) <= 0):
            raise FluidError("Fluid path times must increase strictly")

    @classmethod
    def constant(cls, measure: AtomicMeasure, times: Sequence[float]) -> "FluidPath":
        """The path eta(t) = measure at every grid time."""

        return cls(times, [measure] * len(times))

    def __len__(self):
        return len(self.measures)

    @property
    def start(self) -> AtomicMeasure:
        return self.measures[0]

    @property
    def terminal(self) -> AtomicMeasure:
        return self.measures[-1]

    def at(self, time: float) -> AtomicMeasure:
        """The measure at a grid time.

        Raises:
            FluidError: time is not on the grid.
        """

        index = int(np.argmin(np.abs(self.times - time)))

        if abs(self.times[index] - time) > 1e-9 * max(1.0, abs(time)):
            raise FluidError("Time {} is not on the fluid grid".format(time))

        return self.measures[index]

    def workload_series(self) -> np.ndarray:
        return workload_series(self)

    def rows(self) -> List[list]:
        """`time,location,mass` rows of every grid measure."""

        rows = []

        for time, measure in zip(self.times, self.measures):
            rows.extend(measure_rows(measure, time))

        return rows

    def workload_rows(self) -> List[list]:
        return [[float(t), w] for t, w in zip(self.times, self.workload_series().tolist())]

    def write(self, output_dir: str, fmt: str = "csv") -> List[str]:
        """Writes the path and workload tables; returns their paths."""

        return [
            write_table(output_dir + "/path", PATH_HEADER, self.rows(), fmt),
            write_table(output_dir + "/workload", WORKLOAD_HEADER, self.workload_rows(), fmt),
        ]

    def __repr__(self):
        return "FluidPath(t={}..{}, {} points)".format(self.times[0], self.times[-1], len(self))


def workload_series(path: FluidPath) -> np.ndarray:
    """<chi, mu(t_k)> at each grid time."""

    return np.array([measure.workload() for measure in path.measures])


def _interpolated(start: float, end: float) -> Callable:
    def _denominator(locations, masses, fraction):
        return start + fraction * (end - start)

    return _denominator


class FluidSolver:
    """
    Direct solver of the fluid dynamics on a uniform grid.

        >>> from remshare.model import ArrivalModel, Distribution, WeightFunction
        >>> params = SystemParameters(
        ...     ArrivalModel.renewal(0.0),
        ...     Distribution("exponential", mean=1.0),
        ...     WeightFunction("exp_saturation"),
        ... )
        >>> solver = FluidSolver(params, FluidConfig(dt=0.25, horizon=1.0))
        >>> path = solver.solve_direct(AtomicMeasure([(4, 1)]))
        >>> [round(w, 12) for w in path.workload_series().tolist()]
        [4.0, 3.75, 3.5, 3.25, 3.0]
    """

    def __init__(
        self, params: SystemParameters, cfg: FluidConfig, logger: Optional[logging.Logger] = None
    ):
        self.params = params
        self.cfg = cfg
        self.logger = logger or logging.getLogger(__name__)
        self.source = self._source_batch()

    def _source_batch(self) -> AtomicMeasure:
        """The mass injected per step: alpha * dt times the quadrature of nu."""

        rate = self.params.arrival.rate

        if rate == 0:
            return AtomicMeasure()

        if self.cfg.mean_correction:
            atoms = bin_mean_atoms(self.params.service, self.cfg.quadrature)

        else:
            atoms = quantile_atoms(self.params.service, self.cfg.quadrature)

        return atoms.scale_mass(rate * self.cfg.dt)

    def denominator(self, measure: AtomicMeasure) -> float:
        """<w, mu>."""

        return self._pairing(measure.locations, measure.masses)

    def _pairing(self, locations: np.ndarray, masses: np.ndarray) -> float:
        if locations.size == 0:
            return 0.0

        return float(np.dot(masses, self.params.weight(np.maximum(locations, 0.0))))

    def floor_for(self, theta: AtomicMeasure) -> float:
        """The configured floor, or 1e-3 <w, theta> by default.

        Raises:
            FloorViolationError: <w, theta> is 0, so no floor can hold.
        """

        if self.cfg.floor is not None:
            return self.cfg.floor

        pairing = self.denominator(theta)

        if not pairing > 0:
            raise FloorViolationError("<w, theta> = {} leaves no admissible floor".format(pairing), 0.0)

        return DEFAULT_FLOOR_FRACTION * pairing

    def _transport(
        self, measure: AtomicMeasure, time: float, denominator: Callable, floor: float
    ) -> AtomicMeasure:
        """Moves every atom by one 4th-order step of dx/dt = -w(x) / D.

        denominator(locations, masses, fraction) gives D at the stage
        locations, a fraction of the way through the step.
        """

        if not self.cfg.transport or len(measure) == 0:
            return measure

        h, weight = self.cfg.dt, self.params.weight
        masses = measure.masses

        def velocity(locations, fraction):
            value = denominator(locations, masses, fraction)

            if not value >= floor:
                raise FloorViolationError(
                    "<w, mu> = {:.6g} fell below the floor {:.6g}".format(value, floor),
                    time + fraction * h,
                )

            return -weight(np.maximum(locations, 0.0)) / value

        x = measure.locations
        k1 = velocity(x, 0.0)
        k2 = velocity(x + 0.5 * h * k1, 0.5)
        k3 = velocity(x + 0.5 * h * k2, 0.5)
        k4 = velocity(x + h * k3, 1.0)

        moved = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return AtomicMeasure.from_arrays(np.maximum(moved, 0.0), masses)

    def _finish(self, measure: AtomicMeasure) -> AtomicMeasure:
        """Injects the source batch, then prunes and bins."""

        return measure.add(self.source).prune(self.cfg.prune).coarsen(self.cfg.coarsen)

    def fluid_step(
        self, measure: AtomicMeasure, time: float = 0.0, floor: Optional[float] = None
    ) -> AtomicMeasure:
        """Advances a measure by one grid step.

            >>> from remshare.model import ArrivalModel, Distribution, WeightFunction
            >>> params = SystemParameters(
            ...     ArrivalModel.renewal(0.0),
            ...     Distribution("exponential", mean=1.0),
            ...     WeightFunction("saturating"),
            ... )
            >>> step = FluidSolver(params, FluidConfig(dt=0.01)).fluid_step(AtomicMeasure([(4, 1)]))
            >>> [(round(x, 12), m) for x, m in step.atoms]
            [(3.99, 1.0)]

        Arguments:
            measure {AtomicMeasure} -- mu(t).

        Keyword Arguments:
            time {float} -- t, for error reports. (default: {0.0})
            floor {Optional[float]} -- The floor; defaults from measure. (default: {None})

        Raises:
            FloorViolationError: <w, .> fell below the floor at some stage.

        Returns:
            AtomicMeasure -- mu(t + dt).
        """

        if floor is None:
            floor = self.floor_for(measure)

        def current(locations, masses, fraction):
            return self._pairing(locations, masses)

        return self._finish(self._transport(measure, time, current, floor))

    def solve_direct(self, theta: AtomicMeasure) -> FluidPath:
        """Iterates fluid_step from theta over the horizon.

        Raises:
            FloorViolationError: Carries the path up to the last good grid time.

        Returns:
            FluidPath -- Every grid measure.
        """

        times = self.cfg.grid()
        floor = self.floor_for(theta)

        if not self.denominator(theta) >= floor:
            raise FloorViolationError(
                "<w, theta> = {:.6g} is below the floor {:.6g}".format(self.denominator(theta), floor),
                float(times[0]),
            )

        self.logger.info(
            "solving the fluid path to t=%g (dt=%g, floor=%.3g)", self.cfg.horizon, self.cfg.dt, floor
        )
        measures = [theta]

        for k in range(times.size - 1):
            try:
                measures.append(self.fluid_step(measures[-1], float(times[k]), floor))

            except FloorViolationError as err:
                self.logger.info("fluid path stopped at the floor, t=%g", err.time)
                raise FloorViolationError(str(err), err.time, FluidPath(times[: k + 1], measures))

        self.logger.debug("fluid path done, %d atoms at the end", len(measures[-1]))
        return FluidPath(times, measures)


class PicardSolver:
    """
    The fluid path as the fixed point of the frozen-denominator map.

    One application transports the start measure with velocity
    -w(x) / <w, eta(s)>, the denominator taken from the previous iterate
    eta. The horizon is covered by windows short enough for that map
    to contract.
    """

    def __init__(
        self,
        params: SystemParameters,
        cfg: FluidConfig,
        pcfg: PicardConfig,
        logger: Optional[logging.Logger] = None,
    ):
        self.params = params
        self.pcfg = pcfg
        self.logger = logger or logging.getLogger(__name__)
        self.fluid = FluidSolver(params, cfg, self.logger)

    @property
    def cfg(self) -> FluidConfig:
        return self.fluid.cfg

    def floor_for(self, theta: AtomicMeasure) -> float:
        """The configured floor; by default the larger of the direct
        solver's default and the least floor whose window spans one step.

        Raises:
            FloorViolationError: <w, theta> is 0, so no floor can hold.
        """

        if self.cfg.floor is not None:
            return self.cfg.floor

        one_step = 2 * self.params.weight.sup_bound * self.cfg.dt / self.pcfg.zeta
        return max(self.fluid.floor_for(theta), one_step)

    def window_bound(self, floor: float) -> float:
        """zeta * floor / (2 ||w||_inf), the longest contracting window."""

        return self.pcfg.zeta * floor / (2 * self.params.weight.sup_bound)

    def window_steps(self, floor: float) -> int:
        """The window length in grid steps.

        Raises:
            FluidError: The window exceeds its bound or is shorter than one step.
        """

        bound = self.window_bound(floor)
        window = bound if self.pcfg.window is None else self.pcfg.window

        if window > bound * (1 + 1e-12):
            raise FluidError(
                "Picard window {} exceeds zeta * floor / (2 ||w||) = {}".format(window, bound)
            )

        steps = int(math.floor(window / self.cfg.dt + 1e-9))

        if steps < 1:
            raise FluidError(
                "Picard window {:.6g} is shorter than the step {}; raise the floor or refine dt".format(
                    window, self.cfg.dt
                )
            )

        return steps

    def picard_apply(
        self,
        eta: FluidPath,
        start: Optional[AtomicMeasure] = None,
        floor: Optional[float] = None,
    ) -> FluidPath:
        """One application of the map to the path eta.

        Within a step the frozen denominator runs linearly from <w, eta(t_k)>
        to the left limit at t_{k+1}, i.e. <w, eta(t_{k+1})> less the
        source mass injected at t_{k+1}.

        Arguments:
            eta {FluidPath} -- The previous iterate.

        Keyword Arguments:
            start {Optional[AtomicMeasure]} -- The start measure. (default: eta(t_0))
            floor {Optional[float]} -- The floor. (default: from eta(t_0))

        Raises:
            FloorViolationError: Some <w, eta> on the grid is below the floor.

        Returns:
            FluidPath -- The image, on eta's grid.
        """

        if start is None:
            start = eta.start

        if floor is None:
            floor = self.floor_for(eta.start)

        grid = [self.fluid.denominator(measure) for measure in eta.measures]
        injected = self.fluid.denominator(self.fluid.source)

        for time, value in zip(eta.times, grid):
            if not value >= floor:
                raise FloorViolationError(
                    "<w, eta> = {:.6g} is below the floor {:.6g}".format(value, floor), float(time)
                )

        measures = [start]

        for k in range(len(eta) - 1):
            frozen = _interpolated(grid[k], grid[k + 1] - injected)
            moved = self.fluid._transport(measures[-1], float(eta.times[k]), frozen, floor)
            measures.append(self.fluid._finish(moved))

        return FluidPath(eta.times, measures)

    def picard_iterate(self, theta: AtomicMeasure) -> Tuple[FluidPath, dict]:
        """Builds the fluid path from theta by Picard iteration.

        Each window starts from the constant path at its start measure and
        iterates until successive iterates are within the tolerance in the
        path norm; the terminal measure starts the next window.

        Raises:
            NonConvergenceError: A window exhausted max_iterations.
            FloorViolationError: Carries the converged part of the path.

        Returns:
            Tuple[FluidPath, dict] -- The path and the iteration diagnostics.
        """

        times = self.cfg.grid()
        floor = self.floor_for(theta)
        steps = self.window_steps(floor)

        diagnostics = {
            "floor": floor,
            "zeta": self.pcfg.zeta,
            "window": steps * self.cfg.dt,
            "window_steps": steps,
            "iterations": 0,
            "windows": [],
        }

        measures = [theta]
        first = 0

        while True:
            last = min(first + steps, times.size - 1)
            start = measures[-1]
            eta = FluidPath.constant(start, times[first : last + 1])

            record = {
                "start": float(times[first]),
                "end": float(times[last]),
                "iterations": 0,
                "distances": [],
                "ratios": [],
            }
            diagnostics["windows"].append(record)

            for _ in range(self.pcfg.max_iterations):
                try:
                    image = self.picard_apply(eta, start, floor)

                except FloorViolationError as err:
                    raise FloorViolationError(
                        str(err), err.time, FluidPath(times[: len(measures)], measures)
                    )

                distance = path_distance(image, eta)
                distances = record["distances"]

                if distances and distances[-1] > 0:
                    record["ratios"].append(distance / distances[-1])

                distances.append(distance)
                record["iterations"] += 1
                diagnostics["iterations"] += 1
                eta = image

                self.logger.debug(
                    "window [%g, %g] iteration %d: distance %.3g",
                    record["start"], record["end"], record["iterations"], distance,
                )

                if distance < self.pcfg.tolerance:
                    break

            else:
                raise NonConvergenceError(
                    "Picard iteration did not converge on [{}, {}] within {} iterations".format(
                        record["start"], record["end"], self.pcfg.max_iterations
                    ),
                    diagnostics,
                )

            self.logger.info(
                "window [%g, %g] converged after %d iterations",
                record["start"], record["end"], record["iterations"],
            )
            measures.extend(eta.measures[1:])
            first = last

            if first >= times.size - 1:
                break

        return FluidPath(times, measures), diagnostics


def fluid_step(measure: AtomicMeasure, params: SystemParameters, cfg: FluidConfig) -> AtomicMeasure:
    return FluidSolver(params, cfg).fluid_step(measure)


def solve_direct(theta: AtomicMeasure, params: SystemParameters, cfg: FluidConfig) -> FluidPath:
    return FluidSolver(params, cfg).solve_direct(theta)


def picard_apply(
    eta: FluidPath,
    params: SystemParameters,
    cfg: FluidConfig,
    start: Optional[AtomicMeasure] = None,
) -> FluidPath:
    return PicardSolver(params, cfg, PicardConfig()).picard_apply(eta, start)


def picard_iterate(
    theta: AtomicMeasure, params: SystemParameters, cfg: FluidConfig, pcfg: PicardConfig
) -> Tuple[FluidPath, dict]:
    return PicardSolver(params, cfg, pcfg).picard_iterate(theta)


def _drift(measure: AtomicMeasure, g: TestFunction, params: SystemParameters) -> float:
    """<g' w, mu> / <w, mu>."""

    weight = params.weight
    denominator = measure.integrate(weight)

    if not denominator > 0:
        raise FluidError("<w, mu> vanishes on the path")

    return measure.integrate(lambda x: g.derivative(x) * weight(x)) / denominator


def picard_residual(
    path: FluidPath, params: SystemParameters, g_panel: Sequence[TestFunction] = TEST_PANEL
) -> Dict[str, float]:
    """How far a path is from solving the integral equation, per test function.

    For each g, the largest over grid times of
    |<g, mu(t)> - <g, mu(0)> + int_0^t <g'w, mu(s)> / <w, mu(s)> ds - alpha t <g, nu>|,
    with the time integral by the trapezoid rule.

        >>> from remshare.model import ArrivalModel, Distribution, WeightFunction
        >>> params = SystemParameters(
        ...     ArrivalModel.renewal(0.0),
        ...     Distribution("exponential", mean=1.0),
        ...     WeightFunction("saturating"),
        ... )
        >>> path = FluidPath([0.0], [AtomicMeasure([(2, 1)])])
        >>> sorted(picard_residual(path, params).values())
        [0.0, 0.0, 0.0]

    Raises:
        ModelError: Some g is not a test function.

    Returns:
        Dict[str, float] -- Residual per test function name.
    """

    rate = params.arrival.rate
    elapsed = path.times - path.times[0]
    residuals = {}

    for g in g_panel:
        g.check()

        pairing = np.array([measure.integrate(g) for measure in path.measures])
        drift = np.array([_drift(measure, g, params) for measure in path.measures])

        if len(path) > 1:
            integral = cumulative_trapezoid(drift, path.times, initial=0.0)

        else:
            integral = np.zeros(1)

        source = rate * params.service.expectation(g) if rate > 0 else 0.0
        gap = pairing - pairing[0] + integral - source * elapsed
        residuals[g.name] = float(np.max(np.abs(gap)))

    return residuals


def dynamics_defect(path: FluidPath, params: SystemParameters, g: TestFunction) -> float:
    """The largest gap, over grid steps, between the difference quotient of
    <g, mu> and the drift -<g'w, mu> / <w, mu> + alpha <g, nu>."""

    g.check()

    if len(path) < 2:
        return 0.0

    rate = params.arrival.rate
    source = rate * params.service.expectation(g) if rate > 0 else 0.0
    pairing = np.array([measure.integrate(g) for measure in path.measures])
    drift = np.array([_drift(measure, g, params) for measure in path.measures[:-1]])

    quotient = np.diff(pairing) / np.diff(path.times)
    return float(np.max(np.abs(quotient + drift - source)))
