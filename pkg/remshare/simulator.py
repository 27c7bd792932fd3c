"""
Discrete-event simulation of the prelimit queue.

Jobs share a unit-capacity server: job n is served at rate
c_n = w(R_n) / sum_k w(R_k), where R_n is its remaining requirement.
Between arrivals the remaining amounts follow dR/dt = -c(R), which is
integrated with a classical 4th-order one-step method under step
doubling. A job departs when R drops to the departure threshold; the
crossing time is located by bisection.

The Simulator notifies listeners, much like an event bus, of:

    arrival     an Event, after the job joined
    departure   an Event, after the job left
    segment     a Segment, one integrated stretch without events
    snapshot    a Snapshot, at each requested snapshot time

The Trace of a run is itself recorded by such a listener.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from remshare.errors import DegenerateStateError, SimulationError, StepFailureError
from remshare.measure import AtomicMeasure
from remshare.model import SystemParameters, WeightFunction
from remshare.persist import table_text, write_atomic

EVENT_HEADER = ("time", "kind", "job_id", "requirement")
SERIES_HEADER = ("time", "z", "workload")
SNAPSHOT_HEADER = ("time", "location", "mass")

_BISECTION_TOLERANCE = 1e-12


@dataclass
class Job:
    """One job: its requirement nu_j and remaining amount R_j (S_j = nu_j - R_j)."""

    id: int
    arrival_time: float
    requirement: float
    remaining: Optional[float] = None
    initial: bool = False

    def __post_init__(self):
        if not self.requirement > 0:
            raise SimulationError(
                "Job {} needs a positive requirement, got {}".format(self.id, self.requirement)
            )

        if self.remaining is None:
            self.remaining = self.requirement

        if not 0 <= self.remaining <= self.requirement:
            raise SimulationError(
                "Job {} has remaining {} outside [0, {}]".format(
                    self.id, self.remaining, self.requirement
                )
            )

    @property
    def attained(self) -> float:
        return self.requirement - self.remaining


@dataclass
class SimConfig:
    """Run controls of the simulator."""

    horizon: float
    depart_threshold: float = 1e-9
    h_max: float = 0.5
    h_min: float = 1e-12
    tolerance: float = 1e-10
    seed: int = 0
    snapshot_times: Tuple[float, ...] = ()

    def __post_init__(self):
        self.snapshot_times = tuple(sorted(set(float(t) for t in self.snapshot_times)))

        if not self.horizon > 0:
            raise SimulationError("Simulation horizon must be positive, got {}".format(self.horizon))

        for name in ("depart_threshold", "h_max", "h_min", "tolerance"):
            if not getattr(self, name) > 0:
                raise SimulationError("{} must be positive, got {}".format(name, getattr(self, name)))

        if any(t < 0 for t in self.snapshot_times):
            raise SimulationError("Snapshot times must be nonnegative")


class Event:
    """An arrival or a departure."""

    __slots__ = ("time", "kind", "job_id", "requirement")

    def __init__(self, time: float, kind: str, job_id: int, requirement: float):
        self.time = time
        self.kind = kind
        self.job_id = job_id
        self.requirement = requirement

    def row(self) -> list:
        return [self.time, self.kind, self.job_id, self.requirement]

    def __repr__(self):
        return "Event({} job {} at {})".format(self.kind, self.job_id, self.time)


class Segment:
    """One integrated stretch of service with no event inside."""

    __slots__ = ("start", "end", "workload_before", "workload_after", "population")

    def __init__(self, start, end, workload_before, workload_after, population):
        self.start = start
        self.end = end
        self.workload_before = workload_before
        self.workload_after = workload_after
        self.population = population


class Snapshot:
    """The state descriptor and counters at one requested time."""

    def __init__(
        self,
        time: float,
        measure: AtomicMeasure,
        arrivals: int,
        departures: int,
        population: int,
        workload: float,
        arrived_work: float,
        busy_time: float,
        discarded_work: float,
        initial_workload: float,
    ):
        self.time = time
        self.measure = measure
        self.arrivals = arrivals
        self.departures = departures
        self.population = population
        self.workload = workload
        self.arrived_work = arrived_work
        self.busy_time = busy_time
        self.discarded_work = discarded_work
        self.initial_workload = initial_workload

    def __repr__(self):
        return "Snapshot(t={}, Z={}, workload={:.6g})".format(self.time, self.population, self.workload)


class SimulationState:
    """
    The prelimit system at the current clock: active jobs (stored as
    parallel arrays), counters E, D and Z, and the RNG streams.
    """

    def __init__(
        self,
        jobs: Iterable[Job] = (),
        arrival_rng: Optional[np.random.Generator] = None,
        service_rng: Optional[np.random.Generator] = None,
        clock: float = 0.0,
    ):
        jobs = sorted(jobs, key=lambda job: job.id)

        if len(set(job.id for job in jobs)) != len(jobs):
            raise SimulationError("Initial jobs must have distinct ids")

        self.clock = float(clock)
        self.ids = np.array([job.id for job in jobs], dtype=np.int64)
        self.requirements = np.array([job.requirement for job in jobs], dtype=float)
        self.remaining = np.array([job.remaining for job in jobs], dtype=float)
        self.arrival_times = np.array([job.arrival_time for job in jobs], dtype=float)
        self.initial = np.array([job.initial for job in jobs], dtype=bool)

        self.initial_count = len(jobs)
        self.initial_workload = float(np.sum(self.remaining))
        self.arrivals = 0
        self.departures = 0
        self.arrived_work = 0.0
        self.busy_time = 0.0
        self.discarded_work = 0.0
        self.next_id = int(self.ids.max()) + 1 if jobs else 0
        self.next_arrival = math.inf

        self.arrival_rng = arrival_rng
        self.service_rng = service_rng

    @property
    def population(self) -> int:
        """Z(t)."""

        return int(self.ids.size)

    def workload(self) -> float:
        return float(np.sum(self.remaining))

    @property
    def jobs(self) -> List[Job]:
        """The active jobs, as Job records (copies)."""

        return [
            Job(int(i), float(a), float(nu), float(r), bool(init))
            for i, a, nu, r, init in zip(
                self.ids, self.arrival_times, self.requirements, self.remaining, self.initial
            )
        ]

    def balanced(self) -> bool:
        """Whether Z(t) = Z(0) + E(t) - D(t)."""

        return self.population == self.initial_count + self.arrivals - self.departures

    def admit(self, time: float, requirement: float) -> int:
        job_id = self.next_id
        self.next_id += 1

        self.ids = np.append(self.ids, job_id)
        self.requirements = np.append(self.requirements, requirement)
        self.remaining = np.append(self.remaining, requirement)
        self.arrival_times = np.append(self.arrival_times, time)
        self.initial = np.append(self.initial, False)

        self.arrivals += 1
        self.arrived_work += requirement
        return job_id

    def discharge(self, threshold: float) -> List[Tuple[int, float]]:
        """Removes every job at or below threshold, in id order."""

        done = np.flatnonzero(self.remaining <= threshold)

        if done.size == 0:
            return []

        done = done[np.argsort(self.ids[done], kind="stable")]
        gone = [(int(self.ids[k]), float(self.requirements[k])) for k in done]

        self.discarded_work += float(np.sum(np.maximum(self.remaining[done], 0.0)))
        keep = np.ones(self.ids.size, dtype=bool)
        keep[done] = False

        self.ids = self.ids[keep]
        self.requirements = self.requirements[keep]
        self.remaining = self.remaining[keep]
        self.arrival_times = self.arrival_times[keep]
        self.initial = self.initial[keep]

        self.departures += len(gone)
        return gone

    def __repr__(self):
        return "SimulationState(t={}, Z={}, E={}, D={})".format(
            self.clock, self.population, self.arrivals, self.departures
        )


def service_shares(jobs: Sequence[Union[Job, float]], weight: WeightFunction) -> np.ndarray:
    """Service rates c_n = w(R_n) / sum_k w(R_k).

    A lone job is served at rate 1 whatever w is. Negative remaining
    amounts (integrator stages) are treated as 0.

        >>> service_shares([2.0, 6.0], WeightFunction("truncated_linear", cap=8)).tolist()
        [0.25, 0.75]
        >>> service_shares([3.0], WeightFunction("saturating")).tolist()
        [1.0]

    Arguments:
        jobs {Sequence[Union[Job, float]]} -- Jobs, or their remaining amounts.
        weight {WeightFunction} -- The weight w.

    Raises:
        DegenerateStateError: No job, or every weight is zero.

    Returns:
        np.ndarray -- The rates, summing to 1.
    """

    if isinstance(jobs, np.ndarray):
        remaining = jobs

    else:
        remaining = np.array(
            [job.remaining if isinstance(job, Job) else job for job in jobs], dtype=float
        )

    if remaining.size == 0:
        raise DegenerateStateError("Service shares requested for an empty system")

    if remaining.size == 1:
        return np.ones(1)

    weights = np.asarray(weight(np.maximum(remaining, 0.0)), dtype=float)
    total = float(np.sum(weights))

    if not total > 0:
        raise DegenerateStateError(
            "Every weight is zero for remaining amounts {}".format(remaining.tolist())
        )

    return weights / total


def _rk4(remaining: np.ndarray, h: float, weight: WeightFunction) -> np.ndarray:
    """One classical 4th-order step of dR/dt = -c(R)."""

    k1 = service_shares(remaining, weight)
    k2 = service_shares(remaining - 0.5 * h * k1, weight)
    k3 = service_shares(remaining - 0.5 * h * k2, weight)
    k4 = service_shares(remaining - h * k3, weight)
    return remaining - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def snapshot_measure(state: SimulationState, threshold: float = 0.0) -> AtomicMeasure:
    """mu(t): a unit atom at each remaining amount above threshold.

        >>> state = SimulationState([Job(0, 0.0, 1.2), Job(1, 0.0, 3.4)])
        >>> snapshot_measure(state).atoms
        [(1.2, 1.0), (3.4, 1.0)]
        >>> snapshot_measure(SimulationState()).atoms
        []
    """

    alive = state.remaining[state.remaining > threshold]
    return AtomicMeasure.from_arrays(alive, np.ones(alive.size))


class Simulator:
    """
    Weighted processor-sharing simulator for one system.

        >>> from remshare.model import ArrivalModel, Distribution
        >>> params = SystemParameters(
        ...     ArrivalModel.renewal(0.0),
        ...     Distribution("exponential", mean=1.0),
        ...     WeightFunction("exp_saturation"),
        ... )
        >>> trace = Simulator(params, SimConfig(horizon=5.0)).run([Job(0, 0.0, 3.0)])
        >>> [(e.kind, round(e.time, 6)) for e in trace.events]
        [('departure', 3.0)]
    """

    def __init__(
        self, params: SystemParameters, cfg: SimConfig, logger: Optional[logging.Logger] = None
    ):
        """
        Arguments:
            params {SystemParameters} -- Arrivals, service law, weight.
            cfg {SimConfig} -- Run controls.

        Keyword Arguments:
            logger {logging.Logger} -- Where to log. (default: the module logger)
        """

        self.params = params
        self.cfg = cfg
        self.logger = logger or logging.getLogger(__name__)

        # insertion-ordered; values unused
        self._listeners = {}  # type: Dict[str, Dict[Callable, None]]
        self._global_listeners = {}  # type: Dict[Callable, None]
        self._step_hint = cfg.h_max

    def listen(self, name: str = "_"):
        """Adds a listener for one kind of notification.
        Use as a decorator generating method.

        Keyword Arguments:
            name {str} -- arrival, departure, segment or snapshot. (default: {'_'})

        Returns:
            function -- The decorator method.
        """

        def _decorator(func):
            self._listeners.setdefault(name, {})[func] = None
            return func

        return _decorator

    def listen_all(self):
        """Adds a listener for every notification.
        Use as a decorator generating method.

        Returns:
            function -- The decorator method.
        """

        def _decorator(func):
            self._global_listeners[func] = None
            return func

        return _decorator

    def notify(self, kind: str, data):
        """Calls every listener registered for kind, then the global ones,
        each group in the order it was registered.

        Arguments:
            kind {str} -- The kind of notification (aka name argument in listen).
            data {any} -- The notification's data.
        """

        for listener in list(self._listeners.get(kind, ())):
            listener(kind, data)

        for listener in list(self._global_listeners):
            listener(kind, data)

    # === service ===

    def _attempt(self, remaining: np.ndarray, h: float) -> Tuple[np.ndarray, float]:
        """One step of size h and two of size h/2; returns the finer result and
        the step-doubling error estimate."""

        weight = self.params.weight
        full = _rk4(remaining, h, weight)
        half = _rk4(_rk4(remaining, 0.5 * h, weight), 0.5 * h, weight)
        return half, float(np.max(np.abs(half - full))) / 15.0

    def _crossing(self, remaining: np.ndarray, h: float) -> float:
        """The first time in (0, h] when some job reaches the threshold."""

        weight, threshold = self.params.weight, self.cfg.depart_threshold
        lo, hi = 0.0, h

        while hi - lo > _BISECTION_TOLERANCE:
            mid = 0.5 * (lo + hi)

            if np.min(_rk4(remaining, mid, weight)) <= threshold:
                hi = mid

            else:
                lo = mid

        return hi

    def step_service(self, state: SimulationState, h: float) -> SimulationState:
        """Serves the jobs for h time units, with no arrival inside.

        Jobs that reach the departure threshold leave at the crossing time
        and the remaining stretch continues with the reduced job set.

            >>> from remshare.model import ArrivalModel, Distribution
            >>> params = SystemParameters(
            ...     ArrivalModel.renewal(0.0),
            ...     Distribution("exponential", mean=1.0),
            ...     WeightFunction("truncated_linear", cap=8),
            ... )
            >>> sim = Simulator(params, SimConfig(horizon=1.0))
            >>> state = SimulationState([Job(0, 0.0, 2.0), Job(1, 0.0, 6.0)])
            >>> [round(r, 12) for r in sim.step_service(state, 0.8).remaining.tolist()]
            [1.8, 5.4]

        Arguments:
            state {SimulationState} -- Advanced in place.
            h {float} -- How long to serve.

        Raises:
            StepFailureError: The tolerance is not met at h_min. The state is
                              left at the last good time.

        Returns:
            SimulationState -- The same state object.
        """

        cfg = self.cfg
        target = state.clock + h

        while state.clock < target:
            start = state.clock

            if state.population == 0:
                state.clock = target
                break

            step = min(self._step_hint, cfg.h_max, target - start)
            halved = False

            while True:
                candidate, error = self._attempt(state.remaining, step)

                if error <= cfg.tolerance:
                    break

                step *= 0.5
                halved = True

                if step < cfg.h_min:
                    raise StepFailureError(
                        "Integrator tolerance {} not met at the minimum step {} (t={})".format(
                            cfg.tolerance, cfg.h_min, start
                        ),
                        state,
                    )

            self._step_hint = step if halved else min(2 * step, cfg.h_max)

            if np.min(candidate) <= cfg.depart_threshold:
                step = self._crossing(state.remaining, step)
                candidate = _rk4(state.remaining, step, self.params.weight)

            end = target if step >= target - start else start + step
            before = state.workload()

            state.remaining = candidate
            state.clock = end
            state.busy_time += end - start

            self.notify("segment", Segment(start, end, before, state.workload(), state.population))
            self._discharge(state)

        state.clock = target
        return state

    def _discharge(self, state: SimulationState):
        for job_id, requirement in state.discharge(self.cfg.depart_threshold):
            self.logger.debug("job %d departs at t=%.17g", job_id, state.clock)
            self.notify("departure", Event(state.clock, "departure", job_id, requirement))

    def _admit(self, state: SimulationState, time: float):
        requirement = float(self.params.service.sample(state.service_rng))
        job_id = state.admit(time, requirement)

        self.notify("arrival", Event(time, "arrival", job_id, requirement))
        # a draw below the threshold leaves at once
        self._discharge(state)

    def _snapshot(self, state: SimulationState) -> Snapshot:
        snapshot = Snapshot(
            state.clock,
            snapshot_measure(state, self.cfg.depart_threshold),
            state.arrivals,
            state.departures,
            state.population,
            state.workload(),
            state.arrived_work,
            state.busy_time,
            state.discarded_work,
            state.initial_workload,
        )
        self.notify("snapshot", snapshot)
        return snapshot

    # === runs ===

    def initial_state(self, init: Iterable[Union[Job, float]] = ()) -> SimulationState:
        """The state at time 0, with RNG streams spawned from the run seed.

        Plain numbers in init are taken as requirements of fresh initial jobs.
        """

        jobs = []

        for index, job in enumerate(init):
            if isinstance(job, Job):
                jobs.append(Job(job.id, job.arrival_time, job.requirement, job.remaining, True))

            else:
                jobs.append(Job(index, 0.0, float(job), initial=True))

        arrival_seq, service_seq = np.random.SeedSequence(self.cfg.seed).spawn(2)
        return SimulationState(
            jobs, np.random.default_rng(arrival_seq), np.random.default_rng(service_seq)
        )

    def run(self, init: Iterable[Union[Job, float]] = ()) -> "Trace":
        """Simulates from the initial jobs up to the horizon.

        Arguments:
            init {Iterable[Union[Job, float]]} -- Initial jobs (or requirements).

        Raises:
            StepFailureError: Propagated from step_service.

        Returns:
            Trace -- Events, series and snapshots of the run.
        """

        cfg = self.cfg
        state = self.initial_state(init)
        trace = Trace(cfg.horizon, cfg.seed, state)
        recorder = self.listen_all()(trace.record)

        self._step_hint = cfg.h_max
        self.logger.info(
            "simulating to t=%g from %d jobs (rho=%g, seed=%d)",
            cfg.horizon, state.population, self.params.rho, cfg.seed,
        )

        try:
            # arrival epochs of E(t); stops at the first epoch past the horizon
            epochs = self.params.arrival.stream(state.arrival_rng)
            state.next_arrival = next(epochs, math.inf)
            pending = [t for t in cfg.snapshot_times if t <= cfg.horizon]

            self._discharge(state)

            while True:
                target = min(state.next_arrival, cfg.horizon, pending[0] if pending else math.inf)

                if target > state.clock:
                    self.step_service(state, target - state.clock)

                state.clock = target

                while state.next_arrival <= state.clock:
                    self._admit(state, state.next_arrival)
                    state.next_arrival = next(epochs, math.inf)

                while pending and pending[0] <= state.clock:
                    pending.pop(0)
                    self._snapshot(state)

                if not state.balanced():
                    raise SimulationError("Z(t) = Z(0) + E(t) - D(t) broken at t={}".format(state.clock))

                if state.clock >= cfg.horizon:
                    break

        finally:
            self._global_listeners.pop(recorder, None)

        trace.close(state)
        self.logger.info(
            "simulation done: E=%d D=%d Z=%d", state.arrivals, state.departures, state.population
        )
        return trace


def step_service(
    state: SimulationState, h: float, params: SystemParameters, cfg: SimConfig
) -> SimulationState:
    """Module-level shorthand for Simulator(params, cfg).step_service(state, h)."""

    return Simulator(params, cfg).step_service(state, h)


def run(params: SystemParameters, init: Iterable[Union[Job, float]], cfg: SimConfig) -> "Trace":
    """Module-level shorthand for Simulator(params, cfg).run(init)."""

    return Simulator(params, cfg).run(init)


class Trace:
    """Everything recorded along a run."""

    def __init__(self, horizon: float, seed: int, state: SimulationState):
        self.horizon = horizon
        self.seed = seed
        self.events = []  # type: List[Event]
        self.snapshots = []  # type: List[Snapshot]
        self.series = [(0.0, state.population, state.workload())]  # type: List[tuple]
        self.final_state = None  # type: Optional[SimulationState]
        self._state = state

    def record(self, kind: str, data):
        """The listener that fills the trace."""

        if kind in ("arrival", "departure"):
            self.events.append(data)
            self.series.append((data.time, self._state.population, self._state.workload()))

        elif kind == "snapshot":
            self.snapshots.append(data)
            self.series.append((data.time, data.population, data.workload))

    def close(self, state: SimulationState):
        self.final_state = state

        if self.series[-1][0] != state.clock:
            self.series.append((state.clock, state.population, state.workload()))

    def snapshot_at(self, time: float) -> Snapshot:
        """The snapshot recorded at the given clock time.

        Raises:
            SimulationError: No snapshot was requested at that time.
        """

        for snapshot in self.snapshots:
            if abs(snapshot.time - time) <= 1e-9 * max(1.0, abs(time)):
                return snapshot

        raise SimulationError("No snapshot was recorded at t={}".format(time))

    def event_rows(self) -> List[list]:
        return [event.row() for event in self.events]

    def series_rows(self) -> List[list]:
        return [list(row) for row in self.series]

    def snapshot_rows(self) -> List[list]:
        rows = []

        for snapshot in self.snapshots:
            rows.extend([snapshot.time, x, m] for x, m in snapshot.measure.atoms)

        return rows

    def tables(self, fmt: str = "csv") -> Dict[str, str]:
        """The trace rendered as events, series and snapshots tables."""

        return {
            "events": table_text(EVENT_HEADER, self.event_rows(), fmt),
            "series": table_text(SERIES_HEADER, self.series_rows(), fmt),
            "snapshots": table_text(SNAPSHOT_HEADER, self.snapshot_rows(), fmt),
        }

    def write(self, output_dir: str, fmt: str = "csv") -> List[str]:
        """Writes the three tables atomically; returns their paths."""

        paths = []

        for name, text in sorted(self.tables(fmt).items()):
            path = "{}/{}.{}".format(output_dir, name, fmt)
            write_atomic(path, text)
            paths.append(path)

        return paths


def _checked_snapshot(trace: Trace, r: float, t: float) -> Snapshot:
    if not r > 0:
        raise SimulationError("Scale r must be positive, got {}".format(r))

    clock = r * t

    if clock > trace.horizon * (1 + 1e-12):
        raise SimulationError(
            "Scaled time {} (clock {}) lies beyond the horizon {}".format(t, clock, trace.horizon)
        )

    return trace.snapshot_at(clock)


def scaled_snapshot(trace: Trace, r: float, t: float) -> AtomicMeasure:
    """(1/r) mu^r(rt), read from the snapshot recorded at clock r t."""

    measure = _checked_snapshot(trace, r, t).measure

    if r == 1:
        return measure

    return measure.scale_mass(1.0 / r)


def scaled_arrivals(trace: Trace, r: float, t: float) -> float:
    """E(rt) / r."""

    return _checked_snapshot(trace, r, t).arrivals / r


def scaled_population(trace: Trace, r: float, t: float) -> float:
    """Z(rt) / r."""

    return _checked_snapshot(trace, r, t).population / r
