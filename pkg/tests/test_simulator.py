import numpy as np
import pytest

from remshare.errors import DegenerateStateError, SimulationError, StepFailureError
from remshare.model import ArrivalModel, Distribution, SystemParameters, WeightFunction
from remshare.simulator import (
    Job,
    SimConfig,
    SimulationState,
    Simulator,
    scaled_arrivals,
    scaled_population,
    scaled_snapshot,
    service_shares,
    snapshot_measure,
    step_service,
)


def params_for(weight, rate=0.0):
    return SystemParameters(
        ArrivalModel.renewal(rate), Distribution("exponential", mean=1.0), weight
    )


LINEAR = WeightFunction("truncated_linear", cap=100)
SATURATING = WeightFunction("exp_saturation")


def test_service_shares():
    assert service_shares([Job(0, 0.0, 5.0)], SATURATING).tolist() == [1.0]
    assert service_shares([2.0, 6.0], LINEAR).tolist() == [0.25, 0.75]
    assert service_shares([1.5, 1.5], SATURATING).tolist() == [0.5, 0.5]

    with pytest.raises(DegenerateStateError):
        service_shares([], SATURATING)

    with pytest.raises(DegenerateStateError):
        service_shares([0.0, 0.0], SATURATING)


def test_step_service_examples():
    cfg = SimConfig(horizon=10.0)

    state = step_service(SimulationState([Job(0, 0.0, 3.0)]), 1.0, params_for(SATURATING), cfg)
    assert state.remaining.tolist() == [2.0]

    state = SimulationState([Job(0, 0.0, 1.0), Job(1, 0.0, 1.0)])
    step_service(state, 0.4, params_for(SATURATING), cfg)
    assert state.remaining.tolist() == pytest.approx([0.8, 0.8], abs=1e-12)
    assert state.clock == 0.4


def test_proportional_shrink():
    times = [8.0 * k / 21 for k in range(1, 21)]
    cfg = SimConfig(horizon=10.0, snapshot_times=times)
    trace = Simulator(params_for(LINEAR), cfg).run([2.0, 6.0])

    for t in times:
        left = (8.0 - t) / 8.0
        [(x1, _), (x2, _)] = trace.snapshot_at(t).measure.atoms

        assert x1 == pytest.approx(2.0 * left, rel=1e-6)
        assert x2 == pytest.approx(6.0 * left, rel=1e-6)


def test_two_jobs_leave_together():
    trace = Simulator(params_for(LINEAR), SimConfig(horizon=10.0)).run([2.0, 6.0])
    departures = [event for event in trace.events if event.kind == "departure"]

    assert [event.job_id for event in departures] == [0, 1]
    assert all(abs(event.time - 8.0) < 1e-6 for event in departures)
    assert trace.final_state.population == 0
    assert trace.final_state.busy_time == pytest.approx(8.0, abs=1e-6)


def test_empty_system():
    cfg = SimConfig(horizon=3.0, snapshot_times=[1.0])
    trace = Simulator(params_for(SATURATING), cfg).run()

    assert trace.events == []
    assert all(z == 0 for _, z, _ in trace.series)
    assert trace.snapshot_at(1.0).measure.atoms == []


def test_snapshot_measure_skips_finished_jobs():
    state = SimulationState([Job(0, 0.0, 1.0, remaining=0.0), Job(1, 0.0, 2.0)])
    assert snapshot_measure(state).atoms == [(2.0, 1.0)]


def test_bad_configs_rejected():
    with pytest.raises(SimulationError):
        SimConfig(horizon=0.0)

    with pytest.raises(SimulationError):
        SimConfig(horizon=1.0, h_max=-1)

    with pytest.raises(SimulationError):
        Job(0, 0.0, 1.0, remaining=2.0)

    with pytest.raises(SimulationError):
        SimulationState([Job(0, 0.0, 1.0), Job(0, 0.0, 2.0)])


def test_step_failure_keeps_last_good_state():
    cfg = SimConfig(horizon=5.0, tolerance=1e-300, h_min=0.1)
    state = SimulationState([Job(0, 0.0, 1.0), Job(1, 0.0, 3.0)])

    with pytest.raises(StepFailureError) as caught:
        Simulator(params_for(SATURATING), cfg).step_service(state, 1.0)

    assert caught.value.state.clock == 0.0
    assert caught.value.state.remaining.tolist() == [1.0, 3.0]


def _busy_run(seed=0, snapshot_times=()):
    cfg = SimConfig(horizon=50.0, seed=seed, snapshot_times=snapshot_times)
    simulator = Simulator(params_for(SATURATING, rate=1.0), cfg)
    segments = []

    @simulator.listen("segment")
    def _segment(kind, segment):
        segments.append(segment)

    return simulator.run([1.0, 2.0]), segments


def test_listeners_run_in_registration_order():
    simulator = Simulator(params_for(SATURATING), SimConfig(horizon=1.0))
    calls = []

    for tag in ("c", "a", "b"):
        simulator.listen("arrival")(lambda kind, data, tag=tag: calls.append((tag, kind, data)))

    simulator.listen_all()(lambda kind, data: calls.append(("all", kind, data)))
    simulator.listen("departure")(lambda kind, data: calls.append(("gone", kind, data)))

    simulator.notify("arrival", 1)
    simulator.notify("departure", 2)

    assert calls == [
        ("c", "arrival", 1),
        ("a", "arrival", 1),
        ("b", "arrival", 1),
        ("all", "arrival", 1),
        ("gone", "departure", 2),
        ("all", "departure", 2),
    ]


def test_work_conservation():
    trace, segments = _busy_run()

    assert segments
    assert any(event.kind == "arrival" for event in trace.events)

    for segment in segments:
        elapsed = segment.end - segment.start
        change = segment.workload_after - segment.workload_before

        assert abs(change + elapsed) <= 1e-8 * elapsed + 1e-12


def test_population_balance_at_every_event():
    trace, _ = _busy_run()
    population = 2

    for event, (_, z, _) in zip(trace.events, trace.series[1:]):
        population += 1 if event.kind == "arrival" else -1
        assert z == population

    assert trace.final_state.balanced()


def test_remaining_amounts_never_grow():
    simulator = Simulator(params_for(SATURATING), SimConfig(horizon=10.0))
    state = SimulationState([Job(0, 0.0, 1.0), Job(1, 0.0, 2.0), Job(2, 0.0, 4.0)])
    previous = dict(zip(state.ids.tolist(), state.remaining.tolist()))

    for _ in range(20):
        simulator.step_service(state, 0.25)
        current = dict(zip(state.ids.tolist(), state.remaining.tolist()))

        assert set(current) <= set(previous)
        assert all(current[job] <= previous[job] for job in current)
        previous = current

    for job in state.jobs:
        assert job.attained + job.remaining == pytest.approx(job.requirement, abs=1e-8)


def test_runs_are_deterministic():
    first, _ = _busy_run(seed=11, snapshot_times=[10.0, 25.0])
    second, _ = _busy_run(seed=11, snapshot_times=[10.0, 25.0])
    other, _ = _busy_run(seed=12, snapshot_times=[10.0, 25.0])

    assert first.tables() == second.tables()
    assert first.tables()["events"] != other.tables()["events"]


def test_trace_files(tmp_path):
    trace, _ = _busy_run(seed=1, snapshot_times=[5.0])
    paths = trace.write(str(tmp_path))

    assert sorted(p.rsplit("/", 1)[-1] for p in paths) == ["events.csv", "series.csv", "snapshots.csv"]
    assert (tmp_path / "events.csv").read_text() == trace.tables()["events"]


def test_scaled_accessors():
    cfg = SimConfig(horizon=5.0, snapshot_times=[0.0, 5.0])
    trace = Simulator(params_for(SATURATING), cfg).run([1.0] * 10)

    assert scaled_snapshot(trace, 10, 0.0).atoms == [(1.0, 1.0)]
    assert scaled_population(trace, 10, 0.0) == 1.0
    assert scaled_arrivals(trace, 10, 0.0) == 0.0
    assert scaled_snapshot(trace, 1, 0.0) == trace.snapshot_at(0.0).measure

    with pytest.raises(SimulationError):
        scaled_snapshot(trace, 10, 1.0)

    with pytest.raises(SimulationError):
        scaled_snapshot(trace, 1, 2.0)


def test_scaled_snapshot_of_empty_system():
    cfg = SimConfig(horizon=4.0, snapshot_times=[4.0])
    trace = Simulator(params_for(SATURATING), cfg).run([1.0])

    assert scaled_snapshot(trace, 2, 2.0).atoms == []
    assert np.isclose(trace.events[0].time, 1.0)
