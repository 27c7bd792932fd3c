import numpy as np
import pytest

from remshare.errors import HarnessError
from remshare.fluid import FluidConfig
from remshare.harness import (
    Cell,
    ConvergenceReport,
    ScalingExperiment,
    ScalingRunner,
    initial_jobs_from_theta,
    run_scaling,
    seed_for,
)
from remshare.measure import AtomicMeasure, bl_distance
from remshare.model import ArrivalModel, Distribution, SystemParameters, WeightFunction
from remshare.simulator import SimConfig

THETA = AtomicMeasure([(1, 0.5), (3, 0.5)])
FIXTURE = AtomicMeasure([(0.5, 1), (1.5, 1)])


def heavy_traffic():
    return SystemParameters(
        ArrivalModel.renewal(1.0),
        Distribution("exponential", mean=1.0),
        WeightFunction("exp_saturation"),
        heavy_traffic=True,
    )


def empirical(jobs, r):
    return AtomicMeasure((job.requirement, 1.0 / r) for job in jobs)


def test_seed_for():
    grid = [seed_for(5, r, rep) for r in (5, 20, 80) for rep in range(20)]

    assert len(set(grid)) == 60
    assert seed_for(5, 20, 3) == seed_for(5, 20, 3)
    moved = [seed_for(6, r, rep) for r in (5, 20, 80) for rep in range(20)]
    assert all(a != b for a, b in zip(grid, moved))
    assert all(0 <= seed < 2 ** 64 for seed in grid)


def test_initial_jobs_examples():
    jobs = initial_jobs_from_theta(AtomicMeasure([(1, 1)]), 10, seed=0)
    assert [job.requirement for job in jobs] == [1.0] * 10

    jobs = initial_jobs_from_theta(THETA, 4, seed=9)
    assert len(jobs) == 4
    assert {job.requirement for job in jobs} <= {1.0, 3.0}
    assert all(job.initial and job.arrival_time == 0.0 for job in jobs)


def test_initial_jobs_rejections():
    with pytest.raises(HarnessError):
        initial_jobs_from_theta(AtomicMeasure(), 10, seed=0)

    with pytest.raises(HarnessError):
        initial_jobs_from_theta(THETA, 0, seed=0)

    with pytest.raises(HarnessError):
        initial_jobs_from_theta(THETA, 10, seed=0, mode="sobol")


def test_initial_measures_approach_theta():
    medians = []

    for r in (10, 1000):
        distances = [
            bl_distance(empirical(initial_jobs_from_theta(THETA, r, seed), r), THETA)
            for seed in range(50)
        ]
        medians.append(float(np.median(distances)))

    assert medians[1] <= medians[0]


def test_experiment_checks():
    with pytest.raises(HarnessError):
        ScalingExperiment(heavy_traffic(), FIXTURE, r_values=[20, 5], checkpoints=[1.0])

    with pytest.raises(HarnessError):
        ScalingExperiment(heavy_traffic(), FIXTURE, r_values=[5], checkpoints=[])

    with pytest.raises(HarnessError):
        ScalingExperiment(heavy_traffic(), FIXTURE, r_values=[5], checkpoints=[1.0], perturbation=5)

    light = SystemParameters(
        ArrivalModel.renewal(0.5), Distribution("exponential", mean=1.0), WeightFunction("saturating")
    )

    with pytest.raises(HarnessError):
        ScalingExperiment(light, FIXTURE, r_values=[5], checkpoints=[1.0])

    ScalingExperiment(light, FIXTURE, r_values=[5], checkpoints=[1.0], heavy_traffic=False)


def test_unit_scale_at_time_zero_is_the_initial_distance():
    params = SystemParameters(
        ArrivalModel.renewal(0.0), Distribution("exponential", mean=1.0), WeightFunction("saturating")
    )
    exp = ScalingExperiment(
        params,
        THETA,
        r_values=[1],
        checkpoints=[0.0],
        seed=4,
        fluid=FluidConfig(dt=0.01),
        heavy_traffic=False,
    )
    report = run_scaling(exp)

    jobs = initial_jobs_from_theta(THETA, 1, seed_for(4, 1, 0))
    expected = bl_distance(empirical(jobs, 1), THETA)

    assert report.failures == []
    assert report.cells[(1, 0, 0.0)].bl_distance == expected


def small_experiment(**overrides):
    settings = dict(
        r_values=[2, 4],
        checkpoints=[0.25, 0.5],
        replications=3,
        seed=13,
        fluid=FluidConfig(dt=0.05),
    )
    settings.update(overrides)
    return ScalingExperiment(heavy_traffic(), FIXTURE, **settings)


def test_reports_do_not_depend_on_parallelism():
    serial = run_scaling(small_experiment(workers=1))
    parallel = run_scaling(small_experiment(workers=3))

    assert serial.table() == parallel.table()
    assert len(serial.rows()) == 2 * 3 * 2
    assert all(value >= 0 for row in serial.rows() for value in row[3:])

    summaries = [report.summary() for report in (serial, parallel)]

    for summary in summaries:
        summary.pop("runtime")

    assert summaries[0] == summaries[1]


def test_checkpoint_measures_balance_their_workload():
    runner = ScalingRunner(small_experiment())
    runner.solve_fluid()
    measures = runner._checkpoint_measures(4, 0)

    assert sorted(measures) == [0.25, 0.5]


def test_failed_replications_are_recorded():
    sim = SimConfig(horizon=1.0, tolerance=1e-300, h_min=0.1)
    report = run_scaling(small_experiment(sim=sim, mode="quantile", replications=2))

    assert report.cells == {}
    assert len(report.failures) == 4
    assert {failure["error"] for failure in report.failures} == {"StepFailureError"}
    assert [(f["r"], f["replication"]) for f in report.failures] == [(2, 0), (2, 1), (4, 0), (4, 1)]
    assert report.completed(2) == 0
    assert not report.verdict()


def test_medians_of_hand_made_cells():
    report = ConvergenceReport(small_experiment())

    for rep, distance in enumerate((0.3, 0.1)):
        report.cells[(2, rep, 0.25)] = Cell(distance, 0.0, 1.0)

    report.cells[(4, 0, 0.25)] = Cell(0.05, 0.0, 2.0)

    medians = report.medians()

    assert medians[0.25] == {2: pytest.approx(0.2), 4: 0.05}
    assert medians[0.5] == {}
    assert type(medians[0.25][4]) is float
    assert report.medians("z_abs_err")[0.25] == {2: 1.0, 4: 2.0}
    assert not report.verdict()


def test_report_files(tmp_path):
    report = run_scaling(small_experiment(replications=1))
    paths = report.write(str(tmp_path))

    assert [p.rsplit("/", 1)[-1] for p in paths] == ["report.csv", "summary.json"]
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header == "r,replication,checkpoint,bl_distance,workload_abs_err,z_abs_err"

    with pytest.raises(HarnessError):
        report.medians("latency")


def test_checkpoints_must_sit_on_the_fluid_grid():
    runner = ScalingRunner(small_experiment(checkpoints=[0.33, 0.5]))

    with pytest.raises(HarnessError):
        runner.solve_fluid()


@pytest.mark.slow
def test_scaled_queue_approaches_the_fluid_path():
    exp = ScalingExperiment(
        heavy_traffic(),
        FIXTURE,
        r_values=[5, 20, 80],
        checkpoints=[0.5, 1.0],
        replications=20,
        seed=2024,
        fluid=FluidConfig(dt=1e-2),
        workers=4,
    )
    report = run_scaling(exp)

    assert report.failures == []
    assert report.verdict()

    for per_r in report.medians("bl_distance").values():
        series = [per_r[r] for r in exp.r_values]

        assert all(b < a for a, b in zip(series, series[1:]))
        assert series[-1] <= 0.6 * series[0]

    assert np.isfinite(report.runtime)
