import numpy as np
import pytest

from remshare.errors import FloorViolationError, FluidError, NonConvergenceError
from remshare.fluid import (
    FluidConfig,
    FluidPath,
    FluidSolver,
    PicardConfig,
    PicardSolver,
    dynamics_defect,
    picard_residual,
    solve_direct,
    workload_series,
)
from remshare.measure import AtomicMeasure, path_distance
from remshare.model import TEST_PANEL, ArrivalModel, Distribution, SystemParameters, WeightFunction


def system(rate=0.0, service=None):
    return SystemParameters(
        ArrivalModel.renewal(rate),
        service or Distribution("exponential", mean=1.0),
        WeightFunction("exp_saturation"),
    )


TWO_ATOMS = AtomicMeasure([(0.5, 1), (1.5, 1)])


def test_config_checks():
    with pytest.raises(FluidError):
        FluidConfig(dt=0)

    with pytest.raises(FluidError):
        FluidConfig(dt=0.3, horizon=1.0).steps()

    with pytest.raises(FluidError):
        PicardConfig(zeta=1.0)

    with pytest.raises(FluidError):
        PicardConfig(max_iterations=-1)


def test_path_checks():
    with pytest.raises(FluidError):
        FluidPath([0.0, 0.0], [TWO_ATOMS, TWO_ATOMS])

    with pytest.raises(FluidError):
        FluidPath([0.0, 1.0], [TWO_ATOMS])

    with pytest.raises(FluidError):
        FluidPath.constant(TWO_ATOMS, [0.0, 1.0]).at(0.5)


def test_zero_horizon():
    path = solve_direct(TWO_ATOMS, system(), FluidConfig(horizon=0.0))

    assert len(path) == 1
    assert path.start == TWO_ATOMS
    assert workload_series(path).tolist() == [2.0]
    assert sorted(picard_residual(path, system()).values()) == [0.0, 0.0, 0.0]


def test_drain_without_arrivals():
    theta = AtomicMeasure([(2, 1), (4, 1)])
    path = solve_direct(theta, system(), FluidConfig(dt=1e-2, horizon=1.0))
    slopes = np.diff(path.workload_series()) / np.diff(path.times)

    assert np.all(np.abs(slopes + 1) <= 1e-6)


def test_single_atom_marches_until_the_floor():
    cfg = FluidConfig(dt=1e-2, horizon=1.0, floor=0.3)

    with pytest.raises(FloorViolationError) as caught:
        solve_direct(AtomicMeasure([(0.5, 1)]), system(), cfg)

    err = caught.value
    # w(x) < 0.3 once x < -log(0.7), a little past t = 0.14
    assert 0.1 < err.time < 0.2
    assert err.path is not None
    assert err.path.times[-1] <= err.time

    locations = [measure.atoms[0][0] for measure in err.path.measures]
    assert np.allclose(np.diff(locations), -1e-2, atol=1e-9)


def test_theta_below_the_floor():
    with pytest.raises(FloorViolationError):
        solve_direct(TWO_ATOMS, system(), FluidConfig(floor=10.0))


def test_workload_is_conserved_in_heavy_traffic():
    path = solve_direct(TWO_ATOMS, system(rate=1.0), FluidConfig(dt=1e-2, horizon=1.0))
    assert np.max(np.abs(path.workload_series() - 2.0)) <= 1e-6


@pytest.mark.slow
def test_workload_is_conserved_on_a_fine_grid():
    cfg = FluidConfig(dt=1e-3, horizon=5.0, quadrature=200)
    path = solve_direct(TWO_ATOMS, system(rate=1.0), cfg)

    assert np.max(np.abs(path.workload_series() - 2.0)) <= 1e-3


def test_source_accounting_without_transport():
    service = Distribution("exponential", mean=0.5)
    cfg = FluidConfig(dt=0.1, horizon=1.0, coarsen=0.0, transport=False)
    path = solve_direct(TWO_ATOMS, system(rate=2.0, service=service), cfg)

    assert path.terminal.total_mass() == pytest.approx(2.0 + 2.0, rel=1e-9)
    assert path.terminal.workload() == pytest.approx(2.0 + 1.0, rel=1e-9)


def _residuals(dt):
    params = system(rate=1.0, service=Distribution("deterministic", value=1.0))
    cfg = FluidConfig(dt=dt, horizon=1.0, coarsen=0.0)
    return params, solve_direct(TWO_ATOMS, params, cfg)


def test_residual_halves_with_the_step():
    params = system(rate=1.0)
    residuals = []

    for dt in (0.02, 0.01, 0.005):
        path = solve_direct(TWO_ATOMS, params, FluidConfig(dt=dt, horizon=1.0))
        residuals.append(picard_residual(path, params))

    for coarse, fine in zip(residuals, residuals[1:]):
        for name in coarse:
            assert fine[name] <= 0.6 * coarse[name]


def test_dynamics_defect_shrinks_with_the_step():
    g = TEST_PANEL[0]
    defects = []

    for dt in (0.02, 0.01):
        params, path = _residuals(dt)
        defects.append(dynamics_defect(path, params, g))

    assert defects[1] <= 0.6 * defects[0]


def test_corrupted_path_is_flagged():
    params, path = _residuals(0.01)
    residual = picard_residual(path, params)

    k = len(path) // 2
    measures = list(path.measures)
    measures[k] = measures[k].scale_mass(2.0)
    corrupted = picard_residual(FluidPath(path.times, measures), params)

    for g in TEST_PANEL:
        gap = path.measures[k].integrate(g)
        assert corrupted[g.name] >= gap - residual[g.name]


def picard(floor=0.4, horizon=1.0, rate=0.0, **picard_args):
    cfg = FluidConfig(dt=1e-2, horizon=horizon, floor=floor)
    return PicardSolver(system(rate), cfg, PicardConfig(**picard_args))


def test_window_sizing():
    solver = picard()

    assert solver.window_bound(0.4) == pytest.approx(0.1)
    assert solver.window_steps(0.4) == 10

    with pytest.raises(FluidError):
        picard(window=0.5).window_steps(0.4)

    with pytest.raises(FluidError):
        picard(floor=0.01).window_steps(0.01)


def test_default_floor_spans_a_step():
    solver = picard(floor=None, horizon=0.1)

    # 2 ||w|| dt / zeta outweighs 1e-3 <w, theta>
    assert solver.floor_for(TWO_ATOMS) == pytest.approx(0.04)

    path, diagnostics = solver.picard_iterate(TWO_ATOMS)

    assert diagnostics["window_steps"] == 1
    assert len(diagnostics["windows"]) == 10
    assert path.times[-1] == pytest.approx(0.1)

    crowded = AtomicMeasure([(5, 100)])
    assert solver.floor_for(crowded) == pytest.approx(1e-3 * solver.fluid.denominator(crowded))


def test_fixed_point_of_the_map():
    solver = picard(horizon=0.1)
    theta = AtomicMeasure([(1, 1), (3, 1)])
    direct = FluidSolver(solver.params, solver.cfg).solve_direct(theta)

    assert path_distance(solver.picard_apply(direct), direct) <= 1e-4


def test_second_application_is_closer():
    solver = picard(horizon=0.1)
    theta = AtomicMeasure([(3, 1)])
    direct = FluidSolver(solver.params, solver.cfg).solve_direct(theta)

    once = solver.picard_apply(FluidPath.constant(theta, direct.times))
    twice = solver.picard_apply(once)

    assert path_distance(once, direct) > 0
    assert path_distance(twice, direct) < path_distance(once, direct)


def _random_path(rng, times):
    measures = []

    for _ in times:
        locations = rng.uniform(0.5, 4.0, size=3)
        masses = rng.uniform(0.5, 1.5, size=3)
        measures.append(AtomicMeasure(zip(locations, masses)))

    return FluidPath(times, measures)


def test_map_contracts_on_short_windows():
    solver = picard(horizon=0.1, zeta=0.5)
    theta = AtomicMeasure([(1, 1), (2, 1)])
    times = solver.cfg.grid()
    rng = np.random.default_rng(17)

    for _ in range(20):
        first, second = _random_path(rng, times), _random_path(rng, times)
        images = (solver.picard_apply(first, theta, 0.4), solver.picard_apply(second, theta, 0.4))

        ratio = path_distance(*images) / path_distance(first, second)
        assert ratio <= 0.75


@pytest.mark.parametrize(
    "theta", [AtomicMeasure([(3, 1)]), AtomicMeasure([(1, 1), (3, 1)])], ids=["one", "two"]
)
def test_picard_matches_direct(theta):
    solver = picard()
    path, diagnostics = solver.picard_iterate(theta)
    direct = FluidSolver(solver.params, solver.cfg).solve_direct(theta)

    assert path_distance(path, direct) <= 5e-3
    assert len(diagnostics["windows"]) == 10
    assert diagnostics["window_steps"] == 10

    for window in diagnostics["windows"]:
        assert window["distances"][-1] < solver.pcfg.tolerance
        assert all(ratio <= 0.75 for ratio in window["ratios"])


def test_picard_with_zero_horizon_stops_at_once():
    path, diagnostics = picard(horizon=0.0).picard_iterate(TWO_ATOMS)

    assert len(path) == 1
    assert diagnostics["iterations"] == 1


def test_picard_gives_up():
    with pytest.raises(NonConvergenceError) as caught:
        picard(max_iterations=0).picard_iterate(TWO_ATOMS)

    assert caught.value.diagnostics["iterations"] == 0


def test_path_files(tmp_path):
    path = solve_direct(TWO_ATOMS, system(), FluidConfig(dt=0.25, horizon=0.5))
    written = path.write(str(tmp_path))

    assert [p.rsplit("/", 1)[-1] for p in written] == ["path.csv", "workload.csv"]
    assert (tmp_path / "workload.csv").read_text().splitlines()[0] == "time,workload"
