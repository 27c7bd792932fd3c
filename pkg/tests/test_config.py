import pytest

from remshare.config import RunConfig, format_value, lex_config, parse_config
from remshare.errors import ConfigError, HarnessError

FIXTURE = """
; M/M-type heavy-traffic fixture
seed = 7
heavy_traffic = true
theta = [[0.5, 1.0], [1.5, 1.0]]

arrival { family = "exponential", rate = 1.0 }
service { family = "exponential" params { mean = 1.0 } }
weight { family = "exp_saturation" params { beta = 1.0 } }

sim {
    horizon = 20.0
    snapshot_times = [5, 10.5]
    initial = [1.0, 2.0]
}

fluid { dt = 0.01 horizon = 2.0 floor = null }
picard { zeta = 0.5 max_iterations = 30 }
scaling { r = [5, 20] replications = 4 checkpoints = [0.5, 1.0] mode = "quantile" }
"""


def issues_of(text):
    with pytest.raises(ConfigError) as caught:
        parse_config(text)

    return caught.value.issues


def test_defaults_are_materialized():
    cfg = parse_config("")

    assert cfg == RunConfig()
    assert cfg.weight.params == {"beta": 1.0}
    assert cfg.service.params == {"mean": 1.0}
    assert cfg.fluid.dt == 0.001
    assert cfg.scaling.r == [5, 20, 80]


def test_fixture():
    cfg = parse_config(FIXTURE)

    assert cfg.seed == 7
    assert cfg.system().rho == 1.0
    assert cfg.theta_measure().workload() == 2.0
    assert cfg.sim_config().snapshot_times == (5.0, 10.5)
    assert [job.requirement for job in cfg.initial_jobs()] == [1.0, 2.0]
    assert cfg.picard.max_iterations == 30

    exp = cfg.experiment()
    assert exp.r_values == [5, 20]
    assert exp.mode == "quantile"
    assert exp.fluid.dt == 0.01


def test_round_trip():
    cfg = parse_config(FIXTURE)
    assert parse_config(cfg.to_text()) == cfg

    seeded = cfg.with_seed(2 ** 64 - 1)
    assert parse_config(seeded.to_text()).seed == 2 ** 64 - 1


def test_floats_round_trip_exactly():
    cfg = parse_config("sim { horizon = 0.1 }\nfluid { dt = 0.0001 horizon = 0.30000000000000004 }")
    back = parse_config(cfg.to_text())

    assert back.sim.horizon == 0.1
    assert back.fluid.horizon == 0.30000000000000004


def test_new_family_starts_from_its_own_defaults():
    cfg = parse_config('weight { family = "saturating" }')
    assert cfg.weight.params == {"scale": 1.0}

    [issue] = issues_of('service { family = "deterministic" }')
    assert issue.path == "service"
    assert "value" in issue.message

    cfg = parse_config('service { family = "deterministic" params { value = 2 } }')
    assert cfg.service_distribution().mean == 2.0


def test_unknown_key():
    [issue] = issues_of("arrival { rat = 1 }")

    assert (issue.line, issue.path, issue.message) == (1, "arrival.rat", "unknown key")


def test_constant_weight_rejected():
    [issue] = issues_of('\nweight { family = "constant" }')

    assert issue.line == 2
    assert issue.path == "weight"
    assert "w(0) = 0" in issue.message


def test_every_issue_is_reported():
    issues = issues_of('seed = "x"\nsim { horizon = -1 }\nbogus = 3\nscaling { mode = 4 }')

    assert [issue.line for issue in issues] == [1, 2, 3, 4]
    assert [issue.path for issue in issues] == ["seed", "sim", "bogus", "scaling.mode"]


def test_heavy_traffic_checked():
    [issue] = issues_of("heavy_traffic = true\narrival { rate = 2.0 }")

    assert issue.path == "heavy_traffic"
    assert issue.line == 1


def test_scaling_needs_rho_one():
    cfg = parse_config("theta = [[1.0, 1.0]]\narrival { rate = 0.5 }\n")

    assert cfg.scaling.rho_override is False

    with pytest.raises(HarnessError, match="rho = 1"):
        cfg.experiment()

    cfg = parse_config("theta = [[1.0, 1.0]]\narrival { rate = 0.5 }\nscaling { rho_override = true }\n")
    exp = cfg.experiment()

    assert exp.heavy_traffic is False
    assert exp.params.rho == 0.5
    assert parse_config(cfg.to_text()).scaling.rho_override is True


def test_duplicates_rejected():
    issues = issues_of("seed = 1\nseed = 2\nsim { }\nsim { }")

    assert [(issue.line, issue.message) for issue in issues] == [
        (2, "duplicate key"),
        (4, "duplicate block"),
    ]


def test_bad_values():
    [issue] = issues_of("theta = [[1, 2], [3]]")
    assert "pairs" in issue.message

    [issue] = issues_of("seed = -1")
    assert issue.path == "seed"

    [issue] = issues_of("schema_version = 2")
    assert "unsupported version" in issue.message


def test_syntax_errors():
    [issue] = issues_of("sim {\n  horizon = 1.0\n")
    assert "never closed" in issue.message

    [issue] = issues_of("seed = 1 }")
    assert issue.line == 1

    issues = issues_of('name = "open\nseed = @')
    assert [issue.line for issue in issues] == [1, 2, 2]
    assert issues[0].message == "unterminated string"
    assert issues[1].message == "unexpected character '@'"


def test_lexer_tracks_lines():
    tokens, issues = lex_config("a = [1, 2.5e3]\n; note\nb { c = true }")

    assert issues == []
    assert [token.line for token in tokens if token.kind == "name"] == [1, 3, 3]
    assert [token.value for token in tokens if token.kind == "number"] == [1, 2500.0]


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value([[1.0, 2.0]]) == "[[1.0, 2.0]]"
    assert format_value('say "hi"') == '"say \\"hi\\""'

    with pytest.raises(TypeError):
        format_value({"a": 1})
