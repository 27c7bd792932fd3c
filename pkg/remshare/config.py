"""
The configuration language.

A configuration is a list of `key = value` pairs and `name { ... }`
blocks. Values are numbers, double-quoted strings, true, false, null
and bracketed lists; commas between entries are optional and `;`
starts a comment running to the end of the line.

    ; a two-atom heavy-traffic fixture
    seed = 7
    heavy_traffic = true
    theta = [[0.5, 1.0], [1.5, 1.0]]
    arrival { family = "exponential", rate = 1.0 }
    service { family = "exponential" params { mean = 1.0 } }

Every problem is reported with its line, and all of them are
reported together in one ConfigError.
"""

import dataclasses
import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from remshare.errors import ConfigError, ConfigIssue, RemshareError
from remshare.fluid import FluidConfig, PicardConfig
from remshare.harness import ScalingExperiment
from remshare.measure import AtomicMeasure
from remshare.model import (
    ArrivalModel,
    Distribution,
    SystemParameters,
    WeightFunction,
    validate_weight,
)
from remshare.simulator import Job, SimConfig

SCHEMA_VERSION = 1


# == Lexing ==


_TOKEN_RE = re.compile(
    r"""
    (?P<newline>\n)
  | (?P<space>[ \t\r]+)
  | (?P<comment>;[^\n]*)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}\[\]=,])
    """,
    re.VERBOSE,
)

_LITERALS = {"true": True, "false": False, "null": None}


class Token:
    """A lexed token and the line it sits on."""

    __slots__ = ("kind", "value", "line")

    def __init__(self, kind: str, value: Any, line: int):
        self.kind = kind
        self.value = value
        self.line = line

    def __repr__(self):
        return "Token({}, {!r}, line {})".format(self.kind, self.value, self.line)


def lex_config(text: str) -> Tuple[List[Token], List[ConfigIssue]]:
    """Splits configuration text into tokens.

        >>> tokens, issues = lex_config('rate = 1.5 ; comment\\nname = "x"')
        >>> [(t.kind, t.value, t.line) for t in tokens]
        [('name', 'rate', 1), ('=', '=', 1), ('number', 1.5, 1), ('name', 'name', 2), ('=', '=', 2), ('string', 'x', 2)]

    Returns:
        Tuple[List[Token], List[ConfigIssue]] -- The tokens and any lexing problems.
    """

    tokens = []
    issues = []
    line = 1
    pos = 0

    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)

        if match is None:
            if text[pos] == '"':
                issues.append(ConfigIssue(line, "", "unterminated string"))
                end = text.find("\n", pos)
                pos = len(text) if end < 0 else end

            else:
                issues.append(ConfigIssue(line, "", "unexpected character {!r}".format(text[pos])))
                pos += 1

            continue

        kind = match.lastgroup
        raw = match.group()
        pos = match.end()

        if kind == "newline":
            line += 1

        elif kind == "number":
            is_float = any(c in raw for c in ".eE")
            tokens.append(Token("number", float(raw) if is_float else int(raw), line))

        elif kind == "string":
            try:
                tokens.append(Token("string", json.loads(raw), line))

            except ValueError:
                issues.append(ConfigIssue(line, "", "bad escape in string {}".format(raw)))

        elif kind == "name":
            if raw in _LITERALS:
                tokens.append(Token("literal", _LITERALS[raw], line))

            else:
                tokens.append(Token("name", raw, line))

        elif kind == "punct":
            tokens.append(Token(raw, raw, line))

    return tokens, issues


# == Parsing ==


class Entry:
    """One `key = value` or `key { ... }` entry."""

    __slots__ = ("key", "value", "line")

    def __init__(self, key: str, value: Any, line: int):
        self.key = key
        self.value = value
        self.line = line


class Block:
    """The entries between a pair of braces (or of a whole file)."""

    def __init__(self, line: int, entries: Optional[List[Entry]] = None):
        self.line = line
        self.entries = entries or []

    def __repr__(self):
        return "Block(line {}, {} entries)".format(self.line, len(self.entries))


class _SyntaxProblem(Exception):
    def __init__(self, issue: ConfigIssue):
        super().__init__(str(issue))
        self.issue = issue


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.index = 0

    def peek(self) -> Optional[Token]:
        if self.index < len(self.tokens):
            return self.tokens[self.index]

        return None

    def take(self) -> Optional[Token]:
        token = self.peek()
        self.index += 1
        return token

    def last_line(self) -> int:
        return self.tokens[-1].line if self.tokens else 1

    def fail(self, message: str, token: Optional[Token] = None):
        line = token.line if token is not None else self.last_line()
        raise _SyntaxProblem(ConfigIssue(line, "", message))

    def body(self, opened: Optional[Token]) -> Block:
        block = Block(opened.line if opened else 1)

        while True:
            token = self.peek()

            if token is None:
                if opened is not None:
                    self.fail("block opened at line {} is never closed".format(opened.line))

                return block

            if token.kind == "}":
                if opened is None:
                    self.fail("unexpected '}'", token)

                self.take()
                return block

            if token.kind == ",":
                self.take()
                continue

            if token.kind != "name":
                self.fail("expected a key, got {!r}".format(token.value), token)

            self.take()
            after = self.take()

            if after is not None and after.kind == "{":
                block.entries.append(Entry(token.value, self.body(after), token.line))

            elif after is not None and after.kind == "=":
                block.entries.append(Entry(token.value, self.value(), token.line))

            else:
                self.fail("expected '=' or '{{' after {}".format(token.value), after or token)

    def value(self) -> Any:
        token = self.take()

        if token is None:
            self.fail("expected a value at the end of the text")

        if token.kind in ("number", "string", "literal"):
            return token.value

        if token.kind == "{":
            return self.body(token)

        if token.kind == "[":
            items = []

            while True:
                ahead = self.peek()

                if ahead is None:
                    self.fail("list opened at line {} is never closed".format(token.line))

                if ahead.kind == "]":
                    self.take()
                    return items

                if ahead.kind == ",":
                    self.take()
                    continue

                items.append(self.value())

        self.fail("expected a value, got {!r}".format(token.value), token)


def parse_tree(text: str) -> Block:
    """Lexes and parses text into a Block tree.

    Raises:
        ConfigError: Lexing or syntax problems.
    """

    tokens, issues = lex_config(text)

    try:
        tree = _Parser(tokens).body(None)

    except _SyntaxProblem as problem:
        issues.append(problem.issue)
        tree = None

    if issues:
        raise ConfigError(sorted(issues, key=lambda issue: issue.line))

    return tree


# == Schema ==


@dataclass
class ArrivalSection:
    family: str = "exponential"
    rate: float = 1.0
    params: Dict[str, float] = field(default_factory=dict)
    first_interval: str = "equilibrium"
    perturbation: float = 0.0


@dataclass
class ServiceSection:
    family: str = "exponential"
    params: Dict[str, float] = field(default_factory=lambda: {"mean": 1.0})


@dataclass
class WeightSection:
    family: str = "exp_saturation"
    params: Dict[str, float] = field(default_factory=lambda: {"beta": 1.0})


@dataclass
class SimSection:
    horizon: float = 10.0
    depart_threshold: float = 1e-9
    h_max: float = 0.5
    tolerance: float = 1e-10
    h_min: float = 1e-12
    snapshot_times: List[float] = field(default_factory=list)
    initial: List[float] = field(default_factory=list)


@dataclass
class ScalingSection:
    r: List[int] = field(default_factory=lambda: [5, 20, 80])
    replications: int = 20
    checkpoints: List[float] = field(default_factory=lambda: [0.5, 1.0])
    mode: str = "iid"
    workers: int = 1
    rho_override: bool = False


# (section class, key -> kind); kinds are checked by _coerce
_TOP_LEVEL = {"schema_version": "int", "seed": "int", "heavy_traffic": "bool", "theta": "pairs"}

_SECTIONS = {
    "arrival": (
        ArrivalSection,
        {
            "family": "str",
            "rate": "float",
            "params": "params",
            "first_interval": "str",
            "perturbation": "float",
        },
    ),
    "service": (ServiceSection, {"family": "str", "params": "params"}),
    "weight": (WeightSection, {"family": "str", "params": "params"}),
    "sim": (
        SimSection,
        {
            "horizon": "float",
            "depart_threshold": "float",
            "h_max": "float",
            "tolerance": "float",
            "h_min": "float",
            "snapshot_times": "floats",
            "initial": "floats",
        },
    ),
    "fluid": (
        FluidConfig,
        {
            "dt": "float",
            "horizon": "float",
            "quadrature": "int",
            "prune": "float",
            "floor": "float?",
            "coarsen": "float",
            "mean_correction": "bool",
        },
    ),
    "picard": (
        PicardConfig,
        {"window": "float?", "zeta": "float", "max_iterations": "int", "tolerance": "float"},
    ),
    "scaling": (
        ScalingSection,
        {
            "r": "ints",
            "replications": "int",
            "checkpoints": "floats",
            "mode": "str",
            "workers": "int",
            "rho_override": "bool",
        },
    ),
}

SECTION_ORDER = tuple(_SECTIONS)


_INVALID = object()


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _coerce(kind: str, value: Any) -> Any:
    """Converts a parsed value to the kind a key expects, or returns _INVALID."""

    if kind == "float":
        return float(value) if _is_number(value) else _INVALID

    if kind == "float?":
        return None if value is None else _coerce("float", value)

    if kind == "int":
        return value if isinstance(value, int) and not isinstance(value, bool) else _INVALID

    if kind == "bool":
        return value if isinstance(value, bool) else _INVALID

    if kind == "str":
        return value if isinstance(value, str) else _INVALID

    if kind in ("floats", "ints"):
        if not isinstance(value, list):
            return _INVALID

        items = [_coerce(kind[:-1], item) for item in value]
        return _INVALID if any(item is _INVALID for item in items) else items

    if kind == "pairs":
        if not isinstance(value, list):
            return _INVALID

        pairs = []

        for item in value:
            pair = _coerce("floats", item)

            if pair is _INVALID or len(pair) != 2:
                return _INVALID

            pairs.append(pair)

        return pairs

    if kind == "params":
        if not isinstance(value, Block):
            return _INVALID

        params = {}

        for entry in value.entries:
            if not _is_number(entry.value) or entry.key in params:
                return _INVALID

            params[entry.key] = float(entry.value)

        return params

    raise ValueError("Unknown value kind {!r}".format(kind))


_KIND_NAMES = {
    "float": "a number",
    "float?": "a number or null",
    "int": "an integer",
    "bool": "true or false",
    "str": "a string",
    "floats": "a list of numbers",
    "ints": "a list of integers",
    "pairs": "a list of [location, mass] pairs",
    "params": "a block of numeric parameters",
}


def _read_entries(
    block: Block, kinds: Dict[str, str], prefix: str, issues: List[ConfigIssue]
) -> Dict[str, Any]:
    values = {}

    for entry in block.entries:
        path = prefix + entry.key

        if entry.key not in kinds:
            issues.append(ConfigIssue(entry.line, path, "unknown key"))
            continue

        if entry.key in values:
            issues.append(ConfigIssue(entry.line, path, "duplicate key"))
            continue

        value = _coerce(kinds[entry.key], entry.value)

        if value is _INVALID:
            issues.append(ConfigIssue(entry.line, path, "expected " + _KIND_NAMES[kinds[entry.key]]))
            continue

        values[entry.key] = value

    return values


@dataclass
class RunConfig:
    """A fully resolved configuration."""

    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    heavy_traffic: bool = False
    theta: List[List[float]] = field(default_factory=lambda: [[1.0, 1.0]])
    arrival: ArrivalSection = field(default_factory=ArrivalSection)
    service: ServiceSection = field(default_factory=ServiceSection)
    weight: WeightSection = field(default_factory=WeightSection)
    sim: SimSection = field(default_factory=SimSection)
    fluid: FluidConfig = field(default_factory=FluidConfig)
    picard: PicardConfig = field(default_factory=PicardConfig)
    scaling: ScalingSection = field(default_factory=ScalingSection)

    # === model objects ===

    def weight_function(self) -> WeightFunction:
        return WeightFunction(self.weight.family, **self.weight.params)

    def service_distribution(self) -> Distribution:
        return Distribution(self.service.family, **self.service.params)

    def arrival_model(self) -> ArrivalModel:
        return ArrivalModel.renewal(
            self.arrival.rate,
            self.arrival.family,
            self.arrival.first_interval,
            **self.arrival.params
        )

    def system(self) -> SystemParameters:
        return SystemParameters(
            self.arrival_model(),
            self.service_distribution(),
            self.weight_function(),
            self.heavy_traffic,
        )

    def theta_measure(self) -> AtomicMeasure:
        return AtomicMeasure(tuple(pair) for pair in self.theta)

    def sim_config(self) -> SimConfig:
        sim = self.sim
        return SimConfig(
            horizon=sim.horizon,
            depart_threshold=sim.depart_threshold,
            h_max=sim.h_max,
            h_min=sim.h_min,
            tolerance=sim.tolerance,
            seed=self.seed,
            snapshot_times=tuple(sim.snapshot_times),
        )

    def initial_jobs(self) -> List[Job]:
        return [Job(i, 0.0, nu, initial=True) for i, nu in enumerate(self.sim.initial)]

    def experiment(self) -> ScalingExperiment:
        """The scaling experiment; it runs at rho = 1 unless scaling.rho_override is set.

        Raises:
            HarnessError: rho is off 1 without the override, or a bad scaling block.
        """

        return self._experiment(not self.scaling.rho_override)

    def _experiment(self, heavy_traffic: bool) -> ScalingExperiment:
        scaling = self.scaling
        return ScalingExperiment(
            params=self.system(),
            theta=self.theta_measure(),
            r_values=scaling.r,
            checkpoints=scaling.checkpoints,
            replications=scaling.replications,
            seed=self.seed,
            fluid=self.fluid,
            sim=self.sim_config(),
            mode=scaling.mode,
            workers=scaling.workers,
            perturbation=self.arrival.perturbation,
            heavy_traffic=heavy_traffic,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)

    # === serialization ===

    def to_text(self) -> str:
        """The configuration in its own syntax, every default written out.

            >>> parse_config(RunConfig().to_text()) == RunConfig()
            True
        """

        lines = ["schema_version = {}".format(self.schema_version)]

        for key, kind in _TOP_LEVEL.items():
            if key != "schema_version":
                lines.append("{} = {}".format(key, format_value(getattr(self, key))))

        for name in SECTION_ORDER:
            section = getattr(self, name)
            lines.append("")
            lines.append(name + " {")

            for key, kind in _SECTIONS[name][1].items():
                value = getattr(section, key)

                if kind == "params":
                    inner = " ".join(
                        "{} = {}".format(k, format_value(v)) for k, v in value.items()
                    )
                    lines.append("    params {{ {} }}".format(inner) if inner else "    params { }")

                else:
                    lines.append("    {} = {}".format(key, format_value(value)))

            lines.append("}")

        return "\n".join(lines) + "\n"


def format_value(value: Any) -> str:
    """Writes one value in configuration syntax; floats round-trip exactly.

        >>> format_value([0.1, 2, True, None, "iid"])
        '[0.1, 2, true, null, "iid"]'
    """

    if isinstance(value, bool):
        return "true" if value else "false"

    if value is None:
        return "null"

    if isinstance(value, float):
        return repr(value)

    if isinstance(value, int):
        return str(value)

    if isinstance(value, str):
        return json.dumps(value)

    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(item) for item in value) + "]"

    raise TypeError("Cannot write {!r} as a configuration value".format(value))


def _build_section(name: str, entry: Optional[Entry], issues: List[ConfigIssue]):
    cls, kinds = _SECTIONS[name]

    if entry is None:
        return cls()

    if not isinstance(entry.value, Block):
        issues.append(ConfigIssue(entry.line, name, "expected a block"))
        return cls()

    values = _read_entries(entry.value, kinds, name + ".", issues)

    # a new family without params starts from that family's defaults
    if "params" in kinds and "params" not in values and values.get("family", cls().family) != cls().family:
        values["params"] = {}

    try:
        return cls(**values)

    except RemshareError as err:
        issues.append(ConfigIssue(entry.line, name, str(err)))
        return cls()


def _validate_model(config: RunConfig, lines: Dict[str, int], issues: List[ConfigIssue]):
    """Runs the model-level validators, anchoring problems at their blocks."""

    def check(name: str, build):
        try:
            return build()

        except RemshareError as err:
            issues.append(ConfigIssue(lines.get(name, 0), name, str(err)))
            return None

    weight = check("weight", config.weight_function)

    if weight is not None:
        if check("weight", lambda: validate_weight(weight)) is None:
            weight = None

        else:
            config.weight.params = dict(weight.params)

    service = check("service", config.service_distribution)

    if service is not None:
        config.service.params = dict(service.params)

    arrival = check("arrival", config.arrival_model)
    theta = check("theta", config.theta_measure)
    sim = check("sim", config.sim_config)

    if weight is None or service is None or arrival is None:
        return

    if check("heavy_traffic", config.system) is not None and theta is not None and sim is not None:
        # rho is checked when an experiment is actually built
        check("scaling", lambda: config._experiment(False))


def parse_config(text: str) -> RunConfig:
    """Parses and validates a configuration text.

        >>> cfg = parse_config('seed = 3\\nweight { family = "saturating" }')
        >>> cfg.seed, cfg.weight.params, cfg.fluid.dt
        (3, {'scale': 1.0}, 0.001)
        >>> parse_config('weight { family = "constant" }')
        Traceback (most recent call last):
            ...
        remshare.errors.ConfigError: line 1: weight: w(0) = 1.0 violates w(0) = 0 at x=0

    Raises:
        ConfigError: Every lexing, syntax, schema and model problem found.

    Returns:
        RunConfig -- With every default materialized.
    """

    tree = parse_tree(text)
    issues = []
    scalars = Block(1, [entry for entry in tree.entries if entry.key not in _SECTIONS])
    top = _read_entries(scalars, _TOP_LEVEL, "", issues)

    sections = {}
    lines = {}

    for entry in tree.entries:
        if entry.key not in _SECTIONS:
            continue

        if entry.key in sections:
            issues.append(ConfigIssue(entry.line, entry.key, "duplicate block"))
            continue

        sections[entry.key] = entry
        lines[entry.key] = entry.line

    for entry in tree.entries:
        if entry.key in _TOP_LEVEL:
            lines[entry.key] = entry.line

    if top.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        issues.append(
            ConfigIssue(
                lines["schema_version"],
                "schema_version",
                "unsupported version {}, expected {}".format(top["schema_version"], SCHEMA_VERSION),
            )
        )

    if not 0 <= top.get("seed", 0) < 2 ** 64:
        issues.append(ConfigIssue(lines["seed"], "seed", "expected an unsigned 64-bit integer"))
        del top["seed"]

    config = RunConfig(
        **top, **{name: _build_section(name, sections.get(name), issues) for name in SECTION_ORDER}
    )

    lines.setdefault("heavy_traffic", lines.get("arrival", 0))
    _validate_model(config, lines, issues)

    if issues:
        raise ConfigError(sorted(issues, key=lambda issue: issue.line))

    return config
