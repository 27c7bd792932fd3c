"""
Primitive ingredients of the queueing system.

Weight functions, service-requirement and inter-arrival laws,
delayed-renewal arrivals, traffic parameters and the panel of
test functions g with g(0) = g'(0) = 0 used to check fluid dynamics.
"""

import logging
import math
from typing import Callable, Iterator, List, Optional, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from remshare.errors import ModelError, ParameterError, WeightValidationError
from remshare.measure import AtomicMeasure, PairingFunction

logger = logging.getLogger(__name__)

HEAVY_TRAFFIC_TOLERANCE = 1e-12


def _check_params(kind: str, family: str, given: dict, allowed: dict) -> dict:
    """Fills defaults and rejects unknown parameter names."""

    unknown = sorted(set(given) - set(allowed))

    if unknown:
        raise ParameterError(
            "Unknown {} parameter(s) for family {!r}: {}".format(kind, family, ", ".join(unknown))
        )

    params = dict(allowed)
    params.update(given)

    missing = sorted(name for name, value in params.items() if value is None)

    if missing:
        raise ParameterError(
            "Missing {} parameter(s) for family {!r}: {}".format(kind, family, ", ".join(missing))
        )

    return {name: float(value) for name, value in params.items()}


# == Weight functions ==


_WEIGHT_PARAMS = {
    "saturating": {"scale": 1.0},
    "exp_saturation": {"beta": 1.0},
    "truncated_linear": {"cap": 100.0},
    "constant": {"level": 1.0},
}

WEIGHT_FAMILIES = tuple(_WEIGHT_PARAMS)


class WeightFunction(PairingFunction):
    """
    The weight w(.) of the sharing rule c_n = w(R_n) / sum_k w(R_k).

    Families:
        saturating        w(x) = x / (scale + x)
        exp_saturation    w(x) = 1 - exp(-beta x)
        truncated_linear  w(x) = min(x, cap); only weakly increasing past cap
        constant          w(x) = level (classical PS; fails validation)

        >>> w = WeightFunction("truncated_linear", cap=8)
        >>> w(np.array([2.0, 6.0, 10.0])).tolist()
        [2.0, 6.0, 8.0]
        >>> w.sup_bound
        8.0
    """

    def __init__(self, family: str, **params):
        """
        Arguments:
            family {str} -- One of WEIGHT_FAMILIES.

        Keyword Arguments:
            params -- Family parameters (see the class docstring).

        Raises:
            ParameterError: Unknown family, unknown or invalid parameters.
        """

        if family not in _WEIGHT_PARAMS:
            raise ParameterError(
                "Unknown weight family {!r}; expected one of {}".format(family, WEIGHT_FAMILIES)
            )

        self.family = family
        self.params = _check_params("weight", family, params, _WEIGHT_PARAMS[family])

        # past this point w' > 0 is not asserted
        self.strict_limit = math.inf

        if family == "saturating":
            scale = self._positive("scale")
            evaluate = lambda x: _arr(x) / (scale + _arr(x))
            derivative = lambda x: scale / (scale + _arr(x)) ** 2
            bounds = (1.0, 1.0 / scale)

        elif family == "exp_saturation":
            beta = self._positive("beta")
            evaluate = lambda x: -np.expm1(-beta * _arr(x))
            derivative = lambda x: beta * np.exp(-beta * _arr(x))
            bounds = (1.0, beta)

        elif family == "truncated_linear":
            cap = self._positive("cap")
            evaluate = lambda x: np.minimum(_arr(x), cap)
            derivative = lambda x: np.where(_arr(x) < cap, 1.0, 0.0)
            bounds = (cap, 1.0)
            self.strict_limit = cap

        else:
            level = self.params["level"]
            evaluate = lambda x: np.full_like(_arr(x), level)
            derivative = lambda x: np.zeros_like(_arr(x))
            bounds = (abs(level), 0.0)

        super().__init__(evaluate, derivative, bounds[0], bounds[1], name="w_" + family)

    def _positive(self, name: str) -> float:
        value = self.params[name]

        if not value > 0:
            raise ParameterError(
                "Weight parameter {} must be positive, got {}".format(name, value)
            )

        return value

    def __repr__(self):
        return "WeightFunction({!r}, {})".format(
            self.family, ", ".join("{}={}".format(k, v) for k, v in self.params.items())
        )


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class WeightValidation:
    """The outcome of validate_weight."""

    def __init__(
        self,
        weight: WeightFunction,
        grid_max: float,
        min_derivative: float,
        headroom: float,
        flags: List[str],
    ):
        self.weight = weight
        self.grid_max = grid_max
        self.sup_bound = weight.sup_bound
        self.min_derivative = min_derivative
        self.headroom = headroom
        self.worst_margin = min(min_derivative, headroom)
        self.flags = flags
        self.passed = True

    def __repr__(self):
        return "WeightValidation(passed, sup={}, worst_margin={:.3g}, flags={})".format(
            self.sup_bound, self.worst_margin, self.flags
        )


def validate_weight(w: WeightFunction, grid_max: float = 50.0, n_points: int = 2001) -> WeightValidation:
    """Checks w(0) = 0 exactly, w' > 0 and 0 <= w <= ||w||_inf on a grid.

        >>> validate_weight(WeightFunction("exp_saturation")).sup_bound
        1.0
        >>> validate_weight(WeightFunction("constant"))
        Traceback (most recent call last):
            ...
        remshare.errors.WeightValidationError: w(0) = 1.0 violates w(0) = 0 at x=0

    Arguments:
        w {WeightFunction} -- The weight to check.

    Keyword Arguments:
        grid_max {float} -- Right end of the validation grid. (default: {50.0})
        n_points {int} -- Number of grid points, >= 2. (default: {2001})

    Raises:
        WeightValidationError: The first violated property, naming the point.

    Returns:
        WeightValidation -- The report (passed, sup bound, worst margin, flags).
    """

    if not grid_max > 0 or n_points < 2:
        raise ModelError(
            "Validation grid needs grid_max > 0 and n_points >= 2, got {} and {}".format(
                grid_max, n_points
            )
        )

    at_zero = float(w(np.zeros(1))[0])

    if at_zero != 0.0:
        raise WeightValidationError(
            "w(0) = {} violates w(0) = 0 at x=0".format(at_zero), 0.0
        )

    grid = np.linspace(0.0, grid_max, n_points)
    values = np.asarray(w(grid), dtype=float)
    slopes = np.asarray(w.derivative(grid), dtype=float)
    strict = grid < w.strict_limit

    bad = np.flatnonzero(strict & ~(slopes > 0))

    if bad.size:
        x = float(grid[bad[0]])
        raise WeightValidationError(
            "w'({}) = {} violates w' > 0 at x={}".format(x, float(slopes[bad[0]]), x), x
        )

    bad = np.flatnonzero((values < 0) | (values > w.sup_bound * (1 + 1e-12)))

    if bad.size:
        x = float(grid[bad[0]])
        raise WeightValidationError(
            "w({}) = {} leaves [0, {}] at x={}".format(x, float(values[bad[0]]), w.sup_bound, x), x
        )

    flags = []

    if grid_max >= w.strict_limit:
        flags.append(
            "{} is only weakly increasing beyond {}; admitted as a test fixture".format(
                w.family, w.strict_limit
            )
        )
        logger.warning(flags[-1])

    min_derivative = float(np.min(slopes[strict])) if np.any(strict) else 0.0
    headroom = float(np.min(w.sup_bound - values))

    return WeightValidation(w, grid_max, min_derivative, headroom, flags)


# == Distributions ==


_DISTRIBUTION_PARAMS = {
    "exponential": {"mean": None},
    "deterministic": {"value": None},
    "uniform": {"low": None, "high": None},
    "hyperexponential": {"p": None, "mean1": None, "mean2": None},
}

DISTRIBUTION_FAMILIES = tuple(_DISTRIBUTION_PARAMS)


class Sampler:
    """A distribution bound to its own RNG stream. Not to be shared across threads."""

    def __init__(self, distribution: "Distribution", seed):
        self.distribution = distribution
        self.rng = np.random.default_rng(seed)

    def draw(self) -> float:
        return float(self.distribution.sample(self.rng))

    def draws(self, n: int) -> np.ndarray:
        return self.distribution.sample(self.rng, n)


class Distribution:
    """
    A law on [0, inf) with finite positive mean, used both for service
    requirements and for inter-arrival times.

        >>> Distribution("uniform", low=0, high=2).mean
        1.0
        >>> float(Distribution("exponential", mean=1).quantile(0.5)) == math.log(2)
        True
    """

    def __init__(self, family: str, **params):
        """
        Arguments:
            family {str} -- One of DISTRIBUTION_FAMILIES.

        Keyword Arguments:
            params --   exponential(mean), deterministic(value), uniform(low, high),
                        hyperexponential(p, mean1, mean2).

        Raises:
            ParameterError: Unknown family or invalid parameters.
        """

        if family not in _DISTRIBUTION_PARAMS:
            raise ParameterError(
                "Unknown distribution family {!r}; expected one of {}".format(
                    family, DISTRIBUTION_FAMILIES
                )
            )

        self.family = family
        self.params = _check_params("distribution", family, params, _DISTRIBUTION_PARAMS[family])
        p = self.params

        if family == "exponential":
            self._require(p["mean"] > 0, "mean must be positive")
            self.mean = p["mean"]

        elif family == "deterministic":
            self._require(p["value"] > 0, "value must be positive")
            self.mean = p["value"]

        elif family == "uniform":
            self._require(0 <= p["low"] < p["high"], "need 0 <= low < high")
            self.mean = 0.5 * (p["low"] + p["high"])

        else:
            self._require(0 < p["p"] < 1, "phase probability p must lie in (0, 1)")
            self._require(p["mean1"] > 0 and p["mean2"] > 0, "phase means must be positive")
            self.mean = p["p"] * p["mean1"] + (1 - p["p"]) * p["mean2"]

    def _require(self, condition: bool, message: str):
        if not condition:
            raise ParameterError("{} distribution: {} (got {})".format(self.family, message, self.params))

    def __repr__(self):
        return "Distribution({!r}, {})".format(
            self.family, ", ".join("{}={}".format(k, v) for k, v in self.params.items())
        )

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented

        return self.family == other.family and self.params == other.params

    def quantile(self, prob):
        """The quantile function F^{-1}, vectorized over prob in [0, 1)."""

        prob = _arr(prob)
        p = self.params

        if self.family == "exponential":
            return -p["mean"] * np.log1p(-prob)

        if self.family == "deterministic":
            return np.full_like(prob, p["value"])

        if self.family == "uniform":
            return p["low"] + prob * (p["high"] - p["low"])

        flat = np.array([self._hyper_quantile(float(q)) for q in prob.ravel()])
        return flat.reshape(prob.shape)

    def _hyper_quantile(self, prob: float) -> float:
        if prob <= 0:
            return 0.0

        p, m1, m2 = self.params["p"], self.params["mean1"], self.params["mean2"]
        survival = lambda x: p * math.exp(-x / m1) + (1 - p) * math.exp(-x / m2) - (1 - prob)
        upper = -max(m1, m2) * math.log1p(-prob) * 1.01
        return brentq(survival, 0.0, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def bin_means(self, n: int) -> np.ndarray:
        """E[X | X in bin j] for the n bins of probability 1/n each.

        Their average is the mean exactly.

            >>> Distribution("uniform", low=0, high=4).bin_means(2).tolist()
            [1.0, 3.0]
            >>> round(float(np.mean(Distribution("exponential", mean=2).bin_means(50))), 12)
            2.0
        """

        p = self.params

        if self.family == "deterministic":
            return np.full(n, p["value"])

        if self.family == "uniform":
            return self.quantile((np.arange(n) + 0.5) / n)

        if self.family == "exponential":
            phases = [(1.0, p["mean"])]

        else:
            phases = [(p["p"], p["mean1"]), (1 - p["p"], p["mean2"])]

        # E[X; X > x] = sum_i p_i (x + m_i) exp(-x / m_i); the last bin is unbounded
        edges = self.quantile(np.arange(n) / n)
        tail = sum(weight * (edges + mean) * np.exp(-edges / mean) for weight, mean in phases)
        tail = np.append(tail, 0.0)
        return n * (tail[:-1] - tail[1:])

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        """Draws from the law with the given numpy Generator."""

        p = self.params

        if self.family == "exponential":
            return rng.exponential(p["mean"], size)

        if self.family == "deterministic":
            return p["value"] if size is None else np.full(size, p["value"])

        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], size)

        first = rng.random(size) < p["p"]
        draws = rng.exponential(1.0, size)
        return draws * np.where(first, p["mean1"], p["mean2"])

    def sampler(self, seed) -> Sampler:
        """A seeded sampler owning its RNG stream.

            >>> d = Distribution("exponential", mean=2)
            >>> d.sampler(5).draws(3).tolist() == d.sampler(5).draws(3).tolist()
            True
        """

        return Sampler(self, seed)

    def expectation(self, g: Callable) -> float:
        """<g, nu> by adaptive quadrature (exact for deterministic laws).

            >>> round(Distribution("exponential", mean=1).expectation(lambda x: x), 10)
            1.0
        """

        p = self.params
        scalar = lambda x: float(np.asarray(g(np.asarray(x, dtype=float))))

        if self.family == "deterministic":
            return scalar(p["value"])

        if self.family == "uniform":
            width = p["high"] - p["low"]
            value, _ = quad(scalar, p["low"], p["high"], limit=200)
            return value / width

        if self.family == "exponential":
            phases = [(1.0, p["mean"])]

        else:
            phases = [(p["p"], p["mean1"]), (1 - p["p"], p["mean2"])]

        total = 0.0

        for weight, mean in phases:
            value, _ = quad(lambda x: scalar(x) * math.exp(-x / mean) / mean, 0, np.inf, limit=200)
            total += weight * value

        return total

    def scaled(self, factor: float) -> "Distribution":
        """The law of factor * X."""

        if not factor > 0:
            raise ParameterError("Scaling factor must be positive, got {}".format(factor))

        p = self.params

        if self.family == "exponential":
            return Distribution("exponential", mean=p["mean"] * factor)

        if self.family == "deterministic":
            return Distribution("deterministic", value=p["value"] * factor)

        if self.family == "uniform":
            return Distribution("uniform", low=p["low"] * factor, high=p["high"] * factor)

        return Distribution(
            "hyperexponential", p=p["p"], mean1=p["mean1"] * factor, mean2=p["mean2"] * factor
        )

    def equilibrium(self) -> Optional["Distribution"]:
        """The stationary-excess law, when it is available in closed form.

            >>> Distribution("deterministic", value=2).equilibrium()
            Distribution('uniform', low=0.0, high=2.0)
            >>> print(Distribution("uniform", low=1, high=2).equilibrium())
            None
        """

        p = self.params

        if self.family == "exponential":
            return self

        if self.family == "deterministic":
            return Distribution("uniform", low=0.0, high=p["value"])

        if self.family == "hyperexponential":
            weight = p["p"] * p["mean1"] / self.mean
            return Distribution("hyperexponential", p=weight, mean1=p["mean1"], mean2=p["mean2"])

        return None


def quantile_atoms(nu: Distribution, n: int) -> AtomicMeasure:
    """n atoms of mass 1/n at F^{-1}((j - 1/2)/n), j = 1..n.

        >>> [(round(x, 5), m) for x, m in quantile_atoms(Distribution("exponential", mean=1), 2)]
        [(0.28768, 0.5), (1.38629, 0.5)]
        >>> quantile_atoms(Distribution("deterministic", value=3), 4).atoms
        [(3.0, 1.0)]

    Raises:
        ModelError: n < 1.
    """

    if n < 1:
        raise ModelError("Quadrature size must be at least 1, got {}".format(n))

    probs = (np.arange(n) + 0.5) / n
    return AtomicMeasure.from_arrays(nu.quantile(probs), np.full(n, 1.0 / n))


def bin_mean_atoms(nu: Distribution, n: int) -> AtomicMeasure:
    """n atoms of mass 1/n at the conditional means of nu's n equal-probability bins.

    Unlike quantile_atoms, the workload is exactly the mean of nu.

        >>> atoms = bin_mean_atoms(Distribution("exponential", mean=1), 2)
        >>> [(round(x, 5), m) for x, m in atoms]
        [(0.30685, 0.5), (1.69315, 0.5)]

    Raises:
        ModelError: n < 1.
    """

    if n < 1:
        raise ModelError("Quadrature size must be at least 1, got {}".format(n))

    return AtomicMeasure.from_arrays(nu.bin_means(n), np.full(n, 1.0 / n))


# == Arrivals ==


FIRST_INTERVAL_MODES = ("equilibrium", "ordinary")


class ArrivalModel:
    """
    A delayed renewal arrival process with rate alpha. The first
    interval may follow its own law (by default the stationary excess
    of the inter-arrival law, when that is available in closed form).
    A rate of 0 means no arrivals at all.
    """

    def __init__(
        self,
        rate: float,
        interarrival: Optional[Distribution] = None,
        first_interval: Union[str, Distribution] = "equilibrium",
    ):
        """
        Arguments:
            rate {float} -- alpha >= 0.

        Keyword Arguments:
            interarrival {Optional[Distribution]} --    The law of u_2, u_3, ...; its mean
                                                        must be 1/rate. (default: {None})
            first_interval {Union[str, Distribution]} -- 'equilibrium', 'ordinary' or an
                                                          explicit law for u_1.
                                                          (default: {'equilibrium'})
        """

        self.rate = float(rate)
        self.interarrival = interarrival
        self.first_interval = first_interval

        if self.rate < 0:
            raise ParameterError("Arrival rate must be nonnegative, got {}".format(rate))

        if self.rate > 0:
            if interarrival is None:
                raise ParameterError("A positive arrival rate needs an inter-arrival law")

            if abs(interarrival.mean * self.rate - 1) > 1e-9:
                raise ParameterError(
                    "Inter-arrival mean {} does not match 1/rate = {}".format(
                        interarrival.mean, 1 / self.rate
                    )
                )

        if not isinstance(first_interval, Distribution) and first_interval not in FIRST_INTERVAL_MODES:
            raise ParameterError(
                "first_interval must be a distribution or one of {}, got {!r}".format(
                    FIRST_INTERVAL_MODES, first_interval
                )
            )

    @classmethod
    def renewal(
        cls,
        rate: float,
        family: str = "exponential",
        first_interval: Union[str, Distribution] = "equilibrium",
        **params
    ) -> "ArrivalModel":
        """Builds a renewal process whose inter-arrival law has mean 1/rate.

            >>> ArrivalModel.renewal(2.0).interarrival
            Distribution('exponential', mean=0.5)
            >>> ArrivalModel.renewal(1.0, "uniform", spread=0.5).interarrival
            Distribution('uniform', low=0.5, high=1.5)

        Arguments:
            rate {float} -- alpha; 0 yields the empty process.

        Keyword Arguments:
            family {str} -- exponential, deterministic, uniform(spread in (0, 1]) or
                            hyperexponential(p, balanced phase means). (default: {'exponential'})
        """

        if rate == 0:
            return cls(0.0, None, first_interval)

        if not rate > 0:
            raise ParameterError("Arrival rate must be nonnegative, got {}".format(rate))

        mean = 1.0 / rate

        if family == "exponential":
            _check_params("arrival", family, params, {})
            law = Distribution("exponential", mean=mean)

        elif family == "deterministic":
            _check_params("arrival", family, params, {})
            law = Distribution("deterministic", value=mean)

        elif family == "uniform":
            spread = _check_params("arrival", family, params, {"spread": 1.0})["spread"]

            if not 0 < spread <= 1:
                raise ParameterError("Uniform arrival spread must lie in (0, 1], got {}".format(spread))

            law = Distribution("uniform", low=(1 - spread) * mean, high=(1 + spread) * mean)

        elif family == "hyperexponential":
            p = _check_params("arrival", family, params, {"p": 0.25})["p"]

            if not 0 < p < 1:
                raise ParameterError("Phase probability must lie in (0, 1), got {}".format(p))

            law = Distribution(
                "hyperexponential", p=p, mean1=mean / (2 * p), mean2=mean / (2 * (1 - p))
            )

        else:
            raise ParameterError(
                "Unknown arrival family {!r}; expected one of {}".format(family, DISTRIBUTION_FAMILIES)
            )

        return cls(rate, law, first_interval)

    def first_interval_law(self) -> Optional[Distribution]:
        """The law of u_1."""

        if self.rate == 0:
            return None

        if isinstance(self.first_interval, Distribution):
            return self.first_interval

        if self.first_interval == "equilibrium":
            return self.interarrival.equilibrium() or self.interarrival

        return self.interarrival

    def perturbed(self, r: float, c: float) -> "ArrivalModel":
        """The arrival process with rate alpha * (1 - c/r).

            >>> ArrivalModel.renewal(1.0).perturbed(10, 1).rate
            0.9
        """

        if c == 0 or self.rate == 0:
            return self

        factor = 1 - c / r

        if not factor > 0:
            raise ParameterError("Perturbation c={} leaves no arrivals at r={}".format(c, r))

        first = self.first_interval

        if isinstance(first, Distribution):
            first = first.scaled(1 / factor)

        return ArrivalModel(self.rate * factor, self.interarrival.scaled(1 / factor), first)

    def stream(self, rng: np.random.Generator) -> Iterator[float]:
        """Yields the arrival epochs U_1 < U_2 < ... drawn from rng."""

        if self.rate == 0:
            return

        epoch = float(self.first_interval_law().sample(rng))

        while True:
            yield epoch
            epoch += float(self.interarrival.sample(rng))

    def __repr__(self):
        return "ArrivalModel(rate={}, interarrival={!r}, first_interval={!r})".format(
            self.rate, self.interarrival, self.first_interval
        )


# == System parameters ==


class SystemParameters:
    """Arrivals, service law and weight of one queueing system."""

    def __init__(
        self,
        arrival: ArrivalModel,
        service: Distribution,
        weight: WeightFunction,
        heavy_traffic: bool = False,
    ):
        """
        Keyword Arguments:
            heavy_traffic {bool} -- Declare rho = 1; validated to 1e-12. (default: {False})

        Raises:
            ParameterError: A heavy-traffic declaration with |rho - 1| > 1e-12.
        """

        self.arrival = arrival
        self.service = service
        self.weight = weight
        self.heavy_traffic = heavy_traffic

        if heavy_traffic and abs(self.rho - 1) > HEAVY_TRAFFIC_TOLERANCE:
            raise ParameterError(
                "Heavy-traffic configuration has rho = {!r}, not 1".format(self.rho)
            )

    @property
    def rho(self) -> float:
        return self.arrival.rate * self.service.mean

    def for_scale(self, r: float, c: float = 0.0) -> "SystemParameters":
        """The parameters of system r under the perturbation alpha^r = alpha (1 - c/r)."""

        if c == 0:
            return self

        return SystemParameters(self.arrival.perturbed(r, c), self.service, self.weight)

    def __repr__(self):
        return "SystemParameters(rho={}, {!r}, {!r}, {!r})".format(
            self.rho, self.arrival, self.service, self.weight
        )


def traffic_intensity(p: SystemParameters) -> float:
    """rho = alpha <chi, nu>.

        >>> w = WeightFunction("exp_saturation")
        >>> traffic_intensity(SystemParameters(
        ...     ArrivalModel.renewal(2.0), Distribution("exponential", mean=0.5), w))
        1.0
        >>> traffic_intensity(SystemParameters(
        ...     ArrivalModel.renewal(0.5), Distribution("uniform", low=0, high=2), w))
        0.5
    """

    return p.rho


# == Test functions ==


class TestFunction(PairingFunction):
    """
    A member of the class C of bounded C^1 functions with g(0) = g'(0) = 0,
    against which the fluid dynamics are stated.
    """

    __test__ = False

    def check(self, grid=None):
        """Checks g(0) = g'(0) = 0 and the declared bounds.

        Raises:
            ModelError: The function is not in the class.
        """

        if grid is None:
            grid = np.linspace(0.0, 50.0, 2001)

        zero = np.zeros(1)
        g0, d0 = float(self.evaluate(zero)[0]), float(self.derivative(zero)[0])

        if abs(g0) > 1e-15 or abs(d0) > 1e-15:
            raise ModelError(
                "{} is not a test function: g(0) = {}, g'(0) = {}".format(self.name, g0, d0)
            )

        values = np.asarray(self.evaluate(grid), dtype=float)

        if not np.all(np.isfinite(values)):
            raise ModelError("{} is not finite on the validation grid".format(self.name))

        try:
            super().check(grid)

        except Exception as err:
            raise ModelError(str(err))


def _gaussian_bump():
    return TestFunction(
        lambda x: -np.expm1(-_arr(x) ** 2),
        lambda x: 2 * _arr(x) * np.exp(-_arr(x) ** 2),
        1.0,
        math.sqrt(2) * math.exp(-0.5),
        name="1-exp(-x^2)",
    )


def _rational_bump():
    return TestFunction(
        lambda x: _arr(x) ** 2 / (1 + _arr(x) ** 2),
        lambda x: 2 * _arr(x) / (1 + _arr(x) ** 2) ** 2,
        1.0,
        3 * math.sqrt(3) / 8,
        name="x^2/(1+x^2)",
    )


def _squared_saturation():
    return TestFunction(
        lambda x: np.expm1(-_arr(x)) ** 2,
        lambda x: -2 * np.expm1(-_arr(x)) * np.exp(-_arr(x)),
        1.0,
        0.5,
        name="(1-exp(-x))^2",
    )


TEST_PANEL = [_gaussian_bump(), _rational_bump(), _squared_saturation()]
