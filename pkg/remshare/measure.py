"""
Finite atomic measures on the nonnegative half-line.

An AtomicMeasure is a finite list of (location, mass) atoms. It
houses the measure-valued queue descriptor, its scaled versions,
the initial condition and the quadratures of the service law.

The bounded-Lipschitz dual norm

    ||mu - nu||_1 = sup { <f, mu> - <f, nu> : |f| <= 1, |f'| <= 1 }

is computed exactly: for atomic measures the extremal f is piecewise
linear with kinks at support points only, so the supremum is a small
linear program over the values of f on the merged support.
"""

import csv
import io
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from remshare.errors import MeasureError
from remshare.persist import format_number

COMPACTION_TOLERANCE = 1e-12

_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class PairingFunction:
    """
    A real function on the half-line together with its derivative
    and bounds for both. Functions are expected to be vectorized
    (numpy arrays in, numpy arrays out).
    """

    def __init__(
        self,
        evaluate: Callable,
        derivative: Callable,
        sup_bound: float,
        derivative_sup_bound: float,
        name: Optional[str] = None,
    ):
        """
        Arguments:
            evaluate {Callable} -- x -> g(x), vectorized.
            derivative {Callable} -- x -> g'(x), vectorized.
            sup_bound {float} -- A bound on |g|.
            derivative_sup_bound {float} -- A bound on |g'|.

        Keyword Arguments:
            name {Optional[str]} -- A label used in reports. (default: {None})
        """

        self.evaluate = evaluate
        self.derivative = derivative
        self.sup_bound = float(sup_bound)
        self.derivative_sup_bound = float(derivative_sup_bound)
        self.name = name or getattr(evaluate, "__name__", "g")

    def __call__(self, x):
        return self.evaluate(x)

    def check(self, grid: Sequence[float]):
        """Checks the declared bounds on sampled points.

        Raises:
            MeasureError: Some sampled |g| or |g'| exceeds its bound.
        """

        grid = np.asarray(grid, dtype=float)
        values = np.abs(np.broadcast_to(self.evaluate(grid), grid.shape))
        slopes = np.abs(np.broadcast_to(self.derivative(grid), grid.shape))

        if np.any(values > self.sup_bound * (1 + 1e-12) + 1e-15):
            at = grid[int(np.argmax(values))]
            raise MeasureError(
                "|{}(x)| exceeds its bound {} at x={}".format(self.name, self.sup_bound, at)
            )

        if np.any(slopes > self.derivative_sup_bound * (1 + 1e-12) + 1e-15):
            at = grid[int(np.argmax(slopes))]
            raise MeasureError(
                "|{}'(x)| exceeds its bound {} at x={}".format(
                    self.name, self.derivative_sup_bound, at
                )
            )

    def __repr__(self):
        return "{}({})".format(type(self).__name__, self.name)


def _sorted_merge(
    locations: np.ndarray, masses: np.ndarray, tolerance: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Sorts atoms and sums the masses of neighbours within tolerance.
    Masses may be signed here (the dual norm merges mu - nu this way)."""

    if locations.size == 0:
        return locations, masses

    order = np.argsort(locations, kind="stable")
    locations = locations[order]
    masses = masses[order]

    starts = np.flatnonzero(np.concatenate(([True], np.diff(locations) > tolerance)))

    if starts.size == locations.size:
        return locations, masses

    return locations[starts], np.add.reduceat(masses, starts)


class AtomicMeasure:
    """
    A finite nonnegative measure on [0, inf), stored as sorted,
    compacted atoms. Instances are immutable values.

        >>> mu = AtomicMeasure([(6, 1), (2, 1)])
        >>> mu.atoms
        [(2.0, 1.0), (6.0, 1.0)]
        >>> mu.total_mass(), mu.workload()
        (2.0, 8.0)
    """

    __slots__ = ("locations", "masses")

    def __init__(
        self,
        atoms: Iterable[Tuple[float, float]] = (),
        tolerance: float = COMPACTION_TOLERANCE,
    ):
        """
        Keyword Arguments:
            atoms {Iterable[Tuple[float, float]]} -- (location, mass) pairs. (default: none)
            tolerance {float} -- Atoms closer than this are merged. (default: 1e-12)

        Raises:
            MeasureError: A location or mass is negative or not finite.
        """

        pairs = np.asarray(list(atoms), dtype=float).reshape(-1, 2)
        locations, masses = self._validated(pairs[:, 0], pairs[:, 1])
        self._assign(*self._compacted(locations, masses, tolerance))

    @classmethod
    def from_arrays(
        cls,
        locations: Sequence[float],
        masses: Sequence[float],
        compact: bool = True,
        tolerance: float = COMPACTION_TOLERANCE,
    ) -> "AtomicMeasure":
        """Builds a measure from parallel location and mass arrays.

        Keyword Arguments:
            compact {bool} --   Whether to sort and merge. Pass False only for arrays
                                already sorted, merged and free of zero masses.
                                (default: True)
        """

        measure = cls.__new__(cls)
        locations, masses = cls._validated(
            np.array(locations, dtype=float).ravel(), np.array(masses, dtype=float).ravel()
        )

        if compact:
            locations, masses = cls._compacted(locations, masses, tolerance)

        measure._assign(locations, masses)
        return measure

    @staticmethod
    def _validated(locations: np.ndarray, masses: np.ndarray):
        if locations.shape != masses.shape:
            raise MeasureError(
                "Got {} locations but {} masses".format(locations.size, masses.size)
            )

        if not (np.all(np.isfinite(locations)) and np.all(np.isfinite(masses))):
            raise MeasureError("Atom locations and masses must be finite")

        if np.any(locations < 0):
            raise MeasureError(
                "Atom location {} is negative".format(float(locations[locations < 0][0]))
            )

        if np.any(masses < 0):
            raise MeasureError("Atom mass {} is negative".format(float(masses[masses < 0][0])))

        return locations, masses

    @staticmethod
    def _compacted(locations: np.ndarray, masses: np.ndarray, tolerance: float):
        keep = masses > 0
        return _sorted_merge(locations[keep], masses[keep], tolerance)

    def _assign(self, locations: np.ndarray, masses: np.ndarray):
        locations.flags.writeable = False
        masses.flags.writeable = False

        self.locations = locations
        self.masses = masses

    # === queries ===

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        """The atoms as (location, mass) tuples, ascending in location."""

        return [(float(x), float(m)) for x, m in zip(self.locations, self.masses)]

    def __len__(self):
        return int(self.locations.size)

    def __iter__(self):
        return iter(self.atoms)

    def __eq__(self, other):
        if not isinstance(other, AtomicMeasure):
            return NotImplemented

        return np.array_equal(self.locations, other.locations) and np.array_equal(
            self.masses, other.masses
        )

    def __hash__(self):
        return hash((self.locations.tobytes(), self.masses.tobytes()))

    def __repr__(self):
        if len(self) > 6:
            return "AtomicMeasure(<{} atoms, mass {:.6g}>)".format(len(self), self.total_mass())

        return "AtomicMeasure({})".format(self.atoms)

    def integrate(self, g: Union[PairingFunction, Callable]) -> float:
        """The pairing <g, mu> = sum of mass * g(location). Exact.

            >>> AtomicMeasure([(2, 1), (6, 1)]).integrate(lambda x: x)
            8.0
            >>> AtomicMeasure([(2, 1)]).integrate(lambda x: x ** 2)
            4.0
            >>> AtomicMeasure().integrate(np.exp)
            0.0

        Arguments:
            g {Union[PairingFunction, Callable]} -- A vectorized real function.

        Returns:
            float -- The pairing.
        """

        if self.locations.size == 0:
            return 0.0

        values = np.broadcast_to(np.asarray(g(self.locations), dtype=float), self.masses.shape)
        return float(np.dot(self.masses, values))

    def total_mass(self) -> float:
        """<1, mu>."""

        return float(np.sum(self.masses))

    def workload(self) -> float:
        """<chi, mu> with chi(x) = x."""

        return float(np.dot(self.masses, self.locations))

    # === transformations ===

    def scale_mass(self, factor: float) -> "AtomicMeasure":
        """Multiplies every mass by a positive factor.

            >>> AtomicMeasure([(2, 1), (6, 1)]).scale_mass(0.5).atoms
            [(2.0, 0.5), (6.0, 0.5)]

        Raises:
            MeasureError: factor is not positive.
        """

        if not factor > 0:
            raise MeasureError("Mass scaling factor must be positive, got {}".format(factor))

        return AtomicMeasure.from_arrays(self.locations, self.masses * factor)

    def prune(self, eps: float) -> "AtomicMeasure":
        """Removes atoms at locations <= eps (and zero-mass atoms).

            >>> AtomicMeasure([(0, 1), (1.2, 1)]).prune(0).atoms
            [(1.2, 1.0)]
            >>> AtomicMeasure([(1e-12, 1), (3, 1)]).prune(1e-9).atoms
            [(3.0, 1.0)]
        """

        if not eps >= 0:
            raise MeasureError("Prune threshold must be nonnegative, got {}".format(eps))

        keep = (self.locations > eps) & (self.masses > 0)

        if np.all(keep):
            return self

        return AtomicMeasure.from_arrays(self.locations[keep], self.masses[keep], compact=False)

    def coarsen(self, width: float) -> "AtomicMeasure":
        """Merges the atoms of each bin [k*width, (k+1)*width) into one
        atom at their mass-weighted barycenter. Total mass and workload
        are preserved; pairings move by O(width**2) for smooth g.

            >>> AtomicMeasure([(1.0, 1), (1.5, 3), (7, 1)]).coarsen(2.0).atoms
            [(1.375, 4.0), (7.0, 1.0)]
        """

        if width < 0:
            raise MeasureError("Coarsening width must be nonnegative, got {}".format(width))

        if width == 0 or self.locations.size < 2:
            return self

        bins = np.floor(self.locations / width)
        starts = np.flatnonzero(np.concatenate(([True], np.diff(bins) > 0)))

        if starts.size == self.locations.size:
            return self

        masses = np.add.reduceat(self.masses, starts)
        locations = np.add.reduceat(self.masses * self.locations, starts) / masses
        return AtomicMeasure.from_arrays(locations, masses, compact=False)

    def add(self, other: "AtomicMeasure") -> "AtomicMeasure":
        """The superposition mu + nu."""

        if len(other) == 0:
            return self

        if len(self) == 0:
            return other

        return AtomicMeasure.from_arrays(
            np.concatenate((self.locations, other.locations)),
            np.concatenate((self.masses, other.masses)),
        )

    __add__ = add


def bl_distance(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """The bounded-Lipschitz distance ||mu - nu||_1.

    Solves: maximize sum_j d_j f_j over the merged support x_1 < ... < x_n,
    with d_j the signed mass difference, subject to |f_j| <= 1 and
    |f_{j+1} - f_j| <= x_{j+1} - x_j.

        >>> bl_distance(AtomicMeasure([(0.7, 1)]), AtomicMeasure([(0.7, 1)]))
        0.0
        >>> round(bl_distance(AtomicMeasure([(1, 1)]), AtomicMeasure([(1.5, 1)])), 9)
        0.5
        >>> round(bl_distance(AtomicMeasure([(1, 1)]), AtomicMeasure([(1, 2)])), 9)
        1.0

    Arguments:
        mu {AtomicMeasure} -- The first measure.
        nu {AtomicMeasure} -- The second measure.

    Returns:
        float -- The distance, >= 0.
    """

    locations, signed = _sorted_merge(
        np.concatenate((mu.locations, nu.locations)),
        np.concatenate((mu.masses, -nu.masses)),
        COMPACTION_TOLERANCE,
    )

    if not np.any(signed):
        return 0.0

    if signed.size == 1:
        return float(abs(signed[0]))

    n = signed.size
    gaps = np.diff(locations)

    # rows of D give f_{j+1} - f_j
    ones = np.ones(n - 1)
    steps = sparse.diags([-ones, ones], [0, 1], shape=(n - 1, n), format="csr")

    result = linprog(
        -signed,
        A_ub=sparse.vstack([steps, -steps], format="csr"),
        b_ub=np.concatenate((gaps, gaps)),
        bounds=(-1, 1),
        method="highs-ds",
        options=_LP_OPTIONS,
    )

    if not result.success:
        raise MeasureError("Dual norm LP failed: {}".format(result.message))

    return max(float(np.dot(signed, result.x)), 0.0)


def path_distance(path_a, path_b) -> float:
    """The path norm ||a - b||_c: the largest bl_distance over a shared time grid.

    Arguments:
        path_a {FluidPath} -- Anything with .times and .measures.
        path_b {FluidPath} -- Same.

    Raises:
        MeasureError: The time grids differ.

    Returns:
        float -- The supremum over grid times.
    """

    times_a = np.asarray(path_a.times, dtype=float)
    times_b = np.asarray(path_b.times, dtype=float)

    if times_a.shape != times_b.shape or not np.allclose(times_a, times_b, rtol=0, atol=1e-12):
        raise MeasureError(
            "Paths do not share a time grid ({} vs {} points)".format(times_a.size, times_b.size)
        )

    return max(bl_distance(a, b) for a, b in zip(path_a.measures, path_b.measures))


# === serialization ===


def measure_rows(mu: AtomicMeasure, time: Optional[float] = None) -> List[list]:
    """Rows of the measure CSV format, ascending in location."""

    if time is None:
        return [[x, m] for x, m in mu.atoms]

    return [[float(time), x, m] for x, m in mu.atoms]


def measure_csv(mu: AtomicMeasure) -> str:
    """A standalone measure as `location,mass` CSV.

        >>> print(measure_csv(AtomicMeasure([(0.1, 1)])), end="")
        location,mass
        0.10000000000000001,1
    """

    lines = ["location,mass"]
    lines.extend("{},{}".format(format_number(x), format_number(m)) for x, m in mu.atoms)
    return "\n".join(lines) + "\n"


def read_measures(text: str) -> List[Tuple[Optional[float], AtomicMeasure]]:
    """Parses the measure CSV format.

    A file without a time column holds one standalone measure (its time is
    None); otherwise one measure per distinct time, in order of appearance.

        >>> read_measures("time,location,mass\\n0,1,2\\n0,3,1\\n1,2,3\\n")
        [(0.0, AtomicMeasure([(1.0, 2.0), (3.0, 1.0)])), (1.0, AtomicMeasure([(2.0, 3.0)]))]

    Raises:
        MeasureError: Missing columns or malformed numbers.
    """

    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []

    if "location" not in fields or "mass" not in fields:
        raise MeasureError("Measure CSV needs 'location' and 'mass' columns, got {}".format(fields))

    timed = "time" in fields
    groups = {}  # type: dict

    try:
        for row in reader:
            key = float(row["time"]) if timed else None
            groups.setdefault(key, []).append((float(row["location"]), float(row["mass"])))

    except (TypeError, ValueError) as err:
        raise MeasureError("Malformed measure CSV: {}".format(err))

    if not groups and not timed:
        return [(None, AtomicMeasure())]

    return [(key, AtomicMeasure(atoms)) for key, atoms in groups.items()]


def file_distance(text_a: str, text_b: str) -> float:
    """bl_distance between the measures of two measure CSV texts.

    Untimed files are compared directly; timed files give the largest
    distance over the times they share.

        >>> round(file_distance("location,mass\\n1,1\\n", "location,mass\\n1.5,1\\n"), 9)
        0.5

    Raises:
        MeasureError: The files share no time, or mix timed and untimed layouts.
    """

    first = dict(read_measures(text_a))
    second = dict(read_measures(text_b))

    if (None in first) != (None in second):
        raise MeasureError("Cannot compare a timed measure file with an untimed one")

    shared = sorted(set(first) & set(second), key=lambda t: -1.0 if t is None else t)

    if not shared:
        raise MeasureError("The measure files share no time")

    return max(bl_distance(first[t], second[t]) for t in shared)
