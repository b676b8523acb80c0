"""Phase-space types, geometry predicates and conserved quantities.

Everything here works with unit-mass particles, so a momentum vector is
also the particle velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CONTACT_SLACK = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    """Position ``q`` and momentum ``p`` of one particle."""

    q: tuple[float, ...]
    p: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        p = tuple(float(v) for v in self.p)
        if len(q) != len(p):
            raise ValueError(f"position has dimension {len(q)}, momentum {len(p)}")
        if len(q) not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(q)}")
        if not all(math.isfinite(v) for v in q + p):
            raise ValueError("phase point has non-finite components")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return len(self.q)


@dataclass(frozen=True)
class BoxSpec:
    """Simulation box: edge length per axis and boundary mode."""

    lengths: tuple[float, ...]
    periodic: bool = True

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        if len(lengths) not in (1, 2, 3):
            raise ValueError(f"box dimension must be 1, 2 or 3, got {len(lengths)}")
        if any(not (v > 0 and math.isfinite(v)) for v in lengths):
            raise ValueError(f"box edge lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def cube(cls, length: float, dim: int, periodic: bool = True) -> "BoxSpec":
        return cls((float(length),) * dim, periodic)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def boundary(self) -> str:
        return "periodic" if self.periodic else "open"

    def wrap(self, q: np.ndarray) -> np.ndarray:
        """Map positions into ``[0, L)`` along periodic axes."""
        if not self.periodic:
            return np.asarray(q, dtype=float)
        L = np.asarray(self.lengths)
        return np.mod(q, L)


def minimum_image_displacement(a, b, box: BoxSpec) -> np.ndarray:
    """Return ``b - a`` wrapped into ``[-L/2, L/2)`` per periodic axis.

    Works on single vectors and on stacked ``(..., d)`` arrays.
    """
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    if not box.periodic:
        return d
    L = np.asarray(box.lengths)
    return d - L * np.floor(d / L + 0.5)


@dataclass(frozen=True, eq=False)
class HardSphereSystem:
    """An N-particle hard-sphere microstate.

    Positions and momenta are stored as ``(N, d)`` float arrays; they are
    treated as immutable (the arrays are flagged read-only).
    """

    sigma: float
    q: np.ndarray
    p: np.ndarray
    box: BoxSpec
    time: float = 0.0
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        d = self.box.dim
        q = np.array(self.q, dtype=float).reshape(-1, d)
        p = np.array(self.p, dtype=float).reshape(-1, d)
        if q.shape != p.shape:
            raise ValueError(f"positions {q.shape} and momenta {p.shape} disagree")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("non-finite phase coordinates")
        if self.box.periodic and len(q) > 1:
            if min(self.box.lengths) <= 2 * self.sigma:
                raise ValueError("periodic box edges must exceed 2*sigma")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_points(cls, points: Iterable[PhasePoint], sigma: float, box: BoxSpec,
                    time: float = 0.0) -> "HardSphereSystem":
        points = list(points)
        d = box.dim
        for pt in points:
            if pt.dim != d:
                raise ValueError(f"phase point of dimension {pt.dim} in a {d}-d box")
        q = np.array([pt.q for pt in points], dtype=float).reshape(-1, d)
        p = np.array([pt.p for pt in points], dtype=float).reshape(-1, d)
        return cls(sigma, q, p, box, time)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def particles(self) -> list[PhasePoint]:
        return [PhasePoint(tuple(qi), tuple(pi)) for qi, pi in zip(self.q, self.p)]

    def replace(self, **changes) -> "HardSphereSystem":
        kw = dict(sigma=self.sigma, q=self.q, p=self.p, box=self.box, time=self.time)
        kw.update(changes)
        return HardSphereSystem(**kw)

    def __eq__(self, other):
        if not isinstance(other, HardSphereSystem):
            return NotImplemented
        return (self.sigma == other.sigma and self.box == other.box
                and self.time == other.time and np.array_equal(self.q, other.q)
                and np.array_equal(self.p, other.p))

    __hash__ = None


def pair_distances(sys: HardSphereSystem) -> np.ndarray:
    """Condensed array of minimum-image distances over pairs ``i < j``."""
    n = sys.n
    if n < 2:
        return np.empty(0)
    i, j = np.triu_indices(n, k=1)
    disp = minimum_image_displacement(sys.q[i], sys.q[j], sys.box)
    return np.sqrt(np.sum(disp * disp, axis=-1))


def is_allowed_configuration(sys: HardSphereSystem) -> bool:
    """True when no pair is closer than ``sigma`` (contact is allowed)."""
    if sys.n < 2 or sys.sigma == 0:
        return True
    threshold = sys.sigma * (1.0 - CONTACT_SLACK)
    if sys.n <= 2000:
        return bool(np.all(pair_distances(sys) >= threshold))
    from scipy.spatial import cKDTree

    if sys.box.periodic:
        tree = cKDTree(sys.box.wrap(sys.q), boxsize=sys.box.lengths)
    else:
        tree = cKDTree(sys.q)
    return len(tree.query_pairs(threshold * (1 - 1e-15))) == 0


def conserved_quantities(sys: HardSphereSystem) -> tuple[np.ndarray, float]:
    """Total momentum vector and total kinetic energy."""
    if sys.n == 0:
        return np.zeros(sys.dim), 0.0
    momentum = sys.p.sum(axis=0)
    energy = 0.5 * float(np.sum(sys.p * sys.p))
    return momentum, energy


@dataclass(frozen=True)
class ScalingPoint:
    """One point of a Boltzmann-Grad sequence.

    ``epsilon`` is the ratio of the diameter to the mean free path.
    """

    N: int
    sigma: float
    epsilon: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


def collision_cross_section(sigma: float, dim: int) -> float:
    """Hard-sphere total cross section ``sigma^(d-1)`` times the unit (d-1)-ball volume."""
    ball = {1: 1.0, 2: 2.0, 3: math.pi}[dim]
    return ball * sigma ** (dim - 1)


def mean_free_path(N: int, sigma: float, box: BoxSpec) -> float:
    """Dilute-gas mean free path ``1 / (sqrt(2) n S)`` with S the cross section."""
    n = N / box.volume
    s = collision_cross_section(sigma, box.dim)
    return 1.0 / (math.sqrt(2.0) * n * s)


def scaling_sequence(base_N: int, base_sigma: float, factors: Sequence[float],
                     box: BoxSpec) -> list[ScalingPoint]:
    """Points with ``N * sigma^(d-1)`` held fixed, one per multiplier of ``N``.

    Returned in order of decreasing epsilon.
    """
    d = box.dim
    invariant = base_N * base_sigma ** (d - 1)
    points = []
    for f in factors:
        N = int(round(base_N * f))
        if d == 1:
            sigma = base_sigma / f
        else:
            sigma = (invariant / N) ** (1.0 / (d - 1))
        lam = mean_free_path(N, sigma, box) if d > 1 else box.volume / N
        points.append(ScalingPoint(N, sigma, sigma / lam))
    points.sort(key=lambda sp: -sp.epsilon)
    if d > 1:
        check_fixed_mean_free_path(points, d)
    return points


def check_fixed_mean_free_path(points: Sequence[ScalingPoint], dim: int,
                               rtol: float = 1e-12) -> None:
    """Raise unless ``N * sigma^(d-1)`` agrees across ``points`` within ``rtol``."""
    values = [sp.N * sp.sigma ** (dim - 1) for sp in points]
    ref = values[0]
    for v in values[1:]:
        if abs(v - ref) > rtol * abs(ref):
            raise ValueError(f"N*sigma^(d-1) not constant across sweep: {values}")
