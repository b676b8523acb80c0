"""Initial ensembles and estimators of reduced distribution functions.

Histograms use falling-factorial normalization: the order-s estimate
counts ordered s-tuples of distinct particles per cell and divides by
``N (N-1) ... (N-s+1)`` and the s-particle cell volume.  ``F_1`` is then a
unit-mass density, and for independent particles ``E F_s`` equals the
s-fold product of ``E F_1`` exactly at every N.  Multiplying by the
falling factorial gives the density-normalized values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .collisions import quantize_momenta
from .partitions import GradedSequence, ln_star, exp_star
from .phase import BoxSpec, HardSphereSystem, minimum_image_displacement
from .rng import RngStream

MAX_PLACEMENT_TRIES = 100_000
MAX_PACKING = 0.25
ACCEPTANCE_RANGE = (0.05, 0.95)


class DensityError(ValueError):
    """Random placement could not find room for a particle."""


class SamplerDiagnosticError(RuntimeError):
    """Metropolis acceptance rate outside the accepted range."""


def sphere_volume(sigma: float, dim: int) -> float:
    r = sigma / 2.0
    return {1: 2 * r, 2: math.pi * r * r, 3: 4.0 / 3.0 * math.pi * r ** 3}[dim]


# --------------------------------------------------------------------------
# pair correlation tables

@dataclass(frozen=True)
class PairCorrelationTable:
    """Radial pair correlation ``g2(r)`` beyond contact.

    ``kind="linear"`` interpolates linearly between nodes; ``kind="step"``
    holds ``values[k]`` on ``[radii[k], radii[k+1])``.  Beyond the last
    node ``g2 = 1``; below ``sigma`` it is 0.
    """

    radii: tuple[float, ...]
    values: tuple[float, ...]
    kind: str = "linear"

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != g.shape or len(r) < 1:
            raise ValueError("radii and values must be equal-length 1-d sequences")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise ValueError("g2 must be positive beyond contact")
        if abs(g[-1] - 1.0) > 0.01:
            raise ValueError(f"g2 at the largest radius must be 1 within 1%, got {g[-1]}")
        if self.kind not in ("linear", "step"):
            raise ValueError(f"unknown interpolation {self.kind!r}")
        object.__setattr__(self, "radii", tuple(map(float, r)))
        object.__setattr__(self, "values", tuple(map(float, g)))

    @property
    def r_max(self) -> float:
        return self.radii[-1]

    @property
    def g_max(self) -> float:
        return max(1.0, max(self.values))

    def __call__(self, r, sigma: float = 0.0):
        r = np.asarray(r, dtype=float)
        radii = np.asarray(self.radii)
        vals = np.asarray(self.values)
        if self.kind == "linear":
            out = np.interp(r, radii, vals, left=vals[0], right=1.0)
        else:
            idx = np.searchsorted(radii, r, side="right") - 1
            out = np.where(idx < 0, vals[0], vals[np.clip(idx, 0, len(vals) - 1)])
            out = np.where(r >= radii[-1], 1.0, out)
        return np.where(r < sigma, 0.0, out)

    @classmethod
    def flat(cls) -> "PairCorrelationTable":
        return cls((1.0,), (1.0,))

    @classmethod
    def depleted_shell(cls, radius: float, depth: float) -> "PairCorrelationTable":
        """``g2 = 1 - depth`` below ``radius``, 1 beyond."""
        if not 0 <= depth < 1:
            raise ValueError("depth must lie in [0, 1)")
        return cls((0.0, radius), (1.0 - depth, 1.0), kind="step")

    @classmethod
    def read(cls, path) -> "PairCorrelationTable":
        """Two-column text file ``r g2``; an optional ``# kind: step`` line."""
        kind = "linear"
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("#"):
                    if line[1:].strip().startswith("kind:"):
                        kind = line.split(":", 1)[1].strip()
                    continue
                if line:
                    rows.append([float(x) for x in line.split()[:2]])
        arr = np.array(rows)
        return cls(tuple(arr[:, 0]), tuple(arr[:, 1]), kind)


@dataclass(frozen=True)
class InitialStateSpec:
    """Initial one-particle law plus optional pair correlations.

    ``momentum_law`` is ``"maxwellian"`` (variance ``1/beta`` per component)
    or ``"bimodal"``: each component is ``+-a`` plus Gaussian noise, with
    ``a^2 = 0.75/beta`` and noise variance ``0.25/beta``.
    """

    mode: str = "chaos"
    beta: float = 1.0
    g2: PairCorrelationTable | None = None
    momentum_law: str = "maxwellian"

    def __post_init__(self):
        if self.mode not in ("chaos", "correlated"):
            raise ValueError(f"unknown initial-state mode {self.mode!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.mode == "correlated" and self.g2 is None:
            raise ValueError("correlated mode needs a g2 table")
        if self.momentum_law not in ("maxwellian", "bimodal"):
            raise ValueError(f"unknown momentum law {self.momentum_law!r}")


def sample_momenta(spec: InitialStateSpec, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    scale = 1.0 / math.sqrt(spec.beta)
    if spec.momentum_law == "maxwellian":
        p = rng.normal(0.0, scale, size=(n, dim))
    else:
        signs = rng.choice([-1.0, 1.0], size=(n, dim))
        p = signs * math.sqrt(0.75) * scale + rng.normal(0.0, 0.5 * scale, size=(n, dim))
    return quantize_momenta(p)


def momentum_marginal_density(spec: InitialStateSpec, p):
    """Density of one momentum component under the initial law."""
    p = np.asarray(p, dtype=float)
    s2 = 1.0 / spec.beta
    if spec.momentum_law == "maxwellian":
        return np.exp(-p * p / (2 * s2)) / math.sqrt(2 * math.pi * s2)
    a = math.sqrt(0.75 * s2)
    v = 0.25 * s2
    norm = 1.0 / math.sqrt(2 * math.pi * v)
    return 0.5 * norm * (np.exp(-(p - a) ** 2 / (2 * v)) + np.exp(-(p + a) ** 2 / (2 * v)))


def _check_packing(n: int, sigma: float, box: BoxSpec) -> None:
    frac = n * sphere_volume(sigma, box.dim) / box.volume
    if frac > MAX_PACKING:
        raise DensityError(f"packing fraction {frac:.3f} exceeds {MAX_PACKING}")


def _place_positions(n: int, sigma: float, box: BoxSpec, rng: np.random.Generator) -> np.ndarray:
    L = np.asarray(box.lengths)
    d = box.dim
    if sigma == 0.0 or n < 2:
        return rng.random((n, d)) * L
    q = np.empty((n, d))
    s2 = sigma * sigma
    for i in range(n):
        for _ in range(MAX_PLACEMENT_TRIES):
            x = rng.random(d) * L
            if i == 0:
                break
            disp = minimum_image_displacement(q[:i], x, box)
            if np.min(np.einsum("ij,ij->i", disp, disp)) >= s2:
                break
        else:
            raise DensityError(f"could not place particle {i} after {MAX_PLACEMENT_TRIES} tries")
        q[i] = x
    return q


def sample_chaos_configuration(spec: InitialStateSpec, N: int, sigma: float, box: BoxSpec,
                               stream: RngStream) -> HardSphereSystem:
    """Uniform positions with overlap rejection and independent momenta."""
    _check_packing(N, sigma, box)
    rng = stream.generator()
    q = _place_positions(N, sigma, box, rng)
    p = sample_momenta(spec, N, box.dim, rng)
    return HardSphereSystem(sigma, q, p, box)


MIN_TUNING_WINDOWS = 10


@dataclass
class MetropolisResult:
    positions: list
    acceptance: float
    step: float
    proposals: int


def metropolis_positions(g2: PairCorrelationTable, N: int, sigma: float, box: BoxSpec,
                         rng: np.random.Generator, count: int = 1,
                         burn_in_per_particle: int = 100, stride_per_particle: int = 1,
                         target_acceptance: float = 0.4) -> MetropolisResult:
    """Single-particle Metropolis chain targeting ``prod_{i<j} g2(r_ij)`` on allowed configurations.

    Burn-in runs until ``burn_in_per_particle * N`` accepted moves and at
    least ``MIN_TUNING_WINDOWS`` step-size updates toward
    ``target_acceptance``; afterwards ``count``
    configurations are taken ``stride_per_particle * N`` proposals apart.
    """
    L = np.asarray(box.lengths)
    d = box.dim
    q = _place_positions(N, sigma, box, rng)
    if N < 2:
        return MetropolisResult([q.copy() for _ in range(count)], 1.0, float(L.min() / 2), 0)
    step_cap = float(L.min() / 2)
    step = min(step_cap, max(sigma, 0.5 * (box.volume / N) ** (1.0 / d)))

    def log_weight(i, x):
        disp = minimum_image_displacement(np.delete(q, i, axis=0), x, box)
        r = np.sqrt(np.einsum("ij,ij->i", disp, disp))
        g = g2(r, sigma)
        if np.any(g <= 0.0):
            return -math.inf
        return float(np.sum(np.log(g)))

    accepted = 0
    window_acc = window_prop = 0
    proposals = 0

    def move():
        nonlocal accepted, window_acc, window_prop, proposals
        i = int(rng.integers(N))
        x = q[i] + rng.uniform(-step, step, size=d)
        if box.periodic:
            x = np.mod(x, L)
        u = rng.random()
        proposals += 1
        window_prop += 1
        if not box.periodic and (np.any(x < 0) or np.any(x >= L)):
            return
        new = log_weight(i, x)
        if new == -math.inf:
            return
        old = log_weight(i, q[i])
        if new >= old or u < math.exp(new - old):
            q[i] = x
            accepted += 1
            window_acc += 1

    burn_target = burn_in_per_particle * N
    windows = 0
    while accepted < burn_target or windows < MIN_TUNING_WINDOWS:
        move()
        if window_prop == 50 * max(1, min(N, 20)):
            rate = window_acc / window_prop
            step = float(np.clip(step * math.exp(rate - target_acceptance), 1e-6 * step_cap, step_cap))
            window_acc = window_prop = 0
            windows += 1
        if proposals > 1000 * burn_target:
            raise SamplerDiagnosticError("burn-in did not reach its accepted-move target")

    out = []
    acc0, prop0 = accepted, proposals
    for _ in range(count):
        for _ in range(stride_per_particle * N):
            move()
        out.append(q.copy())
    rate = (accepted - acc0) / max(1, proposals - prop0)
    lo, hi = ACCEPTANCE_RANGE
    if rate < lo or (rate > hi and step < step_cap):
        raise SamplerDiagnosticError(f"Metropolis acceptance rate {rate:.3f} outside [{lo}, {hi}]")
    return MetropolisResult(out, rate, step, proposals)


def sample_correlated_configuration(spec: InitialStateSpec, N: int, sigma: float, box: BoxSpec,
                                    stream: RngStream, **chain) -> HardSphereSystem:
    """Positions from the pair-weighted Metropolis chain, Maxwellian momenta."""
    return sample_correlated_ensemble(spec, N, sigma, box, stream, 1, **chain)[0]


def sample_correlated_ensemble(spec: InitialStateSpec, N: int, sigma: float, box: BoxSpec,
                               stream: RngStream, count: int, **chain) -> list[HardSphereSystem]:
    """``count`` configurations from one chain, ``N`` proposals apart."""
    if spec.g2 is None:
        raise ValueError("correlated sampling needs a g2 table")
    _check_packing(N, sigma, box)
    rng = stream.generator()
    res = metropolis_positions(spec.g2, N, sigma, box, rng, count=count, **chain)
    prng = stream.child("momenta").generator()
    return [HardSphereSystem(sigma, q, sample_momenta(spec, N, box.dim, prng), box)
            for q in res.positions]


def sample_initial(spec: InitialStateSpec, N: int, sigma: float, box: BoxSpec,
                   stream: RngStream) -> HardSphereSystem:
    if spec.mode == "chaos":
        return sample_chaos_configuration(spec, N, sigma, box, stream)
    return sample_correlated_configuration(spec, N, sigma, box, stream)


# --------------------------------------------------------------------------
# binning and histograms

@dataclass(frozen=True)
class Binning:
    """Product binning of one-particle phase space.

    Position axes split the box into ``q_bins[k]`` equal intervals;
    momentum axes split ``[-p_max, p_max]`` into ``p_bins[k]`` intervals.
    """

    box_lengths: tuple[float, ...]
    q_bins: tuple[int, ...]
    p_bins: tuple[int, ...]
    p_max: float

    def __post_init__(self):
        d = len(self.box_lengths)
        if len(self.q_bins) != d or len(self.p_bins) != d:
            raise ValueError("bin counts must be given per axis")
        if any(b < 1 for b in self.q_bins + self.p_bins):
            raise ValueError("bin counts must be positive")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        object.__setattr__(self, "box_lengths", tuple(map(float, self.box_lengths)))
        object.__setattr__(self, "q_bins", tuple(map(int, self.q_bins)))
        object.__setattr__(self, "p_bins", tuple(map(int, self.p_bins)))
        object.__setattr__(self, "p_max", float(self.p_max))

    @classmethod
    def for_box(cls, box: BoxSpec, q_bins, p_bins, beta: float = 1.0, p_max=None) -> "Binning":
        d = box.dim
        q_bins = (q_bins,) * d if isinstance(q_bins, int) else tuple(q_bins)
        p_bins = (p_bins,) * d if isinstance(p_bins, int) else tuple(p_bins)
        return cls(box.lengths, q_bins, p_bins, p_max if p_max is not None else 5.0 / math.sqrt(beta))

    @property
    def dim(self) -> int:
        return len(self.box_lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.q_bins + self.p_bins

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        vq = np.prod([L / b for L, b in zip(self.box_lengths, self.q_bins)])
        vp = np.prod([2 * self.p_max / b for b in self.p_bins])
        return float(vq * vp)

    def cell_index(self, q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat cell index per particle and a mask of in-window particles."""
        L = np.asarray(self.box_lengths)
        q = np.mod(np.asarray(q, dtype=float), L)
        p = np.asarray(p, dtype=float)
        qi = np.minimum((q / L * self.q_bins).astype(np.int64), np.array(self.q_bins) - 1)
        pf = (p + self.p_max) / (2 * self.p_max) * np.array(self.p_bins)
        inside = np.all((p >= -self.p_max) & (p < self.p_max), axis=1)
        pi = np.clip(np.floor(pf).astype(np.int64), 0, np.array(self.p_bins) - 1)
        idx = np.ravel_multi_index(tuple(np.concatenate([qi, pi], axis=1).T), self.shape)
        return idx, inside

    def q_edges(self, k: int) -> np.ndarray:
        return np.linspace(0.0, self.box_lengths[k], self.q_bins[k] + 1)

    def p_edges(self, k: int) -> np.ndarray:
        return np.linspace(-self.p_max, self.p_max, self.p_bins[k] + 1)

    def describe(self) -> str:
        return (f"box={list(self.box_lengths)} q_bins={list(self.q_bins)} "
                f"p_bins={list(self.p_bins)} p_max={self.p_max!r}")


def falling_factorial(n: int, s: int) -> int:
    return math.prod(range(n - s + 1, n + 1))


def tuple_counts(occ: np.ndarray, s: int) -> np.ndarray:
    """Ordered distinct s-tuples per s-cell from one-particle cell occupancies."""
    n = np.asarray(occ, dtype=float)
    if s == 1:
        return n.copy()
    if s == 2:
        out = np.multiply.outer(n, n)
        out[np.diag_indices(len(n))] -= n
        return out
    if s == 3:
        M = len(n)
        out = np.einsum("a,b,c->abc", n, n, n)
        nn = np.multiply.outer(n, n)
        idx = np.arange(M)
        out[idx, idx, :] -= nn            # a = b
        out[idx, :, idx] -= nn            # a = c
        out[:, idx, idx] -= nn            # b = c
        out[idx, idx, idx] += 2 * n
        return out
    raise ValueError("orders above 3 are not estimated")


@dataclass
class HistogramAccumulator:
    """Running sums of per-snapshot order-s estimates; merge is associative."""

    s: int
    binning: Binning
    N: int
    total: np.ndarray = None
    total_sq: np.ndarray = None
    snapshots: int = 0
    replicas: int = 0
    out_of_window: int = 0
    samples: int = 0

    def __post_init__(self):
        if not 1 <= self.s <= 3:
            raise ValueError("order must be 1, 2 or 3")
        if self.s > self.N:
            raise ValueError(f"order {self.s} exceeds particle count {self.N}")
        shape = (self.binning.n_cells,) * self.s
        if self.total is None:
            self.total = np.zeros(shape)
            self.total_sq = np.zeros(shape)

    @property
    def norm(self) -> float:
        return falling_factorial(self.N, self.s) * self.binning.cell_volume ** self.s

    def add(self, sys: HardSphereSystem, replica_start: bool = False) -> None:
        if sys.n != self.N:
            raise ValueError(f"snapshot has {sys.n} particles, expected {self.N}")
        idx, inside = self.binning.cell_index(sys.q, sys.p)
        self.out_of_window += int(np.sum(~inside))
        self.samples += sys.n
        occ = np.bincount(idx[inside], minlength=self.binning.n_cells)
        est = tuple_counts(occ, self.s) / self.norm
        self.total += est
        self.total_sq += est * est
        self.snapshots += 1
        if replica_start:
            self.replicas += 1

    def merge(self, other: "HistogramAccumulator") -> "HistogramAccumulator":
        if (other.s, other.binning, other.N) != (self.s, self.binning, self.N):
            raise ValueError("cannot merge histograms with different order, binning or N")
        return HistogramAccumulator(
            self.s, self.binning, self.N, self.total + other.total,
            self.total_sq + other.total_sq, self.snapshots + other.snapshots,
            self.replicas + other.replicas, self.out_of_window + other.out_of_window,
            self.samples + other.samples)

    def finalize(self) -> "GradedHistogram":
        m = self.snapshots
        if m == 0:
            raise ValueError("no snapshots accumulated")
        mean = self.total / m
        if m > 1:
            var = np.maximum(self.total_sq / m - mean * mean, 0.0) * m / (m - 1)
            stderr = np.sqrt(var / m)
        else:
            stderr = np.full_like(mean, np.nan)
        return GradedHistogram(self.s, self.binning, mean, stderr, self.N, m, self.replicas,
                               self.out_of_window, self.samples)


@dataclass
class GradedHistogram:
    """Tabulated order-s function on ``binning``-cells (``(M,)*s`` array)."""

    s: int
    binning: Binning
    values: np.ndarray
    stderr: np.ndarray
    N: int
    snapshots: int = 0
    replicas: int = 0
    out_of_window: int = 0
    samples: int = 0
    kind: str = "F"

    @property
    def cell_volume(self) -> float:
        return self.binning.cell_volume ** self.s

    def integral(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    def density_normalized(self) -> np.ndarray:
        """Values multiplied by ``N (N-1) ... (N-s+1)``."""
        return self.values * falling_factorial(self.N, self.s)

    def momentum_marginal(self, pooled: bool = True):
        """Order-1 momentum marginal: per-component histograms or pooled over components.

        Returns ``(edges, density)``; pooled histograms average the
        component marginals (requires equal momentum binning per axis).
        """
        if self.s != 1:
            raise ValueError("momentum marginal needs an order-1 histogram")
        b = self.binning
        d = b.dim
        arr = self.values.reshape(b.shape) * self.cell_volume
        margs = []
        for k in range(d):
            axes = tuple(a for a in range(2 * d) if a != d + k)
            mass = arr.sum(axis=axes)
            margs.append(mass / (2 * b.p_max / b.p_bins[k]))
        if not pooled:
            return [b.p_edges(k) for k in range(d)], margs
        if len(set(b.p_bins)) != 1:
            raise ValueError("pooling needs equal momentum bins on every axis")
        return b.p_edges(0), np.mean(margs, axis=0)


def estimate_reduced_density(ensemble: Iterable[HardSphereSystem], s: int,
                             binning: Binning) -> GradedHistogram:
    """Falling-factorial-normalized order-s histogram over all snapshots."""
    acc = None
    for sys in ensemble:
        if acc is None:
            acc = HistogramAccumulator(s, binning, sys.n)
            ref = (sys.n, sys.sigma, sys.box)
        elif (sys.n, sys.sigma, sys.box) != ref:
            raise ValueError("snapshots must share N, sigma and box")
        acc.add(sys, replica_start=True)
    if acc is None:
        raise ValueError("empty ensemble")
    return acc.finalize()


def _check_same_binning(hists: Sequence[GradedHistogram]) -> None:
    for h in hists[1:]:
        if h.binning != hists[0].binning:
            raise ValueError("histograms have different binnings")


def estimate_correlations(F: Sequence[GradedHistogram]) -> GradedHistogram:
    """Order-s correlation function from ``F_1..F_s`` by per-cell cluster inversion."""
    F = list(F)
    _check_same_binning(F)
    s = len(F)
    if [h.s for h in F] != list(range(1, s + 1)):
        raise ValueError("need histograms of orders 1..s in order")
    seq = GradedSequence(tuple([1.0] + [h.values for h in F]), "histogram")
    G = ln_star(seq)[s]
    top = F[-1]
    return GradedHistogram(s, top.binning, G, np.full_like(G, np.nan), top.N, top.snapshots,
                           top.replicas, top.out_of_window, top.samples, kind="G")


def reconstruct_distributions(G: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Inverse of :func:`estimate_correlations` on raw arrays ``G_1..G_s``."""
    seq = GradedSequence(tuple([0.0] + list(G)), "histogram")
    u = exp_star(seq)
    return [u[k] for k in range(1, len(G) + 1)]


def product_density(F1: GradedHistogram) -> np.ndarray:
    return np.multiply.outer(F1.values, F1.values)


def retained_cells(F1: GradedHistogram, floor: float = 1e-3) -> np.ndarray:
    prod = product_density(F1)
    top = prod.max()
    return prod >= floor * top if top > 0 else np.zeros_like(prod, dtype=bool)


def chaos_metric(F1: GradedHistogram, F2: GradedHistogram, floor: float = 1e-3) -> float:
    """``sum |F2 - F1 x F1| * cell volume`` over cells where the product exceeds ``floor * max``."""
    if F2.s != 2 or F1.s != 1:
        raise ValueError("chaos metric needs order-1 and order-2 histograms")
    _check_same_binning([F1, F2])
    mask = retained_cells(F1, floor)
    diff = np.abs(F2.values - product_density(F1))
    return float(np.sum(diff[mask]) * F2.cell_volume)


def dispersion_of_additive_observable(a1, G1: GradedHistogram, G2: GradedHistogram,
                                      n_particles: int | None = None) -> float:
    """Dispersion functional of the additive observable with one-particle part ``a1``.

    Returns ``int (a1^2 - <A>^2) G1 + iint a1 a1 G2`` with ``<A> = int a1 G1``
    (cell sums).  With ``n_particles = N`` the unit-mass histograms are
    scaled to the variance of ``sum_i a1(x_i)``:
    ``N [int (a1^2 - <A>^2) G1 + (N - 1) iint a1 a1 G2]``.
    """
    _check_same_binning([G1, G2])
    a = np.asarray(a1, dtype=float).reshape(-1)
    v1 = G1.binning.cell_volume
    g1 = G1.values.reshape(-1)
    mean = float(np.sum(a * g1) * v1)
    single = float(np.sum((a * a - mean * mean) * g1) * v1)
    pair = float(a @ G2.values @ a) * v1 * v1
    if n_particles is None:
        return single + pair
    N = n_particles
    return N * (single + (N - 1) * pair)


def tabulate_on_cells(binning: Binning, func) -> np.ndarray:
    """Evaluate ``func(q, p)`` at every cell centre (flat cell order)."""
    d = binning.dim
    centres = [0.5 * (binning.q_edges(k)[1:] + binning.q_edges(k)[:-1]) for k in range(d)]
    centres += [0.5 * (binning.p_edges(k)[1:] + binning.p_edges(k)[:-1]) for k in range(d)]
    grids = np.meshgrid(*centres, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    return np.asarray(func(pts[:, :d], pts[:, d:]), dtype=float)


# --------------------------------------------------------------------------
# text export

HISTOGRAM_FORMAT_VERSION = 1


def write_histogram(h: GradedHistogram, path, header_lines: Sequence[str] = ()) -> None:
    """Delimited text: header with binning, then ``indices value stderr`` per nonzero cell."""
    with open(path, "w") as fh:
        fh.write(f"# format_version {HISTOGRAM_FORMAT_VERSION}\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# kind {h.kind} order {h.s} N {h.N} snapshots {h.snapshots} "
                 f"replicas {h.replicas} out_of_window {h.out_of_window} samples {h.samples}\n")
        fh.write(f"# binning {h.binning.describe()}\n")
        fh.write("# " + " ".join(f"cell{k}" for k in range(h.s)) + " value stderr\n")
        nz = np.argwhere(h.values != 0)
        for idx in nz:
            t = tuple(idx)
            err = h.stderr[t]
            fh.write(" ".join(str(int(x)) for x in t)
                     + f" {h.values[t]:.17g} {err:.17g}\n")
