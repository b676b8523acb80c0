"""Desk-scale experiments: Boltzmann-Grad sweeps (MD against DSMC),
propagation of initial correlations, and granular cooling in one
dimension (MD against the quasi-elastic friction equation).

Every experiment returns a report object whose ``records()`` are plain
JSON-serializable dicts.  Wall-clock runtimes are kept apart from the
records so that reruns with the same seed give byte-identical reports.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .collisions import Restitution, energy_loss_1d
from .dynamics import EvolutionStats, evolve_to
from .estimation import (Binning, GradedHistogram, HistogramAccumulator, InitialStateSpec,
                         chaos_metric, product_density, retained_cells, sample_chaos_configuration,
                         sample_correlated_ensemble, sample_initial, sample_momenta,
                         write_histogram)
from .kinetic import (CollisionStats, GridDensity1D, KineticEnsemble, dsmc_collide, dsmc_stream,
                      friction_stable_dt, granular_friction_step)
from .phase import BoxSpec, HardSphereSystem, ScalingPoint, mean_free_path, pair_distances
from .rng import RngStream, derive_stream

REPORT_FORMAT_VERSION = 1
POWER_FACTOR = 10
ALLOWED_INVERSIONS = 1


class PowerCheckError(ValueError):
    """Too few replica samples for the requested histogram resolution."""


# --------------------------------------------------------------------------
# one-dimensional histograms

@dataclass(frozen=True)
class Histogram1D:
    """Piecewise-constant density on ``edges``."""

    edges: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing with at least two entries")
        if d.shape != (len(e) - 1,):
            raise ValueError("density needs one value per bin")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "density", d)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.widths))

    @classmethod
    def from_samples(cls, x, edges) -> "Histogram1D":
        """Counts in the window divided by total sample count and bin width."""
        x = np.asarray(x, dtype=float).reshape(-1)
        edges = np.asarray(edges, dtype=float)
        counts, _ = np.histogram(x, bins=edges)
        n = max(len(x), 1)
        return cls(edges, counts / (n * np.diff(edges)))

    @classmethod
    def from_cdf(cls, cdf, edges) -> "Histogram1D":
        edges = np.asarray(edges, dtype=float)
        c = np.asarray(cdf(edges), dtype=float)
        return cls(edges, np.diff(c) / np.diff(edges))


def compare_distributions(h1: Histogram1D, h2: Histogram1D) -> tuple[float, float]:
    """L1 distance and Kolmogorov-Smirnov statistic of the normalized inputs."""
    if h1.edges.shape != h2.edges.shape or not np.array_equal(h1.edges, h2.edges):
        raise ValueError("histograms have different binnings")
    w = h1.widths
    m1 = h1.density * w
    m2 = h2.density * w
    if m1.sum() <= 0 or m2.sum() <= 0:
        raise ValueError("cannot normalize a histogram of zero mass")
    m1 = m1 / m1.sum()
    m2 = m2 / m2.sum()
    l1 = float(np.sum(np.abs(m1 - m2)))
    ks = float(np.max(np.abs(np.cumsum(m1) - np.cumsum(m2))))
    return l1, ks


def marginal_cdf(spec: InitialStateSpec, x):
    """CDF of one momentum component under the initial law."""
    x = np.asarray(x, dtype=float)
    s = 1.0 / math.sqrt(spec.beta)
    if spec.momentum_law == "maxwellian":
        return ndtr(x / s)
    a = math.sqrt(0.75) * s
    w = 0.5 * s
    return 0.5 * (ndtr((x - a) / w) + ndtr((x + a) / w))


def mean_speed(beta: float, dim: int) -> float:
    """Mean of ``|p|`` under the Maxwellian of inverse temperature ``beta``."""
    c = {1: math.sqrt(2.0 / math.pi), 2: math.sqrt(math.pi / 2.0), 3: math.sqrt(8.0 / math.pi)}[dim]
    return c / math.sqrt(beta)


def _free_path(N: int, sigma: float, box: BoxSpec) -> float:
    if box.dim == 1 or sigma == 0.0:
        return box.volume / N if box.dim == 1 else math.inf
    return mean_free_path(N, sigma, box)


# --------------------------------------------------------------------------
# verdicts

def trend_verdict(values: Sequence[float], allowed: int = ALLOWED_INVERSIONS) -> dict:
    """Non-increasing check along the sweep with ``allowed`` inversions."""
    vals = [float(v) for v in values]
    inv = sum(1 for a, b in zip(vals, vals[1:]) if b > a)
    return {"values": vals, "inversions": inv, "allowed": allowed, "pass": inv <= allowed}


def power_check(replicas: int, N: int, binning: Binning, factor: int = POWER_FACTOR) -> None:
    """Require ``replicas * N >= factor * cells`` for the one-particle histogram."""
    need = factor * binning.n_cells
    if replicas * N < need:
        raise PowerCheckError(
            f"replicas*N = {replicas * N} is below {factor} x {binning.n_cells} cells = {need}; "
            f"raise replicas to at least {math.ceil(need / N)} or coarsen the binning")


# --------------------------------------------------------------------------
# reports

def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


@dataclass
class SweepReport:
    """Per-point measurements of a scaling sweep plus trend verdicts.

    ``points`` are ordered by decreasing epsilon.  ``histograms`` maps a
    point index to ``(t, F1)`` pairs; ``timings`` holds wall-clock seconds
    and is written to a separate file.
    """

    kind: str
    dim: int
    seed: int
    settings: dict
    points: list
    verdicts: dict | None
    histograms: dict = field(default_factory=dict, repr=False)
    timings: list = field(default_factory=list, repr=False)

    def records(self) -> list[dict]:
        head = {"format_version": REPORT_FORMAT_VERSION, "record": "sweep", "kind": self.kind,
                "dim": self.dim, "seed": self.seed, "settings": self.settings}
        out = [head]
        out += [dict(p, record="point") for p in self.points]
        out.append({"record": "verdicts", "verdicts": self.verdicts})
        return out

    def summary_rows(self) -> list[list]:
        metric = "chaos" if self.kind == "chaos" else "discrepancy"
        rows = [["index", "N", "sigma", "epsilon", "t", metric, "l1_momentum"]]
        for p in self.points:
            for j, t in enumerate(p["times"]):
                rows.append([p["index"], p["N"], p["sigma"], p["epsilon"], t,
                             p[metric][j], p["l1"][j] if p["l1"] else ""])
        return rows

    def write(self, out_dir, provenance: Sequence[str] = ()) -> list[str]:
        """Write ``report.jsonl``, ``summary.tsv``, per-point F1 files and ``timing.json``."""
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        path = os.path.join(out_dir, "report.jsonl")
        with open(path, "w") as fh:
            fh.write(f"# format_version {REPORT_FORMAT_VERSION}\n")
            for line in provenance:
                fh.write(f"# {line}\n")
            for rec in self.records():
                fh.write(_dump(rec) + "\n")
        paths.append(path)
        path = os.path.join(out_dir, "summary.tsv")
        with open(path, "w") as fh:
            fh.write(f"# format_version {REPORT_FORMAT_VERSION}\n")
            for line in provenance:
                fh.write(f"# {line}\n")
            for row in self.summary_rows():
                fh.write("\t".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
        paths.append(path)
        for k, items in sorted(self.histograms.items()):
            for j, (t, h) in enumerate(items):
                path = os.path.join(out_dir, f"point{k}_t{j}_F1.txt")
                write_histogram(h, path, list(provenance) + [f"point {k} t {t!r}"])
                paths.append(path)
        path = os.path.join(out_dir, "timing.json")
        with open(path, "w") as fh:
            fh.write(_dump({"format_version": REPORT_FORMAT_VERSION,
                            "runtime_seconds": self.timings}) + "\n")
        paths.append(path)
        return paths


# --------------------------------------------------------------------------
# Boltzmann-Grad sweep

@dataclass(frozen=True)
class SweepSettings:
    box: BoxSpec
    init: InitialStateSpec
    t_obs: tuple
    replicas: int
    seed: int
    q_bins: int = 2
    p_bins: int = 6
    p_max: float | None = None
    marginal_bins: int = 24
    dsmc_samples: int = 20000
    dsmc_steps_per_tau: int = 20
    dsmc_cells_per_path: float = 5.0
    chains: int = 4
    chain_stride: int = 5
    g2_source: str = "measured"
    radial_bins: int = 100
    quadrature_nodes: int = 20000

    def binning(self) -> Binning:
        return Binning.for_box(self.box, self.q_bins, self.p_bins, self.init.beta, self.p_max)

    def marginal_edges(self) -> np.ndarray:
        pm = self.binning().p_max
        return np.linspace(-pm, pm, self.marginal_bins + 1)

    def describe(self) -> dict:
        b = self.binning()
        return {"box": list(self.box.lengths), "periodic": self.box.periodic,
                "beta": self.init.beta, "momentum_law": self.init.momentum_law,
                "init_mode": self.init.mode, "t_obs": list(self.t_obs),
                "replicas": self.replicas, "q_bins": list(b.q_bins), "p_bins": list(b.p_bins),
                "p_max": b.p_max, "marginal_bins": self.marginal_bins,
                "dsmc_samples": self.dsmc_samples, "dsmc_steps_per_tau": self.dsmc_steps_per_tau,
                "chains": self.chains, "chain_stride": self.chain_stride,
                "g2_source": self.g2_source}


def _times(t_obs) -> list[float]:
    ts = sorted(float(t) for t in t_obs)
    if any(t < 0 for t in ts):
        raise ValueError("observation times must be >= 0")
    return [0.0] + [t for t in ts if t > 0]


def _dsmc_marginals(point: ScalingPoint, st: SweepSettings, times: list[float],
                    stream: RngStream) -> list[Histogram1D]:
    """Pooled momentum-component histograms of a matched DSMC run."""
    box = st.box
    d = box.dim
    n = st.dsmc_samples
    rng = stream.child("init").generator()
    q = rng.random((n, d)) * np.asarray(box.lengths)
    p = sample_momenta(st.init, n, d, rng)
    lam = _free_path(point.N, point.sigma, box)
    cell_edge = lam / st.dsmc_cells_per_path
    cells = tuple(max(1, int(L // cell_edge)) for L in box.lengths)
    ens = KineticEnsemble(q, p, box, point.sigma, weight=point.N / n, cells=cells)
    tau = lam / mean_speed(st.init.beta, d)
    dt_target = tau / st.dsmc_steps_per_tau
    edges = st.marginal_edges()
    out = []
    stats = CollisionStats()
    step = 0
    for k, t in enumerate(times):
        if k > 0:
            span = t - times[k - 1]
            m = max(1, math.ceil(span / dt_target))
            dt = span / m
            for _ in range(m):
                step += 1
                ens = dsmc_collide(dsmc_stream(ens, dt), dt, None, stream.child("collide"), step, stats)
            ens.t = t
        out.append(Histogram1D.from_samples(ens.p, edges))
    return out


@dataclass
class RadialProfile:
    """Measured radial pair correlation on ``edges``; 1 beyond the last edge."""

    edges: np.ndarray
    values: np.ndarray

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self.edges, r, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.values))
        return np.where(inside, self.values[np.clip(idx, 0, len(self.values) - 1)], 1.0)

    @classmethod
    def unit(cls) -> "RadialProfile":
        return cls(np.array([0.0, 1e-300]), np.array([1.0]))


def _shell_measure(edges: np.ndarray, dim: int) -> np.ndarray:
    unit = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}[dim]
    return unit * np.diff(edges ** dim)


def measure_radial_profile(snapshots: Sequence[HardSphereSystem], bins: int = 100,
                           r_max: float | None = None) -> RadialProfile:
    """Pair-distance histogram over snapshots divided by its ideal-gas expectation."""
    first = snapshots[0]
    box = first.box
    if r_max is None:
        r_max = 0.5 * min(box.lengths)
    edges = np.linspace(0.0, r_max, bins + 1)
    counts = np.zeros(bins)
    for sys in snapshots:
        counts += np.histogram(pair_distances(sys), bins=edges)[0]
    N = first.n
    expected = len(snapshots) * 0.5 * N * (N - 1) * _shell_measure(edges, box.dim) / box.volume
    return RadialProfile(edges, counts / expected)


def predicted_pair_correlation(binning: Binning, profile: RadialProfile, init: InitialStateSpec,
                               t: float, F1: GradedHistogram, stream: RngStream,
                               nodes: int = 20000) -> np.ndarray:
    """Cell averages of ``(g2(q1 - p1 t, q2 - p2 t) - 1) F1 F1`` for a homogeneous state.

    Position-only binning (one momentum bin per axis) is required; the
    cell-pair average depends only on the cell offset, and is computed by
    Monte Carlo quadrature with uniform positions in the cells and
    momentum nodes drawn from the initial law.
    """
    if any(b != 1 for b in binning.p_bins):
        raise ValueError("the prediction is tabulated on position-only binnings")
    d = binning.dim
    L = np.asarray(binning.box_lengths)
    nb = np.asarray(binning.q_bins)
    w = L / nb
    rng = stream.generator()
    u1 = rng.random((nodes, d))
    u2 = rng.random((nodes, d))
    dpv = sample_momenta(init, nodes, d, rng) - sample_momenta(init, nodes, d, rng)
    table = np.zeros(tuple(nb))
    for off in product(*[range(b) for b in nb]):
        q1 = u1 * w
        q2 = (np.asarray(off) + u2) * w
        x = q1 - q2 - dpv * t
        x -= L * np.round(x / L)
        table[off] = float(np.mean(profile(np.sqrt(np.sum(x * x, axis=1))))) - 1.0
    cells = np.array(list(product(*[range(b) for b in nb])))       # flat order
    offs = (cells[None, :, :] - cells[:, None, :]) % nb               # [a, b] -> b - a
    gamma = table[tuple(offs[..., k] for k in range(d))]
    return gamma * product_density(F1)


def _run_point(k: int, point: ScalingPoint, st: SweepSettings, kind: str):
    start = time.perf_counter()
    box = st.box
    d = box.dim
    binning = st.binning()
    times = _times(st.t_obs)
    root = derive_stream(st.seed, f"{kind}/point{k}")
    edges = st.marginal_edges()
    acc1 = [HistogramAccumulator(1, binning, point.N) for _ in times]
    acc2 = [HistogramAccumulator(2, binning, point.N) for _ in times]
    pooled = [[] for _ in times]
    multiset = True
    stats = EvolutionStats()

    if kind == "correlation":
        chains = max(1, min(st.chains, st.replicas))
        per = math.ceil(st.replicas / chains)
        initial = []
        for c in range(chains):
            initial += sample_correlated_ensemble(st.init, point.N, point.sigma, box,
                                                  root.child("chain", c), per,
                                                  stride_per_particle=st.chain_stride)
    else:
        initial = [sample_initial(st.init, point.N, point.sigma, box, root.child("md", r))
                   for r in range(st.replicas)]

    for sys0 in initial:
        cur = sys0
        for j, t in enumerate(times):
            if t > cur.time:
                cur = evolve_to(cur, t, stats=stats)
            acc1[j].add(cur, replica_start=True)
            acc2[j].add(cur, replica_start=True)
            pooled[j].append(cur.p.reshape(-1))
        if d == 1 and not np.array_equal(np.sort(cur.p.ravel()), np.sort(sys0.p.ravel())):
            multiset = False

    F1 = [a.finalize() for a in acc1]
    F2 = [a.finalize() for a in acc2]
    md_marg = [Histogram1D.from_samples(np.concatenate(x), edges) for x in pooled]
    lam = _free_path(point.N, point.sigma, box)
    tau = lam / mean_speed(st.init.beta, d)

    if d == 1:
        ref = [Histogram1D.from_cdf(lambda x: marginal_cdf(st.init, x), edges)] * len(times)
        reference = "free_transport"
    elif kind == "chaos":
        ref = _dsmc_marginals(point, st, times, root.child("dsmc"))
        reference = "dsmc"
    else:
        ref = None
        reference = None
    cmp = [compare_distributions(m, r) for m, r in zip(md_marg, ref)] if ref else []

    rec = {"index": k, "N": point.N, "sigma": point.sigma, "epsilon": point.epsilon,
           "replicas": len(initial), "stream": root.name, "mean_free_path": lam,
           "mean_free_time": tau, "times": times,
           "t_over_tau": [t / tau if math.isfinite(tau) and tau > 0 else None for t in times],
           "chaos": [chaos_metric(a, b) for a, b in zip(F1, F2)],
           "l1": [c[0] for c in cmp], "ks": [c[1] for c in cmp], "reference": reference,
           "noise_floor": cmp[0][0] if cmp else None,
           "collisions": stats.collisions, "crossings": stats.crossings,
           "out_of_window": [h.out_of_window for h in F1],
           "velocity_multiset_conserved": multiset if d == 1 else None}

    if kind == "correlation":
        table = st.init.g2
        flat = table is None or all(v == 1.0 for v in table.values)
        if flat:
            profile = RadialProfile.unit()
        elif st.g2_source == "measured":
            profile = measure_radial_profile(initial, bins=st.radial_bins)
        else:
            profile = _table_profile(table, st.radial_bins)
        disc, pred_mass, meas_mass = [], [], []
        for j, t in enumerate(times):
            G2 = F2[j].values - product_density(F1[j])
            pred = predicted_pair_correlation(binning, profile, st.init, t, F1[j],
                                              root.child("quadrature"), st.quadrature_nodes)
            mask = retained_cells(F1[j])
            vol = F2[j].cell_volume
            disc.append(float(np.sum(np.abs(G2 - pred)[mask]) * vol))
            pred_mass.append(float(np.sum(np.abs(pred)[mask]) * vol))
            meas_mass.append(float(np.sum(np.abs(G2)[mask]) * vol))
        rec.update({"discrepancy": disc, "prediction_l1_mass": pred_mass,
                    "measured_l1_mass": meas_mass, "g2_profile": "unit" if flat else st.g2_source})
    hists = list(zip(times, F1))
    return rec, hists, time.perf_counter() - start


def _table_profile(table, bins: int) -> RadialProfile:
    """Target table sampled as a step profile (for ``g2_source="table"``)."""
    r_max = table.r_max
    edges = np.linspace(0.0, r_max, bins + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    return RadialProfile(edges, np.asarray(table(mids)))


def _check_sweep(points: Sequence[ScalingPoint], st: SweepSettings) -> list[ScalingPoint]:
    if len(points) < 1:
        raise ValueError("a sweep needs at least one scaling point")
    if st.replicas < 1:
        raise ValueError("replicas must be >= 1")
    pts = sorted(points, key=lambda sp: -sp.epsilon)
    d = st.box.dim
    if d > 1:
        vals = [sp.N * sp.sigma ** (d - 1) for sp in pts]
        if max(vals) - min(vals) > 1e-9 * max(vals):
            raise ValueError(f"N*sigma^(d-1) differs across points: {vals}")
    binning = st.binning()
    for sp in pts:
        power_check(st.replicas, sp.N, binning)
    return pts


def _sweep(kind: str, points, st: SweepSettings, workers: int) -> SweepReport:
    pts = _check_sweep(points, st)
    if workers > 1 and len(pts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point, range(len(pts)), pts, [st] * len(pts),
                                  [kind] * len(pts)))
    else:
        results = [_run_point(k, sp, st, kind) for k, sp in enumerate(pts)]
    recs = [r[0] for r in results]
    verdicts = None
    if len(recs) >= 2:
        if kind == "chaos":
            verdicts = {"chaos": trend_verdict([r["chaos"][-1] for r in recs])}
            if recs[0]["l1"]:
                verdicts["l1"] = trend_verdict([r["l1"][-1] for r in recs])
        else:
            verdicts = {"discrepancy": trend_verdict([r["discrepancy"][-1] for r in recs])}
        verdicts["pass"] = all(v["pass"] for v in verdicts.values())
    settings = st.describe()
    return SweepReport(kind, st.box.dim, st.seed, settings, recs, verdicts,
                       {k: r[1] for k, r in enumerate(results)},
                       [{"index": k, "seconds": r[2]} for k, r in enumerate(results)])


def run_boltzmann_grad_sweep(points: Sequence[ScalingPoint], init: InitialStateSpec, t_obs,
                             replicas: int, seed: int, box: BoxSpec, workers: int = 1,
                             **options) -> SweepReport:
    """Chaos metric and MD-vs-kinetic momentum distance along a scaling sequence.

    For each point, ``replicas`` independent chaotic initial states are
    evolved by event-driven MD to every time in ``t_obs``; the order-1 and
    order-2 histograms give the chaos metric, and the pooled momentum
    components are compared with a DSMC run started from the same law
    (``d = 1``: with the exact free-transport law).  ``options`` override
    :class:`SweepSettings` fields.
    """
    st = SweepSettings(box, init, tuple(t_obs), replicas, seed, **options)
    return _sweep("chaos", points, st, workers)


def run_correlation_propagation(points: Sequence[ScalingPoint], init: InitialStateSpec, t_obs,
                                replicas: int, seed: int, box: BoxSpec, workers: int = 1,
                                **options) -> SweepReport:
    """Measured pair correlations against free-streamed initial correlations.

    Initial states come from the pair-weighted Metropolis chain.  The
    prediction at time ``t`` is ``(g2(q1 - p1 t, q2 - p2 t) - 1) F1 F1``
    with ``F1`` measured at ``t`` and ``g2`` the radial pair correlation of
    the sampled initial ensemble (``g2_source="measured"``, the default) or
    the target table (``"table"``).
    """
    options.setdefault("q_bins", 4)
    options.setdefault("p_bins", 1)
    options.setdefault("p_max", 6.0 / math.sqrt(init.beta))
    st = SweepSettings(box, init, tuple(t_obs), replicas, seed, **options)
    if st.init.mode != "correlated" and st.init.g2 is None:
        raise ValueError("correlation propagation needs a pair-correlated initial state")
    if st.g2_source not in ("measured", "table"):
        raise ValueError(f"unknown g2 source {st.g2_source!r}")
    return _sweep("correlation", points, st, workers)


# --------------------------------------------------------------------------
# granular cooling

@dataclass
class CoolingReport:
    N: int
    sigma: float
    e: float
    box_length: float
    seed: int
    replicas: int
    times: list
    energy: list
    energy_stderr: list
    collisions: int
    max_loss_error: float
    negative_losses: int
    monotone: bool
    friction: dict | None
    runtime: float = field(default=0.0, repr=False)

    def records(self) -> list[dict]:
        rec = {"format_version": REPORT_FORMAT_VERSION, "record": "granular",
               "N": self.N, "sigma": self.sigma, "e": self.e, "box_length": self.box_length,
               "seed": self.seed, "replicas": self.replicas, "times": self.times,
               "energy": self.energy, "energy_stderr": self.energy_stderr,
               "collisions": self.collisions, "max_loss_error": self.max_loss_error,
               "negative_losses": self.negative_losses, "monotone": self.monotone,
               "friction": self.friction}
        return [rec]

    def write(self, out_dir, provenance: Sequence[str] = ()) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "report.jsonl")
        with open(path, "w") as fh:
            fh.write(f"# format_version {REPORT_FORMAT_VERSION}\n")
            for line in provenance:
                fh.write(f"# {line}\n")
            for rec in self.records():
                fh.write(_dump(rec) + "\n")
        tpath = os.path.join(out_dir, "timing.json")
        with open(tpath, "w") as fh:
            fh.write(_dump({"format_version": REPORT_FORMAT_VERSION,
                            "runtime_seconds": self.runtime}) + "\n")
        return [path, tpath]


def friction_cooling_curve(beta: float, scale: float, times: Sequence[float],
                           p_max: float | None = None, grid: int = 400,
                           cfl: float = 0.4) -> list[float]:
    """Mean kinetic energy per particle along the homogeneous friction flow.

    The state is ``scale`` times the Maxwellian of ``beta``; the flow
    ``d_t f = d_p (J f)`` then runs at rate ``scale`` per unit of ``t``.
    """
    if p_max is None:
        p_max = 8.0 / math.sqrt(beta)
    f = GridDensity1D.uniform_grid(
        p_max, grid, lambda p: scale * np.exp(-0.5 * beta * p * p) * math.sqrt(beta / (2 * math.pi)))
    out = []
    for t in times:
        while f.t < t:
            dt = min(friction_stable_dt(f, cfl), t - f.t)
            f = granular_friction_step(f, dt, cfl)
            if t - f.t < 1e-12 * max(1.0, t):
                f.t = t
        out.append(0.5 * f.moment(2) / f.mass())
    return out


def run_granular_cooling(N: int, sigma: float, e: float, box_length: float, t_grid,
                         replicas: int, seed: int, beta: float = 1.0,
                         friction_grid: int = 400, max_events: int | None = None) -> CoolingReport:
    """Ensemble cooling curve of inelastic hard rods on a periodic line.

    Each collision's dissipated energy is compared with the closed form
    ``(1 - e^2)(p1 - p2)^2 / 4`` relative to the pair's kinetic energy.  For
    ``e >= 0.95`` the friction equation is integrated from the Maxwellian
    with rate ``c = (1 - e)/2 * n * chi``, ``n = N / L`` and the contact
    value ``chi = 1 / (1 - n sigma)``; the relative deviation of the two
    normalized cooling curves over the window where the MD energy stays
    above 90% of its initial value is reported.
    """
    if not 0.0 < e <= 1.0:
        raise ValueError(f"restitution must lie in (0, 1], got {e}")
    start = time.perf_counter()
    r = Restitution(e)
    box = BoxSpec.cube(box_length, 1)
    times = _times(t_grid)
    root = derive_stream(seed, "granular")
    spec = InitialStateSpec(beta=beta)
    E = np.zeros((replicas, len(times)))
    worst = 0.0
    negatives = 0
    stats = EvolutionStats()

    def check(event, before, after):
        nonlocal worst, negatives
        (a,), (b,) = before
        (a2,), (b2,) = after
        pair = 0.5 * (a * a + b * b)
        lost = pair - 0.5 * (a2 * a2 + b2 * b2)
        if lost < 0:
            negatives += 1
        if pair > 0:
            worst = max(worst, abs(lost - energy_loss_1d(a, b, r)) / pair)

    for k in range(replicas):
        cur = sample_chaos_configuration(spec, N, sigma, box, root.child("replica", k))
        for j, t in enumerate(times):
            if t > cur.time:
                cur = evolve_to(cur, t, mode=r, on_collision=check, stats=stats,
                                max_events=max_events)
            E[k, j] = 0.5 * float(np.sum(cur.p * cur.p)) / N
    mean = E.mean(axis=0)
    err = E.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(len(times))
    monotone = bool(np.all(np.diff(mean) <= 0.0))

    friction = None
    if 0.95 <= e < 1.0:
        n = N / box_length
        chi = 1.0 / (1.0 - n * sigma)
        c = 0.5 * (1.0 - e) * n * chi
        curve = friction_cooling_curve(beta, c, times, grid=friction_grid)
        md_rel = mean / mean[0]
        fr_rel = np.asarray(curve) / curve[0]
        window = md_rel >= 0.9
        dev = np.abs(md_rel - fr_rel) / fr_rel
        loss_md = 1.0 - md_rel
        loss_fr = 1.0 - fr_rel
        loss_dev = [float(abs(a - b) / b) if b > 0 else 0.0 for a, b in zip(loss_md, loss_fr)]
        friction = {"scale": c, "chi": chi, "density": n, "energy": [float(x) for x in curve],
                    "relative_deviation": [float(x) for x in dev],
                    "window": [bool(x) for x in window],
                    "max_deviation_in_window": float(np.max(dev[window])),
                    "loss_relative_deviation": loss_dev,
                    "grid": friction_grid}
    return CoolingReport(N, sigma, e, box_length, seed, replicas, times,
                         [float(x) for x in mean], [float(x) for x in err], stats.collisions,
                         float(worst), negatives, monotone, friction,
                         time.perf_counter() - start)
