"""Command-line entry point: ``hardspheres <subcommand> [--config PATH] ...``.

Exit status 0 on success, 1 on validation errors (configuration, flags,
power check), 2 on runtime failures such as a pathological
multi-collision or a DSMC step that is too large.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from fractions import Fraction
from random import Random

import numpy as np

from . import partitions as P
from .config import ConfigError, RunConfig, load_config
from .dynamics import EvolutionStats, PathologicalStateError, evolve_to
from .estimation import (Binning, DensityError, InitialStateSpec, PairCorrelationTable,
                         SamplerDiagnosticError, chaos_metric, estimate_correlations,
                         estimate_reduced_density, sample_chaos_configuration,
                         sample_correlated_ensemble, sample_momenta, write_histogram)
from .experiments import (PowerCheckError, SweepSettings, _check_sweep, run_boltzmann_grad_sweep,
                          run_correlation_propagation, run_granular_cooling)
from .io import provenance_lines, write_snapshot
from .kinetic import TRUNCATION_NOTE, DsmcStepError, KineticEnsemble, dsmc_run
from .phase import BoxSpec, conserved_quantities, mean_free_path, scaling_sequence
from .rng import derive_stream

SUBCOMMANDS = ("simulate", "dsmc", "scaling", "granular", "estimate", "combinatorics-selftest")
TRUNCATION = {"collision_series": 0, "estimated_orders": 2, "cumulant_levels": 8}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hardspheres", description="Hard-sphere kinetic theory experiments.")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--seed", metavar="U64")
    ap.add_argument("--quiet", action="store_true")
    return ap


# --------------------------------------------------------------------------
# helpers

def _box(cfg: RunConfig) -> BoxSpec:
    return BoxSpec(tuple(cfg.box), periodic=cfg.boundary == "periodic")


def _g2(cfg: RunConfig) -> PairCorrelationTable | None:
    if cfg.g2_path is not None:
        return PairCorrelationTable.read(cfg.g2_path)
    if cfg.g2_shell is not None:
        return PairCorrelationTable.depleted_shell(*cfg.g2_shell)
    return None


def _init(cfg: RunConfig) -> InitialStateSpec:
    g2 = _g2(cfg)
    mode = "correlated" if g2 is not None else "chaos"
    return InitialStateSpec(mode, cfg.beta, g2, cfg.momentum_law)


def _header(cfg: RunConfig) -> list[str]:
    trunc = dict(TRUNCATION)
    return provenance_lines(cfg.digest(), cfg.seed, trunc) + [f"collision_note {TRUNCATION_NOTE}"]


def _ensemble(cfg: RunConfig, name: str):
    init = _init(cfg)
    box = _box(cfg)
    root = derive_stream(cfg.seed, name)
    if init.mode == "correlated":
        return sample_correlated_ensemble(init, cfg.N, cfg.sigma, box, root.child("chain"),
                                          cfg.replicas)
    return [sample_chaos_configuration(init, cfg.N, cfg.sigma, box, root.child("replica", r))
            for r in range(cfg.replicas)]


def _write_records(path, header, records):
    with open(path, "w") as fh:
        fh.write("# format_version 1\n")
        for line in header:
            fh.write(f"# {line}\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# subcommands; each returns a one-line summary

def _validate(cfg: RunConfig) -> None:
    """Constraint checks that need downstream types, run before any work."""
    if cfg.kind == "scaling":
        box = _box(cfg)
        points = scaling_sequence(cfg.N, cfg.sigma, cfg.scaling_factors, box)
        init = _init(cfg)
        kw = dict(q_bins=cfg.q_bins, p_bins=cfg.p_bins, p_max=cfg.p_max)
        if cfg.scaling_mode == "correlation":
            kw = dict(q_bins=cfg.q_bins, p_bins=1, p_max=cfg.p_max or 6.0 / math.sqrt(cfg.beta))
        _check_sweep(points, SweepSettings(box, init, tuple(cfg.t_grid), cfg.replicas, cfg.seed,
                                           **kw))
    if cfg.kind == "estimate":
        Binning.for_box(_box(cfg), cfg.q_bins, cfg.p_bins, cfg.beta, cfg.p_max)
    _g2(cfg)


def cmd_simulate(cfg: RunConfig, out: str) -> str:
    header = _header(cfg)
    mode = "elastic" if cfg.e == 1.0 else cfg.e
    records = []
    stats = EvolutionStats()
    for r, sys0 in enumerate(_ensemble(cfg, "simulate")):
        cur = sys0
        write_snapshot(cur, os.path.join(out, f"snapshot_r{r}_t0.txt"), header)
        for j, t in enumerate(sorted(cfg.t_grid), start=1):
            step = EvolutionStats()
            cur = evolve_to(cur, t, mode, stats=step, max_events=cfg.max_events)
            stats.collisions += step.collisions
            mom, en = conserved_quantities(cur)
            records.append({"format_version": 1, "replica": r, "t": t, "momentum": mom.tolist(),
                            "energy": en, "collisions": step.collisions,
                            "crossings": step.crossings})
            write_snapshot(cur, os.path.join(out, f"snapshot_r{r}_t{j}.txt"), header)
    _write_records(os.path.join(out, "simulate.jsonl"), header, records)
    return f"simulate: {cfg.replicas} replicas of N={cfg.N}, {stats.collisions} collisions"


def cmd_dsmc(cfg: RunConfig, out: str) -> str:
    header = _header(cfg)
    box = _box(cfg)
    init = _init(cfg)
    root = derive_stream(cfg.seed, "dsmc")
    rng = root.child("init").generator()
    n = cfg.dsmc_samples
    q = rng.random((n, cfg.dim)) * np.asarray(box.lengths)
    p = sample_momenta(init, n, cfg.dim, rng)
    lam = mean_free_path(cfg.N, cfg.sigma, box) if cfg.dim > 1 else box.volume / cfg.N
    cells = tuple(max(1, int(L // (lam / 5))) for L in box.lengths)
    ens = KineticEnsemble(q, p, box, cfg.sigma, weight=cfg.N / n, cells=cells)
    pmax = cfg.p_max or 5.0 / math.sqrt(cfg.beta)
    ens, recs = dsmc_run(ens, cfg.dt, cfg.steps, root.child("collide"), None, cfg.output_every,
                         cfg.h_bins, pmax)
    _write_records(os.path.join(out, "dsmc.jsonl"), header, recs)
    last = recs[-1]
    return (f"dsmc: {n} samples, {cfg.steps} steps, {last['collisions']} collisions, "
            f"H={last['H']:.6g}")


def cmd_scaling(cfg: RunConfig, out: str) -> str:
    box = _box(cfg)
    points = scaling_sequence(cfg.N, cfg.sigma, cfg.scaling_factors, box)
    init = _init(cfg)
    if cfg.scaling_mode == "correlation":
        rep = run_correlation_propagation(points, init, cfg.t_grid, cfg.replicas, cfg.seed, box,
                                          workers=cfg.workers, q_bins=cfg.q_bins,
                                          dsmc_samples=cfg.dsmc_samples,
                                          **({"p_max": cfg.p_max} if cfg.p_max else {}))
    else:
        rep = run_boltzmann_grad_sweep(points, init, cfg.t_grid, cfg.replicas, cfg.seed, box,
                                       workers=cfg.workers, q_bins=cfg.q_bins, p_bins=cfg.p_bins,
                                       p_max=cfg.p_max, dsmc_samples=cfg.dsmc_samples)
    rep.write(out, _header(cfg))
    verdict = "no trend verdict" if rep.verdicts is None else \
        ("trend pass" if rep.verdicts["pass"] else "trend FAIL")
    return f"scaling ({rep.kind}): {len(rep.points)} points, {verdict}"


def cmd_granular(cfg: RunConfig, out: str) -> str:
    rep = run_granular_cooling(cfg.N, cfg.sigma, cfg.e, cfg.box[0], cfg.t_grid, cfg.replicas,
                               cfg.seed, beta=cfg.beta, max_events=cfg.max_events)
    rep.write(out, _header(cfg))
    E = rep.energy
    return (f"granular: e={cfg.e} E(0)={E[0]:.6g} E(end)={E[-1]:.6g} "
            f"monotone={rep.monotone} max_loss_error={rep.max_loss_error:.2e}")


def cmd_estimate(cfg: RunConfig, out: str) -> str:
    header = _header(cfg)
    binning = Binning.for_box(_box(cfg), cfg.q_bins, cfg.p_bins, cfg.beta, cfg.p_max)
    t = max(cfg.t_grid)
    mode = "elastic" if cfg.e == 1.0 else cfg.e
    snaps = [evolve_to(s, t, mode, max_events=cfg.max_events) if t > 0 else s
             for s in _ensemble(cfg, "estimate")]
    F1 = estimate_reduced_density(snaps, 1, binning)
    F2 = estimate_reduced_density(snaps, 2, binning)
    G2 = estimate_correlations([F1, F2])
    for h, name in ((F1, "F1"), (F2, "F2"), (G2, "G2")):
        write_histogram(h, os.path.join(out, f"{name}.txt"), header + [f"t {t!r}"])
    chaos = chaos_metric(F1, F2)
    _write_records(os.path.join(out, "estimate.jsonl"), header,
                   [{"format_version": 1, "t": t, "chaos_metric": chaos,
                     "snapshots": F1.snapshots, "out_of_window": F1.out_of_window}])
    return f"estimate: {F1.snapshots} snapshots at t={t}, chaos metric {chaos:.6g}"


def selftest_rows() -> list[tuple[str, bool]]:
    """Exact checks of the partition-lattice identities."""
    rows = []
    rows.append(("delta identity n=1..10",
                 all(P.delta_identity_check(n) == (1 if n == 1 else 0) for n in range(1, 11))))
    rows.append(("sum_k S(n,k) = Bell(n), enumeration count n=1..12",
                 all(sum(P.stirling2(n, k) for k in range(n + 1)) == P.bell(n) for n in range(1, 13))
                 and all(sum(1 for _ in P.enumerate_set_partitions(n)) == P.bell(n)
                         for n in range(1, 10))))
    rows.append(("cumulant bound n!e^(n+2), n=0..12",
                 all(P.cumulant_bound_check(n)[2] for n in range(13))))
    rng = Random(20240601)
    rand = lambda: Fraction(rng.randint(-9, 9), rng.randint(1, 9))
    h = P.GradedSequence(tuple([Fraction(0)] + [rand() for _ in range(8)]))
    rows.append(("ln_star(exp_star(h)) = h, levels <= 8", P.ln_star(P.exp_star(h)) == h))
    u = P.GradedSequence(tuple([Fraction(1)] + [rand() for _ in range(8)]))
    rows.append(("exp_star(ln_star(u)) = u, levels <= 8", P.exp_star(P.ln_star(u)) == u))
    ok = True
    for s in range(1, 6):
        G = {Z: rand() for Z in P.nonempty_subsets(s)}
        F = P.cluster_forward_all(G, s)
        back = P.cluster_invert_all(F, s)
        ok &= back == G
    rows.append(("cluster_invert o cluster_forward = id, s <= 5", ok))
    rows.append(("reduced cumulant coefficients sum to 0, n=1..20",
                 all(sum(P.reduced_cumulant_coefficients(n)) == 0 for n in range(1, 21))))
    a = P.GradedSequence(tuple([Fraction(1)] + [rand() for _ in range(6)]))
    b = P.GradedSequence(tuple([Fraction(1)] + [rand() for _ in range(6)]))
    rows.append(("star product commutative", P.star_product(a, b) == P.star_product(b, a)))
    return rows


def cmd_selftest(out: str | None, quiet: bool) -> tuple[str, bool]:
    rows = selftest_rows()
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {'PASS' if ok else 'FAIL'}" for name, ok in rows]
    if not quiet:
        print("\n".join(lines))
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "selftest.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    passed = sum(ok for _, ok in rows)
    return f"combinatorics-selftest: {passed}/{len(rows)} checks passed", passed == len(rows)


COMMANDS = {"simulate": cmd_simulate, "dsmc": cmd_dsmc, "scaling": cmd_scaling,
            "granular": cmd_granular, "estimate": cmd_estimate}

VALIDATION_ERRORS = (ConfigError, PowerCheckError, DensityError, UsageError, ValueError)
RUNTIME_ERRORS = (PathologicalStateError, DsmcStepError, SamplerDiagnosticError, RuntimeError,
                  FloatingPointError, ArithmeticError, OSError)


def cli_dispatch(argv) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(list(argv))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(ap.format_usage(), end="", file=sys.stderr)
        return 1
    if args.command == "combinatorics-selftest":
        summary, ok = cmd_selftest(args.out, args.quiet)
        if not args.quiet:
            print(summary)
        return 0 if ok else 2
    try:
        if args.config is None:
            raise UsageError(f"--config is required for {args.command}")
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError("kind", f"config is for {cfg.kind!r}, command is {args.command!r}")
        if args.seed is not None:
            try:
                seed = int(args.seed, 10)
            except ValueError:
                raise UsageError(f"--seed must be an unsigned 64-bit integer, got {args.seed!r}")
            if not 0 <= seed < 2 ** 64:
                raise UsageError(f"--seed must be an unsigned 64-bit integer, got {seed}")
            cfg = replace(cfg, seed=seed)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        _validate(cfg)
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(ap.format_usage(), end="", file=sys.stderr)
        return 1
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        os.makedirs(cfg.out, exist_ok=True)
        summary = COMMANDS[args.command](cfg, cfg.out)
    except RUNTIME_ERRORS as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(summary)
    return 0


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
