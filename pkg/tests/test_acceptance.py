"""Acceptance criteria AC1..AC11, each at its stated tolerance and runtime budget.

Every test prints one ``ACn PASS|FAIL`` line with the measured numbers,
then asserts.  Run with ``pytest -s tests/test_acceptance.py`` to see the
lines interleaved, or read them from the captured output of a normal run.
"""

import math
import time
from fractions import Fraction
from random import Random

import numpy as np
import pytest

from hardspheres import partitions as P
from hardspheres.cli import cli_dispatch
from hardspheres.collisions import MOMENTUM_QUANTUM, Restitution, apply_elastic_collision
from hardspheres.dynamics import EvolutionStats, evolve_to, forward_reverse
from hardspheres.estimation import (Binning, InitialStateSpec, PairCorrelationTable,
                                    estimate_correlations, estimate_reduced_density,
                                    reconstruct_distributions, sample_chaos_configuration,
                                    sample_momenta)
from hardspheres.experiments import (run_boltzmann_grad_sweep, run_correlation_propagation,
                                     run_granular_cooling)
from hardspheres.kinetic import GridDensity1D, KineticEnsemble, dsmc_run, granular_boltzmann_rhs
from hardspheres.phase import BoxSpec, scaling_sequence
from hardspheres.rng import derive_stream

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(tag, ok, seconds, limit, detail):
        status = "PASS" if ok and seconds < limit else "FAIL"
        with capsys.disabled():
            print(f"\n{tag} {status} ({seconds:.1f} s of {limit:.0f} s) {detail}")
        return status == "PASS"
    return emit


def test_ac1_collision_map_exactness(report):
    start = time.perf_counter()
    n = 1_000_000
    rng = np.random.default_rng(1)
    k = rng.integers(-2 ** 48, 2 ** 48, size=(2, n, 3))
    p1, p2 = k[0] * MOMENTUM_QUANTUM, k[1] * MOMENTUM_QUANTUM
    eta = rng.normal(size=(n, 3))
    eta /= np.linalg.norm(eta, axis=1)[:, None]
    a1, a2 = apply_elastic_collision(p1, p2, eta)
    mom_err = int(np.count_nonzero((a1 + a2) != (p1 + p2)))
    e0 = np.sum(p1 * p1 + p2 * p2, axis=1)
    e1 = np.sum(a1 * a1 + a2 * a2, axis=1)
    e_rel = float(np.max(np.abs(e1 - e0) / e0))
    b1, b2 = apply_elastic_collision(a1, a2, eta)
    inv_err = int(np.count_nonzero(b1 != p1) + np.count_nonzero(b2 != p2))
    secs = time.perf_counter() - start
    ok = report("AC1", mom_err == 0 and e_rel < 1e-12 and inv_err == 0, secs, 10,
                f"events={n} momentum_mismatches={mom_err} max_energy_rel={e_rel:.2e} "
                f"involution_mismatches={inv_err}")
    assert ok


def test_ac2_reversibility(report):
    start = time.perf_counter()
    box = BoxSpec.cube(3.0, 2)
    sigma = 0.5
    spec = InitialStateSpec()
    worst, fewest = 0.0, math.inf
    for k in range(20):
        s = sample_chaos_configuration(spec, 5, sigma, box, derive_stream(2, f"rev/{k}"))
        duration, events = 2.0, 0
        while events < 50:
            duration *= 1.5
            st = EvolutionStats()
            evolve_to(s, duration, stats=st)
            events = st.collisions
        back = forward_reverse(s, duration, precision=60)
        d = back.q - s.q
        d -= 3.0 * np.round(d / 3.0)
        worst = max(worst, float(np.max(np.abs(d))))
        fewest = min(fewest, events)
    secs = time.perf_counter() - start
    ok = report("AC2", worst < 1e-6 * sigma and fewest >= 50, secs, 30,
                f"systems=20 min_events={fewest} max_position_error={worst:.2e} "
                f"bound={1e-6 * sigma:.1e}")
    assert ok


def test_ac3_combinatorial_identities(report):
    start = time.perf_counter()
    delta = all(P.delta_identity_check(n) == (1 if n == 1 else 0) for n in range(1, 11))
    bell = all(sum(P.stirling2(n, k) for k in range(n + 1)) == P.bell(n) for n in range(1, 13))
    enum = all(sum(1 for _ in P.enumerate_set_partitions(n)) == P.bell(n) for n in range(1, 11))
    bound = all(P.cumulant_bound_check(n)[2] for n in range(13))
    rng = Random(3)
    rt = True
    for _ in range(20):
        h = P.GradedSequence(tuple([Fraction(0)] + [Fraction(rng.randint(-9, 9), rng.randint(1, 9))
                                                    for _ in range(8)]))
        rt &= P.ln_star(P.exp_star(h)) == h
    secs = time.perf_counter() - start
    ok = report("AC3", delta and bell and enum and bound and rt, secs, 60,
                f"delta={delta} stirling_bell={bell} enumeration={enum} bound={bound} "
                f"ln_exp_level8={rt}")
    assert ok


def test_ac4_cluster_inversion(report):
    start = time.perf_counter()
    rng = Random(4)
    exact = True
    for s in range(1, 6):
        for _ in range(5):
            F = {Z: Fraction(rng.randint(-20, 20), rng.randint(1, 9)) for Z in P.nonempty_subsets(s)}
            G = P.cluster_invert_all(F, s)
            exact &= P.cluster_forward_all(G, s) == F
    box = BoxSpec.cube(5.0, 2)
    ens = [sample_chaos_configuration(InitialStateSpec(), 12, 0.3, box, derive_stream(4, f"h{k}"))
           for k in range(30)]
    b = Binning.for_box(box, 2, 2)
    Fh = [estimate_reduced_density(ens, s, b) for s in (1, 2, 3)]
    Gh = [estimate_correlations(Fh[:s]).values for s in (1, 2, 3)]
    back = reconstruct_distributions(Gh)
    hist_err = max(float(np.max(np.abs(r - f.values))) for r, f in zip(back, Fh))
    secs = time.perf_counter() - start
    ok = report("AC4", exact and hist_err < 1e-10, secs, 10,
                f"rational_round_trip={exact} histogram_max_cell_error={hist_err:.2e}")
    assert ok


def test_ac5_rods_free_transport(report):
    start = time.perf_counter()
    box = BoxSpec.cube(50.0, 1)
    pts = scaling_sequence(50, 0.2, [1, 2, 4], box)
    rep = run_boltzmann_grad_sweep(pts, InitialStateSpec(momentum_law="bimodal"), [2.0, 10.0],
                                   40, 5, box, q_bins=4, p_bins=6)
    conserved = all(p["velocity_multiset_conserved"] for p in rep.points)
    ratios = [l / p["noise_floor"] for p in rep.points for l in p["l1"]]
    collisions = [p["collisions"] for p in rep.points]
    secs = time.perf_counter() - start
    ok = report("AC5", conserved and max(ratios) < 2.0 and min(collisions) > 0, secs, 60,
                f"points={len(pts)} multiset_conserved={conserved} "
                f"max_l1_over_floor={max(ratios):.3f} collisions={collisions}")
    assert ok


def test_ac6_dsmc_equilibrium(report):
    start = time.perf_counter()
    n = 100_000
    L = 10.0
    rng = derive_stream(6, "ac6").generator()
    spec = InitialStateSpec(momentum_law="bimodal")
    p = sample_momenta(spec, n, 3, rng)
    ens = KineticEnsemble(rng.random((n, 3)) * L, p, BoxSpec.cube(L, 3), 0.1,
                          weight=3.0 * 20000 / n, cells=(2, 2, 2))

    def ratio(x):
        s = np.sum(x * x, axis=1)
        return float(np.mean(s * s) / np.mean(s) ** 2)

    r0 = ratio(ens.p)
    end, recs = dsmc_run(ens, 0.01, 500, derive_stream(6, "ac6/run"), output_every=25,
                         h_bins=10, h_pmax=4.0)
    r1 = ratio(end.p)
    rel = abs(r1 - 5 / 3) / (5 / 3)
    H = [r["H"] for r in recs]
    viol = [H[k + 1] > H[k] + 3 * recs[k + 1]["H_stderr"] for k in range(len(H) - 1)]
    consecutive = any(a and b for a, b in zip(viol, viol[1:]))
    secs = time.perf_counter() - start
    ok = report("AC6", rel < 0.02 and not consecutive, secs, 120,
                f"samples={n} ratio {r0:.4f} -> {r1:.4f} (rel dev {rel:.4f}) "
                f"H {H[0]:.4f} -> {H[-1]:.4f} violations={sum(viol)} consecutive={consecutive}")
    assert ok


def test_ac7_boltzmann_grad_trend(report):
    start = time.perf_counter()
    box = BoxSpec.cube(10.0, 2)
    pts = scaling_sequence(200, 0.05, [1, 2, 4], box)
    rep = run_boltzmann_grad_sweep(pts, InitialStateSpec(momentum_law="bimodal"), [1.0, 3.0],
                                   100, 7, box, q_bins=2, p_bins=6, dsmc_samples=1_000_000)
    v = rep.verdicts
    secs = time.perf_counter() - start
    chaos = [round(x, 5) for x in v["chaos"]["values"]]
    l1 = [round(x, 5) for x in v["l1"]["values"]]
    ok = report("AC7", v["pass"], secs, 1200,
                f"N={[p.N for p in pts]} chaos={chaos} (inv {v['chaos']['inversions']}) "
                f"l1={l1} (inv {v['l1']['inversions']})")
    assert ok


def test_ac8_correlation_propagation(report):
    start = time.perf_counter()
    box = BoxSpec.cube(10.0, 2)
    pts = scaling_sequence(200, 0.05, [1, 2], box)
    init = InitialStateSpec("correlated", g2=PairCorrelationTable.depleted_shell(1.0, 0.3))
    rep = run_correlation_propagation(pts, init, [0.5, 1.5, 3.0], 160, 11, box,
                                      g2_source="measured", chains=8)
    v = rep.verdicts["discrepancy"]
    secs = time.perf_counter() - start
    ok = report("AC8", rep.verdicts["pass"] and v["inversions"] == 0, secs, 1200,
                f"N={[p.N for p in pts]} discrepancy_at_t3={[round(x, 5) for x in v['values']]} "
                f"inversions={v['inversions']}")
    assert ok


def test_ac9_granular_dissipation(report):
    start = time.perf_counter()
    hot = run_granular_cooling(20, 0.1, 0.9, 20.0, np.linspace(0.5, 10.0, 20), 20, 9)
    elastic = run_granular_cooling(20, 0.1, 1.0, 20.0, np.linspace(0.5, 10.0, 20), 5, 9)
    e0 = elastic.energy[0]
    drift = max(abs(e - e0) / e0 for e in elastic.energy)
    quasi = run_granular_cooling(500, 0.1, 0.99, 500.0, np.linspace(0.5, 8.0, 16), 20, 9)
    f = quasi.friction
    in_window = sum(f["window"])
    secs = time.perf_counter() - start
    ok = (hot.monotone and hot.negative_losses == 0 and hot.max_loss_error < 1e-12
          and drift < 1e-8 and f["max_deviation_in_window"] < 0.1 and in_window >= 2)
    ok = report("AC9", ok, secs, 600,
                f"e=0.9 monotone={hot.monotone} E_end/E0={hot.energy[-1] / hot.energy[0]:.3f} "
                f"max_loss_rel_error={hot.max_loss_error:.1e}; e=1 drift={drift:.1e}; "
                f"e=0.99 max_dev={f['max_deviation_in_window']:.4f} over {in_window} window "
                f"times, E_end/E0={quasi.energy[-1] / quasi.energy[0]:.3f}")
    assert ok


def test_ac10_granular_operator(report):
    start = time.perf_counter()
    f = GridDensity1D.uniform_grid(10.0, 800, lambda p: np.exp(-p * p / 2) / math.sqrt(2 * math.pi))
    zero = bool(np.all(granular_boltzmann_rhs(f, Restitution(1.0)) == 0.0))
    worst_mass = worst_mom = 0.0
    energy_neg = True
    for e in (0.1, 0.5, 0.9, 0.99):
        rhs = granular_boltzmann_rhs(f, Restitution(e))
        worst_mass = max(worst_mass, abs(float(np.sum(rhs)) * f.dp))
        worst_mom = max(worst_mom, abs(float(np.sum(f.p * rhs)) * f.dp))
        energy_neg &= float(np.sum(f.p ** 2 * rhs)) * f.dp < 0
    secs = time.perf_counter() - start
    ok = report("AC10", zero and worst_mass < 1e-8 and worst_mom < 1e-8 and energy_neg, secs, 30,
                f"elastic_identically_zero={zero} max_mass={worst_mass:.1e} "
                f"max_momentum={worst_mom:.1e} energy_negative={energy_neg}")
    assert ok


def test_ac11_determinism(report, tmp_path, capsys):
    import pathlib
    configs = pathlib.Path(__file__).resolve().parent.parent / "configs"
    start = time.perf_counter()
    same = True
    compared = 0
    for kind, name in (("scaling", "scaling.json"), ("dsmc", "dsmc.json"),
                       ("granular", "granular.json"), ("simulate", "simulate.json")):
        for run in ("a", "b"):
            code = cli_dispatch([kind, "--config", str(configs / name), "--out",
                                 str(tmp_path / kind / run), "--quiet"])
            assert code == 0
        for path in sorted((tmp_path / kind / "a").iterdir()):
            if path.name == "timing.json":
                continue
            compared += 1
            same &= path.read_bytes() == (tmp_path / kind / "b" / path.name).read_bytes()
    capsys.readouterr()
    secs = time.perf_counter() - start
    ok = report("AC11", same and compared > 0, secs, 600,
                f"files_compared={compared} byte_identical={same}")
    assert ok
