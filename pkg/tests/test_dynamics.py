import math

import numpy as np
import pytest

from hardspheres.collisions import Restitution
from hardspheres.dynamics import (PathologicalStateError, evolve_by, evolve_to, forward_reverse,
                                  scattering_apply)
from hardspheres.estimation import InitialStateSpec, sample_chaos_configuration
from hardspheres.phase import (BoxSpec, HardSphereSystem, PhasePoint, conserved_quantities,
                               is_allowed_configuration)
from hardspheres.rng import derive_stream


def naive_evolve(q, p, sigma, L, t_end):
    """All-pairs event loop with plain float reflection; periodic cube of edge L.

    Steps are capped so that no pair can switch its nearest image between
    two recomputations.  Returns final positions (wrapped), momenta and the
    list of colliding pairs.
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    n = len(q)
    t = 0.0
    events = []
    while True:
        vmax = np.max(np.linalg.norm(p, axis=1))
        horizon = (L / 2 - sigma) / (2 * vmax) if vmax > 0 else math.inf
        best, pair = math.inf, None
        for i in range(n):
            for j in range(i + 1, n):
                dq = q[i] - q[j]
                dq -= L * np.floor(dq / L + 0.5)
                dv = p[i] - p[j]
                b = dq @ dv
                if b >= 0:
                    continue
                a = dv @ dv
                c = dq @ dq - sigma * sigma
                disc = b * b - a * c
                if disc < 0:
                    continue
                s = (-b - math.sqrt(disc)) / a
                if s < best:
                    best, pair = s, (i, j, dq)
        step = min(best, horizon, t_end - t)
        q = q + p * step
        t += step
        if t >= t_end:
            return np.mod(q, L), p, events
        if step == best:
            i, j, _ = pair
            dq = q[i] - q[j]
            dq -= L * np.floor(dq / L + 0.5)
            eta = dq / np.linalg.norm(dq)
            k = eta * (eta @ (p[i] - p[j]))
            p[i] -= k
            p[j] += k
            events.append((i, j))


def chaos_system(N, sigma, L, dim, seed, law="maxwellian"):
    return sample_chaos_configuration(InitialStateSpec(momentum_law=law), N, sigma,
                                      BoxSpec.cube(L, dim), derive_stream(seed, "test"))


class TestFreeFlight:
    def test_single_particle_wraps(self):
        box = BoxSpec.cube(10.0, 2)
        s = HardSphereSystem(0.5, [[9.0, 1.0]], [[1.5, -0.5]], box)
        out = evolve_to(s, 4.0)
        assert out.q.ravel().tolist() == pytest.approx([5.0, 9.0])
        assert out.time == 4.0

    def test_open_box_no_wrap(self):
        box = BoxSpec.cube(10.0, 1, periodic=False)
        s = HardSphereSystem(0.5, [[9.0]], [[2.0]], box)
        assert evolve_to(s, 3.0).q[0, 0] == 15.0


class TestAgainstNaiveEngine:
    def test_oracle_sees_collisions(self):
        total = sum(len(naive_evolve(s.q, s.p, 0.6, 6.0, 1.5)[2])
                    for s in (chaos_system(8, 0.6, 6.0, 2, k) for k in range(12)))
        assert total >= 12

    @pytest.mark.parametrize("seed", range(12))
    def test_two_dimensional(self, seed):
        s = chaos_system(8, 0.6, 6.0, 2, seed)
        events = []
        out = evolve_to(s, 1.5, on_collision=lambda ev, b, a: events.append((ev.i, ev.j)))
        q, p, ref = naive_evolve(s.q, s.p, 0.6, 6.0, 1.5)
        assert events == ref
        d = out.q - q
        d -= 6.0 * np.round(d / 6.0)
        assert np.max(np.abs(d)) < 1e-8
        assert np.max(np.abs(out.p - p)) < 1e-8

    @pytest.mark.parametrize("seed", range(6))
    def test_three_dimensional(self, seed):
        s = chaos_system(10, 1.0, 5.0, 3, 100 + seed)
        events = []
        out = evolve_to(s, 1.0, on_collision=lambda ev, b, a: events.append((ev.i, ev.j)))
        q, p, ref = naive_evolve(s.q, s.p, 1.0, 5.0, 1.0)
        assert events == ref
        d = out.q - q
        d -= 5.0 * np.round(d / 5.0)
        assert np.max(np.abs(d)) < 1e-8

    def test_many_cells(self):
        # cell lists engage (>= 3 cells per axis); pair sequence matches all-pairs search
        s = chaos_system(40, 0.4, 8.0, 2, 7)
        events = []
        evolve_to(s, 0.8, on_collision=lambda ev, b, a: events.append((ev.i, ev.j)))
        _, _, ref = naive_evolve(s.q, s.p, 0.4, 8.0, 0.8)
        assert events == ref and len(ref) > 5


class TestInvariants:
    def test_rod_velocity_multiset(self):
        s = chaos_system(50, 0.5, 100.0, 1, 3)
        out = evolve_to(s, 40.0)
        assert np.array_equal(np.sort(out.p.ravel()), np.sort(s.p.ravel()))

    def test_conservation_and_allowed_after_events(self):
        s = chaos_system(60, 0.3, 8.0, 2, 11)
        m0, e0 = conserved_quantities(s)
        seen = []

        def check(ev, before, after):
            assert abs(math.sqrt(sum(x * x for x in ev.eta)) - 1.0) < 1e-12
            (a1, a2), (b1, b2) = before, after
            assert np.array_equal(np.add(a1, a2), np.add(b1, b2))
            seen.append(ev.time)

        cur = s
        for t in np.linspace(0.2, 4.0, 20):
            cur = evolve_to(cur, t, on_collision=check)
            assert is_allowed_configuration(cur)
        m1, e1 = conserved_quantities(cur)
        assert np.array_equal(m0, m1)
        assert abs(e1 - e0) / e0 < 1e-12
        assert seen == sorted(seen) and len(seen) > 50

    def test_contact_distance_at_events(self):
        s = chaos_system(30, 0.5, 6.0, 2, 5)
        engine_states = []

        def grab(ev, before, after):
            engine_states.append(ev)

        evolve_to(s, 1.0, on_collision=grab)
        # stop just short of each event: the pair sits at contact distance
        for ev in engine_states[:3]:
            prior = evolve_to(s, ev.time * (1 - 1e-12))
            d = prior.q[ev.i] - prior.q[ev.j]
            d -= 6.0 * np.round(d / 6.0)
            assert np.linalg.norm(d) == pytest.approx(0.5, rel=1e-9)

    def test_semigroup(self):
        s = chaos_system(30, 0.4, 6.0, 2, 21)
        whole = evolve_to(s, 2.0)
        half = evolve_to(evolve_to(s, 1.0), 2.0)
        d = whole.q - half.q
        d -= 6.0 * np.round(d / 6.0)
        assert np.max(np.abs(d)) < 1e-9
        assert np.max(np.abs(whole.p - half.p)) < 1e-9

    def test_energy_drift_long_run(self):
        s = chaos_system(100, 0.4, 10.0, 2, 8)
        _, e0 = conserved_quantities(s)
        count = []
        out = evolve_to(s, 130.0, on_collision=lambda *a: count.append(1))
        _, e1 = conserved_quantities(out)
        assert len(count) > 10000
        assert abs(e1 - e0) / e0 < 1e-12


class TestReversal:
    @pytest.mark.parametrize("seed", range(5))
    def test_three_discs(self, seed):
        s = chaos_system(3, 1.0, 4.0, 2, 50 + seed)
        fwd = evolve_to(s, 5.0)
        back = evolve_to(fwd.replace(p=-fwd.p, time=0.0), 5.0)
        d = back.q - s.q
        d -= 4.0 * np.round(d / 4.0)
        assert np.max(np.abs(d)) < 1e-6 * s.sigma

    def test_backward_time_by_reversal(self):
        s = chaos_system(10, 0.5, 5.0, 2, 2)
        fwd = evolve_to(s, 2.0)
        back = evolve_to(fwd, 0.0)
        d = back.q - s.q
        d -= 5.0 * np.round(d / 5.0)
        assert back.time == 0.0 and np.max(np.abs(d)) < 1e-8

    def test_forward_reverse_precision(self):
        s = chaos_system(5, 1.0, 5.0, 2, 77)
        out = forward_reverse(s, 20.0, precision=40)
        d = out.q - s.q
        d -= 5.0 * np.round(d / 5.0)
        assert np.max(np.abs(d)) < 1e-6 * s.sigma

    def test_inelastic_cannot_run_backward(self):
        s = chaos_system(5, 0.5, 20.0, 1, 1)
        with pytest.raises(ValueError):
            evolve_by(s, -1.0, mode=Restitution(0.9))


class TestErrors:
    def test_symmetric_triple_contact(self):
        box = BoxSpec.cube(100.0, 1, periodic=False)
        s = HardSphereSystem(1.0, [[10.0], [12.0], [14.0]], [[1.0], [0.0], [-1.0]], box)
        with pytest.raises(PathologicalStateError):
            evolve_to(s, 5.0)

    def test_inelastic_needs_one_dimension(self):
        s = chaos_system(5, 0.5, 10.0, 2, 1)
        with pytest.raises(ValueError):
            evolve_to(s, 1.0, mode=Restitution(0.9))

    def test_event_cap(self):
        s = chaos_system(50, 0.4, 6.0, 2, 4)
        with pytest.raises(RuntimeError):
            evolve_to(s, 10.0, max_events=10)

    def test_grazing_is_no_op(self):
        box = BoxSpec.cube(100.0, 2, periodic=False)
        s = HardSphereSystem(1.0, [[10.0, 10.0], [11.0, 10.0]], [[0.0, 1.0], [0.0, 1.0]], box)
        out = evolve_to(s, 1.0)
        assert out.p.tolist() == s.p.tolist()


def phi_momentum(x):
    return math.exp(-x.p[0] ** 2) + 0.5 * x.p[0]


class TestScattering:
    def test_zero_time(self):
        pts = [PhasePoint((0.0,), (-1.0,)), PhasePoint((3.0,), (1.0,))]
        full, cum = scattering_apply(0.0, pts, 1.0, phi_momentum)
        assert full == phi_momentum(pts[0]) * phi_momentum(pts[1]) and cum == 0.0

    def test_no_interaction(self):
        pts = [PhasePoint((0.0, 0.0), (1.0, 0.0)), PhasePoint((0.0, 5.0), (1.0, 0.0))]
        _, cum = scattering_apply(3.0, pts, 1.0, phi_momentum)
        assert cum == 0.0

    def test_head_on_rods(self):
        x1, x2 = PhasePoint((0.0,), (-1.0,)), PhasePoint((3.0,), (1.0,))
        full, cum = scattering_apply(3.0, [x1, x2], 1.0, phi_momentum)
        swap = phi_momentum(PhasePoint((0.0,), (1.0,))) * phi_momentum(PhasePoint((3.0,), (-1.0,)))
        assert full == pytest.approx(swap, rel=1e-14)
        assert cum == pytest.approx(swap - phi_momentum(x1) * phi_momentum(x2), rel=1e-14)

    def test_head_on_rods_positions(self):
        # explicit trajectory: backward collision at s = 1, states (-1, +1) and (4, -1) at s = 3
        x1, x2 = PhasePoint((0.0,), (-1.0,)), PhasePoint((3.0,), (1.0,))
        phis = [lambda x: x.q[0] + 10 * x.p[0], lambda x: x.q[0] - 10 * x.p[0]]
        full, _ = scattering_apply(3.0, [x1, x2], 1.0, phis)
        assert full == pytest.approx((2.0 + 10.0) * (1.0 + 10.0), rel=1e-14)

    def test_three_body_cumulant_vanishes_for_spectator(self):
        x1, x2 = PhasePoint((0.0, 0.0), (-1.0, 0.0)), PhasePoint((3.0, 0.0), (1.0, 0.0))
        far = PhasePoint((0.0, 50.0), (0.3, 0.1))
        phi = lambda x: 1.0 + 0.3 * x.p[0] + 0.1 * x.q[1]
        full3, cum3 = scattering_apply(2.5, [x1, x2, far], 1.0, phi)
        full2, _ = scattering_apply(2.5, [x1, x2], 1.0, phi)
        assert full3 == pytest.approx(full2 * phi(far), rel=1e-13)
        assert cum3 == pytest.approx(0.0, abs=1e-12)

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            scattering_apply(1.0, [PhasePoint((0.0,), (0.0,))], 1.0, phi_momentum)
