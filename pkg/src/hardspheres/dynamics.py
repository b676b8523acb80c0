"""Event-driven hard-sphere dynamics.

Particles stream freely between contacts; at each contact the pair's
momenta are replaced by the collision map.  Events come off a binary heap
with lazy invalidation: every particle carries a counter bumped whenever
its momentum changes, and a popped event is stale when a counter differs
from the one recorded at prediction time.

On periodic boxes each axis is split into ``n >= 3`` cells of edge at
least sigma, or kept as a single cell.  A particle reports a crossing
event whenever it leaves its cell (for a single cell: whenever it wraps),
at which point its contacts are re-predicted.  Between two crossings both
particles of a pair stay inside fixed cells, so the periodic image of the
partner is fixed by the cell offset (or, for single-cell axes, one of the
three images -L, 0, +L), and no contact through another image is missed.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .collisions import Restitution, elastic_transfer_scalar, inelastic_transfer_1d
from .partitions import enumerate_set_partitions, mobius_weight
from .phase import BoxSpec, HardSphereSystem, PhasePoint

SIMULTANEITY_WINDOW = 1e-12
_COLLISION, _CROSSING = 0, 1


class PathologicalStateError(RuntimeError):
    """Several contacts involving one particle coincide in time."""


@dataclass(frozen=True)
class CollisionEvent:
    """A processed contact; ``eta`` points from particle j to particle i."""

    time: float
    i: int
    j: int
    eta: tuple[float, ...]


def cell_counts(box: BoxSpec, sigma: float, n: int, per_cell: float = 4.0) -> tuple[int, ...]:
    """Cells per periodic axis: edge >= sigma, about ``per_cell`` particles each."""
    if not box.periodic:
        return (1,) * box.dim
    edge = max(sigma, (per_cell * box.volume / max(n, 1)) ** (1.0 / box.dim))
    counts = []
    for L in box.lengths:
        k = int(L / edge)
        while k > 1 and L / k < sigma:
            k -= 1
        counts.append(k if k >= 3 else 1)
    return tuple(counts)


class EventDrivenEngine:
    """Mutable event loop behind :func:`evolve_to`.

    ``restitution`` of ``None`` (or e = 1) means elastic dynamics.
    """

    def __init__(self, sys: HardSphereSystem, restitution: Restitution | None = None,
                 on_collision: Callable | None = None, cells_per_axis=None,
                 max_events: int | None = None, precision: int | None = None):
        if restitution is not None and not restitution.elastic and sys.dim != 1:
            raise ValueError("inelastic dynamics is implemented for d = 1 only")
        self.box = sys.box
        self.d = sys.dim
        self.n = sys.n
        self.restitution = None if restitution is None or restitution.elastic else restitution
        self.on_collision = on_collision
        self.max_events = max_events
        if precision is None:
            num, self._sqrt, self._floor = float, math.sqrt, math.floor
        else:
            import mpmath

            ctx = mpmath.MPContext()
            ctx.dps = int(precision)
            num, self._sqrt, self._floor = ctx.mpf, ctx.sqrt, ctx.floor
        self.high_precision = precision is not None
        self._num = num
        self.sigma = num(sys.sigma)
        self.t = num(sys.time)
        self.periodic = self.box.periodic
        self.L = [num(x) for x in self.box.lengths]
        q = self.box.wrap(sys.q) if self.periodic else np.asarray(sys.q)
        self.q = [[num(float(x)) for x in row] for row in q]
        self.p = [[num(float(x)) for x in row] for row in sys.p]
        self.tl = [self.t] * self.n
        self.count = [0] * self.n
        self.n_collisions = 0
        self.n_crossings = 0
        self._seq = itertools.count()
        vmax = max((self._sqrt(sum(v * v for v in pi)) for pi in self.p), default=0.0)
        self.window = SIMULTANEITY_WINDOW * self.sigma / vmax if vmax > 0 else 0.0

        if self.periodic:
            nc = tuple(cells_per_axis) if cells_per_axis else cell_counts(self.box, self.sigma, self.n)
            if any(k == 2 or k < 1 for k in nc):
                raise ValueError("cells per axis must be 1 or at least 3")
            if any(k > 1 and L / k < self.sigma for k, L in zip(nc, self.L)):
                raise ValueError("cell edge must be at least sigma")
        else:
            nc = (1,) * self.d
        self.ncell = nc
        self.width = [L / k for L, k in zip(self.L, nc)]
        self.cells: dict[tuple, set] = {}
        self.cell_of: list[tuple] = []
        for i, qi in enumerate(self.q):
            c = tuple(min(int(qi[k] / self.width[k]), nc[k] - 1) for k in range(self.d)) \
                if self.periodic else (0,) * self.d
            self.cell_of.append(c)
            self.cells.setdefault(c, set()).add(i)
        # (cell offset, image shift in box lengths) per axis; single-cell
        # periodic axes look at three images of the same cell
        if self.periodic:
            self._axis_moves = [[-1, 0, 1] for _ in range(self.d)]
        else:
            self._axis_moves = [[0] for _ in range(self.d)]
        self._moves = list(itertools.product(*self._axis_moves))
        self.heap: list = []

    # -- geometry ---------------------------------------------------------
    def _position(self, i: int, t: float) -> list:
        """Position at ``t``; stays inside the particle's cell between crossings."""
        dt = t - self.tl[i]
        return [x + v * dt for x, v in zip(self.q[i], self.p[i])]

    def _advance(self, i: int, t: float) -> None:
        dt = t - self.tl[i]
        if dt != 0.0:
            qi = self.q[i]
            pi = self.p[i]
            for k in range(self.d):
                qi[k] += pi[k] * dt
        self.tl[i] = t

    def _min_image(self, i: int, j: int, t: float) -> list:
        qi = self._position(i, t)
        qj = self._position(j, t)
        out = []
        for k in range(self.d):
            dx = qi[k] - qj[k]
            if self.periodic:
                L = self.L[k]
                dx -= L * self._floor(dx / L + 0.5)
            out.append(dx)
        return out

    def _partners(self, i: int):
        """Yield ``(j, shift)``: candidate partner and the image offset of j."""
        c = self.cell_of[i]
        nc = self.ncell
        d = self.d
        cells = self.cells
        for move in self._moves:
            cell = []
            shift = []
            for k in range(d):
                if nc[k] == 1:
                    cell.append(0)
                    shift.append(move[k] * self.L[k])
                else:
                    raw = c[k] + move[k]
                    cell.append(raw % nc[k])
                    shift.append(self.L[k] * (raw // nc[k]))
            members = cells.get(tuple(cell))
            if members:
                for j in members:
                    if j != i:
                        yield j, shift

    # -- prediction -------------------------------------------------------
    def _push(self, t, kind, i, j):
        cj = self.count[j] if kind == _COLLISION else 0
        heapq.heappush(self.heap, (t, next(self._seq), kind, i, j, self.count[i], cj))

    def _predict_collisions(self, i: int, t_end: float, skip: int = -1) -> list:
        """Schedule contacts of ``i``; returns ``(dt, partner)`` for each found."""
        t = self.t
        sigma2 = self.sigma * self.sigma
        pi = self.p[i]
        qi = self._position(i, t)
        found = []
        for j, shift in self._partners(i):
            if j == skip:
                continue
            qj = self._position(j, t)
            pj = self.p[j]
            a = b = 0.0
            c = -sigma2
            for k in range(self.d):
                dq = qi[k] - qj[k] - shift[k]
                v = pi[k] - pj[k]
                b += dq * v
                a += v * v
                c += dq * dq
            if b >= 0.0:
                continue
            disc = b * b - a * c
            if disc < 0.0:
                continue
            dt = c / (-b + self._sqrt(disc))
            if dt < 0.0:
                dt = 0.0
            if t + dt <= t_end:
                self._push(t + dt, _COLLISION, min(i, j), max(i, j))
                found.append((dt, j))
        return found

    def _predict_crossing(self, i: int, t_end: float) -> None:
        if not self.periodic:
            return
        best = math.inf
        best_axis = -1
        pos = self._position(i, self.t)
        c = self.cell_of[i]
        for k in range(self.d):
            v = self.p[i][k]
            if v == 0.0:
                continue
            w = self.width[k]
            off = pos[k] - c[k] * w
            dt = (w - off) / v if v > 0 else -off / v
            if dt < 0.0:
                dt = 0.0
            if dt < best:
                best, best_axis = dt, k
        if best_axis >= 0 and self.t + best <= t_end:
            self._push(self.t + best, _CROSSING, i, best_axis)

    # -- main loop --------------------------------------------------------
    def _valid(self, ev) -> bool:
        _, _, kind, i, j, ci, cj = ev
        if self.count[i] != ci:
            return False
        return kind == _CROSSING or self.count[j] == cj

    def run(self, t_end: float) -> None:
        t_end = self._num(t_end)
        if t_end < self.t:
            raise ValueError("engine only runs forward in time")
        self.heap = []
        for i in range(self.n):
            self._predict_collisions(i, t_end)
            self._predict_crossing(i, t_end)
        heap = self.heap
        while heap:
            ev = heapq.heappop(heap)
            if not self._valid(ev):
                continue
            t, _, kind, i, j, _, _ = ev
            self.t = t
            if kind == _CROSSING:
                self._cross(i, j, t_end)
            else:
                self._check_simultaneous(t, i, j)
                self._collide(i, j, t_end)
                if self.max_events is not None and self.n_collisions > self.max_events:
                    raise RuntimeError(f"more than {self.max_events} collisions before t={t_end}")
        self.t = t_end
        for i in range(self.n):
            self._advance(i, t_end)

    def _check_simultaneous(self, t: float, i: int, j: int) -> None:
        if self.window == 0.0:
            return
        held = []
        heap = self.heap
        try:
            while heap and heap[0][0] <= t + self.window:
                ev = heapq.heappop(heap)
                held.append(ev)
                if (ev[2] == _COLLISION and self._valid(ev)
                        and (ev[3] in (i, j) or ev[4] in (i, j)) and (ev[3], ev[4]) != (i, j)):
                    raise PathologicalStateError(
                        f"simultaneous contacts at t={t!r}: pairs ({i}, {j}) and "
                        f"({ev[3]}, {ev[4]})")
        finally:
            for ev in held:
                heapq.heappush(heap, ev)

    def _cross(self, i: int, axis: int, t_end: float) -> None:
        self._advance(i, self.t)
        old = self.cell_of[i]
        new = list(old)
        step = 1 if self.p[i][axis] > 0 else -1
        new[axis] = (old[axis] + step) % self.ncell[axis]
        new = tuple(new)
        # snap onto the entered face so rounding cannot re-trigger the crossing
        w = self.width[axis]
        self.q[i][axis] = new[axis] * w if step > 0 else (new[axis] + 1) * w
        if new != old:
            self.cells[old].discard(i)
            self.cells.setdefault(new, set()).add(i)
            self.cell_of[i] = new
        self.n_crossings += 1
        self._predict_collisions(i, t_end)
        self._predict_crossing(i, t_end)

    def _collide(self, i: int, j: int, t_end: float) -> None:
        t = self.t
        self._advance(i, t)
        self._advance(j, t)
        dq = self._min_image(i, j, t)
        pi, pj = self.p[i], self.p[j]
        dp = [a - b for a, b in zip(pi, pj)]
        if sum(x * v for x, v in zip(dq, dp)) >= 0.0:
            return  # grazing or already separating: no-op
        r = self._sqrt(sum(x * x for x in dq))
        eta = [x / r for x in dq]
        before = (tuple(pi), tuple(pj))
        if self.d == 1:
            if self.restitution is None:
                D = [dp[0]]
            elif self.high_precision:
                D = [(1 - self._num(self.restitution.epsilon)) * dp[0]]
            else:
                D = [inelastic_transfer_1d(pi[0], pj[0], self.restitution)]
        elif self.high_precision:
            normal = sum(e * v for e, v in zip(eta, dp))
            D = [e * normal for e in eta]
        else:
            D = elastic_transfer_scalar(dp, eta)
        for k in range(self.d):
            pi[k] -= D[k]
            pj[k] += D[k]
        self.count[i] += 1
        self.count[j] += 1
        self.n_collisions += 1
        if self.on_collision is not None:
            self.on_collision(CollisionEvent(t, i, j, tuple(eta)), before, (tuple(pi), tuple(pj)))
        for a, b in ((i, j), (j, i)):
            for dt, k in self._predict_collisions(a, t_end, skip=b if a == j else -1):
                if dt <= self.window and k != b:
                    raise PathologicalStateError(
                        f"particle {a} touches {b} and {k} simultaneously at t={t!r}")
            self._predict_crossing(a, t_end)

    def state(self) -> HardSphereSystem:
        q = np.array([[float(x) for x in row] for row in self.q]).reshape(self.n, self.d)
        q = self.box.wrap(q)
        p = np.array([[float(x) for x in row] for row in self.p]).reshape(self.n, self.d)
        return HardSphereSystem(float(self.sigma), q, p, self.box, float(self.t))


def _mode_restitution(mode) -> Restitution | None:
    if mode is None or mode == "elastic":
        return None
    if isinstance(mode, Restitution):
        return None if mode.elastic else mode
    if isinstance(mode, (int, float)):
        return _mode_restitution(Restitution(float(mode)))
    raise ValueError(f"unknown dynamics mode {mode!r}")


@dataclass
class EvolutionStats:
    collisions: int = 0
    crossings: int = 0


def evolve_to(sys: HardSphereSystem, t_end: float, mode="elastic",
              on_collision: Callable | None = None, stats: EvolutionStats | None = None,
              max_events: int | None = None, precision: int | None = None) -> HardSphereSystem:
    """State at absolute time ``t_end``.

    ``mode`` is ``"elastic"`` or a :class:`Restitution` (d = 1 only).
    Times before ``sys.time`` are reached by momentum reversal, which is
    only defined for elastic dynamics.  ``stats`` (optional) accumulates
    event counts.  ``precision`` (decimal digits) switches the event loop
    to arbitrary-precision arithmetic, for checks that must outrun the
    exponential growth of rounding errors along chaotic trajectories.
    """
    r = _mode_restitution(mode)
    if t_end < sys.time:
        if r is not None:
            raise ValueError("inelastic dynamics cannot be run backward in time")
        flipped = sys.replace(p=-sys.p, time=0.0)
        out = evolve_to(flipped, sys.time - t_end, mode, on_collision, stats, max_events, precision)
        return out.replace(p=-out.p, time=t_end)
    engine = EventDrivenEngine(sys, r, on_collision, max_events=max_events, precision=precision)
    engine.run(t_end)
    if stats is not None:
        stats.collisions += engine.n_collisions
        stats.crossings += engine.n_crossings
    return engine.state()


def evolve_by(sys: HardSphereSystem, dt: float, mode="elastic", **kw) -> HardSphereSystem:
    """Evolve for a signed duration ``dt``."""
    return evolve_to(sys, sys.time + dt, mode, **kw)


def reverse_momenta(sys: HardSphereSystem) -> HardSphereSystem:
    return sys.replace(p=-sys.p)


def forward_reverse(sys: HardSphereSystem, duration: float, precision: int | None = None,
                    stats: EvolutionStats | None = None) -> HardSphereSystem:
    """Evolve for ``duration``, reverse momenta, evolve again, reverse again.

    The whole round trip runs inside one engine, so with ``precision`` set
    no intermediate state is rounded back to double precision.  For the
    reversible elastic flow the result equals ``sys`` up to arithmetic error.
    """
    engine = EventDrivenEngine(sys, precision=precision)
    engine.run(engine.t + engine._num(duration))
    for pi in engine.p:
        for k in range(engine.d):
            pi[k] = -pi[k]
    engine.count = [c + 1 for c in engine.count]
    engine.run(engine.t + engine._num(duration))
    for pi in engine.p:
        for k in range(engine.d):
            pi[k] = -pi[k]
    if stats is not None:
        stats.collisions += engine.n_collisions
        stats.crossings += engine.n_crossings
    return engine.state().replace(time=sys.time)


# --------------------------------------------------------------------------
# scattering operators

def scatter_points(points: Sequence[PhasePoint], sigma: float, t: float) -> list[PhasePoint]:
    """Backward hard-sphere flow for ``t`` in open space, then free flight for ``t``."""
    d = points[0].dim
    box = BoxSpec((1.0,) * d, periodic=False)
    sys = HardSphereSystem.from_points(points, sigma, box)
    back = evolve_to(sys, -t)
    q = back.q + back.p * t
    return [PhasePoint(tuple(qi), tuple(pi)) for qi, pi in zip(q, back.p)]


def scattering_apply(t: float, points: Sequence[PhasePoint], sigma: float, phi):
    """Scattering operator and its cumulant applied to a product test function.

    ``phi`` is one callable taking a :class:`PhasePoint`, or a sequence of
    callables (one per particle).  Returns ``(scattering value, cumulant
    value)`` for 2 or 3 particles in unbounded space.
    """
    points = list(points)
    n = len(points)
    if n not in (2, 3):
        raise ValueError("scattering operators are evaluated for 2 or 3 particles")
    phis = list(phi) if isinstance(phi, (list, tuple)) else [phi] * n
    if len(phis) != n:
        raise ValueError("need one test function per particle")

    def block_value(block) -> float:
        if len(block) == 1:
            k = block[0]
            return phis[k](points[k])
        moved = scatter_points([points[k] for k in block], sigma, t)
        return math.prod(phis[k](x) for k, x in zip(block, moved))

    full = block_value(tuple(range(n)))
    cumulant = 0.0
    for P in enumerate_set_partitions(n):
        if len(P.blocks) == 1:
            value = full
        else:
            value = math.prod(block_value(b) for b in P.blocks)
        cumulant += mobius_weight(P) * value
    return full, cumulant
