"""Binary collision maps and pair collision times.

Momentum bookkeeping
--------------------
All samplers in this package put momenta on the dyadic lattice
``MOMENTUM_QUANTUM * Z``.  The collision maps move a lattice multiple of
momentum from one particle to the other, so for lattice inputs with
``|p| <= EXACT_MOMENTUM_RANGE`` total momentum is conserved bit for bit.

The elastic map reflects the relative momentum through the plane
orthogonal to ``eta``.  It is computed as ``L o F o L^-1`` where ``F``
negates the first coordinate and ``L`` is a rotation taking ``e_1`` to
``eta`` built from Givens rotations, each factored into three rounded
shears (integer lifting).  A rounded shear is inverted exactly by
subtracting the same rounded increment, so ``L^-1`` is the exact inverse
of ``L`` and the map is an exact involution.  Rounding perturbs the
energy by a few lattice units, far below 1e-12 relative for thermal
momenta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .phase import BoxSpec, PhasePoint, minimum_image_displacement

MOMENTUM_QUANTUM = 2.0 ** -46
EXACT_MOMENTUM_RANGE = 32.0
UNIT_TOLERANCE = 1e-9


class InvalidImpactVector(ValueError):
    """Impact vector is not a unit vector."""


def quantize_momenta(p, quantum: float = MOMENTUM_QUANTUM) -> np.ndarray:
    """Round momenta to the nearest lattice point ``quantum * k``."""
    return np.rint(np.asarray(p, dtype=float) / quantum) * quantum


@dataclass(frozen=True)
class Restitution:
    """Restitution coefficient ``e`` in (0, 1] and ``eps = (1 - e) / 2``."""

    e: float

    def __post_init__(self):
        if not (0.0 < self.e <= 1.0):
            raise ValueError(f"restitution coefficient must lie in (0, 1], got {self.e}")

    @property
    def epsilon(self) -> float:
        return (1.0 - self.e) / 2.0

    @property
    def elastic(self) -> bool:
        return self.e == 1.0


# --------------------------------------------------------------------------
# pair collision time

def collision_time(dq, dp, sigma: float) -> float | None:
    """Smallest ``t >= 0`` with ``|dq + t dp| = sigma`` while approaching.

    ``dq``/``dp`` are relative position and momentum of the pair.  Pairs
    already overlapping and approaching collide immediately (``t = 0``).
    """
    b = sum(x * v for x, v in zip(dq, dp))
    if b >= 0.0:
        return None
    a = sum(v * v for v in dp)
    c = sum(x * x for x in dq) - sigma * sigma
    disc = b * b - a * c
    if disc < 0.0:
        return None
    t = c / (-b + math.sqrt(disc))
    return t if t > 0.0 else 0.0


def pair_collision_time(a: PhasePoint, b: PhasePoint, sigma: float,
                        box: BoxSpec) -> float | None:
    """Time until particles ``a`` and ``b`` touch, or ``None`` if they never do.

    The separation uses the minimum image at the current instant.
    """
    dq = minimum_image_displacement(b.q, a.q, box)
    dp = np.subtract(a.p, b.p)
    t = collision_time(dq, dp, sigma)
    if t is not None and t == 0.0:
        return None if sum(x * x for x in dq) > sigma * sigma else 0.0
    return t


# --------------------------------------------------------------------------
# elastic map

def _givens_cs(eta: np.ndarray):
    """Cosines and sines of the Givens angles with R e_1 = eta.

    Only the four basic operations and sqrt are used, so the numpy and
    pure-Python paths round identically.
    """
    d = eta.shape[-1]
    e0, e1 = eta[..., 0], eta[..., 1]
    if d == 2:
        r = np.sqrt(e0 * e0 + e1 * e1)
        return (e0 / r, e1 / r), None
    e2 = np.clip(eta[..., 2], -1.0, 1.0)
    cg = np.sqrt(e0 * e0 + e1 * e1)
    safe = np.where(cg > 0.0, cg, 1.0)
    ca = np.where(cg > 0.0, e0 / safe, 1.0)
    sa = np.where(cg > 0.0, e1 / safe, 0.0)
    return (ca, sa), (cg, e2)


def _shear_coefficients(c, s):
    """Half-turn flag and shear coefficients for the rotation (c, s)."""
    flip = c < 0.0
    c = np.where(flip, -c, c)
    s = np.where(flip, -s, s)
    return flip, s / (1.0 + c), s


def _lift_rotate(x, y, cs, inverse=False):
    """Rotate the pair (x, y) by the angle with cosine/sine ``cs``.

    The rotation is three rounded shears; angles beyond +-pi/2 are reduced
    by an exact half turn first.  ``inverse`` undoes the forward operation
    exactly.
    """
    flip, t, s = _shear_coefficients(*cs)
    if not inverse:
        x = np.where(flip, -x, x)
        y = np.where(flip, -y, y)
        x = x + np.rint(-t * y)
        y = y + np.rint(s * x)
        x = x + np.rint(-t * y)
    else:
        x = x - np.rint(-t * y)
        y = y - np.rint(s * x)
        x = x - np.rint(-t * y)
        x = np.where(flip, -x, x)
        y = np.where(flip, -y, y)
    return x, y


def _reflect_lattice(u: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Exact lattice involution approximating ``u - 2 <eta, u> eta``.

    ``u`` holds lattice coordinates (integers or half integers); ``eta``
    has the same shape.  Rows are independent.
    """
    d = u.shape[-1]
    alpha, gamma = _givens_cs(eta)
    w = [u[..., k].copy() for k in range(d)]
    # L^-1: undo G01(alpha) then undo G02(gamma)
    w[0], w[1] = _lift_rotate(w[0], w[1], alpha, inverse=True)
    if d == 3:
        w[0], w[2] = _lift_rotate(w[0], w[2], gamma, inverse=True)
    w[0] = -w[0]
    if d == 3:
        w[0], w[2] = _lift_rotate(w[0], w[2], gamma)
    w[0], w[1] = _lift_rotate(w[0], w[1], alpha)
    return np.stack(w, axis=-1)


def _check_unit(eta: np.ndarray) -> None:
    norms = np.sqrt(np.sum(eta * eta, axis=-1))
    if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
        raise InvalidImpactVector(f"impact vector must have unit length, got norm(s) {norms}")


def elastic_transfer(dp: np.ndarray, eta: np.ndarray,
                     quantum: float = MOMENTUM_QUANTUM) -> np.ndarray:
    """Lattice momentum transfer ``D`` with ``p1* = p1 - D``, ``p2* = p2 + D``.

    ``dp = p1 - p2``.  Accepts single vectors or ``(n, d)`` stacks.
    """
    dp = np.asarray(dp, dtype=float)
    eta = np.asarray(eta, dtype=float)
    d = dp.shape[-1]
    if d == 1:
        return dp.copy()
    u = np.rint(dp / quantum) * 0.5          # integer or half-integer coords
    u_star = _reflect_lattice(u, np.broadcast_to(eta, dp.shape))
    return (u - u_star) * quantum            # = (dq - dq*) / 2, a lattice multiple


def apply_elastic_collision(p1, p2, eta, quantum: float = MOMENTUM_QUANTUM):
    """Post-collision momenta ``p1 - eta<eta,p1-p2>``, ``p2 + eta<eta,p1-p2>``.

    Accepts single vectors or stacked ``(n, d)`` arrays of pairs.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    eta = np.asarray(eta, dtype=float)
    _check_unit(eta)
    if p1.shape[-1] == 1:
        return p2.copy(), p1.copy()
    D = elastic_transfer(p1 - p2, eta, quantum)
    return p1 - D, p2 + D


def elastic_transfer_scalar(dp: list, eta: list, quantum: float = MOMENTUM_QUANTUM) -> list:
    """Pure-Python twin of :func:`elastic_transfer` for one pair (d = 2, 3).

    Bitwise identical to the numpy path; used by the event loop where numpy
    call overhead dominates.
    """
    rint = round
    u = [rint(v / quantum) * 0.5 for v in dp]

    def rot(x, y, c, s, inverse):
        flip = c < 0.0
        if flip:
            c, s = -c, -s
        t = s / (1.0 + c)
        if not inverse:
            if flip:
                x, y = -x, -y
            x = x + rint(-t * y)
            y = y + rint(s * x)
            x = x + rint(-t * y)
        else:
            x = x - rint(-t * y)
            y = y - rint(s * x)
            x = x - rint(-t * y)
            if flip:
                x, y = -x, -y
        return x, y

    e0, e1 = eta[0], eta[1]
    w = list(u)
    if len(dp) == 2:
        r = math.sqrt(e0 * e0 + e1 * e1)
        ca, sa = e0 / r, e1 / r
        w[0], w[1] = rot(w[0], w[1], ca, sa, True)
        w[0] = -w[0]
    else:
        e2 = max(-1.0, min(1.0, eta[2]))
        cg = math.sqrt(e0 * e0 + e1 * e1)
        ca, sa = (e0 / cg, e1 / cg) if cg > 0.0 else (1.0, 0.0)
        w[0], w[1] = rot(w[0], w[1], ca, sa, True)
        w[0], w[2] = rot(w[0], w[2], cg, e2, True)
        w[0] = -w[0]
        w[0], w[2] = rot(w[0], w[2], cg, e2, False)
    w[0], w[1] = rot(w[0], w[1], ca, sa, False)
    return [(a - b) * quantum for a, b in zip(u, w)]


# --------------------------------------------------------------------------
# inelastic 1D map

def inelastic_transfer_1d(p1: float, p2: float, r: Restitution,
                          quantum: float = MOMENTUM_QUANTUM) -> float:
    """Lattice transfer ``D`` realizing ``p1' = eps p1 + (1 - eps) p2``."""
    if r.e == 1.0:
        return p1 - p2
    return round((1.0 - r.epsilon) * (p1 - p2) / quantum) * quantum


def apply_inelastic_collision_1d(p1: float, p2: float, r: Restitution,
                                 quantum: float = MOMENTUM_QUANTUM) -> tuple[float, float]:
    """Forward inelastic rule for a 1D pair.

    ``p1' = eps p1 + (1-eps) p2`` and ``p2' = (1-eps) p1 + eps p2`` with
    ``eps = (1-e)/2``; the relative momentum is multiplied by ``-e``.
    """
    if not isinstance(r, Restitution):
        r = Restitution(float(r))
    p1 = float(p1)
    p2 = float(p2)
    if r.e == 1.0:
        return p2, p1
    D = inelastic_transfer_1d(p1, p2, r, quantum)
    return p1 - D, p2 + D


def precollision_momenta_1d(p1: float, p2: float, r: Restitution) -> tuple[float, float]:
    """Inverse of the forward rule: momenta that collide into ``(p1, p2)``."""
    eps = r.epsilon
    c = eps / (2.0 * eps - 1.0)
    return p2 + c * (p1 - p2), p1 - c * (p1 - p2)


def energy_loss_1d(p1: float, p2: float, r: Restitution) -> float:
    """Kinetic energy dissipated by one collision, ``(1 - e^2)(p1 - p2)^2 / 4``."""
    return (1.0 - r.e * r.e) * (p1 - p2) ** 2 / 4.0
