"""Planar equal-mass three-body dynamics in normalized units (G = m = 1).

A state is a length-12 numpy object array of mpfr values laid out as
``(x1, y1, x2, y2, x3, y3, vx1, vy1, vx2, vy2, vx3, vy3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import CollisionError, ZeroEnergyError
from .precision import mp, to_decimal

COLLISION_THRESHOLD = 1e-6
PAIRS = ((0, 1), (0, 2), (1, 2))
PAIR_I = np.array([i for i, _ in PAIRS])
PAIR_J = np.array([j for _, j in PAIRS])


@dataclass(frozen=True)
class SearchTriplet:
    """Unknowns of the periodicity problem: initial velocity parameters and period."""

    v_x: mpfr
    v_y: mpfr
    T: mpfr

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"period must be positive, got {self.T}")

    @classmethod
    def parse(cls, v_x, v_y, T) -> "SearchTriplet":
        return cls(mp(v_x), mp(v_y), mp(T))

    def as_strings(self, digits: int) -> dict:
        return {
            "v_x": to_decimal(self.v_x, digits),
            "v_y": to_decimal(self.v_y, digits),
            "T": to_decimal(self.T, digits),
        }


def state_from_values(values) -> np.ndarray:
    values = list(values)
    if len(values) != 12:
        raise ValueError(f"a state has 12 components, got {len(values)}")
    out = np.empty(12, dtype=object)
    out[:] = [mp(v) for v in values]
    return out


def build_initial_state(v_x, v_y) -> np.ndarray:
    """Collinear start with body 3 at the midpoint and parallel velocities.

    Bodies 1 and 2 sit at (-1, 0) and (1, 0) moving with (v_x, v_y); body 3 sits
    at the origin with velocity -2 (v_x, v_y), so total momentum and angular
    momentum vanish.
    """
    vx, vy = mp(v_x), mp(v_y)
    zero, one = mpfr(0), mpfr(1)
    return state_from_values(
        [-one, zero, one, zero, zero, zero, vx, vy, vx, vy, -2 * vx, -2 * vy]
    )


def parameter_directions() -> np.ndarray:
    """d X(0) / d(v_x, v_y) for :func:`build_initial_state`, shape (2, 12)."""
    cols = np.empty((2, 12), dtype=object)
    cols[:] = mpfr(0)
    for c in (0, 1):
        cols[c, 6 + c] = mpfr(1)
        cols[c, 8 + c] = mpfr(1)
        cols[c, 10 + c] = mpfr(-2)
    return cols


def positions(state) -> np.ndarray:
    return np.asarray(state[:6], dtype=object).reshape(3, 2)


def velocities(state) -> np.ndarray:
    return np.asarray(state[6:], dtype=object).reshape(3, 2)


def pair_separations(state):
    """Differences r_j - r_i for the three pairs, and their squared norms."""
    pos = positions(state)
    d = pos[PAIR_J] - pos[PAIR_I]
    r2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
    return d, r2


def check_separation(r2, threshold=COLLISION_THRESHOLD, t=None) -> None:
    limit = mpfr(threshold) ** 2
    for p, value in enumerate(r2):
        if value < limit:
            i, j = PAIRS[p]
            raise CollisionError(
                f"bodies {i + 1} and {j + 1} closer than {threshold}", t=t
            )


def accelerations(state, collision_threshold=COLLISION_THRESHOLD) -> np.ndarray:
    d, r2 = pair_separations(state)
    check_separation(r2, collision_threshold)
    inv3 = np.array([1 / (q * gmpy2.sqrt(q)) for q in r2], dtype=object)
    f = d * inv3[:, None]
    acc = np.empty((3, 2), dtype=object)
    acc[0] = f[0] + f[1]
    acc[1] = f[2] - f[0]
    acc[2] = -f[1] - f[2]
    return acc


def rhs(state, collision_threshold=COLLISION_THRESHOLD) -> np.ndarray:
    """Time derivative of the state: velocities, then pairwise inverse-square pulls."""
    out = np.empty(12, dtype=object)
    out[:6] = state[6:]
    out[6:] = accelerations(state, collision_threshold).reshape(6)
    return out


def kinetic_energy(state):
    v = np.asarray(state[6:], dtype=object)
    return (v * v).sum() / 2


def potential_energy(state, collision_threshold=COLLISION_THRESHOLD):
    _, r2 = pair_separations(state)
    check_separation(r2, collision_threshold)
    return -sum(1 / gmpy2.sqrt(q) for q in r2)


def energy(state, collision_threshold=COLLISION_THRESHOLD):
    return kinetic_energy(state) + potential_energy(state, collision_threshold)


def angular_momentum(state):
    pos, vel = positions(state), velocities(state)
    return sum(pos[b, 0] * vel[b, 1] - pos[b, 1] * vel[b, 0] for b in range(3))


def linear_momentum(state):
    vel = velocities(state)
    return vel[:, 0].sum(), vel[:, 1].sum()


def initial_energy(v_x, v_y):
    """Energy of :func:`build_initial_state` in closed form."""
    v_x, v_y = mp(v_x), mp(v_y)
    return mpfr("-2.5") + 3 * (v_x * v_x + v_y * v_y)


def scale_invariant_period(T, v_x, v_y, tolerance=1e-30):
    """T |E|^(3/2); equal values identify one orbit seen from different starts."""
    E = initial_energy(v_x, v_y)
    if abs(E) < tolerance:
        raise ZeroEnergyError(f"|E| = {E} below {tolerance}")
    absE = abs(E)
    return mp(T) * absE * gmpy2.sqrt(absE)
