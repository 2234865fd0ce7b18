"""Topological labels from syzygies: free-group words and satellite powers.

A syzygy is a zero of the oriented triangle area.  The body in the middle
of the collinear configuration and the direction of the sign change give a
letter; bodies 1 and 2 generate the free group, body 3 contributes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import gmpy2
from gmpy2 import mpfr

from .errors import DegenerateSyzygy, EmptyWord
from .nbody import build_initial_state
from .precision import current_digits, mp, working_digits
from .scan import _directions, permuted_distance
from .taylor import IntegratorConfig, Trajectory, advance, iter_steps
from .variational import periodicity_tolerance

SYZYGY_TIME_TOLERANCE = mpfr("1e-20")
TANGENCY_TOLERANCE = 1e-10
SAMPLES_PER_STEP = 4

# letter for (middle body, crossing sign); calibrated so the figure-eight reads abAB
LETTERS = {(1, -1): "a", (1, 1): "A", (2, 1): "b", (2, -1): "B"}
ALPHABET_ORDER = {"a": 0, "b": 1, "A": 2, "B": 3}


@dataclass(frozen=True)
class Syzygy:
    t: mpfr
    middle_body: int  # 1, 2 or 3
    crossing_sign: int  # sign of the area just before the zero


def oriented_area(state):
    """(r2 - r1) x (r3 - r1)."""
    x1, y1, x2, y2, x3, y3 = state[:6]
    return (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1)


def area_rate(state):
    x1, y1, x2, y2, x3, y3, u1, w1, u2, w2, u3, w3 = state
    return (u2 - u1) * (y3 - y1) + (x2 - x1) * (w3 - w1) - (w2 - w1) * (x3 - x1) - (y2 - y1) * (u3 - u1)


def middle_body(state) -> int:
    """1-based index of the body lying between the other two."""
    pts = [(state[2 * b], state[2 * b + 1]) for b in range(3)]

    def dist2(p, q):
        return (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2

    # the farthest pair are the ends of the segment
    pairs = {2: dist2(pts[0], pts[1]), 1: dist2(pts[0], pts[2]), 0: dist2(pts[1], pts[2])}
    outside_pair_of = max(pairs, key=pairs.get)
    return outside_pair_of + 1


def _sign(x) -> int:
    return (x > 0) - (x < 0)


class _Reader:
    """Collects syzygies step by step."""

    def __init__(self, t_end, samples, t_tol, tangent_tol):
        self.t_end = t_end
        self.samples = samples
        self.t_tol = mpfr(t_tol)
        self.tangent_tol = tangent_tol
        self.out: list[Syzygy] = []
        self.start_is_syzygy = False
        self.sign = None  # area sign at the latest nonzero sample

    def start(self, state, first_sign):
        area = oriented_area(state)
        if abs(area) < periodicity_tolerance(current_digits()):
            self.start_is_syzygy = True
            # a simple zero: the sign before t = 0 is opposite to the sign after
            self.out.append(Syzygy(mpfr(0), middle_body(state), -first_sign))
        else:
            self.sign = _sign(area)

    def step(self, t0, h, expansion):
        prev_tau = mpfr(0)
        for m in range(1, self.samples + 1):
            tau = h * m / self.samples
            s = _sign(oriented_area(advance(expansion, tau)))
            if s == 0:
                continue
            if self.sign is not None and s != self.sign:
                self._bisect(t0, expansion, prev_tau, tau, self.sign)
            self.sign, prev_tau = s, tau

    def _bisect(self, t0, expansion, lo, hi, sign_lo):
        while hi - lo > self.t_tol:
            mid = (lo + hi) / 2
            if _sign(oriented_area(advance(expansion, mid))) == sign_lo:
                lo = mid
            else:
                hi = mid
        tau = (lo + hi) / 2
        t = t0 + tau
        if self.start_is_syzygy and abs(t - self.t_end) < mpfr("1e-12"):
            return  # the t = 0 syzygy seen again at t = T
        state = advance(expansion, tau)
        if abs(area_rate(state)) < self.tangent_tol:
            raise DegenerateSyzygy(f"tangential syzygy near t = {float(t):.12g}")
        self.out.append(Syzygy(t, middle_body(state), sign_lo))


def _first_sign(expansion, h, samples):
    return _sign(oriented_area(advance(expansion, h / samples)))


def syzygies_along(
    state, t_end, cfg: IntegratorConfig, samples: int = SAMPLES_PER_STEP,
    t_tol=SYZYGY_TIME_TOLERANCE, tangent_tol=TANGENCY_TOLERANCE,
) -> list:
    """Integrate from ``state`` over [0, t_end] and return its syzygies."""
    with working_digits(cfg.digits):
        t_end = mp(t_end)
        reader = _Reader(t_end, samples, t_tol, tangent_tol)
        first = True
        for step in iter_steps(state, t_end, cfg):
            if first:
                reader.start(state, _first_sign(step.expansion, step.h, samples))
                first = False
            reader.step(step.t0, step.h, step.expansion)
        return reader.out


def detect_syzygies(
    traj: Trajectory, samples: int = SAMPLES_PER_STEP, t_tol=SYZYGY_TIME_TOLERANCE,
    tangent_tol=TANGENCY_TOLERANCE,
) -> list:
    """Syzygies of a trajectory integrated with retained expansions."""
    reader = _Reader(traj.t_end, samples, t_tol, tangent_tol)
    for n, exp in enumerate(traj.expansions):
        t0 = traj.times[n]
        h = traj.times[n + 1] - t0
        if n == 0:
            reader.start(traj.states[0], _first_sign(exp, h, samples))
        reader.step(t0, h, exp)
    return reader.out


def free_reduce(letters: Iterable[str]) -> str:
    stack: list[str] = []
    for c in letters:
        if c not in ALPHABET_ORDER:
            raise ValueError(f"unknown letter {c!r}")
        if stack and stack[-1] == c.swapcase():
            stack.pop()
        else:
            stack.append(c)
    return "".join(stack)


def cyclic_reduce(word: str) -> str:
    w = free_reduce(word)
    i, j = 0, len(w) - 1
    while i < j and w[i] == w[j].swapcase():
        i += 1
        j -= 1
    return w[i : j + 1]


def canonical_rotation(word: str) -> str:
    """Least rotation of the cyclically reduced word in the order a < b < A < B."""
    w = cyclic_reduce(word)
    if not w:
        return w
    key = [ALPHABET_ORDER[c] for c in w]
    n = len(w)
    best = min(range(n), key=lambda r: key[r:] + key[:r])
    return w[best:] + w[:best]


@dataclass(frozen=True)
class FreeGroupWord:
    letters: str

    @property
    def reduced(self) -> str:
        return free_reduce(self.letters)

    @property
    def canonical(self) -> str:
        return canonical_rotation(self.letters)

    def __str__(self) -> str:
        return self.canonical


def read_word(syzygies) -> FreeGroupWord:
    """Letters from bodies 1 and 2 in the middle; a t = 0 syzygy is skipped."""
    letters = []
    for z in syzygies:
        if z.t == 0:
            continue
        letter = LETTERS.get((z.middle_body, z.crossing_sign))
        if letter:
            letters.append(letter)
    word = FreeGroupWord("".join(letters))
    if not word.canonical:
        raise EmptyWord("syzygy sequence reduces to the empty word")
    return word


def satellite_power(word) -> Optional[int]:
    """k with word conjugate to (abAB)^k, or None if it is no figure-eight satellite."""
    w = word.canonical if isinstance(word, FreeGroupWord) else canonical_rotation(word)
    if not w or len(w) % 4:
        return None
    k = len(w) // 4
    return k if canonical_rotation("abAB" * k) == w else None


def orbit_word(triplet, cfg: IntegratorConfig, **kwargs) -> FreeGroupWord:
    """Read the word of the orbit through ``triplet`` over one period."""
    with working_digits(cfg.digits):
        X0 = build_initial_state(triplet.v_x, triplet.v_y)
        return read_word(syzygies_along(X0, triplet.T, cfg, **kwargs))


@dataclass
class ChoreographyVerdict:
    choreography: bool
    divisibility_ok: bool
    proximity: mpfr
    proximity_ok: bool
    direction: Optional[str]
    tolerance: mpfr
    repetition: int = 1  # > 1 when T is a multiple of the true period


def _prime_factors(n: int) -> list:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def repetition_factor(triplet, k: Optional[int], cfg: IntegratorConfig, tolerance=None) -> int:
    """Smallest prime p dividing k with X(T/p) = X(0), or 1.

    A figure-eight run twice reads as (abAB)^2; only the unpermuted return
    at T/p tells it apart from a genuine k = 2 satellite.
    """
    if not k or k < 2:
        return 1
    with working_digits(cfg.digits):
        tol = periodicity_tolerance(cfg.digits) if tolerance is None else mp(tolerance)
        X0 = build_initial_state(triplet.v_x, triplet.v_y)
        for p in _prime_factors(k):
            X = X0
            for step in iter_steps(X0, mp(triplet.T) / p, cfg):
                X = step.end
            diff = X - X0
            if gmpy2.sqrt((diff * diff).sum()) < tol:
                return p
    return 1


def choreography_check(triplet, k: Optional[int], cfg: IntegratorConfig, tolerance=None, direction="both"):
    """Choreography iff k is not a multiple of 3, the relabelled state returns
    at T/3 and T is the primitive period."""
    with working_digits(cfg.digits):
        tol = periodicity_tolerance(cfg.digits) if tolerance is None else mp(tolerance)
        X0 = build_initial_state(triplet.v_x, triplet.v_y)
        X = X0
        for step in iter_steps(X0, mp(triplet.T) / 3, cfg):
            X = step.end
        dist, name = min((permuted_distance(X, X0, n), n) for n in _directions(direction))
        div_ok = k is not None and k % 3 != 0
        prox_ok = dist < tol
        rep = repetition_factor(triplet, k, cfg, tol) if div_ok and prox_ok else 1
        return ChoreographyVerdict(
            choreography=div_ok and prox_ok and rep == 1,
            divisibility_ok=div_ok,
            proximity=dist,
            proximity_ok=prox_ok,
            direction=name,
            tolerance=tol,
            repetition=rep,
        )
