"""Grid scan over initial velocities for near-choreographic returns.

For each grid point the orbit is integrated to ``T_0`` and the distance
between the cyclically relabelled state and the initial state is minimized
over ``1 < t <= T_0``.  Small minima flag candidate choreographies with
period near three times the minimizing time.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import CollisionError, MaxStepsExceeded
from .nbody import build_initial_state
from .precision import mp, to_decimal, working_digits
from .taylor import IntegratorConfig, advance, iter_steps, resolve_config

CANDIDATE_THRESHOLD = 0.1
GOLDEN_TOLERANCE = 1e-6
REFINE_BELOW = 0.5  # endpoint minima above this are not refined

# slot b of the relabelled state receives body PERMUTATIONS[name][b]
PERMUTATIONS = {
    "forward": (1, 2, 0),  # 1 <- 2 <- 3 <- 1
    "backward": (2, 0, 1),
}
DIRECTIONS = ("forward", "backward", "both")


def _directions(direction: str):
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return ("forward", "backward") if direction == "both" else (direction,)


def cyclic_permute(state, direction: str = "forward") -> np.ndarray:
    """Relabel bodies cyclically; positions and velocities move together."""
    src = PERMUTATIONS[direction]
    out = np.empty(12, dtype=object)
    for b, s in enumerate(src):
        out[2 * b : 2 * b + 2] = state[2 * s : 2 * s + 2]
        out[6 + 2 * b : 8 + 2 * b] = state[6 + 2 * s : 8 + 2 * s]
    return out


def permuted_distance(state, reference, direction: str = "forward"):
    diff = cyclic_permute(state, direction) - reference
    return gmpy2.sqrt((diff * diff).sum())


@dataclass
class Proximity:
    R: mpfr  # +inf when the orbit collided
    t_min: Optional[mpfr]
    direction: Optional[str]
    note: str = ""


def _golden_min(f, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c = b - (b - a) * invphi
    d = a + (b - a) * invphi
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * invphi
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * invphi
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


SELECTIONS = ("first", "global")


def return_proximity(
    v_x, v_y, T_0, cfg: IntegratorConfig, direction: str = "both", selection: str = "first",
    threshold: float = CANDIDATE_THRESHOLD,
) -> Proximity:
    """Minimum over 1 < t <= T_0 of the relabelled-state distance to X(0).

    Minima are bracketed at step endpoints and refined by golden-section
    search on the Taylor polynomials of the two adjacent steps.  With
    ``selection="first"`` the earliest minimum below ``threshold`` is
    reported, since later ones repeat it at multiples of the period; with
    ``"global"`` the smallest minimum wins.
    """
    dirs = _directions(direction)
    if selection not in SELECTIONS:
        raise ValueError(f"selection must be one of {SELECTIONS}, got {selection!r}")
    with working_digits(cfg.digits):
        T_0 = mp(T_0)
        if not T_0 > 1:
            raise ValueError(f"T_0 must exceed 1, got {T_0}")
        X0 = build_initial_state(v_x, v_y)
        minima = []  # (t, value, direction)

        def consider(name, sample, window, lo, hi):
            t_end, value = sample
            if t_end <= 1:
                return
            if value > REFINE_BELOW:
                minima.append((t_end, float(value), name))
                return

            def f(t):
                t = mpfr(t)
                for st in window:
                    if st.t0 <= t <= st.t1:
                        return float(permuted_distance(advance(st.expansion, t - st.t0), X0, name))
                raise AssertionError("time outside the refinement window")

            t, v = _golden_min(f, max(float(lo), 1.0), float(hi), GOLDEN_TOLERANCE)
            if value < v:
                t, v = t_end, float(value)
            minima.append((mpfr(t), v, name))

        hist = {name: [] for name in dirs}
        prev_step = None
        try:
            for step in iter_steps(X0, T_0, cfg):
                for name in dirs:
                    h = hist[name]
                    h.append((step.t1, permuted_distance(step.end, X0, name)))
                    if len(h) > 3:
                        h.pop(0)
                    # endpoint minimum at the middle of the last three samples
                    if len(h) == 3 and h[1][1] <= h[0][1] and h[1][1] <= h[2][1]:
                        window = tuple(s for s in (prev_step, step) if s is not None)
                        consider(name, h[1], window, max(h[0][0], window[0].t0), h[2][0])
                prev_step = step
            for name in dirs:
                h = hist[name]
                # a decreasing tail ends in a minimum at T_0 itself
                if len(h) >= 2 and h[-1][1] <= h[-2][1]:
                    consider(name, h[-1], (prev_step,), max(h[-2][0], prev_step.t0), h[-1][0])
        except (CollisionError, MaxStepsExceeded) as err:
            return Proximity(R=mpfr("inf"), t_min=None, direction=None, note=str(err))
        if not minima:
            return Proximity(R=mpfr("inf"), t_min=None, direction=None, note="no minimum after t = 1")
        minima.sort(key=lambda m: m[0])
        chosen = min(minima, key=lambda m: m[1])
        if selection == "first":
            below = [m for m in minima if m[1] < threshold]
            if below:
                chosen = below[0]
        return Proximity(R=mpfr(chosen[1]), t_min=chosen[0], direction=chosen[2])


@dataclass
class SearchDomain:
    vx_lo: Fraction
    vx_hi: Fraction
    vy_lo: Fraction
    vy_hi: Fraction
    step: Fraction
    mask: Optional[list] = None  # extra polygon [(vx, vy), ...] added to the rectangle

    def __post_init__(self):
        self.vx_lo, self.vx_hi = Fraction(str(self.vx_lo)), Fraction(str(self.vx_hi))
        self.vy_lo, self.vy_hi = Fraction(str(self.vy_lo)), Fraction(str(self.vy_hi))
        self.step = Fraction(str(self.step))
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if not (self.vx_lo <= self.vx_hi and self.vy_lo <= self.vy_hi):
            raise ValueError("empty rectangle")
        if self.mask is not None:
            self.mask = [(Fraction(str(x)), Fraction(str(y))) for x, y in self.mask]
            if len(self.mask) < 3:
                raise ValueError("mask polygon needs at least 3 vertices")

    @classmethod
    def from_dict(cls, data: dict) -> "SearchDomain":
        vx, vy = data["vx"], data["vy"]
        return cls(vx[0], vx[1], vy[0], vy[1], data["step"], data.get("mask"))

    def _in_rectangle(self, x, y) -> bool:
        return self.vx_lo <= x <= self.vx_hi and self.vy_lo <= y <= self.vy_hi

    def _in_mask(self, x, y, poly=None) -> bool:
        if self.mask is None:
            return False
        poly = poly or self._mask_path()
        return bool(poly.contains_point((float(x), float(y))))

    def _mask_path(self):
        from matplotlib.path import Path as PolyPath

        return PolyPath([(float(a), float(b)) for a, b in self.mask])

    def points(self) -> list:
        """Lattice points (i, j, v_x, v_y) with v = index * step, ordered by (i, j)."""
        xs = [self.vx_lo, self.vx_hi]
        ys = [self.vy_lo, self.vy_hi]
        if self.mask:
            xs += [p[0] for p in self.mask]
            ys += [p[1] for p in self.mask]
        i_lo, i_hi = math.ceil(min(xs) / self.step), math.floor(max(xs) / self.step)
        j_lo, j_hi = math.ceil(min(ys) / self.step), math.floor(max(ys) / self.step)
        poly = self._mask_path() if self.mask else None
        out = []
        for i in range(i_lo, i_hi + 1):
            for j in range(j_lo, j_hi + 1):
                x, y = i * self.step, j * self.step
                if self._in_rectangle(x, y) or self._in_mask(x, y, poly):
                    out.append((i, j, x, y))
        return out


@dataclass
class Candidate:
    i: int
    j: int
    v_x: str
    v_y: str
    t_min: str
    T_guess: str
    R_value: float
    direction: str

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, data: dict) -> "Candidate":
        return cls(**data)


@dataclass
class GridValue:
    i: int
    j: int
    R: float
    t_min: Optional[str]
    direction: Optional[str]
    note: str = ""

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _fraction_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _evaluate_point(args):
    i, j, x, y, T_0, cfg, direction, selection = args
    with working_digits(cfg.digits):
        prox = return_proximity(mp(x), mp(y), T_0, cfg, direction, selection)
        t = to_decimal(prox.t_min, 20) if prox.t_min is not None else None
    return GridValue(i=i, j=j, R=float(prox.R), t_min=t, direction=prox.direction, note=prox.note)


def load_checkpoint(path) -> dict:
    values = {}
    p = Path(path)
    if not p.exists():
        return values
    for line in p.read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            values[(d["i"], d["j"])] = GridValue(**d)
    return values


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("CHOREO_WORKERS")
    if not raw:
        return default
    n = int(raw)
    if n < 1:
        raise ValueError("CHOREO_WORKERS must be positive")
    return n


def evaluate_grid(
    domain: SearchDomain, T_0, cfg, direction="both", checkpoint=None, workers=None, selection="first"
) -> dict:
    """R_cp at every lattice point, resuming from and appending to ``checkpoint``."""
    cfg = resolve_config(cfg)
    values = load_checkpoint(checkpoint) if checkpoint else {}
    todo = [(i, j, x, y, str(T_0), cfg, direction, selection) for i, j, x, y in domain.points() if (i, j) not in values]
    workers = worker_count() if workers is None else workers
    sink = open(checkpoint, "a") if checkpoint else None
    try:
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_evaluate_point, todo)
                for gv in results:
                    values[(gv.i, gv.j)] = gv
                    if sink:
                        sink.write(json.dumps(gv.to_json()) + "\n")
                        sink.flush()
        else:
            for item in todo:
                gv = _evaluate_point(item)
                values[(gv.i, gv.j)] = gv
                if sink:
                    sink.write(json.dumps(gv.to_json()) + "\n")
                    sink.flush()
    finally:
        if sink:
            sink.close()
    return values


def local_minima(values: dict, T_0, threshold: float = CANDIDATE_THRESHOLD) -> list:
    """Grid points below ``threshold`` that beat all of their 8 neighbours strictly."""
    T_0 = float(T_0)
    keep = []
    for (i, j), gv in sorted(values.items()):
        if not gv.R < threshold or gv.t_min is None:
            continue
        if not 1 < float(gv.t_min) <= T_0:
            continue
        neighbours = [
            values.get((i + di, j + dj)) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)
        ]
        if all(n is None or gv.R < n.R for n in neighbours):
            keep.append(gv)
    return keep


def scan_domain(
    domain: SearchDomain, T_0, cfg="scan", direction="both", checkpoint=None, workers=None, selection="first"
) -> list:
    """Candidates: strict local minima of R_cp on the grid with R < 0.1."""
    values = evaluate_grid(domain, T_0, cfg, direction, checkpoint, workers, selection)
    out = []
    with working_digits(32):
        for gv in local_minima(values, T_0):
            x, y = gv.i * domain.step, gv.j * domain.step
            t = mp(gv.t_min)
            out.append(
                Candidate(
                    i=gv.i,
                    j=gv.j,
                    v_x=_fraction_str(x),
                    v_y=_fraction_str(y),
                    t_min=gv.t_min,
                    T_guess=to_decimal(3 * t, 20),
                    R_value=gv.R,
                    direction=gv.direction,
                )
            )
    return out
