"""Arbitrary-order, arbitrary-precision Taylor series integrator.

Taylor coefficients of the three-body flow are generated by power-series
recurrences on the pair separations ``d = r_j - r_i``, their squared norms
``r2`` and the inverse-cube factors ``s = r2^(-3/2)``.  Step sizes follow the
radius-of-convergence estimate from the two highest coefficients.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import CollisionError, DegenerateSeries, MaxStepsExceeded, OutOfRange
from .nbody import COLLISION_THRESHOLD, PAIR_I, PAIR_J, PAIRS
from .precision import mp

ORDER_PER_DIGIT = 1.15

# (digits, order) pairs; stage1/stage3a/stage3b are the published regimes.
PRESETS = {
    "scan": (32, 40),
    "desk": (64, 74),
    "stage1": (134, 154),
    "stage3a": (212, 242),
    "stage3b": (250, 286),
}


@dataclass(frozen=True)
class IntegratorConfig:
    order: int
    digits: int
    step_safety: float = math.exp(-2)
    collision_threshold: float = COLLISION_THRESHOLD
    max_steps: int = 1_000_000
    max_step: float = 1.0

    def __post_init__(self):
        if self.order < 4:
            raise ValueError(f"Taylor order must be >= 4, got {self.order}")
        if self.digits < 16:
            raise ValueError(f"precision must be >= 16 digits, got {self.digits}")
        if not 0 < self.step_safety < 1:
            raise ValueError(f"step_safety must lie in (0, 1), got {self.step_safety}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @classmethod
    def for_digits(cls, digits: int, **kwargs) -> "IntegratorConfig":
        return cls(order=math.ceil(ORDER_PER_DIGIT * digits), digits=digits, **kwargs)

    def with_(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


def preset(name: str, **kwargs) -> IntegratorConfig:
    try:
        digits, order = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return IntegratorConfig(order=order, digits=digits, **kwargs)


def resolve_config(choice) -> IntegratorConfig:
    """Accept a preset name, a digit count, or a ready config."""
    if isinstance(choice, IntegratorConfig):
        return choice
    if isinstance(choice, int):
        return IntegratorConfig.for_digits(choice)
    return preset(choice)


@dataclass
class SeriesAux:
    """Auxiliary series kept for the variational recurrences."""

    d: np.ndarray  # (3 pairs, 2, K+1)
    r2: np.ndarray  # (3, K+1)
    s: np.ndarray  # (3, K+1), r2^(-3/2)


@dataclass
class TaylorExpansion:
    coeffs: np.ndarray  # (12, K+1), coefficient k multiplies (t - t0)^k
    aux: Optional[SeriesAux] = None
    h: Optional[mpfr] = None

    @property
    def order(self) -> int:
        return self.coeffs.shape[1] - 1


_WEIGHT_CACHE: dict[int, np.ndarray] = {}


def _power_weights(k: int) -> np.ndarray:
    # m + 2k for m = 1..k: from the recurrence for r2^(-3/2)
    w = _WEIGHT_CACHE.get(k)
    if w is None:
        w = np.array([m + 2 * k for m in range(1, k + 1)], dtype=object)
        _WEIGHT_CACHE[k] = w
    return w


def taylor_coefficients(
    state, order: int, collision_threshold=COLLISION_THRESHOLD
) -> TaylorExpansion:
    """Taylor coefficients of the solution through ``state`` up to ``order``."""
    K = order
    pos = np.empty((3, 2, K + 1), dtype=object)
    vel = np.empty((3, 2, K + 1), dtype=object)
    pos[:, :, 0] = np.asarray(state[:6], dtype=object).reshape(3, 2)
    vel[:, :, 0] = np.asarray(state[6:], dtype=object).reshape(3, 2)
    d = np.empty((3, 2, K + 1), dtype=object)
    r2 = np.empty((3, K + 1), dtype=object)
    s = np.empty((3, K + 1), dtype=object)
    limit = mpfr(collision_threshold) ** 2
    neg_inv_2r0 = None

    for k in range(K):
        d[:, :, k] = pos[PAIR_J, :, k] - pos[PAIR_I, :, k]

        half = (k + 1) // 2
        if half:
            sq = (d[:, :, :half] * d[:, :, k : k - half : -1]).sum(axis=(1, 2)) * 2
        else:
            sq = np.zeros(3, dtype=object)
        if k % 2 == 0:
            mid = d[:, :, k // 2]
            sq = sq + (mid * mid).sum(axis=1)
        r2[:, k] = sq

        if k == 0:
            for p in range(3):
                if r2[p, 0] < limit:
                    i, j = PAIRS[p]
                    raise CollisionError(
                        f"bodies {i + 1} and {j + 1} closer than {collision_threshold}"
                    )
            s[:, 0] = [1 / (q * gmpy2.sqrt(q)) for q in r2[:, 0]]
            neg_inv_2r0 = np.array([-1 / (2 * q) for q in r2[:, 0]], dtype=object)
        else:
            acc = (r2[:, 1 : k + 1] * s[:, k - 1 :: -1] * _power_weights(k)).sum(axis=1)
            s[:, k] = acc * neg_inv_2r0 / k

        f = (d[:, :, : k + 1] * s[:, None, k::-1]).sum(axis=2)
        a = np.empty((3, 2), dtype=object)
        a[0] = f[0] + f[1]
        a[1] = f[2] - f[0]
        a[2] = -f[1] - f[2]
        pos[:, :, k + 1] = vel[:, :, k] / (k + 1)
        vel[:, :, k + 1] = a / (k + 1)

    coeffs = np.concatenate([pos.reshape(6, K + 1), vel.reshape(6, K + 1)])
    return TaylorExpansion(coeffs=coeffs, aux=SeriesAux(d=d, r2=r2, s=s))


def _log_norm(column) -> float:
    m = max(abs(c) for c in column)
    if gmpy2.is_zero(m):
        return float("-inf")
    return float(gmpy2.log(m))


def select_stepsize(exp: TaylorExpansion, step_safety=math.exp(-2)) -> mpfr:
    """Step from the radius of convergence implied by the top two coefficients."""
    K = exp.order
    if K < 2:
        raise ValueError("order must be at least 2")
    log_n1 = _log_norm(exp.coeffs[:, K - 1])
    log_n2 = _log_norm(exp.coeffs[:, K])
    candidates = []
    if log_n1 != float("-inf"):
        candidates.append(-log_n1 / (K - 1))
    if log_n2 != float("-inf"):
        candidates.append(-log_n2 / K)
    if not candidates:
        raise DegenerateSeries("top Taylor coefficients vanish")
    return mpfr(step_safety * math.exp(min(candidates)))


def advance(exp: TaylorExpansion, h) -> np.ndarray:
    """Evaluate the series at offset ``h`` by Horner's scheme."""
    c = exp.coeffs
    acc = c[:, -1].copy()
    for k in range(c.shape[1] - 2, -1, -1):
        acc = acc * h + c[:, k]
    return acc


@dataclass
class Step:
    t0: mpfr
    t1: mpfr
    h: mpfr
    expansion: TaylorExpansion
    start: np.ndarray
    end: np.ndarray


def iter_steps(state, t_target, cfg: IntegratorConfig, t_start=0) -> Iterator[Step]:
    """Yield accepted steps from ``t_start`` to ``t_target``; the last is clamped."""
    t = mp(t_start)
    t_target = mp(t_target)
    if t_target < t:
        raise ValueError("integration runs forward in time only")
    if t_target == t:
        return
    for _ in range(cfg.max_steps):
        try:
            exp = taylor_coefficients(state, cfg.order, cfg.collision_threshold)
        except CollisionError as err:
            err.t = t
            raise
        try:
            h = select_stepsize(exp, cfg.step_safety)
        except DegenerateSeries:
            h = mpfr(cfg.max_step)
        remaining = t_target - t
        last = h >= remaining
        if last:
            h = remaining
        exp.h = h
        end = advance(exp, h)
        t_next = t_target if last else t + h
        yield Step(t0=t, t1=t_next, h=h, expansion=exp, start=state, end=end)
        if last:
            return
        state, t = end, t_next
    raise MaxStepsExceeded(f"no arrival at t={t_target} within {cfg.max_steps} steps")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    expansions: list = field(default_factory=list)

    @property
    def t_end(self):
        return self.times[-1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.times)


def integrate_to(state, t_target, cfg: IntegratorConfig, retain: bool = True) -> Trajectory:
    """Integrate from t = 0 to exactly ``t_target``.

    With ``retain`` the per-step expansions are kept for :func:`dense_eval`.
    """
    if mp(t_target) < 0:
        raise ValueError("t_target must be non-negative")
    traj = Trajectory(times=[mpfr(0)], states=[state])
    for step in iter_steps(state, t_target, cfg):
        traj.times.append(step.t1)
        traj.states.append(step.end)
        if retain:
            step.expansion.aux = None
            traj.expansions.append(step.expansion)
    return traj


def dense_eval(traj: Trajectory, t) -> np.ndarray:
    """State at time ``t`` from the retained expansion of the step containing it."""
    t = mp(t)
    if t < 0 or t > traj.t_end:
        raise OutOfRange(f"t={t} outside [0, {traj.t_end}]")
    if t == traj.t_end:
        return traj.final
    if not traj.expansions:
        raise OutOfRange("trajectory was integrated without retained expansions")
    i = bisect.bisect_right(traj.times, t) - 1
    return advance(traj.expansions[i], t - traj.times[i])
