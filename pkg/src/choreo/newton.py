"""Periodic-orbit correction: damped (modified) and classic Newton shooting.

The unknowns are (v_x, v_y, T).  Each iteration integrates the orbit with
its parameter sensitivities, forms the 12x3 periodicity system and takes
the least-squares correction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import ChoreoError, Divergence, VerificationMismatch
from .linalg import solve_least_squares
from .nbody import SearchTriplet, build_initial_state, parameter_directions, rhs
from .precision import log10_abs, matching_digits, mp, working_digits
from .taylor import IntegratorConfig, iter_steps, resolve_config
from .variational import propagate

log = logging.getLogger(__name__)

MODES = ("modified", "classic")
DEFAULT_MAXITER = {"modified": 50, "classic": 10}
MIN_JACOBIAN_DIGITS = 30
JACOBIAN_MARGIN_DIGITS = 10
# a predicted residual this far under tolerance is checked before paying for a Jacobian
SKIP_MARGIN = 1e-6


@dataclass(frozen=True)
class NewtonConfig:
    mode: str = "modified"
    tau0: float = 0.2
    maxiter: Optional[int] = None
    tolerance: Union[float, str] = 1e-40
    preset: Union[str, int, IntegratorConfig] = "desk"
    t_ref: Optional[object] = None  # divergence guard: T must stay in [1, 3 t_ref]
    adaptive_jacobian: bool = True
    probe_first: bool = False  # evaluate the residual alone before the first Jacobian
    min_steps: int = 0  # corrections applied even when already within tolerance

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.tau0 <= 1:
            raise ValueError(f"tau0 must lie in (0, 1], got {self.tau0}")
        if float(self.tolerance) <= 0:
            raise ValueError("tolerance must be positive")
        if self.maxiter is not None and self.maxiter < 1:
            raise ValueError("maxiter must be positive")

    @property
    def iterations(self) -> int:
        return self.maxiter if self.maxiter is not None else DEFAULT_MAXITER[self.mode]

    @property
    def integrator(self) -> IntegratorConfig:
        return resolve_config(self.preset)


@dataclass
class IterationRecord:
    k: int
    residual: mpfr
    tau: float
    dv_x: Optional[mpfr] = None
    dv_y: Optional[mpfr] = None
    dT: Optional[mpfr] = None
    jacobian_digits: Optional[int] = None


@dataclass
class NewtonResult:
    triplet: SearchTriplet
    trace: list = field(default_factory=list)

    @property
    def residual(self) -> mpfr:
        return self.trace[-1].residual

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def residuals(self) -> list:
        return [rec.residual for rec in self.trace]


def _final_state(triplet: SearchTriplet, cfg: IntegratorConfig):
    X0 = build_initial_state(triplet.v_x, triplet.v_y)
    X = X0
    for step in iter_steps(X0, triplet.T, cfg):
        X = step.end
    return X0, X


def residual(triplet: SearchTriplet, cfg: IntegratorConfig):
    """(R, rvec) with rvec = X(0) - X(T) and R its 2-norm."""
    X0, XT = _final_state(triplet, cfg)
    rvec = X0 - XT
    return gmpy2.sqrt((rvec * rvec).sum()), rvec


def build_system(triplet: SearchTriplet, cfg: IntegratorConfig, var_digits=None):
    """Periodicity system A (12x3), b (12) for corrections (dv_x, dv_y, dT)."""
    A, b, _ = _system(triplet, cfg, var_digits)
    return A, b


def _system(triplet, cfg, var_digits):
    X0 = build_initial_state(triplet.v_x, triplet.v_y)
    pattern = parameter_directions()
    run = propagate(X0, pattern, triplet.T, cfg, var_digits)
    XT = run.base
    A = np.empty((12, 3), dtype=object)
    A[:, 0] = run.columns[0] - pattern[0]
    A[:, 1] = run.columns[1] - pattern[1]
    A[:, 2] = rhs(XT)
    b = X0 - XT
    return A, b, gmpy2.sqrt((b * b).sum())


def tau_update(tau_prev, R_prev, R_curr, tau0):
    """Adaptive damping factor from the residual ratio."""
    ratio = tau_prev * R_prev / R_curr
    if R_curr <= R_prev:
        return min(1, ratio)
    return max(tau0, ratio)


def _residual_digits(R) -> float:
    v = -log10_abs(R)
    return max(0.0, v) if math.isfinite(v) else float("inf")


def jacobian_digits(expected_residual_digits: Optional[float], digits: int) -> int:
    """Precision needed for sensitivities when the residual has the given size.

    A relative Jacobian error eps perturbs the next residual by about
    eps * R, so eps a little below R keeps convergence quadratic.
    """
    if expected_residual_digits is None:
        need = MIN_JACOBIAN_DIGITS
    else:
        need = max(MIN_JACOBIAN_DIGITS, math.ceil(expected_residual_digits) + JACOBIAN_MARGIN_DIGITS)
    return min(digits, need)


def _as_triplet(start) -> SearchTriplet:
    if isinstance(start, SearchTriplet):
        return SearchTriplet(mp(start.v_x), mp(start.v_y), mp(start.T))
    T = getattr(start, "T_guess", None)
    if T is None:
        T = start.T
    return SearchTriplet.parse(start.v_x, start.v_y, T)


def correct(start, config: NewtonConfig = NewtonConfig()) -> NewtonResult:
    """Drive the periodicity residual below ``config.tolerance``.

    ``start`` is a SearchTriplet or anything with v_x, v_y and T (or T_guess).
    Raises Divergence when the iteration budget runs out, the period leaves
    its allowed range, or an iterate collides.
    """
    cfg = config.integrator
    with working_digits(cfg.digits):
        x = _as_triplet(start)
        tol = mp(config.tolerance)
        t_hi = 3 * (mp(config.t_ref) if config.t_ref is not None else x.T)
        modified = config.mode == "modified"
        tau = config.tau0 if modified else 1
        trace: list[IterationRecord] = []
        R_prev = None
        quad_const = 1.0
        probe = config.probe_first

        for k in range(config.iterations + 1):
            R = None
            try:
                if probe:
                    R, _ = residual(x, cfg)
                    probe = False
                    if R < tol and k >= config.min_steps:
                        trace.append(IterationRecord(k=k, residual=R, tau=tau))
                        break
                if R is not None:
                    expected = _residual_digits(R)
                elif R_prev is not None:
                    expected = _residual_digits(R_prev) * (2 if tau == 1 else 1)
                else:
                    expected = None
                dj = jacobian_digits(expected, cfg.digits) if config.adaptive_jacobian else cfg.digits
                A, b, R = _system(x, cfg, dj)
            except ChoreoError as err:
                raise Divergence(f"iteration {k}: {err}", trace=trace, cause=err) from err

            if modified and R_prev is not None:
                tau = tau_update(tau, R_prev, R, config.tau0)
            rec = IterationRecord(k=k, residual=R, tau=float(tau), jacobian_digits=dj)
            trace.append(rec)
            log.info("newton k=%d R=%.3e tau=%.3f jac_digits=%d", k, float(R), float(tau), dj)
            if R < tol and k >= config.min_steps:
                break
            if k == config.iterations:
                raise Divergence(
                    f"no convergence within {config.iterations} iterations (R={float(R):.3e})",
                    trace=trace,
                )

            try:
                delta = solve_least_squares(A, b)
            except ChoreoError as err:
                raise Divergence(f"iteration {k}: {err}", trace=trace, cause=err) from err
            rec.dv_x, rec.dv_y, rec.dT = delta
            T_new = x.T + tau * delta[2]
            if not (1 <= T_new <= t_hi):
                raise Divergence(f"period left [1, {float(t_hi):.4g}]: T={float(T_new):.6g}", trace=trace)
            x = SearchTriplet(x.v_x + tau * delta[0], x.v_y + tau * delta[1], T_new)

            if R_prev is not None and tau == 1 and not gmpy2.is_zero(R_prev):
                quad_const = max(quad_const, float(R / (R_prev * R_prev)))
            R_prev = R
            if tau == 1:
                predicted = quad_const * R * R
                probe = predicted < tol * SKIP_MARGIN
        return NewtonResult(triplet=x, trace=trace)


def quadratic_slope(residuals, floor=None, count: int = 3) -> Optional[float]:
    """Log-log slope of R_{k+1} against R_k over the last ``count`` residuals.

    Residuals at or below ``floor`` (the arithmetic noise level) are dropped
    from the tail first; they measure precision, not convergence.
    """
    rs = [r for r in residuals if not gmpy2.is_zero(mpfr(r))]
    if floor is not None:
        while rs and mpfr(rs[-1]) <= floor:
            rs.pop()
    rs = rs[-count:]
    if len(rs) < 3:
        return None
    logs = [log10_abs(r) for r in rs]
    xs, ys = logs[:-1], logs[1:]
    mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
    sxx = sum((a - mx) ** 2 for a in xs)
    if sxx == 0:
        return None
    return sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / sxx


def noise_floor(digits: int, guard_digits: int = 20) -> mpfr:
    return mpfr(10) ** (-(digits - guard_digits))


POLISH_PRESETS = {180: ("stage3a", "stage3b")}


def polish_configs(digits_target: int):
    """Working and verification integrators for a polish to ``digits_target``."""
    names = POLISH_PRESETS.get(digits_target)
    if names is not None:
        return tuple(resolve_config(n) for n in names)
    return (
        IntegratorConfig.for_digits(digits_target + 20),
        IntegratorConfig.for_digits(digits_target + 40),
    )


@dataclass
class PolishReport:
    triplet: SearchTriplet
    verification: SearchTriplet
    matched_digits: int
    run: NewtonResult
    check: NewtonResult
    slope: Optional[float]
    digits: tuple

    @property
    def quadratic(self) -> Optional[bool]:
        return None if self.slope is None else self.slope >= 1.8


def polish(triplet, digits_target: int = 180, tolerance=None, maxiter: int = 10, configs=None) -> PolishReport:
    """Classic Newton at two precisions; the second run verifies the first."""
    cfg_a, cfg_b = configs if configs is not None else polish_configs(digits_target)
    tol = tolerance if tolerance is not None else f"1e-{digits_target + 10}"
    run = correct(
        triplet,
        NewtonConfig(mode="classic", maxiter=maxiter, tolerance=tol, preset=cfg_a, probe_first=True),
    )
    # the verification run always re-solves once at its own precision
    check = correct(
        run.triplet,
        NewtonConfig(mode="classic", maxiter=maxiter, tolerance=tol, preset=cfg_b, min_steps=1),
    )
    with working_digits(cfg_b.digits):
        matched = min(
            matching_digits(getattr(run.triplet, f), getattr(check.triplet, f)) for f in ("v_x", "v_y", "T")
        )
    if matched < digits_target:
        raise VerificationMismatch(
            f"{cfg_a.digits}- and {cfg_b.digits}-digit runs agree to only {matched} digits"
        )
    slope = quadratic_slope(run.residuals, floor=noise_floor(cfg_a.digits))
    return PolishReport(
        triplet=run.triplet,
        verification=check.triplet,
        matched_digits=matched,
        run=run,
        check=check,
        slope=slope,
        digits=(cfg_a.digits, cfg_b.digits),
    )
