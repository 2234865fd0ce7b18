"""Linearized flow: parameter sensitivities and the monodromy matrix.

Sensitivity columns obey ``S' = J(X(t)) S``.  Per step, the Taylor series of
the pair Hessian blocks are built from the base step's auxiliary series and
the linear recurrence is run in scaled time ``tau = t / h`` on fixed-point
integers.  All columns of one component are packed into a single GMP integer
(one slot per column), so each series product serves every column at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr, mpz

from .errors import NotPeriodic
from .nbody import (
    COLLISION_THRESHOLD,
    PAIR_I,
    PAIR_J,
    build_initial_state,
    check_separation,
    pair_separations,
    parameter_directions,
    rhs,
)
from .precision import digits_to_bits, mp, working_digits
from .taylor import ORDER_PER_DIGIT, IntegratorConfig, iter_steps

SLOT_HEADROOM_BITS = 128


def jacobian(state, collision_threshold=COLLISION_THRESHOLD) -> np.ndarray:
    """12x12 Jacobian of :func:`choreo.nbody.rhs` at ``state``."""
    d, r2 = pair_separations(state)
    check_separation(r2, collision_threshold)
    zero = mpfr(0)
    J = np.empty((12, 12), dtype=object)
    J[:] = zero
    for n in range(6):
        J[n, 6 + n] = mpfr(1)
    for p in range(3):
        i, j = PAIR_I[p], PAIR_J[p]
        r = gmpy2.sqrt(r2[p])
        inv3 = 1 / (r2[p] * r)
        inv5 = inv3 / r2[p]
        block = np.empty((2, 2), dtype=object)
        for a in range(2):
            for b in range(2):
                block[a, b] = -3 * inv5 * d[p, a] * d[p, b]
            block[a, a] += inv3
        # d acc_i / d r_j = block, d acc_i / d r_i = -block, and symmetrically for j
        for a in range(2):
            for b in range(2):
                J[6 + 2 * i + a, 2 * j + b] += block[a, b]
                J[6 + 2 * i + a, 2 * i + b] -= block[a, b]
                J[6 + 2 * j + a, 2 * i + b] += block[a, b]
                J[6 + 2 * j + a, 2 * j + b] -= block[a, b]
    return J


def _conv(a, b, k):
    return (a[..., : k + 1] * b[..., k::-1]).sum(axis=-1)


def _hessian_series(aux, n):
    """First ``n`` coefficients of the pair blocks ``s I - 3 s5 d d^T``.

    Returns (bxx, bxy, byy), each of shape (3, n).  Uses ``s5 r2 = s`` so
    ``byy = 3 s5 dx^2 - 2 s``.
    """
    r2, s = aux.r2, aux.s
    dx, dy = aux.d[:, 0, :], aux.d[:, 1, :]
    s5 = np.empty((3, n), dtype=object)
    s5[:, 0] = s[:, 0] / r2[:, 0]
    neg_inv_2r0 = np.array([-1 / (2 * q) for q in r2[:, 0]], dtype=object)
    for k in range(1, n):
        w = np.array([3 * m + 2 * k for m in range(1, k + 1)], dtype=object)
        s5[:, k] = (r2[:, 1 : k + 1] * s5[:, k - 1 :: -1] * w).sum(axis=1) * neg_inv_2r0 / k
    e = np.empty((3, n), dtype=object)
    g = np.empty((3, n), dtype=object)
    hxy = np.empty((3, n), dtype=object)
    for k in range(n):
        e[:, k] = _conv(s5, dx, k)
    for k in range(n):
        g[:, k] = _conv(e, dx, k)
        hxy[:, k] = _conv(e, dy, k)
    sn = s[:, :n]
    return sn - 3 * g, -3 * hxy, 3 * g - 2 * sn


class _Packer:
    """Signed fixed-point slots of ``width`` bits packed into one integer."""

    def __init__(self, slots: int, width: int):
        self.slots = slots
        self.width = width
        self.half = mpz(1) << (width - 1)
        self.offset = gmpy2.pack([self.half] * slots, width)

    def pack(self, values) -> mpz:
        half = self.half
        return gmpy2.pack([v + half for v in values], self.width) - self.offset

    def unpack(self, packed) -> list:
        half = self.half
        out = gmpy2.unpack(packed + self.offset, self.width)
        return [u - half for u in out]


def _rounded_div(v, n):
    # nearest integer to v / n for n > 0
    return (2 * v + n) // (2 * n)


def _variational_step(aux, h, columns, order, frac_bits):
    """Advance sensitivity columns (m, 12) across one step of length ``h``."""
    m = columns.shape[0]
    K = order
    F = frac_bits
    bxx, bxy, byy = _hessian_series(aux, K)

    # scaled blocks h^(j+2) B_j as fixed-point integers
    hp = h * h
    Bxx = np.empty((3, K), dtype=object)
    Bxy = np.empty((3, K), dtype=object)
    Byy = np.empty((3, K), dtype=object)
    for j in range(K):
        for p in range(3):
            Bxx[p, j] = mpz(gmpy2.mul_2exp(bxx[p, j] * hp, F))
            Bxy[p, j] = mpz(gmpy2.mul_2exp(bxy[p, j] * hp, F))
            Byy[p, j] = mpz(gmpy2.mul_2exp(byy[p, j] * hp, F))
        hp = hp * h

    # per-column power-of-two scale so every slot starts below 2^F
    scaled = np.empty((m, 12), dtype=object)
    scaled[:, :6] = columns[:, :6]
    scaled[:, 6:] = columns[:, 6:] * h
    exps = []
    for c in range(m):
        nonzero = [gmpy2.get_exp(x) for x in scaled[c] if not gmpy2.is_zero(x)]
        exps.append(max(nonzero) if nonzero else 0)

    packer = _Packer(m, 2 * F + SLOT_HEADROOM_BITS + K.bit_length())
    fixed = [
        [mpz(gmpy2.mul_2exp(scaled[c, n], F - exps[c])) for c in range(m)] for n in range(12)
    ]
    P = np.empty((3, 2, K + 1), dtype=object)
    W_slots = [fixed[6 + n] for n in range(6)]  # velocity slots of the current order
    for n in range(6):
        P[n // 2, n % 2, 0] = packer.pack(fixed[n])
    W_sum = [packer.pack(W_slots[n]) for n in range(6)]
    P_sum = [P[n // 2, n % 2, 0] for n in range(6)]

    D = np.empty((3, 2, K + 1), dtype=object)
    for k in range(K):
        D[:, :, k] = P[PAIR_J, :, k] - P[PAIR_I, :, k]
        DX, DY = D[:, 0, :], D[:, 1, :]
        fx = _conv(Bxx, DX, k) + _conv(Bxy, DY, k)
        fy = _conv(Bxy, DX, k) + _conv(Byy, DY, k)
        force = (
            (fx[0] + fx[1], fy[0] + fy[1]),
            (fx[2] - fx[0], fy[2] - fy[0]),
            (-fx[1] - fx[2], -fy[1] - fy[2]),
        )
        n_next = (k + 1) << F
        new_W = []
        for n in range(6):
            body, comp = divmod(n, 2)
            w_next = [_rounded_div(v, n_next) for v in packer.unpack(force[body][comp])]
            p_next = [_rounded_div(v, k + 1) for v in W_slots[n]]
            P[body, comp, k + 1] = packer.pack(p_next)
            P_sum[n] += P[body, comp, k + 1]
            W_sum[n] += packer.pack(w_next)
            new_W.append(w_next)
        W_slots = new_W

    out = np.empty((m, 12), dtype=object)
    for n in range(6):
        pos = packer.unpack(P_sum[n])
        vel = packer.unpack(W_sum[n])
        for c in range(m):
            out[c, n] = gmpy2.mul_2exp(mpfr(pos[c]), exps[c] - F)
            out[c, 6 + n] = gmpy2.mul_2exp(mpfr(vel[c]), exps[c] - F) / h
    return out


def variational_order(var_digits: int, cfg: IntegratorConfig) -> int:
    return min(cfg.order, max(4, math.ceil(ORDER_PER_DIGIT * var_digits)))


@dataclass
class SensitivityState:
    base: np.ndarray  # state at t
    columns: np.ndarray  # (m, 12)
    t: mpfr
    steps: int = 0


def propagate(state, columns, t_target, cfg: IntegratorConfig, var_digits=None) -> SensitivityState:
    """Integrate ``state`` together with tangent ``columns`` (m, 12) to ``t_target``.

    The step size is driven by the base state only.  ``var_digits`` sets the
    accuracy of the tangent columns (default: the base precision).
    """
    var_digits = cfg.digits if var_digits is None else min(var_digits, cfg.digits)
    Kv = variational_order(var_digits, cfg)
    F = digits_to_bits(var_digits) + 16
    cols = np.array(columns, dtype=object).reshape(-1, 12)
    base = state
    t = mpfr(0)
    n = 0
    for step in iter_steps(state, t_target, cfg):
        with working_digits(max(var_digits, 16)):
            cols = _variational_step(step.expansion.aux, step.h, cols, Kv, F)
        base, t = step.end, step.t1
        n += 1
    return SensitivityState(base=base, columns=cols, t=mp(t_target) if n else t, steps=n)


def integrate_param_sensitivities(v_x, v_y, t_target, cfg: IntegratorConfig, var_digits=None):
    """State and d X / d(v_x, v_y) at ``t_target`` for the parametrized start."""
    X0 = build_initial_state(v_x, v_y)
    return propagate(X0, parameter_directions(), t_target, cfg, var_digits)


def identity_columns() -> np.ndarray:
    cols = np.empty((12, 12), dtype=object)
    cols[:] = mpfr(0)
    for n in range(12):
        cols[n, n] = mpfr(1)
    return cols


@dataclass
class MonodromyResult:
    matrix: np.ndarray  # (12, 12), M[i, j] = d X_i(T) / d X_j(0)
    initial_state: np.ndarray
    final_state: np.ndarray
    residual: mpfr
    steps: int


def periodicity_tolerance(digits: int) -> mpfr:
    """Residual accepted as 'periodic' before a monodromy run at ``digits``."""
    return mpfr(10) ** (-(digits // 2))


def integrate_monodromy(solution, cfg: IntegratorConfig, residual_tolerance=None) -> MonodromyResult:
    """Monodromy matrix of the orbit ``solution`` (a SearchTriplet) over one period."""
    X0 = build_initial_state(solution.v_x, solution.v_y)
    run = propagate(X0, identity_columns(), solution.T, cfg)
    diff = run.base - X0
    residual = gmpy2.sqrt((diff * diff).sum())
    tol = periodicity_tolerance(cfg.digits) if residual_tolerance is None else mp(residual_tolerance)
    if residual > tol:
        raise NotPeriodic(f"periodicity residual {float(residual):.3e} exceeds {float(tol):.3e}")
    return MonodromyResult(
        matrix=run.columns.T.copy(), initial_state=X0, final_state=run.base, residual=residual, steps=run.steps
    )


def flow_direction_check(result: MonodromyResult) -> mpfr:
    """max |M f(X(0)) - f(X(T))|: the flow carries its own direction field."""
    Mf = result.matrix.dot(rhs(result.initial_state))
    return max(abs(v) for v in Mf - rhs(result.final_state))
