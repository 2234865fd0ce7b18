import math

import gmpy2
import mpmath
import numpy as np
import pytest
from gmpy2 import mpfr

from choreo.errors import OutOfRange
from choreo.nbody import build_initial_state, energy, rhs, state_from_values
from choreo.precision import mp, working_digits
from choreo.taylor import (
    IntegratorConfig,
    TaylorExpansion,
    advance,
    dense_eval,
    integrate_to,
    iter_steps,
    preset,
    select_stepsize,
    taylor_coefficients,
)

from conftest import FIGURE_EIGHT, figure_eight


def _norm(v):
    return max(abs(x) for x in v)


def test_presets_follow_order_rule():
    table = {"scan": (32, 40), "desk": (64, 74), "stage1": (134, 154), "stage3a": (212, 242), "stage3b": (250, 286)}
    for name, (digits, order) in table.items():
        cfg = preset(name)
        assert (cfg.digits, cfg.order) == (digits, order)
    assert IntegratorConfig.for_digits(100).order == 115
    with pytest.raises(KeyError):
        preset("nope")
    with pytest.raises(ValueError):
        IntegratorConfig(order=2, digits=32)


def test_first_coefficients_are_state_and_rhs():
    with working_digits(40):
        s = build_initial_state("0.3", "0.5")
        exp = taylor_coefficients(s, 20)
        assert list(exp.coeffs[:, 0]) == list(s)
        assert all(abs(a - b) < mpfr("1e-38") for a, b in zip(exp.coeffs[:, 1], rhs(s)))


def test_rest_state_second_coefficient():
    with working_digits(40):
        s = build_initial_state(0, 0)
        exp = taylor_coefficients(s, 10)
        assert all(gmpy2.is_zero(c) for c in exp.coeffs[:6, 1])
        # body 1 is pulled right by body 3 (distance 1) and body 2 (distance 2)
        assert exp.coeffs[0, 2] == mpfr("1.25") / 2


def test_step_size_formula():
    with working_digits(32):
        coeffs = np.empty((12, 11), dtype=object)
        coeffs[:] = mpfr(0)
        coeffs[0, 9] = mpfr(1)
        coeffs[3, 10] = mpfr(-1)
        h = select_stepsize(TaylorExpansion(coeffs=coeffs))
        assert math.isclose(float(h), math.exp(-2), rel_tol=1e-12)
        grown = coeffs.copy()
        for k in range(11):
            grown[:, k] = grown[:, k] * 3**k
        assert select_stepsize(TaylorExpansion(coeffs=grown)) < h


def test_advance_at_zero_is_the_state():
    with working_digits(40):
        s = build_initial_state("0.3", "0.5")
        assert list(advance(taylor_coefficients(s, 30), mpfr(0))) == list(s)


def test_centre_of_mass_drifts_linearly():
    with working_digits(40):
        s = state_from_values([-1, 0, 1, 0, 0, "0.5", "0.3", 0, 0, "0.2", "0.3", "0.1"])
        exp = taylor_coefficients(s, 40)
        h = select_stepsize(exp)
        end = advance(exp, h)
        for axis in (0, 1):
            c0 = sum(s[2 * b + axis] for b in range(3))
            p = sum(s[6 + 2 * b + axis] for b in range(3))
            assert abs(sum(end[2 * b + axis] for b in range(3)) - (c0 + p * h)) < mpfr("1e-36")


def test_step_is_reversible():
    with working_digits(64):
        s = build_initial_state(*FIGURE_EIGHT[:2])
        cfg = preset("desk")
        exp = taylor_coefficients(s, cfg.order)
        h = select_stepsize(exp)
        end = advance(exp, h)
        back = advance(taylor_coefficients(end, cfg.order), -h)
        assert _norm(back - s) < mpfr("1e-54")


def test_step_halving_local_error():
    with working_digits(64):
        cfg = preset("desk")
        s = build_initial_state(*FIGURE_EIGHT[:2])
        exp = taylor_coefficients(s, cfg.order)
        h = select_stepsize(exp, cfg.step_safety)
        full = advance(exp, h)
        mid = advance(exp, h / 2)
        halves = advance(taylor_coefficients(mid, cfg.order), h / 2)
        assert _norm(full - halves) < mpfr("1e-54")


def test_matches_independent_ode_solver():
    # mpmath's own Taylor solver at higher precision as the oracle
    t_end = "0.5"
    with working_digits(32):
        s = build_initial_state(*FIGURE_EIGHT[:2])
        ours = integrate_to(s, mp(t_end), preset("scan")).final
    with mpmath.workdps(45):
        y0 = [mpmath.mpf(str(v)) for v in build_initial_state("0", "0")]
        y0[6:] = [mpmath.mpf(FIGURE_EIGHT[0]), mpmath.mpf(FIGURE_EIGHT[1])] * 2 + [
            -2 * mpmath.mpf(FIGURE_EIGHT[0]),
            -2 * mpmath.mpf(FIGURE_EIGHT[1]),
        ]

        def f(t, y):
            acc = [mpmath.mpf(0)] * 6
            for i, j in ((0, 1), (0, 2), (1, 2)):
                dx, dy = y[2 * j] - y[2 * i], y[2 * j + 1] - y[2 * i + 1]
                r3 = (dx * dx + dy * dy) ** mpmath.mpf(1.5)
                acc[2 * i] += dx / r3
                acc[2 * i + 1] += dy / r3
                acc[2 * j] -= dx / r3
                acc[2 * j + 1] -= dy / r3
            return list(y[6:]) + acc

        ref = mpmath.odefun(f, 0, y0, tol=mpmath.mpf(10) ** -40, degree=40)(mpmath.mpf(t_end))
        err = max(abs(mpmath.mpf(str(a)) - b) for a, b in zip(ours, ref))
    assert err < mpmath.mpf(10) ** -22


def test_clamped_single_step():
    with working_digits(32):
        s = build_initial_state("0.3", "0.5")
        steps = list(iter_steps(s, mpfr("1e-3"), preset("scan")))
        assert len(steps) == 1
        assert steps[0].t1 == mpfr("1e-3")
        assert list(iter_steps(s, 0, preset("scan"))) == []


def test_dense_eval():
    with working_digits(40):
        cfg = IntegratorConfig.for_digits(40)
        s = build_initial_state("0.3", "0.5")
        traj = integrate_to(s, mpfr(1), cfg)
        assert list(dense_eval(traj, 0)) == list(s)
        assert list(dense_eval(traj, traj.times[2])) == list(traj.states[2])
        t_mid = (traj.times[1] + traj.times[2]) / 2
        direct = integrate_to(s, t_mid, cfg).final
        assert _norm(dense_eval(traj, t_mid) - direct) < mpfr("1e-30")
        with pytest.raises(OutOfRange):
            dense_eval(traj, mpfr(2))
        with pytest.raises(ValueError):
            integrate_to(s, -1, cfg)


def test_figure_eight_period_and_energy():
    with working_digits(64):
        fe = figure_eight(64)
        s = build_initial_state(fe.v_x, fe.v_y)
        traj = integrate_to(s, fe.T, preset("desk"), retain=False)
        assert _norm(traj.final - s) < mpfr("1e-50")
        e0 = energy(s)
        drift = max(abs(energy(x) - e0) for x in traj.states) / abs(e0)
        assert drift < mpfr("1e-54")
