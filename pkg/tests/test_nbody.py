import math

import gmpy2
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from choreo.errors import CollisionError, ZeroEnergyError
from choreo.nbody import (
    SearchTriplet,
    accelerations,
    angular_momentum,
    build_initial_state,
    energy,
    initial_energy,
    linear_momentum,
    rhs,
    scale_invariant_period,
    state_from_values,
)
from choreo.precision import matching_digits, mp, working_digits

from conftest import ROW_119, ROW_120

velocity = st.floats(min_value=-0.9, max_value=0.9, allow_nan=False).map(lambda v: round(v, 6))


def test_rest_state():
    with working_digits(32):
        s = build_initial_state(0, 0)
        assert [float(v) for v in s[:6]] == [-1, 0, 1, 0, 0, 0]
        assert all(gmpy2.is_zero(v) for v in s[6:])
        assert energy(s) == mpfr("-2.5")


def test_row_119_body_three_velocity():
    with working_digits(40):
        s = build_initial_state(ROW_119[0], ROW_119[1])
        assert s[10] == mp("-0.83634736707302558")
        assert s[11] == mp("-1.08114425471540134")


def test_energy_formula():
    with working_digits(40):
        s = build_initial_state("0.2", "0.5")
        assert abs(energy(s) - mp("-1.63")) < mpfr("1e-38")


@settings(max_examples=30, deadline=None)
@given(velocity, velocity)
def test_initial_state_has_zero_momenta(vx, vy):
    with working_digits(40):
        s = build_initial_state(str(vx), str(vy))
        px, py = linear_momentum(s)
        assert gmpy2.is_zero(px) and gmpy2.is_zero(py)
        assert abs(angular_momentum(s)) < mpfr("1e-38")
        assert abs(energy(s) - initial_energy(str(vx), str(vy))) < mpfr("1e-37")


def test_angular_momentum_by_hand():
    with working_digits(32):
        s = state_from_values([0, 1, -1, 0, 1, 0, 1, 0, 0, 0, 0, 0])
        assert angular_momentum(s) == -1


def test_equilateral_accelerations_point_to_centroid():
    side = 1.5
    h = side * math.sqrt(3) / 2
    with working_digits(40):
        pts = [(mp(-side / 2), mp(0)), (mp(side / 2), mp(0)), (mp(0), mp(h))]
        s = state_from_values([c for p in pts for c in p] + [0] * 6)
        acc = accelerations(s)
        cx = sum(p[0] for p in pts) / 3
        cy = sum(p[1] for p in pts) / 3
        expected = 2 * math.cos(math.pi / 6) / side**2
        for b, (x, y) in enumerate(pts):
            ax, ay = acc[b]
            assert math.isclose(float(gmpy2.hypot(ax, ay)), expected, rel_tol=1e-12)
            # parallel to the direction to the centroid
            assert abs(float(ax * (cy - y) - ay * (cx - x))) < 1e-12
            assert float(ax * (cx - x) + ay * (cy - y)) > 0


@settings(max_examples=20, deadline=None)
@given(velocity, velocity)
def test_middle_body_feels_no_force_at_start(vx, vy):
    with working_digits(32):
        acc = accelerations(build_initial_state(str(vx), str(vy)))
        assert gmpy2.is_zero(acc[2][0]) and gmpy2.is_zero(acc[2][1])


def test_rhs_is_velocity_then_acceleration():
    with working_digits(32):
        s = build_initial_state("0.3", "0.5")
        d = rhs(s)
        assert list(d[:6]) == list(s[6:])
        assert d[6] == mpfr("0.25") + 1  # 1/2^2 from body 2 plus 1/1^2 from body 3


def test_collision_is_reported():
    with working_digits(32):
        s = state_from_values([0, 0, 0, 0, 1, 0] + [0] * 6)
        with pytest.raises(CollisionError):
            rhs(s)


@pytest.mark.parametrize(
    "row, expected",
    [(ROW_119, "600.424230253006803"), (ROW_120, "600.424230253006829")],
)
def test_published_t_star(row, expected):
    with working_digits(40):
        t_star = scale_invariant_period(*(mp(v) for v in (row[2], row[0], row[1])))
        assert matching_digits(t_star, mp(expected)) >= 17


def test_t_star_zero_period_and_zero_energy():
    with working_digits(32):
        assert scale_invariant_period(0, "0.2", "0.5") == 0
        v = gmpy2.sqrt(mpfr(5) / 12)  # 3 * 2 v^2 = 2.5
        with pytest.raises(ZeroEnergyError):
            scale_invariant_period(1, v, v)


def test_triplet_rejects_nonpositive_period():
    with working_digits(32):
        with pytest.raises(ValueError):
            SearchTriplet.parse("0.3", "0.5", "0")
