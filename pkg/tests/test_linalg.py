import gmpy2
import mpmath
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from choreo.errors import RankDeficient
from choreo.linalg import balance, eigenvalues, from_mpmath, solve_least_squares, to_mpmath
from choreo.precision import mp, working_digits


def _mat(rows):
    return np.array([[mp(v) for v in r] for r in rows], dtype=object)


def test_exact_system():
    with working_digits(64):
        A = np.zeros((12, 3), dtype=object)
        A[:] = mpfr(0)
        for i in range(3):
            A[i, i] = mpfr(1)
        b = [1, 2, 3] + [0] * 9
        assert list(solve_least_squares(A, b)) == [1, 2, 3]


def test_rhs_orthogonal_to_columns_gives_zero():
    with working_digits(64):
        A = _mat([[1, 0], [0, 1], [0, 0], [0, 0]])
        x = solve_least_squares(A, [0, 0, 5, -2])
        assert all(gmpy2.is_zero(v) for v in x)


def test_normal_equations_residual():
    rng = np.random.default_rng(7)
    with working_digits(64):
        A = _mat(rng.normal(size=(12, 3)).tolist())
        b = [mp(v) for v in rng.normal(size=12).tolist()]
        x = solve_least_squares(A, b)
        r = A.dot(x) - np.array(b, dtype=object)
        normal = A.T.dot(r)
        assert max(abs(v) for v in normal) < mpfr("1e-50")


def test_rank_deficient_is_rejected():
    with working_digits(40):
        A = _mat([[1, 2], [2, 4], [3, 6]])
        with pytest.raises(RankDeficient):
            solve_least_squares(A, [1, 1, 1])


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False))
def test_mpmath_conversion_is_exact(v):
    with working_digits(50):
        x = mp(repr(v)) / 3
        with mpmath.workdps(60):
            assert from_mpmath(to_mpmath(x)) == x


def test_conversion_keeps_precision_outside_context():
    with working_digits(100):
        x = mpfr(1) / 3
    with mpmath.workdps(100):
        assert abs(to_mpmath(x) - mpmath.mpf(1) / 3) < mpmath.mpf("1e-98")


def test_balance_preserves_spectrum():
    with working_digits(40):
        A = _mat([[1, 1e6], [1e-6, 2]])
        B, e = balance(A)
        assert abs(B[0, 1]) < 1e4
        ev = sorted(float(p.value.real) for p in eigenvalues(A, 40))
        assert ev == pytest.approx(sorted(np.linalg.eigvals([[1, 1e6], [1e-6, 2]]).real), rel=1e-12)


def test_identity_and_diagonal():
    with working_digits(40):
        eye = _mat(np.eye(12).tolist())
        assert all(abs(p.value - 1) < mpmath.mpf("1e-38") for p in eigenvalues(eye, 40))
        diag = _mat(np.diag([2, 0.5, 3, -1]).tolist())
        values = sorted(float(p.value.real) for p in eigenvalues(diag, 40))
        assert values == [-1, 0.5, 2, 3]


def test_companion_matrix_roots():
    d = 60
    with working_digits(d):
        roots = [mp("1.5"), mp("-0.25"), mp("1") / 3, mp("2.75")]
        # coefficients of prod (x - r)
        coef = [mpfr(1)]
        for r in roots:
            coef = [a - r * b for a, b in zip(coef + [mpfr(0)], [mpfr(0)] + coef)]
        n = 4
        C = np.empty((n, n), dtype=object)
        C[:] = mpfr(0)
        for i in range(1, n):
            C[i, i - 1] = mpfr(1)
        for i in range(n):
            C[i, n - 1] = -coef[n - i]
        found = sorted(eigenvalues(C, d), key=lambda p: float(p.value.real))
    with mpmath.workdps(d):
        for p, r in zip(found, sorted(roots)):
            assert abs(p.value - to_mpmath(r)) < mpmath.mpf(10) ** -(d - 10)
            assert p.condition >= 1
