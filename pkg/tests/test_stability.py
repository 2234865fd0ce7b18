import mpmath
import pytest

from choreo.errors import UnitCountMismatch, VerificationFailed
from choreo.nbody import SearchTriplet
from choreo.precision import working_digits
from choreo.stability import analyze, classify, report_to_dict, verify_cross_precision

from conftest import FIGURE_EIGHT, figure_eight

NU1 = "0.255011944221133753875666925693"
NU2 = "2.19223274459622941216216635818e-05"
NU_120 = "0.255011941995861150357102898351"
LAMBDA_120 = "1.00013775153254718967585223182"


def _unit_circle(nu):
    z = mpmath.expjpi(2 * mpmath.mpf(nu))
    return [z, mpmath.conj(z)]


def test_stable_spectrum():
    with mpmath.workdps(60):
        eigs = [mpmath.mpc(1)] * 8 + _unit_circle(NU1) + _unit_circle(NU2)
        report = classify(eigs, 60)
        assert report.verdict == "linearly stable"
        assert report.type_label == "elliptic-elliptic"
        nu1, nu2 = report.angles
        assert abs(nu1 - mpmath.mpf(NU1)) < mpmath.mpf("1e-50")
        assert abs(nu2 - mpmath.mpf(NU2)) < mpmath.mpf("1e-50")


def test_hyperbolic_elliptic_spectrum():
    with mpmath.workdps(60):
        lam = mpmath.mpf(LAMBDA_120)
        eigs = [mpmath.mpc(1)] * 8 + [lam, 1 / lam] + _unit_circle(NU_120)
        report = classify(eigs, 60)
        assert report.verdict == "not confirmed"
        assert report.type_label == "hyperbolic-elliptic"
        assert abs(report.hyperbolic_eigenvalue - lam) < mpmath.mpf("1e-50")
        out = report_to_dict(report)
        assert out["lambda"].startswith("1.00013775153254718967585223182")


def test_all_unit_spectrum_is_not_confirmed():
    with mpmath.workdps(40):
        report = classify([mpmath.mpc(1)] * 12, 40)
        assert report.verdict == "not confirmed"
        assert {p.kind for p in report.pairs} == {"marginal"}


def test_missing_unit_eigenvalues():
    with mpmath.workdps(40):
        eigs = [mpmath.mpc(1)] * 7 + [mpmath.mpc(3), mpmath.mpc(1) / 3] + _unit_circle("0.1") + [mpmath.mpc(2)]
        with pytest.raises(UnitCountMismatch):
            classify(eigs, 40)


def test_loxodromic_quadruple():
    with mpmath.workdps(40):
        z = mpmath.mpc("1.2", "0.3")
        eigs = [mpmath.mpc(1)] * 8 + [z, mpmath.conj(z), 1 / z, 1 / mpmath.conj(z)]
        report = classify(eigs, 40)
        assert {p.kind for p in report.pairs} == {"loxodromic"}


@pytest.fixture(scope="module")
def fe_report():
    return verify_cross_precision(figure_eight(70), d_lo=40, d_hi=64)


def test_figure_eight_is_linearly_stable(fe_report):
    assert fe_report.verdict == "linearly stable"
    assert fe_report.verification["matched_digits"] >= 30
    with mpmath.workdps(64):
        assert abs(fe_report.determinant - 1) < mpmath.mpf("1e-40")


def test_spectrum_is_closed_under_inverse_and_conjugate(fe_report):
    with mpmath.workdps(64):
        values = [e.value for e in fe_report.eigenvalues]
        tol = mpmath.mpf("1e-12")
        for v in values:
            assert min(abs(w - 1 / v) for w in values) < tol
            assert min(abs(w - mpmath.conj(v)) for w in values) < tol


def test_truncated_solution_fails_verification():
    with working_digits(64):
        short = SearchTriplet.parse(*(s[:22] for s in FIGURE_EIGHT))
    with pytest.raises(VerificationFailed):
        verify_cross_precision(short, d_lo=48, d_hi=64)
