"""Linear stability from monodromy eigenvalues.

Eight eigenvalues of the monodromy matrix of a periodic orbit equal 1; the
remaining four come in reciprocal/conjugate pairs and decide stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import mpmath

from .errors import ChoreoError, UnitCountMismatch, VerificationFailed
from .linalg import EigenPair, eigenvalues, to_mpmath
from .precision import working_digits
from .taylor import IntegratorConfig
from .variational import integrate_monodromy

UNIT_COUNT = 8


def unit_tolerance(digits: int):
    return mpmath.mpf(10) ** (-(digits / 4))


@dataclass
class PairClass:
    kind: str  # elliptic | marginal | hyperbolic | loxodromic
    value: mpmath.mpc  # representative eigenvalue
    nu: Optional[mpmath.mpf] = None
    mu: Optional[mpmath.mpf] = None
    sign: Optional[int] = None
    condition: Optional[mpmath.mpf] = None


@dataclass
class EigenReport:
    eigenvalues: list  # EigenPair, all 12
    unit: list  # the 8 removed as unit eigenvalues
    nontrivial: list  # the remaining 4
    pairs: list  # two PairClass
    digits: int
    tolerance: mpmath.mpf
    determinant: Optional[mpmath.mpc] = None
    verification: dict = field(default_factory=dict)

    @property
    def stable(self) -> bool:
        return all(p.kind == "elliptic" for p in self.pairs)

    @property
    def verdict(self) -> str:
        return "linearly stable" if self.stable else "not confirmed"

    @property
    def type_label(self) -> str:
        return "-".join(sorted((p.kind for p in self.pairs), key=lambda k: k != "hyperbolic"))

    @property
    def angles(self) -> list:
        """Stability angles of elliptic pairs, largest first."""
        return sorted((p.nu for p in self.pairs if p.kind == "elliptic"), reverse=True)

    @property
    def hyperbolic_eigenvalue(self):
        """Largest real eigenvalue of a hyperbolic pair, if any."""
        vals = [abs(p.value.real) for p in self.pairs if p.kind == "hyperbolic"]
        return max(vals) if vals else None


def _as_pairs(eigs) -> list:
    out = []
    for e in eigs:
        if isinstance(e, EigenPair):
            out.append(e)
        else:
            out.append(EigenPair(value=mpmath.mpc(e), condition=mpmath.mpf(1)))
    return out


def _angle(z) -> mpmath.mpf:
    # |arg z| / 2 pi lies in [0, 1/2]
    return abs(mpmath.arg(z)) / (2 * mpmath.pi)


def _classify_one(e: EigenPair, tol) -> PairClass:
    z = e.value
    r = abs(z)
    if abs(r - 1) < tol:
        if abs(z.imag) < tol:
            return PairClass("marginal", z, sign=1 if z.real > 0 else -1, condition=e.condition)
        return PairClass("elliptic", z, nu=_angle(z), condition=e.condition)
    if abs(z.imag) < tol:
        return PairClass("hyperbolic", z, mu=abs(mpmath.log(r)), sign=1 if z.real > 0 else -1, condition=e.condition)
    return PairClass("loxodromic", z, mu=abs(mpmath.log(r)), nu=_angle(z), condition=e.condition)


def classify(eigs, digits: int, tolerance=None) -> EigenReport:
    """Remove the 8 eigenvalues nearest 1 and classify the remaining pairs."""
    pairs = _as_pairs(eigs)
    if len(pairs) != 12:
        raise ValueError(f"expected 12 eigenvalues, got {len(pairs)}")
    with mpmath.workdps(digits):
        tol = unit_tolerance(digits) if tolerance is None else mpmath.mpf(tolerance)
        order = sorted(pairs, key=lambda e: abs(e.value - 1))
        unit, rest = order[:UNIT_COUNT], order[UNIT_COUNT:]
        near = sum(1 for e in pairs if abs(e.value - 1) < tol)
        if near < UNIT_COUNT:
            raise UnitCountMismatch(f"only {near} eigenvalues within {mpmath.nstr(tol, 3)} of 1")
        classes = []
        remaining = list(rest)
        while remaining:
            first = remaining.pop(0)
            c = _classify_one(first, tol)
            # partner: conjugate on the unit circle, reciprocal off it
            target = mpmath.conj(first.value) if c.kind in ("elliptic", "marginal") else 1 / first.value
            if remaining:
                k = min(range(len(remaining)), key=lambda i: abs(remaining[i].value - target))
                partner = remaining.pop(k)
                # report the upper / outer member as representative
                if c.kind == "elliptic" and partner.value.imag > first.value.imag:
                    c = _classify_one(partner, tol)
                elif c.kind in ("hyperbolic", "loxodromic") and abs(partner.value) > abs(first.value):
                    c = _classify_one(partner, tol)
            classes.append(c)
        return EigenReport(eigenvalues=pairs, unit=unit, nontrivial=rest, pairs=classes, digits=digits, tolerance=tol)


def determinant(M, digits: int):
    with mpmath.workdps(digits):
        n = M.shape[0]
        return mpmath.det(mpmath.matrix([[to_mpmath(M[i, j]) for j in range(n)] for i in range(n)]))


@dataclass
class MonodromyAnalysis:
    report: EigenReport
    matrix: object
    residual: object
    steps: int


def analyze(solution, digits: int, order: Optional[int] = None) -> MonodromyAnalysis:
    """Monodromy matrix at ``digits`` and its classified spectrum."""
    cfg = IntegratorConfig.for_digits(digits) if order is None else IntegratorConfig(order=order, digits=digits)
    with working_digits(digits):
        mono = integrate_monodromy(solution, cfg)
        eigs = eigenvalues(mono.matrix, digits)
        report = classify(eigs, digits)
        report.determinant = determinant(mono.matrix, digits)
    return MonodromyAnalysis(report=report, matrix=mono.matrix, residual=mono.residual, steps=mono.steps)


def matched_digits(a, b) -> int:
    """Leading decimal digits on which two (complex) numbers agree."""
    scale = max(abs(a), abs(b))
    if scale == 0 or a == b:
        return 10**6
    rel = abs(a - b) / scale
    return max(0, int(math.floor(-float(mpmath.log10(rel)))))


def compare_reports(lo: EigenReport, hi: EigenReport) -> list:
    """Per nontrivial eigenvalue of ``hi``: its match in ``lo`` and agreed digits."""
    out = []
    pool = list(lo.nontrivial)
    for e in hi.nontrivial:
        k = min(range(len(pool)), key=lambda i: abs(pool[i].value - e.value))
        other = pool.pop(k)
        out.append(
            {
                "eigenvalue": e.value,
                "value_digits": matched_digits(e.value, other.value),
                "condition_digits": matched_digits(e.condition, other.condition),
            }
        )
    return out


def verify_cross_precision(
    solution, d_lo: int = 80, d_hi: int = 130, min_digits: int = 30, condition_digits: int = 2
) -> EigenReport:
    """Full monodromy and eigenvalue runs at two precisions; returns the high one.

    Accepted iff every nontrivial eigenvalue agrees to ``min_digits`` and its
    condition number to ``condition_digits`` leading digits.
    """
    try:
        lo = analyze(solution, d_lo).report
        hi = analyze(solution, d_hi).report
    except ChoreoError as err:
        raise VerificationFailed(f"stability run failed: {err}", {"cause": repr(err)}) from err
    with mpmath.workdps(d_hi):
        matches = compare_reports(lo, hi)
    worst = min(m["value_digits"] for m in matches)
    worst_cond = min(m["condition_digits"] for m in matches)
    hi.verification = {
        "digits": (d_lo, d_hi),
        "matched_digits": worst,
        "condition_digits": worst_cond,
        "per_eigenvalue": matches,
        "verdict_lo": lo.verdict,
    }
    if worst < min_digits or worst_cond < condition_digits or lo.verdict != hi.verdict:
        raise VerificationFailed(
            f"eigenvalues agree to {worst} digits, condition numbers to {worst_cond}", hi.verification
        )
    return hi


def _num(x, digits: int = 30) -> str:
    return mpmath.nstr(x, digits, min_fixed=1, max_fixed=0)


def report_to_dict(report: EigenReport, digits: int = 30) -> dict:
    """JSON-ready summary: angles and eigenvalues as decimal strings."""
    with mpmath.workdps(max(report.digits, digits + 5)):
        return _report_dict(report, digits)


def _report_dict(report, digits):
    lam = report.hyperbolic_eigenvalue
    out = {
        "verdict": report.verdict,
        "type": report.type_label,
        "nu": [_num(v, digits) for v in report.angles],
        "lambda": _num(lam, digits) if lam is not None else None,
        "pairs": [
            {
                "kind": p.kind,
                "value": [_num(p.value.real, digits), _num(p.value.imag, digits)],
                "condition": _num(p.condition, 6) if p.condition is not None else None,
            }
            for p in report.pairs
        ],
        "digits": report.digits,
    }
    if report.determinant is not None:
        out["det_minus_one"] = _num(abs(report.determinant - 1), 3)
    if report.verification:
        v = report.verification
        out["verification"] = {
            "digits": list(v["digits"]),
            "matched_digits": v["matched_digits"],
            "condition_digits": v["condition_digits"],
        }
    return out
