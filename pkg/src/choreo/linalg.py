"""Dense linear algebra at working precision.

Least squares by Householder QR runs on gmpy2 values.  Eigenvalues are
taken from mpmath's Hessenberg/shifted-QR solver after a power-of-two
balancing pass, with condition numbers from left/right eigenvector pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
import mpmath
import numpy as np
from gmpy2 import mpfr

from .errors import NoConvergence, RankDeficient
from .precision import current_digits

DEFAULT_GUARD_DIGITS = 10


def _keep_mpfr(x):
    # mpfr(x) would re-round to the active context; existing values stay exact
    return x if isinstance(x, type(mpfr(0))) else mpfr(x)


def _as_matrix(A) -> np.ndarray:
    M = np.array(A, dtype=object)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    return np.vectorize(_keep_mpfr, otypes=[object])(M)


def householder_qr(A):
    """Factor A (m x n, m >= n) in place form: returns (R, reflectors).

    Each reflector is (v, beta) with H = I - beta v v^T.
    """
    R = _as_matrix(A)
    m, n = R.shape
    if m < n:
        raise ValueError("householder_qr needs at least as many rows as columns")
    reflectors = []
    for j in range(n):
        x = R[j:, j].copy()
        norm = gmpy2.sqrt((x * x).sum())
        if gmpy2.is_zero(norm):
            reflectors.append((None, mpfr(0)))
            continue
        alpha = -norm if x[0] >= 0 else norm
        v = x
        v[0] = v[0] - alpha
        vv = (v * v).sum()
        beta = 2 / vv
        # apply H to the trailing block
        block = R[j:, j:]
        w = v.dot(block) * beta
        R[j:, j:] = block - np.outer(v, w)
        R[j + 1 :, j] = mpfr(0)
        R[j, j] = alpha
        reflectors.append((v, beta))
    return R, reflectors


def apply_qt(reflectors, b) -> np.ndarray:
    """Compute Q^T b from the stored reflectors."""
    y = np.array([mpfr(v) for v in b], dtype=object)
    for j, (v, beta) in enumerate(reflectors):
        if v is None:
            continue
        seg = y[j:]
        y[j:] = seg - v * (beta * v.dot(seg))
    return y


def solve_least_squares(A, b, guard_digits: int = DEFAULT_GUARD_DIGITS) -> np.ndarray:
    """Minimize ||A x - b||_2 by Householder QR at the current precision."""
    R, reflectors = householder_qr(A)
    n = R.shape[1]
    y = apply_qt(reflectors, b)
    diag = [abs(R[i, i]) for i in range(n)]
    largest = max(diag)
    limit = largest * mpfr(10) ** (-(current_digits() - guard_digits))
    if gmpy2.is_zero(largest) or min(diag) < limit:
        raise RankDeficient(
            "R diagonal below rank threshold: "
            + ", ".join(f"{float(d):.3e}" for d in diag)
        )
    x = np.empty(n, dtype=object)
    for i in range(n - 1, -1, -1):
        acc = y[i] - R[i, i + 1 :].dot(x[i + 1 :]) if i + 1 < n else y[i]
        x[i] = acc / R[i, i]
    return x


def to_mpmath(x) -> mpmath.mpf:
    """Exact conversion of an mpfr value."""
    man, exp = _keep_mpfr(x).as_mantissa_exp()
    return mpmath.ldexp(mpmath.mpf(int(man)), int(exp))


def from_mpmath(x) -> mpfr:
    """Round an mpmath real to the current working precision."""
    sign, man, exp, _ = mpmath.mpf(x)._mpf_
    if not man:
        return mpfr(0)
    return gmpy2.mul_2exp(mpfr(-man if sign else man), exp)


def balance(M: np.ndarray, sweeps: int = 50):
    """Power-of-two diagonal scaling D with D^-1 M D better balanced.

    Returns (balanced matrix, list of scale exponents).
    """
    B = M.copy()
    n = B.shape[0]
    e = [0] * n
    for _ in range(sweeps):
        changed = False
        for i in range(n):
            c = sum(abs(B[j, i]) for j in range(n) if j != i)
            r = sum(abs(B[i, j]) for j in range(n) if j != i)
            if gmpy2.is_zero(c) or gmpy2.is_zero(r):
                continue
            f = 0
            # step by factors of 2 until row and column norms are comparable
            while c < r / 2:
                c, r, f = c * 4, r / 4, f + 1
            while c >= r * 2:
                c, r, f = c / 4, r * 4, f - 1
            if f:
                # column i scaled by 2^f, row i by 2^-f
                for j in range(n):
                    B[j, i] = gmpy2.mul_2exp(B[j, i], f)
                    B[i, j] = gmpy2.mul_2exp(B[i, j], -f)
                e[i] += f
                changed = True
        if not changed:
            break
    return B, e


@dataclass
class EigenPair:
    value: mpmath.mpc
    condition: mpmath.mpf


def eigenvalues(M, digits: int) -> list[EigenPair]:
    """Eigenvalues of a square matrix with condition numbers 1/|y^H x|.

    ``x`` and ``y`` are the unit-norm right and left eigenvectors.
    """
    A = _as_matrix(M)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    B, e = balance(A)
    with mpmath.workdps(digits):
        Bm = mpmath.matrix([[to_mpmath(B[i, j]) for j in range(n)] for i in range(n)])
        try:
            E, EL, ER = mpmath.eig(Bm, left=True, right=True)
        except (ValueError, RuntimeError) as err:
            raise NoConvergence(f"eigenvalue iteration failed: {err}") from None
        out = []
        for k in range(n):
            # undo the balancing: x = D x_b, y^H = y_b^H D^-1
            x = [ER[i, k] * mpmath.ldexp(1, e[i]) for i in range(n)]
            y = [EL[k, i] * mpmath.ldexp(1, -e[i]) for i in range(n)]
            nx = mpmath.sqrt(mpmath.fsum(abs(v) ** 2 for v in x))
            ny = mpmath.sqrt(mpmath.fsum(abs(v) ** 2 for v in y))
            # EL rows satisfy y A = lambda y, so y plays the role of y^H
            dot = abs(mpmath.fsum(y[i] * x[i] for i in range(n)))
            cond = nx * ny / dot if dot else mpmath.inf
            out.append(EigenPair(value=mpmath.mpc(E[k]), condition=cond))
    return out
