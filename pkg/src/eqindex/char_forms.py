"""Characteristic forms over the nilpotent ring of even forms.

All series terminate because the curvature entries are nilpotent, so every
result is exact in exact mode.
"""
from fractions import Fraction
from functools import lru_cache

import sympy

from . import scalars as S
from .graded_algebra import (
    ExteriorElement,
    FormMatrix,
    analytic_series,
    matrix_exp,
    matrix_series,
    wedge,
)

ANGLE_TOL = 1e-9


class SingularNormalError(ValueError):
    """Normal action with eigenvalue 1 (angle 0)."""


@lru_cache(maxsize=None)
def bernoulli(k):
    b = sympy.bernoulli(k)
    if k == 1:
        # sympy >= 1.12 returns +1/2; only even indices are used here
        b = sympy.Rational(-1, 2)
    return Fraction(int(b.p), int(b.q))


@lru_cache(maxsize=None)
def _fact(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def log_ahat_coeff(k):
    """Coefficient of x^k in log((x/2)/sinh(x/2))."""
    if k == 0 or k % 2:
        return Fraction(0)
    return -bernoulli(k) / (k * _fact(k))


def _frac(c):
    return S.rational(c.numerator, c.denominator)


# ------------------------------------------------------------------ data types

class NormalAction:
    """Rotation of the normal space by angles theta_j in (0, pi].

    ``block_basis`` optionally lists orthonormal 2-frames (u_j, v_j); the
    rotation then acts by theta_j in the plane span(u_j, v_j).  Without it the
    planes are the coordinate pairs (1,2), (3,4), ...
    """

    def __init__(self, angles, block_basis=None):
        self.angles = list(angles)
        for th in self.angles:
            v = S.angle_value(th)
            if abs(v) <= ANGLE_TOL:
                raise SingularNormalError(f"normal angle {th} is (numerically) zero")
            if not (0 < v <= 3.141592653589793 + 1e-12):
                raise ValueError(f"normal angle must lie in (0, pi], got {v}")
        self.block_basis = None
        if block_basis is not None:
            frames = [(list(u), list(v)) for u, v in block_basis]
            if len(frames) != len(self.angles):
                raise ValueError("one 2-frame per angle is required")
            self.block_basis = frames

    @property
    def size(self):
        return 2 * len(self.angles)

    def _frame_matrix(self):
        # columns u_1, v_1, u_2, v_2, ...
        k = self.size
        O = [[S.zero() for _ in range(k)] for _ in range(k)]
        for j, (u, v) in enumerate(self.block_basis):
            for i in range(k):
                O[i][2 * j] = S.coerce(u[i])
                O[i][2 * j + 1] = S.coerce(v[i])
        return O

    def _conj(self, B):
        if self.block_basis is None:
            return B
        O = self._frame_matrix()
        Ot = [list(r) for r in zip(*O)]
        return _mm(_mm(O, B), Ot)

    def matrix(self):
        """phi^N as a nested list of internal scalars."""
        k = self.size
        B = [[S.zero() for _ in range(k)] for _ in range(k)]
        for j, th in enumerate(self.angles):
            c, s = S.cos(th), S.sin(th)
            B[2 * j][2 * j] = c
            B[2 * j][2 * j + 1] = S.neg(s)
            B[2 * j + 1][2 * j] = s
            B[2 * j + 1][2 * j + 1] = c
        return self._conj(B)

    def inverse_one_minus(self):
        """(1 - phi^N)^{-1}, blockwise (1/(2-2c)) [[1-c, -s], [s, 1-c]]."""
        k = self.size
        B = [[S.zero() for _ in range(k)] for _ in range(k)]
        for j, th in enumerate(self.angles):
            c, s = S.cos(th), S.sin(th)
            omc = S.sub(S.one(), c)
            d = S.div(S.one(), S.mul(S.rational(2), omc))
            B[2 * j][2 * j] = S.mul(omc, d)
            B[2 * j][2 * j + 1] = S.mul(S.neg(s), d)
            B[2 * j + 1][2 * j] = S.mul(s, d)
            B[2 * j + 1][2 * j + 1] = S.mul(omc, d)
        return self._conj(B)

    def det_one_minus(self):
        """det(1 - phi^N) = prod 4 sin^2(theta_j/2), internal scalar."""
        out = S.one()
        for th in self.angles:
            out = S.mul(out, S.mul(S.rational(2), S.sub(S.one(), S.cos(th))))
        return out

    def full_matrix(self, a_dim):
        """n x n matrix phi' = 1_a (+) phi^N."""
        n = a_dim + self.size
        M = [[S.one() if (i == j and i < a_dim) else S.zero() for j in range(n)] for i in range(n)]
        N = self.matrix()
        for i in range(self.size):
            for j in range(self.size):
                M[a_dim + i][a_dim + j] = N[i][j]
        return M

    def __repr__(self):
        return f"NormalAction({self.angles!r})"


def _mm(A, B):
    n, m, p = len(A), len(B), len(B[0]) if B else 0
    out = [[S.zero() for _ in range(p)] for _ in range(n)]
    for i in range(n):
        for k in range(m):
            a = A[i][k]
            if S.is_zero(a):
                continue
            for j in range(p):
                b = B[k][j]
                if not S.is_zero(b):
                    out[i][j] = S.add(out[i][j], S.mul(a, b))
    return out


class TwistData:
    """Twist restricted to a stratum: curvature F0 and the action phiE."""

    def __init__(self, rank, F0, phiE):
        self.rank = int(rank)
        if not isinstance(F0, FormMatrix):
            raise TypeError("F0 must be a FormMatrix")
        if F0.size != self.rank:
            raise ValueError(f"F0 has size {F0.size}, rank is {self.rank}")
        phiE = [list(r) for r in phiE]
        if len(phiE) != self.rank or any(len(r) != self.rank for r in phiE):
            raise ValueError("phiE must be rank x rank")
        for r in F0.rows:
            for e in r:
                if any(d != 2 for d in e.degrees()):
                    raise ValueError("F0 entries must be 2-forms")
        self.F0 = F0
        self.phiE = [[S.coerce(x) for x in r] for r in phiE]
        self._check_unitary()

    def _check_unitary(self):
        p = self.rank
        Z = [[S.to_complex(x) for x in r] for r in self.phiE]
        for i in range(p):
            for j in range(p):
                v = sum(Z[i][k] * Z[j][k].conjugate() for k in range(p))
                if abs(v - (1 if i == j else 0)) > 1e-12:
                    raise ValueError("phiE is not unitary")

    @classmethod
    def trivial(cls, n, rank=1):
        return cls(rank, FormMatrix.zeros(rank, n), [[1 if i == j else 0 for j in range(rank)] for i in range(rank)])

    @property
    def n(self):
        return self.F0.n

    def direct_sum(self, other):
        F = FormMatrix.block_diag(self.F0, other.F0)
        p, q = self.rank, other.rank
        phi = [[S.zero() for _ in range(p + q)] for _ in range(p + q)]
        for i in range(p):
            for j in range(p):
                phi[i][j] = self.phiE[i][j]
        for i in range(q):
            for j in range(q):
                phi[p + i][p + j] = other.phiE[i][j]
        return TwistData(p + q, F, [[S.public(x) for x in r] for r in phi])


# ----------------------------------------------------------------- operations

def _check_curvature(R, name="R"):
    if not isinstance(R, FormMatrix):
        raise TypeError(f"{name} must be a FormMatrix")
    if not R.is_antisymmetric():
        raise ValueError(f"{name} must be antisymmetric")
    for r in R.rows:
        for e in r:
            if not e.is_even() or not S.is_zero(e.scalar_raw()):
                raise ValueError(f"{name} entries must be nilpotent even forms")


def _trace_log_ahat(R):
    return matrix_series(lambda k: _frac(log_ahat_coeff(k)), R).trace()


def a_hat(R):
    """det^{1/2}((R/2)/sinh(R/2)) as exp(1/2 tr log)."""
    _check_curvature(R)
    if R.size == 0:
        return ExteriorElement.one(R.n)
    tl = _trace_log_ahat(R)
    return analytic_series("exp", tl.scale(S.rational(1, 2)))


def det_sqrt_one_minus(normal):
    """prod_j 2 sin(theta_j/2), i.e. det^{1/2}(1 - phi^N) on the positive branch."""
    out = S.one()
    for th in normal.angles:
        out = S.mul(out, S.mul(S.rational(2), S.sin(S.mul(S.angle(th), S.rational(1, 2)))))
    return S.public(out)


def _det_sqrt_internal(normal):
    return S.coerce(det_sqrt_one_minus(normal))


def _log1p_coeff(k):
    if k == 0:
        return S.zero()
    c = S.rational(1, k)
    return c if k % 2 else S.neg(c)


def nu_phi(Rpp, normal):
    """det^{-1/2}(1 - phi^N e^{-R''}), positive branch at the scalar level."""
    if not isinstance(normal, NormalAction):
        raise TypeError("normal must be a NormalAction")
    if Rpp.size != normal.size:
        raise ValueError(f"R'' has size {Rpp.size}, normal space has dimension {normal.size}")
    if normal.size == 0:
        return ExteriorElement.one(Rpp.n)
    _check_curvature(Rpp, "R''")
    n = Rpp.n
    scal = S.div(S.one(), _det_sqrt_internal(normal))
    # 1 - phi e^{-R} = (1 - phi)(1 + M),  M = (1-phi)^{-1} phi (1 - e^{-R})
    phi = FormMatrix.from_numbers(normal.matrix(), n)
    inv = FormMatrix.from_numbers(normal.inverse_one_minus(), n)
    one_minus_exp = FormMatrix.identity(Rpp.size, n) - matrix_exp(-Rpp)
    M = inv @ (phi @ one_minus_exp)
    if M.is_zero():
        return ExteriorElement.scalar(n, scal)
    tl = matrix_series(_log1p_coeff, M).trace()
    return analytic_series("exp", tl.scale(S.rational(-1, 2))).scale(scal)


def ch_phi(twist):
    """Tr[phi^E exp(-F0)]."""
    if not isinstance(twist, TwistData):
        raise TypeError("twist must be TwistData")
    n = twist.n
    E = matrix_exp(-twist.F0)
    P = FormMatrix.from_numbers(twist.phiE, n)
    return (P @ E).trace()


def rotation_block_matrix(angles, n):
    """FormMatrix of phi^N with scalar entries in Lambda(n)."""
    return FormMatrix.from_numbers(NormalAction(angles).matrix(), n)


def curvature_from_two_forms(pairs, size, n):
    """Antisymmetric FormMatrix with R_ij = omega, R_ji = -omega for (i, j, omega) in pairs.

    Indices are 0-based within the block.
    """
    R = FormMatrix.zeros(size, n)
    for i, j, w in pairs:
        R.rows[i][j] = R.rows[i][j] + w
        R.rows[j][i] = R.rows[j][i] - w
    return R


def wedge_all(*forms):
    out = forms[0]
    for f in forms[1:]:
        out = wedge(out, f)
    return out
