"""Mehler kernels and the Gaussian fiber integral of the curvature oscillator.

``mehler_kernel`` implements

    K(x, y, t) = (4 pi t)^{-n/2} det^{1/2}((tR/2)/sinh(tR/2)) exp(-Theta(x, y, t)/4t),
    Theta = <A coth A x, x> + <A coth A y, y> - 2 <(A/sinh A) e^A x, y>,   A = tR/2,

with <Mx, y> = y^T M x.  Read this way it is the heat kernel of
-sum_i (d_i + 1/4 R_ij x^j)^2, i.e. of H_{R^T}; pass R^T to get H_R itself.
The closed-form fiber integral below is the one matching this kernel.
"""
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import scalars as S
from .char_forms import NormalAction, a_hat, bernoulli, ch_phi, det_sqrt_one_minus, nu_phi, TwistData
from .graded_algebra import (
    ExteriorElement,
    FormMatrix,
    analytic_series,
    berezin_horizontal,
    matrix_series,
    nilpotent_powers,
    wedge,
)
from .volterra import (
    GaussianKernel,
    GetzlerOperator,
    fiber_terms,
    getzler_order_and_model,
    madd,
    unit,
    zeros,
    _poly_add_into,
    _t_factor,
)


class MehlerError(ValueError):
    pass


# ------------------------------------------------------------ series data

@lru_cache(maxsize=None)
def _fact(k):
    return math.factorial(k)


@lru_cache(maxsize=None)
def coth_coeffs(kmax):
    """c_j with A coth A - 1 = sum_j c_j A^j (only even j)."""
    out = [Fraction(0)] * (kmax + 1)
    for j in range(2, kmax + 1, 2):
        out[j] = Fraction(2 ** j) * bernoulli(j) / _fact(j)
    return tuple(out)


@lru_cache(maxsize=None)
def sinh_exp_coeffs(kmax):
    """s_j with (A/sinh A) e^A - 1 = sum_j s_j A^j."""
    inv_sinh = [Fraction(0)] * (kmax + 1)
    for j in range(0, kmax + 1, 2):
        inv_sinh[j] = (2 - Fraction(2 ** j)) * bernoulli(j) / _fact(j)
    out = [Fraction(0)] * (kmax + 1)
    for j in range(kmax + 1):
        out[j] = sum(inv_sinh[i] * Fraction(1, _fact(j - i)) for i in range(j + 1))
    out[0] -= 1
    return tuple(out)


def _fr(c):
    return S.rational(c.numerator, c.denominator)


def _check_R(R):
    if not isinstance(R, FormMatrix):
        raise TypeError("R must be a FormMatrix")
    if not R.is_antisymmetric():
        raise MehlerError("R must be antisymmetric")
    if not R.is_nilpotent():
        raise MehlerError("R entries must be nilpotent even forms")


# ------------------------------------------------------------ model curvature

class ModelCurvature:
    """Curvature data at a fixed point: R' (a x a), R'' (b x b), twist curvature, normal action."""

    def __init__(self, Rp, Rpp, normal, F0=None):
        if not isinstance(normal, NormalAction):
            raise TypeError("normal must be a NormalAction")
        n = Rp.n if Rp is not None else Rpp.n
        if Rp is None:
            Rp = FormMatrix([], n=n)
        if Rpp is None:
            Rpp = FormMatrix([], n=n)
        if Rp.n != Rpp.n:
            raise MehlerError("R' and R'' must live in the same Lambda(n)")
        if Rp.size + Rpp.size != n:
            raise MehlerError(f"block sizes {Rp.size}+{Rpp.size} do not add up to n={n}")
        if Rpp.size != normal.size:
            raise MehlerError("R'' size must match the normal action")
        for R in (Rp, Rpp):
            if R.size:
                _check_R(R)
        self.Rp, self.Rpp, self.normal, self.F0 = Rp, Rpp, normal, F0
        self.n = n
        self.a = Rp.size

    @classmethod
    def flat(cls, a_dim, normal, n=None):
        n = a_dim + normal.size if n is None else n
        return cls(FormMatrix.zeros(a_dim, n) if a_dim else FormMatrix([], n=n),
                   FormMatrix.zeros(normal.size, n) if normal.size else FormMatrix([], n=n), normal)

    def full_R(self):
        if self.a == 0:
            return self.Rpp
        if self.Rpp.size == 0:
            return self.Rp
        return FormMatrix.block_diag(self.Rp, self.Rpp)

    def commutes_with_normal(self):
        if self.Rpp.size == 0:
            return True
        phi = FormMatrix.from_numbers(self.normal.matrix(), self.n)
        return (phi @ self.Rpp) == (self.Rpp @ phi)


# ------------------------------------------------------------ kernels

def _t_split(form):
    """Split F(tR) = sum_k t^k F_{2k} for a form built from 2-form curvature."""
    out = {}
    for d in form.degrees():
        if d % 2:
            raise MehlerError("odd-degree part in a curvature expression")
        out[d // 2] = form.degree_part(d)
    return out


def mehler_gaussian_kernel(R):
    """The Mehler display as a GaussianKernel in (x, z = x - y, t), symbolic in t."""
    _check_R(R)
    n = R.n
    if R.size != n:
        raise MehlerError("R must be n x n")
    fdim = n
    powers = nilpotent_powers(R)
    kmax = len(powers)
    cc, ss = coth_coeffs(kmax), sinh_exp_coeffs(kmax)
    # A^j = t^j R^j / 2^j
    Cj = {j: powers[j].scale(_fr(cc[j] / 2 ** j)) for j in range(1, len(powers)) if cc[j]}
    Sj = {j: powers[j].scale(_fr(ss[j] / 2 ** j)) for j in range(1, len(powers)) if ss[j]}
    E = {}
    quarter = S.rational(-1, 4)

    def add(alpha, gamma, p, c):
        if not c.is_zero():
            _poly_add_into(E, (alpha, gamma, Fraction(p)), c)

    for j, M in Cj.items():
        for i in range(n):
            for l in range(n):
                c = M[i, l].scale(quarter)
                if c.is_zero():
                    continue
                ei, el = unit(n, i), unit(n, l)
                # x^T C x + y^T C y with y = x - z
                add(madd(ei, el), zeros(n), j - 1, c.scale(S.rational(2)))
                add(ei, el, j - 1, -c)
                add(el, ei, j - 1, -c)
                add(zeros(n), madd(ei, el), j - 1, c)
    for j, M in Sj.items():
        for i in range(n):
            for l in range(n):
                c = M[i, l].scale(quarter)
                if c.is_zero():
                    continue
                ei, el = unit(n, i), unit(n, l)
                # -2 y_i S_il x_l with y = x - z
                add(madd(ei, el), zeros(n), j - 1, c.scale(S.rational(-2)))
                add(el, ei, j - 1, c.scale(S.rational(2)))
    pref = _t_split(a_hat(R))
    terms = {(zeros(n), zeros(n), Fraction(k)): v for k, v in pref.items()}
    return GaussianKernel(n, terms, fdim, E or None)


def mehler_kernel(R, x, y, t):
    """Value of the Mehler display at (x, y, t).

    ``R`` is either a FormMatrix (form-valued kernel, exact or f64 per the
    active mode) or a real antisymmetric numpy array (numeric kernel).
    """
    if isinstance(R, FormMatrix):
        return _mehler_form(R, x, y, t)
    return _mehler_numeric_antisym(np.asarray(R, dtype=float), x, y, t)


def _mehler_form(R, x, y, t):
    _check_R(R)
    n = R.n
    if S.to_complex(t).real <= 0:
        raise MehlerError("t must be > 0")
    t = S.coerce(t)
    x = [S.coerce(v) for v in x]
    y = [S.coerce(v) for v in y]
    A = R.scale(S.mul(t, S.rational(1, 2)))
    powers = nilpotent_powers(A)
    kmax = len(powers)
    cc, ss = coth_coeffs(kmax), sinh_exp_coeffs(kmax)
    C = matrix_series([_fr(c) for c in cc], A)
    Sm = matrix_series([_fr(c) for c in ss], A)

    def quad(M, u, v):
        acc = ExteriorElement.zero(n)
        for i in range(n):
            for l in range(n):
                w = S.mul(u[i], v[l])
                if not S.is_zero(w) and not M[i, l].is_zero():
                    acc = acc + M[i, l].scale(w)
        return acc

    dz2 = S.zero()
    for a, b in zip(x, y):
        d = S.sub(a, b)
        dz2 = S.add(dz2, S.mul(d, d))
    theta = ExteriorElement.scalar(n, dz2) + quad(C, x, x) + quad(C, y, y) - quad(Sm, y, x).scale(S.rational(2))
    E = theta.scale(S.div(S.rational(-1, 4), t))
    pref = S.power(S.mul(S.mul(S.rational(4), S.pi()), t), Fraction(-n, 2))
    return wedge(a_hat(R.scale(t)), analytic_series("exp", E)).scale(pref)


def _fn_of_normal(M, f):
    """f(M) for a normal matrix M via the complex Schur form."""
    from scipy.linalg import schur
    T, Z = schur(M.astype(complex), output="complex")
    d = np.diag(T)
    return (Z * f(d)) @ Z.conj().T


def _xcothx(s):
    s = np.asarray(s, dtype=complex)
    out = np.ones_like(s)
    big = np.abs(s) > 1e-6
    out[big] = s[big] / np.tanh(s[big])
    out[~big] = 1 + s[~big] ** 2 / 3
    return out


def _xcschx(s):
    s = np.asarray(s, dtype=complex)
    out = np.ones_like(s)
    big = np.abs(s) > 1e-6
    out[big] = s[big] / np.sinh(s[big])
    out[~big] = 1 - s[~big] ** 2 / 6
    return out


def _mehler_numeric_antisym(R, x, y, t):
    if t <= 0:
        raise MehlerError("t must be > 0")
    n = R.shape[0]
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = t * R / 2
    C = _fn_of_normal(A, _xcothx)
    Sm = _fn_of_normal(A, lambda d: _xcschx(d) * np.exp(d))
    theta = x @ C @ x + y @ C @ y - 2 * (y @ Sm @ x)
    w = np.linalg.eigvals(A)
    pref = np.prod(np.sqrt(_xcschx(w)))
    return complex((4 * np.pi * t) ** (-n / 2) * pref * np.exp(-theta / (4 * t)))


def mehler_kernel_real(B, x, y, t):
    """Heat kernel of H_B = -Laplacian + 1/4 <Bx, x>, B symmetric positive semidefinite."""
    if t <= 0:
        raise MehlerError("t must be > 0")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    n = B.shape[0]
    lam, Q = np.linalg.eigh(B)
    if lam.min() < -1e-12:
        raise MehlerError("B must be positive semidefinite")
    s = t * np.sqrt(np.clip(lam, 0, None))
    coth = np.real(_xcothx(s))
    csch = np.real(_xcschx(s))
    xq, yq = Q.T @ x, Q.T @ y
    theta = np.sum(coth * (xq ** 2 + yq ** 2)) - 2 * np.sum(csch * xq * yq)
    return (4 * np.pi * t) ** (-n / 2) * np.sqrt(np.prod(csch)) * np.exp(-theta / (4 * t))


def display_operator(R):
    """The operator whose heat kernel is the Mehler display: -sum_i (d_i + 1/4 R_ij x^j)^2."""
    n = R.n
    out = GetzlerOperator(n)
    for i in range(n):
        op = GetzlerOperator.d(n, i + 1)
        for j in range(n):
            w = R[i, j]
            if not w.is_zero():
                op = op + GetzlerOperator.form(w.scale(S.rational(1, 4))) @ GetzlerOperator.x(n, j + 1)
        out = out - op @ op
    return out


# ------------------------------------------------------------ fiber integrals

def mehler_fiber_terms(mc):
    """{p: C_p} with I_{(H+d_t)^{-1}}(0, t) = (4 pi t)^{-a/2} sum_p C_p t^p (closed form)."""
    n = mc.n
    inv = S.div(S.one(), S.coerce(det_sqrt_one_minus(mc.normal)))
    ah = a_hat(mc.Rp) if mc.Rp.size else ExteriorElement.one(n)
    nu = nu_phi(mc.Rpp, mc.normal) if mc.Rpp.size else ExteriorElement.one(n)
    total = wedge(ah, nu).scale(inv)
    return {Fraction(k): v for k, v in _t_split(total).items()}


def mehler_fiber_integral(mc, t):
    """(4 pi t)^{-a/2} det^{-1/2}(1 - phi^N) Ahat(tR') nu_phi(tR'')."""
    if S.to_complex(t).real <= 0:
        raise MehlerError("t must be > 0")
    out = ExteriorElement.zero(mc.n)
    for p, c in mehler_fiber_terms(mc).items():
        out = out + c.scale(_t_factor(t, mc.a, p))
    return out


def mehler_fiber_via_kernel(mc):
    """Same quantity computed by integrating the Mehler kernel over the normal fiber."""
    K = mehler_gaussian_kernel(mc.full_R())
    return fiber_terms(K, mc.normal, mc.a)


def resolvent_power_fiber_integral(mc, m, t):
    """I_{(H+d_t)^{-(m+1)}}(0, t) = t^m/m! I_{(H+d_t)^{-1}}(0, t)."""
    if m < 0:
        raise MehlerError("m must be >= 0")
    base = mehler_fiber_integral(mc, t)
    return base.scale(S.mul(S.power(S.coerce(t), m), S.rational(1, _fact(m))))


# ------------------------------------------------------------ gamma_phi

def _gamma_prefactor(n, a_dim, normal):
    """(-i)^{n/2} 2^{a/2} det^{1/2}(1 - phi^N)."""
    return S.mul(S.mul(S.power(S.coerce(-1j), n // 2), S.power(S.rational(2), Fraction(a_dim, 2))),
                 S.coerce(det_sqrt_one_minus(normal)))


def _twist_factor(mc, twist, n):
    if twist is None:
        if mc.F0 is None:
            return ExteriorElement.one(n)
        twist = TwistData(mc.F0.size, mc.F0, [[1 if i == j else 0 for j in range(mc.F0.size)] for i in range(mc.F0.size)])
    return ch_phi(twist)


def model_fiber_terms(model_op, mc):
    """{p: C_p} for I_{P (H+d_t)^{-1}}(0, t), P a form-coefficient model operator."""
    if isinstance(model_op, ExteriorElement):
        return {p: wedge(model_op, c) for p, c in mehler_fiber_terms(mc).items()}
    if not isinstance(model_op, GetzlerOperator):
        raise TypeError("model_op must be an ExteriorElement or a GetzlerOperator")
    P = model_op.folded() if model_op.has_clifford() else model_op
    K = mehler_gaussian_kernel(mc.full_R()).apply_operator(P)
    return fiber_terms(K, mc.normal, mc.a)


def gamma_phi_density(model_op, mc, a_dim=None, twist=None):
    """(-i)^{n/2} 2^{a/2} det^{1/2}(1-phi^N) |tr_E[phi^E I_{P(H+d_t)^{-1}}(0,1) ^ exp(-F0)]|^{(a,0)}."""
    a_dim = mc.a if a_dim is None else a_dim
    if a_dim % 2:
        raise MehlerError("a_dim must be even")
    if a_dim != mc.a:
        raise MehlerError("a_dim disagrees with the model curvature blocks")
    n = mc.n
    terms = model_fiber_terms(model_op, mc)
    I1 = ExteriorElement.zero(n)
    for p, c in terms.items():
        I1 = I1 + c
    I1 = I1.scale(_t_factor(1, a_dim, 0))
    dens = wedge(I1, _twist_factor(mc, twist, n))
    val = berezin_horizontal(dens, a_dim)
    return S.public(S.mul(_gamma_prefactor(n, a_dim, mc.normal), S.coerce(val)))


def leading_slot_coefficient(model_op, mc, twist=None):
    """Coefficient of t^{-m/2-1} in str[phi^S I_Q(0,t)] for Q = P (H+d_t)^{-1}.

    m is the Getzler order of Q (order of P minus 2).  For odd m the slot is
    a half-integer power; the value returned is what sits there.
    """
    P = model_op
    if isinstance(P, GetzlerOperator):
        order, P = getzler_order_and_model(P)
        if order == float("-inf"):
            return S.public(S.zero()), None
    else:
        degs = P.degrees()
        if len(degs) != 1:
            raise MehlerError("form model must be homogeneous")
        order = degs[0]
    m = order - 2
    n, a = mc.n, mc.a
    terms = model_fiber_terms(P, mc)
    target = Fraction(-m, 2) - 1
    # total power = p - a/2
    c = terms.get(target + Fraction(a, 2), ExteriorElement.zero(n))
    const = S.power(S.mul(S.rational(4), S.pi()), Fraction(-a, 2))
    dens = wedge(c.scale(const), _twist_factor(mc, twist, n))
    val = berezin_horizontal(dens, a)
    return S.public(S.mul(_gamma_prefactor(n, a, mc.normal), S.coerce(val))), m
