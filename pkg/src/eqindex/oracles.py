"""Independent reference computations used by tests and the acceptance suite.

Nothing here calls the graded-algebra series machinery: forms are plain dicts
keyed by sorted index tuples, determinants are Leibniz sums, and kernels come
from eigenfunction expansions or quadrature.
"""
import itertools
import math
from fractions import Fraction

import numpy as np
import sympy


# ------------------------------------------------------- oscillator kernels

def hermite_functions(x, omega, modes):
    """Normalized eigenfunctions of -d^2/dx^2 + omega^2 x^2 at x, shape (modes,)."""
    out = np.zeros(modes)
    s = math.sqrt(omega) * x
    out[0] = (omega / math.pi) ** 0.25 * math.exp(-s * s / 2)
    if modes > 1:
        out[1] = math.sqrt(2) * s * out[0]
    for k in range(1, modes - 1):
        out[k + 1] = math.sqrt(2 / (k + 1)) * s * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hermite_kernel(b, x, y, t, modes=None):
    """Heat kernel of -d^2/dx^2 + (b/4) x^2 by eigenfunction expansion.

    Without ``modes`` the expansion runs until e^{-2 omega t k} drops below 1e-20.
    """
    omega = math.sqrt(b) / 2
    if modes is None:
        modes = max(60, int(46.0 / (2 * omega * t)) + 10)
    ev = omega * (2 * np.arange(modes) + 1)
    return float(np.sum(np.exp(-t * ev) * hermite_functions(x, omega, modes) * hermite_functions(y, omega, modes)))


def semigroup_defect(kernel, x, y, t, s, L=12.0, npts=4001):
    """|int K(x, z, t) K(z, y, s) dz - K(x, y, t + s)| by the trapezoid rule on [-L, L]."""
    zs = np.linspace(-L, L, npts)
    vals = np.array([kernel(x, z, t) * kernel(z, y, s) for z in zs])
    integral = np.trapezoid(vals, zs) if hasattr(np, "trapezoid") else np.trapz(vals, zs)
    return abs(integral - kernel(x, y, t + s))


# ------------------------------------------------ naive even-form algebra

def _sort_sign(idx):
    idx = list(idx)
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


def nf_mul(a, b):
    out = {}
    for I, x in a.items():
        for J, y in b.items():
            if set(I) & set(J):
                continue
            sgn, K = _sort_sign(I + J)
            out[K] = out.get(K, 0) + sgn * x * y
    return {k: v for k, v in out.items() if v != 0}


def nf_add(a, b, scale=1):
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + scale * v
    return {k: v for k, v in out.items() if v != 0}


def nf_scalar(c):
    return {(): c} if c != 0 else {}


def nf_from_element(e):
    """Convert an ExteriorElement into the naive dict form (sympy coefficients)."""
    return {tuple(k): sympy.nsimplify(v) if isinstance(v, float) else sympy.sympify(v)
            for k, v in e.terms().items()}


def nf_series(u, coeffs):
    """sum_k coeffs[k] u^k for a nilpotent naive form u (no scalar part)."""
    out = nf_scalar(coeffs[0])
    p = nf_scalar(1)
    for k in range(1, len(coeffs)):
        p = nf_mul(p, u)
        if not p:
            break
        out = nf_add(out, p, coeffs[k])
    return out


def nf_matmul(A, B):
    n = len(A)
    return [[_sum_forms(nf_mul(A[i][k], B[k][j]) for k in range(n)) for j in range(n)] for i in range(n)]


def _sum_forms(it):
    out = {}
    for f in it:
        out = nf_add(out, f)
    return out


def nf_det(M):
    """Leibniz determinant of a matrix of even forms."""
    n = len(M)
    total = {}
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        prod = nf_scalar(1)
        for i in range(n):
            prod = nf_mul(prod, M[i][perm[i]])
            if not prod:
                break
        total = nf_add(total, prod, -1 if inv % 2 else 1)
    return total


def _series_coeffs(expr, var, order):
    ser = sympy.series(expr, var, 0, order + 1).removeO()
    return [sympy.nsimplify(ser.coeff(var, k)) for k in range(order + 1)]


def _matrix_function(R, coeffs):
    n = len(R)
    ident = [[nf_scalar(1) if i == j else {} for j in range(n)] for i in range(n)]
    out = [[nf_scalar(coeffs[0]) if i == j else {} for j in range(n)] for i in range(n)]
    P = ident
    for k in range(1, len(coeffs)):
        P = nf_matmul(P, R)
        if all(not e for row in P for e in row):
            break
        out = [[nf_add(out[i][j], P[i][j], coeffs[k]) for j in range(n)] for i in range(n)]
    return out


def _sqrt_series(d, power, order):
    """d^power for d = c0 + nilpotent, positive branch on c0."""
    c0 = d.get((), 0)
    u = {k: v / c0 for k, v in d.items() if k != ()}
    coeffs = [sympy.binomial(sympy.Rational(power), k) for k in range(order + 1)]
    return {k: sympy.nsimplify(v * c0 ** sympy.Rational(power)) for k, v in nf_series(u, coeffs).items()}


def a_hat_oracle(R_naive, n):
    """det^{1/2}((R/2)/sinh(R/2)) via a Leibniz determinant and binomial square root."""
    z = sympy.Symbol("z")
    order = n + 2
    coeffs = _series_coeffs((z / 2) / sympy.sinh(z / 2), z, order)
    F = _matrix_function(R_naive, coeffs)
    return _sqrt_series(nf_det(F), Fraction(1, 2), order)


def nu_phi_oracle(Rpp_naive, phi, n):
    """det^{-1/2}(1 - phi e^{-R''}) with the positive branch."""
    z = sympy.Symbol("z")
    order = n + 2
    E = _matrix_function([[{k: -v for k, v in e.items()} for e in row] for row in Rpp_naive],
                         _series_coeffs(sympy.exp(z), z, order))
    size = len(phi)
    P = [[nf_scalar(sympy.nsimplify(phi[i][j])) for j in range(size)] for i in range(size)]
    PE = nf_matmul(P, E)
    M = [[nf_add(nf_scalar(1) if i == j else {}, PE[i][j], -1) for j in range(size)] for i in range(size)]
    d = nf_det(M)
    d = {k: sympy.nsimplify(sympy.simplify(v)) for k, v in d.items()}
    return _sqrt_series(d, Fraction(-1, 2), order)


def naive_to_element(nf, n):
    from .graded_algebra import ExteriorElement
    return ExteriorElement(n, {k: v for k, v in nf.items()})


def element_to_naive_matrix(R):
    return [[nf_from_element(R[i, j]) for j in range(R.size)] for i in range(R.size)]


# ------------------------------------------------------- torus quadrature

def torus_cm_quadrature(f0, f1, f2, npts=64):
    """(2 i pi)^{-1}/2! int_{T^2} f0 df1 ^ df2 with df given by gradient callables.

    f0 is a value callable; f1, f2 are gradient callables (d1 f, d2 f).
    Periodic trapezoid rule on [0,1)^2.
    """
    xs = (np.arange(npts) + 0.5) / npts
    total = 0j
    for x in xs:
        for y in xs:
            a1, a2 = f1(x, y)
            b1, b2 = f2(x, y)
            total += f0(x, y) * (a1 * b2 - a2 * b1)
    total /= npts * npts
    return total / (2j * math.pi) / 2


# ---------------------------------------------------------- heat parametrix

def schrodinger_heat_coefficients(V, jmax):
    """Coefficients of (4 pi t)^{-1} e^{-tV} on R^2 in t^{j-1}: (4 pi)^{-1} (-V)^j / j!."""
    return [sympy.Rational(1, 1) / (4 * sympy.pi) * sympy.Rational(-V) ** j / sympy.factorial(j)
            for j in range(jmax + 1)]
