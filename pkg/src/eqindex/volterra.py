"""Volterra symbol calculus with polynomial coefficients.

Symbols are finite sums  c * x^alpha xi^beta rho^{-k}  with rho = |xi|^2 + i tau
and coefficients in Lambda(N).  ``k`` may be negative, so rho itself is the
term with k = -1.  The family is closed under d/dxi, d/dx, products and the
inverse Fourier transform, which keeps every operation exact.

Fourier convention: Op(q)u(x,s) = (2pi)^{-n-1} int e^{i(x.xi + s tau)} q u^ ,
so  d/dx_j <-> i xi_j,  d/dt <-> i tau.

Kernels are written in the variables (x, z = x - y, t).
"""
import itertools
import math
from fractions import Fraction
from functools import lru_cache

from . import scalars as S
from .graded_algebra import (
    ExteriorElement,
    clifford_action,
    popcount,
    wedge,
    wedge_sign,
    _cliff_eps,
)
from .char_forms import NormalAction


class VolterraError(ValueError):
    pass


class InsufficientLayersError(VolterraError):
    pass


# ------------------------------------------------------------ multi-indices

def zeros(n):
    return (0,) * n


def unit(n, j):
    return tuple(1 if i == j else 0 for i in range(n))


def madd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def msub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def mle(a, b):
    return all(x <= y for x, y in zip(a, b))


def below(a):
    """All multi-indices gamma <= a."""
    return itertools.product(*(range(x + 1) for x in a))


@lru_cache(maxsize=None)
def _fact(k):
    return math.factorial(k)


def mfact(a):
    out = 1
    for x in a:
        out *= _fact(x)
    return out


def mbinom(a, g):
    out = 1
    for x, y in zip(a, g):
        out *= math.comb(x, y)
    return out


def _dfact_odd(k):
    """(k-1)!! for even k >= 0 (Gaussian moment factor)."""
    out = 1
    for i in range(k - 1, 0, -2):
        out *= i
    return out


def _I_pow(k):
    """i^k as an internal scalar."""
    return S.coerce((1, 1j, -1, -1j)[k % 4])


# ------------------------------------------------------------ VolterraSymbol

class VolterraSymbol:
    """Finite sum of coeff * x^alpha xi^beta rho^{-k}.

    ``truncation`` (optional) is the lowest parabolic degree the symbol is
    known to be complete down to; parametrices set it.
    """

    __slots__ = ("n", "form_dim", "_t", "truncation")

    def __init__(self, n, terms=None, form_dim=0, truncation=None):
        self.n = int(n)
        self.form_dim = int(form_dim)
        self.truncation = truncation
        self._t = {}
        if terms:
            for (al, be, k), c in terms.items():
                al, be = tuple(al), tuple(be)
                if len(al) != self.n or len(be) != self.n:
                    raise VolterraError("multi-index length must equal n")
                if min(al + be, default=0) < 0:
                    raise VolterraError("negative exponent in multi-index")
                self._acc((al, be, int(k)), self._coeff(c))

    def _coeff(self, c):
        if isinstance(c, ExteriorElement):
            if c.n != self.form_dim:
                raise VolterraError(f"coefficient lives in Lambda({c.n}), expected Lambda({self.form_dim})")
            return c
        return ExteriorElement.scalar(self.form_dim, c)

    @classmethod
    def _raw(cls, n, form_dim, t, truncation=None):
        obj = cls.__new__(cls)
        obj.n, obj.form_dim, obj._t, obj.truncation = n, form_dim, t, truncation
        return obj

    def _acc(self, key, c):
        if key in self._t:
            c = self._t[key] + c
        if c.is_zero():
            self._t.pop(key, None)
        else:
            self._t[key] = c

    # constructors
    @classmethod
    def constant(cls, n, c=1, form_dim=0):
        return cls(n, {(zeros(n), zeros(n), 0): c}, form_dim)

    @classmethod
    def monomial(cls, n, alpha=None, beta=None, k=0, coeff=1, form_dim=0):
        return cls(n, {(alpha or zeros(n), beta or zeros(n), k): coeff}, form_dim)

    @classmethod
    def rho_power(cls, n, power, form_dim=0):
        """rho^power (power may be any integer)."""
        return cls(n, {(zeros(n), zeros(n), -power): 1}, form_dim)

    # inspection
    def items(self):
        return sorted(self._t.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0]))

    def terms(self):
        return dict(self._t)

    @staticmethod
    def key_degree(key):
        return sum(key[1]) - 2 * key[2]

    def degrees(self):
        return sorted({self.key_degree(k) for k in self._t}, reverse=True)

    def max_degree(self):
        if not self._t:
            return None
        return max(self.key_degree(k) for k in self._t)

    def homogeneous_part(self, d):
        return VolterraSymbol._raw(self.n, self.form_dim, {k: c for k, c in self._t.items() if self.key_degree(k) == d})

    def truncate_below(self, dmin):
        """Keep terms of parabolic degree >= dmin."""
        t = {k: c for k, c in self._t.items() if self.key_degree(k) >= dmin}
        return VolterraSymbol._raw(self.n, self.form_dim, t, dmin)

    def is_homogeneous(self, m):
        return all(self.key_degree(k) == m and not any(k[0]) for k in self._t)

    def is_zero(self):
        return not self._t

    def is_x_independent(self):
        return all(not any(k[0]) for k in self._t)

    # arithmetic
    def _check(self, other):
        if not isinstance(other, VolterraSymbol):
            raise TypeError("expected VolterraSymbol")
        if self.n != other.n or self.form_dim != other.form_dim:
            raise VolterraError("dimension mismatch between symbols")

    def __add__(self, other):
        if not isinstance(other, VolterraSymbol):
            other = VolterraSymbol.constant(self.n, other, self.form_dim)
        self._check(other)
        out = VolterraSymbol._raw(self.n, self.form_dim, dict(self._t))
        for k, c in other._t.items():
            out._acc(k, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return VolterraSymbol._raw(self.n, self.form_dim, {k: -c for k, c in self._t.items()})

    def __sub__(self, other):
        if not isinstance(other, VolterraSymbol):
            other = VolterraSymbol.constant(self.n, other, self.form_dim)
        return self + (-other)

    def scale(self, c):
        out = VolterraSymbol._raw(self.n, self.form_dim, {})
        for k, v in self._t.items():
            out._acc(k, v * c)
        return out

    def pointwise(self, other):
        """Pointwise product of symbols (coefficients wedged left to right)."""
        self._check(other)
        out = VolterraSymbol._raw(self.n, self.form_dim, {})
        for (a1, b1, k1), c1 in self._t.items():
            for (a2, b2, k2), c2 in other._t.items():
                out._acc((madd(a1, a2), madd(b1, b2), k1 + k2), wedge(c1, c2))
        return out

    def __eq__(self, other):
        if not isinstance(other, VolterraSymbol):
            return NotImplemented
        if self.n != other.n or self.form_dim != other.form_dim:
            return False
        return (self - other).is_zero()

    __hash__ = None

    def d_xi(self, j):
        out = VolterraSymbol._raw(self.n, self.form_dim, {})
        for (a, b, k), c in self._t.items():
            if b[j]:
                out._acc((a, msub(b, unit(self.n, j)), k), c * b[j])
            if k:
                out._acc((a, madd(b, unit(self.n, j)), k + 1), c * (-2 * k))
        return out

    def d_x(self, j):
        out = VolterraSymbol._raw(self.n, self.form_dim, {})
        for (a, b, k), c in self._t.items():
            if a[j]:
                out._acc((msub(a, unit(self.n, j)), b, k), c * a[j])
        return out

    def d_xi_multi(self, gamma):
        out = self
        for j, g in enumerate(gamma):
            for _ in range(g):
                out = out.d_xi(j)
        return out

    def to_f64(self):
        return VolterraSymbol._raw(self.n, self.form_dim, {k: c.to_f64() for k, c in self._t.items()}, self.truncation)

    def __repr__(self):
        parts = []
        for (a, b, k), c in self.items():
            parts.append(f"[{c}] x^{a} xi^{b} rho^{-k}")
        return " + ".join(parts) if parts else "0"


def symbol_compose(q1, q2):
    """q1 # q2 = sum_gamma (1/gamma!) d_xi^gamma q1 * D_x^gamma q2, D_x = -i d_x.

    Exact because q2 is polynomial in x.
    """
    q1._check(q2)
    n = q1.n
    out = VolterraSymbol._raw(n, q1.form_dim, {})
    cache = {}
    for (a2, b2, k2), c2 in q2._t.items():
        for g in below(a2):
            if g not in cache:
                cache[g] = q1.d_xi_multi(g)
            dq1 = cache[g]
            if dq1.is_zero():
                continue
            # (1/g!) D_x^g x^a2 = (-i)^{|g|} C(a2, g) x^{a2-g}
            f = (-1) ** sum(g) * mbinom(a2, g)
            coef = c2 * S.mul(_I_pow(sum(g)), S.rational(f))
            a2g = msub(a2, g)
            for (a1, b1, k1), c1 in dq1._t.items():
                out._acc((madd(a1, a2g), madd(b1, b2), k1 + k2), wedge(c1, coef))
    lows = [t for t in (q1.truncation, q2.truncation) if t is not None]
    if lows:
        # degree is bounded by the other symbol's top degree plus the truncation
        m1, m2 = q1.max_degree() or 0, q2.max_degree() or 0
        cand = []
        if q1.truncation is not None:
            cand.append(q1.truncation + m2)
        if q2.truncation is not None:
            cand.append(q2.truncation + m1)
        out.truncation = min(cand)
    return out


# ------------------------------------------------------------ GetzlerOperator

class GetzlerOperator:
    """Polynomial-coefficient operator on R^n with Clifford, form and twist parts.

    A term with key (alpha, beta, dt, cliff, form, r, s) and scalar c stands for
        c * x^alpha * (form ^) * c(e_cliff) * d^beta * d_t^dt (x) E_rs
    where ``cliff`` and ``form`` are bitmasks over {1..n}.  Forms and Clifford
    generators super-commute; E_rs are matrix units on C^rank.
    """

    __slots__ = ("n", "rank", "_t")

    def __init__(self, n, terms=None, rank=1):
        self.n = int(n)
        self.rank = int(rank)
        self._t = {}
        if terms:
            for key, c in terms.items():
                al, be, dt, cl, fm, r, s = key
                key = (tuple(al), tuple(be), int(dt), int(cl), int(fm), int(r), int(s))
                self._acc(key, S.coerce(c))

    @classmethod
    def _raw(cls, n, rank, t):
        obj = cls.__new__(cls)
        obj.n, obj.rank, obj._t = n, rank, t
        return obj

    def _acc(self, key, c):
        if key in self._t:
            c = S.add(self._t[key], c)
        if S.is_zero(c):
            self._t.pop(key, None)
        else:
            self._t[key] = c

    def _key(self, alpha=None, beta=None, dt=0, cliff=0, form=0, r=0, s=0):
        n = self.n
        return (tuple(alpha) if alpha else zeros(n), tuple(beta) if beta else zeros(n), dt, cliff, form, r, s)

    # basic operators
    @classmethod
    def scalar(cls, n, c=1, rank=1):
        op = cls(n, rank=rank)
        for r in range(rank):
            op._acc(op._key(r=r, s=r), S.coerce(c))
        return op

    @classmethod
    def identity(cls, n, rank=1):
        return cls.scalar(n, 1, rank)

    @classmethod
    def x(cls, n, i, rank=1):
        """Multiplication by x^i (1-based)."""
        op = cls(n, rank=rank)
        for r in range(rank):
            op._acc(op._key(alpha=unit(n, i - 1), r=r, s=r), S.one())
        return op

    @classmethod
    def d(cls, n, i, rank=1):
        """d/dx^i (1-based)."""
        op = cls(n, rank=rank)
        for r in range(rank):
            op._acc(op._key(beta=unit(n, i - 1), r=r, s=r), S.one())
        return op

    @classmethod
    def dt(cls, n, rank=1):
        op = cls(n, rank=rank)
        for r in range(rank):
            op._acc(op._key(dt=1, r=r, s=r), S.one())
        return op

    @classmethod
    def clifford(cls, n, *indices, rank=1):
        """c(dx^{i1}) ... c(dx^{ik})."""
        op = cls.identity(n, rank)
        for i in indices:
            g = cls(n, rank=rank)
            for r in range(rank):
                g._acc(g._key(cliff=1 << (i - 1), r=r, s=r), S.one())
            op = op @ g
        return op

    @classmethod
    def form(cls, omega, rank=1):
        """Exterior multiplication by the form omega."""
        n = omega.n
        op = cls(n, rank=rank)
        for m, c in omega.raw_terms().items():
            for r in range(rank):
                op._acc(op._key(form=m, r=r, s=r), c)
        return op

    @classmethod
    def matrix_unit(cls, n, r, s, rank):
        op = cls(n, rank=rank)
        op._acc(op._key(r=r, s=s), S.one())
        return op

    # inspection
    def items(self):
        return sorted(self._t.items(), key=lambda kv: kv[0])

    def is_zero(self):
        return not self._t

    def has_clifford(self):
        return any(k[3] for k in self._t)

    def has_forms(self):
        return any(k[4] for k in self._t)

    @staticmethod
    def key_order(key):
        al, be, dt, cl, fm, _, _ = key
        return sum(be) + 2 * dt + popcount(cl) + popcount(fm) - sum(al)

    def differential_order(self):
        return max((sum(k[1]) + 2 * k[2] for k in self._t), default=float("-inf"))

    # arithmetic
    def _check(self, other):
        if not isinstance(other, GetzlerOperator):
            raise TypeError("expected GetzlerOperator")
        if self.n != other.n or self.rank != other.rank:
            raise VolterraError("operator dimension/rank mismatch")

    def _promote(self, other):
        if isinstance(other, GetzlerOperator):
            self._check(other)
            return other
        return GetzlerOperator.scalar(self.n, other, self.rank)

    def __add__(self, other):
        other = self._promote(other)
        out = GetzlerOperator._raw(self.n, self.rank, dict(self._t))
        for k, c in other._t.items():
            out._acc(k, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return GetzlerOperator._raw(self.n, self.rank, {k: S.neg(c) for k, c in self._t.items()})

    def __sub__(self, other):
        return self + (-self._promote(other))

    def __rsub__(self, other):
        return self._promote(other) - self

    def scale(self, c):
        c = S.coerce(c)
        out = GetzlerOperator._raw(self.n, self.rank, {})
        for k, v in self._t.items():
            out._acc(k, S.mul(c, v))
        return out

    def __mul__(self, other):
        if isinstance(other, GetzlerOperator):
            return self @ other
        return self.scale(other)

    def __rmul__(self, c):
        return self.scale(c)

    def __matmul__(self, other):
        self._check(other)
        eps = _cliff_eps.get()
        out = GetzlerOperator._raw(self.n, self.rank, {})
        for (a1, b1, d1, C1, F1, r1, s1), c1 in self._t.items():
            for (a2, b2, d2, C2, F2, r2, s2), c2 in other._t.items():
                if s1 != r2 or (F1 & F2):
                    continue
                sg = wedge_sign(F1, F2)
                if popcount(C1) & 1 and popcount(F2) & 1:
                    sg = -sg
                cs, Cm = clifford_action(C1, C2, eps)
                sg *= cs
                base = S.mul(c1, c2)
                if sg < 0:
                    base = S.neg(base)
                F = F1 | F2
                for g in below(tuple(min(x, y) for x, y in zip(b1, a2))):
                    f = mbinom(b1, g) * mfact(a2) // mfact(msub(a2, g))
                    key = (madd(a1, msub(a2, g)), madd(msub(b1, g), b2), d1 + d2, Cm, F, r1, s2)
                    out._acc(key, S.mul(base, S.rational(f)))
        return out

    def __pow__(self, k):
        out = GetzlerOperator.identity(self.n, self.rank)
        for _ in range(k):
            out = out @ self
        return out

    def __eq__(self, other):
        if not isinstance(other, GetzlerOperator):
            return NotImplemented
        if self.n != other.n or self.rank != other.rank:
            return False
        return (self - other).is_zero()

    __hash__ = None

    def folded(self):
        """Replace every Clifford factor c(dx^i) by dx^i ^ (placed after the form part)."""
        out = GetzlerOperator._raw(self.n, self.rank, {})
        for (a, b, d, C, F, r, s), c in self._t.items():
            if C & F:
                continue
            sg = wedge_sign(F, C)
            out._acc((a, b, d, 0, F | C, r, s), c if sg > 0 else S.neg(c))
        return out

    def order_part(self, mu):
        return GetzlerOperator._raw(self.n, self.rank, {k: c for k, c in self._t.items() if self.key_order(k) == mu})

    def __repr__(self):
        if not self._t:
            return "0"
        parts = []
        for (a, b, d, C, F, r, s), c in self.items():
            bits = [f"({S.public(c)})"]
            if any(a):
                bits.append(f"x^{a}")
            if F:
                bits.append("dx" + "".join(map(str, _idx(F))))
            if C:
                bits.append("c" + "".join(map(str, _idx(C))))
            if any(b):
                bits.append(f"d^{b}")
            if d:
                bits.append(f"dt^{d}")
            if self.rank > 1:
                bits.append(f"E{r}{s}")
            parts.append("*".join(bits))
        return " + ".join(parts)


def _idx(m):
    out, i = [], 1
    while m:
        if m & 1:
            out.append(i)
        m >>= 1
        i += 1
    return out


def getzler_order_and_model(P):
    """(Getzler order, model operator with Clifford factors turned into forms).

    The order is the largest degree whose folded part is nonzero; an empty
    operator gives (-inf, 0).
    """
    orders = sorted({P.key_order(k) for k in P._t}, reverse=True)
    for mu in orders:
        M = P.order_part(mu).folded()
        if not M.is_zero():
            return mu, M
    return float("-inf"), GetzlerOperator(P.n, rank=P.rank)


def model_product_check(P1, P2):
    """Leading Getzler symbol of P1 P2 equals the product of the models."""
    o1, M1 = getzler_order_and_model(P1)
    o2, M2 = getzler_order_and_model(P2)
    prod = P1 @ P2
    if o1 == float("-inf") or o2 == float("-inf"):
        return prod.is_zero() or getzler_order_and_model(prod)[0] == float("-inf")
    top = prod.order_part(o1 + o2).folded()
    if not (top == (M1 @ M2)):
        return False
    o, _ = getzler_order_and_model(prod)
    return o <= o1 + o2


# ------------------------------------------------------- operator -> symbol

def operator_symbol(L):
    """Full symbol of a Clifford-free, time-independent operator (scalar twist)."""
    if L.has_clifford():
        raise VolterraError("operator has Clifford factors; fold or remove them first")
    if L.rank != 1:
        raise VolterraError("matrix-valued symbols are not supported")
    out = VolterraSymbol._raw(L.n, L.n, {})
    for (a, b, d, C, F, r, s), c in L._t.items():
        if d:
            raise VolterraError("time derivatives are not allowed in L")
        coef = ExteriorElement._raw(L.n, {F: S.mul(c, _I_pow(sum(b)))})
        out._acc((a, b, 0), coef)
    return out


def heat_parametrix(L, J):
    """Sum of the layers q_{-2-j}, j <= J, of a parametrix of L + d_t.

    L must be -Laplacian plus lower-order terms with polynomial coefficients.
    """
    if J < 0:
        raise VolterraError("J must be >= 0")
    n = L.n
    p_full = operator_symbol(L)
    second = {k: c for k, c in p_full._t.items() if sum(k[1]) == 2}
    if any(sum(k[1]) > 2 for k in p_full._t):
        raise VolterraError("operator has order > 2")
    lap = {(zeros(n), tuple(2 * u for u in unit(n, j)), 0): ExteriorElement.one(n) for j in range(n)}
    if set(second) != set(lap) or any(not (second[k] == lap[k]) for k in lap):
        raise VolterraError("leading part must be exactly the flat Laplacian")
    rest = VolterraSymbol._raw(n, n, {k: c for k, c in p_full._t.items() if sum(k[1]) < 2})
    p = VolterraSymbol.rho_power(n, 1, n) + rest
    rho_inv = VolterraSymbol.rho_power(n, -1, n)
    layers = [rho_inv]
    total = rho_inv
    for j in range(1, J + 1):
        defect = symbol_compose(p, total).homogeneous_part(-j)
        qj = -rho_inv.pointwise(defect)
        layers.append(qj)
        total = total + qj
    total.truncation = -2 - J
    return total


# ------------------------------------------------------------ GaussianKernel

def _poly_mul(P, Q):
    out = {}
    for (a1, g1, p1), c1 in P.items():
        for (a2, g2, p2), c2 in Q.items():
            k = (madd(a1, a2), madd(g1, g2), p1 + p2)
            v = wedge(c1, c2)
            if k in out:
                v = out[k] + v
            if v.is_zero():
                out.pop(k, None)
            else:
                out[k] = v
    return out


def _poly_add_into(out, k, v):
    if k in out:
        v = out[k] + v
    if v.is_zero():
        out.pop(k, None)
    else:
        out[k] = v


class GaussianKernel:
    """sum c * x^alpha z^gamma t^p * exp(E) * G_t(z),  G_t(z) = (4 pi t)^{-n/2} e^{-|z|^2/4t}.

    ``exponent`` E is an optional nilpotent polynomial with the same key
    layout (alpha, gamma, p).  The kernel vanishes for t <= 0.
    """

    __slots__ = ("n", "form_dim", "terms", "exponent")

    def __init__(self, n, terms, form_dim=0, exponent=None):
        self.n = n
        self.form_dim = form_dim
        self.terms = {}
        for (a, g, p), c in terms.items():
            if not isinstance(c, ExteriorElement):
                c = ExteriorElement.scalar(form_dim, c)
            _poly_add_into(self.terms, (tuple(a), tuple(g), Fraction(p)), c)
        self.exponent = None
        if exponent:
            E = {}
            for (a, g, p), c in exponent.items():
                if not isinstance(c, ExteriorElement):
                    c = ExteriorElement.scalar(form_dim, c)
                _poly_add_into(E, (tuple(a), tuple(g), Fraction(p)), c)
            for c in E.values():
                if not S.is_zero(c.scalar_raw()):
                    raise VolterraError("kernel exponent must be nilpotent")
            self.exponent = E or None

    def copy_with(self, terms, exponent="same"):
        return GaussianKernel(self.n, terms, self.form_dim, self.exponent if exponent == "same" else exponent)

    def expanded(self):
        """Same kernel with exp(E) multiplied out."""
        if not self.exponent:
            return self
        out = dict(self.terms)
        power = dict(self.terms)
        k = 0
        while True:
            k += 1
            power = _poly_mul(power, self.exponent)
            if not power:
                break
            inv = S.rational(1, k)
            power = {key: c.scale(inv) for key, c in power.items()}
            for key, c in power.items():
                _poly_add_into(out, key, c)
        return GaussianKernel(self.n, out, self.form_dim)

    def __add__(self, other):
        if self.exponent != other.exponent:
            a, b = self.expanded(), other.expanded()
        else:
            a, b = self, other
        out = dict(a.terms)
        for k, c in b.terms.items():
            _poly_add_into(out, k, c)
        return GaussianKernel(self.n, out, self.form_dim, a.exponent)

    def scale_t(self, p):
        """Multiply by t^p."""
        p = Fraction(p)
        return self.copy_with({(a, g, q + p): c for (a, g, q), c in self.terms.items()})

    def wedge_left(self, omega):
        return self.copy_with({k: wedge(omega, c) for k, c in self.terms.items()})

    # --- derivatives (acting on the x variable with y fixed, or on t)
    def _d_poly(self, P, which, j):
        """Derivative of the polynomial P in x_j ('x'), z_j ('z') or t ('t')."""
        out = {}
        for (a, g, p), c in P.items():
            if which == "x" and a[j]:
                _poly_add_into(out, (msub(a, unit(self.n, j)), g, p), c * a[j])
            elif which == "z" and g[j]:
                _poly_add_into(out, (a, msub(g, unit(self.n, j)), p), c * g[j])
            elif which == "t" and p:
                _poly_add_into(out, (a, g, p - 1), c.scale(S.rational(p.numerator, p.denominator)))
        return out

    def _d(self, which, j=None):
        """d/dx_j at fixed y (= d_x + d_z), or d/dt, applied to the whole kernel."""
        P = self.terms
        E = self.exponent or {}
        n = self.n
        out = {}
        parts = ["x", "z"] if which == "x" else ["t"]
        for w in parts:
            for k, c in self._d_poly(P, w, j).items():
                _poly_add_into(out, k, c)
            dE = self._d_poly(E, w, j)
            if dE:
                for k, c in _poly_mul(P, dE).items():
                    _poly_add_into(out, k, c)
        # derivative of G_t(z)
        if which == "x":
            g = {(zeros(n), unit(n, j), Fraction(-1)): ExteriorElement.scalar(self.form_dim, S.rational(-1, 2))}
        else:
            g = {(zeros(n), zeros(n), Fraction(-1)): ExteriorElement.scalar(self.form_dim, S.rational(-n, 2))}
            for i in range(n):
                g[(zeros(n), tuple(2 * u for u in unit(n, i)), Fraction(-2))] = ExteriorElement.scalar(
                    self.form_dim, S.rational(1, 4))
        for k, c in _poly_mul(P, g).items():
            _poly_add_into(out, k, c)
        return self.copy_with(out)

    def d_x(self, j):
        return self._d("x", j)

    def d_t(self):
        return self._d("t")

    def d_z_only(self, j):
        """d/dz_j at fixed x (used for xi-monomials of x-independent symbols)."""
        P = self.terms
        E = self.exponent or {}
        n = self.n
        out = dict(self._d_poly(P, "z", j))
        dE = self._d_poly(E, "z", j)
        if dE:
            for k, c in _poly_mul(P, dE).items():
                _poly_add_into(out, k, c)
        g = {(zeros(n), unit(n, j), Fraction(-1)): ExteriorElement.scalar(self.form_dim, S.rational(-1, 2))}
        for k, c in _poly_mul(P, g).items():
            _poly_add_into(out, k, c)
        return self.copy_with(out)

    def times_x(self, j):
        return self.copy_with({(madd(a, unit(self.n, j)), g, p): c for (a, g, p), c in self.terms.items()})

    def apply_operator(self, P):
        """Kernel of P o K, with P a Clifford-free GetzlerOperator acting in x."""
        if P.has_clifford():
            raise VolterraError("fold Clifford factors before applying an operator to a kernel")
        if P.rank != 1:
            raise VolterraError("matrix-valued operators are not supported on kernels")
        if P.n != self.n or P.n != self.form_dim:
            raise VolterraError("operator and kernel dimensions differ")
        total = None
        cache = {}
        for (a, b, d, C, F, r, s), c in P._t.items():
            key = (b, d)
            if key not in cache:
                K = self
                for j, bj in enumerate(b):
                    for _ in range(bj):
                        K = K.d_x(j)
                for _ in range(d):
                    K = K.d_t()
                cache[key] = K
            K = cache[key]
            for j, aj in enumerate(a):
                for _ in range(aj):
                    K = K.times_x(j)
            K = K.wedge_left(ExteriorElement._raw(self.form_dim, {F: c}))
            total = K if total is None else total + K
        if total is None:
            return GaussianKernel(self.n, {}, self.form_dim)
        return total

    # --- evaluation
    def evaluate(self, x, y, t):
        """Numeric value at (x, y, t) as an ExteriorElement with complex coefficients."""
        x = [float(v) for v in x]
        y = [float(v) for v in y]
        t = float(t)
        with S.precision(S.F64):
            if t <= 0:
                return ExteriorElement.zero(self.form_dim)
            z = [a - b for a, b in zip(x, y)]

            def poly_value(P):
                acc = ExteriorElement.zero(self.form_dim)
                for (a, g, p), c in P.items():
                    v = t ** float(p)
                    for xi, ai in zip(x, a):
                        v *= xi ** ai
                    for zi, gi in zip(z, g):
                        v *= zi ** gi
                    acc = acc + c.to_f64().scale(complex(v))
                return acc

            val = poly_value(self.terms)
            if self.exponent:
                from .graded_algebra import analytic_series
                val = val * analytic_series("exp", poly_value(self.exponent))
            g = (4 * math.pi * t) ** (-self.n / 2) * math.exp(-sum(v * v for v in z) / (4 * t))
            return val.scale(complex(g))

    def evaluate_z(self, z, t, x=None):
        x = list(x) if x is not None else [0.0] * self.n
        y = [a - b for a, b in zip(x, z)]
        return self.evaluate(x, y, t)

    def to_sympy(self, xs, ys, t, mask=0):
        """Sympy expression of the coefficient of the form with bitmask ``mask``."""
        import sympy
        K = self.expanded()
        z = [a - b for a, b in zip(xs, ys)]
        expr = 0
        for (a, g, p), c in K.terms.items():
            co = c.raw_terms().get(mask)
            if co is None:
                continue
            term = S.as_sympy(co) * t ** sympy.Rational(p.numerator, p.denominator)
            for xi, ai in zip(xs, a):
                term *= xi ** ai
            for zi, gi in zip(z, g):
                term *= zi ** gi
            expr += term
        gauss = (4 * sympy.pi * t) ** sympy.Rational(-self.n, 2) * sympy.exp(-sum(v ** 2 for v in z) / (4 * t))
        return expr * gauss


def symbol_to_kernel(q, distributional="error"):
    """Inverse Fourier transform of q in (xi, tau), written in (x, z, t).

    rho^{-k} -> t^{k-1}/(k-1)! G_t(z) and xi^beta -> (-i d_z)^beta.
    Terms with k <= 0 are differential operators (distributions supported at
    t = 0); they raise unless ``distributional='drop'``.
    """
    n = q.n
    out = None
    for (a, b, k), c in q.items():
        if k <= 0:
            if distributional == "drop":
                continue
            raise VolterraError(f"term with rho power {-k} >= 0 has no function kernel")
        base = GaussianKernel(n, {(zeros(n), zeros(n), Fraction(k - 1)): S.rational(1, _fact(k - 1))}, q.form_dim)
        K = base
        for j, bj in enumerate(b):
            for _ in range(bj):
                K = K.d_z_only(j)
        pref = S.mul(_I_pow(3 * sum(b)), S.one())  # (-i)^{|b|}
        terms = {}
        for (a0, g, p), v in K.terms.items():
            _poly_add_into(terms, (madd(a0, a), g, p), wedge(c, v.scale(pref)))
        K = GaussianKernel(n, terms, q.form_dim)
        out = K if out is None else out + K
    if out is None:
        return GaussianKernel(n, {}, q.form_dim)
    return out


# ------------------------------------------------------------ fiber integrals

def _normal_setup(phi_prime, a_dim, n):
    if phi_prime is None:
        phi_prime = NormalAction([])
    if not isinstance(phi_prime, NormalAction):
        raise TypeError("phi_prime must be a NormalAction (normal block of phi')")
    if a_dim + phi_prime.size != n:
        raise VolterraError(f"a_dim + normal size = {a_dim + phi_prime.size} != n = {n}")
    return phi_prime


def _linear_power_polys(Sinv, alpha2, b):
    """prod_i (sum_j Sinv[i][j] w_j)^{alpha2_i} as dict exponent -> scalar."""
    poly = {zeros(b): S.one()}
    for i, ai in enumerate(alpha2):
        for _ in range(ai):
            new = {}
            for mu, c in poly.items():
                for j in range(b):
                    s = Sinv[i][j]
                    if S.is_zero(s):
                        continue
                    key = madd(mu, unit(b, j))
                    v = S.mul(c, s)
                    new[key] = S.add(new[key], v) if key in new else v
            poly = {k: v for k, v in new.items() if not S.is_zero(v)}
    return poly


def fiber_terms(K, phi_prime, a_dim, x_prime=None):
    """I_Q(x', t) = (4 pi t)^{-a/2} * sum_p C_p t^p; returns {p: C_p}.

    Integrates K(x', x''; z = (0, (1 - phi^N) x''); t) over x'' in R^{n-a}
    after the substitution w = (1 - phi^N) x''.
    """
    n = K.n
    normal = _normal_setup(phi_prime, a_dim, n)
    b = normal.size
    Ke = K.expanded()
    Sinv = normal.inverse_one_minus() if b else []
    jac = S.div(S.one(), normal.det_one_minus()) if b else S.one()
    if x_prime is not None:
        xp = [S.coerce(v) for v in x_prime]
        if len(xp) != a_dim:
            raise VolterraError("x_prime must have length a_dim")
    out = {}
    cache = {}
    for (al, ga, p), c in Ke.terms.items():
        if any(ga[:a_dim]):
            continue
        a1, a2 = al[:a_dim], al[a_dim:]
        f = S.one()
        if any(a1):
            if x_prime is None:
                continue
            for v, e in zip(xp, a1):
                f = S.mul(f, S.power(v, e)) if e else f
            if S.is_zero(f):
                continue
        if a2 not in cache:
            cache[a2] = _linear_power_polys(Sinv, a2, b)
        g2 = ga[a_dim:]
        for mu0, s in cache[a2].items():
            mu = madd(mu0, g2)
            if any(m % 2 for m in mu):
                continue
            half = sum(mu) // 2
            mom = 2 ** half
            for m in mu:
                mom *= _dfact_odd(m)
            coef = S.mul(S.mul(f, s), S.mul(jac, S.rational(mom)))
            _poly_add_into(out, p + half, c.scale(coef))
    return out


def _t_factor(t, a_dim, p):
    """(4 pi t)^{-a/2} t^p as an internal scalar."""
    t = S.coerce(t)
    base = S.power(S.mul(S.mul(S.rational(4), S.pi()), t), Fraction(-a_dim, 2))
    return S.mul(base, S.power(t, p))


def fiber_integral_IQ(K, phi_prime, a_dim, t, x_prime=None):
    """Evaluate I_Q(x', t) exactly via Gaussian moments."""
    if S.to_complex(t).real <= 0:
        raise VolterraError("t must be > 0")
    terms = fiber_terms(K, phi_prime, a_dim, x_prime)
    out = ExteriorElement.zero(K.form_dim)
    for p, c in terms.items():
        out = out + c.scale(_t_factor(t, a_dim, p))
    return out


def asymptotic_expansion(q, phi_prime, a_dim):
    """All coefficients {power of t: I} of I_Q(0, t) for the kernel of q.

    Coefficients include the (4 pi)^{-a/2} factor; powers are exact Fractions.
    """
    K = symbol_to_kernel(q)
    terms = fiber_terms(K, phi_prime, a_dim)
    const = S.power(S.mul(S.rational(4), S.pi()), Fraction(-a_dim, 2))
    return {p - Fraction(a_dim, 2): c.scale(const) for p, c in terms.items()}


def leading_power(m, a_dim):
    return -(Fraction(a_dim, 2) + (m // 2) + 1)


def asymptotic_coefficients(q, phi_prime, a_dim, j_max):
    """[I^(0), ..., I^(j_max)] with I_Q(0,t) ~ sum_j t^{-(a/2 + [m/2] + 1) + j} I^(j)."""
    m = q.max_degree()
    if m is None:
        return [ExteriorElement.zero(q.form_dim) for _ in range(j_max + 1)]
    need = m - (m % 2) - 2 * j_max
    if q.truncation is not None and q.truncation > need:
        raise InsufficientLayersError(
            f"coefficients up to j={j_max} need layers down to degree {need}; symbol stops at {q.truncation}")
    exp = asymptotic_expansion(q.truncate_below(need), phi_prime, a_dim)
    p0 = leading_power(m, a_dim)
    return [exp.get(p0 + j, ExteriorElement.zero(q.form_dim)) for j in range(j_max + 1)]


def half_integer_slots(q, phi_prime, a_dim):
    """Coefficients sitting at non-integer offsets from the leading power (should vanish)."""
    m = q.max_degree()
    p0 = leading_power(m, a_dim)
    exp = asymptotic_expansion(q, phi_prime, a_dim)
    return {p: c for p, c in exp.items() if (p - p0).denominator != 1}


# ------------------------------------------------------------ builders

def laplacian(n, rank=1):
    """-sum_j d_j^2."""
    out = GetzlerOperator(n, rank=rank)
    for j in range(1, n + 1):
        out = out - GetzlerOperator.d(n, j, rank) @ GetzlerOperator.d(n, j, rank)
    return out


def schrodinger(n, potential):
    """-Laplacian + V with V a dict {alpha: coefficient} (polynomial potential)."""
    L = laplacian(n)
    for al, c in potential.items():
        L = L + GetzlerOperator(n, {(tuple(al), zeros(n), 0, 0, 0, 0, 0): c})
    return L


def curvature_forms(Rijkl, n):
    """R_ij = sum_{k<l} R_ijkl dx^k ^ dx^l (0-based i, j), nested list of 2-forms."""
    out = [[ExteriorElement.zero(n) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            terms = {}
            for k in range(n):
                for l in range(k + 1, n):
                    v = Rijkl[i][j][k][l]
                    if v:
                        terms[(k + 1, l + 1)] = v
            out[i][j] = ExteriorElement(n, terms)
    return out


def random_curvature_tensor(n, rng, terms=2, bound=3):
    """Algebraic curvature tensor sum_s c_s (h_ik h_jl - h_il h_jk) with rational entries."""
    R = [[[[Fraction(0)] * n for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for _ in range(terms):
        h = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                h[i][j] = h[j][i] = Fraction(rng.randint(-bound, bound), rng.randint(1, bound))
        c = Fraction(rng.randint(-bound, bound), rng.randint(1, bound))
        for i, j, k, l in itertools.product(range(n), repeat=4):
            R[i][j][k][l] += c * (h[i][k] * h[j][l] - h[i][l] * h[j][k])
    return R


def model_spin_connection(Rijkl, n, i):
    """d_i - 1/4 sum_j R_ij x^j with 2-form coefficients (1-based i)."""
    Rf = curvature_forms(Rijkl, n)
    op = GetzlerOperator.d(n, i)
    for j in range(n):
        w = Rf[i - 1][j]
        if not w.is_zero():
            op = op - GetzlerOperator.form(w.scale(S.rational(1, 4))) @ GetzlerOperator.x(n, j + 1)
    return op


def harmonic_oscillator_HR(Rijkl, n):
    """H_R = -sum_i (d_i - 1/4 sum_j R_ij x^j)^2."""
    out = GetzlerOperator(n)
    for i in range(1, n + 1):
        nab = model_spin_connection(Rijkl, n, i)
        out = out - nab @ nab
    return out


def twist_form(F, n):
    """F(0) = sum_{i<j} F_ij dx^i ^ dx^j for a scalar antisymmetric matrix F."""
    terms = {}
    for i in range(n):
        for j in range(i + 1, n):
            if F[i][j]:
                terms[(i + 1, j + 1)] = F[i][j]
    return ExteriorElement(n, terms)


def synthetic_lichnerowicz(Rijkl, F, kappa=None):
    """D^2 for constant curvature data in synchronous coordinates, to the Taylor
    order that affects the Getzler model.

    D^2 = -g^{ij}(nabla_i nabla_j - Gamma^k_ij nabla_k) + kappa/4 + 1/2 c^i c^j F_ij with
      g^{ij} = delta_ij + 1/3 R_ikjl x^k x^l,
      Gamma^k_ij = -1/3 (R_kijl + R_kjil) x^l,
      nabla_i = d_i + 1/4 omega_ikl c^k c^l + A_i,  omega_ikl = -1/2 R_ijkl x^j,  A_i = -1/2 F_ij x^j.
    """
    n = len(Rijkl)
    if kappa is None:
        kappa = sum(Rijkl[i][j][i][j] for i in range(n) for j in range(n))
    X = [GetzlerOperator.x(n, k + 1) for k in range(n)]
    Cl = [GetzlerOperator.clifford(n, k + 1) for k in range(n)]
    nab = []
    for i in range(n):
        op = GetzlerOperator.d(n, i + 1)
        for k in range(n):
            for l in range(n):
                for j in range(n):
                    c = Rijkl[i][j][k][l]
                    if c:
                        op = op + (X[j] @ Cl[k] @ Cl[l]).scale(S.mul(S.rational(-1, 8), S.coerce(c)))
        for j in range(n):
            if F[i][j]:
                op = op + X[j].scale(S.mul(S.rational(-1, 2), S.coerce(F[i][j])))
        nab.append(op)
    P = GetzlerOperator(n)
    for i in range(n):
        for j in range(n):
            g = GetzlerOperator.scalar(n, 1 if i == j else 0)
            for k in range(n):
                for l in range(n):
                    c = Rijkl[i][k][j][l]
                    if c:
                        g = g + (X[k] @ X[l]).scale(S.mul(S.rational(1, 3), S.coerce(c)))
            inner = nab[i] @ nab[j]
            for k in range(n):
                for l in range(n):
                    c = Rijkl[k][i][j][l] + Rijkl[k][j][i][l]
                    if c:
                        inner = inner + (X[l] @ nab[k]).scale(S.mul(S.rational(1, 3), S.coerce(c)))
            P = P - g @ inner
    P = P + GetzlerOperator.scalar(n, S.mul(S.rational(1, 4), S.coerce(kappa)))
    for i in range(n):
        for j in range(n):
            if F[i][j]:
                P = P + (Cl[i] @ Cl[j]).scale(S.mul(S.rational(1, 2), S.coerce(F[i][j])))
    return P


def expected_lichnerowicz_model(Rijkl, F):
    """H_R + F(0) written out: -sum d_i^2 + 1/2 sum R_ij x^j d_i - 1/16 sum_i (sum_j R_ij x^j)^2 + F(0)."""
    n = len(Rijkl)
    Rf = curvature_forms(Rijkl, n)
    out = laplacian(n)
    for i in range(n):
        for j in range(n):
            w = Rf[i][j]
            if not w.is_zero():
                out = out + GetzlerOperator.form(w.scale(S.rational(1, 2))) @ GetzlerOperator.x(n, j + 1) @ GetzlerOperator.d(n, i + 1)
    for i in range(n):
        lin = GetzlerOperator(n)
        for j in range(n):
            w = Rf[i][j]
            if not w.is_zero():
                lin = lin + GetzlerOperator.form(w) @ GetzlerOperator.x(n, j + 1)
        out = out - (lin @ lin).scale(S.rational(1, 16))
    return out + GetzlerOperator.form(twist_form(F, n))
