"""Exterior algebra of C^n, Clifford multiplication on it, Berezin integrals.

Basis monomials dx^{i1} ^ ... ^ dx^{ik} (1-based, ascending) are stored as
bitmasks, bit ``i-1`` standing for dx^i.  Signs come from counting
transpositions.

Clifford multiplication is realised on Lambda(n) itself: c(v) = v^ - i_v acts
on forms, and the symbol map sends an endomorphism A to A(1).  So
``clifford_product(a, b)`` is sigma[c(a) c(b)] = c(a) applied to b, and
c(v)^2 = -|v|^2.
"""
import contextlib
import contextvars
from fractions import Fraction
from functools import lru_cache

from . import scalars as S


class DimensionError(ValueError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


_cliff_eps = contextvars.ContextVar("eqindex_clifford_eps", default=-1)


@contextlib.contextmanager
def clifford_convention(eps):
    """Switch c(v) = v^ + eps*i_v, so that c(v)^2 = eps |v|^2.

    Only meant for sensitivity tests; the library convention is eps = -1.
    """
    if eps not in (1, -1):
        raise ValueError("eps must be +1 or -1")
    token = _cliff_eps.set(eps)
    try:
        yield
    finally:
        _cliff_eps.reset(token)


# ------------------------------------------------------------------ bit tools

def popcount(m):
    return bin(m).count("1")


def mask_to_indices(m):
    out = []
    i = 1
    while m:
        if m & 1:
            out.append(i)
        m >>= 1
        i += 1
    return tuple(out)


def indices_to_mask(idx, n=None):
    """Sorted-with-sign conversion. Returns (sign, mask); sign 0 on repeats."""
    idx = list(idx)
    for i in idx:
        if i < 1 or (n is not None and i > n):
            raise DimensionError(f"index {i} outside 1..{n}")
    if len(set(idx)) != len(idx):
        return 0, 0
    inv = sum(1 for p in range(len(idx)) for q in range(p + 1, len(idx)) if idx[p] > idx[q])
    m = 0
    for i in idx:
        m |= 1 << (i - 1)
    return (-1 if inv & 1 else 1), m


@lru_cache(maxsize=1 << 18)
def wedge_sign(A, B):
    if A & B:
        return 0
    s = 0
    b = B
    while b:
        low = b & -b
        j = low.bit_length() - 1
        s += popcount(A >> (j + 1))
        b ^= low
    return -1 if s & 1 else 1


@lru_cache(maxsize=1 << 18)
def clifford_action(I, J, eps):
    """c(e_I) applied to e_J: returns (sign, mask)."""
    sign = 1
    mask = J
    i = I.bit_length() - 1
    while i >= 0:
        if (I >> i) & 1:
            below = popcount(mask & ((1 << i) - 1))
            s = -1 if below & 1 else 1
            if (mask >> i) & 1:
                s *= eps
            sign *= s
            mask ^= 1 << i
        i -= 1
    return sign, mask


# ---------------------------------------------------------- ExteriorElement

class ExteriorElement:
    """Element of Lambda(n) (x) C with canonical sparse storage."""

    __slots__ = ("n", "_t")

    def __init__(self, n, terms=None):
        if n < 0:
            raise DimensionError("ambient dimension must be >= 0")
        self.n = int(n)
        self._t = {}
        if terms:
            for key, c in terms.items():
                if isinstance(key, int):
                    sign, m = 1, key
                    if m >> self.n:
                        raise DimensionError(f"mask {key} outside dimension {n}")
                else:
                    sign, m = indices_to_mask(key, self.n)
                if sign == 0:
                    continue
                c = S.coerce(c)
                if sign < 0:
                    c = S.neg(c)
                self._acc(m, c)

    @classmethod
    def _raw(cls, n, t):
        obj = cls.__new__(cls)
        obj.n = n
        obj._t = t
        return obj

    def _acc(self, m, c):
        if m in self._t:
            c = S.add(self._t[m], c)
        if S.is_zero(c):
            self._t.pop(m, None)
        else:
            self._t[m] = c

    # construction helpers
    @classmethod
    def scalar(cls, n, c=1):
        c = S.coerce(c)
        return cls._raw(n, {} if S.is_zero(c) else {0: c})

    @classmethod
    def zero(cls, n):
        return cls._raw(n, {})

    @classmethod
    def one(cls, n):
        return cls.scalar(n, 1)

    @classmethod
    def basis(cls, n, *indices, coeff=1):
        return cls(n, {tuple(indices): coeff})

    @classmethod
    def dx(cls, n, i):
        return cls.basis(n, i)

    @classmethod
    def volume(cls, n):
        return cls._raw(n, {(1 << n) - 1: S.one()})

    # inspection
    @property
    def ambient_dim(self):
        return self.n

    def raw_terms(self):
        return self._t

    def terms(self):
        """Mapping sorted index tuple -> public coefficient (sorted keys)."""
        keys = sorted(self._t, key=lambda m: (popcount(m), mask_to_indices(m)))
        return {mask_to_indices(m): S.public(self._t[m]) for m in keys}

    def coefficient(self, *indices):
        if len(indices) == 1 and isinstance(indices[0], (tuple, list)):
            indices = tuple(indices[0])
        sign, m = indices_to_mask(indices, self.n)
        if sign == 0:
            return S.public(S.zero())
        c = self._t.get(m, S.zero())
        return S.public(c if sign > 0 else S.neg(c))

    @property
    def scalar_part(self):
        return S.public(self._t.get(0, S.zero()))

    def scalar_raw(self):
        return self._t.get(0, S.zero())

    def is_zero(self):
        return not self._t

    def degrees(self):
        return sorted({popcount(m) for m in self._t})

    def degree_part(self, d):
        return ExteriorElement._raw(self.n, {m: c for m, c in self._t.items() if popcount(m) == d})

    def even_part(self):
        return ExteriorElement._raw(self.n, {m: c for m, c in self._t.items() if not popcount(m) & 1})

    def odd_part(self):
        return ExteriorElement._raw(self.n, {m: c for m, c in self._t.items() if popcount(m) & 1})

    def nilpotent_part(self):
        return ExteriorElement._raw(self.n, {m: c for m, c in self._t.items() if m})

    def is_even(self):
        return all(not popcount(m) & 1 for m in self._t)

    def bidegree_part(self, k, l, a_dim):
        """Lambda^{k,l} component for the split (1..a | a+1..n)."""
        hmask = (1 << a_dim) - 1
        return ExteriorElement._raw(
            self.n,
            {m: c for m, c in self._t.items() if popcount(m & hmask) == k and popcount(m >> a_dim) == l},
        )

    def horizontal_part(self, a_dim):
        """Component with no normal index, i.e. the (., 0) part."""
        return ExteriorElement._raw(self.n, {m: c for m, c in self._t.items() if not m >> a_dim})

    def map_coefficients(self, fn):
        out = ExteriorElement._raw(self.n, {})
        for m, c in self._t.items():
            out._acc(m, fn(c))
        return out

    def to_f64(self):
        return ExteriorElement._raw(self.n, {m: S.to_complex(c) for m, c in self._t.items()})

    def to_exact(self):
        return ExteriorElement._raw(self.n, {m: S.to_exact(c) for m, c in self._t.items()})

    def embed(self, n_new, shift=0):
        """Same element in Lambda(n_new), indices shifted by ``shift``."""
        if self.n + shift > n_new:
            raise DimensionError("embedding does not fit")
        return ExteriorElement._raw(n_new, {m << shift: c for m, c in self._t.items()})

    # arithmetic
    def _check(self, other):
        if self.n != other.n:
            raise DimensionError(f"ambient dimensions differ: {self.n} vs {other.n}")

    def _promote(self, other):
        if isinstance(other, ExteriorElement):
            self._check(other)
            return other
        return ExteriorElement.scalar(self.n, other)

    def __add__(self, other):
        other = self._promote(other)
        out = ExteriorElement._raw(self.n, dict(self._t))
        for m, c in other._t.items():
            out._acc(m, c)
        return out

    __radd__ = __add__

    def __neg__(self):
        return ExteriorElement._raw(self.n, {m: S.neg(c) for m, c in self._t.items()})

    def __sub__(self, other):
        return self + (-self._promote(other))

    def __rsub__(self, other):
        return self._promote(other) - self

    def scale(self, c):
        c = S.coerce(c) if not isinstance(c, (S.GaussQ, S.Expr, complex)) else c
        if S.is_zero(c):
            return ExteriorElement.zero(self.n)
        out = ExteriorElement._raw(self.n, {})
        for m, v in self._t.items():
            out._acc(m, S.mul(c, v))
        return out

    def __mul__(self, other):
        if isinstance(other, ExteriorElement):
            return wedge(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __truediv__(self, c):
        return self.scale(S.div(S.one(), S.coerce(c)))

    def __pow__(self, k):
        if k < 0:
            raise ValueError("use analytic_series('inverse', .) for negative powers")
        out = ExteriorElement.one(self.n)
        for _ in range(k):
            out = wedge(out, self)
        return out

    def __eq__(self, other):
        if not isinstance(other, ExteriorElement):
            try:
                other = ExteriorElement.scalar(self.n, other)
            except TypeError:
                return NotImplemented
        if self.n != other.n:
            return False
        if self._t.keys() != other._t.keys():
            diff = self - other
            return diff.is_zero()
        return all(S.equal(c, other._t[m]) for m, c in self._t.items())

    __hash__ = None

    def equals(self, other, tol=None):
        other = self._promote(other)
        keys = set(self._t) | set(other._t)
        z = S.zero()
        return all(S.equal(self._t.get(m, z), other._t.get(m, z), tol) for m in keys)

    def max_abs_difference(self, other):
        other = self._promote(other)
        keys = set(self._t) | set(other._t)
        z = S.zero()
        return max((abs(S.to_complex(self._t.get(m, z)) - S.to_complex(other._t.get(m, z))) for m in keys), default=0.0)

    def __repr__(self):
        if not self._t:
            return "0"
        parts = []
        for idx, c in self.terms().items():
            mono = "^".join(f"dx{i}" for i in idx)
            parts.append(f"({c})" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


def _check_pair(a, b):
    if not isinstance(a, ExteriorElement) or not isinstance(b, ExteriorElement):
        raise TypeError("expected ExteriorElement operands")
    if a.n != b.n:
        raise DimensionError(f"ambient dimensions differ: {a.n} vs {b.n}")


def wedge(a, b):
    """Exterior product."""
    _check_pair(a, b)
    out = {}
    for ma, ca in a._t.items():
        for mb, cb in b._t.items():
            if ma & mb:
                continue
            sg = wedge_sign(ma, mb)
            c = S.mul(ca, cb)
            if sg < 0:
                c = S.neg(c)
            m = ma | mb
            if m in out:
                out[m] = S.add(out[m], c)
            else:
                out[m] = c
    return ExteriorElement._raw(a.n, {m: c for m, c in out.items() if not S.is_zero(c)})


def clifford_product(a, b):
    """sigma[c(a) c(b)], computed as c(a) acting on b inside Lambda(n)."""
    _check_pair(a, b)
    eps = _cliff_eps.get()
    out = {}
    for ma, ca in a._t.items():
        for mb, cb in b._t.items():
            sg, m = clifford_action(ma, mb, eps)
            c = S.mul(ca, cb)
            if sg < 0:
                c = S.neg(c)
            if m in out:
                out[m] = S.add(out[m], c)
            else:
                out[m] = c
    return ExteriorElement._raw(a.n, {m: c for m, c in out.items() if not S.is_zero(c)})


def berezin_top(a):
    """Coefficient of dx^1 ^ ... ^ dx^n."""
    return S.public(a._t.get((1 << a.n) - 1, S.zero()))


def berezin_horizontal(a, a_dim):
    """Coefficient of dx^1 ^ ... ^ dx^a; terms with a normal index are dropped."""
    if not (0 <= a_dim <= a.n) or a_dim % 2:
        raise DimensionError(f"a_dim must be even with 0 <= a_dim <= {a.n}, got {a_dim}")
    return S.public(a._t.get((1 << a_dim) - 1, S.zero()))


def supertrace_sigma(sigma_a):
    """str on spinors of the operator with symbol ``sigma_a``: (-2i)^{n/2} |sigma_a|^{(n)}."""
    n = sigma_a.n
    if n % 2:
        raise UnsupportedDimensionError("supertrace needs an even ambient dimension")
    pref = S.power(S.coerce(-2j), n // 2)
    top = sigma_a._t.get((1 << n) - 1, S.zero())
    return S.public(S.mul(pref, top))


def _check_angle(theta):
    v = S.angle_value(theta)
    if not (0.0 < v <= 3.141592653589793 + 1e-12):
        raise ValueError(f"rotation angle must lie in (0, pi], got {v}")
    return v


def phi_spinor_symbol(angles, a_dim, inverse=False):
    """sigma of the spin lift of a normal rotation with the given angles.

    Product over normal planes (a+2j-1, a+2j) of cos(theta_j/2) + sin(theta_j/2) c c.
    ``inverse=True`` gives the lift of the inverse rotation (the conjugate product).
    """
    angles = list(angles)
    n = a_dim + 2 * len(angles)
    if a_dim < 0:
        raise DimensionError("a_dim must be >= 0")
    out = ExteriorElement.one(n)
    for j, th in enumerate(angles):
        _check_angle(th)
        half = S.mul(S.angle(th), S.rational(1, 2))
        c, s = S.cos(half), S.sin(half)
        if inverse:
            s = S.neg(s)
        p, q = a_dim + 2 * j + 1, a_dim + 2 * j + 2
        gen = clifford_product(ExteriorElement.dx(n, p), ExteriorElement.dx(n, q))
        factor = ExteriorElement.scalar(n, c) + gen.scale(s)
        out = clifford_product(out, factor)
    return out


# ------------------------------------------------------------ power series

class Series:
    """A power series specified by its Taylor coefficients around a point.

    ``coefficients(s, kmax)`` returns [f(s), f'(s), f''(s)/2!, ...] as internal scalars.
    """

    def __init__(self, name, coefficients):
        self.name = name
        self.coefficients = coefficients

    def __repr__(self):
        return f"Series({self.name})"


def _exp_coeffs(s, kmax):
    e = S.exp(s)
    out, fact = [], 1
    for k in range(kmax + 1):
        fact = fact * k if k else 1
        out.append(S.mul(e, S.rational(1, fact)))
    return out


def _log_coeffs(s, kmax):
    if S.is_zero(s):
        raise S.DomainError("log needs a nonzero scalar part")
    out = [S.log(s)]
    inv = S.div(S.one(), s)
    p = S.one()
    for k in range(1, kmax + 1):
        p = S.mul(p, inv)
        c = S.mul(p, S.rational(1, k))
        out.append(c if k % 2 else S.neg(c))
    return out


def _inverse_coeffs(s, kmax):
    if S.is_zero(s):
        raise S.DomainError("inverse needs a nonzero scalar part")
    inv = S.div(S.one(), s)
    out, p = [], inv
    for k in range(kmax + 1):
        out.append(p if k % 2 == 0 else S.neg(p))
        p = S.mul(p, inv)
    return out


def _binomial(p, k):
    out = Fraction(1)
    for i in range(k):
        out = out * (p - i) / (i + 1)
    return out


def power_series(p):
    """Series of x**p around a nonzero point (principal branch)."""
    p = Fraction(p)

    def coeffs(s, kmax):
        if S.is_zero(s):
            raise S.DomainError(f"x**{p} needs a nonzero scalar part")
        base = S.power(s, p)
        inv = S.div(S.one(), s)
        out, q = [], S.one()
        for k in range(kmax + 1):
            b = _binomial(p, k)
            out.append(S.mul(S.mul(base, q), S.rational(b.numerator, b.denominator)))
            q = S.mul(q, inv)
        return out

    return Series(f"pow({p})", coeffs)


def maclaurin(coeffs, name="maclaurin"):
    """Series with fixed coefficients around 0; the argument must be nilpotent."""
    coeffs = list(coeffs)

    def fn(s, kmax):
        if not S.is_zero(s):
            raise S.DomainError(f"{name}: fixed-coefficient series needs zero scalar part")
        out = [S.coerce(c) for c in coeffs[: kmax + 1]]
        return out + [S.zero()] * (kmax + 1 - len(out))

    return Series(name, fn)


EXP = Series("exp", _exp_coeffs)
LOG = Series("log", _log_coeffs)
INVERSE = Series("inverse", _inverse_coeffs)
SQRT = power_series(Fraction(1, 2))
_NAMED = {"exp": EXP, "log": LOG, "inverse": INVERSE, "inv": INVERSE, "sqrt": SQRT}


def _resolve_series(f):
    if isinstance(f, Series):
        return f
    if isinstance(f, str) and f in _NAMED:
        return _NAMED[f]
    raise ValueError(f"unknown series {f!r}; use one of {sorted(_NAMED)} or a Series")


def analytic_series(f, a):
    """Evaluate f(a) for a = s + N with N nilpotent; exact truncation at degree n."""
    f = _resolve_series(f)
    s = a.scalar_raw()
    N = a.nilpotent_part()
    powers = [ExteriorElement.one(a.n)]
    while True:
        nxt = wedge(powers[-1], N)
        if nxt.is_zero():
            break
        powers.append(nxt)
    if f is SQRT and S.is_zero(s):
        raise S.DomainError("sqrt needs a nonzero scalar part")
    coeffs = f.coefficients(s, len(powers) - 1)
    out = ExteriorElement.zero(a.n)
    for c, p in zip(coeffs, powers):
        if not S.is_zero(c):
            out = out + p.scale(c)
    return out


# ------------------------------------------------------------------ FormMatrix

class FormMatrix:
    """Square matrix over the commutative ring of even forms in Lambda(n)."""

    __slots__ = ("n", "size", "rows")

    def __init__(self, rows, n=None, check_even=True):
        rows = [list(r) for r in rows]
        size = len(rows)
        if any(len(r) != size for r in rows):
            raise DimensionError("FormMatrix must be square")
        if n is None:
            if size == 0:
                raise DimensionError("ambient dimension needed for an empty FormMatrix")
            n = next(e.n for r in rows for e in r if isinstance(e, ExteriorElement)) if any(
                isinstance(e, ExteriorElement) for r in rows for e in r) else None
            if n is None:
                raise DimensionError("ambient dimension needed for scalar entries")
        conv = []
        for r in rows:
            cr = []
            for e in r:
                if not isinstance(e, ExteriorElement):
                    e = ExteriorElement.scalar(n, e)
                if e.n != n:
                    raise DimensionError("entries must share ambient dimension")
                if check_even and not e.is_even():
                    raise ValueError("FormMatrix entries must have even degree")
                cr.append(e)
            conv.append(cr)
        self.n = n
        self.size = size
        self.rows = conv

    @classmethod
    def zeros(cls, size, n):
        return cls([[ExteriorElement.zero(n) for _ in range(size)] for _ in range(size)], n)

    @classmethod
    def identity(cls, size, n):
        return cls([[ExteriorElement.scalar(n, 1 if i == j else 0) for j in range(size)] for i in range(size)], n)

    @classmethod
    def from_numbers(cls, mat, n):
        return cls([[ExteriorElement.scalar(n, x) for x in row] for row in mat], n)

    @classmethod
    def block_diag(cls, *blocks):
        n = blocks[0].n
        size = sum(b.size for b in blocks)
        out = cls.zeros(size, n)
        off = 0
        for b in blocks:
            if b.n != n:
                raise DimensionError("blocks must share ambient dimension")
            for i in range(b.size):
                for j in range(b.size):
                    out.rows[off + i][off + j] = b.rows[i][j]
            off += b.size
        return out

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def _new(self, rows):
        obj = FormMatrix.__new__(FormMatrix)
        obj.n, obj.size, obj.rows = self.n, len(rows), rows
        return obj

    def _check(self, other):
        if not isinstance(other, FormMatrix):
            raise TypeError("expected FormMatrix")
        if other.size != self.size or other.n != self.n:
            raise DimensionError("FormMatrix shapes differ")

    def __add__(self, other):
        self._check(other)
        return self._new([[a + b for a, b in zip(r, s)] for r, s in zip(self.rows, other.rows)])

    def __sub__(self, other):
        self._check(other)
        return self._new([[a - b for a, b in zip(r, s)] for r, s in zip(self.rows, other.rows)])

    def __neg__(self):
        return self._new([[-a for a in r] for r in self.rows])

    def scale(self, c):
        if isinstance(c, ExteriorElement):
            return self._new([[wedge(c, a) for a in r] for r in self.rows])
        return self._new([[a.scale(S.coerce(c) if not isinstance(c, (S.GaussQ, S.Expr, complex)) else c) for a in r] for r in self.rows])

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        k = self.size
        out = []
        for i in range(k):
            row = []
            for j in range(k):
                acc = ExteriorElement.zero(self.n)
                for l in range(k):
                    a, b = self.rows[i][l], other.rows[l][j]
                    if a._t and b._t:
                        acc = acc + wedge(a, b)
                row.append(acc)
            out.append(row)
        return self._new(out)

    def __eq__(self, other):
        if not isinstance(other, FormMatrix) or other.size != self.size or other.n != self.n:
            return False
        return all(a == b for r, s in zip(self.rows, other.rows) for a, b in zip(r, s))

    __hash__ = None

    def transpose(self):
        return self._new([[self.rows[j][i] for j in range(self.size)] for i in range(self.size)])

    def trace(self):
        acc = ExteriorElement.zero(self.n)
        for i in range(self.size):
            acc = acc + self.rows[i][i]
        return acc

    def is_antisymmetric(self):
        return all((self.rows[i][j] + self.rows[j][i]).is_zero() for i in range(self.size) for j in range(self.size))

    def scalar_matrix(self):
        """Nested list of internal scalar parts."""
        return [[e.scalar_raw() for e in r] for r in self.rows]

    def nilpotent_part(self):
        return self._new([[e.nilpotent_part() for e in r] for r in self.rows])

    def is_nilpotent(self):
        """True if the matrix has no scalar part (then M^{floor(n/2)+1} = 0)."""
        return all(not e.scalar_raw() or S.is_zero(e.scalar_raw()) for r in self.rows for e in r)

    def power(self, k):
        out = FormMatrix.identity(self.size, self.n)
        for _ in range(k):
            out = out @ self
        return out

    def is_zero(self):
        return all(e.is_zero() for r in self.rows for e in r)

    def map(self, fn):
        return self._new([[fn(e) for e in r] for r in self.rows])

    def embed(self, n_new, shift=0):
        return self._new([[e.embed(n_new, shift) for e in r] for r in self.rows])

    def __repr__(self):
        return "FormMatrix(" + repr([[repr(e) for e in r] for r in self.rows]) + ")"


def nilpotent_powers(M):
    """[I, M, M^2, ...] up to the last nonzero power of a nilpotent FormMatrix."""
    if not M.is_nilpotent():
        raise ValueError("matrix has a nonzero scalar part")
    out = [FormMatrix.identity(M.size, M.n)]
    while True:
        nxt = out[-1] @ M
        if nxt.is_zero():
            return out
        out.append(nxt)


def matrix_series(coeffs, M):
    """sum_k coeffs[k] M^k for nilpotent M; ``coeffs`` indexable by k."""
    pw = nilpotent_powers(M)
    out = FormMatrix.zeros(M.size, M.n)
    for k, P in enumerate(pw):
        c = coeffs(k) if callable(coeffs) else (coeffs[k] if k < len(coeffs) else 0)
        c = S.coerce(c) if not isinstance(c, (S.GaussQ, S.Expr, complex)) else c
        if not S.is_zero(c):
            out = out + P.scale(c)
    return out


def matrix_exp(M):
    """exp(M) for nilpotent M."""
    def c(k):
        f = 1
        for i in range(2, k + 1):
            f *= i
        return S.rational(1, f)
    return matrix_series(c, M)
