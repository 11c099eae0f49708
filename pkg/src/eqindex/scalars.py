"""Coefficient backends.

Two precision modes are supported:

``exact``
    Gaussian rationals (sympy's ``QQ_I`` elements, gmpy2-backed) on the fast
    path, falling back to expanded sympy expressions whenever an irrational or
    transcendental constant (pi, sqrt(2), sin(1), ...) enters.
``f64``
    Python ``complex``.

The active mode lives in a context variable so worker threads may run in
different modes without sharing state.
"""
import contextlib
import contextvars
import math
import cmath
import numbers
from fractions import Fraction

import sympy
from sympy.polys.domains import QQ_I
from sympy.polys.polyerrors import CoercionFailed

GaussQ = type(QQ_I(0, 0))
Expr = sympy.Expr

EXACT = "exact"
F64 = "f64"
_MODES = (EXACT, F64)
_mode = contextvars.ContextVar("eqindex_precision", default=EXACT)


class DomainError(ValueError):
    """Scalar outside the domain of an analytic function or branch."""


def get_precision():
    return _mode.get()


def set_precision(mode):
    if mode not in _MODES:
        raise ValueError(f"precision must be one of {_MODES}, got {mode!r}")
    _mode.set(mode)


@contextlib.contextmanager
def precision(mode):
    """Temporarily switch the precision mode."""
    if mode not in _MODES:
        raise ValueError(f"precision must be one of {_MODES}, got {mode!r}")
    token = _mode.set(mode)
    try:
        yield
    finally:
        _mode.reset(token)


def is_exact_mode():
    return _mode.get() == EXACT


# ---------------------------------------------------------------- conversion

def _gauss_from_sympy(e):
    try:
        return QQ_I.from_sympy(e)
    except (CoercionFailed, TypeError, ValueError):
        return None


def _canon_expr(e):
    e = sympy.expand(e)
    if e.is_Rational:
        return QQ_I(e, 0)
    if e.is_number:
        g = _gauss_from_sympy(e)
        if g is not None:
            return g
    return e


def _float_to_exact(x):
    # decimal reading of the float literal, so 0.1 becomes 1/10
    return Fraction(repr(float(x)))


def to_exact(x):
    """Convert ``x`` to an exact internal coefficient."""
    if type(x) is GaussQ:
        return x
    if isinstance(x, bool):
        return QQ_I(int(x), 0)
    if isinstance(x, (int, Fraction)):
        return QQ_I(x, 0)
    if isinstance(x, Expr):
        return _canon_expr(x)
    if isinstance(x, str):
        return _canon_expr(sympy.sympify(x, rational=True))
    if isinstance(x, complex):
        return QQ_I(_float_to_exact(x.real), _float_to_exact(x.imag))
    if isinstance(x, numbers.Real):
        return QQ_I(_float_to_exact(x), 0)
    if isinstance(x, numbers.Complex):
        return to_exact(complex(x))
    raise TypeError(f"cannot convert {type(x).__name__} to an exact scalar")


def to_complex(x):
    if type(x) is GaussQ:
        return complex(float(x.x), float(x.y))
    if isinstance(x, Expr):
        return complex(sympy.N(x, 20))
    if isinstance(x, str):
        return complex(sympy.N(sympy.sympify(x), 20))
    return complex(x)


def coerce(x):
    """Convert ``x`` to the internal coefficient type of the active mode."""
    if _mode.get() == EXACT:
        return to_exact(x)
    return to_complex(x)


def public(c):
    """Internal coefficient -> user facing number (sympy number or complex)."""
    if type(c) is GaussQ:
        return QQ_I.to_sympy(c)
    return c


def as_sympy(c):
    if type(c) is GaussQ:
        return QQ_I.to_sympy(c)
    if isinstance(c, Expr):
        return c
    if isinstance(c, (int, Fraction)):
        return sympy.Rational(c)
    if isinstance(c, str):
        return sympy.sympify(c, rational=True)
    return sympy.sympify(c)


# ---------------------------------------------------------------- arithmetic

ZERO_E = QQ_I(0, 0)
ONE_E = QQ_I(1, 0)


def zero():
    return ZERO_E if _mode.get() == EXACT else 0j


def one():
    return ONE_E if _mode.get() == EXACT else 1 + 0j


def _lift_pair(a, b):
    ta, tb = type(a), type(b)
    if ta is complex or tb is complex or ta is float or tb is float:
        return to_complex(a), to_complex(b), False
    return as_sympy(a), as_sympy(b), True


def add(a, b):
    if type(a) is type(b) and type(a) in (GaussQ, complex):
        return a + b
    x, y, sym = _lift_pair(a, b)
    return _canon_expr(x + y) if sym else x + y


def sub(a, b):
    if type(a) is type(b) and type(a) in (GaussQ, complex):
        return a - b
    x, y, sym = _lift_pair(a, b)
    return _canon_expr(x - y) if sym else x - y


def mul(a, b):
    if type(a) is type(b) and type(a) in (GaussQ, complex):
        return a * b
    x, y, sym = _lift_pair(a, b)
    return _canon_expr(x * y) if sym else x * y


def div(a, b):
    if is_zero(b):
        raise ZeroDivisionError("division by a zero coefficient")
    if type(a) is type(b) and type(a) in (GaussQ, complex):
        return a / b
    x, y, sym = _lift_pair(a, b)
    return _canon_expr(x / y) if sym else x / y


def neg(a):
    if type(a) in (GaussQ, complex):
        return -a
    return _canon_expr(-as_sympy(a))


def is_zero(c):
    if type(c) is GaussQ:
        return not c
    if type(c) is complex:
        return c == 0
    if isinstance(c, Expr):
        return sympy.expand(c) == 0
    return c == 0


def equal(a, b, tol=None):
    """Scalar equality; exact unless ``tol`` is given."""
    if tol is not None:
        return abs(to_complex(a) - to_complex(b)) <= tol
    if type(a) is type(b) is GaussQ:
        return a == b
    if type(a) is complex or type(b) is complex:
        return to_complex(a) == to_complex(b)
    d = sympy.expand(as_sympy(a) - as_sympy(b))
    if d == 0:
        return True
    return sympy.simplify(d) == 0


def rational(p, q=1):
    """Exact p/q in exact mode, float otherwise."""
    if _mode.get() == EXACT:
        return QQ_I(Fraction(p, q), 0)
    return complex(p / q)


def scalar_part_key(c):
    """Sortable key for deterministic output."""
    z = to_complex(c)
    return (round(z.real, 15), round(z.imag, 15))


# ------------------------------------------------------- elementary functions

def _sym_angle(x):
    """Exact angle from user input; floats are matched against rational multiples of pi."""
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return sympy.sympify(x, rational=True)
    if isinstance(x, (int, Fraction)):
        return sympy.Rational(x)
    if isinstance(x, float):
        guess = sympy.nsimplify(x / math.pi, rational=True, tolerance=1e-12)
        if abs(float(guess) * math.pi - x) < 1e-13 and sympy.Rational(guess).q <= 1000:
            return guess * sympy.pi
        return sympy.Rational(_float_to_exact(x))
    if type(x) is GaussQ:
        return QQ_I.to_sympy(x)
    raise TypeError(f"unsupported angle type {type(x).__name__}")


def angle_value(x):
    """Real float value of an angle given in any accepted form."""
    if isinstance(x, (int, float, Fraction)):
        return float(x)
    return float(sympy.N(_sym_angle(x), 20))


def angle(x):
    """Angle as an internal coefficient of the active mode."""
    if _mode.get() == EXACT:
        return _canon_expr(_sym_angle(x))
    return complex(angle_value(x) if not isinstance(x, (GaussQ, Expr)) else to_complex(x))


def _unary(x, exact_fn, float_fn):
    if _mode.get() == EXACT:
        return _canon_expr(exact_fn(_sym_angle(x) if not isinstance(x, GaussQ) else QQ_I.to_sympy(x)))
    return complex(float_fn(to_complex(x) if not isinstance(x, (int, float)) else x))


def sin(x):
    return _unary(x, sympy.sin, cmath.sin)


def cos(x):
    return _unary(x, sympy.cos, cmath.cos)


def exp(x):
    return _unary(x, sympy.exp, cmath.exp)


def log(x):
    if is_zero(coerce(x) if not isinstance(x, Expr) else x):
        raise DomainError("log of zero scalar part")
    return _unary(x, sympy.log, cmath.log)


def sqrt(x):
    """Principal square root."""
    return _unary(x, sympy.sqrt, cmath.sqrt)


def pi():
    return _canon_expr(sympy.pi) if _mode.get() == EXACT else complex(math.pi)


def expi(x):
    """exp(i x) for a real angle ``x``."""
    if _mode.get() == EXACT:
        a = _sym_angle(x)
        return _canon_expr(sympy.cos(a) + sympy.I * sympy.sin(a))
    return cmath.exp(1j * angle_value(x))


def power(x, p):
    """x**p with integer or rational ``p`` (principal branch)."""
    p = Fraction(p)
    if _mode.get() == EXACT:
        if type(x) is GaussQ and p.denominator == 1:
            k = int(p)
            if k < 0:
                if not x:
                    raise ZeroDivisionError("zero to a negative power")
                return (x ** -1) ** (-k)
            return x ** k
        return _canon_expr(as_sympy(x) ** sympy.Rational(p.numerator, p.denominator))
    z = to_complex(x)
    if p.denominator == 1:
        return z ** int(p)
    return cmath.exp(float(p) * cmath.log(z)) if z != 0 else 0j


def real_positive(c):
    """True if ``c`` is (numerically) a positive real number."""
    z = to_complex(c)
    return abs(z.imag) <= 1e-14 * max(1.0, abs(z.real)) and z.real > 0
