import itertools

import pytest
import sympy
from hypothesis import given, strategies as st

from eqindex import scalars as S
from eqindex.graded_algebra import (
    DimensionError,
    ExteriorElement,
    FormMatrix,
    UnsupportedDimensionError,
    analytic_series,
    berezin_horizontal,
    berezin_top,
    clifford_product,
    matrix_exp,
    phi_spinor_symbol,
    supertrace_sigma,
    wedge,
)

N = 4


def dx(i, n=N):
    return ExteriorElement.dx(n, i)


@st.composite
def forms(draw, n=N, even=False, nilpotent=False):
    terms = {}
    for r in range(0, n + 1):
        if even and r % 2:
            continue
        if nilpotent and r == 0:
            continue
        for idx in itertools.combinations(range(1, n + 1), r):
            if draw(st.booleans()):
                terms[idx] = sympy.Rational(draw(st.integers(-4, 4)), draw(st.integers(1, 3)))
    return ExteriorElement(n, {k: v for k, v in terms.items() if v != 0})


def test_wedge_anticommutes_on_one_forms():
    assert wedge(dx(1), dx(2)) == -wedge(dx(2), dx(1))
    assert wedge(dx(3), dx(3)).is_zero()


def test_basis_sign_from_sorting():
    assert ExteriorElement(N, {(2, 1): 1}) == -ExteriorElement(N, {(1, 2): 1})


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        wedge(ExteriorElement.dx(2, 1), ExteriorElement.dx(3, 1))


def test_clifford_square_is_minus_one():
    assert clifford_product(dx(1), dx(1)) == ExteriorElement.scalar(N, -1)


def test_clifford_mixed_product():
    # c(e1) c(e2) has symbol dx1 ^ dx2, and c(e2) c(e1) the opposite
    assert clifford_product(dx(1), dx(2)) == wedge(dx(1), dx(2))
    assert clifford_product(dx(2), dx(1)) == -wedge(dx(1), dx(2))


def test_supertrace_of_volume_symbol():
    # (-2i)^{n/2} times the top coefficient
    assert supertrace_sigma(ExteriorElement.volume(2)) == -2 * sympy.I
    assert supertrace_sigma(ExteriorElement.one(2)) == 0


def test_supertrace_odd_dimension_rejected():
    with pytest.raises(UnsupportedDimensionError):
        supertrace_sigma(ExteriorElement.one(3))


def test_berezin_horizontal():
    w = ExteriorElement(N, {(1, 2): 5, (1, 2, 3, 4): 7, (3, 4): 2})
    assert berezin_horizontal(w, 2) == 5
    assert berezin_top(w) == 7
    with pytest.raises(ValueError):
        berezin_horizontal(w, 3)


def test_spinor_symbol_inverse():
    up = phi_spinor_symbol(["pi/3"], 2)
    down = phi_spinor_symbol(["pi/3"], 2, inverse=True)
    assert clifford_product(up, down) == ExteriorElement.one(4)


@given(forms(), forms(), forms())
def test_wedge_associative(a, b, c):
    assert wedge(wedge(a, b), c) == wedge(a, wedge(b, c))


@given(forms(), forms(), forms())
def test_clifford_associative(a, b, c):
    assert clifford_product(clifford_product(a, b), c) == clifford_product(a, clifford_product(b, c))


@given(forms(), forms())
def test_graded_commutativity(a, b):
    lhs = wedge(a, b)
    rhs = ExteriorElement.zero(N)
    for p in a.degrees():
        for q in b.degrees():
            rhs = rhs + wedge(b.degree_part(q), a.degree_part(p)).scale((-1) ** (p * q))
    assert lhs == rhs


@given(forms(nilpotent=True, even=True))
def test_exp_log_inverse(a):
    assert analytic_series("log", analytic_series("exp", a)) == a


@given(forms(nilpotent=True, even=True))
def test_sqrt_squares_back(a):
    one_plus = a + ExteriorElement.one(N)
    r = analytic_series("sqrt", one_plus)
    assert wedge(r, r) == one_plus


@given(forms(nilpotent=True, even=True))
def test_clifford_matches_wedge_on_top_degree(a):
    # the leading symbol of a product is the wedge product
    b = dx(1)
    diff = clifford_product(a, b) - wedge(a, b)
    top = max(a.degrees(), default=0) + 1
    assert diff.degree_part(top).is_zero()


def test_matrix_exp_of_nilpotent_matrix():
    w = ExteriorElement(N, {(1, 2): 1})
    M = FormMatrix([[ExteriorElement.zero(N), w], [-w, ExteriorElement.zero(N)]], N)
    E = matrix_exp(M)
    # M^2 = -w^w = 0, so exp(M) = 1 + M
    assert E == FormMatrix.identity(2, N) + M


def test_f64_mode_agrees_with_exact():
    a = ExteriorElement(N, {(1, 2): sympy.Rational(1, 3), (3, 4): 2})
    ex = analytic_series("exp", a)
    with S.precision("f64"):
        a64 = a.to_f64()
        fl = analytic_series("exp", a64)
    assert fl.max_abs_difference(ex.to_f64()) < 1e-14
