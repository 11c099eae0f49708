import math
import random

import pytest
import sympy
from hypothesis import given, strategies as st

from eqindex import oracles
from eqindex import scalars as S
from eqindex.char_forms import NormalAction
from eqindex.graded_algebra import ExteriorElement
from eqindex.volterra import (
    GetzlerOperator,
    InsufficientLayersError,
    VolterraError,
    VolterraSymbol,
    asymptotic_coefficients,
    expected_lichnerowicz_model,
    fiber_integral_IQ,
    getzler_order_and_model,
    half_integer_slots,
    heat_parametrix,
    laplacian,
    model_product_check,
    operator_symbol,
    random_curvature_tensor,
    schrodinger,
    symbol_compose,
    symbol_to_kernel,
    synthetic_lichnerowicz,
)

N = 2


def mono(alpha=(0, 0), beta=(0, 0), k=0, coeff=1, form_dim=0):
    return VolterraSymbol.monomial(N, alpha=alpha, beta=beta, k=k, coeff=coeff, form_dim=form_dim)


def test_composition_is_not_commutative():
    xi, x_xi = mono(beta=(1, 0)), mono(alpha=(1, 0), beta=(1, 0))
    assert symbol_compose(xi, x_xi) == mono(alpha=(1, 0), beta=(2, 0)) + mono(beta=(1, 0), coeff=-sympy.I)
    assert symbol_compose(x_xi, xi) == mono(alpha=(1, 0), beta=(2, 0))


def test_rho_derivative():
    # d/dxi_1 rho^{-1} = -2 xi_1 rho^{-2}
    assert mono(k=1).d_xi(0) == mono(beta=(1, 0), k=2, coeff=-2)


@st.composite
def symbols(draw):
    q = VolterraSymbol(N)
    for _ in range(draw(st.integers(1, 3))):
        a = (draw(st.integers(0, 2)), draw(st.integers(0, 1)))
        b = (draw(st.integers(0, 2)), draw(st.integers(0, 2)))
        q = q + mono(a, b, draw(st.integers(-1, 2)), draw(st.integers(-3, 3)))
    return q


@given(symbols(), symbols(), symbols())
def test_composition_associative(a, b, c):
    assert symbol_compose(symbol_compose(a, b), c) == symbol_compose(a, symbol_compose(b, c))


def test_laplacian_symbol():
    q = operator_symbol(laplacian(N))
    assert q == mono(beta=(2, 0), form_dim=q.form_dim) + mono(beta=(0, 2), form_dim=q.form_dim)


def test_rho_inverse_is_heat_kernel():
    K = symbol_to_kernel(mono(k=1))
    assert abs(complex(K.evaluate([0, 0], [0, 0], 1.0).scalar_part) - 1 / (4 * math.pi)) < 1e-15


def test_positive_rho_power_has_no_kernel():
    with pytest.raises(VolterraError):
        symbol_to_kernel(mono(k=0))


def test_fiber_integral_quarter_turn():
    # int_{R^2} G_t((1 - phi) x) dx = 1/det(1 - phi) = 1/2
    K = symbol_to_kernel(mono(k=1))
    val = fiber_integral_IQ(K, NormalAction(["pi/2"]), 0, 1)
    assert val == ExteriorElement.scalar(val.n, sympy.Rational(1, 2))


def test_fiber_integral_rejects_bad_dimensions():
    K = symbol_to_kernel(mono(k=1))
    with pytest.raises(VolterraError):
        fiber_integral_IQ(K, NormalAction(["pi/2"]), 2, 1)


@pytest.mark.parametrize("V", [0, 2, 5])
def test_parametrix_matches_free_schrodinger(V):
    q = heat_parametrix(schrodinger(N, {(0, 0): V}), 6)
    coeffs = asymptotic_coefficients(q, None, 2, 2)
    for j, ref in enumerate(oracles.schrodinger_heat_coefficients(V, 2)):
        assert sympy.simplify(S.as_sympy(coeffs[j].scalar_part) - ref) == 0
    assert not half_integer_slots(q, None, 2)


def test_parametrix_layer_shortage():
    q = heat_parametrix(schrodinger(N, {(0, 0): 1}), 1)
    with pytest.raises(InsufficientLayersError):
        asymptotic_coefficients(q, None, 2, 3)


@pytest.mark.parametrize("op, order", [
    (GetzlerOperator.x(N, 1), -1),
    (GetzlerOperator.d(N, 1), 1),
    (GetzlerOperator.dt(N), 2),
    (GetzlerOperator.clifford(N, 1), 1),
])
def test_getzler_orders(op, order):
    assert getzler_order_and_model(op)[0] == order


def test_clifford_model_is_form():
    _, model = getzler_order_and_model(GetzlerOperator.clifford(N, 1, 2))
    assert model == GetzlerOperator.form(ExteriorElement(N, {(1, 2): 1}))


@given(st.integers(0, 10_000))
def test_lichnerowicz_model(seed):
    rng = random.Random(seed)
    n = 2
    R = random_curvature_tensor(n, rng)
    F = [[0, sympy.Rational(rng.randint(-3, 3), 2)], [0, 0]]
    F[1][0] = -F[0][1]
    order, model = getzler_order_and_model(synthetic_lichnerowicz(R, F))
    assert order == 2
    assert model == expected_lichnerowicz_model(R, F)


def test_model_of_product():
    a = GetzlerOperator.clifford(N, 1) @ GetzlerOperator.x(N, 2)
    b = GetzlerOperator.d(N, 1) + GetzlerOperator.clifford(N, 2)
    assert model_product_check(a, b)
