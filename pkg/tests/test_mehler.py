import math
import random

import pytest
import sympy
from hypothesis import given, strategies as st

from eqindex import oracles
from eqindex import scalars as S
from eqindex.acceptance import NORMAL_CHOICES, random_antisym, random_model_curvature
from eqindex.char_forms import NormalAction
from eqindex.graded_algebra import ExteriorElement, FormMatrix
from eqindex.mehler import (
    MehlerError,
    ModelCurvature,
    display_operator,
    gamma_phi_density,
    mehler_fiber_integral,
    mehler_fiber_terms,
    mehler_fiber_via_kernel,
    mehler_gaussian_kernel,
    mehler_kernel_real,
    resolvent_power_fiber_integral,
)


@given(st.floats(0.3, 5.0), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 2.0))
def test_scalar_mehler_matches_hermite_expansion(b, x, y, t):
    assert abs(mehler_kernel_real([[b]], x, y, t) - oracles.hermite_kernel(b, x, y, t)) < 1e-9


def test_zero_potential_is_heat_kernel():
    v = mehler_kernel_real([[0.0]], 0.3, -0.2, 0.5)
    assert abs(v - math.exp(-0.25 / 2) / math.sqrt(2 * math.pi)) < 1e-14


def test_semigroup_property():
    K = lambda u, v, s: mehler_kernel_real([[2.0]], u, v, s)  # noqa: E731
    assert oracles.semigroup_defect(K, 0.4, -0.7, 0.3, 0.6) < 1e-8


def test_kernel_rejects_bad_input():
    with pytest.raises(MehlerError):
        mehler_kernel_real([[1.0]], 0, 0, 0)
    with pytest.raises(MehlerError):
        mehler_kernel_real([[-1.0]], 0, 0, 1)


@given(st.integers(0, 10_000))
def test_display_kernel_solves_heat_equation(seed):
    R = random_antisym(2, 2, random.Random(seed))
    K = mehler_gaussian_kernel(R)
    assert not (K.apply_operator(display_operator(R)) + K.d_t()).expanded().terms


@pytest.mark.parametrize("choice", NORMAL_CHOICES[:6])
def test_fiber_closed_form_equals_kernel_integral(choice):
    n, a, angles = choice
    mc = random_model_curvature(n, a, angles, random.Random(hash(tuple(angles)) % 997 + n + a))
    closed, via = mehler_fiber_terms(mc), mehler_fiber_via_kernel(mc)
    for p in set(closed) | set(via):
        assert closed.get(p, ExteriorElement.zero(n)) == via.get(p, ExteriorElement.zero(n))


def test_gamma_density_flat_rotation():
    mc = ModelCurvature.flat(0, NormalAction(["pi/3"]))
    assert gamma_phi_density(ExteriorElement.one(2), mc) == -sympy.I


def test_gamma_density_requires_even_a():
    mc = ModelCurvature.flat(0, NormalAction(["pi/3"]))
    with pytest.raises(MehlerError):
        gamma_phi_density(ExteriorElement.one(2), mc, a_dim=1)


def test_flat_fiber_integral_is_gaussian_normalisation():
    mc = ModelCurvature.flat(2, NormalAction([]))
    val = mehler_fiber_integral(mc, 2)
    assert sympy.simplify(S.as_sympy(val.scalar_part) - 1 / (8 * sympy.pi)) == 0


def test_resolvent_power_scaling():
    mc = ModelCurvature.flat(2, NormalAction([]))
    base = mehler_fiber_integral(mc, 3)
    assert resolvent_power_fiber_integral(mc, 2, 3) == base.scale(S.rational(9, 2))


def test_block_sizes_checked():
    with pytest.raises(MehlerError):
        ModelCurvature(FormMatrix.zeros(2, 4), None, NormalAction([]))
