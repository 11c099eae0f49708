import random

import pytest
import sympy
from hypothesis import given, strategies as st

from eqindex import oracles
from eqindex import scalars as S
from eqindex.acceptance import random_antisym, random_two_form
from eqindex.char_forms import (
    NormalAction,
    SingularNormalError,
    TwistData,
    a_hat,
    ch_phi,
    curvature_from_two_forms,
    det_sqrt_one_minus,
    nu_phi,
)
from eqindex.graded_algebra import ExteriorElement, FormMatrix


def _vol_pair(n):
    w = ExteriorElement(n, {(1, 2): 1, (3, 4): 1})
    return curvature_from_two_forms([(0, 1, w)], 2, n)


def test_a_hat_frozen_value():
    # log A = -(1/48) tr R^2 = (1/24) w^w with w^w = 2 dx1234
    assert a_hat(_vol_pair(4)) == ExteriorElement(4, {(): 1, (1, 2, 3, 4): sympy.Rational(1, 12)})


def test_a_hat_of_empty_block():
    assert a_hat(FormMatrix.zeros(0, 2)) == ExteriorElement.one(2)


def test_nu_phi_flat_reflection():
    assert nu_phi(FormMatrix.zeros(2, 2), NormalAction(["pi"])) == ExteriorElement.scalar(2, sympy.Rational(1, 2))


def test_det_sqrt_positive_branch():
    assert sympy.simplify(det_sqrt_one_minus(NormalAction(["pi/3", "pi/2"])) - sympy.sqrt(2)) == 0


def test_normal_angle_validation():
    with pytest.raises(SingularNormalError):
        NormalAction([0])
    with pytest.raises(ValueError):
        NormalAction(["3*pi/2"])


def test_nu_phi_size_mismatch():
    with pytest.raises(ValueError):
        nu_phi(FormMatrix.zeros(4, 4), NormalAction(["pi"]))


def test_ch_phi_line_bundle():
    n = 2
    F0 = FormMatrix([[ExteriorElement(n, {(1, 2): 3})]], n)
    tw = TwistData(1, F0, [[sympy.I]])
    assert ch_phi(tw) == ExteriorElement(n, {(): sympy.I, (1, 2): -3 * sympy.I})


@given(st.integers(0, 10_000), st.sampled_from([2, 4, 6]))
def test_a_hat_matches_leibniz_oracle(seed, n):
    rng = random.Random(seed)
    R = random_antisym(min(n, 4), n, rng)
    got = a_hat(R)
    ref = oracles.naive_to_element(oracles.a_hat_oracle(oracles.element_to_naive_matrix(R), n), n)
    assert got == ref


@given(st.integers(0, 10_000), st.sampled_from([["pi/2"], ["pi"], ["pi/3"], ["pi", "pi"]]))
def test_nu_phi_matches_leibniz_oracle(seed, angles):
    rng = random.Random(seed)
    n = 4
    normal = NormalAction(angles)
    if len(set(angles)) == 1 and angles[0] == "pi":
        Rpp = random_antisym(normal.size, n, rng)
    else:
        pairs = [(2 * j, 2 * j + 1, random_two_form(n, rng)) for j in range(len(angles))]
        Rpp = curvature_from_two_forms(pairs, normal.size, n)
    got = nu_phi(Rpp, normal)
    phi = [[S.public(c) for c in row] for row in normal.matrix()]
    ref = oracles.naive_to_element(oracles.nu_phi_oracle(oracles.element_to_naive_matrix(Rpp), phi, n), n)
    diff = got - ref
    assert all(sympy.simplify(sympy.sympify(v)) == 0 for v in diff.terms().values())
