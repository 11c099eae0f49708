import math
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, strategies as st

from eqindex import oracles
from eqindex import scalars as S
from eqindex.acceptance import TORUS_FUNCTIONS, _fourier_callables, _reflection_word, torus_identity_stratum
from eqindex.char_forms import NormalAction
from eqindex.equivariant_index import (
    FixedPointStratum,
    GroupWord,
    MissingJetError,
    StratumError,
    StratumNode,
    cm_cocycle,
    cm_constants,
    equivariant_index,
    flat_stratum_from_functions,
    gamma_phi_volterra,
    jlo_limit,
    sphere_character,
    sphere_rotation_strata,
    spin_lift_consistency,
)
from eqindex.graded_algebra import ExteriorElement, FormMatrix
from eqindex.mehler import ModelCurvature

ANGLES = ["pi/7", "pi/6", "pi/4", "pi/3", "pi/2", "2*pi/3", "5*pi/6", "pi"]
TRIVIAL = GroupWord.trivial(["f0", "f1", "f2"])


@pytest.mark.parametrize("theta", ANGLES)
def test_untwisted_sphere_index_vanishes(theta):
    assert equivariant_index(sphere_rotation_strata(theta, 0), 2) == 0


@pytest.mark.parametrize("k", [-2, 0, 1, 2, 3])
def test_identity_stratum_gives_degree(k):
    assert equivariant_index(sphere_rotation_strata(0, k), 2) == k


@pytest.mark.parametrize("theta", ["pi/3", "pi/2", "2*pi/3"])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_twisted_sphere_index_is_character(theta, k):
    v = complex(sympy.N(equivariant_index(sphere_rotation_strata(theta, k), 2), 30))
    assert abs(v - sphere_character(theta, k)) < 1e-12


def test_spin_lift_defect_zero():
    for angles, a in ((["pi/3"], 0), (["pi/2", "pi"], 2)):
        assert spin_lift_consistency(NormalAction(angles), a) == 0


def test_spin_lift_detects_sign_flip(flipped_clifford_sign):
    assert spin_lift_consistency(NormalAction(["pi/2"]), 0) > 1


# frozen from the closed form (-1)^|a| (q-1)! |a|! / (a! prod (a_j + j))
@pytest.mark.parametrize("q, alpha, value", [
    (1, [0, 0], Fraction(1, 2)),
    (1, [1, 0], Fraction(-1, 4)),
    (1, [0, 1], Fraction(-1, 3)),
    (2, [0, 0, 0, 0], Fraction(1, 24)),
    (2, [1, 1, 0, 0], Fraction(2, 2 * 3 * 3 * 4)),
])
def test_cm_constants_frozen(q, alpha, value):
    assert cm_constants(q, alpha) == value


@pytest.mark.parametrize("q", range(1, 7))
def test_cm_constant_at_zero(q):
    assert cm_constants(q, [0] * (2 * q)) == Fraction(math.factorial(q - 1), math.factorial(2 * q))


def test_cm_constants_validation():
    with pytest.raises(ValueError):
        cm_constants(0, [])
    with pytest.raises(ValueError):
        cm_constants(1, [0])
    with pytest.raises(ValueError):
        cm_constants(1, [0, -1])


def test_cm_identity_matches_quadrature():
    with S.precision("f64"):
        v = complex(cm_cocycle(1, TRIVIAL, [torus_identity_stratum(TORUS_FUNCTIONS)], 2))
    f0, _ = _fourier_callables(TORUS_FUNCTIONS["f0"])
    _, g1 = _fourier_callables(TORUS_FUNCTIONS["f1"])
    _, g2 = _fourier_callables(TORUS_FUNCTIONS["f2"])
    assert abs(v - oracles.torus_cm_quadrature(f0, g1, g2, npts=40)) < 1e-10
    # f0 = e^{-2 pi i (x+y)}, df1 ^ df2 = (2 pi i)^2 e^{2 pi i (x+y)}: value i pi
    assert abs(v - 1j * math.pi) < 1e-10


def test_cm_quadrature_refinement_stable():
    with S.precision("f64"):
        coarse = complex(cm_cocycle(1, TRIVIAL, [torus_identity_stratum(TORUS_FUNCTIONS, npts=8)], 2))
        fine = complex(cm_cocycle(1, TRIVIAL, [torus_identity_stratum(TORUS_FUNCTIONS, npts=24)], 2))
    assert abs(coarse - fine) < 1e-12


@given(st.integers(-3, 3), st.integers(-3, 3))
def test_cm_linear_in_f0(a, b):
    fns = dict(TORUS_FUNCTIONS)
    fns["g"] = {(-1, -1): a, (0, 0): b}
    word = GroupWord.trivial(["g", "f1", "f2"])
    with S.precision("f64"):
        v = complex(cm_cocycle(1, word, [torus_identity_stratum(fns, npts=8)], 2))
    assert abs(v - a * 1j * math.pi) < 1e-9


def test_jlo_limit_equals_cm_density():
    with S.precision("f64"):
        st_ = torus_identity_stratum(TORUS_FUNCTIONS, npts=8)
        assert jlo_limit(1, TRIVIAL, [st_], 2) == cm_cocycle(1, TRIVIAL, [st_], 2)


def test_q0_cocycle_is_index():
    strata = sphere_rotation_strata("pi/2", 3)
    for s in strata:
        for node in s.nodes:
            node.function_jets = {"one": (1, [])}
    assert cm_cocycle(0, GroupWord.trivial(["one"]), strata, 2) == equivariant_index(sphere_rotation_strata("pi/2", 3), 2)


def _point_strata(jets):
    mc = ModelCurvature(None, FormMatrix.zeros(2, 2), NormalAction(["pi"]))
    return [FixedPointStratum(0, [StratumNode(1, mc, None, jets)])]


def test_top_degree_forms_vanish_off_identity():
    jets = {fid: (sympy.Rational(1, 3), []) for fid in ("f0", "f1", "f2", "f0r", "f1r", "f2r")}
    assert cm_cocycle(1, _reflection_word(), _point_strata(jets), 2) == 0


def test_missing_jet_raises():
    with pytest.raises(MissingJetError):
        cm_cocycle(1, _reflection_word(), _point_strata({"f0": (1, [])}), 2)


def test_full_dimensional_stratum_needs_identity():
    with pytest.raises(StratumError):
        cm_cocycle(1, _reflection_word(), [torus_identity_stratum(TORUS_FUNCTIONS, npts=2)], 2)


def test_word_length_checked():
    with pytest.raises(StratumError):
        cm_cocycle(1, GroupWord.trivial(["f0", "f1"]), [torus_identity_stratum(TORUS_FUNCTIONS, npts=2)], 2)


def test_group_word_tables():
    with pytest.raises(StratumError):
        GroupWord([("f", "a")], {("a", "a"): "b"})
    w = _reflection_word()
    assert w.composite() == "r"
    assert w.hat_functions() == ["f0", "f1r", "f2r"]


def test_stratum_validation():
    mc = ModelCurvature.flat(0, NormalAction(["pi"]))
    with pytest.raises(StratumError):
        FixedPointStratum(1, [StratumNode(1, mc)])
    with pytest.raises(StratumError):
        FixedPointStratum(0, [StratumNode(2, mc)])
    with pytest.raises(StratumError):
        FixedPointStratum(0, [])
    with pytest.raises(StratumError):
        equivariant_index([FixedPointStratum(0, [StratumNode(1, mc)])], 4)


def test_gamma_phi_volterra_flat_point():
    # I = 1/det(1 - phi) for the flat quarter turn, density (-i) * sqrt(2) * 1/2
    I = ExteriorElement.scalar(2, sympy.Rational(1, 2))
    v = gamma_phi_volterra(I, NormalAction(["pi/2"]), [[1]], 0, 2)
    assert sympy.simplify(v + sympy.I * sympy.sqrt(2) / 2) == 0


def test_gamma_phi_volterra_matrix_trace():
    I = [[ExteriorElement.scalar(2, 1), ExteriorElement.zero(2)],
         [ExteriorElement.zero(2), ExteriorElement.scalar(2, 2)]]
    v = gamma_phi_volterra(I, NormalAction(["pi"]), [[1, 0], [0, -1]], 0, 2)
    # (-i) * 2 * (1 - 2)
    assert v == 2 * sympy.I


def test_flat_stratum_builder():
    st_ = flat_stratum_from_functions(2, [(0.0, 0.0)], [1.0], {"c": (lambda x, y: 2.0, lambda x, y: (0.0, 0.0))})
    assert st_.nodes[0].jet("c")[0] == 2.0
