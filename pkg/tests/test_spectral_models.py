import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqindex.equivariant_index import GroupWord, sphere_character
from eqindex.spectral_models import (
    Level,
    SpectralError,
    SpectralModel,
    TorusModel,
    TrigOperator,
    build_sphere_model,
    build_torus_model,
    fit_asymptotic_orders,
    heat_supertrace,
    jlo_bracket,
    jlo_numeric,
    richardson,
    rotation_gid,
    simplex_rule,
    sphere_kernel_character,
    translation_gid,
)


# ------------------------------------------------------------------- sphere

def test_sphere_dirac_spectrum():
    # |lambda| = 1, 2, 3, ... with multiplicity 2|lambda| per chirality
    m = build_sphere_model(4, 0)
    assert [(round(L.lam, 9), L.dim_plus, L.dim_minus) for L in m.levels] == \
        [(1.0, 2, 2), (2.0, 4, 4), (3.0, 6, 6), (4.0, 8, 8), (5.0, 10, 10)]
    assert m.index() == 0


def test_monopole_spectrum_and_kernel():
    m = build_sphere_model(4, 2, ["pi/2"])
    assert m.kernel_dims() == (2, 0)
    lams = [L.lam ** 2 for L in m.levels[1:4]]
    assert np.allclose(lams, [3, 8, 15])
    assert abs(sphere_kernel_character(m, "pi/2") - math.sqrt(2)) < 1e-12
    assert build_sphere_model(4, -2).kernel_dims() == (0, 2)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_kernel_character_matches_weights(k):
    m = build_sphere_model(6, k, ["pi/3", "2*pi/3"])
    for th in ("pi/3", "2*pi/3"):
        assert abs(sphere_kernel_character(m, th) - sphere_character(th, k)) < 1e-10


def test_mckean_singer_sphere():
    m = build_sphere_model(10, 1, ["pi/2"])
    for g in m.group_elements:
        ref, _ = heat_supertrace(m, g, 5.0)
        for t in (0.05, 0.3, 1.0):
            val, bound = heat_supertrace(m, g, t)
            assert abs(val - ref) <= 2 * bound + 1e-10


def test_json_round_trip():
    m = build_sphere_model(5, 1, ["pi/3"])
    back = SpectralModel.from_json(m.to_json())
    assert back.to_json() == m.to_json()
    for t in (0.1, 1.0):
        assert heat_supertrace(back, rotation_gid("pi/3"), t) == pytest.approx(heat_supertrace(m, rotation_gid("pi/3"), t))


def test_asymmetric_level_rejected():
    with pytest.raises(SpectralError):
        SpectralModel([Level(1.0, 2, 1, {})], 1)
    with pytest.raises(SpectralError):
        SpectralModel([Level(1.0, 1, 1, {"g": (1.0, -1.0)})], 1)


def test_nonpositive_t_rejected():
    with pytest.raises(SpectralError):
        heat_supertrace(build_sphere_model(2, 0), "e", 0.0)


# -------------------------------------------------------------------- torus

FOURIER = {(1, 0): 1.0, (0, -1): 0.5j}


@pytest.mark.parametrize("ss", ["pp", "pa", "ap", "aa"])
def test_torus_supertrace_vanishes(ss):
    m = build_torus_model(6, ss, (0.25, 0.5))
    for g in m.group_elements:
        assert abs(heat_supertrace(m, g, 0.1)[0]) < 1e-12


def test_torus_kernel_only_for_periodic_structure():
    assert build_torus_model(4, "pp").kernel_dims() == (1, 1)
    assert build_torus_model(4, "aa").kernel_dims() == (0, 0)


def test_dirac_commutator_is_clifford_df():
    m = TorusModel(6)
    D = m.dirac_matrix().toarray()
    F = m.function_matrix(FOURIER).toarray()
    C = m.clifford_df_matrix(FOURIER).toarray()
    # away from the truncation boundary [D, f] = c(df)
    inner = np.repeat(np.max(np.abs(m.modes), axis=1) <= 4, 2)
    comm = (D @ F - F @ D)[np.ix_(inner, inner)]
    assert np.max(np.abs(comm - C[np.ix_(inner, inner)])) < 1e-12


def test_trig_operator_matches_sparse_matrix():
    m = TorusModel(5)
    assert abs(TrigOperator.function(FOURIER).matrix(m) - m.function_matrix(FOURIER)).max() < 1e-15
    assert abs(TrigOperator.clifford_df(FOURIER).matrix(m) - m.clifford_df_matrix(FOURIER)).max() < 1e-15


def test_structured_bracket_matches_sparse_path():
    m = TorusModel(6)
    ops = [TrigOperator.function({(-1, -1): 1}), TrigOperator.clifford_df({(1, 0): 1}),
           TrigOperator.clifford_df({(0, 1): 1})]
    fast, _ = jlo_bracket(m, ops, 0.05, simplex_nodes=36, estimate=False)
    slow, _ = jlo_bracket(m, [X.matrix(m) for X in ops], 0.05, simplex_nodes=36, estimate=False)
    assert abs(fast - slow) < 1e-10


def test_jlo_q0_is_heat_supertrace():
    m = TorusModel(6)
    val, _ = jlo_numeric(m, GroupWord.trivial(["f"]), 0, 0.1, functions={"f": FOURIER})
    ref, _ = heat_supertrace(m, "e", 0.1, P=m.function_matrix(FOURIER))
    assert abs(val - ref) < 1e-12


def test_bracket_graded_cyclicity():
    # <X0, X1, X2> = -<X2, X0, X1> for odd X2
    m = TorusModel(10)
    X0 = TrigOperator.function({(-1, -1): 1, (0, 1): 0.3})
    X1 = TrigOperator.clifford_df({(1, 0): 1})
    X2 = TrigOperator.clifford_df({(0, 1): 1, (-1, 0): 0.2})
    a, _ = jlo_bracket(m, [X0, X1, X2], 0.02, simplex_nodes=400, estimate=False)
    b, _ = jlo_bracket(m, [X2, X0, X1], 0.02, simplex_nodes=400, estimate=False)
    assert abs(a + b) < 1e-8


def test_jlo_missing_data():
    m = TorusModel(3)
    with pytest.raises(SpectralError):
        jlo_numeric(m, GroupWord.trivial(["a", "b", "c"]), 1, 0.1, functions={"a": {}})
    with pytest.raises(SpectralError):
        jlo_numeric(m, GroupWord.trivial(["a"]), 1, 0.1, functions={"a": {}})


def test_translation_characters():
    m = build_torus_model(4, "pp", (0.5, 0.0))
    g = translation_gid((0.5, 0.0))
    # first nonzero shell |xi| = 1: modes (+-1, 0) give -1, (0, +-1) give +1
    L = m.levels[1]
    assert L.characters[g][0] == pytest.approx(0.0)


# ----------------------------------------------------------- quadrature/fit

@pytest.mark.parametrize("m", [1, 2, 3])
def test_simplex_rule_weights(m):
    _, w = simplex_rule(m, 4)
    assert abs(w.sum() - 1 / math.factorial(m)) < 1e-14


def test_simplex_rule_dirichlet_moments():
    # int_{Delta_2} s0 s1^2 ds = 1! 2! / 5!
    pts, w = simplex_rule(2, 6)
    assert abs(w @ (pts[:, 0] * pts[:, 1] ** 2) - 2 / 120) < 1e-14
    assert np.allclose(pts.sum(axis=1), 1)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_richardson_exact_on_polynomials(coeffs):
    ts = [0.4, 0.2, 0.1, 0.05][: len(coeffs)]
    vals = [sum(c * t ** k for k, c in enumerate(coeffs)) for t in ts]
    assert abs(richardson(ts, vals) - coeffs[0]) < 1e-9 * (1 + max(map(abs, coeffs)))


def test_richardson_rejects_repeats():
    with pytest.raises(ValueError):
        richardson([0.1, 0.1], [1, 2])


def test_fit_recovers_power_law():
    ts = [0.08, 0.04, 0.02, 0.01]
    rep = fit_asymptotic_orders([(t, 3 * t ** -1.5 + 2 * t ** -1) for t in ts], -1.5)
    assert rep.coefficients[0] == pytest.approx(3)
    assert rep.coefficients[1] == pytest.approx(2)
    assert rep.residual < 1e-9


def test_fit_requires_geometric_grid():
    with pytest.raises(ValueError):
        fit_asymptotic_orders([(t, 1.0) for t in (0.1, 0.2, 0.25, 0.4)], -1)


def test_torus_weyl_exponent():
    m = build_torus_model(90, "pp")
    ts = [0.004, 0.002, 0.001, 0.0005]
    rep = fit_asymptotic_orders([(t, heat_supertrace(m, "e", t, graded=False)[0]) for t in ts], -1)
    # Tr e^{-t D^2} ~ 2 / (4 pi t)
    assert rep.exponent == pytest.approx(-1, abs=1e-3)
    assert rep.coefficients[0] == pytest.approx(2 / (4 * math.pi), rel=1e-8)
