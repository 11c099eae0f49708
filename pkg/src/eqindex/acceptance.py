"""Acceptance suite: twelve end-to-end checks with their tolerances and time budgets."""
import math
import random
import time
from dataclasses import dataclass, field

import sympy

from . import oracles
from . import scalars as S
from .char_forms import NormalAction, TwistData, curvature_from_two_forms
from .equivariant_index import (
    FixedPointStratum,
    GroupWord,
    StratumNode,
    cm_constants,
    cm_cocycle,
    equivariant_index,
    flat_stratum_from_functions,
    jlo_limit,
    sphere_rotation_strata,
    spin_lift_consistency,
)
from .graded_algebra import ExteriorElement, FormMatrix
from .mehler import (
    ModelCurvature,
    leading_slot_coefficient,
    mehler_fiber_terms,
    mehler_fiber_via_kernel,
    mehler_kernel_real,
)
from .spectral_models import (
    build_sphere_model,
    build_torus_model,
    fit_asymptotic_orders,
    heat_supertrace,
    jlo_numeric,
    richardson,
    rotation_gid,
    sphere_kernel_character,
    translation_gid,
)
from .volterra import (
    GetzlerOperator,
    asymptotic_coefficients,
    expected_lichnerowicz_model,
    getzler_order_and_model,
    heat_parametrix,
    random_curvature_tensor,
    schrodinger,
    synthetic_lichnerowicz,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    tolerance: str
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] criterion {self.number:2d} {self.name}: measured {self.measured}; "
                f"tolerance {self.tolerance}; {self.seconds:.2f}s")

    def as_dict(self):
        return {"name": f"{self.number:02d}-{self.name}", "pass": bool(self.passed),
                "detail": {"measured": self.measured, "tolerance": self.tolerance,
                           "seconds": round(self.seconds, 3), **self.detail}}


# ------------------------------------------------------------------ data

SPHERE_ANGLES = ["pi/6", "pi/3", "pi/2", "2*pi/3", "pi"]
TWIST_ANGLES = ["pi/3", "pi/2"]

TORUS_FUNCTIONS = {
    "f0": {(-1, -1): 1},
    "f1": {(1, 0): 1},
    "f2": {(0, 1): 1},
}
JLO_GRID = [0.4, 0.2, 0.1, 0.05]
JLO_SMALL_GRID = [0.004, 0.002, 0.001, 0.0005]
LOCALIZATION_GRID = [0.004, 0.002, 0.001, 0.0005]


def _fourier_callables(fourier):
    def f(x, y):
        return sum(c * complex(math.cos(2 * math.pi * (n[0] * x + n[1] * y)),
                               math.sin(2 * math.pi * (n[0] * x + n[1] * y))) for n, c in fourier.items())

    def g(x, y):
        out = [0j, 0j]
        for n, c in fourier.items():
            e = c * complex(math.cos(2 * math.pi * (n[0] * x + n[1] * y)),
                            math.sin(2 * math.pi * (n[0] * x + n[1] * y)))
            out[0] += 2j * math.pi * n[0] * e
            out[1] += 2j * math.pi * n[1] * e
        return out
    return f, g


def torus_identity_stratum(functions, npts=16):
    pts = [((i + 0.5) / npts, (j + 0.5) / npts) for i in range(npts) for j in range(npts)]
    w = [1.0 / npts ** 2] * len(pts)
    return flat_stratum_from_functions(2, pts, w, {fid: _fourier_callables(f) for fid, f in functions.items()})


def random_two_form(n, rng, dims=None, bound=3):
    dims = dims or list(range(1, n + 1))
    terms = {}
    for i in dims:
        for j in dims:
            if i < j and rng.random() < 0.5:
                terms[(i, j)] = sympy.Rational(rng.randint(-bound, bound), rng.randint(1, bound))
    return ExteriorElement(n, {k: v for k, v in terms.items() if v != 0})


def random_antisym(size, n, rng):
    pairs = [(i, j, random_two_form(n, rng)) for i in range(size) for j in range(i + 1, size)]
    return curvature_from_two_forms(pairs, size, n)


NORMAL_CHOICES = [(2, 0, ["pi/2"]), (2, 0, ["pi"]), (4, 2, ["pi/2"]), (4, 2, ["pi"]),
                  (4, 0, ["pi/2", "pi"]), (4, 0, ["pi", "pi"]), (6, 4, ["pi/2"]),
                  (6, 2, ["pi/2", "pi"]), (6, 2, ["pi", "pi"]), (6, 4, ["pi"])]


def random_model_curvature(n, a, angles, rng):
    """Random nilpotent (R', R'') with R'' commuting with phi^N."""
    normal = NormalAction(angles)
    Rp = random_antisym(a, n, rng) if a else None
    b = normal.size
    if all(S.angle_value(th) == S.angle_value("pi") for th in angles):
        Rpp = random_antisym(b, n, rng)
    else:
        pairs = [(2 * j, 2 * j + 1, random_two_form(n, rng)) for j in range(len(angles))]
        Rpp = curvature_from_two_forms(pairs, b, n)
    mc = ModelCurvature(Rp, Rpp, normal)
    if not mc.commutes_with_normal():
        raise AssertionError("random R'' does not commute with the normal action")
    return mc


def random_odd_model_operator(n, rng):
    """Homogeneous operator of odd Getzler order built from forms, x and d."""
    target = rng.choice([1, 3])
    out = GetzlerOperator(n)
    while out.is_zero():
        for _ in range(rng.randint(1, 3)):
            while True:
                nf = rng.randint(0, min(n, 3))
                nd = rng.randint(0, 2)
                nx = nf + nd - target
                if 0 <= nx <= 2:
                    break
            op = GetzlerOperator.scalar(n, sympy.Rational(rng.randint(1, 5), rng.randint(1, 3)))
            if nf:
                idx = tuple(sorted(rng.sample(range(1, n + 1), nf)))
                op = op @ GetzlerOperator.form(ExteriorElement(n, {idx: 1}))
            for _ in range(nx):
                op = op @ GetzlerOperator.x(n, rng.randint(1, n))
            for _ in range(nd):
                op = op @ GetzlerOperator.d(n, rng.randint(1, n))
            out = out + op
    return out


# -------------------------------------------------------------- criteria

def criterion_1():
    worst_idx, worst_heat, worst_lift = 0.0, 0.0, 0.0
    model = build_sphere_model(4, 0, SPHERE_ANGLES)
    heat_ok = True
    for th in SPHERE_ANGLES:
        v = equivariant_index(sphere_rotation_strata(th, 0), 2)
        worst_idx = max(worst_idx, abs(complex(v)))
        worst_lift = max(worst_lift, spin_lift_consistency(NormalAction([th]), 0))
        for t in (0.1, 1.0):
            val, bound = heat_supertrace(model, rotation_gid(th), t)
            worst_heat = max(worst_heat, abs(val))
            heat_ok &= abs(val) <= bound + 1e-12
    ok = worst_idx < 1e-10 and heat_ok and worst_lift < 1e-12
    return ok, f"max|index|={worst_idx:.3g}, max|Str|={worst_heat:.3g}, lift defect={worst_lift:.3g}", \
        "|index|<1e-10, |Str|<=bound, lift defect<1e-12, <5s", 5.0, {}


def criterion_2():
    worst = 0.0
    rows = []
    for k in (1, 2, 3):
        model = build_sphere_model(12, k, TWIST_ANGLES)
        for th in TWIST_ANGLES:
            v = complex(sympy.N(equivariant_index(sphere_rotation_strata(th, k), 2), 30))
            oracle = sphere_kernel_character(model, th)
            worst = max(worst, abs(v - oracle))
            rows.append([k, th, v.real, oracle.real])
    return worst < 1e-8, f"max deviation {worst:.3g}", "1e-8, <30s", 30.0, {"rows": rows}


def criterion_3():
    mism = []
    with S.precision("exact"):
        for V in (0, 1, 3):
            L = schrodinger(2, {(0, 0): V})
            q = heat_parametrix(L, 8)
            coeffs = asymptotic_coefficients(q, None, 2, 3)
            expect = oracles.schrodinger_heat_coefficients(V, 3)
            for j in range(4):
                got = sympy.simplify(S.as_sympy(coeffs[j].scalar_part) - expect[j])
                if got != 0 or any(d != 0 for d in coeffs[j].degrees() if d):
                    mism.append((V, j))
    return not mism, f"{12 - len(mism)}/12 exact matches", "exact rational equality", None, {}


def criterion_4():
    rng = random.Random(4)
    worst_h, worst_s = 0.0, 0.0
    for _ in range(5):
        b = rng.uniform(0.5, 6)
        x, y, t = rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.3, 2.0)
        worst_h = max(worst_h, abs(mehler_kernel_real([[b]], x, y, t) - oracles.hermite_kernel(b, x, y, t, modes=60)))
        K = (lambda b: lambda u, v, s: mehler_kernel_real([[b]], u, v, s))(b)
        worst_s = max(worst_s, oracles.semigroup_defect(K, x, y, t / 2, t / 2))
    ok = worst_h < 1e-8 and worst_s < 1e-6
    return ok, f"hermite {worst_h:.3g}, semigroup {worst_s:.3g}", "1e-8 / 1e-6, <5s", 5.0, {}


def criterion_5():
    rng = random.Random(5)
    bad = []
    with S.precision("exact"):
        for i, (n, a, angles) in enumerate(NORMAL_CHOICES):
            mc = random_model_curvature(n, a, angles, rng)
            closed = mehler_fiber_terms(mc)
            via = mehler_fiber_via_kernel(mc)
            keys = set(closed) | set(via)
            for p in keys:
                lhs = closed.get(p, ExteriorElement.zero(n))
                rhs = via.get(p, ExteriorElement.zero(n))
                if not (lhs - rhs).is_zero():
                    bad.append(i)
                    break
    return not bad, f"{len(NORMAL_CHOICES) - len(bad)}/{len(NORMAL_CHOICES)} exact", "exact equality", None, {}


def criterion_6():
    rng = random.Random(6)
    bad = []
    with S.precision("exact"):
        for i in range(5):
            n = rng.choice([2, 4])
            R = random_curvature_tensor(n, rng)
            F = [[0] * n for _ in range(n)]
            for p in range(n):
                for q in range(p + 1, n):
                    v = sympy.Rational(rng.randint(-3, 3), rng.randint(1, 3))
                    F[p][q], F[q][p] = v, -v
            order, model = getzler_order_and_model(synthetic_lichnerowicz(R, F))
            if order != 2 or not (model == expected_lichnerowicz_model(R, F)):
                bad.append(i)
    return not bad, f"{5 - len(bad)}/5 models exact, order 2", "exact", None, {}


def criterion_7():
    rng = random.Random(7)
    nonzero = []
    with S.precision("exact"):
        for i in range(20):
            n, a, angles = rng.choice([(2, 0, ["pi/2"]), (2, 2, []), (4, 2, ["pi"]), (4, 4, [])])
            if angles:
                mc = random_model_curvature(n, a, angles, rng)
            else:
                mc = ModelCurvature(random_antisym(a, n, rng), None, NormalAction([]))
            P = random_odd_model_operator(n, rng)
            val, m = leading_slot_coefficient(P, mc)
            if m is not None and m % 2 == 0:
                raise AssertionError("generated operator is not of odd order")
            if sympy.simplify(val) != 0:
                nonzero.append(i)
    return not nonzero, f"{20 - len(nonzero)}/20 slots exactly 0", "exact 0", None, {}


def shipped_models():
    out = []
    for k in (0, 1, 2, 3):
        out.append((f"sphere k={k}", build_sphere_model(12, k, SPHERE_ANGLES)))
    for ss in ("pp", "pa", "ap", "aa"):
        out.append((f"torus {ss}", build_torus_model(20, ss, [(0.5, 0.5), (0.25, 0.0)])))
    return out


def criterion_8():
    worst = 0.0
    ok = True
    for _, model in shipped_models():
        for g in model.group_elements:
            vals, bounds = zip(*(heat_supertrace(model, g, t) for t in (0.05, 0.5, 5)))
            spread = max(abs(u - v) for u in vals for v in vals)
            worst = max(worst, spread)
            ok &= spread < 1e-10 + 2 * max(bounds)
    return ok, f"max spread {worst:.3g}", "spread < 1e-10 + truncation bounds", None, {}


def _jlo_series(kmax, grid, nodes):
    model = build_torus_model(kmax, "pp")
    word = GroupWord.trivial(["f0", "f1", "f2"])
    vals = [jlo_numeric(model, word, 1, t, nodes, TORUS_FUNCTIONS)[0] for t in grid]
    return vals, richardson(grid, vals)


def jlo_limit_value():
    with S.precision("f64"):
        st = torus_identity_stratum(TORUS_FUNCTIONS)
        return complex(jlo_limit(1, GroupWord.trivial(["f0", "f1", "f2"]), [st], 2))


def criterion_9():
    target = jlo_limit_value()
    vals, ext = _jlo_series(20, JLO_GRID, 200)
    err = abs(ext - target)
    _, ext_small = _jlo_series(90, JLO_SMALL_GRID, 200)
    err_small = abs(ext_small - target)
    detail = {"grid": JLO_GRID, "values": [[v.real, v.imag] for v in vals],
              "extrapolated": [ext.real, ext.imag], "jlo_limit": [target.real, target.imag],
              "small_grid": JLO_SMALL_GRID, "small_grid_error": err_small}
    return err < 1e-4, f"|extrap - limit| = {err:.3g} (grid {JLO_GRID}); small-t grid error {err_small:.3g}", \
        "1e-4, <60s", 60.0, detail


def _reflection_word():
    compose = {("e", "e"): "e", ("e", "r"): "r", ("r", "e"): "r", ("r", "r"): "e"}
    pull = {("f1", "r"): "f1r", ("f2", "r"): "f2r", ("f0", "r"): "f0r"}
    return GroupWord([("f0", "r"), ("f1", "e"), ("f2", "e")], compose, pull)


def criterion_10():
    # composite != id: x -> -x on T^2, four isolated fixed points with angle pi
    word = _reflection_word()
    assert word.composite() == "r"
    strata = []
    with S.precision("exact"):
        for p in [(0, 0), (S.rational(1, 2), 0), (0, S.rational(1, 2)), (S.rational(1, 2), S.rational(1, 2))]:
            mc = ModelCurvature(None, FormMatrix.zeros(2, 2), NormalAction(["pi"]))
            jets = {fid: (sympy.Rational(1, 3), []) for fid in ("f0", "f1", "f2", "f1r", "f2r")}
            strata.append(FixedPointStratum(0, [StratumNode(1, mc, None, jets)]))
        v_off = cm_cocycle(1, word, strata, 2)
    exact_zero = v_off == 0
    # composite = id
    with S.precision("f64"):
        st = torus_identity_stratum(TORUS_FUNCTIONS)
        v_id = complex(cm_cocycle(1, GroupWord.trivial(["f0", "f1", "f2"]), [st], 2))
    f0, _ = _fourier_callables(TORUS_FUNCTIONS["f0"])
    _, g1 = _fourier_callables(TORUS_FUNCTIONS["f1"])
    _, g2 = _fourier_callables(TORUS_FUNCTIONS["f2"])
    ref = oracles.torus_cm_quadrature(f0, g1, g2, npts=48)
    err = abs(v_id - ref)
    return exact_zero and err < 1e-8, f"off-identity value {v_off}; |cm - quadrature| = {err:.3g}", \
        "exact 0 / 1e-8", None, {"cm_identity": [v_id.real, v_id.imag]}


def criterion_11():
    bad = [q for q in range(1, 7)
           if cm_constants(q, [0] * (2 * q)) / math.factorial(q - 1) != sympy.Rational(1, math.factorial(2 * q))]
    return not bad, f"{6 - len(bad)}/6 exact", "exact", None, {}


def criterion_12():
    model = build_torus_model(90, "pp", (0.5, 0.5))
    g = translation_gid((0.5, 0.5))
    samples = [(t, heat_supertrace(model, g, t, graded=False)[0]) for t in LOCALIZATION_GRID]
    rep = fit_asymptotic_orders(samples, -1)
    return rep.negative_power_max < 1e-8, f"max |negative-power coefficient| = {rep.negative_power_max:.3g}", \
        "1e-8", None, {"fit": rep.as_dict()}


CRITERIA = [
    (1, "atiyah-bott-cancellation", {"sphere", "index"}, criterion_1),
    (2, "twisted-equivariant-index", {"sphere", "index"}, criterion_2),
    (3, "parametrix-vs-exact-kernel", {"volterra"}, criterion_3),
    (4, "mehler-oracle", {"mehler"}, criterion_4),
    (5, "fiber-integral-identity", {"mehler", "volterra"}, criterion_5),
    (6, "getzler-model-lichnerowicz", {"volterra"}, criterion_6),
    (7, "odd-order-vanishing", {"mehler", "volterra"}, criterion_7),
    (8, "mckean-singer-constancy", {"spectral"}, criterion_8),
    (9, "jlo-limit", {"jlo", "spectral"}, criterion_9),
    (10, "cm-top-degree", {"cm"}, criterion_10),
    (11, "cm-constants", {"cm"}, criterion_11),
    (12, "localization", {"spectral"}, criterion_12),
]


def selected(filter_name=None):
    if not filter_name:
        return list(CRITERIA)
    f = filter_name.lower()
    return [c for c in CRITERIA if f in c[1] or f in c[2] or f == str(c[0])]


def run_criterion(entry):
    number, name, _, fn = entry
    t0 = time.perf_counter()
    try:
        ok, measured, tol, budget, detail = fn()
    except Exception as exc:  # reported, not swallowed
        return CriterionResult(number, name, False, f"error: {exc!r}", "-", time.perf_counter() - t0)
    dt = time.perf_counter() - t0
    if budget is not None and dt > budget:
        ok = False
        measured += f" (over time budget {budget}s)"
    return CriterionResult(number, name, bool(ok), measured, tol, dt, detail)


def run_acceptance(filter_name=None, echo=None):
    results = []
    for entry in selected(filter_name):
        r = run_criterion(entry)
        if echo:
            echo(r.line())
        results.append(r)
    return results
