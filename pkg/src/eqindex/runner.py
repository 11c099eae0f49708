"""Scenario loading, validation and execution for the command-line front end."""
import contextvars
import csv
import io
import json
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import sympy
import yaml

from . import oracles
from . import scalars as S
from .acceptance import random_model_curvature, NORMAL_CHOICES, torus_identity_stratum
from .equivariant_index import (
    FixedPointStratum,
    GroupWord,
    StratumNode,
    cm_cocycle,
    equivariant_index,
    jlo_limit,
    sphere_rotation_strata,
)
from .char_forms import NormalAction, TwistData, curvature_from_two_forms
from .graded_algebra import ExteriorElement, FormMatrix
from .mehler import ModelCurvature, mehler_fiber_terms, mehler_fiber_via_kernel
from .plotting import plot_series
from .spectral_models import (
    SpectralModel,
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
from .volterra import asymptotic_coefficients, heat_parametrix, schrodinger

SCHEMA_VERSION = 1
KINDS = ("fixed_point_index", "cm_cocycle", "jlo_limit", "heat_trace", "jlo_numeric", "volterra_check")
CSV_COLUMNS = ["scenario", "row", "label", "param_name", "param_value", "value_re", "value_im",
               "value_exact", "error_bound", "reference_re", "reference_im"]


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"field '{field}': {message}")
        self.field = field


# ----------------------------------------------------------------- parsing

def load_scenario(path):
    if not os.path.exists(path):
        raise ScenarioError("config", f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError("config", f"parse error at {where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("config", "top level must be a mapping")
    doc.setdefault("name", os.path.splitext(os.path.basename(path))[0])
    doc["_base"] = os.path.dirname(os.path.abspath(path))
    validate(doc)
    return doc


def number(v, field):
    """Fractions written as 'p/q' stay exact; floats stay floats."""
    if isinstance(v, bool):
        raise ScenarioError(field, "expected a number")
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except ValueError:
            pass
    raise ScenarioError(field, f"expected a number, got {v!r}")


def angle(v, field):
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        try:
            val = float(sympy.sympify(v))
        except (sympy.SympifyError, TypeError):
            raise ScenarioError(field, f"cannot read angle {v!r}") from None
        if not math.isfinite(val):
            raise ScenarioError(field, f"angle {v!r} is not finite")
        return v
    raise ScenarioError(field, f"expected an angle, got {v!r}")


def t_grid(doc, key="t_grid"):
    if key not in doc:
        raise ScenarioError(key, "missing")
    ts = doc[key]
    if not isinstance(ts, list) or not ts:
        raise ScenarioError(key, "must be a non-empty list")
    out = []
    for i, t in enumerate(ts):
        v = float(number(t, f"{key}[{i}]"))
        if not v > 0:
            raise ScenarioError(f"{key}[{i}]", f"t must be > 0, got {t}")
        out.append(v)
    inc = all(b > a for a, b in zip(out, out[1:]))
    dec = all(b < a for a, b in zip(out, out[1:]))
    if not (inc or dec):
        raise ScenarioError(key, "must be strictly sorted")
    return out


def _require(doc, key, kind=None):
    if key not in doc:
        raise ScenarioError(key, "missing")
    v = doc[key]
    if kind is not None and not isinstance(v, kind):
        raise ScenarioError(key, f"expected {kind.__name__}")
    return v


def validate(doc):
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ScenarioError("kind", f"must be one of {', '.join(KINDS)}")
    if "precision" in doc and doc["precision"] not in (S.EXACT, S.F64):
        raise ScenarioError("precision", "must be 'exact' or 'f64'")
    if kind in ("heat_trace", "jlo_numeric"):
        t_grid(doc)
    if kind == "heat_trace":
        _require(doc, "model", dict)
        m = doc["model"]
        if "file" in m:
            path = os.path.join(doc["_base"], m["file"])
            if not os.path.exists(path):
                raise ScenarioError("model.file", f"file not found: {m['file']}")
        elif m.get("type") not in ("sphere", "torus"):
            raise ScenarioError("model.type", "must be 'sphere' or 'torus' (or give model.file)")
    if kind == "fixed_point_index":
        if "sphere" not in doc and "strata" not in doc:
            raise ScenarioError("sphere", "give 'sphere' or inline 'strata'")
        if "sphere" in doc:
            for i, a in enumerate(doc["sphere"].get("angles", [])):
                angle(a, f"sphere.angles[{i}]")
    if kind in ("cm_cocycle", "jlo_limit", "jlo_numeric"):
        _require(doc, "functions", dict)
        _require(doc, "word", list)
        q = doc.get("q", 1)
        if not isinstance(q, int) or q < 0:
            raise ScenarioError("q", "must be an integer >= 0")
        if len(doc["word"]) != 2 * q + 1:
            raise ScenarioError("word", f"needs {2 * q + 1} factors for q={q}")
        for i, f in enumerate(doc["word"]):
            if not isinstance(f, list) or len(f) != 2:
                raise ScenarioError(f"word[{i}]", "each factor is [function_id, group_element]")
            if f[0] not in doc["functions"]:
                raise ScenarioError(f"word[{i}]", f"unknown function {f[0]!r}")
            _translation(f[1], f"word[{i}]")
        for fid, four in doc["functions"].items():
            _fourier(four, f"functions.{fid}")


def _fourier(spec, field):
    if not isinstance(spec, dict) or not spec:
        raise ScenarioError(field, "Fourier data must be a mapping 'n1,n2': coefficient")
    out = {}
    for k, c in spec.items():
        try:
            n1, n2 = (int(x) for x in str(k).split(","))
        except ValueError:
            raise ScenarioError(field, f"bad frequency key {k!r}") from None
        if isinstance(c, list):
            if len(c) != 2:
                raise ScenarioError(field, "complex coefficients are [re, im]")
            out[(n1, n2)] = complex(float(number(c[0], field)), float(number(c[1], field)))
        else:
            out[(n1, n2)] = number(c, field)
    return out


def _translation(g, field):
    if g == "e":
        return (Fraction(0), Fraction(0))
    if isinstance(g, list) and len(g) == 2:
        vals = [number(x, field) for x in g]
        return tuple((Fraction(repr(v)) if isinstance(v, float) else Fraction(v)) % 1 for v in vals)
    raise ScenarioError(field, f"group element must be 'e' or a translation [s1, s2], got {g!r}")


# ------------------------------------------------------------- execution

def parallel_map(fn, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(contextvars.copy_context().run, fn, x) for x in items]
        return [f.result() for f in futs]


def _c(v):
    z = complex(sympy.N(v, 20)) if isinstance(v, sympy.Basic) else complex(v)
    return z


def _row(label, pname, pval, value, bound=0.0, reference=None):
    z = _c(value)
    exact = str(sympy.nsimplify(value)) if isinstance(value, sympy.Basic) else ""
    r = {"label": label, "param_name": pname, "param_value": str(pval),
         "value_re": _fmt(z.real), "value_im": _fmt(z.imag), "value_exact": exact,
         "error_bound": _fmt(float(bound))}
    if reference is not None:
        zr = _c(reference)
        r["reference_re"], r["reference_im"] = _fmt(zr.real), _fmt(zr.imag)
    else:
        r["reference_re"] = r["reference_im"] = ""
    return r


def _fmt(x):
    x = float(x)
    if x == 0:
        return "0"
    return repr(x)


def _check(name, ok, **detail):
    return {"name": name, "pass": bool(ok), "detail": detail}


def run_fixed_point_index(doc, threads):
    rows, checks = [], []
    tol = float(doc.get("tolerance", 1e-8))
    if "sphere" in doc:
        sph = doc["sphere"]
        k = int(sph.get("monopole_k", 0))
        angles = [angle(a, f"sphere.angles[{i}]") for i, a in enumerate(sph.get("angles", []))]
        vals = parallel_map(lambda th: equivariant_index(sphere_rotation_strata(th, k), 2), angles, threads)
        oracle = None
        if "oracle" in doc:
            lmax = int(doc["oracle"].get("lmax", 12))
            nz = [a for a in angles if S.angle_value(a) != 0]
            oracle = build_sphere_model(lmax, k, nz)
        worst = 0.0
        for th, v in zip(angles, vals):
            ref = None
            if oracle is not None:
                ref = oracle.index() if S.angle_value(th) == 0 else sphere_kernel_character(oracle, th)
                worst = max(worst, abs(_c(v) - complex(ref)))
            rows.append(_row(f"k={k}", "theta", th, v, 0.0, ref))
        if oracle is not None:
            checks.append(_check("matches-spectral-oracle", worst < tol, max_deviation=worst, tolerance=tol))
        imag = max((abs(_c(v).imag) for v in vals), default=0.0)
        checks.append(_check("imaginary-part-cancels", imag < tol, max_imag=imag, tolerance=tol))
        if "expected" in doc:
            exp = complex(number(doc["expected"], "expected"))
            dev = max(abs(_c(v) - exp) for v in vals)
            checks.append(_check("expected-value", dev < tol, max_deviation=dev, tolerance=tol))
        plot = ("theta", [S.angle_value(a) for a in angles], {"Re index": [_c(v).real for v in vals]})
    else:
        n = int(_require(doc, "n", int))
        strata = [_inline_stratum(s, n, i) for i, s in enumerate(doc["strata"])]
        v = equivariant_index(strata, n)
        ref = doc.get("expected")
        rows.append(_row("inline", "n", n, v, 0.0, None if ref is None else complex(number(ref, "expected"))))
        if ref is not None:
            dev = abs(_c(v) - complex(number(ref, "expected")))
            checks.append(_check("expected-value", dev < tol, deviation=dev, tolerance=tol))
        plot = None
    return rows, checks, plot


def _form(n, spec, field):
    terms = {}
    for k, c in (spec or {}).items():
        try:
            idx = tuple(int(x) for x in str(k).split(",")) if str(k) else ()
        except ValueError:
            raise ScenarioError(field, f"bad form index {k!r}") from None
        terms[idx] = number(c, field) if not isinstance(c, list) else complex(float(c[0]), float(c[1]))
    return ExteriorElement(n, terms)


def _curv(n, size, entries, field):
    if size == 0:
        return None
    pairs = []
    for i, e in enumerate(entries or []):
        if not (isinstance(e, list) and len(e) == 3):
            raise ScenarioError(f"{field}[{i}]", "entries are [i, j, {form}] with 0-based i < j")
        pairs.append((int(e[0]), int(e[1]), _form(n, e[2], f"{field}[{i}]")))
    return curvature_from_two_forms(pairs, size, n)


def _inline_stratum(spec, n, i):
    f = f"strata[{i}]"
    a = int(spec.get("a", 0))
    nodes = []
    for j, nd in enumerate(spec.get("nodes", [])):
        g = f"{f}.nodes[{j}]"
        angles = [angle(x, f"{g}.normal_angles") for x in nd.get("normal_angles", [])]
        normal = NormalAction(angles)
        Rp = _curv(n, a, nd.get("Rp"), f"{g}.Rp")
        Rpp = _curv(n, normal.size, nd.get("Rpp"), f"{g}.Rpp")
        if Rp is None and Rpp is None:
            raise ScenarioError(g, "stratum with a = 0 and no normal angles")
        mc = ModelCurvature(Rp, Rpp, normal)
        twist = None
        if "twist" in nd:
            tw = nd["twist"]
            rank = int(tw.get("rank", 1))
            F0 = FormMatrix([[_form(n, tw.get("F0", {}).get(f"{r},{s}", {}), f"{g}.twist.F0")
                              for s in range(rank)] for r in range(rank)], n)
            phiE = tw.get("phiE", [[1 if r == s else 0 for s in range(rank)] for r in range(rank)])
            phiE = [[sympy.sympify(x) if isinstance(x, str) else x for x in row] for row in phiE]
            twist = TwistData(rank, F0, phiE)
        w = nd.get("weight", 1)
        w = sympy.sympify(w) if isinstance(w, str) else w
        nodes.append(StratumNode(w, mc, twist, orientation=int(nd.get("orientation", 1))))
    return FixedPointStratum(a, nodes)


# ---------------------------------------------------------- torus cocycles

def _gid(s):
    if s == (0, 0):
        return "e"
    return f"tr:{s[0]},{s[1]}"


def translation_word(doc):
    """GroupWord over the finite translation group generated by the word's elements."""
    gens = [_translation(f[1], f"word[{i}]") for i, f in enumerate(doc["word"])]
    elems = {(Fraction(0), Fraction(0))}
    frontier = list(elems)
    while frontier:
        new = []
        for a in frontier:
            for g in gens:
                c = ((a[0] + g[0]) % 1, (a[1] + g[1]) % 1)
                if c not in elems:
                    elems.add(c)
                    new.append(c)
        frontier = new
        if len(elems) > 4096:
            raise ScenarioError("word", "translations generate too large a group (use rationals)")
    compose = {}
    for a in elems:
        for b in elems:
            compose[(_gid(a), _gid(b))] = _gid(((a[0] + b[0]) % 1, (a[1] + b[1]) % 1))
    funcs = {fid: _fourier(f, f"functions.{fid}") for fid, f in doc["functions"].items()}
    pull, derived = {}, {}
    for fid, four in funcs.items():
        for s in elems:
            if s == (0, 0):
                continue
            new = f"{fid}@{_gid(s)}"
            pull[(fid, _gid(s))] = new
            # f o phi_s with phi_s(x) = x + s
            derived[new] = {n: c * complex(math.cos(2 * math.pi * (n[0] * s[0] + n[1] * s[1])),
                                           math.sin(2 * math.pi * (n[0] * s[0] + n[1] * s[1])))
                            for n, c in four.items()}
    funcs.update(derived)
    word = GroupWord([(f[0], _gid(gens[i])) for i, f in enumerate(doc["word"])], compose, pull)
    shifts = {_gid(s): (float(s[0]), float(s[1])) for s in elems}
    return word, funcs, shifts


def _cocycle_value(doc, fn):
    q = int(doc.get("q", 1))
    word, funcs, _ = translation_word(doc)
    comp = word.composite()
    if comp != "e":
        # translations without fixed points: no strata
        return fn(q, word, [], 2), word, funcs
    used = {fid: funcs[fid] for fid in word.hat_functions()}
    st = torus_identity_stratum(used, int(doc.get("quadrature", 16)))
    return fn(q, word, [st], 2), word, funcs


def run_cocycle(doc, threads, fn):
    rows, checks = [], []
    tol = float(doc.get("tolerance", 1e-8))
    value, word, funcs = _cocycle_value(doc, fn)
    ref = None
    q = int(doc.get("q", 1))
    if word.composite() == "e" and q == 1:
        hats = word.hat_functions()
        f0, _ = _fc(funcs[hats[0]])
        _, g1 = _fc(funcs[hats[1]])
        _, g2 = _fc(funcs[hats[2]])
        ref = oracles.torus_cm_quadrature(f0, g1, g2, int(doc.get("oracle_points", 48)))
        dev = abs(_c(value) - ref)
        checks.append(_check("matches-direct-quadrature", dev < tol, deviation=dev, tolerance=tol))
    if word.composite() != "e" and q >= 1:
        checks.append(_check("vanishes-off-identity", _c(value) == 0, value=str(value)))
    rows.append(_row(doc["kind"], "q", q, value, 0.0, ref))
    return rows, checks, None


def _fc(four):
    from .acceptance import _fourier_callables
    return _fourier_callables(four)


def run_jlo_numeric(doc, threads):
    rows, checks = [], []
    ts = sorted(t_grid(doc), reverse=True)
    q = int(doc.get("q", 1))
    word, funcs, shifts = translation_word(doc)
    tor = doc.get("torus", {})
    model = build_torus_model(int(tor.get("kmax", 20)), tor.get("spin_structure", "pp"),
                              [s for g, s in sorted(shifts.items()) if g != "e"] or None)
    gmap = {g: (translation_gid(s) if g != "e" else "e") for g, s in shifts.items()}
    compose = {(gmap[a], gmap[b]): gmap[c] for (a, b), c in word.compose.items()}
    nword = GroupWord([(f, gmap[g]) for f, g in word.factors], compose)
    nodes = int(doc.get("simplex_nodes", 200))
    res = parallel_map(lambda t: jlo_numeric(model, nword, q, t, nodes, funcs), ts, threads)
    vals = [v for v, _ in res]
    for t, (v, e) in zip(ts, res):
        rows.append(_row("jlo_numeric", "t", t, v, e + model.tail_bound(t / (2 * q + 1))))
    ext = richardson(ts, vals)
    limit, _, _ = _cocycle_value(doc, jlo_limit)
    tol = float(doc.get("tolerance", 1e-4))
    rows.append(_row("extrapolated", "t", 0, ext, abs(vals[-1] - ext), limit))
    dev = abs(ext - _c(limit))
    checks.append(_check("extrapolation-matches-jlo-limit", dev < tol, deviation=dev, tolerance=tol))
    plot = ("t", ts, {"Re": [v.real for v in vals], "Im": [v.imag for v in vals]})
    return rows, checks, plot


def _model_from_doc(doc):
    m = doc["model"]
    if "file" in m:
        with open(os.path.join(doc["_base"], m["file"]), encoding="utf-8") as fh:
            return SpectralModel.from_json(fh.read())
    if m["type"] == "sphere":
        angles = [angle(a, f"model.angles[{i}]") for i, a in enumerate(m.get("angles", []))]
        return build_sphere_model(int(m.get("lmax", 12)), int(m.get("monopole_k", 0)), angles)
    trs = [tuple(float(number(x, "model.translations")) for x in s) for s in m.get("translations", [])]
    return build_torus_model(int(m.get("kmax", 20)), m.get("spin_structure", "pp"), trs or None)


def run_heat_trace(doc, threads):
    rows, checks = [], []
    ts = t_grid(doc)
    model = _model_from_doc(doc)
    graded = bool(doc.get("graded", True))
    gids = doc.get("group_elements") or model.group_elements
    tol = float(doc.get("tolerance", 1e-10))
    series = {}
    for g in gids:
        if g not in model.group_elements:
            raise ScenarioError("group_elements", f"unknown group element {g!r}")
        res = [heat_supertrace(model, g, t, graded=graded) for t in ts]
        for t, (v, b) in zip(ts, res):
            rows.append(_row(g, "t", t, v, b))
        series[g] = [v.real for v, _ in res]
        if graded:
            spread = max(abs(u[0] - w[0]) for u in res for w in res)
            bound = max(b for _, b in res)
            checks.append(_check(f"mckean-singer:{g}", spread < tol + 2 * bound, spread=spread,
                                 truncation_bound=bound, tolerance=tol))
        if "fit" in doc:
            rep = fit_asymptotic_orders([(t, v) for t, (v, _) in zip(ts, res)], doc["fit"].get("expected_leading", -1))
            ftol = float(doc["fit"].get("tolerance", 1e-8))
            checks.append(_check(f"no-negative-powers:{g}", rep.negative_power_max < ftol,
                                 **rep.as_dict(), tolerance=ftol))
    if "export_model" in doc:
        checks.append(_check("model-export", True, file=os.path.basename(doc["export_model"])))
    plot = ("t", ts, series)
    return rows, checks, plot, model


def run_volterra_check(doc, threads):
    rows, checks = [], []
    J = int(doc.get("J", 8))
    jmax = int(doc.get("jmax", 3))
    bad = 0
    for V in doc.get("potentials", [0, 1, 3]):
        V = number(V, "potentials")
        q = heat_parametrix(schrodinger(2, {(0, 0): V}), J)
        coeffs = asymptotic_coefficients(q, None, 2, jmax)
        expect = oracles.schrodinger_heat_coefficients(V, jmax)
        for j in range(jmax + 1):
            got = S.as_sympy(coeffs[j].scalar_part)
            ok = sympy.simplify(got - expect[j]) == 0
            bad += not ok
            rows.append(_row(f"V={V}", "j", j, got, 0.0, expect[j]))
    checks.append(_check("parametrix-coefficients-exact", bad == 0, mismatches=bad))
    fs = doc.get("fiber_identity")
    if fs:
        rng = random.Random(int(fs.get("seed", 0)))
        nbad = 0
        for i in range(int(fs.get("samples", 5))):
            n, a, angles = NORMAL_CHOICES[i % len(NORMAL_CHOICES)]
            mc = random_model_curvature(n, a, angles, rng)
            lhs, rhs = mehler_fiber_terms(mc), mehler_fiber_via_kernel(mc)
            same = all((lhs.get(p, ExteriorElement.zero(n)) - rhs.get(p, ExteriorElement.zero(n))).is_zero()
                       for p in set(lhs) | set(rhs))
            nbad += not same
        checks.append(_check("fiber-integral-identity", nbad == 0, mismatches=nbad))
    return rows, checks, None


# ----------------------------------------------------------------- reports

def run_scenario(doc, out_dir, precision=None, threads=1):
    """Run one validated scenario and write <name>.csv/.json(/.png). Returns the summary dict."""
    prec = precision or doc.get("precision") or S.EXACT
    kind = doc["kind"]
    model = None
    with S.precision(prec):
        if kind == "fixed_point_index":
            rows, checks, plot = run_fixed_point_index(doc, threads)
        elif kind == "cm_cocycle":
            rows, checks, plot = run_cocycle(doc, threads, cm_cocycle)
        elif kind == "jlo_limit":
            rows, checks, plot = run_cocycle(doc, threads, jlo_limit)
        elif kind == "heat_trace":
            rows, checks, plot, model = run_heat_trace(doc, threads)
        elif kind == "jlo_numeric":
            rows, checks, plot = run_jlo_numeric(doc, threads)
        else:
            rows, checks, plot = run_volterra_check(doc, threads)
    name = doc["name"]
    os.makedirs(out_dir, exist_ok=True)
    for i, r in enumerate(rows):
        r["scenario"] = name
        r["row"] = i
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in CSV_COLUMNS})
    files = {"csv": f"{name}.csv", "json": f"{name}.json"}
    with open(os.path.join(out_dir, files["csv"]), "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    if model is not None and "export_model" in doc:
        files["model"] = os.path.basename(doc["export_model"])
        with open(os.path.join(out_dir, files["model"]), "w", encoding="utf-8") as fh:
            fh.write(model.to_json())
    if plot is not None:
        xname, xs, series = plot
        files["png"] = f"{name}.png"
        plot_series(os.path.join(out_dir, files["png"]), xs, series, name, xname, "value",
                    logx=(xname == "t"))
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": name,
        "kind": kind,
        "precision": prec,
        "results": [{k: r[k] for k in CSV_COLUMNS if k not in ("scenario",)} for r in rows],
        "checks": checks,
        "files": files,
    }
    with open(os.path.join(out_dir, files["json"]), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
