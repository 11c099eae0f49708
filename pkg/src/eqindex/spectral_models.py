"""Dirac spectral models on the flat torus and the round sphere.

Levels are stored per |lambda|: each level is an eigenspace of D^2 split by
chirality.  For lambda > 0, D intertwines the two halves equivariantly, so
dim_plus == dim_minus and the two characters agree; the constructor checks
this.
"""
import cmath
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

LEVEL_TOL = 1e-8
SYMMETRY_TOL = 1e-9


class SpectralError(ValueError):
    pass


@dataclass
class Level:
    lam: float
    dim_plus: int
    dim_minus: int
    characters: dict = field(default_factory=dict)  # gid -> (chi_plus, chi_minus)


class SpectralModel:
    """Truncated spectrum of D with per-level group characters."""

    kind = "generic"

    def __init__(self, levels, lmax, meta=None):
        self.levels = sorted(levels, key=lambda L: L.lam)
        self.lmax = lmax
        self.meta = dict(meta or {})
        self._check_symmetry()

    def _check_symmetry(self):
        for L in self.levels:
            if L.lam < -SYMMETRY_TOL:
                raise SpectralError("levels are indexed by |lambda| >= 0")
            if L.lam > LEVEL_TOL:
                if L.dim_plus != L.dim_minus:
                    raise SpectralError(f"level {L.lam}: dim_plus != dim_minus")
                for gid, (cp, cm) in L.characters.items():
                    if abs(cp - cm) > SYMMETRY_TOL * max(1, L.dim_plus):
                        raise SpectralError(f"level {L.lam}: characters of {gid} differ")

    @property
    def group_elements(self):
        out = set()
        for L in self.levels:
            out |= set(L.characters)
        return sorted(out)

    @property
    def lambda_max(self):
        return self.levels[-1].lam if self.levels else 0.0

    def kernel_dims(self):
        for L in self.levels:
            if L.lam <= LEVEL_TOL:
                return L.dim_plus, L.dim_minus
        return 0, 0

    def index(self):
        p, m = self.kernel_dims()
        return p - m

    def character(self, gid, lam_index):
        return self.levels[lam_index].characters[gid]

    def tail_bound(self, t):
        """Bound on sum over omitted levels of (d+ + d-) e^{-t lambda^2}."""
        return _generic_tail(self.lambda_max, t, self.meta.get("weyl_slope", 4.0))

    # --------------------------------------------------------------- export
    def to_json(self):
        levels = []
        for L in self.levels:
            ch = {}
            for gid in sorted(L.characters):
                cp, cm = L.characters[gid]
                ch[gid] = [float(cp.real), float(cp.imag), float(cm.real), float(cm.imag)]
            levels.append({"lambda": float(L.lam), "dim_plus": int(L.dim_plus),
                           "dim_minus": int(L.dim_minus), "characters": ch})
        doc = {"levels": levels, "lmax": self.lmax, "meta": dict(sorted(self.meta.items()))}
        return json.dumps(doc, indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        levels = []
        for d in doc["levels"]:
            ch = {gid: (complex(v[0], v[1]), complex(v[2], v[3])) for gid, v in d["characters"].items()}
            levels.append(Level(float(d["lambda"]), int(d["dim_plus"]), int(d["dim_minus"]), ch))
        meta = doc.get("meta", {})
        kind = meta.get("kind")
        model = SpectralModel(levels, doc["lmax"], meta)
        if kind == "sphere":
            model.tail_bound = lambda t, m=meta: _sphere_tail(m["s_plus"], m["jmax"], t)
        elif kind == "torus":
            model.tail_bound = lambda t, m=meta: _torus_tail(m["kmax"], m["eps"], t)
        return model


def _generic_tail(lam_max, t, slope):
    # multiplicity <= slope * lambda, integer spacing
    total, L = 0.0, math.floor(lam_max) + 1
    while True:
        term = slope * (L + 1) * math.exp(-t * L * L)
        total += term
        if term < 1e-300 or (L > lam_max + 10 and term < 1e-18 * max(total, 1e-300)):
            return total
        L += 1


# ------------------------------------------------------------------- sphere

def _jy(j):
    """J_y on the (2j+1)-dim irrep, basis m = j, j-1, ..., -j."""
    d = int(round(2 * j)) + 1
    ms = [j - i for i in range(d)]
    Jp = np.zeros((d, d))
    for i, m in enumerate(ms):
        if i > 0:
            Jp[i - 1, i] = math.sqrt((j - m) * (j + m + 1))
    return (Jp - Jp.T) / 2j, ms


class _WignerD:
    """d^j(beta) = exp(-i beta J_y) and its beta-derivative, via an eigendecomposition."""

    def __init__(self, j):
        Jy, self.ms = _jy(j)
        mu, V = np.linalg.eigh(Jy)
        self.mu, self.V = mu, V
        self.Jy = Jy
        self.index = {m: i for i, m in enumerate(self.ms)}

    def __call__(self, betas):
        ph = np.exp(-1j * np.outer(betas, self.mu))  # (nb, d)
        D = np.einsum("ik,bk,jk->bij", self.V, ph, self.V.conj())
        dD = np.einsum("ij,bjk->bik", -1j * self.Jy, D)
        return D.real, dD.real


def _half(x):
    return round(2 * x) / 2


def _j_range(s, m, jmax):
    j0 = max(abs(s), abs(m))
    out = []
    j = j0
    while j <= jmax + 1e-12:
        out.append(_half(j))
        j += 1
    return out


def sphere_dirac_blocks(k, lmax, quad_nodes=None):
    """Dense matrices of the k-twisted Dirac operator, one block per m.

    Basis: spin-weighted harmonics of weights s+ = (k-1)/2, s- = (k+1)/2 with
    j <= max(|s+|, |s-|) + lmax.  Matrix elements come from Gauss-Legendre
    quadrature of the edth operators applied to Wigner-d functions.
    Returns {m: (H, chirality signs)}.
    """
    sp_, sm_ = (k - 1) / 2, (k + 1) / 2
    jmax = max(abs(sp_), abs(sm_)) + lmax
    nq = quad_nodes or int(4 * jmax + 64)
    x, w = np.polynomial.legendre.leggauss(nq)
    th = (x + 1) * math.pi / 2
    w = w * math.pi / 2 * np.sin(th) * 2 * math.pi
    cot, csc = np.cos(th) / np.sin(th), 1 / np.sin(th)

    wig = {}

    def Y(s, j, m):
        if j not in wig:
            W = _WignerD(j)
            wig[j] = W(th), W.index
        (D, dD), idx = wig[j]
        norm = math.sqrt((2 * j + 1) / (4 * math.pi))
        a, b = idx[_half(m)], idx[_half(-s)]
        return norm * D[:, a, b], norm * dD[:, a, b]

    def edth(s, m, f, df):
        return -(df - m * csc * f - s * cot * f)

    def edth_bar(s, m, f, df):
        return -(df + m * csc * f + s * cot * f)

    ms = sorted({_half(-jmax + i) for i in range(int(round(2 * jmax)) + 1)})
    blocks = {}
    for m in ms:
        jp = _j_range(sp_, m, jmax) if abs(m) <= jmax else []
        jm = _j_range(sm_, m, jmax) if abs(m) <= jmax else []
        if (jp and (jp[0] - sp_) % 1) or (jm and (jm[0] - sm_) % 1):
            continue
        if (abs(m) - abs(sp_)) % 1:
            continue
        Yp = [Y(sp_, j, m) for j in jp]
        Ym = [Y(sm_, j, m) for j in jm]
        npl, nmi = len(Yp), len(Ym)
        H = np.zeros((npl + nmi, npl + nmi), dtype=complex)
        # D+ = edth : weight s+ -> s-,  D- = -edth_bar : s- -> s+
        for a, (f, df) in enumerate(Yp):
            g = edth(sp_, m, f, df)
            for b, (h, _) in enumerate(Ym):
                H[npl + b, a] = np.sum(w * h * g)
        for a, (f, df) in enumerate(Ym):
            g = -edth_bar(sm_, m, f, df)
            for b, (h, _) in enumerate(Yp):
                H[b, npl + a] = np.sum(w * h * g)
        blocks[m] = (H, np.array([1] * npl + [-1] * nmi))
    return blocks, {"s_plus": sp_, "s_minus": sm_, "jmax": jmax}


def _group_levels(eigs, weights_plus, m_list, gids, phases):
    """Group eigenvectors by |lambda|; accumulate dims and characters."""
    order = np.argsort(np.abs(eigs))
    levels = []
    cur = None
    for i in order:
        lam = abs(eigs[i])
        if cur is None or lam - cur["lam"] > LEVEL_TOL * max(1, lam):
            cur = {"lam": lam, "lams": [], "p": 0.0, "m": 0.0,
                   "ch": {g: [0j, 0j] for g in gids}}
            levels.append(cur)
        cur["lams"].append(lam)
        wp = weights_plus[i]
        cur["p"] += wp
        cur["m"] += 1 - wp
        for g in gids:
            ph = phases[g](m_list[i])
            cur["ch"][g][0] += wp * ph
            cur["ch"][g][1] += (1 - wp) * ph
    out = []
    for L in levels:
        lam = float(np.mean(L["lams"]))
        if lam < LEVEL_TOL:
            lam = 0.0
        ch = {g: (complex(v[0]), complex(v[1])) for g, v in L["ch"].items()}
        out.append(Level(lam, int(round(L["p"])), int(round(L["m"])), ch))
    return out


def rotation_gid(theta):
    return f"rot:{theta}"


def _angle(th):
    if isinstance(th, str):
        import sympy
        return float(sympy.sympify(th))
    return float(th)


def build_sphere_model(lmax, monopole_k=0, rotation_angles=()):
    """Twisted Dirac operator on the unit S^2 from a dense eigensolve.

    Rotation by theta about the polar axis acts by e^{i m theta} on the
    m-block.  Group ids are ``"e"`` and ``rotation_gid(theta)``.
    """
    if lmax < 1:
        raise SpectralError("lmax must be >= 1")
    blocks, info = sphere_dirac_blocks(monopole_k, lmax)
    eigs, wplus, mlist = [], [], []
    herm_err = 0.0
    for m, (H, chir) in blocks.items():
        herm_err = max(herm_err, float(np.abs(H - H.conj().T).max()) if H.size else 0.0)
        H = (H + H.conj().T) / 2
        ev, V = np.linalg.eigh(H)
        pmask = chir > 0
        for c in range(len(ev)):
            eigs.append(ev[c])
            wplus.append(float(np.sum(np.abs(V[pmask, c]) ** 2)))
            mlist.append(m)
    gids = ["e"] + [rotation_gid(th) for th in rotation_angles]
    phases = {"e": lambda m: 1.0}
    for th in rotation_angles:
        v = _angle(th)
        phases[rotation_gid(th)] = (lambda v: lambda m: cmath.exp(1j * m * v))(v)
    levels = _group_levels(np.array(eigs), wplus, mlist, gids, phases)
    # drop the top level, where the truncation can split a D^2 eigenspace
    lam_cut = _sphere_lambda(info["s_plus"], info["jmax"])
    levels = [L for L in levels if L.lam <= lam_cut + 1e-6]
    meta = {"kind": "sphere", "monopole_k": monopole_k, "s_plus": info["s_plus"],
            "jmax": info["jmax"], "hermiticity_error": herm_err,
            "rotation_angles": [str(a) for a in rotation_angles]}
    model = SpectralModel(levels, lmax, meta)
    model.tail_bound = lambda t: _sphere_tail(info["s_plus"], info["jmax"], t)
    return model


def _sphere_lambda(s_plus, j):
    v = (j - s_plus) * (j + s_plus + 1)
    return math.sqrt(max(v, 0.0))


def _sphere_tail(s_plus, jmax, t):
    total, j = 0.0, jmax + 1
    while True:
        lam2 = (j - s_plus) * (j + s_plus + 1)
        term = 2 * (2 * j + 1) * math.exp(-t * lam2)
        total += term
        if term < 1e-300 or (j > jmax + 5 and term < 1e-18 * total):
            return total
        j += 1


def sphere_kernel_character(model, theta):
    """chi+ - chi- of the rotation on ker D, read from the model."""
    gid = rotation_gid(theta)
    for L in model.levels:
        if L.lam <= LEVEL_TOL:
            cp, cm = L.characters[gid]
            return cp - cm
    return 0j


# -------------------------------------------------------------------- torus

C1 = np.array([[0, 1j], [1j, 0]])
C2 = np.array([[0, 1], [-1, 0]], dtype=complex)
GAMMA = np.diag([1.0, -1.0]).astype(complex)
SPIN_STRUCTURES = {"pp": (0.0, 0.0), "pa": (0.0, 0.5), "ap": (0.5, 0.0), "aa": (0.5, 0.5)}


def _spin_eps(spin_structure):
    if isinstance(spin_structure, str):
        try:
            return SPIN_STRUCTURES[spin_structure]
        except KeyError:
            raise SpectralError(f"unknown spin structure {spin_structure!r}") from None
    e = tuple(float(x) for x in spin_structure)
    if len(e) != 2 or any(x not in (0.0, 0.5) for x in e):
        raise SpectralError("spin structure offsets must be 0 or 1/2")
    return e


def translation_gid(s):
    return f"tr:{s[0]},{s[1]}"


class TorusModel(SpectralModel):
    """D = c1 d1 + c2 d2 on R^2/Z^2 in the plane-wave basis |k| <= kmax."""

    kind = "torus"

    def __init__(self, kmax, spin_structure="pp", translations=()):
        if kmax < 1:
            raise SpectralError("kmax must be >= 1")
        self.kmax = kmax
        self.eps = _spin_eps(spin_structure)
        ks = np.arange(-kmax, kmax + 1)
        K1, K2 = np.meshgrid(ks, ks, indexing="ij")
        self.modes = np.stack([K1.ravel(), K2.ravel()], axis=1)
        self.mode_index = {tuple(m): i for i, m in enumerate(self.modes.tolist())}
        self.xi = self.modes + np.array(self.eps)
        self.lam2 = 4 * math.pi ** 2 * np.sum(self.xi ** 2, axis=1)
        self.translations = {"e": (0.0, 0.0)}
        for s in translations:
            s = (float(s[0]), float(s[1]))
            self.translations[translation_gid(s)] = s
        self._ops = {}
        levels = self._levels()
        meta = {"kind": "torus", "kmax": kmax, "eps": list(self.eps),
                "translations": {g: list(s) for g, s in sorted(self.translations.items())}}
        super().__init__(levels, kmax, meta)

    @property
    def dim(self):
        return 2 * len(self.modes)

    def _levels(self):
        keys = np.round(self.lam2 / (4 * math.pi ** 2), 9)
        order = np.argsort(keys, kind="stable")
        levels = []
        i = 0
        while i < len(order):
            j = i
            while j < len(order) and keys[order[j]] == keys[order[i]]:
                j += 1
            idx = order[i:j]
            lam = math.sqrt(float(self.lam2[idx[0]]))
            ch = {}
            for g, s in self.translations.items():
                v = complex(np.sum(np.exp(2j * math.pi * (self.xi[idx] @ np.array(s)))))
                ch[g] = (v, v)
            levels.append(Level(lam, len(idx), len(idx), ch))
            i = j
        # keep only complete shells |xi| <= kmax
        bound = 2 * math.pi * (self.kmax - 0.5 + 1e-9)
        return [L for L in levels if L.lam <= bound]

    def tail_bound(self, t):
        return _torus_tail(self.kmax, self.eps, t)

    # ------------------------------------------------ operators in the basis
    def heat_diag(self, t):
        return np.repeat(np.exp(-t * self.lam2), 2)

    def translation_diag(self, gid):
        s = np.array(self.translations[gid])
        return np.repeat(np.exp(2j * math.pi * (self.xi @ s)), 2)

    def grading_diag(self):
        return np.tile(np.array([1.0, -1.0]), len(self.modes))

    def _shift(self, n):
        n = (int(n[0]), int(n[1]))
        key = ("shift", n)
        if key not in self._ops:
            rows, cols = [], []
            for i, m in enumerate(self.modes.tolist()):
                j = self.mode_index.get((m[0] + n[0], m[1] + n[1]))
                if j is not None:
                    rows.append(j)
                    cols.append(i)
            N = len(self.modes)
            self._ops[key] = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
        return self._ops[key]

    def function_matrix(self, fourier):
        """Multiplication by f = sum c_n e^{2 pi i n.x}; acts as identity on spinor indices."""
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for n, c in fourier.items():
            out = out + complex(c) * sp.kron(self._shift(n), sp.identity(2), format="csr")
        return out

    def clifford_df_matrix(self, fourier):
        """[D, f] = c(df) = sum c_n 2 pi i (n1 c1 + n2 c2) e^{2 pi i n.x}."""
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for n, c in fourier.items():
            blk = 2j * math.pi * (n[0] * C1 + n[1] * C2)
            out = out + complex(c) * sp.kron(self._shift(n), sp.csr_matrix(blk), format="csr")
        return out

    def dirac_matrix(self):
        rows = []
        for xi in self.xi:
            rows.append(2j * math.pi * (xi[0] * C1 + xi[1] * C2))
        return sp.block_diag(rows, format="csr")


def _theta_sum(eps, t, kmax=None):
    total, k = 0.0, 0
    while True:
        terms = [k + eps] if k == 0 else [k + eps, -k + eps]
        v = sum(math.exp(-4 * math.pi ** 2 * t * x * x) for x in terms)
        if kmax is not None and k > kmax:
            return total
        total += v
        if kmax is None and v < 1e-300:
            return total
        k += 1


def _torus_tail(kmax, eps, t):
    full = _theta_sum(eps[0], t) * _theta_sum(eps[1], t)
    part = _theta_sum(eps[0], t, kmax) * _theta_sum(eps[1], t, kmax)
    return 2 * max(full - part, 0.0)


def build_torus_model(kmax, spin_structure="pp", translation=None):
    """Torus model; ``translation`` may be one (s1, s2) pair or a list of pairs."""
    if translation is None:
        trs = ()
    elif len(translation) == 2 and not hasattr(translation[0], "__len__"):
        trs = (tuple(translation),)
    else:
        trs = tuple(tuple(s) for s in translation)
    return TorusModel(kmax, spin_structure, trs)


# ------------------------------------------------------------------- traces

def heat_supertrace(model, gid="e", t=1.0, P=None, graded=True):
    """(value, bound) for Str[P e^{-t D^2} U_phi]; ``graded=False`` gives the plain trace."""
    if not t > 0:
        raise SpectralError(f"t must be > 0, got {t}")
    if P is None:
        val = 0j
        for L in model.levels:
            cp, cm = L.characters[gid]
            val += ((cp - cm) if graded else (cp + cm)) * math.exp(-t * L.lam * L.lam)
        return val, model.tail_bound(t)
    if not isinstance(model, TorusModel):
        raise SpectralError("operator insertions need a model with matrix elements")
    if isinstance(P, TrigOperator):
        val = _structured_bracket(model, [P], np.ones((1, 1)), t, gid, graded)[0]
        norm = sum(np.abs(B).sum() for _, B in P.terms)
        return complex(val), model.tail_bound(t) * norm
    return _bracket_eval(model, [P], [1.0], t, gid, graded), model.tail_bound(t) * _opnorm(P)


def _opnorm(X):
    X = sp.csr_matrix(X)
    if X.nnz == 0:
        return 0.0
    return float(max(abs(X).sum(axis=0).max(), abs(X).sum(axis=1).max()))


def _bracket_eval(model, ops, svals, t, gid="e", graded=True):
    """Str[X0 e^{-s0 t D^2} X1 ... Xm e^{-sm t D^2} U]."""
    lam2 = np.repeat(model.lam2, 2)
    Y = None
    for X, s in zip(ops, svals):
        Xs = sp.csr_matrix(X)
        if Y is None:
            Y = Xs
        else:
            Y = Y @ Xs
        Y = Y @ sp.diags(np.exp(-s * t * lam2))
    diag = Y.diagonal()
    if gid != "e":
        diag = diag * model.translation_diag(gid)
    if graded:
        diag = diag * model.grading_diag()
    return complex(np.sum(diag))


# -------------------------------------------- structured torus brackets

class TrigOperator:
    """sum_n B_n e^{2 pi i n.x} U_g with 2x2 spinor blocks B_n; ``g`` a translation id."""

    def __init__(self, terms, gid="e"):
        self.terms = [((int(n[0]), int(n[1])), np.asarray(B, dtype=complex)) for n, B in terms]
        self.gid = gid

    @classmethod
    def function(cls, fourier, gid="e"):
        return cls([(n, complex(c) * np.eye(2)) for n, c in fourier.items()], gid)

    @classmethod
    def clifford_df(cls, fourier, gid="e"):
        return cls([(n, complex(c) * 2j * math.pi * (n[0] * C1 + n[1] * C2)) for n, c in fourier.items()], gid)

    def matrix(self, model):
        out = sp.csr_matrix((model.dim, model.dim), dtype=complex)
        for n, B in self.terms:
            out = out + sp.kron(model._shift(n), sp.csr_matrix(B), format="csr")
        if self.gid != "e":
            out = out @ sp.diags(model.translation_diag(self.gid))
        return out


def _structured_bracket(model, ops, pts, t, gid="e", graded=True):
    """Str[X0 H(s0) ... Xm H(sm) U] for TrigOperators, vectorized over simplex nodes."""
    m = len(ops) - 1
    vals = np.zeros(len(pts), dtype=complex)
    lim = model.kmax
    for combo in itertools.product(*[op.terms for op in ops]):
        if sum(n[0] for n, _ in combo) or sum(n[1] for n, _ in combo):
            continue
        B = np.eye(2, dtype=complex)
        for _, Bn in combo:
            B = B @ Bn
        if graded:
            B = GAMMA @ B
        tr = np.trace(B)
        if tr == 0:
            continue
        # momenta seen by H(s_i): start at k after U, apply shifts right to left
        k = model.modes.copy()
        mask = np.ones(len(k), dtype=bool)
        phase = np.ones(len(k), dtype=complex)
        if gid != "e":
            phase *= np.exp(2j * math.pi * (model.xi @ np.array(model.translations[gid])))
        L = np.zeros((m + 1, len(k)))
        cur = k
        for i in range(m, -1, -1):
            L[i] = 4 * math.pi ** 2 * np.sum((cur + np.array(model.eps)) ** 2, axis=1)
            op = ops[i]
            if op.gid != "e":
                phase *= np.exp(2j * math.pi * ((cur + np.array(model.eps)) @ np.array(model.translations[op.gid])))
            cur = cur + np.array(combo[i][0])
            mask &= np.all(np.abs(cur) <= lim, axis=1)
        w = np.where(mask, phase, 0)
        for c0 in range(0, len(pts), 256):
            E = np.exp(-t * (pts[c0:c0 + 256] @ L))
            vals[c0:c0 + 256] += tr * (E @ w)
    return vals


# ------------------------------------------------------------ simplex rules

def simplex_rule(m, n_per_dim, symmetrize=True):
    """Conical Gauss-Jacobi rule on {s in R^{m+1}_{>=0}, sum s = 1}; weights sum to 1/m!."""
    if m == 0:
        return np.ones((1, 1)), np.ones(1)
    grids, wts = [], []
    for i in range(1, m + 1):
        alpha = m - i
        x, w = roots_jacobi(n_per_dim, alpha, 0)
        grids.append((x + 1) / 2)
        wts.append(w / 2 ** (alpha + 1))
    pts, ws = [], []
    for combo in itertools.product(range(n_per_dim), repeat=m):
        rem, s, wt = 1.0, [], 1.0
        for i, c in enumerate(combo):
            u = grids[i][c]
            s.append(rem * u)
            rem *= 1 - u
            wt *= wts[i][c]
        pts.append([rem] + s)
        ws.append(wt)
    pts, ws = np.array(pts), np.array(ws)
    if symmetrize:
        perms = list(itertools.permutations(range(m + 1)))
        pts = np.concatenate([pts[:, p] for p in perms])
        ws = np.concatenate([ws for _ in perms]) / len(perms)
    return pts, ws


def _n_per_dim(m, total):
    if m == 0:
        return 1
    return max(2, int(round(total ** (1.0 / m))))


def jlo_bracket(model, ops, t, simplex_nodes=200, gid="e", symmetrize=True, estimate=True):
    """(value, quadrature error estimate) of int_{Delta_m} Str[X0 e^{-s0 tD^2} ... Xm e^{-sm tD^2} U] ds.

    ``ops`` are TrigOperators (vectorized path) or sparse matrices.
    """
    if not t > 0:
        raise SpectralError(f"t must be > 0, got {t}")
    m = len(ops) - 1
    structured = all(isinstance(X, TrigOperator) for X in ops)

    def run(total):
        pts, ws = simplex_rule(m, _n_per_dim(m, total), symmetrize)
        if structured:
            return complex(ws @ _structured_bracket(model, ops, pts, t, gid))
        return sum(w * _bracket_eval(model, ops, s, t, gid) for s, w in zip(pts, ws))

    val = run(simplex_nodes)
    err = abs(run(2 * simplex_nodes) - val) if (estimate and m > 0) else 0.0
    return complex(val), err


def jlo_operators(word, functions):
    """TrigOperators a^0, [D, a^1], ..., [D, a^{2q}] for a^j = f^j U_{phi_j}."""
    ops = []
    for j, (fid, g) in enumerate(word.factors):
        if fid not in functions:
            raise SpectralError(f"missing matrix elements for function {fid!r}")
        make = TrigOperator.function if j == 0 else TrigOperator.clifford_df
        ops.append(make(functions[fid], g))
    return ops


def jlo_numeric(model, word, q, t, simplex_nodes=200, functions=None, estimate=True):
    """t^q Str[H_t(a^0, [D, a^1], ..., [D, a^{2q}])] with a^j = f^j U_{phi_j}.

    ``functions`` maps function ids to Fourier dicts {(n1, n2): coeff}; group
    element ids of the word must be translations of ``model``.
    Returns (value, error estimate).
    """
    if not isinstance(model, TorusModel):
        raise SpectralError("jlo_numeric needs a model with matrix elements")
    if len(word.factors) != 2 * q + 1:
        raise SpectralError(f"word has {len(word.factors)} factors, expected {2 * q + 1}")
    for _, g in word.factors:
        if g not in model.translations:
            raise SpectralError(f"missing matrix elements for group element {g!r}")
    ops = jlo_operators(word, functions or {})
    if q == 0:
        val, _ = heat_supertrace(model, "e", t, P=ops[0])
        return val, 0.0
    val, err = jlo_bracket(model, ops, t, simplex_nodes, estimate=estimate)
    return val * t ** q, err * t ** q


# ------------------------------------------------------------- extrapolation

def richardson(ts, values):
    """Value at t = 0 of the polynomial in t through the samples (Neville)."""
    ts = [float(t) for t in ts]
    P = [complex(v) for v in values]
    n = len(ts)
    if n == 0:
        raise ValueError("no samples")
    if len(set(ts)) != n:
        raise ValueError("sample points must be distinct")
    for k in range(1, n):
        for i in range(n - k):
            P[i] = (ts[i + k] * P[i] - ts[i] * P[i + 1]) / (ts[i + k] - ts[i])
    return P[0]


@dataclass
class FitReport:
    exponent: float
    residual: float
    powers: list
    coefficients: list
    negative_power_max: float

    def as_dict(self):
        return {"exponent": self.exponent, "residual": self.residual,
                "powers": [str(p) for p in self.powers],
                "coefficients": [[c.real, c.imag] for c in self.coefficients],
                "negative_power_max": self.negative_power_max}


def fit_asymptotic_orders(samples, expected_leading, n_terms=None):
    """Least-squares fit of sum_p c_p t^p over the half-integer ladder from ``expected_leading``.

    ``exponent`` is the log-log slope between the two smallest t.
    """
    from fractions import Fraction
    samples = sorted((float(t), complex(v)) for t, v in samples)
    if len(samples) < 4:
        raise ValueError("need at least 4 samples")
    ts = np.array([s[0] for s in samples])
    if np.any(ts <= 0) or len(set(ts.tolist())) != len(ts):
        raise ValueError("degenerate t-grid")
    ratios = ts[1:] / ts[:-1]
    if np.max(np.abs(ratios - ratios[0])) > 1e-6 * ratios[0]:
        raise ValueError("t-grid must be geometric")
    vals = np.array([s[1] for s in samples])
    lead = Fraction(expected_leading).limit_denominator(2)
    n_terms = n_terms or min(len(samples) - 1, 3)
    powers = [lead + Fraction(i, 2) for i in range(n_terms)]
    A = np.array([[t ** float(p) for p in powers] for t in ts])
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, vals, rcond=None)
    coef = coef / scale
    resid = float(np.linalg.norm(A @ coef - vals))
    a0, a1 = abs(vals[0]), abs(vals[1])
    if a0 > 0 and a1 > 0:
        exponent = float(math.log(a1 / a0) / math.log(ts[1] / ts[0]))
    else:
        exponent = float("inf")
    neg = [abs(c) for p, c in zip(powers, coef) if p < 0]
    return FitReport(exponent, resid, powers, [complex(c) for c in coef], max(neg) if neg else 0.0)
