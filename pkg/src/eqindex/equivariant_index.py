"""Fixed-point index formula, CM/JLO cocycle densities and gamma_phi.

Strata carry quadrature nodes.  Each node holds the curvature data at that
point, the twist and jets (value and stratum-frame gradient) of the functions
that enter the cocycles.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import scalars as S
from .char_forms import NormalAction, TwistData, a_hat, ch_phi, det_sqrt_one_minus, nu_phi
from .graded_algebra import (
    ExteriorElement,
    FormMatrix,
    berezin_horizontal,
    clifford_product,
    phi_spinor_symbol,
    wedge,
)
from .mehler import ModelCurvature


class StratumError(ValueError):
    pass


class MissingJetError(KeyError):
    pass


@dataclass
class StratumNode:
    weight: object
    mc: ModelCurvature
    twist: TwistData = None
    function_jets: dict = field(default_factory=dict)
    orientation: int = 1

    def jet(self, fid):
        try:
            return self.function_jets[fid]
        except KeyError:
            raise MissingJetError(f"no jet for function {fid!r} at this node") from None


class FixedPointStratum:
    """One component M_a^phi with its quadrature nodes."""

    def __init__(self, a, nodes, label=None):
        if a % 2 or a < 0:
            raise StratumError(f"stratum dimension must be even and >= 0, got {a}")
        self.a = a
        self.nodes = list(nodes)
        self.label = label
        if not self.nodes:
            raise StratumError("a stratum needs at least one node")
        n = self.nodes[0].mc.n
        for nd in self.nodes:
            if nd.mc.n != n:
                raise StratumError("nodes disagree on the ambient dimension")
            if nd.mc.a != a:
                raise StratumError("node curvature blocks do not match the stratum dimension")
            w = S.to_complex(nd.weight)
            if not (w.real > 0 and abs(w.imag) < 1e-15):
                raise StratumError("quadrature weights must be positive")
            if a == 0 and abs(w - 1) > 1e-15:
                raise StratumError("isolated fixed points carry weight 1")
            if nd.orientation not in (1, -1):
                raise StratumError("orientation sign must be +1 or -1")
        self.n = n


def _check_n(strata, n):
    for st in strata:
        if st.n != n:
            raise StratumError(f"stratum ambient dimension {st.n} != n = {n}")
        if st.a > n:
            raise StratumError("stratum dimension exceeds n")


def _node_char_form(node, a, include_twist=True):
    mc = node.mc
    n = mc.n
    out = a_hat(mc.Rp) if mc.Rp.size else ExteriorElement.one(n)
    if mc.Rpp.size:
        out = wedge(out, nu_phi(mc.Rpp, mc.normal))
    if include_twist and node.twist is not None:
        out = wedge(out, ch_phi(node.twist))
    return out


def _stratum_prefactor(a):
    """(2 pi)^{-a/2}."""
    return S.power(S.mul(S.rational(2), S.pi()), Fraction(-a, 2))


def equivariant_index(strata, n):
    """(-i)^{n/2} sum_a (2 pi)^{-a/2} int_{M_a} |Ahat ^ nu_phi ^ Ch_phi|^{(a,0)}."""
    if n % 2:
        raise StratumError("n must be even")
    _check_n(strata, n)
    total = S.zero()
    for st in strata:
        acc = S.zero()
        for nd in st.nodes:
            dens = _node_char_form(nd, st.a)
            v = S.coerce(berezin_horizontal(dens, st.a))
            v = S.mul(v, S.coerce(nd.weight))
            acc = S.add(acc, v if nd.orientation > 0 else S.neg(v))
        total = S.add(total, S.mul(acc, _stratum_prefactor(st.a)))
    return S.public(S.mul(total, S.power(S.coerce(-1j), n // 2)))


# ------------------------------------------------------------ group words

class GroupWord:
    """Word (f^0, phi_0), ..., (f^{2q}, phi_{2q}) with finite composition/pullback tables.

    ``compose[(g, h)]`` is the id of g o h, ``inverse[g]`` the inverse id, and
    ``pullback[(f, g)]`` the id of f o g.
    """

    def __init__(self, factors, compose, pullback=None, identity="e", inverse=None):
        self.factors = [tuple(f) for f in factors]
        self.compose = dict(compose)
        self.identity = identity
        self.pullback = dict(pullback or {})
        elems = {g for g, _ in self.compose} | {h for _, h in self.compose} | {identity}
        elems |= {g for _, g in self.factors} | set(self.compose.values())
        for g in elems:
            self.compose.setdefault((identity, g), g)
            self.compose.setdefault((g, identity), g)
        self.elements = sorted(elems, key=str)
        self.inverse = dict(inverse or {})
        for g in self.elements:
            if g not in self.inverse:
                for h in self.elements:
                    if self.compose.get((g, h)) == identity:
                        self.inverse[g] = h
                        break
        self._check_closed()

    def _check_closed(self):
        for g in self.elements:
            for h in self.elements:
                if (g, h) not in self.compose:
                    raise StratumError(f"composition table misses ({g}, {h})")
        for g in self.elements:
            for h in self.elements:
                for k in self.elements:
                    if self.compose[(self.compose[(g, h)], k)] != self.compose[(g, self.compose[(h, k)])]:
                        raise StratumError("composition table is not associative")

    @classmethod
    def trivial(cls, functions):
        return cls([(f, "e") for f in functions], {("e", "e"): "e"})

    @property
    def q2(self):
        return len(self.factors) - 1

    def partial(self, j):
        """phi_(j) = phi_0 o ... o phi_j."""
        g = self.identity
        for _, h in self.factors[: j + 1]:
            g = self.compose[(g, h)]
        return g

    def composite(self):
        return self.partial(len(self.factors) - 1)

    def pulled(self, f, g):
        if g == self.identity:
            return f
        try:
            return self.pullback[(f, g)]
        except KeyError:
            raise MissingJetError(f"pullback of {f!r} by {g!r} is not in the table") from None

    def hat_functions(self):
        """[f^0, f^1 o phi_(0)^{-1}, ..., f^{2q} o phi_(2q-1)^{-1}]."""
        out = [self.factors[0][0]]
        for j in range(1, len(self.factors)):
            g = self.inverse[self.partial(j - 1)]
            out.append(self.pulled(self.factors[j][0], g))
        return out


def _df(node, fid, n, a):
    _, grad = node.jet(fid)
    grad = list(grad)
    if len(grad) > a:
        if any(not S.is_zero(S.coerce(g)) for g in grad[a:]):
            raise StratumError("jet gradient has components outside the stratum")
        grad = grad[:a]
    return ExteriorElement(n, {(i + 1,): g for i, g in enumerate(grad) if not S.is_zero(S.coerce(g))})


def _cocycle_core(q, word, strata, n):
    if q < 0:
        raise StratumError("q must be >= 0")
    if len(word.factors) != 2 * q + 1:
        raise StratumError(f"word has {len(word.factors)} factors, expected {2 * q + 1}")
    if n % 2:
        raise StratumError("n must be even")
    _check_n(strata, n)
    comp = word.composite()
    fids = word.hat_functions()
    total = S.zero()
    for st in strata:
        if comp != word.identity and st.a == n:
            raise StratumError("a non-identity element cannot fix an n-dimensional stratum")
        acc = S.zero()
        for nd in st.nodes:
            val, _ = nd.jet(fids[0])
            form = ExteriorElement.scalar(n, val)
            for fid in fids[1:]:
                form = wedge(form, _df(nd, fid, n, st.a))
                if form.is_zero():
                    break
            if form.is_zero():
                continue
            dens = wedge(form, _node_char_form(nd, st.a))
            v = S.mul(S.coerce(berezin_horizontal(dens, st.a)), S.coerce(nd.weight))
            acc = S.add(acc, v if nd.orientation > 0 else S.neg(v))
        total = S.add(total, S.mul(acc, _stratum_prefactor(st.a)))
    pref = S.mul(S.power(S.coerce(-1j), n // 2), S.rational(1, math.factorial(2 * q)))
    return S.public(S.mul(total, pref))


def cm_cocycle(q, word, strata, n):
    """(-i)^{n/2}/(2q)! sum_a (2pi)^{-a/2} int f^0 df^1^...^df^{2q} ^ Ahat ^ nu_phi (^ Ch_phi if twisted)."""
    return _cocycle_core(q, word, strata, n)


def jlo_limit(q, word, strata, n):
    """Short-time limit of the JLO cochain; same density as the CM cocycle."""
    return _cocycle_core(q, word, strata, n)


def cm_constants(q, alpha):
    """(-1)^{|alpha|} (q-1)! |alpha|! / (alpha! (alpha_1 + 1)(alpha_2 + 2)...(alpha_{2q} + 2q))."""
    if q < 1:
        raise ValueError("q must be >= 1")
    alpha = list(alpha)
    if len(alpha) != 2 * q:
        raise ValueError(f"alpha must have length {2 * q}")
    if any(a < 0 for a in alpha):
        raise ValueError("alpha entries must be >= 0")
    s = sum(alpha)
    num = math.factorial(q - 1) * math.factorial(s)
    den = 1
    for j, a in enumerate(alpha, start=1):
        den *= math.factorial(a) * (a + j)
    return Fraction((-1) ** s * num, den)


def gamma_phi_volterra(I_fiber, normal, phiE, a_dim, n):
    """(-i)^{n/2} 2^{a/2} det^{1/2}(1 - phi^N) |tr_E[phi^E I]|^{(a,0)}.

    ``I_fiber`` is I_{Q_(m)}(0, 1): an ExteriorElement (scalar in E) or a
    rank x rank nested list of ExteriorElements.
    """
    if a_dim % 2:
        raise StratumError("a_dim must be even")
    if n % 2:
        raise StratumError("n must be even")
    phiE = [[S.coerce(x) for x in r] for r in phiE]
    p = len(phiE)
    if isinstance(I_fiber, ExteriorElement):
        tr = S.zero()
        for i in range(p):
            tr = S.add(tr, phiE[i][i])
        dens = I_fiber.scale(tr)
    else:
        dens = ExteriorElement.zero(n)
        for i in range(p):
            for k in range(p):
                dens = dens + I_fiber[k][i].scale(phiE[i][k])
    val = S.coerce(berezin_horizontal(dens, a_dim))
    pref = S.mul(S.power(S.coerce(-1j), n // 2), S.power(S.rational(2), Fraction(a_dim, 2)))
    pref = S.mul(pref, S.coerce(det_sqrt_one_minus(normal)))
    return S.public(S.mul(pref, val))


def spin_lift_consistency(normal, a_dim):
    """Max deviation of sigma[phi^S c(v) phi^{-S}] from c(phi^N v) over the normal basis.

    Zero under the library Clifford convention; a flipped sign rotates the
    wrong way and shows up here.
    """
    n = a_dim + normal.size
    up = phi_spinor_symbol(normal.angles, a_dim)
    down = phi_spinor_symbol(normal.angles, a_dim, inverse=True)
    M = normal.matrix()
    worst = 0.0
    for j in range(normal.size):
        v = ExteriorElement.dx(n, a_dim + j + 1)
        lhs = clifford_product(clifford_product(up, v), down)
        rhs = ExteriorElement(n, {(a_dim + i + 1,): S.public(M[i][j]) for i in range(normal.size)})
        worst = max(worst, lhs.max_abs_difference(rhs))
    return worst


# ------------------------------------------------------------ model builders

def sphere_curvature(n=2, K=1):
    """Curvature matrix of the round unit S^2 at a point: R_12 = K dx^1 ^ dx^2."""
    w = ExteriorElement(n, {(1, 2): K})
    R = FormMatrix.zeros(2, n)
    R.rows[0][1] = w
    R.rows[1][0] = -w
    return R


def sphere_rotation_strata(theta, k=0):
    """Fixed-point data on S^2 for the rotation by theta, monopole twist of degree k.

    theta = 0 is the identity (one 2-dimensional stratum of area 4 pi);
    otherwise the two poles are isolated fixed points with opposite normal
    orientation and twist phases e^{-+ i k theta/2}.
    """
    n = 2
    if S.angle_value(theta) == 0:
        F0 = FormMatrix([[ExteriorElement(n, {(1, 2): S.mul(S.coerce(-1j), S.rational(k, 2))})]], n)
        tw = TwistData(1, F0, [[1]])
        mc = ModelCurvature(sphere_curvature(n), None, NormalAction([]))
        node = StratumNode(S.mul(S.rational(4), S.pi()), mc, tw)
        return [FixedPointStratum(2, [node], label="S2")]
    normal = NormalAction([theta])
    strata = []
    for label, sign in (("north", -1), ("south", 1)):
        phase = S.expi(S.mul(S.angle(theta), S.rational(sign * k, 2)))
        tw = TwistData(1, FormMatrix.zeros(1, n), [[S.public(phase)]])
        mc = ModelCurvature(None, sphere_curvature(n), normal)
        strata.append(FixedPointStratum(0, [StratumNode(1, mc, tw, orientation=sign)], label=label))
    return strata


def sphere_character(theta, k):
    """sum_{m=-(|k|-1)/2}^{(|k|-1)/2} e^{i m theta} with the sign of k (0 for k = 0)."""
    if k == 0:
        return 0.0
    th = S.angle_value(theta)
    s = 1 if k > 0 else -1
    kk = abs(k)
    return s * sum(complex(math.cos(m * th), math.sin(m * th)) for m in
                   [Fraction(2 * i - (kk - 1), 2) for i in range(kk)])


def flat_stratum_from_functions(a, points, weights, functions, n=None, normal=None, twist=None):
    """Stratum with flat curvature whose nodes sample ``functions``.

    ``functions`` maps an id to (f, grad_f) callables on R^a.
    """
    normal = normal or NormalAction([])
    n = a + normal.size if n is None else n
    mc = ModelCurvature.flat(a, normal, n)
    nodes = []
    for p, w in zip(points, weights):
        jets = {fid: (f(*p), list(g(*p))) for fid, (f, g) in functions.items()}
        nodes.append(StratumNode(w, mc, twist, jets))
    return FixedPointStratum(a, nodes)
