"""Instrumented iteration extracting a bilinear variety from a dense P in V x W.

State.  ``V_cur`` is a subspace of the first factor F_p^{n1}; its dual is
represented by RREF coordinates, so a functional is a vector in F_p^d
(d = dim V_cur) and pairs with x in V_cur through ``x[pivots] . psi``.  Every
fiber V_y (y in A, A a subset of an affine W in F_p^{n2}) is a subspace of
V_cur whose annihilator is generated by the rows of

    G_y = [xi_1(y), ..., xi_s(y), u_1(y), ..., u_{r-s}(y)]

where the xi_j are affine maps F_p^{n2} -> F_p^d (ambient y coordinates) and
the u_k(y) are per-point vectors (zero rows allowed).  The pair (r, r - s)
never increases and one of them drops at every step, so at most 2r steps run.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .bivariety import BilinearVariety, SearchBudget, contains, greedy_variety_search
from .errors import CapExceeded, PreconditionError, TheoremViolation
from .gfspace import (
    AffineDualMap,
    AffineSubspace,
    FieldParams,
    Subspace,
    batch_rank,
    nullspace_basis,
    solve_affine,
)
from .setcalc import DenseSet, ProductSet, fiber, phi_h, phi_pipeline, phi_v, two_a_minus_two_a_rows
from .structure import affine_piece, certified_bogolyubov, partition4, regularize, regularize_pseudorandom

log = logging.getLogger(__name__)

Z4 = np.array([1, 1, -1, -1], dtype=np.int64)

# ---------------------------------------------------------------------------
# preprocessing


def dense_fibers(p: ProductSet, delta: float) -> tuple:
    """``A = {y : |B_y| >= delta |V| / 2}`` with ``B_y = {x : (x, y) in P}``."""
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    if p.card < delta * p.size - 1e-9:
        raise PreconditionError(f"density {p.density:.6g} is below delta={delta}")
    col = p.bits.sum(axis=0)
    a = DenseSet(p.params2, col >= delta * p.params1.size / 2)
    if a.density < delta / 2 - 1e-12:
        raise TheoremViolation("fewer dense fibers than averaging allows")
    fibers = {int(y): fiber(p, y, axis=2) for y in a.indices()}
    return a, fibers


@dataclass
class FiberedSet:
    v: Subspace
    w: AffineSubspace
    a: DenseSet
    fibers: dict
    r: int

    @property
    def params1(self) -> FieldParams:
        return self.v.params

    @property
    def params2(self) -> FieldParams:
        return self.w.params

    def product_view(self) -> ProductSet:
        bits = np.zeros((self.params1.size, self.params2.size), dtype=bool)
        for y in self.a.indices():
            bits[self.fibers[int(y)].elements(), y] = True
        return ProductSet(self.params1, self.params2, bits)

    def codims(self) -> dict:
        return {y: self.v.dim - vy.dim for y, vy in self.fibers.items()}


def bogolyubov_fibers(a: DenseSet, fibers: dict, source: ProductSet | None = None, full_check: bool = False):
    """Replace every fiber by its certified Bogolyubov subspace.

    With ``source`` given, containment of the result in phi_h(source) is checked
    on every column (``full_check``) or on the first and last dense columns.
    """
    subs = {}
    for y in a.indices():
        b = fibers[int(y)]
        if b.card == 0:
            raise PreconditionError(f"fiber over {b.params.format(0)} is empty")
        subs[int(y)] = certified_bogolyubov(b).subspace
    params1 = next(iter(fibers.values())).params if fibers else (source.params1 if source else None)
    if params1 is None:
        raise PreconditionError("no fibers to process")
    r = max((w.codim for w in subs.values()), default=0)
    out = FiberedSet(Subspace.full(params1), AffineSubspace.full(a.params), a, subs, r)
    if source is not None:
        ys = a.indices() if full_check else a.indices()[[0, -1]]
        image = two_a_minus_two_a_rows(source.bits[:, ys].T, source.params1).T
        view = out.product_view().bits[:, ys]
        if np.any(view & ~image):
            raise TheoremViolation("a Bogolyubov fiber escaped the horizontal image")
    return out


# ---------------------------------------------------------------------------
# state


@dataclass
class ConstraintSystem:
    xis: list
    uys: dict

    @property
    def s(self) -> int:
        return len(self.xis)


@dataclass
class StepRecord:
    step_index: int
    alternative: str
    r_before: int
    s_before: int
    r_after: int
    s_after: int
    card_a: int
    codim_w: int
    codim_v: int
    certificates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "step_index": self.step_index,
            "alternative": self.alternative,
            "r": [self.r_before, self.r_after],
            "s": [self.s_before, self.s_after],
            "card_A": self.card_a,
            "codim_W": self.codim_w,
            "codim_V": self.codim_v,
            "certificates": self.certificates,
        }


@dataclass
class SchemeState:
    fibered: FiberedSet
    constraints: ConstraintSystem
    epsilon: float
    trace: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return self.fibered.v.params.p

    @property
    def r(self) -> int:
        return self.fibered.r

    @property
    def s(self) -> int:
        return self.constraints.s

    @property
    def d(self) -> int:
        return self.fibered.v.dim

    @property
    def dual(self) -> FieldParams:
        return FieldParams(self.p, self.d)

    def ys(self) -> np.ndarray:
        return self.fibered.a.indices()

    def xi_values(self, ys=None) -> np.ndarray:
        """(|ys|, s, d) array of xi_j(y)."""
        ys = self.ys() if ys is None else np.asarray(ys, dtype=np.int64)
        yd = self.fibered.params2.to_digits(ys).reshape(len(ys), -1)
        if not self.constraints.xis:
            return np.zeros((len(ys), 0, self.d), dtype=np.int64)
        return np.stack([m.apply_digits(yd) for m in self.constraints.xis], axis=1)

    def generators(self, ys=None) -> np.ndarray:
        """(|ys|, r, d) array of G_y."""
        ys = self.ys() if ys is None else np.asarray(ys, dtype=np.int64)
        u = np.stack([self.constraints.uys[int(y)] for y in ys]) if len(ys) else np.zeros((0, self.r - self.s, self.d))
        return np.concatenate([self.xi_values(ys), u.astype(np.int64)], axis=1)

    def x_coords(self) -> np.ndarray:
        """All coordinate vectors of V_cur, index order of F_p^d."""
        return self.dual.to_digits(np.arange(self.dual.size)).reshape(self.dual.size, self.d)

    def x_points(self) -> np.ndarray:
        """Ambient indices of V_cur in coordinate order."""
        c = self.x_coords()
        return np.asarray(self.fibered.params1.from_digits(c @ self.fibered.v.matrix % self.p), dtype=np.int64).reshape(-1)

    def membership(self) -> np.ndarray:
        """(p^d, |A|) boolean: x in V_y, x by coordinate index."""
        g = self.generators()
        c = self.x_coords()
        return ~np.any(np.einsum("yrd,xd->xyr", g, c) % self.p, axis=2)


def annihilator_coords(v: Subspace, vy: Subspace) -> Subspace:
    """Annihilator of vy <= v inside v^* (coordinates F_p^{dim v})."""
    dual = FieldParams(v.params.p, v.dim)
    if vy.dim == 0:
        return Subspace.full(dual)
    rows = vy.matrix[:, list(v.pivots)]
    return Subspace.from_matrix(dual, nullspace_basis(rows, v.params.p, v.dim))


def restriction_matrix(v: Subspace, v_new: Subspace) -> np.ndarray:
    """R with psi -> R psi restricting functionals on v to v_new <= v."""
    return v_new.matrix[:, list(v.pivots)] % v.params.p


def _pad(rows: np.ndarray, k: int, d: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, d)
    out = np.zeros((k, d), dtype=np.int64)
    out[: min(k, rows.shape[0])] = rows[:k]
    return out


def initial_state(fs: FiberedSet, epsilon: float | None = None) -> SchemeState:
    d = fs.v.dim
    uys = {}
    for y, vy in fs.fibers.items():
        uys[y] = _pad(annihilator_coords(fs.v, vy).matrix, fs.r, d)
    eps = fs.v.params.p ** (-fs.r) / 256 if epsilon is None else epsilon
    return SchemeState(fs, ConstraintSystem([], uys), eps)


def check_invariants(state: SchemeState) -> None:
    """Exact check that every fiber's annihilator is spanned by its generators."""
    fs = state.fibered
    if fs.a.card and not np.all(fs.w.contains(fs.a.indices())):
        raise TheoremViolation("A left its ambient W")
    g = state.generators()
    for k, y in enumerate(fs.a.indices()):
        vy = fs.fibers[int(y)]
        if not vy.issubset(fs.v):
            raise TheoremViolation("fiber escaped V")
        if fs.v.dim - vy.dim > fs.r:
            raise TheoremViolation(f"fiber codimension {fs.v.dim - vy.dim} exceeds r={fs.r}")
        if state.constraints.uys[int(y)].shape[0] != fs.r - state.s:
            raise TheoremViolation("U_y has the wrong number of generators")
        span = Subspace.from_matrix(state.dual, g[k]) if state.d else Subspace.zero(state.dual)
        if span != annihilator_coords(fs.v, vy):
            raise TheoremViolation(f"generators do not span the annihilator of V_y at y={int(y)}")


# ---------------------------------------------------------------------------
# per-x statistics


def _bx(state: SchemeState, c: np.ndarray, w: AffineSubspace | None = None):
    """For x with coordinates c: (B_x nonempty, direction of B_x as ambient subspace, codim in dir W)."""
    w = state.fibered.w if w is None else w
    p = state.p
    prm2 = w.params
    w0 = prm2.to_digits(w.base)
    e = w.direction.matrix
    if not state.constraints.xis or w.dim == 0:
        return True, w.direction, 0
    lin = np.stack([c @ m.linear % p for m in state.constraints.xis])
    rhs = np.array([-(c @ (m.linear @ w0 + m.offset)) % p for m in state.constraints.xis], dtype=np.int64)
    h = lin @ e.T % p
    sol = solve_affine(h, rhs, p, w.dim)
    kern = nullspace_basis(h, p, w.dim)
    direction = Subspace.from_matrix(prm2, kern @ e % p) if kern.size else Subspace.zero(prm2)
    return sol is not None, direction, w.dim - direction.dim


@dataclass(frozen=True)
class ClaimStats:
    bad_x_fraction: float
    mean_alpha_x: float
    rank_hypothesis: bool
    warnings: tuple = ()


def _min_combination_rank(state: SchemeState):
    """(smallest rank of a nonzero combination of linear parts on dir W, its lambda)."""
    s = state.s
    if s == 0:
        return None, None
    p = state.p
    e = state.fibered.w.direction.matrix
    lp = FieldParams(p, s)
    lams = lp.to_digits(np.arange(1, lp.size)).reshape(-1, s)
    lins = np.stack([m.linear @ e.T % p for m in state.constraints.xis])
    combos = np.einsum("ls,sdk->ldk", lams, lins) % p
    ranks = batch_rank(combos, p)
    k = int(np.argmin(ranks))
    return int(ranks[k]), lams[k]


def rank_threshold(state: SchemeState, override: int | None = None) -> int:
    return override if override is not None else min(3 * state.r + 10, state.d)


def claim_stats(state: SchemeState, rank_override: int | None = None) -> ClaimStats:
    """Fraction of x with codim B_x < s and the mean of |A_x| / |B_x| over x in V_cur."""
    p, s = state.p, state.s
    coords = state.x_coords()
    member = state.membership()
    bad = 0
    alphas = []
    for xi, c in enumerate(coords):
        ok, direction, codim = _bx(state, c)
        bad += codim < s
        alphas.append(member[xi].sum() / direction.size if ok else 0.0)
    frac = bad / len(coords)
    mean = float(np.mean(alphas))
    min_rank, _ = _min_combination_rank(state)
    hyp = s == 0 or min_rank >= rank_threshold(state, rank_override)
    warnings = []
    if hyp:
        eps = state.epsilon
        alpha = state.fibered.a.card / state.fibered.w.size
        if frac > eps * p ** (-state.r) / 4:
            warnings.append(f"bad-x fraction {frac:.4g} exceeds eps p^-r / 4")
        if mean < alpha * p ** (s - state.r) * (1 - eps / 4) - 1e-12:
            warnings.append(f"mean alpha_x {mean:.4g} below alpha p^(s-r) (1 - eps/4)")
        for w in warnings:
            log.warning(w)
    return ClaimStats(frac, mean, hyp, tuple(warnings))


# ---------------------------------------------------------------------------
# dichotomy


@dataclass(frozen=True)
class TerminationWitness:
    x3: DenseSet
    good_fraction: float
    threshold: float
    verified: bool


@dataclass(frozen=True)
class QuadrupleStructure:
    kappa: float
    good: int
    total: int
    threshold_codim: int
    quads: np.ndarray
    good_mask: np.ndarray
    good_fraction: float
    warnings: tuple = ()


def default_tau(p: int, r: int) -> float:
    return max(p ** (-r) / 12, 0.5)


def good_x(state: SchemeState, a: DenseSet | None = None, w: AffineSubspace | None = None) -> np.ndarray:
    """Mask over coordinate index of x: B_x nonempty and 2A_x - 2A_x covers dir(B_x)."""
    fs = state.fibered
    a = fs.a if a is None else a
    w = fs.w if w is None else w
    member = state.membership()
    keep = a.bits[fs.a.indices()]
    rows = np.zeros((member.shape[0], fs.params2.size), dtype=bool)
    ys = fs.a.indices()[keep]
    rows[:, ys] = member[:, keep]
    sums = two_a_minus_two_a_rows(rows, fs.params2)
    out = np.zeros(member.shape[0], dtype=bool)
    for xi, c in enumerate(state.x_coords()):
        ok, direction, _ = _bx(state, c, w)
        out[xi] = ok and bool(sums[xi, direction.elements()].all())
    return out


def additive_quadruples(a: DenseSet, cap: int = 1 << 22) -> np.ndarray:
    """All (y1, y2, y3, y4) in A^4 with y1 + y2 = y3 + y4, lexicographic in (y1, y2, y3)."""
    idx = a.indices()
    if idx.size**3 > cap:
        raise CapExceeded("additive quadruples", idx.size**3, cap)
    prm = a.params
    y1, y2, y3 = np.meshgrid(idx, idx, idx, indexing="ij")
    y4 = np.asarray(prm.sub(prm.add(y1, y2), y3), dtype=np.int64)
    ok = a.bits[y4]
    return np.stack([y1[ok], y2[ok], y3[ok], y4[ok]], axis=1)


def _quad_generators(state: SchemeState, quads: np.ndarray) -> np.ndarray:
    ys = state.ys()
    pos = np.full(state.fibered.params2.size, -1, dtype=np.int64)
    pos[ys] = np.arange(ys.size)
    g = state.generators()
    return g[pos[quads]].reshape(len(quads), 4 * state.r, state.d)


def quadruple_structure(state: SchemeState) -> QuadrupleStructure:
    """kappa = share of additive quadruples of A with codim of the fiber intersection < 4r - s."""
    quads = additive_quadruples(state.fibered.a)
    thr = 4 * state.r - state.s
    if state.d == 0:
        mask = np.full(len(quads), thr > 0)
    elif len(quads) == 0:
        mask = np.zeros(0, dtype=bool)
    else:
        mask = batch_rank(_quad_generators(state, quads), state.p) < thr
    good = int(mask.sum())
    return QuadrupleStructure(good / max(len(quads), 1), good, len(quads), thr, quads, mask, float("nan"))


def dichotomy(
    state: SchemeState,
    tau: float | None = None,
    relax: bool = True,
    verify: bool = True,
):
    """Termination when enough x satisfy 2A_x - 2A_x = dir(B_x), else quadruple structure."""
    fs = state.fibered
    pr = fourier.pseudorandomness(fs.a, fs.w)
    warns = []
    if pr.epsilon_star > state.epsilon + 1e-12:
        msg = f"A is only {pr.epsilon_star:.4g}-pseudorandom, wanted {state.epsilon:.4g}"
        if not relax:
            raise PreconditionError(msg)
        warns.append(msg)
        log.warning(msg)
    tau = default_tau(state.p, state.r) if tau is None else tau
    mask = good_x(state)
    frac = float(mask.mean())
    if frac >= tau:
        x3 = DenseSet.from_indices(fs.params1, state.x_points()[mask])
        ok = True
        if verify:
            ok = bool(termination_set(state, mask).issubset(phi_v(fs.product_view())))
            if not ok:
                raise TheoremViolation("termination set is not inside the vertical image")
        return TerminationWitness(x3, frac, tau, ok)
    q = quadruple_structure(state)
    floor = state.p ** (-4 * state.r + state.s) * state.epsilon
    if not warns and frac < state.p ** (-state.r) / 12 and q.kappa < floor:
        raise TheoremViolation(f"kappa={q.kappa} below p^(-4r+s) eps = {floor}")
    if q.kappa < floor:
        warns.append(f"kappa={q.kappa:.4g} below the asymptotic floor {floor:.3g}")
    return QuadrupleStructure(q.kappa, q.good, q.total, q.threshold_codim, q.quads, q.good_mask, frac, tuple(warns))


def termination_set(state: SchemeState, mask: np.ndarray, w: AffineSubspace | None = None) -> ProductSet:
    """``{(x, y) : x good, y in dir(B_x)}`` as a product set."""
    fs = state.fibered
    bits = np.zeros((fs.params1.size, fs.params2.size), dtype=bool)
    pts = state.x_points()
    coords = state.x_coords()
    for xi in np.flatnonzero(mask):
        ok, direction, _ = _bx(state, coords[xi], w)
        if ok:
            bits[pts[xi], direction.elements()] = True
    return ProductSet(fs.params1, fs.params2, bits)


# ---------------------------------------------------------------------------
# linearisation


@dataclass
class CodimReduction:
    kind: str
    state: SchemeState
    details: dict


@dataclass
class NewAffineMap:
    xi: AffineDualMap
    state: SchemeState
    details: dict


def _restrict_state(state: SchemeState, v_new: Subspace, keep: np.ndarray, xis: list, uys: dict, r_new: int) -> SchemeState:
    """Restrict functionals to v_new, keep the listed ys, intersect fibers with v_new."""
    fs = state.fibered
    rmat = restriction_matrix(fs.v, v_new)
    p = state.p
    new_xis = [AffineDualMap(rmat @ m.linear % p, rmat @ m.offset % p, p) for m in xis]
    new_uys = {}
    new_fibers = {}
    for y in keep:
        y = int(y)
        new_uys[y] = (uys[y] @ rmat.T) % p if uys[y].size else np.zeros((uys[y].shape[0], v_new.dim), dtype=np.int64)
        new_fibers[y] = fs.fibers[y] & v_new
    a = DenseSet.from_indices(fs.params2, np.asarray(keep, dtype=np.int64))
    nfs = FiberedSet(v_new, fs.w, a, new_fibers, r_new)
    out = SchemeState(nfs, ConstraintSystem(new_xis, new_uys), state.epsilon, state.trace)
    check_invariants(out)
    return out


def _functional_subspace(state: SchemeState, vectors: np.ndarray) -> Subspace:
    """Common kernel inside V_cur of the given dual coordinate vectors."""
    fs = state.fibered
    vectors = np.asarray(vectors, dtype=np.int64).reshape(-1, state.d) % state.p
    if not vectors.any():
        return fs.v
    kern = nullspace_basis(vectors, state.p, state.d)
    if kern.size == 0:
        return Subspace.zero(fs.params1)
    return Subspace.from_matrix(fs.params1, kern @ fs.v.matrix % state.p)


def _complete(lam: np.ndarray, xis: list) -> tuple:
    """Maps other than the first-nonzero slot of lambda; with lambda they span the same family."""
    k0 = int(np.flatnonzero(lam)[0])
    return k0, [m for j, m in enumerate(xis) if j != k0]


def precheck_reduction(state: SchemeState, rank_override: int | None = None):
    """Reduction when some nonzero combination of the maps has low-rank linear part."""
    min_rank, lam = _min_combination_rank(state)
    if min_rank is None or min_rank >= rank_threshold(state, rank_override):
        return None
    p = state.p
    xis = state.constraints.xis
    combo = AffineDualMap(
        sum(int(l) * m.linear for l, m in zip(lam, xis)) % p,
        sum(int(l) * m.offset for l, m in zip(lam, xis)) % p,
        p,
    )
    ys = state.ys()
    vals = combo.apply_digits(state.fibered.params2.to_digits(ys).reshape(len(ys), -1))
    v_new = _functional_subspace(state, vals)
    k0, rest = _complete(lam, xis)
    new = _restrict_state(state, v_new, ys, rest, state.constraints.uys, state.r - 1)
    details = {
        "lambda": lam.tolist(),
        "combination_rank": min_rank,
        "rank_threshold": rank_threshold(state, rank_override),
        "codim_V_new": v_new.codim,
    }
    return CodimReduction("reduction-precheck", new, details)


def relation_search(state: SchemeState, quads: np.ndarray):
    """Most frequent non-obvious relation a in F_p^{4r} among the given quadruples.

    Returns ``(a as (4, r) array, number of quadruples it holds on)``.
    """
    p, r, s = state.p, state.r, state.s
    ap = FieldParams(p, 4 * r)
    if ap.size > 1 << 16:
        raise CapExceeded("relation vectors", ap.size, 1 << 16)
    avec = ap.to_digits(np.arange(ap.size)).reshape(ap.size, 4 * r)
    obvious = np.zeros((s, 4, r), dtype=np.int64)
    for j in range(s):
        obvious[j, :, j] = Z4 % p
    obv = Subspace.from_matrix(ap, obvious.reshape(s, 4 * r)) if s else Subspace.zero(ap)
    allowed = ~obv.contains(np.arange(ap.size))
    counts = np.zeros(ap.size, dtype=np.int64)
    chunk = max(1, (1 << 22) // (ap.size * max(state.d, 1)))
    for lo in range(0, len(quads), chunk):
        g = _quad_generators(state, quads[lo : lo + chunk])
        ev = np.einsum("ak,qkd->qad", avec, g) % p
        counts += (~ev.any(axis=2)).sum(axis=0)
    counts[~allowed] = 0
    best = int(np.argmax(counts))
    return avec[best].reshape(4, r), int(counts[best])


def _relation_holds(state: SchemeState, quads: np.ndarray, a: np.ndarray) -> np.ndarray:
    if len(quads) == 0:
        return np.zeros(0, dtype=bool)
    g = _quad_generators(state, quads)
    return ~np.any(np.einsum("k,qkd->qd", a.reshape(-1), g) % state.p, axis=1)


def _case1(state: SchemeState, a: np.ndarray):
    fs = state.fibered
    p, s, r, d = state.p, state.s, state.r, state.d
    ys = state.ys()
    g = state.generators()
    cp = FieldParams(p, r)
    coeffs = cp.to_digits(np.arange(cp.size)).reshape(cp.size, r)
    dual = state.dual
    in_perp = np.zeros((len(ys), dual.size), dtype=bool)
    for k in range(len(ys)):
        elems = np.unique(np.asarray(dual.from_digits(coeffs @ g[k] % p), dtype=np.int64).reshape(-1))
        in_perp[k, elems] = True
    counts = in_perp.sum(axis=0)
    counts[0] = 0
    phi_idx = int(np.argmax(counts))
    if counts[phi_idx] == 0:
        new_uys = {int(y): np.zeros((0, d), dtype=np.int64) for y in ys}
        out = SchemeState(
            FiberedSet(fs.v, fs.w, fs.a, fs.fibers, s), ConstraintSystem(list(state.constraints.xis), new_uys),
            state.epsilon, state.trace,
        )
        check_invariants(out)
        return CodimReduction("tighten", out, {"reason": "every fiber is all of V"})
    phi = dual.to_digits(phi_idx)
    s0 = in_perp[:, phi_idx]
    xv = state.xi_values()
    lp = FieldParams(p, s)
    lams = lp.to_digits(np.arange(lp.size)).reshape(lp.size, s) if s else np.zeros((1, 0), dtype=np.int64)
    combos = np.einsum("ls,ysd->yld", lams, xv) % p if s else np.zeros((len(ys), 1, d), dtype=np.int64)
    hits = np.all(combos == phi, axis=2)
    s1 = s0 & hits.any(axis=1)
    s2 = s0 & ~s1
    v_new = _functional_subspace(state, phi)
    details = {
        "phi": dual.format(phi_idx),
        "r_phi": int(counts[phi_idx]),
        "S0": int(s0.sum()),
        "S1": int(s1.sum()),
        "S2": int(s2.sum()),
        "relation": a.tolist(),
    }
    if s1.sum() >= s2.sum():
        lam_counts = hits[s1].sum(axis=0)
        lam_idx = int(np.argmax(lam_counts))
        lam = lams[lam_idx]
        s3 = s1 & hits[:, lam_idx]
        k0, rest = _complete(lam, state.constraints.xis)
        keep = ys[s3]
        new = _restrict_state(state, v_new, keep, rest, state.constraints.uys, r - 1)
        details.update({"lambda": lam.tolist(), "S3": int(s3.sum())})
        return CodimReduction("reduction-1a", new, details)
    keep = ys[s2]
    uys = {}
    xis = list(state.constraints.xis)
    rest = xis[:-1] if s else xis
    pos = {int(y): k for k, y in enumerate(ys)}
    for y in keep:
        y = int(y)
        u = state.constraints.uys[y]
        # phi = xi-part + sum nu_k u_k with some nu_k != 0; drop the first such u_k
        sol = solve_affine(g[pos[y]].T, phi, p, r)
        nu = sol[0][s:]
        drop = int(np.flatnonzero(nu % p)[0])
        kept = np.delete(u, drop, axis=0)
        if s:
            kept = np.concatenate([kept, xv[pos[y], s - 1][None]], axis=0)
        uys[y] = kept
    new = _restrict_state(state, v_new, keep, rest, uys, r - 1)
    return CodimReduction("reduction-1b", new, details)


def _case2(state: SchemeState, a: np.ndarray, quads: np.ndarray, rng_seed: int, cap: int | None):
    fs = state.fibered
    p, s, r, d = state.p, state.s, state.r, state.d
    ys = state.ys()
    holds = _relation_holds(state, quads, a)
    t = quads[holds]
    distinct = np.array([len(set(q)) == 4 for q in t.tolist()], dtype=bool) if len(t) else np.zeros(0, dtype=bool)
    t = t[distinct]
    part = partition4(fs.a, t, rng_seed)
    colors = np.full(fs.params2.size, -1, dtype=np.int64)
    colors[ys] = part.colors
    g = state.generators()
    pos = np.full(fs.params2.size, -1, dtype=np.int64)
    pos[ys] = np.arange(ys.size)
    vals = np.zeros(fs.params2.size, dtype=np.int64)
    dual = state.dual
    for y in ys:
        i = colors[y]
        v = (Z4[i] * (a[i] @ g[pos[y]])) % p
        vals[y] = int(dual.from_digits(v)) if d else 0
    aligned = t[np.all(colors[t] == np.arange(4), axis=1)] if len(t) else t
    frac = len(aligned) / fs.a.card**3
    piece = affine_piece(fs.a, vals, frac, dual, cap)
    keep = piece.s.indices()
    uys = {}
    for y in keep:
        y = int(y)
        i = colors[y]
        j_i = int(np.flatnonzero(a[i, s:] % p)[0])
        uys[y] = np.delete(state.constraints.uys[y], j_i, axis=0)
    new_fibers = {int(y): fs.fibers[int(y)] for y in keep}
    nfs = FiberedSet(fs.v, fs.w, piece.s, new_fibers, r)
    new = SchemeState(nfs, ConstraintSystem(list(state.constraints.xis) + [piece.map], uys), state.epsilon, state.trace)
    check_invariants(new)
    details = {
        "relation": a.tolist(),
        "quadruples_with_relation": int(holds.sum()),
        "nondegenerate": int(len(t)),
        "aligned_after_partition": int(len(aligned)),
        "partition_attempts": part.attempts,
        "agreement": piece.agreement,
        "graph_quadruples": piece.quadruples,
        "map": piece.map.to_json(),
    }
    return NewAffineMap(piece.map, new, details)


def linearise(
    state: SchemeState,
    quad: QuadrupleStructure,
    rng_seed: int,
    rank_override: int | None = None,
    cap: int | None = None,
):
    """Reduce the codimension or add one affine constraint, following the quadruple relation."""
    pre = precheck_reduction(state, rank_override)
    if pre is not None:
        return pre
    if quad.good == 0:
        raise PreconditionError("no quadruple has a low-codimension fiber intersection")
    good = quad.quads[quad.good_mask]
    a, hits = relation_search(state, good)
    if hits == 0:
        raise TheoremViolation("low-codimension quadruples carry no non-obvious relation")
    s = state.s
    if np.any(~np.any(a[:, s:] % state.p, axis=1)):
        return _case1(state, a)
    return _case2(state, a, quad.quads, rng_seed, cap)


# ---------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class DriverConfig:
    seed: int = 0
    tau: float | None = None
    rank_threshold: int | None = None
    epsilon: float | None = None
    relax_pseudorandom: bool = True
    full_check: bool = False
    cap: int | None = None
    budget: SearchBudget = field(default_factory=SearchBudget)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "tau": self.tau,
            "rank_threshold": self.rank_threshold,
            "epsilon": self.epsilon,
            "relax_pseudorandom": self.relax_pseudorandom,
            "full_check": self.full_check,
            "cap": self.cap,
        }


@dataclass
class DriverReport:
    steps: list
    variety: BilinearVariety | None
    word: str
    case: str
    contained: bool
    witness: tuple | None
    r0: int
    final_r: int
    final_s: int
    card_a: int
    delta: float
    endgame: dict
    timing: dict
    config: DriverConfig

    @property
    def params(self) -> tuple | None:
        return None if self.variety is None else self.variety.params

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "delta": self.delta,
            "initial_r": self.r0,
            "final": {"r": self.final_r, "s": self.final_s, "card_A": self.card_a},
            "steps": [s.to_json() for s in self.steps],
            "case": self.case,
            "word": self.word,
            "variety": None if self.variety is None else self.variety.to_json(),
            "r1_r2_r3": None if self.variety is None else list(self.variety.params),
            "containment": {"verified": self.contained, "witness": self.witness},
            "endgame": self.endgame,
            "timing": self.timing,
        }


def _seed(cfg: DriverConfig, counter: int) -> int:
    return int(np.random.SeedSequence([cfg.seed, counter]).generate_state(1)[0])


def _restrict_to(state: SchemeState, cert) -> SchemeState:
    fs = state.fibered
    a = DenseSet(fs.params2, fs.a.bits & cert.h.indicator())
    keep = {int(y) for y in a.indices()}
    nfs = FiberedSet(fs.v, cert.h, a, {y: v for y, v in fs.fibers.items() if y in keep}, fs.r)
    uys = {y: u for y, u in state.constraints.uys.items() if y in keep}
    return SchemeState(nfs, ConstraintSystem(list(state.constraints.xis), uys), state.epsilon, state.trace)


def _forms(state: SchemeState, h: AffineSubspace) -> list:
    e = h.direction.matrix
    return [m.linear @ e.T % state.p for m in state.constraints.xis]


def run_driver(p: ProductSet, delta: float, config: DriverConfig | None = None) -> DriverReport:
    cfg = config or DriverConfig()
    clock = {}
    t0 = time.perf_counter()
    a, fibers = dense_fibers(p, delta)
    fs = bogolyubov_fibers(a, fibers, p, cfg.full_check)
    clock["preprocess"] = time.perf_counter() - t0
    state = initial_state(fs, cfg.epsilon)
    check_invariants(state)
    r0 = state.r
    steps = []
    counter = 0
    case = "1"
    t1 = time.perf_counter()
    while True:
        eps = state.p ** (-state.r) / 256 if cfg.epsilon is None else cfg.epsilon
        state.epsilon = eps
        cert = regularize_pseudorandom(state.fibered.a, state.fibered.w, eps, cfg.cap)
        state = _restrict_to(state, cert)
        if state.r == state.s:
            case = "1"
            break
        outcome = dichotomy(state, cfg.tau, cfg.relax_pseudorandom)
        if isinstance(outcome, TerminationWitness):
            case = "2"
            break
        counter += 1
        before = (state.r, state.s)
        res = linearise(state, outcome, _seed(cfg, counter), cfg.rank_threshold, cfg.cap)
        new = res.state
        after = (new.r, new.s)
        if after[0] > before[0] or after[0] - after[1] > before[0] - before[1] or after == before:
            raise TheoremViolation(f"monovariant broken: {before} -> {after}")
        kind = res.kind if isinstance(res, CodimReduction) else "linearisation"
        details = dict(res.details)
        details["kappa"] = outcome.kappa
        details["good_x_fraction"] = outcome.good_fraction
        steps.append(
            StepRecord(
                len(steps), kind, before[0], before[1], after[0], after[1],
                new.fibered.a.card, new.fibered.w.codim, new.fibered.v.codim, details,
            )
        )
        state = new
        if len(steps) > 2 * r0:
            raise TheoremViolation(f"{len(steps)} steps exceed 2r = {2 * r0}")
    clock["iterate"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    variety, word, endgame = _endgame(p, state, cfg)
    clock["endgame"] = time.perf_counter() - t2
    image = phi_pipeline(p, word)
    verdict = contains(image, variety, cfg.cap) if variety is not None else None
    endgame["stage_cardinalities"] = [list(t) for t in image.trace]
    clock["total"] = time.perf_counter() - t0
    return DriverReport(
        steps,
        variety,
        word,
        case,
        bool(verdict),
        None if verdict is None else verdict.witness,
        r0,
        state.r,
        state.s,
        state.fibered.a.card,
        float(delta),
        endgame,
        {k: round(v, 6) for k, v in clock.items()},
        cfg,
    )


def _endgame(p: ProductSet, state: SchemeState, cfg: DriverConfig):
    fs = state.fibered
    gamma = fs.a.card / fs.w.size
    eta = gamma**1.5 * state.p ** (-state.r - 1) / 10
    cert = regularize(fs.a, fs.w, state.r + 1, eta, cfg.cap)
    h = cert.h
    a_h = DenseSet(fs.params2, fs.a.bits & h.indicator())
    mask = good_x(state, a_h, h)
    info = {
        "eta": eta,
        "h_codim": h.codim,
        "h_descent": len(cert.descent_trace),
        "good_x": int(mask.sum()),
        "x_total": int(mask.size),
        "fallback": False,
    }
    if mask.all():
        variety = BilinearVariety(fs.v, h.direction, tuple(_forms(state, h)))
        info["route"] = "forms"
        return variety, "VH", info
    t = termination_set(state, mask, h)
    info["route"] = "search"
    if t.card:
        found = greedy_variety_search(phi_h(t), cfg.budget)
    else:
        found = None
    if found is None or found.variety is None:
        info["fallback"] = True
        found = greedy_variety_search(phi_pipeline(p, "HVH"), cfg.budget)
    info["search"] = {k: v for k, v in found.summary().items() if k != "variety"}
    return found.variety, "HVH", info
