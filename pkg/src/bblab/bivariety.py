"""Bilinear varieties {(x, y) in W1 x W2 : Q_1(x, y) = ... = Q_k(x, y) = 0}.

Forms are stored in the RREF coordinates of W1 and W2: a member x of W1 has
coordinates ``x[pivots(W1)]``, so a form is a dim(W1) x dim(W2) matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbientMismatch, CapExceeded, ParseError, TheoremViolation
from .gfspace import FieldParams, Subspace, _resolve_cap, all_subspaces, batch_rank, enumerate_subspaces, rank, rref
from .setcalc import ProductSet, parse_word, phi_pipeline


def _prune(forms, shape, p) -> tuple:
    kept = []
    rows = np.zeros((0, shape[0] * shape[1]), dtype=np.int64)
    for q in forms:
        q = np.asarray(q, dtype=np.int64).reshape(shape) % p
        cand = np.concatenate([rows, q.reshape(1, -1)])
        if rank(cand, p) > rows.shape[0]:
            rows = cand
            q.setflags(write=False)
            kept.append(q)
    return tuple(kept)


@dataclass(frozen=True, eq=False)
class BilinearVariety:
    w1: Subspace
    w2: Subspace
    forms: tuple = ()

    def __post_init__(self):
        if self.w1.params.p != self.w2.params.p:
            raise AmbientMismatch("both subspaces must live over the same field")
        object.__setattr__(self, "forms", _prune(self.forms, (self.w1.dim, self.w2.dim), self.p))

    @property
    def p(self) -> int:
        return self.w1.params.p

    @property
    def r1(self) -> int:
        return self.w1.codim

    @property
    def r2(self) -> int:
        return self.w2.codim

    @property
    def r3(self) -> int:
        return len(self.forms)

    @property
    def params(self) -> tuple:
        return (self.r1, self.r2, self.r3)

    @classmethod
    def from_ambient_forms(cls, w1: Subspace, w2: Subspace, forms) -> "BilinearVariety":
        """Forms given as n1 x n2 matrices acting on ambient vectors."""
        coord = [(w1.matrix @ np.asarray(q, dtype=np.int64) @ w2.matrix.T) % w1.params.p for q in forms]
        return cls(w1, w2, tuple(coord))

    def ambient_forms(self) -> list:
        """n1 x n2 matrices agreeing with the stored forms on W1 x W2."""
        out = []
        for q in self.forms:
            a = np.zeros((self.w1.params.n, self.w2.params.n), dtype=np.int64)
            a[np.ix_(list(self.w1.pivots), list(self.w2.pivots))] = q
            out.append(a)
        return out

    def __eq__(self, other):
        if not isinstance(other, BilinearVariety):
            return NotImplemented
        if self.w1 != other.w1 or self.w2 != other.w2 or self.r3 != other.r3:
            return False
        if not self.forms:
            return True
        a = rref(np.stack([q.reshape(-1) for q in self.forms]), self.p)[0]
        b = rref(np.stack([q.reshape(-1) for q in other.forms]), self.p)[0]
        return np.array_equal(a, b)

    def __hash__(self):
        return hash((self.w1, self.w2, self.r3))

    def __repr__(self):
        return f"BilinearVariety(r1={self.r1}, r2={self.r2}, r3={self.r3}, w1={self.w1!r}, w2={self.w2!r})"

    def to_json(self) -> dict:
        f1, f2 = self.w1.params, self.w2.params
        return {
            "p": self.p,
            "n1": f1.n,
            "n2": f2.n,
            "w1": [f1.format(b) for b in self.w1.basis],
            "w2": [f2.format(b) for b in self.w2.basis],
            "forms": [q.tolist() for q in self.forms],
            "r1": self.r1,
            "r2": self.r2,
            "r3": self.r3,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BilinearVariety":
        try:
            p = int(obj.get("p", 2))
            f1, f2 = FieldParams(p, int(obj["n1"])), FieldParams(p, int(obj["n2"]))
            w1 = Subspace.span(f1, np.asarray([f1.parse(s) for s in obj["w1"]], dtype=np.int64))
            w2 = Subspace.span(f2, np.asarray([f2.parse(s) for s in obj["w2"]], dtype=np.int64))
            return cls(w1, w2, tuple(np.asarray(q, dtype=np.int64) for q in obj["forms"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad variety description: {exc}") from None


def _coords(w: Subspace) -> tuple:
    """(coordinate digit rows, ambient indices) of every member, in coordinate order."""
    cp = FieldParams(w.params.p, w.dim)
    c = cp.to_digits(np.arange(cp.size, dtype=np.int64)).reshape(cp.size, w.dim)
    pts = np.asarray(w.params.from_digits(w.from_coord_digits(c)), dtype=np.int64).reshape(-1)
    return c, pts


def variety_members(v: BilinearVariety, cap: int | None = None) -> ProductSet:
    cap = _resolve_cap(cap)
    if v.w1.size * v.w2.size > cap:
        raise CapExceeded("variety members", v.w1.size * v.w2.size, cap)
    c1, x = _coords(v.w1)
    c2, y = _coords(v.w2)
    ok = np.ones((x.size, y.size), dtype=bool)
    for q in v.forms:
        ok &= (c1 @ q @ c2.T) % v.p == 0
    bits = np.zeros((v.w1.params.size, v.w2.params.size), dtype=bool)
    bits[np.ix_(x, y)] = ok
    return ProductSet(v.w1.params, v.w2.params, bits)


@dataclass(frozen=True)
class Containment:
    ok: bool
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def contains(s: ProductSet, v: BilinearVariety, cap: int | None = None) -> Containment:
    """Whether every member of v lies in s; the witness is the first missing member."""
    if (s.params1, s.params2) != (v.w1.params, v.w2.params):
        raise AmbientMismatch("variety and set live in different products")
    missing = variety_members(v, cap).bits & ~s.bits
    if not missing.any():
        return Containment(True)
    x, y = divmod(int(np.flatnonzero(missing.reshape(-1))[0]), s.params2.size)
    return Containment(False, (x, y))


# ---------------------------------------------------------------------------
# search


@dataclass(frozen=True)
class SearchBudget:
    max_total_codim: int | None = None
    max_pairs: int | None = None
    exact: bool = False
    cap: int | None = None


@dataclass
class SearchResult:
    variety: BilinearVariety | None
    pairs_examined: int = 0
    pairs_skipped: int = 0
    exhausted: bool = False
    reason: str = ""
    best_key: tuple | None = None

    def summary(self) -> dict:
        out = {
            "found": self.variety is not None,
            "pairs_examined": self.pairs_examined,
            "pairs_skipped": self.pairs_skipped,
            "budget_exhausted": self.exhausted,
        }
        if self.reason:
            out["reason"] = self.reason
        if self.variety is not None:
            out["variety"] = self.variety.to_json()
        return out


def _form_space(p: int, d: int, cap: int) -> np.ndarray:
    if p**d > min(cap, 1 << 24):
        raise CapExceeded("candidate bilinear forms", p**d, min(cap, 1 << 24))
    fp = FieldParams(p, d)
    return fp.to_digits(np.arange(1, fp.size, dtype=np.int64)).reshape(-1, d)


def _greedy_cover(evals: np.ndarray) -> list:
    """Rows of ``evals`` (forms x bad points, True = excludes) picked greedily."""
    remaining = np.ones(evals.shape[1], dtype=bool)
    chosen = []
    while remaining.any():
        gain = (evals & remaining).sum(axis=1)
        best = int(np.argmax(gain))
        if gain[best] == 0:
            break
        chosen.append(best)
        remaining &= ~evals[best]
    return chosen


def _exact_cover(forms, outer, p, upper: int, cap: int):
    """Smallest span of forms vanishing on no bad point, searched by dimension below ``upper``."""
    d = forms.shape[1]
    fp = FieldParams(p, d)
    for k in range(upper):
        for sub in enumerate_subspaces(fp, d - k, cap):
            if k == 0:
                ok = outer.shape[0] == 0
            else:
                ok = bool(((sub.matrix @ outer.T) % p != 0).any(axis=0).all())
            if ok:
                return [row for row in sub.matrix]
    return None


def _fit_pair(s: ProductSet, w1: Subspace, w2: Subspace, exact: bool, cap: int):
    c1, x = _coords(w1)
    c2, y = _coords(w2)
    if not (s.bits[x, 0].all() and s.bits[0, y].all()):
        return None
    inside = s.bits[np.ix_(x, y)]
    bi, bj = np.nonzero(~inside)
    p = s.p
    d = w1.dim * w2.dim
    if bi.size == 0:
        return BilinearVariety(w1, w2, ())
    outer = (c1[bi][:, :, None] * c2[bj][:, None, :]).reshape(bi.size, d) % p
    forms = _form_space(p, d, cap)
    evals = (forms @ outer.T) % p != 0
    chosen = _greedy_cover(evals)
    picked = [forms[i] for i in chosen]
    if exact and d <= 9:
        better = _exact_cover(forms, outer, p, len(picked), cap)
        if better is not None:
            picked = better
    return BilinearVariety(w1, w2, tuple(q.reshape(w1.dim, w2.dim) for q in picked))


def greedy_variety_search(s: ProductSet, budget: SearchBudget | None = None) -> SearchResult:
    """Bilinear variety inside ``s`` minimising max(r1, r2, r3), then r1+r2+r3, then bases.

    Subspace pairs are visited by increasing r1 + r2; the scan stops once
    ceil((r1 + r2)/2) can no longer beat the best max found.
    """
    budget = budget or SearchBudget()
    cap = _resolve_cap(budget.cap)
    if not s.bits[0, 0]:
        return SearchResult(None, reason="(0,0) is not in the set")
    subs1 = all_subspaces(s.params1, cap)
    subs2 = all_subspaces(s.params2, cap)
    by1, by2 = {}, {}
    for w in subs1:
        by1.setdefault(w.codim, []).append(w)
    for w in subs2:
        by2.setdefault(w.codim, []).append(w)
    n1, n2 = s.params1.n, s.params2.n
    top = n1 + n2 if budget.max_total_codim is None else min(budget.max_total_codim, n1 + n2)
    res = SearchResult(None)
    best_key = None

    def pairs():
        for total in range(top + 1):
            if best_key is not None and -(-total // 2) > best_key[0]:
                return
            for r1 in range(max(0, total - n2), min(n1, total) + 1):
                for w1 in by1.get(r1, []):
                    for w2 in by2.get(total - r1, []):
                        yield w1, w2

    for w1, w2 in pairs():
        if budget.max_pairs is not None and res.pairs_examined >= budget.max_pairs:
            res.exhausted = True
            break
        res.pairs_examined += 1
        try:
            v = _fit_pair(s, w1, w2, budget.exact, cap)
        except CapExceeded:
            res.pairs_skipped += 1
            continue
        if v is None:
            continue
        key = (max(v.params), sum(v.params), w1.basis, w2.basis)
        if best_key is None or key < best_key:
            best_key, res.variety = key, v
    if res.variety is None:
        res.reason = "budget exhausted before any variety fit"
        return res
    if not contains(s, res.variety, cap):
        raise TheoremViolation("search returned a variety that is not contained in the set")
    res.best_key = best_key[:2]
    return res


# ---------------------------------------------------------------------------
# low-rank corollary


@dataclass(frozen=True, eq=False)
class BilinearMapTensor:
    """psi(f, g) = sum_ij f_i g_j C[i, j] with C of shape (n1, n2, m, m)."""

    components: np.ndarray
    p: int = 2

    def __post_init__(self):
        c = np.asarray(self.components, dtype=np.int64)
        if c.ndim != 4 or c.shape[2] != c.shape[3]:
            raise ValueError(f"components must have shape (n1, n2, m, m), got {c.shape}")
        c = c % self.p
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    @property
    def n1(self) -> int:
        return self.components.shape[0]

    @property
    def n2(self) -> int:
        return self.components.shape[1]

    @property
    def m(self) -> int:
        return self.components.shape[2]

    def evaluate(self, f, g) -> np.ndarray:
        return np.einsum("...i,...j,ijab->...ab", f, g, self.components) % self.p

    def rank_table(self) -> np.ndarray:
        """rank psi(f, g) for every (f, g), indexed by (index(f), index(g))."""
        f1, f2 = FieldParams(self.p, self.n1), FieldParams(self.p, self.n2)
        fd = f1.to_digits(np.arange(f1.size)).reshape(f1.size, self.n1)
        gd = f2.to_digits(np.arange(f2.size)).reshape(f2.size, self.n2)
        mats = np.einsum("xi,yj,ijab->xyab", fd, gd, self.components) % self.p
        return batch_rank(mats, self.p)

    def to_json(self) -> dict:
        return {"p": self.p, "m": self.m, "n1": self.n1, "n2": self.n2, "components": self.components.tolist()}

    @classmethod
    def from_json(cls, obj) -> "BilinearMapTensor":
        if isinstance(obj, str):
            try:
                obj = json.loads(obj)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        try:
            p = int(obj.get("p", 2))
            m, n1, n2 = int(obj["m"]), int(obj["n1"]), int(obj["n2"])
            comp = np.asarray(obj["components"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad tensor description: {exc}") from None
        if comp.shape != (n1, n2, m, m):
            raise ParseError(f"components have shape {comp.shape}, expected {(n1, n2, m, m)}")
        if comp.size and (comp.min() < 0 or comp.max() >= p):
            raise ParseError(f"component entries must be residues mod {p}")
        FieldParams(p, n1)
        return cls(comp, p)

    @classmethod
    def dot_product(cls, n: int, p: int = 2) -> "BilinearMapTensor":
        c = np.zeros((n, n, 1, 1), dtype=np.int64)
        for i in range(n):
            c[i, i, 0, 0] = 1
        return cls(c, p)

    @classmethod
    def outer_product(cls, n: int, p: int = 2) -> "BilinearMapTensor":
        c = np.zeros((n, n, n, n), dtype=np.int64)
        for i in range(n):
            for j in range(n):
                c[i, j, i, j] = 1
        return cls(c, p)


@dataclass
class RankReport:
    epsilon: int
    word: tuple
    delta: float
    low_rank_card: int
    stages: list
    histogram: dict
    bound: int
    max_rank: int
    verdict: str
    search: SearchResult | None = field(default=None)

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "word": "".join(self.word),
            "delta": self.delta,
            "low_rank_card": self.low_rank_card,
            "stage_cardinalities": [list(s) for s in self.stages],
            "rank_histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "rank_bound": self.bound,
            "max_image_rank": self.max_rank,
            "verdict": self.verdict,
            "variety": None if self.search is None else self.search.summary(),
        }


def rank_corollary_check(
    psi: BilinearMapTensor,
    epsilon: int,
    word="HVH",
    budget: SearchBudget | None = None,
    search: bool = True,
) -> RankReport:
    """Every point of phi_word(P_eps) must have rank <= 4^|word| eps (subadditivity of rank)."""
    w = parse_word(word)
    ranks = psi.rank_table()
    f1, f2 = FieldParams(psi.p, psi.n1), FieldParams(psi.p, psi.n2)
    cap = _resolve_cap(None if budget is None else budget.cap)
    if f1.size * f2.size > cap:
        raise CapExceeded("pairs (f, g)", f1.size * f2.size, cap)
    low = ProductSet(f1, f2, ranks <= epsilon)
    image = phi_pipeline(low, w)
    bound = 4 ** len(w) * int(epsilon)
    img_ranks = ranks[image.bits]
    hist = {int(k): int(v) for k, v in zip(*np.unique(img_ranks, return_counts=True))}
    max_rank = int(img_ranks.max(initial=0))
    verdict = "PASS" if max_rank <= bound else "FAIL"
    found = greedy_variety_search(image, budget) if search else None
    return RankReport(
        int(epsilon), w, low.density, low.card, [list(t) for t in image.trace], hist, bound, max_rank, verdict, found
    )
