"""Structural lemmas at exhaustively checkable scale.

Everything that takes an ``ambient`` affine subspace works in its RREF
coordinates (see :func:`bblab.setcalc.to_relative`) and reports subspaces back
in the coordinates of the original space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import fourier
from .errors import CapExceeded, NoCertifiedSubspace, PartitionError, PreconditionError, TheoremViolation
from .gfspace import (
    AffineDualMap,
    AffineSubspace,
    FieldParams,
    Subspace,
    _resolve_cap,
    enumerate_subspaces,
    gaussian_binomial,
    nullspace_basis,
    solve_affine,
)
from .setcalc import DenseSet, from_relative, to_relative, two_a_minus_two_a

# ---------------------------------------------------------------------------
# Bogolyubov: subspace inside 2A - 2A from the large spectrum


@dataclass(frozen=True)
class BogolyubovCertificate:
    subspace: Subspace
    threshold: float
    spectrum: tuple
    bound: float
    attempts: tuple
    verified: bool

    @property
    def codim(self) -> int:
        return self.subspace.codim

    def to_json(self) -> dict:
        prm = self.subspace.params
        return {
            "basis": [prm.format(b) for b in self.subspace.basis],
            "codim": self.codim,
            "threshold": self.threshold,
            "large_spectrum": [prm.format(s) for s in self.spectrum],
            "parseval_bound": self.bound,
            "attempted_thresholds": list(self.attempts),
            "verified": self.verified,
        }


def _thresholds(alpha: float, p: int, n: int, policy):
    if policy == "auto" or policy is None:
        floor = alpha**2 * p ** (-n / 2)
        t = alpha**1.5
        while t > floor:
            yield t
            t /= 2
        yield floor
    else:
        t = float(policy)
        if not t > 0:
            raise ValueError("fixed threshold must be positive")
        yield t


def certified_bogolyubov(a: DenseSet, threshold_policy="auto", two_a=None) -> BogolyubovCertificate:
    """Annihilator of the large spectrum, verified point by point inside 2A-2A."""
    if a.card == 0:
        raise PreconditionError("Bogolyubov needs a nonempty set")
    prm = a.params
    alpha = a.density
    target = two_a_minus_two_a(a) if two_a is None else two_a
    tried = []
    for t in _thresholds(alpha, prm.p, prm.n, threshold_policy):
        tried.append(t)
        k = fourier.large_spectrum(a, t)
        w = Subspace.span(prm, np.asarray(k, dtype=np.int64)).perp() if k else Subspace.full(prm)
        if target.bits[w.elements()].all():
            return BogolyubovCertificate(w, t, tuple(k), alpha / t**2, tuple(tried), True)
    raise NoCertifiedSubspace(f"no threshold down to {tried[-1]:.3g} gave a subspace inside 2A-2A")


def spectral_bogolyubov(a: DenseSet, threshold_policy="auto") -> Subspace:
    return certified_bogolyubov(a, threshold_policy).subspace


def max_subspace_in(a: DenseSet, cap: int | None = None) -> Subspace | None:
    """Largest subspace inside ``a``; lex-least RREF basis among ties; None when 0 is not in a."""
    if not a.bits[0]:
        return None
    prm = a.params
    cap = _resolve_cap(cap)
    for codim in range(prm.n + 1):
        best = None
        for w in enumerate_subspaces(prm, codim, cap):
            if a.bits[w.elements()].all() and (best is None or w.basis < best.basis):
                best = w
        if best is not None:
            return best
    raise AssertionError("the zero subspace always fits")


# ---------------------------------------------------------------------------
# whole-space test and density increment


def wholespace_test(a: DenseSet, ambient: AffineSubspace | None = None, debug: bool = False) -> bool:
    """Exact check of ``sum_{s != 0} |1_A^(s)|^4 < alpha^4`` relative to the ambient.

    In integers: quadruples * |W| < 2 |A|^4.
    """
    rel = fourier._relative(a, ambient)
    if rel.card == 0:
        return False
    q = fourier.u2_fourth_power(rel)
    ok = q.count * rel.params.size < 2 * rel.card**4
    if ok and debug and not two_a_minus_two_a(rel).bits.all():
        raise TheoremViolation("spectral test passed but 2A-2A misses part of the ambient")
    return ok


def _rel_hyperplane(prm: FieldParams, s: int, c: int) -> AffineSubspace:
    sd = prm.to_digits(s)
    k = int(np.flatnonzero(sd)[0])
    base = np.zeros(prm.n, dtype=np.int64)
    base[k] = (c * pow(int(sd[k]), -1, prm.p)) % prm.p
    direction = Subspace.from_matrix(prm, nullspace_basis(sd[None, :], prm.p, prm.n))
    return AffineSubspace(int(prm.from_digits(base)), direction)


@dataclass(frozen=True)
class IncrementResult:
    hyperplane: AffineSubspace
    new_density: float
    old_density: float
    beta: float
    witness: int
    value: int
    count: int
    size: int

    @property
    def exact_density(self) -> Fraction:
        return Fraction(self.count, self.size)


def density_increment(a: DenseSet, ambient: AffineSubspace | None, beta: float) -> IncrementResult:
    """Densest coset ``{x : x.s = c}`` over all witnesses s with ``|1_A^(s)| >= beta``.

    Ties go to the earlier witness (large-spectrum order) and then the smaller c.
    """
    ambient = AffineSubspace.full(a.params) if ambient is None else ambient
    rel = fourier._relative(a, ambient)
    prm = rel.params
    if rel.card == 0:
        raise PreconditionError("density increment needs a nonempty set")
    if prm.n == 0:
        raise PreconditionError("a point has no nontrivial characters")
    witnesses = fourier.large_spectrum(rel, beta)
    if not witnesses:
        raise PreconditionError(f"no nontrivial coefficient reaches beta={beta}")
    idx = rel.indices()
    best = None
    for s in witnesses:
        vals = prm.dot(idx, s)
        counts = np.bincount(vals, minlength=prm.p)
        c = int(np.argmax(counts))
        if best is None or counts[c] > best[2]:
            best = (s, c, int(counts[c]))
    s, c, count = best
    size = prm.size // prm.p
    alpha = rel.card / prm.size
    new = count / size
    if new < alpha + beta / 2 - 1e-12:
        raise TheoremViolation(f"increment {new} below {alpha} + {beta}/2")
    hyper = ambient.sub(_rel_hyperplane(prm, s, c))
    return IncrementResult(hyper, new, alpha, float(beta), s, c, count, size)


# ---------------------------------------------------------------------------
# regularity


def coset_scan(rel: DenseSet, max_codim: int, cap: int | None = None, chunk: int = 2048):
    """Yield ``(annihilator_rows, counts)`` for every subspace K of dimension 1..max_codim.

    ``counts[c]`` is the number of points of ``rel`` with ``K x = c`` (c encoded
    in F_p^k), so each yield covers all cosets of one codim-k subspace K^perp.
    """
    prm = rel.params
    cap = _resolve_cap(cap)
    total = sum(gaussian_binomial(prm.n, k, prm.p) for k in range(1, min(max_codim, prm.n) + 1))
    if total > cap:
        raise CapExceeded("affine subspaces to scan", total, cap)
    digits = prm.to_digits(rel.indices())
    for k in range(1, min(max_codim, prm.n) + 1):
        kp = FieldParams(prm.p, k)
        it = enumerate_subspaces(prm, prm.n - k, cap)
        while True:
            batch = list(itertools.islice(it, chunk))
            if not batch:
                break
            mats = np.stack([w.matrix for w in batch])
            labels = (np.einsum("md,bkd->bmk", digits, mats) % prm.p) @ kp.powers
            offs = np.arange(len(batch))[:, None] * kp.size
            counts = np.bincount((labels + offs).reshape(-1), minlength=len(batch) * kp.size)
            counts = counts.reshape(len(batch), kp.size)
            for w, cnt in zip(batch, counts):
                yield w.matrix, cnt


def _coset(prm: FieldParams, kmat: np.ndarray, label: int) -> AffineSubspace:
    k = kmat.shape[0]
    rhs = FieldParams(prm.p, k).to_digits(label)
    x, _ = solve_affine(kmat, rhs, prm.p, prm.n)
    direction = Subspace.from_matrix(prm, nullspace_basis(kmat, prm.p, prm.n))
    return AffineSubspace(int(prm.from_digits(x)), direction)


@dataclass(frozen=True)
class ScanSummary:
    """Extremes of relative density over all cosets of codim 1..t."""

    max_count_ratio: Fraction
    min_count_ratio: Fraction
    argmax: tuple | None


def scan_extremes(rel: DenseSet, t: int, cap: int | None = None) -> ScanSummary:
    prm = rel.params
    hi = lo = None
    arg = None
    for kmat, cnt in coset_scan(rel, t, cap):
        k = kmat.shape[0]
        size = prm.size // prm.p**k
        c = int(np.argmax(cnt))
        top = Fraction(int(cnt[c]), size)
        bot = Fraction(int(cnt.min()), size)
        if hi is None or top > hi:
            hi, arg = top, (kmat, c)
        lo = bot if lo is None or bot < lo else lo
    return ScanSummary(hi, lo, arg)


@dataclass
class RegularityCertificate:
    h: AffineSubspace
    restricted_density: float
    t: int
    epsilon: float
    descent_trace: list = field(default_factory=list)
    initial_density: float = 0.0
    max_density: float | None = None
    min_density: float | None = None
    epsilon_star: float | None = None

    @property
    def codim(self) -> int:
        return self.h.codim

    def to_json(self) -> dict:
        def sub(h):
            prm = h.params
            return {
                "base": prm.format(h.base),
                "basis": [prm.format(b) for b in h.direction.basis],
                "codim": h.codim,
            }

        return {
            "h": sub(self.h),
            "restricted_density": self.restricted_density,
            "initial_density": self.initial_density,
            "t": self.t,
            "epsilon": self.epsilon,
            "max_codim_t_density": self.max_density,
            "min_codim_t_density": self.min_density,
            "epsilon_star": self.epsilon_star,
            "steps": [
                {"kind": kind, **sub(h), "density": dens} for kind, h, dens in self.descent_trace
            ],
        }


def _restrict(a: DenseSet, h: AffineSubspace) -> DenseSet:
    return to_relative(DenseSet(a.params, a.bits & h.indicator()), h)


def regularize(
    a: DenseSet,
    ambient: AffineSubspace | None,
    t: int,
    epsilon: float,
    cap: int | None = None,
) -> RegularityCertificate:
    """Descend into the densest violating coset until none of codim <= t beats alpha(1+eps).

    alpha is the density in the current subspace at each step.  The final
    certificate carries the exact extremes of the last scan, which must lie in
    ``[alpha(1 - p^t eps), alpha(1 + eps)]``.
    """
    ambient = AffineSubspace.full(a.params) if ambient is None else ambient
    rel0 = fourier._relative(a, ambient)
    if rel0.card == 0:
        raise PreconditionError("regularity needs a nonempty set")
    eps = Fraction(epsilon)
    cur = ambient
    trace = []
    alpha0 = rel0.card / rel0.params.size
    while True:
        rel = _restrict(a, cur)
        alpha = Fraction(rel.card, rel.params.size)
        summary = scan_extremes(rel, t, cap)
        if summary.max_count_ratio is None or summary.max_count_ratio <= alpha * (1 + eps):
            break
        kmat, c = summary.argmax
        cur = cur.sub(_coset(rel.params, kmat, c))
        trace.append(("regularity", cur, float(summary.max_count_ratio)))
    cert = RegularityCertificate(cur, float(alpha), t, float(epsilon), trace, alpha0)
    if summary.max_count_ratio is not None:
        cert.max_density = float(summary.max_count_ratio)
        cert.min_density = float(summary.min_count_ratio)
        p_t = rel.params.p ** min(t, rel.params.n)
        if summary.min_count_ratio < alpha * (1 - p_t * eps):
            raise TheoremViolation("regularity lower bound failed")
    return cert


def regularize_pseudorandom(
    a: DenseSet,
    ambient: AffineSubspace | None,
    epsilon: float,
    cap: int | None = None,
) -> RegularityCertificate:
    """Alternate a t=1 regularity pass with density increments until eps-pseudorandom.

    The pass uses eps' = alpha^{1/2} eps^{1/2} / 2 and the increment uses
    beta = alpha^{3/2} eps^{1/2}, alpha being the current density.
    """
    ambient = AffineSubspace.full(a.params) if ambient is None else ambient
    rel0 = fourier._relative(a, ambient)
    if rel0.card == 0:
        raise PreconditionError("regularity needs a nonempty set")
    cur = ambient
    trace = []
    alpha0 = rel0.card / rel0.params.size
    while True:
        rel = _restrict(a, cur)
        alpha = rel.density
        eps_pass = math.sqrt(alpha * epsilon) / 2
        cert = regularize(from_relative(rel, cur), cur, 1, eps_pass, cap)
        trace.extend(cert.descent_trace)
        cur = cert.h
        rel = _restrict(a, cur)
        alpha = rel.density
        eps_star = fourier.epsilon_star_exact(rel)
        if eps_star <= Fraction(epsilon):
            break
        inc = density_increment(rel, None, alpha**1.5 * math.sqrt(epsilon))
        cur = cur.sub(inc.hyperplane)
        trace.append(("increment", cur, inc.new_density))
    out = RegularityCertificate(cur, alpha, 1, float(epsilon), trace, alpha0)
    out.max_density, out.min_density = cert.max_density, cert.min_density
    out.epsilon_star = float(eps_star)
    return out


# ---------------------------------------------------------------------------
# random four-colouring


@dataclass(frozen=True)
class PartitionResult:
    parts: tuple
    retained: int
    attempts: int
    colors: np.ndarray


def _retained(colors_full: np.ndarray, tuples: np.ndarray) -> np.ndarray:
    hit = colors_full[tuples] == np.arange(4)
    return hit.all(axis=1)


def partition4(universe: DenseSet, t, rng_seed: int, max_retries: int = 10_000) -> PartitionResult:
    """Colour the universe uniformly with 4 colours until >= ceil(|T|/256) tuples are rainbow-aligned."""
    tuples = np.asarray(t, dtype=np.int64).reshape(-1, 4)
    if tuples.size:
        if not universe.bits[tuples].all():
            raise PreconditionError("tuple entries must lie in the universe")
        srt = np.sort(tuples, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise PreconditionError("tuple entries must be pairwise distinct")
    need = -(-len(tuples) // 256)
    rng = np.random.default_rng(rng_seed)
    pts = universe.indices()
    best = None
    for attempt in range(1, max_retries + 1):
        colors = rng.integers(0, 4, size=pts.size)
        full = np.full(universe.params.size, -1, dtype=np.int64)
        full[pts] = colors
        kept = int(_retained(full, tuples).sum()) if tuples.size else 0
        if kept >= need:
            parts = tuple(DenseSet.from_indices(universe.params, pts[colors == i]) for i in range(4))
            return PartitionResult(parts, kept, attempt, colors)
        if best is None or kept > best.retained:
            parts = tuple(DenseSet.from_indices(universe.params, pts[colors == i]) for i in range(4))
            best = PartitionResult(parts, kept, attempt, colors)
    raise PartitionError(f"no colouring reached {need} retained tuples in {max_retries} tries", best)


def aligned_tuples(parts, t) -> np.ndarray:
    """Mask of tuples whose i-th entry lies in part i."""
    tuples = np.asarray(t, dtype=np.int64).reshape(-1, 4)
    return np.stack([parts[i].bits[tuples[:, i]] for i in range(4)], axis=1).all(axis=1)


# ---------------------------------------------------------------------------
# best affine approximation by exhaustive search


@dataclass(frozen=True)
class AffinePiece:
    s: DenseSet
    map: AffineDualMap
    agreement: int
    quadruples: int


def graph_quadruples(domain: DenseSet, values: np.ndarray, target: FieldParams) -> int:
    """Additive quadruples of the graph ``{(y, xi(y)) : y in domain}``."""
    gp = FieldParams(domain.params.p, domain.params.n + target.n)
    idx = domain.indices()
    g = idx * target.size + values[idx]
    return fourier.u2_fourth_power(DenseSet.from_indices(gp, g)).count


def _as_values(domain: DenseSet, xi, target: FieldParams) -> np.ndarray:
    vals = np.zeros(domain.params.size, dtype=np.int64)
    idx = domain.indices()
    if callable(xi):
        vals[idx] = [int(xi(int(y))) for y in idx]
    elif isinstance(xi, dict):
        vals[idx] = [int(xi[int(y)]) for y in idx]
    else:
        arr = np.asarray(xi, dtype=np.int64)
        vals[idx] = arr[idx] if arr.shape[0] == domain.params.size else arr
    if idx.size and (vals[idx].min() < 0 or vals[idx].max() >= target.size):
        raise PreconditionError("map values fall outside the target space")
    return vals


def affine_piece(
    domain: DenseSet,
    xi,
    min_quadruple_fraction: float,
    target: FieldParams,
    cap: int | None = None,
    chunk: int = 1 << 12,
) -> AffinePiece:
    """Affine map agreeing with ``xi`` on the most points of ``domain``.

    Linear parts are scanned in lexicographic order of their row-major digits;
    for each, the best offset is the most common value of ``xi(y) - L y``
    (smallest offset on ties).  The earliest (L, offset) with maximal agreement wins.
    """
    p = domain.params.p
    n_in, n_out = domain.params.n, target.n
    cap = _resolve_cap(cap)
    needed = p ** ((n_in + 1) * n_out)
    if needed > cap:
        raise CapExceeded("affine maps", needed, cap)
    vals = _as_values(domain, xi, target)
    idx = domain.indices()
    quads = graph_quadruples(domain, vals, target) if idx.size else 0
    if quads < min_quadruple_fraction * idx.size**3:
        raise PreconditionError(
            f"graph has {quads} additive quadruples, fewer than {min_quadruple_fraction}*|domain|^3"
        )
    if idx.size == 0:
        m = AffineDualMap(np.zeros((n_out, n_in), dtype=np.int64), np.zeros(n_out, dtype=np.int64), p)
        return AffinePiece(domain, m, 0, 0)
    yd = domain.params.to_digits(idx)
    xd = target.to_digits(vals[idx])
    lin_params = FieldParams(p, n_in * n_out) if n_in * n_out else None
    n_lin = p ** (n_in * n_out)
    best = (-1, None, None)
    for lo in range(0, n_lin, chunk):
        ids = np.arange(lo, min(n_lin, lo + chunk), dtype=np.int64)
        if lin_params is None:
            mats = np.zeros((ids.size, n_out, n_in), dtype=np.int64)
        else:
            mats = lin_params.to_digits(ids).reshape(ids.size, n_out, n_in)
        ly = np.einsum("bok,mk->bmo", mats, yd)
        resid = target.from_digits(xd[None] - ly)
        resid = np.asarray(resid, dtype=np.int64).reshape(ids.size, -1)
        offs = np.arange(ids.size)[:, None] * target.size
        counts = np.bincount((resid + offs).reshape(-1), minlength=ids.size * target.size)
        counts = counts.reshape(ids.size, target.size)
        flat = int(np.argmax(counts))
        b, off = divmod(flat, target.size)
        if counts[b, off] > best[0]:
            best = (int(counts[b, off]), mats[b], off)
    agree, lin, off = best
    m = AffineDualMap(lin, target.to_digits(off), p)
    s_idx = idx[np.asarray(m(idx), dtype=np.int64).reshape(-1) == vals[idx]]
    s = DenseSet.from_indices(domain.params, s_idx)
    return AffinePiece(s, m, agree, quads)
