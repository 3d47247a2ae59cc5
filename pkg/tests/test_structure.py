import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bblab import fourier
from bblab.errors import CapExceeded, PartitionError, PreconditionError
from bblab.gfspace import AffineDualMap, AffineSubspace, FieldParams, Subspace
from bblab.setcalc import DenseSet, two_a_minus_two_a
from bblab.structure import (
    affine_piece,
    aligned_tuples,
    certified_bogolyubov,
    density_increment,
    graph_quadruples,
    max_subspace_in,
    partition4,
    regularize,
    regularize_pseudorandom,
    spectral_bogolyubov,
    wholespace_test,
)

F22, F23, F24 = FieldParams(2, 2), FieldParams(2, 3), FieldParams(2, 4)
L_SHAPE = ["00", "01", "10"]


@st.composite
def sets(draw, spaces=st.sampled_from([(2, 2), (2, 3), (2, 4), (3, 2), (5, 1)])):
    p, n = draw(spaces)
    prm = FieldParams(p, n)
    bits = np.array(draw(st.lists(st.booleans(), min_size=prm.size, max_size=prm.size)))
    bits[0] = True
    return DenseSet(prm, bits)


# --- Bogolyubov ------------------------------------------------------------


def test_bogolyubov_examples():
    w = Subspace.span(F24, [3, 4])
    assert spectral_bogolyubov(DenseSet.of(w)) == w
    assert spectral_bogolyubov(DenseSet.full(F23)) == Subspace.full(F23)
    cert = certified_bogolyubov(DenseSet.from_strings(F22, L_SHAPE))
    assert cert.codim == 0 and cert.spectrum == () and cert.verified
    assert cert.threshold == pytest.approx(0.75**1.5)
    assert spectral_bogolyubov(DenseSet.from_indices(F23, [6])) == Subspace.zero(F23)
    with pytest.raises(PreconditionError):
        certified_bogolyubov(DenseSet.empty(F23))


@given(sets())
def test_bogolyubov_subspace_lies_in_sumset(a):
    cert = certified_bogolyubov(a)
    target = oracles.sumset_2a2a(set(a.indices().tolist()), a.params.p, a.params.n)
    assert set(cert.subspace.elements().tolist()) <= target
    assert len(cert.spectrum) <= cert.bound + 1e-9
    assert cert.codim <= len(cert.spectrum)


def test_max_subspace_examples():
    assert max_subspace_in(DenseSet.full(F23)) == Subspace.full(F23)
    assert max_subspace_in(DenseSet.from_indices(F23, [1, 2])) is None
    assert max_subspace_in(DenseSet.from_strings(F22, ["00", "01", "10"])) == Subspace.span(F22, [1])


@given(sets())
def test_max_subspace_matches_oracle(a):
    w = max_subspace_in(a)
    s = set(a.indices().tolist())
    assert set(w.elements().tolist()) <= s
    assert w.dim == oracles.largest_subspace_in(s, a.params.p, a.params.n)


def test_wholespace_examples():
    assert wholespace_test(DenseSet.full(F23))
    assert not wholespace_test(DenseSet.of(Subspace.span(F23, [1, 2])))
    assert wholespace_test(DenseSet.from_strings(F22, L_SHAPE))
    h = AffineSubspace(4, Subspace.span(F23, [1, 2]))
    assert wholespace_test(DenseSet(F23, h.indicator()), h)


@given(sets())
def test_wholespace_soundness(a):
    if wholespace_test(a, debug=True):
        assert two_a_minus_two_a(a).bits.all()


# --- density increment -----------------------------------------------------


def test_density_increment_examples():
    res = density_increment(DenseSet.from_strings(F22, L_SHAPE), None, 0.25)
    # every witness has |coefficient| 1/4; the first in (magnitude, index) order wins the tie
    assert (res.witness, res.value) == (1, 0)
    assert res.exact_density == 1 >= Fraction(3, 4) + Fraction(1, 8)
    assert res.hyperplane.elements().tolist() == [0, 2]
    hyper = Subspace.span(F23, [1, 2])
    res = density_increment(DenseSet.of(hyper), None, 0.5)
    assert res.hyperplane == AffineSubspace.linear(hyper) and res.new_density == 1
    with pytest.raises(PreconditionError):
        density_increment(DenseSet.full(F23), None, 0.01)


def test_density_increment_in_affine_ambient():
    h = AffineSubspace(8, Subspace.span(F24, [1, 2, 4]))
    a = DenseSet.from_indices(F24, [8, 9, 10, 11, 12])
    res = density_increment(a, h, 0.2)
    pts = res.hyperplane.elements()
    assert all(h.contains(pts))
    assert res.new_density == a.bits[pts].mean() >= 5 / 8 + 0.1


# --- regularity ------------------------------------------------------------


def _exhaustive_extremes(a: DenseSet, h: AffineSubspace, t: int):
    p, n = a.params.p, a.params.n
    pts = h.elements().tolist()
    aset = set(a.indices().tolist())
    dens = []
    for m in range(1, t + 1):
        for funcs in itertools.product(oracles.points(p, n), repeat=m):
            dens += oracles.coset_densities(aset, pts, funcs, p, n)
    return Fraction(sum(x in aset for x in pts), len(pts)), max(dens), min(dens)


def test_regularize_examples():
    cert = regularize(DenseSet.full(F23), None, 1, 0.1)
    assert cert.h == AffineSubspace.full(F23) and cert.descent_trace == []
    hyper = Subspace.span(F23, [1, 2])
    cert = regularize(DenseSet.of(hyper), None, 1, 0.1)
    assert cert.h == AffineSubspace.linear(hyper)
    assert len(cert.descent_trace) == 1 and cert.restricted_density == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1, 2]), st.sampled_from([0.1, 0.5]))
def test_regularize_certificate_against_exhaustive_scan(seed, t, eps):
    rng = np.random.default_rng(seed)
    a = DenseSet(F24, rng.random(16) < 0.5)
    if a.card == 0:
        return
    cert = regularize(a, None, t, eps)
    alpha, hi, lo = _exhaustive_extremes(a, cert.h, t)
    assert hi <= alpha * (1 + Fraction(eps))
    assert lo >= alpha * (1 - 2**t * Fraction(eps))
    assert cert.restricted_density == float(alpha)


def test_regularize_pseudorandom_examples():
    full = regularize_pseudorandom(DenseSet.full(F23), None, 0.1)
    assert full.h == AffineSubspace.full(F23) and full.epsilon_star == 0
    hyper = Subspace.span(F23, [1, 2])
    cert = regularize_pseudorandom(DenseSet.of(hyper), None, 0.5)
    assert cert.h == AffineSubspace.linear(hyper) and cert.epsilon_star == 0
    w = Subspace.span(F24, [1, 2])
    two = DenseSet.of(w) | DenseSet.of(w).translate(4)
    cert = regularize_pseudorandom(two, None, 0.25)
    rel = DenseSet(F24, two.bits & cert.h.indicator())
    pts = set(cert.h.elements().tolist())
    count = oracles.quad_count(set(rel.indices().tolist()), 2, 4)
    eps_star = Fraction(count * len(pts), rel.card**4) - 1
    assert eps_star <= Fraction(1, 4)
    assert eps_star == Fraction(cert.epsilon_star)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.05, 0.3]))
def test_regularize_pseudorandom_reaches_target(seed, eps):
    rng = np.random.default_rng(seed)
    a = DenseSet(F24, rng.random(16) < 0.4)
    if a.card == 0:
        return
    cert = regularize_pseudorandom(a, None, eps)
    assert fourier.epsilon_star_exact(DenseSet(F24, a.bits & cert.h.indicator()), cert.h) <= Fraction(eps)


# --- partition -------------------------------------------------------------


def test_partition_examples():
    res = partition4(DenseSet.full(F24), [], rng_seed=0)
    assert res.retained == 0 and res.attempts == 1
    res = partition4(DenseSet.full(F24), [(1, 2, 3, 4)], rng_seed=42)
    # attempt count frozen from a seeded run
    assert res.retained == 1 and res.attempts == 27
    assert [1 in res.parts[0], 2 in res.parts[1], 3 in res.parts[2], 4 in res.parts[3]] == [True] * 4


def test_partition_256_tuples():
    rng = np.random.default_rng(3)
    t = {tuple(int(v) for v in rng.choice(16, 4, replace=False)) for _ in range(400)}
    t = np.array(sorted(t))[:256]
    res = partition4(DenseSet.full(F24), t, rng_seed=11)
    recount = sum(all(row[i] in res.parts[i] for i in range(4)) for row in t.tolist())
    assert recount == res.retained == int(aligned_tuples(res.parts, t).sum()) >= 1


def test_partition_failure_carries_best_attempt():
    with pytest.raises(PartitionError) as info:
        partition4(DenseSet.full(F24), [(1, 2, 3, 4)], rng_seed=42, max_retries=3)
    assert info.value.best is not None and info.value.best.retained == 0
    with pytest.raises(PreconditionError):
        partition4(DenseSet.full(F24), [(1, 1, 2, 3)], rng_seed=0)


# --- affine pieces ---------------------------------------------------------


def _all_affine_agreements(domain, values, p, n_in, n_out):
    best = 0
    for lin in itertools.product(range(p), repeat=n_in * n_out + n_out):
        m = AffineDualMap(np.array(lin[: n_in * n_out]).reshape(n_out, n_in), np.array(lin[n_in * n_out :]), p)
        best = max(best, sum(int(m(int(y))) == values[int(y)] for y in domain.indices()))
    return best


def test_affine_piece_examples():
    dom = DenseSet.full(F22)
    target = FieldParams(2, 1)
    m = AffineDualMap(np.array([[1, 1]]), np.array([1]), 2)
    vals = np.array([int(m(y)) for y in range(4)])
    piece = affine_piece(dom, vals, 0.0, target)
    assert piece.map == m and piece.s == dom
    bad = vals.copy()
    bad[3] ^= 1
    piece = affine_piece(dom, bad, 0.0, target)
    assert piece.agreement == 3 == _all_affine_agreements(dom, bad, 2, 2, 1)
    const = affine_piece(dom, {y: 1 for y in range(4)}, 0.0, target)
    assert const.map == AffineDualMap(np.zeros((1, 2)), np.array([1]), 2) and const.s == dom


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=8, max_size=8), st.lists(st.booleans(), min_size=8, max_size=8))
def test_affine_piece_is_optimal(vals, mask):
    dom = DenseSet(F23, np.array(mask))
    if dom.card == 0:
        return
    target = FieldParams(2, 2)
    values = np.array(vals)
    piece = affine_piece(dom, values, 0.0, target)
    assert piece.agreement == _all_affine_agreements(dom, values, 2, 3, 2)
    assert all(int(piece.map(int(y))) == values[int(y)] for y in piece.s.indices())
    assert piece.quadruples == graph_quadruples(dom, values, target)


def test_affine_piece_preconditions():
    dom = DenseSet.full(F23)
    with pytest.raises(PreconditionError):
        vals = np.array([0, 3, 1, 1, 2, 0, 3, 2])
        q = graph_quadruples(dom, vals, FieldParams(2, 2))
        assert q < 512
        affine_piece(dom, vals, (q + 1) / 512, FieldParams(2, 2))
    with pytest.raises(CapExceeded):
        affine_piece(dom, np.zeros(8, dtype=int), 0.0, FieldParams(2, 2), cap=100)
