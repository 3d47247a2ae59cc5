import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bblab.errors import AmbientMismatch, CapExceeded
from bblab.gfspace import (
    AffineDualMap,
    AffineSubspace,
    FieldParams,
    Subspace,
    all_subspaces,
    batch_rank,
    enumerate_subspaces,
    eval_bilinear,
    gaussian_binomial,
    nullspace,
    orthogonal_complement,
    rank,
    solve_affine,
    subspace_ops,
)

small = st.sampled_from([(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (3, 3), (5, 2)])


@st.composite
def matrices(draw, max_rows=5, max_cols=5):
    p = draw(st.sampled_from([2, 3, 5, 7]))
    r = draw(st.integers(0, max_rows))
    c = draw(st.integers(1, max_cols))
    vals = draw(st.lists(st.integers(0, p - 1), min_size=r * c, max_size=r * c))
    return np.array(vals, dtype=np.int64).reshape(r, c), p


@st.composite
def subspaces(draw, pn=small):
    p, n = draw(pn)
    prm = FieldParams(p, n)
    k = draw(st.integers(0, n))
    rows = draw(st.lists(st.integers(0, prm.size - 1), min_size=k, max_size=k))
    return Subspace.span(prm, np.array(rows, dtype=np.int64))


# --- encoding --------------------------------------------------------------


def test_first_coordinate_is_most_significant():
    prm = FieldParams(3, 2)
    assert prm.format(1) == "01"
    assert prm.format(3) == "10"
    assert prm.parse("21") == 7
    assert [prm.format(i) for i in range(9)] == sorted(prm.format(i) for i in range(9))


@given(small, st.data())
def test_digit_roundtrip(pn, data):
    prm = FieldParams(*pn)
    i = data.draw(st.integers(0, prm.size - 1))
    assert prm.parse(prm.format(i)) == i
    assert tuple(prm.to_digits(i)) == oracles.digits(i, *pn)


@given(small, st.data())
def test_field_arithmetic(pn, data):
    p, n = pn
    prm = FieldParams(p, n)
    x, y = data.draw(st.integers(0, prm.size - 1)), data.draw(st.integers(0, prm.size - 1))
    dx, dy = oracles.digits(x, p, n), oracles.digits(y, p, n)
    assert int(prm.add(x, y)) == oracles.index(oracles.vadd(dx, dy, p), p)
    assert int(prm.sub(x, y)) == oracles.index(oracles.vsub(dx, dy, p), p)
    assert int(prm.dot(x, y)) == oracles.dot(dx, dy, p)


def test_bad_params():
    with pytest.raises(ValueError):
        FieldParams(4, 2)
    with pytest.raises(ValueError):
        FieldParams(2, 25)
    with pytest.raises(ValueError):
        FieldParams(3, 2).parse("13")


# --- matrices --------------------------------------------------------------


def test_rank_examples():
    assert rank(np.eye(2, dtype=int), 2) == 2
    assert rank(np.zeros((2, 2), dtype=int), 2) == 0
    assert rank(np.array([[1, 1], [1, 1]]), 2) == 1


@given(matrices())
def test_rank_matches_oracle(mp):
    m, p = mp
    assert rank(m, p) == oracles.matrix_rank(m.tolist(), p)


@given(st.integers(0, 4), st.integers(1, 4), st.integers(1, 4), st.sampled_from([2, 3, 5]), st.integers(0, 2**31))
def test_batch_rank_matches_rank(batch, rows, cols, p, seed):
    rng = np.random.default_rng(seed)
    mats = rng.integers(0, p, (batch, 3, rows, cols))
    got = batch_rank(mats, p)
    assert got.shape == (batch, 3)
    for idx in itertools.product(range(batch), range(3)):
        assert got[idx] == rank(mats[idx], p)


def test_nullspace_examples():
    prm = FieldParams(2, 2)
    assert nullspace(np.eye(2, dtype=int), 2) == Subspace.zero(prm)
    assert nullspace(np.zeros((2, 2), dtype=int), 2) == Subspace.full(prm)
    assert nullspace(np.array([[1, 1]]), 2) == Subspace.span(prm, [3])


@given(matrices())
def test_nullspace_is_kernel(mp):
    m, p = mp
    ker = nullspace(m, p, m.shape[1])
    assert ker.dim == m.shape[1] - rank(m, p)
    assert not ((m @ ker.matrix.T) % p).any()


@given(matrices(), st.data())
def test_solve_affine(mp, data):
    m, p = mp
    x0 = np.array(data.draw(st.lists(st.integers(0, p - 1), min_size=m.shape[1], max_size=m.shape[1])))
    rhs = m @ x0 % p
    sol = solve_affine(m, rhs, p, m.shape[1])
    assert sol is not None
    x, ker = sol
    assert np.array_equal(m @ x % p, rhs)
    if m.shape[0] and rank(m, p) < m.shape[0]:
        # some right-hand side outside the column space must be rejected
        col = Subspace.from_matrix(FieldParams(p, m.shape[0]), m.T) if m.size else None
        bad = next(v for v in range(p ** m.shape[0]) if not col.contains(v))
        assert solve_affine(m, FieldParams(p, m.shape[0]).to_digits(bad), p, m.shape[1]) is None


def test_eval_bilinear_examples():
    assert eval_bilinear(np.eye(2, dtype=int), [1, 0], [1, 0], 2) == 1
    assert eval_bilinear(np.array([[0, 1], [0, 0]]), [1, 2], [2, 1], 3) == 1
    assert eval_bilinear(np.array([[1, 2], [2, 1]]), [0, 0], [1, 2], 3) == 0


# --- subspaces -------------------------------------------------------------


def test_orthogonal_complement_examples():
    prm = FieldParams(2, 2)
    assert orthogonal_complement(Subspace.span(prm, [2])) == Subspace.span(prm, [1])
    assert orthogonal_complement(Subspace.full(prm)) == Subspace.zero(prm)
    line = Subspace.span(prm, [3])
    assert orthogonal_complement(line) == line


def test_subspace_ops_examples():
    prm2 = FieldParams(2, 2)
    a = Subspace.span(prm2, [2])
    assert subspace_ops(a, a)["intersect"] == a and subspace_ops(a, a)["sum"] == a
    ops = subspace_ops(a, Subspace.span(prm2, [1]))
    assert ops["intersect"] == Subspace.zero(prm2) and ops["sum"] == Subspace.full(prm2)
    prm3 = FieldParams(2, 3)
    x = Subspace.span(prm3, [4, 2])
    y = Subspace.span(prm3, [2, 1])
    assert x & y == Subspace.span(prm3, [2])


@given(subspaces(), st.data())
def test_subspace_set_semantics(a, data):
    prm = a.params
    b = data.draw(subspaces(st.just((prm.p, prm.n))))
    ea, eb = set(a.elements().tolist()), set(b.elements().tolist())
    assert ea == oracles.span([oracles.digits(v, prm.p, prm.n) for v in a.basis], prm.p, prm.n)
    assert set((a & b).elements().tolist()) == ea & eb
    sums = {int(prm.add(u, v)) for u in ea for v in eb}
    assert set((a + b).elements().tolist()) == sums
    assert a.issubset(b) == (ea <= eb)
    assert a.dim + a.perp().dim == prm.n
    assert a.perp().perp() == a
    assert all(int(prm.dot(u, v)) == 0 for u in ea for v in a.perp().elements().tolist())
    assert list(a.contains(np.arange(prm.size))) == [i in ea for i in range(prm.size)]


@given(subspaces())
def test_coordinates_roundtrip(a):
    pts = a.elements()
    c = a.coord_digits(pts)
    back = a.params.from_digits(a.from_coord_digits(c))
    assert np.array_equal(np.asarray(back).reshape(-1), pts)


def test_enumeration_counts():
    assert list(enumerate_subspaces(FieldParams(2, 3), 0)) == [Subspace.full(FieldParams(2, 3))]
    assert len(list(enumerate_subspaces(FieldParams(2, 2), 1))) == 3
    assert len(list(enumerate_subspaces(FieldParams(2, 3), 1))) == 7


@pytest.mark.parametrize("p,n", [(2, 3), (2, 4), (3, 2), (3, 3), (5, 2)])
def test_enumeration_matches_closure_oracle(p, n):
    prm = FieldParams(p, n)
    ours = {frozenset(s.elements().tolist()) for s in all_subspaces(prm)}
    assert ours == set(oracles.all_subspaces(p, n))
    for k in range(n + 1):
        got = list(enumerate_subspaces(prm, n - k))
        assert len(got) == len(set(got)) == gaussian_binomial(n, k, p)


def test_enumeration_cap():
    with pytest.raises(CapExceeded):
        list(enumerate_subspaces(FieldParams(2, 8), 4, cap=100))


def test_ambient_mismatch():
    with pytest.raises(AmbientMismatch):
        Subspace.full(FieldParams(2, 2)) & Subspace.full(FieldParams(2, 3))


# --- affine objects --------------------------------------------------------


@given(subspaces(), st.data())
def test_affine_subspace(direction, data):
    prm = direction.params
    base = data.draw(st.integers(0, prm.size - 1))
    h = AffineSubspace(base, direction)
    pts = h.elements()
    want = oracles.affine_points(base, direction.basis, prm.p, prm.n)
    assert pts.tolist() == want
    assert h.base == want[0]
    assert AffineSubspace(int(pts[-1]), direction) == h
    rel = h.coords(pts)
    assert sorted(np.asarray(rel).reshape(-1).tolist()) == list(range(h.size))
    assert np.array_equal(np.asarray(h.point(rel)).reshape(-1), pts)


def test_affine_sub_embeds_relative_cosets():
    prm = FieldParams(2, 3)
    h = AffineSubspace(4, Subspace.span(prm, [1, 2]))
    rel = AffineSubspace(1, Subspace.zero(h.rel_params))
    assert h.sub(rel).elements().tolist() == [int(h.point(1))]


def test_affine_dual_map():
    m = AffineDualMap(np.array([[1, 1, 0], [0, 1, 2]]), np.array([1, 0]), 3)
    assert m.n_in == 3 and m.n_out == 2
    y = FieldParams(3, 3).parse("120")
    assert FieldParams(3, 2).format(m(y)) == "12"
    assert m.linear_part()(0) == 0
    assert m == AffineDualMap(m.linear + 3, m.offset, 3)
    with pytest.raises(AmbientMismatch):
        AffineDualMap(np.zeros((2, 2)), np.zeros(3), 2)


@settings(max_examples=30)
@given(st.sampled_from([2, 3]), st.integers(0, 4))
def test_gaussian_binomial_symmetry(p, n):
    for k in range(n + 1):
        assert gaussian_binomial(n, k, p) == gaussian_binomial(n, n - k, p)
