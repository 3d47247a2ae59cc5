import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bblab.errors import AmbientMismatch, ParseError
from bblab.gfspace import AffineSubspace, FieldParams, Subspace
from bblab.setcalc import (
    DenseSet,
    ProductSet,
    dumps_set,
    fiber,
    from_relative,
    loads_set,
    parse_word,
    phi_h,
    phi_pipeline,
    phi_v,
    read_set,
    sumset,
    sumset_rows,
    to_relative,
    two_a_minus_two_a,
    write_set,
)

SPACES = [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (5, 1), (5, 2)]


@st.composite
def dense_sets(draw, spaces=st.sampled_from(SPACES)):
    p, n = draw(spaces)
    prm = FieldParams(p, n)
    bits = draw(st.lists(st.booleans(), min_size=prm.size, max_size=prm.size))
    return DenseSet(prm, np.array(bits, dtype=bool))


@st.composite
def product_sets(draw, max_n=3):
    p = draw(st.sampled_from([2, 3]))
    n1 = draw(st.integers(1, max_n if p == 2 else 2))
    n2 = draw(st.integers(1, max_n if p == 2 else 2))
    p1, p2 = FieldParams(p, n1), FieldParams(p, n2)
    bits = draw(st.lists(st.booleans(), min_size=p1.size * p2.size, max_size=p1.size * p2.size))
    return ProductSet(p1, p2, np.array(bits, dtype=bool).reshape(p1.size, p2.size))


def _pairs(ps):
    return {(int(x), int(y)) for x, y in ps.pairs()}


# --- DenseSet --------------------------------------------------------------


def test_dense_set_basics():
    prm = FieldParams(2, 2)
    a = DenseSet.from_strings(prm, ["00", "01", "10"])
    assert a.card == 3 and a.density == 0.75
    assert a.strings() == ["00", "01", "10"]
    assert 1 in a and 3 not in a
    assert a.complement() == DenseSet.from_strings(prm, ["11"])
    assert a.translate(3) == DenseSet.from_strings(prm, ["11", "10", "01"])
    assert DenseSet.of(Subspace.span(prm, [1])) == DenseSet.from_strings(prm, ["00", "01"])
    with pytest.raises(AmbientMismatch):
        a | DenseSet.empty(FieldParams(2, 3))


@given(dense_sets())
def test_translate_and_negate(a):
    prm = a.params
    v = prm.size - 1
    assert set(a.translate(v).indices().tolist()) == {int(prm.add(x, v)) for x in a.indices()}
    assert set(a.negate().indices().tolist()) == {int(prm.neg(x)) for x in a.indices()}


# --- sumsets ---------------------------------------------------------------


def test_sumset_examples():
    prm = FieldParams(2, 2)
    zero = DenseSet.from_indices(prm, [0])
    b = DenseSet.from_strings(prm, ["01", "11"])
    assert sumset(zero, b) == b
    assert sumset(DenseSet.full(prm), DenseSet.full(prm)) == DenseSet.full(prm)
    a = DenseSet.from_strings(prm, ["00", "01"])
    assert sumset(a, a) == a


def test_two_a_minus_two_a_examples():
    prm = FieldParams(2, 3)
    w = DenseSet.of(Subspace.span(prm, [3, 4]))
    assert two_a_minus_two_a(w) == w
    assert two_a_minus_two_a(DenseSet.from_indices(prm, [5])) == DenseSet.from_indices(prm, [0])
    sq = FieldParams(2, 2)
    assert two_a_minus_two_a(DenseSet.from_strings(sq, ["00", "01", "10"])) == DenseSet.full(sq)


@given(dense_sets(), st.data())
def test_sumset_matches_oracle(a, data):
    prm = a.params
    b = data.draw(dense_sets(st.just((prm.p, prm.n))))
    sign = data.draw(st.sampled_from([1, -1]))
    pa = [oracles.digits(i, prm.p, prm.n) for i in a.indices()]
    pb = [oracles.digits(i, prm.p, prm.n) for i in b.indices()]
    op = oracles.vadd if sign == 1 else oracles.vsub
    want = {oracles.index(op(x, y, prm.p), prm.p) for x in pa for y in pb}
    assert set(sumset(a, b, sign).indices().tolist()) == want


@settings(max_examples=60)
@given(dense_sets(), st.sampled_from([1, -1]))
def test_direct_and_transform_paths_agree(a, sign):
    rows = np.stack([a.bits, a.complement().bits])
    direct = sumset_rows(rows, rows[::-1].copy(), a.params, sign, crossover=1 << 60)
    spectral = sumset_rows(rows, rows[::-1].copy(), a.params, sign, crossover=0)
    assert np.array_equal(direct, spectral)


@given(dense_sets())
def test_two_a_minus_two_a_matches_oracle(a):
    prm = a.params
    want = oracles.sumset_2a2a(set(a.indices().tolist()), prm.p, prm.n) if a.card else set()
    assert set(two_a_minus_two_a(a).indices().tolist()) == want


# --- product sets and the fiberwise operators ------------------------------


def test_fiber_examples():
    f1 = FieldParams(2, 1)
    p = ProductSet.from_pairs(f1, f1, [(0, 0), (0, 1), (1, 0)])
    assert fiber(p, 0, axis=2) == DenseSet.full(f1)
    prm = FieldParams(2, 2)
    a = DenseSet.from_strings(prm, ["00", "11"])
    b = DenseSet.from_strings(prm, ["01", "10", "11"])
    ab = ProductSet.product(a, b)
    assert fiber(ab, 3, axis=1) == b
    assert fiber(ab, 1, axis=1) == DenseSet.empty(prm)


def test_phi_examples():
    prm = FieldParams(2, 2)
    a = DenseSet.from_strings(prm, ["00", "11"])
    b = DenseSet.from_strings(prm, ["01", "10"])
    ab = ProductSet.product(a, b)
    assert phi_v(ab) == ProductSet.product(a, two_a_minus_two_a(b))
    assert phi_h(ab) == ProductSet.product(two_a_minus_two_a(a), b)
    single = ProductSet.from_pairs(prm, prm, [(2, 3)])
    assert _pairs(phi_v(single)) == {(2, 0)}
    assert _pairs(phi_h(single)) == {(0, 3)}
    f1 = FieldParams(2, 1)
    corner = ProductSet.from_pairs(f1, f1, [(0, 0), (0, 1), (1, 0)])
    assert phi_v(corner) == corner
    assert phi_h(corner) == corner


def test_pipeline_examples():
    prm = FieldParams(2, 3)
    w1, w2 = DenseSet.of(Subspace.span(prm, [1, 2])), DenseSet.of(Subspace.span(prm, [4]))
    w = ProductSet.product(w1, w2)
    out = phi_pipeline(w, "HVH")
    assert out == w
    assert [name for name, _ in out.trace] == ["input", "H", "V", "H"]
    a = DenseSet.from_strings(prm, ["001", "010"])
    assert phi_pipeline(ProductSet.product(w1, a), ["V"]) == ProductSet.product(w1, two_a_minus_two_a(a))
    assert parse_word("hv") == ("H", "V")
    with pytest.raises(ValueError):
        parse_word("HXV")


def test_pipeline_full_image_frequency_is_frozen():
    """Exhaustive share of subsets of F_2^2 x F_2^2 whose HVH image is everything."""
    prm = FieldParams(2, 2)
    masks = np.arange(1 << 16)
    cells = ((masks[:, None] >> np.arange(16)) & 1).astype(bool).reshape(-1, 4, 4)
    full = sum(bool(phi_pipeline(ProductSet(prm, prm, b), "HVH").bits.all()) for b in cells)
    # value from the brute-force oracle over all 2^16 sets
    assert full == 9725


@given(product_sets())
def test_phi_matches_oracle(ps):
    p, n1, n2 = ps.p, ps.params1.n, ps.params2.n
    pairs = _pairs(ps)
    assert _pairs(phi_v(ps)) == oracles.phi_rows(pairs, p, n1, n2)
    assert _pairs(phi_h(ps)) == oracles.phi_cols(pairs, p, n1, n2)


@given(product_sets())
def test_phi_idempotent_and_swap_symmetric(ps):
    once = phi_v(ps)
    assert phi_v(once) == once
    assert phi_h(ps.swap()) == phi_v(ps).swap()
    # every nonempty row of phi_v contains 0
    rows = phi_v(ps).bits
    assert np.array_equal(rows[:, 0], ps.bits.any(axis=1))


# --- relative coordinates --------------------------------------------------


def test_relative_roundtrip():
    prm = FieldParams(3, 3)
    h = AffineSubspace(5, Subspace.span(prm, [1, 9]))
    a = DenseSet.from_indices(prm, h.elements()[::2])
    rel = to_relative(a, h)
    assert rel.params == FieldParams(3, 2)
    assert from_relative(rel, h) == a
    with pytest.raises(AmbientMismatch):
        to_relative(DenseSet.full(prm), h)


# --- text format -----------------------------------------------------------


@given(dense_sets())
def test_dense_io_roundtrip(a):
    assert loads_set(dumps_set(a)) == a


@settings(max_examples=40)
@given(product_sets())
def test_product_io_roundtrip(ps):
    assert loads_set(dumps_set(ps)) == ps


def test_io_modes_and_files(tmp_path):
    prm = FieldParams(2, 8)
    sparse = DenseSet.from_indices(prm, [0, 7])
    assert dumps_set(sparse).splitlines()[:2] == ["p 2 n1 8", "list"]
    dense = DenseSet(prm, np.arange(256) % 3 == 0)
    assert dumps_set(dense).splitlines()[1] == "hex"
    write_set(tmp_path / "d.set", dense)
    assert read_set(tmp_path / "d.set") == dense
    text = "# comment\np 3 n1 2\nlist\n\n12\n# another\n00\n"
    assert loads_set(text).strings() == ["00", "12"]


@pytest.mark.parametrize(
    "text,line",
    [
        ("p 2 n1 2\nlist\n00\n0x\n", 4),
        ("p 2 nn 2\nlist\n", 1),
        ("p 2 n1 2\nbits\n", 2),
        ("p 3 n1 1 n2 1\nlist\n0 1\n2\n", 4),
        ("p 2 n1 4\nhex\nzz\n", 3),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        loads_set(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")
