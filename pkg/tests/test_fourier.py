from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bblab import fourier
from bblab.errors import AmbientMismatch, PreconditionError
from bblab.fourier import DensityFn
from bblab.gfspace import AffineSubspace, FieldParams, Subspace
from bblab.setcalc import DenseSet

SPACES = st.sampled_from([(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (5, 1), (5, 2)])


@st.composite
def sets(draw, nonempty=True):
    p, n = draw(SPACES)
    prm = FieldParams(p, n)
    bits = np.array(draw(st.lists(st.booleans(), min_size=prm.size, max_size=prm.size)))
    if nonempty and not bits.any():
        bits[draw(st.integers(0, prm.size - 1))] = True
    return DenseSet(prm, bits)


def test_dft_examples():
    prm = FieldParams(2, 2)
    one = fourier.dft(DensityFn(prm, np.ones(4, dtype=int)))
    assert one.coeffs.tolist() == [1, 0, 0, 0]
    point = fourier.dft(DensityFn(FieldParams(2, 1), [1, 0]))
    assert point.coeffs.tolist() == [0.5, 0.5]
    a = DenseSet.from_strings(prm, ["00", "01", "10"])
    spectrum = fourier.relative_spectrum(a)
    assert [spectrum.coefficient(s) for s in range(4)] == [Fraction(3, 4), Fraction(1, 4), Fraction(1, 4), Fraction(-1, 4)]


@given(sets())
def test_dft_matches_direct_character_sum(a):
    prm = a.params
    got = fourier.relative_spectrum(a).coeffs
    want = oracles.dft(a.bits.astype(int).tolist(), prm.p, prm.n)
    assert np.allclose(got, want, atol=1e-12)


@given(sets())
def test_inversion_and_parseval(a):
    f = DensityFn.indicator(a)
    spectrum = fourier.dft(f)
    assert np.allclose(fourier.idft(spectrum).values, f.values, atol=1e-9)
    assert np.isclose(np.sum(spectrum.magnitudes**2), a.density)


def test_convolve_examples():
    prm = FieldParams(2, 1)
    delta = DensityFn(prm, [1, 0], "indicator")
    g = DensityFn(prm, [3, 5])
    assert np.allclose(fourier.convolve(delta, g).values, [1.5, 2.5])
    ones = DensityFn(prm, [1, 1], "indicator")
    assert np.allclose(fourier.convolve(ones, ones).values, [1, 1])


@given(sets(), st.data())
def test_pair_counts_match_enumeration(a, data):
    prm = a.params
    b = DenseSet(prm, np.array(data.draw(st.lists(st.booleans(), min_size=prm.size, max_size=prm.size))))
    for sign in (1, -1):
        got = fourier.pair_counts(a, b, sign)
        want = np.zeros(prm.size, dtype=np.int64)
        for x in a.indices():
            for y in b.indices():
                want[int(prm.add(x, y) if sign == 1 else prm.sub(x, y))] += 1
        assert np.array_equal(got, want)


def test_convolution_rejects_mismatched_spaces():
    with pytest.raises(AmbientMismatch):
        fourier.convolve(DensityFn(FieldParams(2, 2), np.ones(4)), DensityFn(FieldParams(3, 1), np.ones(3)))
    with pytest.raises(ValueError):
        DensityFn(FieldParams(2, 1), [0, 2], "indicator")


def test_u2_examples():
    prm = FieldParams(2, 2)
    assert fourier.u2_fourth_power(DenseSet.full(prm)).density == 1
    a = DenseSet.from_strings(prm, ["00", "01", "10"])
    q = fourier.u2_fourth_power(a)
    assert q.count == 21 == oracles.quad_count({0, 1, 2}, 2, 2)
    prm3 = FieldParams(3, 2)
    w = DenseSet.of(Subspace.span(prm3, [1]))
    assert fourier.u2_fourth_power(w).exact_density == Fraction(1, 27)


@given(sets())
def test_u2_count_equals_brute_force_and_spectral_form(a):
    prm = a.params
    q = fourier.u2_fourth_power(a)
    assert q.count == oracles.quad_count(set(a.indices().tolist()), prm.p, prm.n)
    assert np.isclose(fourier.u2_spectral(a), q.density)


def test_u2_relative_to_affine_ambient():
    prm = FieldParams(2, 4)
    h = AffineSubspace(8, Subspace.span(prm, [1, 2, 4]))
    q = fourier.u2_fourth_power(DenseSet.of(Subspace.span(prm, [1])).translate(8), h)
    assert q.ambient_size == 8 and q.exact_density == Fraction(8, 512)
    with pytest.raises(PreconditionError):
        fourier.u2_fourth_power(DenseSet.full(prm), h)


def test_pseudorandomness_examples():
    prm = FieldParams(2, 3)
    assert fourier.pseudorandomness(DenseSet.full(prm)).epsilon_star == 0
    hyper = DenseSet.of(Subspace.span(prm, [1, 2]))
    pr = fourier.pseudorandomness(hyper)
    assert pr.epsilon_star == 1 and pr.max_nontrivial_coeff == 0.5
    a = DenseSet.from_strings(FieldParams(2, 2), ["00", "01", "10"])
    assert fourier.epsilon_star_exact(a) == Fraction(21 * 4, 81) - 1
    with pytest.raises(PreconditionError):
        fourier.pseudorandomness(DenseSet.empty(prm))


@given(sets())
def test_epsilon_star_is_nonnegative(a):
    assert fourier.epsilon_star_exact(a) >= 0


def test_large_spectrum_examples():
    prm = FieldParams(2, 3)
    assert fourier.large_spectrum(DenseSet.full(prm), 0.1) == []
    s0 = 5
    hyper = DenseSet.of(Subspace.span(prm, [s0]).perp())
    assert fourier.large_spectrum(hyper, 0.4) == [s0]
    a = DenseSet.from_strings(FieldParams(2, 2), ["00", "01", "10"])
    assert fourier.large_spectrum(a, 0.2) == [1, 2, 3]
    with pytest.raises(ValueError):
        fourier.large_spectrum(a, 0)


@settings(max_examples=50)
@given(sets(), st.floats(0.05, 0.9))
def test_large_spectrum_is_exactly_the_threshold_set(a, t):
    mags = np.abs(oracles.dft(a.bits.astype(int).tolist(), a.params.p, a.params.n))
    got = fourier.large_spectrum(a, t)
    assert set(got) == {s for s in range(1, a.params.size) if mags[s] >= t - 1e-12}
    assert [round(mags[s], 9) for s in got] == sorted((round(mags[s], 9) for s in got), reverse=True)


def test_spectrum_csv():
    a = DenseSet.from_strings(FieldParams(2, 2), ["00", "01", "10"])
    lines = fourier.relative_spectrum(a).to_csv().splitlines()
    assert lines[0] == "s_index,re,im,magnitude"
    assert lines[4].startswith("3,-0.25,")
