"""Fourier analysis on F_p^n.

Characters are ``chi_s(x) = omega^{s.x}`` with ``omega = exp(2 pi i / p)`` and
``fhat(s) = E_x f(x) chi_s(x)``; inversion reads ``f(x) = sum_s fhat(s) omega^{-s.x}``.
For p = 2 and integer-valued inputs the unnormalised sums are kept as
integers, so every identity can be checked exactly.

Functions that take an ``ambient`` work in the ambient's RREF coordinates
(translate to the direction, then re-index), so results do not depend on the
representative chosen for the coset.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from . import _transform
from .errors import AmbientMismatch, PreconditionError
from .gfspace import AffineSubspace, FieldParams
from .setcalc import DenseSet, to_relative

COEFF_TOL = 1e-12
ORIGINS = ("raw", "indicator", "balanced")


@dataclass(frozen=True, eq=False)
class DensityFn:
    params: FieldParams
    values: np.ndarray
    origin: str = "raw"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype == bool:
            v = v.astype(np.int64)
        v = v.reshape(-1)
        if v.shape[0] != self.params.size:
            raise AmbientMismatch(f"{v.shape[0]} values for ambient of size {self.params.size}")
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}")
        if self.origin == "indicator" and not np.isin(v, (0, 1)).all():
            raise ValueError("indicator functions take values in {0, 1}")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def indicator(cls, a: DenseSet) -> "DensityFn":
        return cls(a.params, a.bits.astype(np.int64), "indicator")

    @classmethod
    def balanced(cls, a: DenseSet) -> "DensityFn":
        return cls(a.params, a.bits - a.density, "balanced")

    @property
    def is_integral(self) -> bool:
        return np.issubdtype(self.values.dtype, np.integer)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Coefficients indexed by dual vector s; ``sums`` holds exact integer sums when available."""

    params: FieldParams
    coeffs: np.ndarray
    exact: bool = False
    sums: np.ndarray | None = None

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coeffs)

    def coefficient(self, s: int):
        """Exact Fraction on the integer path, complex otherwise."""
        if self.exact:
            return Fraction(int(self.sums[int(s)]), self.params.size)
        return complex(self.coeffs[int(s)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s_index", "re", "im", "magnitude"])
        for s, c in enumerate(self.coeffs):
            w.writerow([s, repr(float(c.real)), repr(float(c.imag)), repr(float(abs(c)))])
        return buf.getvalue()


def dft(f: DensityFn) -> Spectrum:
    p, n = f.params.p, f.params.n
    if p == 2 and f.is_integral:
        sums = _transform.wht(f.values.astype(np.int64), n)
        sums.setflags(write=False)
        coeffs = (sums / f.params.size).astype(np.complex128)
        return Spectrum(f.params, coeffs, True, sums)
    sums = _transform.dft_sums(f.values, p, n)
    return Spectrum(f.params, np.asarray(sums, dtype=np.complex128) / f.params.size)


def idft(spectrum: Spectrum) -> DensityFn:
    """Fourier inversion; exact (dyadic) on the p = 2 integer path."""
    p, n = spectrum.params.p, spectrum.params.n
    if spectrum.exact:
        scaled = _transform.wht(spectrum.sums, n)
        if np.all(scaled % spectrum.params.size == 0):
            return DensityFn(spectrum.params, scaled // spectrum.params.size)
        return DensityFn(spectrum.params, scaled / spectrum.params.size)
    vals = _transform.dft_sums(spectrum.coeffs, p, n, inverse=True)
    if np.abs(vals.imag).max(initial=0.0) < 1e-9:
        vals = vals.real
    return DensityFn(spectrum.params, vals)


def _check_same(f, g):
    if f.params != g.params:
        raise AmbientMismatch(f"{f.params} vs {g.params}")


def convolve(f: DensityFn, g: DensityFn) -> DensityFn:
    """``(f*g)(x) = E_y f(y) g(x-y)``; indicator pairs go through exact pair counts."""
    _check_same(f, g)
    if f.origin == "indicator" and g.origin == "indicator":
        return DensityFn(f.params, convolve_counts(f, g) / f.params.size)
    fs, gs = dft(f), dft(g)
    return idft(Spectrum(f.params, fs.coeffs * gs.coeffs))


def convolve_counts(f: DensityFn, g: DensityFn) -> np.ndarray:
    """``p^n (f*g)`` for integer-valued f, g as exact integers."""
    _check_same(f, g)
    if not (f.is_integral and g.is_integral):
        raise PreconditionError("exact convolution needs integer-valued inputs")
    p, n = f.params.p, f.params.n
    if f.origin == "indicator" and g.origin == "indicator":
        return _transform.pair_counts(f.values, g.values, p, n)
    if p == 2 and f.params.size <= 1 << 16:
        wf = _transform.wht(f.values.astype(np.int64), n)
        wg = _transform.wht(g.values.astype(np.int64), n)
        return _transform.wht(wf * wg, n) // f.params.size
    raw = _transform.dft_sums(
        _transform.dft_sums(f.values, p, n) * _transform.dft_sums(g.values, p, n), p, n, inverse=True
    ).real / f.params.size
    out = np.rint(raw)
    if np.abs(raw - out).max(initial=0.0) > 0.25:
        raise ArithmeticError("floating convolution lost integrality")
    return out.astype(np.int64)


def pair_counts(a: DenseSet, b: DenseSet | None = None, sign: int = 1) -> np.ndarray:
    """``r(z) = #{(x, y) in a x b : x + sign*y = z}`` exactly."""
    b = a if b is None else b
    a._check(b)
    return _transform.pair_counts(a.bits, a.bits if b is a else b.bits, a.params.p, a.params.n, sign)


def _relative(a: DenseSet, ambient: AffineSubspace | None) -> DenseSet:
    if ambient is None:
        return a
    try:
        return to_relative(a, ambient)
    except AmbientMismatch as exc:
        raise PreconditionError(str(exc)) from None


def relative_spectrum(a: DenseSet, ambient: AffineSubspace | None = None) -> Spectrum:
    """Spectrum of the indicator of ``a`` read in the ambient's coordinates."""
    return dft(DensityFn.indicator(_relative(a, ambient)))


class QuadCount(NamedTuple):
    count: int
    density: float
    card: int
    ambient_size: int

    @property
    def exact_density(self) -> Fraction:
        return Fraction(self.count, self.ambient_size**3)


def _sum_squares(r: np.ndarray, card: int) -> int:
    if card**3 < 1 << 62:
        r = r.astype(np.int64)
        return int(r @ r)
    return sum(int(v) * int(v) for v in r.tolist())


def u2_fourth_power(a: DenseSet, ambient: AffineSubspace | None = None) -> QuadCount:
    """Additive quadruples ``x1+x2 = x3+x4`` of ``a`` counted exactly as sum_z r(z)^2."""
    rel = _relative(a, ambient)
    r = pair_counts(rel)
    count = _sum_squares(r, rel.card)
    size = rel.params.size
    return QuadCount(count, count / size**3, rel.card, size)


def u2_spectral(a: DenseSet, ambient: AffineSubspace | None = None) -> float:
    """``sum_s |1_A^(s)|^4``, which equals the quadruple density."""
    spectrum = relative_spectrum(a, ambient)
    return float(np.sum(spectrum.magnitudes**4))


class Pseudorandomness(NamedTuple):
    epsilon_star: float
    max_nontrivial_coeff: float


def pseudorandomness(a: DenseSet, ambient: AffineSubspace | None = None) -> Pseudorandomness:
    """Least eps with ``||1_A||_{U2}^4 <= alpha^4 (1 + eps)``, plus the largest nontrivial |coeff|."""
    rel = _relative(a, ambient)
    if rel.card == 0:
        raise PreconditionError("pseudorandomness of the empty set is undefined")
    q = u2_fourth_power(rel)
    size = rel.params.size
    eps = Fraction(q.count * size, rel.card**4) - 1
    mags = relative_spectrum(rel).magnitudes
    return Pseudorandomness(float(eps), float(mags[1:].max(initial=0.0)))


def epsilon_star_exact(a: DenseSet, ambient: AffineSubspace | None = None) -> Fraction:
    rel = _relative(a, ambient)
    if rel.card == 0:
        raise PreconditionError("pseudorandomness of the empty set is undefined")
    q = u2_fourth_power(rel)
    return Fraction(q.count * rel.params.size, rel.card**4) - 1


def large_spectrum(a: DenseSet, threshold: float, ambient: AffineSubspace | None = None) -> list:
    """Nontrivial s with ``|1_A^(s)| >= threshold``, by decreasing magnitude then index.

    With an ambient, the dual vectors are in the ambient's coordinate space.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    mags = relative_spectrum(a, ambient).magnitudes
    hits = np.flatnonzero(mags >= threshold - COEFF_TOL)
    hits = hits[hits != 0]
    order = np.lexsort((hits, -np.round(mags[hits], 12)))
    return [int(s) for s in hits[order]]
