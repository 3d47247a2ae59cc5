"""Radix-p butterflies over the last axis of arrays of length p^n.

Index ``x`` of the flat axis corresponds to the digit tuple of x (most
significant digit first), so reshaping to ``(p,) * n`` puts coordinate i on
axis i and a per-axis p-point DFT is the transform over F_p^n.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _check_len(length: int, p: int, n: int):
    if length != p**n:
        raise ValueError(f"last axis has length {length}, expected {p}^{n}")


def wht(a: np.ndarray, n: int) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform; dtype preserved (exact for ints)."""
    out = np.array(a, copy=True)
    _check_len(out.shape[-1], 2, n)
    lead = out.shape[:-1]
    for k in range(n):
        v = out.reshape(lead + (1 << k, 2, 1 << (n - k - 1)))
        x = v[..., 0, :].copy()
        y = v[..., 1, :]
        v[..., 0, :] += y
        v[..., 1, :] = x - y
    return out


@lru_cache(maxsize=None)
def character_matrix(p: int, inverse: bool = False) -> np.ndarray:
    """``F[s, x] = omega^{+-s x}`` with omega = exp(2 pi i / p), tabulated once."""
    omega = np.exp(2j * np.pi * np.arange(p) / p)
    s = np.arange(p)
    expo = (np.outer(s, s) * (-1 if inverse else 1)) % p
    m = omega[expo]
    m.setflags(write=False)
    return m


def dft_sums(a: np.ndarray, p: int, n: int, inverse: bool = False) -> np.ndarray:
    """``S(s) = sum_x a(x) omega^{s.x}`` (or omega^{-s.x}) along the last axis, unnormalised."""
    a = np.asarray(a)
    _check_len(a.shape[-1], p, n)
    if p == 2:
        dtype = a.dtype if np.issubdtype(a.dtype, np.integer) or np.iscomplexobj(a) else np.float64
        return wht(a.astype(dtype, copy=False), n)
    out = a.astype(np.complex128)
    lead = out.shape[:-1]
    f = character_matrix(p, inverse)
    for k in range(n):
        v = out.reshape(lead + (p**k, p, p ** (n - k - 1)))
        out = np.einsum("sx,...axb->...asb", f, v).reshape(lead + (p**n,))
    return out


def pair_counts(a_bits: np.ndarray, b_bits: np.ndarray, p: int, n: int, sign: int = 1) -> np.ndarray:
    """Exact ``r(z) = #{(x, y) in A x B : x + sign*y = z}`` batched over leading axes."""
    size = p**n
    a = np.asarray(a_bits)
    b = np.asarray(b_bits)
    if p == 2 and size <= 1 << 20:
        wa = wht(a.astype(np.int64), n)
        wb = wa if b is a else wht(b.astype(np.int64), n)
        return wht(wa * wb, n) // size
    fa = dft_sums(a.astype(np.float64), p, n)
    fb = fa if (b is a and sign == 1) else dft_sums(b.astype(np.float64), p, n)
    if sign == -1:
        fb = np.conj(fb)
    raw = dft_sums(fa * fb, p, n, inverse=True).real / size
    counts = np.rint(raw)
    if np.abs(raw - counts).max(initial=0.0) > 0.25:
        raise ArithmeticError("floating convolution lost integrality; ambient too large")
    return counts.astype(np.int64)
