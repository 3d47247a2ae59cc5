"""Exact linear algebra over F_p with vectors encoded as radix-p integers.

A point of F_p^n is stored as the integer ``sum(x[i] * p**(n-1-i))``, so the
first coordinate is the most significant digit and integer order coincides
with lexicographic order on coordinate tuples.  Matrices are plain integer
ndarrays whose entries are residues mod p; a subspace keeps its basis in
reduced row-echelon form so equal subspaces compare equal structurally.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AmbientMismatch, CapExceeded

SUPPORTED_PRIMES = (2, 3, 5, 7, 11, 13)
MAX_AMBIENT = 1 << 24
DEFAULT_CAP = 10**7
_DIGIT_CHARS = "0123456789abc"


def default_cap() -> int:
    """Global enumeration cap; the ``BBLAB_CAP`` environment variable overrides it."""
    env = os.environ.get("BBLAB_CAP")
    return int(env) if env else DEFAULT_CAP


def _resolve_cap(cap):
    return default_cap() if cap is None else int(cap)


@dataclass(frozen=True)
class FieldParams:
    p: int
    n: int

    def __post_init__(self):
        if self.p not in SUPPORTED_PRIMES:
            raise ValueError(f"p must be a prime in {SUPPORTED_PRIMES}, got {self.p}")
        if self.n < 0:
            raise ValueError("dimension must be non-negative")
        if self.p**self.n > MAX_AMBIENT:
            raise ValueError(f"p^n = {self.p}^{self.n} exceeds the 2^24 ambient bound")

    @property
    def size(self) -> int:
        return self.p**self.n

    @cached_property
    def powers(self) -> np.ndarray:
        return self.p ** np.arange(self.n - 1, -1, -1, dtype=np.int64)

    def to_digits(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.p == 2:
            shifts = np.arange(self.n - 1, -1, -1, dtype=np.int64)
            return (idx[..., None] >> shifts) & 1
        return (idx[..., None] // self.powers) % self.p

    def from_digits(self, digits):
        d = np.asarray(digits, dtype=np.int64) % self.p
        out = d @ self.powers if self.n else np.zeros(d.shape[:-1], dtype=np.int64)
        return int(out) if np.ndim(out) == 0 else out

    def add(self, x, y):
        if self.p == 2:
            return np.bitwise_xor(np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64))
        return self.from_digits(self.to_digits(x) + self.to_digits(y))

    def neg(self, x):
        if self.p == 2:
            return np.asarray(x, dtype=np.int64)
        return self.from_digits(-self.to_digits(x))

    def sub(self, x, y):
        if self.p == 2:
            return self.add(x, y)
        return self.from_digits(self.to_digits(x) - self.to_digits(y))

    def dot(self, x, y):
        """Dot pairing x.xi mod p of encoded vectors (broadcasting)."""
        return (self.to_digits(x) * self.to_digits(y)).sum(axis=-1) % self.p

    def format(self, idx: int) -> str:
        return "".join(_DIGIT_CHARS[d] for d in self.to_digits(int(idx)))

    def parse(self, text: str) -> int:
        text = text.strip().lower()
        if len(text) != self.n:
            raise ValueError(f"expected {self.n} digits, got {text!r}")
        digits = []
        for ch in text:
            d = _DIGIT_CHARS.find(ch)
            if d < 0 or d >= self.p:
                raise ValueError(f"invalid base-{self.p} digit {ch!r}")
            digits.append(d)
        return int(self.from_digits(digits)) if self.n else 0

    @cached_property
    def add_table(self) -> np.ndarray:
        """``table[u, v] = u + v``; only built for small ambients."""
        if self.size > 1 << 12:
            raise CapExceeded("addition table", self.size**2, 1 << 24)
        idx = np.arange(self.size, dtype=np.int64)
        return np.asarray(self.add(idx[:, None], idx[None, :]), dtype=np.int64)

    @cached_property
    def neg_table(self) -> np.ndarray:
        return np.asarray(self.neg(np.arange(self.size, dtype=np.int64)), dtype=np.int64)


# ---------------------------------------------------------------------------
# matrices over F_p


def rref(m, p: int):
    """Reduced row-echelon form mod p; returns ``(rows, pivots)`` without zero rows."""
    a = np.array(m, dtype=np.int64, ndmin=2) % p
    n_rows, n_cols = a.shape
    pivots = []
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        nz = np.flatnonzero(a[r:, c])
        if nz.size == 0:
            continue
        k = r + int(nz[0])
        if k != r:
            a[[r, k]] = a[[k, r]]
        if a[r, c] != 1:
            a[r] = (a[r] * pow(int(a[r, c]), -1, p)) % p
        col = a[:, c].copy()
        col[r] = 0
        if col.any():
            a = (a - np.outer(col, a[r])) % p
        pivots.append(c)
        r += 1
    return a[:r], tuple(pivots)


def rank(m, p: int) -> int:
    m = np.asarray(m)
    if m.size == 0:
        return 0
    return len(rref(m, p)[1])


def batch_rank(m, p: int) -> np.ndarray:
    """Ranks of a stack of matrices (..., rows, cols) mod p, eliminated in lockstep."""
    a = np.array(m, dtype=np.int64) % p
    lead = a.shape[:-2]
    if a.size == 0:
        return np.zeros(lead, dtype=np.int64)
    a = a.reshape((-1,) + a.shape[-2:])
    b, n_rows, n_cols = a.shape
    inv = np.array([0] + [pow(v, -1, p) for v in range(1, p)], dtype=np.int64)
    used = np.zeros((b, n_rows), dtype=bool)
    out = np.zeros(b, dtype=np.int64)
    ar = np.arange(b)
    for c in range(n_cols):
        cand = (a[:, :, c] != 0) & ~used
        has = cand.any(axis=1)
        if not has.any():
            continue
        piv = np.argmax(cand, axis=1)
        prow = a[ar, piv] * inv[a[ar, piv, c]][:, None] % p
        factor = a[:, :, c].copy()
        factor[ar, piv] = 0
        factor[~has] = 0
        a = (a - factor[:, :, None] * prow[:, None, :]) % p
        a[ar[has], piv[has]] = prow[has]
        used[ar[has], piv[has]] = True
        out += has
    return out.reshape(lead)


def nullspace_basis(m, p: int, n_cols: int | None = None) -> np.ndarray:
    """Basis (as rows) of the right kernel {x : m x = 0}."""
    m = np.asarray(m, dtype=np.int64)
    if n_cols is None:
        n_cols = m.shape[1]
    if m.size == 0:
        return np.eye(n_cols, dtype=np.int64)
    r, pivots = rref(m, p)
    free = [c for c in range(n_cols) if c not in pivots]
    basis = np.zeros((len(free), n_cols), dtype=np.int64)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for i, pc in enumerate(pivots):
            basis[k, pc] = (-r[i, f]) % p
    return basis


def nullspace(m, p: int, n_cols: int | None = None) -> "Subspace":
    m = np.asarray(m, dtype=np.int64)
    if n_cols is None:
        n_cols = m.shape[1]
    return Subspace.from_matrix(FieldParams(p, n_cols), nullspace_basis(m, p, n_cols))


def solve_affine(m, rhs, p: int, n_cols: int | None = None):
    """Solve ``m x = rhs`` mod p.

    Returns ``(particular, kernel_basis)`` or ``None`` when inconsistent.
    """
    rhs = np.asarray(rhs, dtype=np.int64).reshape(-1)
    m = np.asarray(m, dtype=np.int64)
    if n_cols is None:
        n_cols = m.shape[1]
    m = m.reshape(rhs.shape[0], n_cols)
    if m.shape[0] == 0:
        return np.zeros(n_cols, dtype=np.int64), np.eye(n_cols, dtype=np.int64)
    aug = np.concatenate([m % p, np.asarray(rhs, dtype=np.int64).reshape(-1, 1) % p], axis=1)
    r, pivots = rref(aug, p)
    if pivots and pivots[-1] == n_cols:
        return None
    x = np.zeros(n_cols, dtype=np.int64)
    for i, pc in enumerate(pivots):
        x[pc] = r[i, n_cols]
    return x, nullspace_basis(m, p, n_cols)


def eval_bilinear(q, x, y, p: int) -> int:
    """x^T q y mod p for digit vectors x, y."""
    q = np.asarray(q, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if q.ndim != 2 or q.shape != (x.shape[-1], y.shape[-1]):
        raise AmbientMismatch(f"form of shape {q.shape} cannot pair {x.shape} with {y.shape}")
    return int(x @ q @ y % p)


def gaussian_binomial(n: int, k: int, p: int) -> int:
    if k < 0 or k > n:
        return 0
    num = den = 1
    for i in range(k):
        num *= p ** (n - i) - 1
        den *= p ** (i + 1) - 1
    return num // den


# ---------------------------------------------------------------------------
# subspaces


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of F_p^n held as an RREF basis matrix."""

    params: FieldParams
    matrix: np.ndarray
    pivots: tuple | None = field(default=None)

    def __post_init__(self):
        if self.pivots is None:
            m = np.asarray(self.matrix, dtype=np.int64)
            if m.size and self.params.n:
                r, piv = rref(m.reshape(-1, self.params.n), self.params.p)
            else:
                r, piv = np.zeros((0, self.params.n), dtype=np.int64), ()
            r = np.ascontiguousarray(r)
            r.setflags(write=False)
            object.__setattr__(self, "matrix", r)
            object.__setattr__(self, "pivots", tuple(piv))

    @classmethod
    def from_matrix(cls, params: FieldParams, m) -> "Subspace":
        m = np.asarray(m, dtype=np.int64)
        if m.size == 0 or params.n == 0:
            return cls._trusted(params, np.zeros((0, params.n), dtype=np.int64), ())
        m = m.reshape(-1, params.n)
        if m.shape[0] == 0:
            return cls._trusted(params, np.zeros((0, params.n), dtype=np.int64), ())
        r, pivots = rref(m, params.p)
        return cls._trusted(params, r, pivots)

    @classmethod
    def _trusted(cls, params, r, pivots):
        r = np.ascontiguousarray(r, dtype=np.int64)
        r.setflags(write=False)
        return cls(params, r, tuple(pivots))

    @classmethod
    def span(cls, params: FieldParams, vectors) -> "Subspace":
        vectors = np.asarray(vectors, dtype=np.int64)
        if vectors.ndim == 1:
            vectors = params.to_digits(vectors).reshape(-1, params.n)
        return cls.from_matrix(params, vectors)

    @classmethod
    def full(cls, params: FieldParams) -> "Subspace":
        return cls._trusted(params, np.eye(params.n, dtype=np.int64), tuple(range(params.n)))

    @classmethod
    def zero(cls, params: FieldParams) -> "Subspace":
        return cls._trusted(params, np.zeros((0, params.n), dtype=np.int64), ())

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def codim(self) -> int:
        return self.params.n - self.dim

    @property
    def size(self) -> int:
        return self.params.p**self.dim

    @cached_property
    def basis(self) -> tuple:
        return tuple(int(v) for v in self.params.from_digits(self.matrix)) if self.dim else ()

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash((self.params, self.basis))

    def __repr__(self):
        rows = ",".join(self.params.format(b) for b in self.basis)
        return f"Subspace(p={self.params.p}, n={self.params.n}, basis=[{rows}])"

    def _check(self, other):
        if self.params != other.params:
            raise AmbientMismatch(f"{self.params} vs {other.params}")

    def coord_digits(self, x) -> np.ndarray:
        """Coordinates in the RREF basis (valid only for members)."""
        d = self.params.to_digits(x)
        return d[..., list(self.pivots)]

    def contains(self, x):
        d = self.params.to_digits(x)
        if self.dim == 0:
            return ~d.any(axis=-1)
        recon = (d[..., list(self.pivots)] @ self.matrix) % self.params.p
        return (recon == d).all(axis=-1)

    def contains_digits(self, d):
        d = np.asarray(d, dtype=np.int64) % self.params.p
        if self.dim == 0:
            return ~d.any(axis=-1)
        recon = (d[..., list(self.pivots)] @ self.matrix) % self.params.p
        return (recon == d).all(axis=-1)

    def from_coord_digits(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.int64)
        return (c @ self.matrix) % self.params.p

    @cached_property
    def _elements(self) -> np.ndarray:
        coords = FieldParams(self.params.p, self.dim).to_digits(np.arange(self.size, dtype=np.int64))
        pts = np.asarray(self.params.from_digits(self.from_coord_digits(coords)), dtype=np.int64).reshape(-1)
        pts.sort()
        pts.setflags(write=False)
        return pts

    def elements(self) -> np.ndarray:
        """All p^dim members as a sorted index array."""
        return self._elements

    def indicator(self) -> np.ndarray:
        bits = np.zeros(self.params.size, dtype=bool)
        bits[self.elements()] = True
        return bits

    def issubset(self, other: "Subspace") -> bool:
        self._check(other)
        if self.dim == 0:
            return True
        return bool(other.contains_digits(self.matrix).all())

    __le__ = issubset

    def __add__(self, other: "Subspace") -> "Subspace":
        self._check(other)
        return Subspace.from_matrix(self.params, np.concatenate([self.matrix, other.matrix]))

    def perp(self) -> "Subspace":
        return orthogonal_complement(self)

    def intersect(self, other: "Subspace") -> "Subspace":
        self._check(other)
        return (self.perp() + other.perp()).perp()

    __and__ = intersect


def orthogonal_complement(s: Subspace) -> Subspace:
    """U^perp under the dot pairing, identifying the dual of F_p^n with F_p^n."""
    if s.dim == 0:
        return Subspace.full(s.params)
    return Subspace.from_matrix(s.params, nullspace_basis(s.matrix, s.params.p, s.params.n))


def subspace_ops(a: Subspace, b: Subspace) -> dict:
    """Intersection, sum and containment of two subspaces at once."""
    a._check(b)
    return {
        "intersect": a.intersect(b),
        "sum": a + b,
        "a_in_b": a.issubset(b),
        "b_in_a": b.issubset(a),
    }


def enumerate_subspaces(params: FieldParams, codim: int, cap: int | None = None):
    """Yield every subspace of the given codimension exactly once (RREF order)."""
    if not 0 <= codim <= params.n:
        raise ValueError(f"codim {codim} outside [0, {params.n}]")
    count = gaussian_binomial(params.n, params.n - codim, params.p)
    cap = _resolve_cap(cap)
    if count > cap:
        raise CapExceeded(f"subspaces of codim {codim} in F_{params.p}^{params.n}", count, cap)
    return _iter_rref(params, params.n - codim)


def _iter_rref(params, k):
    n, p = params.n, params.p
    for pivots in itertools.combinations(range(n), k):
        pivset = set(pivots)
        free = [(i, c) for i, pc in enumerate(pivots) for c in range(pc + 1, n) if c not in pivset]
        base = np.zeros((k, n), dtype=np.int64)
        for i, pc in enumerate(pivots):
            base[i, pc] = 1
        for vals in itertools.product(range(p), repeat=len(free)):
            m = base.copy()
            for (i, c), v in zip(free, vals):
                m[i, c] = v
            yield Subspace._trusted(params, m, pivots)


def all_subspaces(params: FieldParams, cap: int | None = None) -> list:
    """Every subspace, grouped by decreasing dimension, each group in basis-lex order."""
    cap = _resolve_cap(cap)
    total = sum(gaussian_binomial(params.n, k, params.p) for k in range(params.n + 1))
    if total > cap:
        raise CapExceeded(f"subspaces of F_{params.p}^{params.n}", total, cap)
    out = []
    for codim in range(params.n + 1):
        out.extend(sorted(enumerate_subspaces(params, codim, cap), key=lambda s: s.basis))
    return out


# ---------------------------------------------------------------------------
# affine subspaces and affine maps


@dataclass(frozen=True, eq=False)
class AffineSubspace:
    """Coset ``base + direction`` with base the lexicographically least member."""

    base: int
    direction: Subspace

    def __post_init__(self):
        object.__setattr__(self, "base", _canonical_base(int(self.base), self.direction))

    @classmethod
    def full(cls, params: FieldParams) -> "AffineSubspace":
        return cls(0, Subspace.full(params))

    @classmethod
    def linear(cls, s: Subspace) -> "AffineSubspace":
        return cls(0, s)

    @property
    def params(self) -> FieldParams:
        return self.direction.params

    @property
    def dim(self) -> int:
        return self.direction.dim

    @property
    def codim(self) -> int:
        return self.direction.codim

    @property
    def size(self) -> int:
        return self.direction.size

    @property
    def rel_params(self) -> FieldParams:
        return FieldParams(self.params.p, self.dim)

    def __eq__(self, other):
        if not isinstance(other, AffineSubspace):
            return NotImplemented
        return self.base == other.base and self.direction == other.direction

    def __hash__(self):
        return hash((self.base, self.direction))

    def __repr__(self):
        rows = ",".join(self.params.format(b) for b in self.direction.basis)
        return f"AffineSubspace(base={self.params.format(self.base)}, direction=[{rows}])"

    def contains(self, x):
        return self.direction.contains(self.params.sub(x, self.base))

    def elements(self) -> np.ndarray:
        pts = np.asarray(self.params.add(self.direction.elements(), self.base), dtype=np.int64)
        return np.sort(pts)

    def indicator(self) -> np.ndarray:
        bits = np.zeros(self.params.size, dtype=bool)
        bits[self.elements()] = True
        return bits

    def coords(self, x):
        """Relative index in F_p^dim of members x (RREF pivot coordinates of x - base)."""
        c = self.direction.coord_digits(self.params.sub(x, self.base))
        return self.rel_params.from_digits(c)

    def point(self, rel):
        """Inverse of :meth:`coords`."""
        c = self.rel_params.to_digits(rel)
        d = (self.direction.from_coord_digits(c) + self.params.to_digits(self.base)) % self.params.p
        return self.params.from_digits(d)

    def sub(self, rel: "AffineSubspace") -> "AffineSubspace":
        """Embed an affine subspace given in relative coordinates."""
        if rel.params != self.rel_params:
            raise AmbientMismatch(f"{rel.params} is not the coordinate space {self.rel_params}")
        m = (rel.direction.matrix @ self.direction.matrix) % self.params.p if rel.dim else np.zeros((0, self.params.n))
        return AffineSubspace(int(self.point(rel.base)), Subspace.from_matrix(self.params, m))


def _canonical_base(base: int, direction: Subspace) -> int:
    params = direction.params
    d = params.to_digits(base)
    for row, pc in zip(direction.matrix, direction.pivots):
        if d[pc]:
            d = (d - d[pc] * row) % params.p
    return int(params.from_digits(d)) if params.n else 0


@dataclass(frozen=True, eq=False)
class AffineDualMap:
    """y -> linear @ y + offset from F_p^{n_in} to F_p^{n_out} (dual vectors)."""

    linear: np.ndarray
    offset: np.ndarray
    p: int

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=np.int64) % self.p
        off = np.asarray(self.offset, dtype=np.int64).reshape(-1) % self.p
        if lin.ndim != 2 or lin.shape[0] != off.shape[0]:
            raise AmbientMismatch(f"linear part {lin.shape} incompatible with offset {off.shape}")
        lin.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "offset", off)

    @property
    def n_in(self) -> int:
        return self.linear.shape[1]

    @property
    def n_out(self) -> int:
        return self.linear.shape[0]

    @property
    def params_in(self) -> FieldParams:
        return FieldParams(self.p, self.n_in)

    @property
    def params_out(self) -> FieldParams:
        return FieldParams(self.p, self.n_out)

    def apply_digits(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        return (y @ self.linear.T + self.offset) % self.p

    def __call__(self, y):
        out = self.params_out.from_digits(self.apply_digits(self.params_in.to_digits(y)))
        return out

    def linear_part(self) -> "AffineDualMap":
        return AffineDualMap(self.linear, np.zeros(self.n_out, dtype=np.int64), self.p)

    def __eq__(self, other):
        if not isinstance(other, AffineDualMap):
            return NotImplemented
        return (
            self.p == other.p
            and np.array_equal(self.linear, other.linear)
            and np.array_equal(self.offset, other.offset)
        )

    def __hash__(self):
        return hash((self.p, self.linear.tobytes(), self.offset.tobytes()))

    def to_json(self) -> dict:
        return {"p": self.p, "linear": self.linear.tolist(), "offset": self.offset.tolist()}


def combine_maps(maps, coeffs, p: int) -> AffineDualMap:
    """Linear combination sum(c_j * xi_j) of affine maps."""
    lin = sum(int(c) * m.linear for c, m in zip(coeffs, maps)) % p
    off = sum(int(c) * m.offset for c, m in zip(coeffs, maps)) % p
    return AffineDualMap(lin, off, p)
