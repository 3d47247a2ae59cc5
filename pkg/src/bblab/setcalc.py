"""Bitset subsets of F_p^n and F_p^{n1} x F_p^{n2}, sumsets and the fiberwise operators.

A :class:`ProductSet` is a boolean matrix whose row ``x`` is the fiber
``{y : (x, y) in P}``.  ``phi_v`` replaces every nonempty row B by 2B-2B and
``phi_h`` does the same to columns.  Sumsets of a batch of rows go through an
exact integer pair-count convolution when the rows are large and through a
direct translate-and-or loop when they are small.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _transform
from .errors import AmbientMismatch, ParseError
from .gfspace import AffineSubspace, FieldParams

CROSSOVER = 1 << 12
_CHUNK_CELLS = 1 << 22


def _frozen(bits) -> np.ndarray:
    b = np.ascontiguousarray(bits, dtype=bool)
    b.setflags(write=False)
    return b


@dataclass(frozen=True, eq=False)
class DenseSet:
    params: FieldParams
    bits: np.ndarray

    def __post_init__(self):
        b = _frozen(self.bits).reshape(-1)
        if b.shape[0] != self.params.size:
            raise AmbientMismatch(f"bitset of length {b.shape[0]} for ambient of size {self.params.size}")
        object.__setattr__(self, "bits", b)

    @classmethod
    def from_indices(cls, params: FieldParams, idx) -> "DenseSet":
        bits = np.zeros(params.size, dtype=bool)
        bits[np.asarray(idx, dtype=np.int64).reshape(-1)] = True
        return cls(params, bits)

    @classmethod
    def from_strings(cls, params: FieldParams, words) -> "DenseSet":
        return cls.from_indices(params, [params.parse(w) for w in words])

    @classmethod
    def empty(cls, params: FieldParams) -> "DenseSet":
        return cls(params, np.zeros(params.size, dtype=bool))

    @classmethod
    def full(cls, params: FieldParams) -> "DenseSet":
        return cls(params, np.ones(params.size, dtype=bool))

    @classmethod
    def of(cls, space) -> "DenseSet":
        """The member set of a Subspace or AffineSubspace."""
        return cls(space.params, space.indicator())

    @cached_property
    def card(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __len__(self) -> int:
        return self.card

    @property
    def density(self) -> float:
        return self.card / self.params.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def strings(self) -> list:
        return [self.params.format(i) for i in self.indices()]

    def __contains__(self, x) -> bool:
        return bool(self.bits[int(x)])

    def __eq__(self, other):
        if not isinstance(other, DenseSet):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.params, np.packbits(self.bits).tobytes()))

    def __repr__(self):
        if self.card <= 16:
            body = "{" + ",".join(self.strings()) + "}"
        else:
            body = f"<{self.card} points>"
        return f"DenseSet(p={self.params.p}, n={self.params.n}, {body})"

    def _check(self, other):
        if self.params != other.params:
            raise AmbientMismatch(f"{self.params} vs {other.params}")

    def issubset(self, other: "DenseSet") -> bool:
        self._check(other)
        return not np.any(self.bits & ~other.bits)

    __le__ = issubset

    def __and__(self, other):
        self._check(other)
        return DenseSet(self.params, self.bits & other.bits)

    def __or__(self, other):
        self._check(other)
        return DenseSet(self.params, self.bits | other.bits)

    def __sub__(self, other):
        self._check(other)
        return DenseSet(self.params, self.bits & ~other.bits)

    def complement(self) -> "DenseSet":
        return DenseSet(self.params, ~self.bits)

    def translate(self, v: int) -> "DenseSet":
        idx = self.params.add(self.indices(), int(v))
        return DenseSet.from_indices(self.params, idx)

    def negate(self) -> "DenseSet":
        return DenseSet.from_indices(self.params, self.params.neg(self.indices()))


@dataclass(frozen=True, eq=False)
class ProductSet:
    params1: FieldParams
    params2: FieldParams
    bits: np.ndarray
    trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.params1.p != self.params2.p:
            raise AmbientMismatch("both factors must live over the same field")
        b = _frozen(self.bits).reshape(self.params1.size, self.params2.size)
        object.__setattr__(self, "bits", b)

    @property
    def p(self) -> int:
        return self.params1.p

    @classmethod
    def empty(cls, params1, params2) -> "ProductSet":
        return cls(params1, params2, np.zeros((params1.size, params2.size), dtype=bool))

    @classmethod
    def full(cls, params1, params2) -> "ProductSet":
        return cls(params1, params2, np.ones((params1.size, params2.size), dtype=bool))

    @classmethod
    def from_pairs(cls, params1, params2, pairs) -> "ProductSet":
        bits = np.zeros((params1.size, params2.size), dtype=bool)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        bits[pairs[:, 0], pairs[:, 1]] = True
        return cls(params1, params2, bits)

    @classmethod
    def product(cls, a: DenseSet, b: DenseSet) -> "ProductSet":
        return cls(a.params, b.params, np.outer(a.bits, b.bits))

    @classmethod
    def from_flat(cls, params1, params2, flat) -> "ProductSet":
        return cls(params1, params2, np.asarray(flat, dtype=bool).reshape(params1.size, params2.size))

    @cached_property
    def card(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __len__(self) -> int:
        return self.card

    @property
    def size(self) -> int:
        return self.params1.size * self.params2.size

    @property
    def density(self) -> float:
        return self.card / self.size

    def pairs(self) -> np.ndarray:
        """Members as an (k, 2) array of (x, y) indices in flat index order."""
        return np.argwhere(self.bits)

    def __contains__(self, xy) -> bool:
        x, y = xy
        return bool(self.bits[int(x), int(y)])

    def __eq__(self, other):
        if not isinstance(other, ProductSet):
            return NotImplemented
        return (
            self.params1 == other.params1
            and self.params2 == other.params2
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.params1, self.params2, np.packbits(self.bits).tobytes()))

    def __repr__(self):
        return (
            f"ProductSet(p={self.p}, n1={self.params1.n}, n2={self.params2.n}, "
            f"card={self.card})"
        )

    def _check(self, other):
        if (self.params1, self.params2) != (other.params1, other.params2):
            raise AmbientMismatch("product ambients differ")

    def issubset(self, other: "ProductSet") -> bool:
        self._check(other)
        return not np.any(self.bits & ~other.bits)

    __le__ = issubset

    def __and__(self, other):
        self._check(other)
        return ProductSet(self.params1, self.params2, self.bits & other.bits)

    def __or__(self, other):
        self._check(other)
        return ProductSet(self.params1, self.params2, self.bits | other.bits)

    def __sub__(self, other):
        self._check(other)
        return ProductSet(self.params1, self.params2, self.bits & ~other.bits)

    def swap(self) -> "ProductSet":
        return ProductSet(self.params2, self.params1, self.bits.T)

    def with_trace(self, trace) -> "ProductSet":
        return ProductSet(self.params1, self.params2, self.bits, tuple(trace))


# ---------------------------------------------------------------------------
# batched sumsets


def _direct_rows(a: np.ndarray, b: np.ndarray, params: FieldParams, sign: int) -> np.ndarray:
    table = params.add_table
    if sign == -1:
        table = table[:, params.neg_table]
    out = np.zeros_like(a)
    for u in np.flatnonzero(a.any(axis=0)):
        out[:, table[u]] |= a[:, u : u + 1] & b
    return out


def _transform_rows(a: np.ndarray, b: np.ndarray, params: FieldParams, sign: int) -> np.ndarray:
    out = np.empty_like(a)
    step = max(1, _CHUNK_CELLS // params.size)
    same = a is b
    for lo in range(0, a.shape[0], step):
        ca = a[lo : lo + step]
        cb = ca if same else b[lo : lo + step]
        counts = _transform.pair_counts(ca, cb, params.p, params.n, sign=sign)
        out[lo : lo + step] = counts > 0
    return out


def sumset_rows(a, b, params: FieldParams, sign: int = 1, crossover: int = CROSSOVER) -> np.ndarray:
    """Row-wise ``a[i] + sign * b[i]`` for boolean matrices of shape (k, p^n)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    a = np.asarray(a, dtype=bool)
    b = a if b is None else np.asarray(b, dtype=bool)
    if a.shape != b.shape or a.shape[-1] != params.size:
        raise AmbientMismatch(f"row batches {a.shape} and {b.shape} over ambient {params.size}")
    if a.shape[0] == 0:
        return a.copy()
    weight = np.maximum(a.sum(axis=1), b.sum(axis=1)) * params.size
    heavy = weight > crossover
    out = np.zeros_like(a)
    if heavy.any():
        ha, hb = a[heavy], b[heavy]
        out[heavy] = _transform_rows(ha, ha if a is b else hb, params, sign)
    light = ~heavy & a.any(axis=1) & b.any(axis=1)
    if light.any():
        out[light] = _direct_rows(a[light], b[light], params, sign)
    return out


def two_a_minus_two_a_rows(rows, params: FieldParams, crossover: int = CROSSOVER) -> np.ndarray:
    s = sumset_rows(rows, None, params, 1, crossover)
    return sumset_rows(s, None, params, -1, crossover)


def sumset(a: DenseSet, b: DenseSet, sign: int = 1) -> DenseSet:
    """``{x + sign*y : x in a, y in b}``."""
    a._check(b)
    bits = sumset_rows(a.bits[None], b.bits[None], a.params, sign)[0]
    return DenseSet(a.params, bits)


def two_a_minus_two_a(a: DenseSet) -> DenseSet:
    return DenseSet(a.params, two_a_minus_two_a_rows(a.bits[None], a.params)[0])


# ---------------------------------------------------------------------------
# fiberwise operators


def fiber(p: ProductSet, x: int, axis: int = 1) -> DenseSet:
    """axis 1: ``{y : (x, y) in P}``; axis 2: ``{x' : (x', x) in P}``."""
    if axis == 1:
        if not 0 <= int(x) < p.params1.size:
            raise AmbientMismatch(f"{x} is not a point of the first factor")
        return DenseSet(p.params2, p.bits[int(x)])
    if axis == 2:
        if not 0 <= int(x) < p.params2.size:
            raise AmbientMismatch(f"{x} is not a point of the second factor")
        return DenseSet(p.params1, p.bits[:, int(x)])
    raise ValueError("axis must be 1 or 2")


def phi_v(p: ProductSet, crossover: int = CROSSOVER) -> ProductSet:
    """Replace each nonempty row fiber B by 2B-2B."""
    bits = np.zeros_like(p.bits)
    rows = np.flatnonzero(p.bits.any(axis=1))
    if rows.size:
        bits[rows] = two_a_minus_two_a_rows(p.bits[rows], p.params2, crossover)
    return ProductSet(p.params1, p.params2, bits)


def phi_h(p: ProductSet, crossover: int = CROSSOVER) -> ProductSet:
    return phi_v(p.swap(), crossover).swap()


def parse_word(word) -> tuple:
    if isinstance(word, str):
        word = list(word.replace(",", "").replace(" ", ""))
    w = tuple(str(c).upper() for c in word)
    if not w or any(c not in ("H", "V") for c in w):
        raise ValueError(f"operator word must be a nonempty string over H/V, got {word!r}")
    return w


def phi_pipeline(p: ProductSet, word="HVH", crossover: int = CROSSOVER) -> ProductSet:
    """Apply the word right to left (``HVH`` is phi_h(phi_v(phi_h(P)))).

    The result carries a trace of ``(stage, cardinality)`` pairs starting with
    the input.
    """
    w = parse_word(word)
    trace = [("input", p.card)]
    cur = p
    for op in reversed(w):
        cur = phi_v(cur, crossover) if op == "V" else phi_h(cur, crossover)
        trace.append((op, cur.card))
    return cur.with_trace(trace)


# ---------------------------------------------------------------------------
# relative coordinates inside affine ambients


def to_relative(a: DenseSet, ambient: AffineSubspace) -> DenseSet:
    """Re-index ``a`` (a subset of the ambient) by the ambient's RREF coordinates."""
    if a.params != ambient.params:
        raise AmbientMismatch("set and ambient live in different spaces")
    rel = ambient.rel_params
    idx = a.indices()
    if idx.size and not np.all(ambient.contains(idx)):
        raise AmbientMismatch("set is not contained in the ambient")
    return DenseSet.from_indices(rel, np.asarray(ambient.coords(idx), dtype=np.int64).reshape(-1))


def from_relative(rel: DenseSet, ambient: AffineSubspace) -> DenseSet:
    if rel.params != ambient.rel_params:
        raise AmbientMismatch("relative set does not match the ambient's coordinate space")
    pts = np.asarray(ambient.point(rel.indices()), dtype=np.int64).reshape(-1)
    return DenseSet.from_indices(ambient.params, pts)


# ---------------------------------------------------------------------------
# text format


def _header(params1, params2=None) -> str:
    h = f"p {params1.p} n1 {params1.n}"
    return h + (f" n2 {params2.n}" if params2 is not None else "")


def dumps_set(s) -> str:
    """Serialise a DenseSet or ProductSet; list form below density 1/64, hex otherwise."""
    if isinstance(s, ProductSet):
        head = _header(s.params1, s.params2)
        flat = s.bits.reshape(-1)
        sparse = s.card * 64 < s.size
        lines = [f"{s.params1.format(x)} {s.params2.format(y)}" for x, y in s.pairs()] if sparse else None
    else:
        head = _header(s.params)
        flat = s.bits
        sparse = s.card * 64 < s.params.size
        lines = s.strings() if sparse else None
    if sparse:
        return "\n".join([head, "list", *lines]) + "\n"
    hexs = np.packbits(flat, bitorder="little").tobytes().hex()
    wrapped = [hexs[i : i + 64] for i in range(0, len(hexs), 64)] or [""]
    return "\n".join([head, "hex", *wrapped]) + "\n"


def loads_set(text: str):
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(io.StringIO(text).read().splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty set file")
    lineno, head = lines[0]
    tok = head.split()
    try:
        if len(tok) not in (4, 6) or tok[0] != "p" or tok[2] != "n1" or (len(tok) == 6 and tok[4] != "n2"):
            raise ValueError("header must read 'p <p> n1 <n1> [n2 <n2>]'")
        p1 = FieldParams(int(tok[1]), int(tok[3]))
        p2 = FieldParams(p1.p, int(tok[5])) if len(tok) == 6 else None
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    if len(lines) < 2 or lines[1][1] not in ("list", "hex"):
        raise ParseError("expected 'list' or 'hex' after the header", lines[1][0] if len(lines) > 1 else lineno)
    mode = lines[1][1]
    body = lines[2:]
    total = p1.size * (p2.size if p2 else 1)
    if mode == "hex":
        hexs = "".join(ln for _, ln in body)
        try:
            raw = bytes.fromhex(hexs)
        except ValueError:
            raise ParseError("malformed hex payload", body[0][0] if body else lines[1][0]) from None
        if len(raw) != (total + 7) // 8:
            raise ParseError(f"hex payload has {len(raw)} bytes, expected {(total + 7) // 8}", lines[1][0])
        flat = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:total].astype(bool)
        return ProductSet.from_flat(p1, p2, flat) if p2 else DenseSet(p1, flat)
    pts = []
    for ln_no, ln in body:
        parts = ln.split()
        try:
            if p2 is None:
                if len(parts) != 1:
                    raise ValueError("expected one digit string")
                pts.append(p1.parse(parts[0]))
            else:
                if len(parts) != 2:
                    raise ValueError("expected 'x y' digit strings")
                pts.append((p1.parse(parts[0]), p2.parse(parts[1])))
        except ValueError as exc:
            raise ParseError(str(exc), ln_no) from None
    if p2 is None:
        return DenseSet.from_indices(p1, np.asarray(pts, dtype=np.int64))
    return ProductSet.from_pairs(p1, p2, pts)


def read_set(path):
    return loads_set(Path(path).read_text())


def write_set(path, s) -> None:
    Path(path).write_text(dumps_set(s))
