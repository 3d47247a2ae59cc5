"""Recompute the frozen constants used by the test suite with the brute-force oracles.

Nothing here calls the library's fast paths for the oracle values; the
library values are printed next to them so a mismatch is easy to spot.

    python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import itertools
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import oracles  # noqa: E402

from bblab.gfspace import FieldParams  # noqa: E402
from bblab.setcalc import DenseSet  # noqa: E402
from bblab.structure import partition4  # noqa: E402

M = [[1, 1, 0], [0, 1, 1], [0, 0, 1]]


def full_hvh_images() -> int:
    """Subsets of F_2^2 x F_2^2 whose HVH image is the whole space."""
    every = {(x, y) for x in range(4) for y in range(4)}
    cells = sorted(every)
    hits = 0
    for mask in range(1 << 16):
        pairs = {c for k, c in enumerate(cells) if mask >> k & 1}
        hits += oracles.phi_word(pairs, "HVH", 2, 2, 2) == every
    return hits


def planted_kappa() -> tuple:
    """Additive quadruples of F_2^3 whose images under M span fewer than 3 dimensions."""
    def my(y):
        return [sum(M[i][k] * y[k] for k in range(3)) % 2 for i in range(3)]

    low = total = 0
    for y1, y2, y3 in itertools.product(oracles.points(2, 3), repeat=3):
        y4 = oracles.vsub(oracles.vadd(y1, y2, 2), y3, 2)
        total += 1
        low += oracles.matrix_rank([my(y) for y in (y1, y2, y3, y4)], 2) < 3
    return low, total


def partition_attempts() -> int:
    res = partition4(DenseSet.full(FieldParams(2, 4)), np.array([[1, 2, 3, 4]]), rng_seed=42)
    return res.attempts


def main() -> None:
    corner = {0, 1, 2}
    out = {
        "full_hvh_images_2x2": full_hvh_images(),
        "corner_quadruples": oracles.quad_count(corner, 2, 2),
        "planted_kappa": planted_kappa(),
        "partition_seed42_attempts": partition_attempts(),
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
