"""How often does phi_word(P) fill the whole product space?

Runs an exhaustive count over every subset of F_p^n1 x F_p^n2 when that is
small enough, plus a seeded sample of random sets at a fixed density.

    python3 scripts/phi_frequency.py --n1 2 --n2 2 --samples 1000 --seed 0
"""

from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from bblab.gfspace import FieldParams
from bblab.setcalc import ProductSet, phi_pipeline


@dataclass(frozen=True)
class FrequencyConfig:
    p: int = 2
    n1: int = 2
    n2: int = 2
    word: str = "HVH"
    samples: int = 1000
    density: float = 0.5
    seed: int = 0
    exhaustive_limit: int = 1 << 16


def _full(bits: np.ndarray, f1: FieldParams, f2: FieldParams, word: str) -> bool:
    return bool(phi_pipeline(ProductSet(f1, f2, bits), word).bits.all())


def run(cfg: FrequencyConfig) -> dict:
    f1, f2 = FieldParams(cfg.p, cfg.n1), FieldParams(cfg.p, cfg.n2)
    cells = f1.size * f2.size
    out = {"config": asdict(cfg)}
    if 2**cells <= cfg.exhaustive_limit:
        masks = np.arange(2**cells)
        grid = ((masks[:, None] >> np.arange(cells)) & 1).astype(bool).reshape(-1, f1.size, f2.size)
        hits = sum(_full(b, f1, f2, cfg.word) for b in grid)
        out["exhaustive"] = {"sets": int(2**cells), "full_image": int(hits), "fraction": hits / 2**cells}
    rng = np.random.default_rng(cfg.seed)
    hits = 0
    for _ in range(cfg.samples):
        hits += _full(rng.random((f1.size, f2.size)) < cfg.density, f1, f2, cfg.word)
    out["sampled"] = {"sets": cfg.samples, "full_image": hits, "fraction": hits / max(cfg.samples, 1)}
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in FrequencyConfig.__dataclass_fields__.values():
        ap.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    cfg = FrequencyConfig(**vars(ap.parse_args()))
    print(json.dumps(run(cfg), indent=2))


if __name__ == "__main__":
    main()
