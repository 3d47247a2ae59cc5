"""Run the variety-extraction driver over planted varieties with random noise.

Each trial plants a random bilinear variety in F_2^n x F_2^n, flips a share
of extra cells on, runs the driver and records the recovered (r1, r2, r3),
the operator word, the step kinds and whether containment was verified.
Prints one JSON object per trial followed by a summary line.

    python3 scripts/driver_sweep.py --n 3 --trials 50 --noise 0.05
"""

from __future__ import annotations

import argparse
import collections
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from bblab.bivariety import BilinearVariety, variety_members
from bblab.gfspace import FieldParams, Subspace
from bblab.scheme import DriverConfig, run_driver
from bblab.setcalc import ProductSet


@dataclass(frozen=True)
class SweepConfig:
    p: int = 2
    n: int = 3
    trials: int = 20
    noise: float = 0.05
    max_forms: int = 2
    seed: int = 0


def planted(rng: np.random.Generator, cfg: SweepConfig) -> BilinearVariety:
    prm = FieldParams(cfg.p, cfg.n)
    ws = []
    for _ in range(2):
        k = int(rng.integers(1, cfg.n + 1))
        ws.append(Subspace.span(prm, rng.integers(0, prm.size, k)))
    k = int(rng.integers(0, cfg.max_forms + 1))
    forms = tuple(rng.integers(0, cfg.p, (ws[0].dim, ws[1].dim)) for _ in range(k))
    return BilinearVariety(ws[0], ws[1], forms)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in SweepConfig.__dataclass_fields__.values():
        ap.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    cfg = SweepConfig(**vars(ap.parse_args()))
    rng = np.random.default_rng(cfg.seed)
    prm = FieldParams(cfg.p, cfg.n)
    words = collections.Counter()
    failures = 0
    t0 = time.perf_counter()
    for trial in range(cfg.trials):
        v = planted(rng, cfg)
        bits = variety_members(v).bits | (rng.random((prm.size, prm.size)) < cfg.noise)
        p = ProductSet(prm, prm, bits)
        rep = run_driver(p, p.density, DriverConfig(seed=cfg.seed * 100003 + trial))
        words[rep.word] += 1
        failures += not rep.contained
        row = {
            "trial": trial,
            "planted": list(v.params),
            "density": round(p.density, 6),
            "recovered": None if rep.params is None else list(rep.params),
            "word": rep.word,
            "case": rep.case,
            "steps": [s.alternative for s in rep.steps],
            "contained": rep.contained,
        }
        print(json.dumps(row))
    summary = {
        "config": asdict(cfg),
        "failures": failures,
        "words": dict(words),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
