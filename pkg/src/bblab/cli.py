"""Command-line front end.  Every subcommand prints (or writes) one JSON report.

Exit codes: 0 success, 2 parse or precondition error, 3 enumeration cap
exceeded, 4 containment or bound failure, 5 certification failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, fourier
from .bivariety import BilinearMapTensor, SearchBudget, rank_corollary_check
from .errors import (
    AmbientMismatch,
    CapExceeded,
    NoCertifiedSubspace,
    ParseError,
    PartitionError,
    PreconditionError,
    TheoremViolation,
)
from .gfspace import default_cap
from .scheme import DriverConfig, run_driver
from .setcalc import DenseSet, ProductSet, dumps_set, loads_set, phi_pipeline, two_a_minus_two_a
from .structure import certified_bogolyubov, max_subspace_in

EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_CONTAINMENT, EXIT_CERT = 0, 2, 3, 4, 5
VOLATILE_KEYS = ("timestamp", "timing")

log = logging.getLogger("bblab")


class CommandFailure(Exception):
    def __init__(self, code: int, report: dict):
        super().__init__(code)
        self.code = code
        self.report = report


@dataclass(frozen=True)
class RunConfig:
    """Provenance block embedded in every report."""

    command: str
    seed: int = 0
    cap: int | None = None
    tolerance: float = 1e-9
    output: str | None = None
    verbosity: int = 0

    @property
    def effective_cap(self) -> int:
        return default_cap() if self.cap is None else self.cap

    def derived_seed(self, counter: int) -> int:
        return int(np.random.SeedSequence([self.seed, counter]).generate_state(1)[0])

    def to_json(self) -> dict:
        out = asdict(self)
        out["effective_cap"] = self.effective_cap
        return out


def _read_set(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return loads_set(text)


def _need(obj, kind, path):
    if not isinstance(obj, kind):
        want = "product set (header with n2)" if kind is ProductSet else "set over a single space"
        raise ParseError(f"{path}: expected a {want}")
    return obj


def _clean(x: float, tol: float) -> float:
    return 0.0 if abs(x) < tol else float(x)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fourier_stats(args, cfg: RunConfig) -> dict:
    a = _need(_read_set(args.set_file), DenseSet, args.set_file)
    pr = fourier.pseudorandomness(a)
    eps = fourier.epsilon_star_exact(a)
    q = fourier.u2_fourth_power(a)
    spectrum = fourier.relative_spectrum(a)
    if args.spectrum:
        rows = ["s_index,re,im,magnitude"]
        for s, c in enumerate(spectrum.coeffs):
            re, im = _clean(c.real, cfg.tolerance), _clean(c.imag, cfg.tolerance)
            rows.append(f"{s},{re!r},{im!r},{_clean(abs(c), cfg.tolerance)!r}")
        Path(args.spectrum).write_text("\n".join(rows) + "\n")
    return {
        "p": a.params.p,
        "n": a.params.n,
        "card": a.card,
        "density": a.density,
        "epsilon_star": _clean(pr.epsilon_star, cfg.tolerance),
        "epsilon_star_exact": str(eps),
        "max_nontrivial_coefficient": _clean(pr.max_nontrivial_coeff, cfg.tolerance),
        "quadruple_count": q.count,
        "quadruple_density": q.density,
        "spectrum_csv": args.spectrum,
    }


def cmd_bogolyubov(args, cfg: RunConfig) -> dict:
    a = _need(_read_set(args.set_file), DenseSet, args.set_file)
    target = two_a_minus_two_a(a)
    policy = "auto" if args.threshold is None else args.threshold
    try:
        cert = certified_bogolyubov(a, policy, target)
    except NoCertifiedSubspace as exc:
        raise CommandFailure(EXIT_CERT, {"verified": False, "error": str(exc)}) from None
    out = {"p": a.params.p, "n": a.params.n, "density": a.density, "certificate": cert.to_json()}
    if args.exact:
        best = max_subspace_in(target, cfg.cap)
        out["exact_optimum"] = {
            "basis": [a.params.format(b) for b in best.basis],
            "codim": best.codim,
            "gap": cert.codim - best.codim,
        }
    return out


def cmd_phi(args, cfg: RunConfig) -> dict:
    p = _need(_read_set(args.set_file), ProductSet, args.set_file)
    cap = cfg.effective_cap
    if p.size > cap:
        raise CapExceeded("product set cells", p.size, cap)
    image = phi_pipeline(p, args.word)
    if args.out:
        Path(args.out).write_text(dumps_set(image))
    return {
        "word": args.word,
        "input_card": p.card,
        "output_card": image.card,
        "stages": [{"stage": name, "card": card} for name, card in image.trace],
        "out": args.out,
    }


def cmd_scheme_trace(args, cfg: RunConfig) -> dict:
    p = _need(_read_set(args.set_file), ProductSet, args.set_file)
    delta = p.density if args.delta is None else args.delta
    dcfg = DriverConfig(
        seed=cfg.derived_seed(0),
        tau=args.tau,
        rank_threshold=args.rank_threshold,
        epsilon=args.epsilon,
        relax_pseudorandom=not args.strict_pseudorandom,
        full_check=args.full_check,
        cap=cfg.cap,
        budget=SearchBudget(max_total_codim=args.max_codim, cap=cfg.cap),
    )
    report = run_driver(p, delta, dcfg).to_json()
    if not report["containment"]["verified"]:
        raise CommandFailure(EXIT_CONTAINMENT, report)
    return report


def cmd_rank_corollary(args, cfg: RunConfig) -> dict:
    try:
        text = Path(args.tensor_file).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {args.tensor_file}: {exc.strerror}") from None
    psi = BilinearMapTensor.from_json(text)
    rep = rank_corollary_check(
        psi, args.epsilon, args.word, SearchBudget(cap=cfg.cap), search=not args.no_search
    ).to_json()
    if rep["verdict"] != "PASS":
        raise CommandFailure(EXIT_CONTAINMENT, rep)
    return rep


# ---------------------------------------------------------------------------
# plumbing


def _common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("run configuration")
    g.add_argument("--seed", type=int, default=0, help="master seed for every random substep (default 0)")
    g.add_argument("--cap", type=int, default=None, help="enumeration cap (default $BBLAB_CAP or 10^7)")
    g.add_argument("--tolerance", type=float, default=1e-9, help="floats below this print as 0 (default 1e-9)")
    g.add_argument("-o", "--output", default=None, help="write the JSON report here instead of stdout")
    g.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr (repeat for debug)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bblab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"bblab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser("fourier-stats", help="density, pseudorandomness and quadruple count of a set")
    sp.add_argument("set_file")
    sp.add_argument("--spectrum", metavar="CSV", help="also write the full spectrum as CSV")
    sp.set_defaults(func=cmd_fourier_stats)

    sp = sub.add_parser("bogolyubov", help="certified subspace inside 2A-2A")
    sp.add_argument("set_file")
    sp.add_argument("--exact", action="store_true", help="also compute the largest subspace of 2A-2A")
    sp.add_argument("--threshold", type=float, help="fixed spectral threshold instead of the halving schedule")
    sp.set_defaults(func=cmd_bogolyubov)

    sp = sub.add_parser("phi", help="apply a word of vertical/horizontal operators to a product set")
    sp.add_argument("set_file")
    sp.add_argument("--word", default="HVH", help="operators applied right to left (default HVH)")
    sp.add_argument("--out", help="write the image set file here")
    sp.set_defaults(func=cmd_phi)

    sp = sub.add_parser("scheme-trace", help="run the variety-extraction driver and emit its trace")
    sp.add_argument("set_file")
    sp.add_argument("--delta", type=float, default=None, help="density lower bound (default: density of the input)")
    sp.add_argument("--tau", type=float, default=None, help="good-x fraction that triggers termination")
    sp.add_argument("--rank-threshold", type=int, default=None, help="rank below which maps are merged")
    sp.add_argument("--epsilon", type=float, default=None, help="pseudorandomness target (default p^-r / 256)")
    sp.add_argument("--strict-pseudorandom", action="store_true", help="fail instead of warning on weak pseudorandomness")
    sp.add_argument("--full-check", action="store_true", help="verify every Bogolyubov fiber against the input")
    sp.add_argument("--max-codim", type=int, default=None, help="budget for the endgame variety search")
    sp.set_defaults(func=cmd_scheme_trace)

    sp = sub.add_parser("rank-corollary", help="rank bound on the image of a low-rank bilinear map set")
    sp.add_argument("tensor_file", help="JSON with p, m, n1, n2, components")
    sp.add_argument("--epsilon", type=int, required=True, help="rank bound defining the input set")
    sp.add_argument("--word", default="HVH")
    sp.add_argument("--no-search", action="store_true", help="skip the variety search on the image")
    sp.set_defaults(func=cmd_rank_corollary)

    for p in sub.choices.values():
        _common(p)
    return ap


def _emit(report: dict, cfg: RunConfig) -> None:
    text = json.dumps(report, sort_keys=True, indent=2, default=str) + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = RunConfig(args.command, args.seed, args.cap, args.tolerance, args.output, args.verbose)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    envelope = {
        "bblab_version": __version__,
        "config": cfg.to_json(),
        "input": getattr(args, "set_file", None) or getattr(args, "tensor_file", None),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    code, result = EXIT_OK, None
    try:
        result = args.func(args, cfg)
    except CommandFailure as exc:
        code, result = exc.code, exc.report
    except (ParseError, PreconditionError, AmbientMismatch) as exc:
        code, result = EXIT_INPUT, {"error": str(exc), "kind": type(exc).__name__}
    except CapExceeded as exc:
        code, result = EXIT_CAP, {"error": str(exc), "kind": "CapExceeded"}
    except (NoCertifiedSubspace, TheoremViolation, PartitionError) as exc:
        code, result = EXIT_CERT, {"error": str(exc), "kind": type(exc).__name__}
    envelope["status"] = code
    envelope["result"] = result
    _emit(envelope, cfg)
    if code:
        print(f"bblab {args.command}: exit {code}: {result.get('error', 'check failed')}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
