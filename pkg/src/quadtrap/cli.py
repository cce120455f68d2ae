"""Command-line front end: analyze, lossless, certify, simulate.

Exit status contract (stable, for scripting):
    0  success / certificate verified
    1  certificate failure (no certificate found, verification failed,
       or simulation falsified the claim)
    2  input or usage error
    3  a Monte-Carlo trajectory diverged
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import certify as certify_mod
from . import lossless as lossless_mod
from . import pipeline as pipeline_mod
from . import sim as sim_mod
from .fixtures import FIXTURES, REFERENCE_RESULTS, build_fixture
from .model import ModelError, load_system

__all__ = ["main", "build_parser"]


class _InputError(Exception):
    """Maps to exit status 2."""


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _parse_chi_grid(text: str) -> tuple:
    """Parse 'lo:hi:count' into a logarithmically spaced grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise _InputError(f"--chi-grid expects lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise _InputError(f"--chi-grid expects numbers, got {text!r}") from exc
    if lo <= 0 or hi <= 0 or hi < lo or count < 1:
        raise _InputError(f"--chi-grid needs 0 < lo <= hi and count >= 1, got {text!r}")
    return tuple(float(x) for x in np.logspace(np.log10(lo), np.log10(hi), count))


def _parse_vector(text: str, n: int) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise _InputError(f"expected comma-separated numbers, got {text!r}") from exc
    if values.shape != (n,):
        raise _InputError(f"expected {n} components, got {len(values)}")
    return values


def _load_source(args):
    if getattr(args, "fixture", None):
        return build_fixture(args.fixture)
    path = Path(args.system)
    if not path.exists():
        raise _InputError(f"system file not found: {path}")
    try:
        return load_system(path)
    except ModelError as exc:
        raise _InputError(str(exc)) from exc


def _source_stem(args) -> str:
    return args.fixture if getattr(args, "fixture", None) else Path(args.system).stem


def _write_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadtrap",
        description="Certify global boundedness of quadratic systems via trapping ellipsoids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(sp):
        group = sp.add_mutually_exclusive_group(required=True)
        group.add_argument("--fixture", choices=sorted(FIXTURES), help="named example system")
        group.add_argument("--system", metavar="PATH", help="JSON system file {n, A, Q, d}")

    analyze = sub.add_parser("analyze", help="run the full trapping-ellipsoid pipeline")
    add_source(analyze)
    analyze.add_argument("--delta-m", type=float, default=10.0, help="shift search radius")
    analyze.add_argument("--epsilon", type=float, default=1e-6, help="LMI strictness margin")
    analyze.add_argument("--chi-grid", default="0.1:10:100", metavar="LO:HI:COUNT",
                         help="log-spaced grid (default 0.1:10:100)")
    analyze.add_argument("--restarts", type=_positive_int, default=10)
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--constraint-mode", choices=("hard", "soft"), default="hard")
    analyze.add_argument("--fix-shift", metavar="V1,...,VN", help="skip shift search, pin m")
    analyze.add_argument("--compare", metavar="NAME", help="print reference comparison numbers")
    analyze.add_argument("--out", default=".", metavar="DIR", help="output directory")

    loss = sub.add_parser("lossless", help="show the admissible inner-product families")
    add_source(loss)
    loss.add_argument("--out", metavar="PATH", help="also write the structure as JSON")

    cert = sub.add_parser("certify", help="verify a certificate file against a system")
    add_source(cert)
    cert.add_argument("--certificate", required=True, metavar="PATH")
    cert.add_argument("--samples", type=_positive_int, default=100)
    cert.add_argument("--epsilon", type=float, default=1e-6)
    cert.add_argument("--out", metavar="PATH", help="also write the verification report as JSON")

    simu = sub.add_parser("simulate", help="Monte-Carlo empirical ultimate bound")
    add_source(simu)
    simu.add_argument("--trials", type=_positive_int, default=1000)
    simu.add_argument("--seed", type=int, default=0)
    simu.add_argument("--horizon", type=float, default=200.0)
    simu.add_argument("--certificate", metavar="PATH", help="also check ellipsoid invariance")
    simu.add_argument("--out", metavar="PATH", help="also write the Monte-Carlo report as JSON")

    return parser


def cmd_analyze(args) -> int:
    system = _load_source(args)
    try:
        config = pipeline_mod.PipelineConfig(
            delta_m=args.delta_m,
            epsilon=args.epsilon,
            chi_grid=_parse_chi_grid(args.chi_grid),
            restarts=args.restarts,
            rng_seed=args.seed,
            constraint_mode=args.constraint_mode,
        )
    except pipeline_mod.PipelineError as exc:
        raise _InputError(str(exc)) from exc
    fixed_shift = _parse_vector(args.fix_shift, system.n) if args.fix_shift else None

    report = pipeline_mod.run_pipeline(system, config, fixed_shift=fixed_shift)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = _source_stem(args)
    _write_json(report.to_dict(), outdir / f"{stem}_report.json")
    pipeline_mod.sweep_to_csv(report.sweep, outdir / f"{stem}_sweep.csv")
    if report.final is not None:
        pipeline_mod.save_certificate(
            report.final, outdir / f"{stem}_certificate.json", config=config, seed=args.seed
        )

    prior = (REFERENCE_RESULTS.get(stem) or {}).get("prior_radius")
    prior_text = f"{prior:g}" if prior is not None else "n/a"
    if report.final is not None:
        print(
            f"{stem}: prior radius {prior_text}, computed alpha {report.final.alpha:.6g} "
            f"(stage {report.final.stage}, ultimate bound {report.final.ultimate_bound:.6g})"
        )
    if args.compare:
        comp = REFERENCE_RESULTS.get(args.compare)
        if comp:
            details = ", ".join(f"{k} {v:g}" for k, v in comp.items() if v is not None)
            print(f"comparison [{args.compare}]: {details}")
        else:
            print(f"comparison [{args.compare}]: no reference numbers on record")
    if report.status != "certified":
        print(f"no certificate: failed at stage {report.failed_stage}: {report.message}")
        return 1
    print(f"artifacts written to {outdir}")
    return 0


def cmd_lossless(args) -> int:
    system = _load_source(args)
    structure = lossless_mod.build_structure(system)
    print(f"kernel matrix G: {structure.G.shape[0]} x {structure.G.shape[1]}")
    print(f"general family dimension: {structure.general_dim}")
    print(f"symmetric family dimension: {structure.symmetric_dim}")
    for label, basis in (("general", structure.general_basis), ("symmetric", structure.symmetric_basis)):
        for k, B in enumerate(basis):
            pretty = np.array2string(B, precision=6, suppress_small=True)
            print(f"{label} basis [{k}]:\n{pretty}")
    if args.out:
        _write_json(structure.to_dict(), Path(args.out))
    return 0


def cmd_certify(args) -> int:
    system = _load_source(args)
    cert_path = Path(args.certificate)
    if not cert_path.exists():
        raise _InputError(f"certificate file not found: {cert_path}")
    try:
        certificate = pipeline_mod.load_certificate(cert_path)
    except pipeline_mod.PipelineError as exc:
        raise _InputError(str(exc)) from exc

    report = certify_mod.verify(system, certificate, samples=args.samples, epsilon=args.epsilon)
    for name, ok in report.checks.items():
        print(f"check {name}: {'pass' if ok else 'FAIL'}")
    for name, slack in report.slacks.items():
        print(f"slack {name}: {slack:.6e}")
    print(f"verification: {'pass' if report.passed else 'FAIL'}")
    if args.out:
        _write_json(report.to_dict(), Path(args.out))
    return 0 if report.passed else 1


def cmd_simulate(args) -> int:
    system = _load_source(args)
    certificate = None
    if args.certificate:
        cert_path = Path(args.certificate)
        if not cert_path.exists():
            raise _InputError(f"certificate file not found: {cert_path}")
        try:
            certificate = pipeline_mod.load_certificate(cert_path)
        except pipeline_mod.PipelineError as exc:
            raise _InputError(str(exc)) from exc
    try:
        options = sim_mod.SimOptions(horizon=args.horizon, trials=args.trials, rng_seed=args.seed)
    except sim_mod.SimError as exc:
        raise _InputError(str(exc)) from exc

    try:
        result = sim_mod.empirical_ultimate_bound(system, options, certificate=certificate)
    except sim_mod.SimulationDivergence as exc:
        print(f"divergence: {exc}")
        return 3
    except sim_mod.SimError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3

    print(f"empirical ultimate bound: {result.bound:.6g} "
          f"({result.trials} trials, tail from t = {result.tail_start:g})")
    status = 0
    if certificate is not None:
        print(f"certified ultimate bound: {certificate.ultimate_bound:.6g}")
        print(f"trials that entered the ellipsoid: {result.entered_count}")
        print(f"invariance violations: {len(result.violations)}")
        if result.violations or result.bound > certificate.ultimate_bound:
            print("simulation falsifies the certificate")
            status = 1
    if args.out:
        _write_json(result.to_dict(), Path(args.out))
    return status


_DISPATCH = {
    "analyze": cmd_analyze,
    "lossless": cmd_lossless,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _DISPATCH[args.command](args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except pipeline_mod.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
