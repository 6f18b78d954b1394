"""Command-line entry point: ``paramodel <subcommand> ...``.

Exit codes: 0 on success, 1 when a verification check fails, 2 on usage,
configuration or input errors.
"""
from __future__ import annotations

import argparse
import csv
import sys
from fractions import Fraction
from typing import List, Optional

from .grading import GradingError, ScalingVector
from .harness import ConfigError, RunConfig, default_config_path, pam_suite, run_verification
from .lpanalysis import GridSpec, LPError, build_partition, constant_field, read_field, write_field
from .models import ModelError, ModelledField, load_model, make_synthetic_field, save_model
from .norms import NormError, PairSampler, besov_norm, bgamma_norm, dgamma_norm, holder_norm
from .paraproducts import ParaproductError, ParaproductTermLog, bony_para, structure_para

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
INPUT_ERRORS = (ConfigError, GradingError, LPError, ModelError, NormError, ParaproductError, OSError, ValueError,
                KeyError)


class _Parser(argparse.ArgumentParser):
    """Argument parser that prints usage and exits with code 2 on bad flags."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid_args(p: argparse.ArgumentParser):
    p.add_argument("--N", type=int, nargs="+", default=[64], help="grid size per axis (one value is broadcast)")
    p.add_argument("--s", type=int, nargs="+", default=None, help="scaling vector (default: all ones)")


def _spec_from(args) -> GridSpec:
    s = args.s or [1] * len(args.N)
    N = args.N * len(s) if len(args.N) == 1 else args.N
    return GridSpec(tuple(N), ScalingVector(tuple(s)))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="paramodel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("partition", help="write the sampled dyadic multipliers phi_j to CSV")
    _grid_args(p)
    p.add_argument("--out", default="-", help="CSV path or '-' for stdout")

    p = sub.add_parser("norm", help="evaluate one norm and print its value")
    p.add_argument("--kind", required=True, choices=["besov", "holder", "dgamma", "bgamma"])
    p.add_argument("--gamma", required=True, type=Fraction)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--field", help="field file (for dgamma/bgamma: one channel per model symbol)")
    src.add_argument("--constant", type=float, help="use the constant field with this value")
    _grid_args(p)
    p.add_argument("--model", help="model description JSON (dgamma/bgamma)")
    p.add_argument("--seed", type=int, default=0, help="pair-sampler / residual-point seed")
    p.add_argument("--json", action="store_true", help="print the full report as JSON")

    p = sub.add_parser("paraproduct", help="compute a paraproduct and write it as a field file")
    p.add_argument("--kind", required=True, choices=["bony", "structure"])
    p.add_argument("--f", help="low-frequency field file (bony)")
    p.add_argument("--g", help="high-frequency field file (bony)")
    p.add_argument("--field", help="modelled field file (structure)")
    p.add_argument("--model", help="model description JSON (structure)")
    p.add_argument("--alpha", type=Fraction, default=Fraction(0), help="target sector (structure)")
    p.add_argument("--out", required=True, help="output field file")
    p.add_argument("--log", help="optional CSV of per-scale term sizes and spectral leakage")

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--config", help="run configuration JSON (default: shipped defaults)")
    p.add_argument("--report", help="report JSON path (overrides the config)")
    p.add_argument("--curves", help="directory for CSV curves (overrides the config)")
    p.add_argument("--workers", type=int, help="concurrent checks (overrides the config)")
    p.add_argument("--checks", nargs="+", help="run only these check ids")

    p = sub.add_parser("field", help="generate fields")
    p.add_argument("--make", required=True, choices=["synthetic", "pam"])
    _grid_args(p)
    p.add_argument("--alpha", type=float, default=0.5, help="target regularity (synthetic)")
    p.add_argument("--alpha-I", type=Fraction, default=Fraction(3, 4), help="noise regularity (pam)")
    p.add_argument("--gamma", type=Fraction, default=Fraction(6, 5), help="model gamma (pam)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, help="mode cutoff (default: N/4 of the smallest axis)")
    p.add_argument("--out", required=True, help="field file")
    p.add_argument("--model-out", help="model description JSON (pam)")
    return parser


def _cmd_partition(args) -> int:
    spec = _spec_from(args)
    P = build_partition(spec)
    mesh = spec.freq_mesh()
    header = [f"xi_{i}" for i in range(spec.d)] + [f"phi_{j}" for j in P.scales]
    cols = [m.ravel() for m in mesh] + [P.block(j).ravel() for j in P.scales]
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([int(v) for v in row[: spec.d]] + [repr(float(v)) for v in row[spec.d :]])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _cmd_norm(args) -> int:
    if args.kind in ("dgamma", "bgamma"):
        if not args.model or not args.field:
            raise ConfigError(f"--kind {args.kind} needs --model and --field")
        model = load_model(args.model)
        F = ModelledField(model.space, read_field(args.field))
        if args.kind == "dgamma":
            rep = dgamma_norm(F, model, args.gamma, sampler=PairSampler(seed=args.seed))
        else:
            rep = bgamma_norm(F, model, args.gamma, P=build_partition(F.spec), seed=args.seed)
    else:
        f = constant_field(_spec_from(args), args.constant) if args.constant is not None else read_field(args.field)
        if args.kind == "besov":
            rep = besov_norm(f, float(args.gamma), build_partition(f.spec))
        else:
            rep = holder_norm(f, args.gamma, PairSampler(seed=args.seed))
    print(rep.dumps() if args.json else f"{rep.value:.17g}")
    return EXIT_OK


def _cmd_paraproduct(args) -> int:
    log = ParaproductTermLog() if args.log else None
    if args.kind == "bony":
        if not args.f or not args.g:
            raise ConfigError("--kind bony needs --f and --g")
        f, g = read_field(args.f), read_field(args.g)
        out = bony_para(f, g, build_partition(f.spec), log)
    else:
        if not args.model or not args.field:
            raise ConfigError("--kind structure needs --model and --field")
        model = load_model(args.model)
        F = ModelledField(model.space, read_field(args.field))
        out = structure_para(F, model, args.alpha, build_partition(F.spec), log)
    write_field(args.out, out)
    if log is not None:
        log.to_csv(args.log)
    return EXIT_OK


def _cmd_verify(args) -> int:
    config = RunConfig.load(args.config or default_config_path())
    data = config.to_json()
    for key, value in (("report_path", args.report), ("curves_dir", args.curves), ("workers", args.workers)):
        if value is not None:
            data[key] = value
    if args.checks:
        data["checks"] = args.checks
    config = RunConfig.from_json(data)
    report = run_verification(config)
    for line in report.summary_lines():
        print(line)
    print(f"overall: {report.status}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_field(args) -> int:
    spec = _spec_from(args)
    cutoff = args.cutoff or min(spec.N) // 4
    if args.make == "synthetic":
        write_field(args.out, make_synthetic_field(spec, args.alpha, args.seed, cutoff))
        return EXIT_OK
    if not args.model_out:
        raise ConfigError("--make pam needs --model-out")
    model, fields = pam_suite(spec, args.alpha_I, args.gamma, 1, args.seed, cutoff)
    save_model(model, args.model_out)
    write_field(args.out, fields[0].field)
    return EXIT_OK


COMMANDS = {
    "partition": _cmd_partition,
    "norm": _cmd_norm,
    "paraproduct": _cmd_paraproduct,
    "verify": _cmd_verify,
    "field": _cmd_field,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        print(f"paramodel {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def cli(argv: Optional[List[str]] = None) -> int:
    """Run the CLI with ``argv`` and return the exit code instead of exiting."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
