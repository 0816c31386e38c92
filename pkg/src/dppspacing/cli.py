"""Command line entry point: ``dppspacing {selfcheck,run,alpha,intensity}``.

Exit codes: 0 all checks passed, 2 a check failed, 1 an error occurred.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import DPPError
from .experiment import ExperimentConfig, build_kernel, run_montecarlo, run_selfcheck
from .fredholm import intensity_table, richardson_limit

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _kernel_spec(args) -> dict:
    spec = {"name": args.kernel}
    if args.a is not None:
        spec["a"] = args.a
    if args.path is not None:
        spec["path"] = args.path
    return spec


def _add_kernel_args(p):
    p.add_argument("--kernel", required=True,
                   help="sine, gaussian, scaled_indicator (with --a) or table (with --path)")
    p.add_argument("--a", type=float, help="height of scaled_indicator")
    p.add_argument("--path", help="two-column CSV for table densities")


def _print_checks(results) -> bool:
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return all(r.passed for r in results)


def cmd_selfcheck(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    return EXIT_OK if _print_checks(run_selfcheck(cfg)) else EXIT_FAIL


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if not args.skip_selfcheck and not _print_checks(run_selfcheck(cfg)):
        print("self-check failed; use --skip-selfcheck to run anyway", file=sys.stderr)
        return EXIT_FAIL
    summary = run_montecarlo(cfg, workers=args.workers, output_dir=args.output_dir)
    print(f"alpha = {summary['kernel']['alpha']:.12g}; {summary['trials_ok']} trials "
          f"in {summary['runtime_seconds']:.1f} s")
    if summary["insufficient_for_gof"]:
        print("insufficient for GoF: fewer than 1000 trials")
        return EXIT_OK
    for e in summary["per_s"]:
        print(f"s={e['s']:g}  mean={e['mean']:.4f} (alpha s^3={e['expected_mean']:.4f}, "
              f"se={e['se']:.4f})  var/mean={e['var_mean_ratio']:.3f}  "
              f"mean n2={e['mean_n2']:.2e}")
    print(f"eta survival sup distance = {summary['eta_survival']['sup_distance']:.4f}")
    ok = True
    for name, c in summary["acceptance"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}")
        ok &= bool(c["passed"])
    return EXIT_OK if ok else EXIT_FAIL


def cmd_alpha(args) -> int:
    print(format(build_kernel(_kernel_spec(args)).alpha, ".17g"))
    return EXIT_OK


def cmd_intensity(args) -> int:
    kernel = build_kernel(_kernel_spec(args))
    s_values = args.stilde or [0.2, 0.1, 0.05, 0.025]
    rows = intensity_table(kernel, s_values)
    print("s_tilde  rho1_fredholm  rho1_series  ratio_to_alpha_s3  rel_diff")
    for r in rows:
        print(f"{r.s_tilde:<8g} {r.fredholm:.12e} {r.series:.12e} {r.ratio:.10f} {r.rel_diff:.2e}")
    if len(rows) >= 2:
        print(f"extrapolated ratio: "
              f"{richardson_limit([r.s_tilde for r in rows], [r.ratio for r in rows]):.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dppspacing", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selfcheck", help="run the analytic self-checks")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("run", help="run a Monte Carlo campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--skip-selfcheck", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("alpha", help="print the limit constant alpha")
    _add_kernel_args(p)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("intensity", help="ratio table rho_1(0; s)/(alpha s^3)")
    _add_kernel_args(p)
    p.add_argument("--stilde", type=float, nargs="+")
    p.set_defaults(func=cmd_intensity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DPPError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
