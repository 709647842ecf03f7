"""Command-line entry point.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import NumericalFailure
from .harness import (
    _FIELDS,
    MISSING,
    ConfigError,
    RunConfig,
    load_config,
    make_config,
    run_single,
    run_sweep,
    run_weak_singularity,
    run_weight_diagnostics,
    write_weight_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SWEEP_KINDS = {"spatial": "spatial", "temporal": "temporal", "both": "simultaneous"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value configuration file")
    group = p.add_argument_group("run configuration (overrides the file)")
    for name in _FIELDS:
        flag = "--" + name.replace("_", "-")
        aliases = [flag] if flag == "--" + name else [flag, "--" + name]
        group.add_argument(*aliases, dest=f"cfg_{name}", metavar=name.upper(), default=None)


def _config_from(args) -> RunConfig:
    overrides = {
        name: getattr(args, f"cfg_{name}")
        for name in _FIELDS
        if getattr(args, f"cfg_{name}") is not None
    }
    if args.config:
        try:
            return load_config(args.config, overrides)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    return make_config(overrides)


def _num(x) -> str:
    return MISSING if x is None else f"{x:.3e}"


def _ord(x) -> str:
    return MISSING if x is None else f"{x:.2f}"


def _print_rows(report, orders_key=None):
    print(f"{'N':>6} {'M':>7} {'E_u':>11} {'E_v':>11} {'Eu_max':>11} {'Ev_max':>11} {'order':>6}")
    orders = report.orders.get(orders_key, [None] * len(report.rows)) if orders_key else [None] * len(report.rows)
    for r, o in zip(report.rows, orders):
        c = r.config
        print(f"{c.N:>6} {c.M:>7} {_num(r.E_u):>11} {_num(r.E_v):>11} "
              f"{_num(r.Eu_max):>11} {_num(r.Ev_max):>11} {_ord(o):>6}")


def cmd_solve(args):
    cfg = _config_from(args)
    report, result = run_single(cfg)
    _print_rows(report)
    print(f"startup energy bound: {'ok' if result.startup_ok else 'VIOLATED'}; "
          f"coercivity: {'ok' if result.coercive_ok else 'VIOLATED'}; "
          f"max |F(sigma)| = {result.max_sigma_residual:.1e}")


def cmd_converge(args):
    cfg = _config_from(args)
    kind = SWEEP_KINDS[args.kind]
    report = run_sweep(kind, cfg, args.levels)
    _print_rows(report, "E_v" if kind == "simultaneous" else "E_u")
    if report.budget_ok is False:
        print("warning: temporal error budget not met; orders may be polluted by tau^2", file=sys.stderr)


def cmd_singular(args):
    cfg = _config_from(args)
    report = run_weak_singularity(cfg, args.levels)
    _print_rows(report, "Eu_max")
    print("Ev_max orders: " + " ".join(_ord(o) for o in report.orders["Ev_max"]))
    for M, peaks in report.peak_fraction.items():
        print(f"M={M}: backward-difference peak at {peaks['bdiff_v_l2']:.2%} of the steps")


def cmd_weights(args):
    rows = run_weight_diagnostics(args.alpha, args.taus, args.T, output=args.output)
    print(f"{'tau':>10} {'M':>6} {'ratio_max':>11} {'cum/tau':>11} {'diff_sum':>10} {'tail_sum':>10}")
    for r in rows:
        print(f"{r['tau']:>10.3e} {r['M']:>6} {r['ratio_max']:>11.4e} {r['cumulative_over_tau']:>11.4e} "
              f"{r['bounded_diff_sum']:>10.4f} {r['bounded_tail_sum']:>10.4f}")
    if args.table:
        tau = args.taus[-1]
        M = int(round(args.T / tau))
        path = write_weight_table(args.alpha, args.T / M, M, args.table)
        print(f"weights written to {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vofwave", description="Energy-based DG solver for variable-order fractional wave equations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="single run")
    _add_config_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="convergence sweep")
    p.add_argument("--kind", choices=sorted(SWEEP_KINDS), required=True)
    p.add_argument("--levels", type=_int_list, required=True,
                   help="N values (spatial, both) or M values (temporal)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("singular", help="weakly singular temporal sweep")
    p.add_argument("--levels", type=_int_list, required=True, help="M values")
    _add_config_flags(p)
    p.set_defaults(func=cmd_singular, cfg_defaults={"solution": "singular1d"})

    p = sub.add_parser("weights", help="memory-weight variation diagnostics")
    p.add_argument("--alpha", default="exp_decay")
    p.add_argument("--taus", type=_float_list, default=[0.02, 0.01, 0.005])
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--output")
    p.add_argument("--table", help="also write the weight table of the finest tau to this CSV")
    p.set_defaults(func=cmd_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, value in getattr(args, "cfg_defaults", {}).items():
        if getattr(args, f"cfg_{key}", None) is None and not args.config:
            setattr(args, f"cfg_{key}", value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
