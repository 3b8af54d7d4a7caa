"""Command-line entry point.

Usage examples:
  hyperbat trace --g 2 --gamma 1 --omega-drive 1 --grid 0:5:101
  hyperbat trace --g 2 --omega-drive 1 --oracle on --format json --out trace.json
  hyperbat sweep --quantity tE --grid 0.01:100:81:log
  hyperbat verify --jobs 4 --out verify.csv
  hyperbat figure --preset fig2b --out figures/

Exit codes: 0 success, 1 usage or configuration error, 2 verification
FAIL, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .commands import cmd_sweep, cmd_trace, cmd_verify, default_jobs, write_figure
from .config import GridSpec, Mode, RunConfig
from .errors import (ConfigInvalid, IntegrationFailure, InvalidCutoff, InvalidParams, InvalidTime, NoCharging,
                     TruncationInsufficient, UnphysicalMoments)
from .output import render
from .params import BatteryParams, PulseSpec

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 means FAIL here, so use 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text):
    try:
        return GridSpec.parse(text)
    except ConfigInvalid as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its fields")
    common.add_argument("--g", type=float, help="charger-holder coupling")
    common.add_argument("--gamma", type=float, help="charger decay rate")
    common.add_argument("--omega-b", type=float, help="level spacing of both modes")
    common.add_argument("--omega-drive", type=float, help="pulse strength Omega (dimensionless)")
    common.add_argument("--grid", type=_grid, help="start:stop:count[:log]; times in 1/gamma or couplings g/gamma")
    common.add_argument("--oracle", type=_on_off, help="on|off: also run the Fock-space oracle")
    common.add_argument("--n-max", type=int, help="Fock cutoff on n_a + n_b (default: certified)")
    common.add_argument("--tol", type=float, help="oracle per-step trace-drift bound")
    common.add_argument("--out", help="output file (figure: directory); default stdout")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--jobs", type=int, help="parallel workers (default $HYPERBAT_JOBS or 1)")
    common.add_argument("--pulse", choices=("delta", "gaussian", "rectangular"), help="pulse shape")
    common.add_argument("--tau", type=float, help="finite pulse width")

    parser = _Parser(prog="hyperbat", description="Pulsed quadratic quantum battery: analytics and oracle.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("trace", parents=[common], help="energy, ergotropy, D and P against time")
    sw = sub.add_parser("sweep", parents=[common], help="optimal time or energy against g/gamma")
    sw.add_argument("--quantity", choices=("tE", "Emax"), default="tE")
    ver = sub.add_parser("verify", parents=[common], help="oracle-vs-analytic certification grid")
    ver.add_argument("--g-values", type=_float_list, help="comma-separated couplings (default g/gamma grid)")
    ver.add_argument("--omega-values", type=_float_list, help="comma-separated pulse strengths")
    fig = sub.add_parser("figure", parents=[common], help="data and plot script for a figure panel")
    fig.add_argument("--preset", choices=("fig2a", "fig2b", "fig2c"), required=True)
    return parser


def config_from_args(args) -> RunConfig:
    base = RunConfig.load(args.config) if args.config else RunConfig()
    p = base.params
    try:
        params = BatteryParams(
            omega_b=p.omega_b if args.omega_b is None else args.omega_b,
            g=p.g if args.g is None else args.g,
            gamma=p.gamma if args.gamma is None else args.gamma,
            Omega=p.Omega if args.omega_drive is None else args.omega_drive,
        )
        pulse = base.pulse
        if args.pulse == "delta":
            pulse = PulseSpec.delta()
        elif args.pulse is not None or args.tau is not None:
            shape = args.pulse or (pulse.shape.value if pulse.shape else "gaussian")
            tau = args.tau if args.tau is not None else pulse.tau
            pulse = PulseSpec.finite(tau, shape)
    except (InvalidParams, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from None
    if args.command == "trace":
        mode = Mode.TRACE
    elif args.command == "sweep":
        mode = Mode.SWEEP_TE if args.quantity == "tE" else Mode.SWEEP_EMAX
    elif args.command == "verify":
        mode = Mode.VERIFY
    else:
        mode = Mode(args.preset)
    oracle = args.oracle
    if oracle is None:
        # the certification grid is an oracle run unless asked otherwise
        oracle = True if (mode is Mode.VERIFY and not args.config) else base.oracle
    changes = dict(params=params, pulse=pulse, mode=mode, oracle=oracle)
    for name in ("grid", "n_max", "tol", "out", "format", "jobs"):
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    if args.jobs is None and not args.config:
        changes["jobs"] = default_jobs()
    if mode is Mode.VERIFY:
        if args.g_values is not None:
            changes["g_values"] = args.g_values
        elif args.g is not None:
            changes["g_values"] = (args.g,)
        if args.omega_values is not None:
            changes["omega_values"] = args.omega_values
        elif args.omega_drive is not None:
            changes["omega_values"] = (args.omega_drive,)
    return base.with_(**changes)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def run(config: RunConfig) -> int:
    if config.mode is Mode.TRACE:
        _emit(render(cmd_trace(config), config, config.format), config.out)
        return EXIT_OK
    if config.mode in (Mode.SWEEP_TE, Mode.SWEEP_EMAX):
        _emit(render(cmd_sweep(config), config, config.format), config.out)
        return EXIT_OK
    if config.mode is Mode.VERIFY:
        report = cmd_verify(config)
        _emit(render(report.table(), config, config.format), config.out)
        status = "PASS" if report.passed else "FAIL"
        print(f"verify: {status} ({len(report.cases)} cases, max oracle relative error "
              f"{report.max_oracle_error:.3e})", file=sys.stderr)
        return EXIT_OK if report.passed else EXIT_FAIL
    for path in write_figure(config, config.out or "hyperbat_figures"):
        print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        return run(config)
    except (ConfigInvalid, InvalidParams, InvalidTime, InvalidCutoff, NoCharging) as exc:
        print(f"hyperbat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"hyperbat: file error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationFailure, UnphysicalMoments, TruncationInsufficient) as exc:
        print(f"hyperbat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
